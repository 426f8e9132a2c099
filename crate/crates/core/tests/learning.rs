use incentive_core::learn::{self, load_checkpoint, save_checkpoint, train, train_from, TrainConfig};
use incentive_core::market::{generate_city, CityModel, DayPlan};
use incentive_core::mdp::{self, ReplayBuffer, RewardMode};
use incentive_core::pipeline::build_buffer;
use incentive_core::tiles::CodingConfig;
use incentive_core::time::DayKind;

fn small_buffer(mode: RewardMode) -> ReplayBuffer {
    let city = CityModel::standard();
    let trips = generate_city(8, &city, &DayPlan::single(DayKind::Weekend)).unwrap();
    let coding = CodingConfig { hash_table_size: 1 << 12, embedding_dim: 4, ..CodingConfig::standard(city.bbox) };
    build_buffer(&trips, &coding, 0.9, mode).unwrap()
}

fn small_config(steps: usize) -> TrainConfig {
    TrainConfig { steps, batch_size: 32, hidden: [16, 8], target_update_every: 7, seed: 3, ..TrainConfig::default() }
}

#[test]
fn fixed_seed_gives_identical_checkpoints() {
    let cfg = small_config(15);
    let (mut a, mut b) = (small_buffer(RewardMode::Discounted), small_buffer(RewardMode::Discounted));
    let ra = train(&mut a, &cfg).unwrap();
    let rb = train(&mut b, &cfg).unwrap();
    assert_eq!(ra.checkpoint, rb.checkpoint);
    assert_eq!(ra.metrics, rb.metrics);
    assert_eq!(a, b);
}

#[test]
fn resuming_from_disk_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut whole = small_buffer(RewardMode::Discounted);
    let straight = train(&mut whole, &small_config(20)).unwrap();

    let mut part = small_buffer(RewardMode::Discounted);
    let first = train(&mut part, &small_config(9)).unwrap();
    save_checkpoint(&dir.path().join("ck.json"), &first.checkpoint).unwrap();
    mdp::save_buffer(&dir.path().join("buf.bin"), &part).unwrap();

    let mut reloaded = mdp::load_buffer(&dir.path().join("buf.bin")).unwrap();
    let ck = load_checkpoint(&dir.path().join("ck.json")).unwrap();
    let rest = train_from(&mut reloaded, &small_config(20), Some(ck)).unwrap();
    assert_eq!(rest.checkpoint.nets, straight.checkpoint.nets);
    assert_eq!(rest.checkpoint.step, 20);
    assert_eq!(&straight.metrics[9..], &rest.metrics[..]);
    assert_eq!(reloaded, whole);
}

#[test]
fn relabels_stay_within_the_batch_budget() {
    let mut buf = small_buffer(RewardMode::Discounted);
    let originals = buf.original_len();
    let out = train(&mut buf, &small_config(12)).unwrap();
    for m in &out.metrics {
        assert!(m.batch_spend <= m.batch_budget, "{m:?}");
        assert!(m.q_loss.is_finite() && m.v_loss.is_finite());
    }
    assert_eq!(buf.len(), originals + 12 * 32);
}

#[test]
fn penalty_override_changes_relabel_rewards() {
    let cfg = TrainConfig { alpha: Some(0.5), ..small_config(3) };
    let mut buf = small_buffer(RewardMode::Discounted);
    let originals = buf.original_len();
    train(&mut buf, &cfg).unwrap();
    for t in &buf.transitions()[originals..] {
        let expected = t.cache.discounted[t.a.index()] - 0.5 * t.a.discount() * t.cache.fare;
        assert_eq!(t.r, expected);
    }
}

#[test]
fn metrics_csv_has_one_row_per_step() {
    let mut buf = small_buffer(RewardMode::Discounted);
    let out = train(&mut buf, &small_config(4)).unwrap();
    let mut bytes = Vec::new();
    learn::write_metrics_csv(&mut bytes, &out.metrics).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,q_loss,v_loss,batch_spend,batch_budget");
    assert_eq!(lines.len(), 5);
}

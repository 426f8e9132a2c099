//! Offline training of the Q and V networks from a replay buffer.
//!
//! Each step samples a mini-batch, regresses Q on `r + gamma (1 - d) V'(s')`
//! and V on `Q'(s, argmax_a Q(s, a))`, re-solves the batch as a budgeted
//! assignment, appends the relabeled transitions, and periodically copies the
//! online networks into the targets.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, CHECKPOINT_FORMAT};

use crate::action::{Action, ActionSet, MENU, NUM_ACTIONS};
use crate::alloc::{self, cost_row, value_row, AllocationProblem, LagrangianConfig, ValueInputs, ValueVariant};
use crate::geo::GeoError;
use crate::mdp::{ReplayBuffer, RewardMode, Transition};
use crate::model::{Activations, Featurizer, Grads, Head, ModelError, ModelShape, ValueModel, DEFAULT_HIDDEN};
use crate::state::{NormStats, SpatioTemporalState};
use crate::tiles::{CodingConfig, TileCoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("training diverged at step {step}: q_loss {q_loss}, v_loss {v_loss}")]
    Diverged { step: usize, q_loss: f64, v_loss: f64, metrics: Vec<StepMetrics> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Alloc(#[from] alloc::AllocError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Targets are synced when `step % target_update_every == 0`.
    pub target_update_every: usize,
    pub steps: usize,
    /// Weight of the fare against the value transition in the relabel matrix.
    pub beta: f64,
    /// Relabel budget per batch as a fraction of the batch fare sum.
    pub budget_fraction: f64,
    /// When set, rewards are penalized by `alpha * (1 - a) * fare` regardless of the buffer's mode.
    pub alpha: Option<f64>,
    pub seed: u64,
    pub hidden: [usize; 2],
    pub action_menu: [f64; NUM_ACTIONS],
    pub value_variant: ValueVariant,
    /// Either loss above this halts training.
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            batch_size: 256,
            learning_rate: 1e-3,
            target_update_every: 200,
            steps: 4000,
            beta: 0.5,
            budget_fraction: 0.045,
            alpha: None,
            seed: 17,
            hidden: DEFAULT_HIDDEN,
            action_menu: MENU,
            value_variant: ValueVariant::Verbatim,
            divergence_threshold: 1e8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.budget_fraction >= 0.0 && self.budget_fraction.is_finite()) {
            return bad(format!("budget_fraction must be non-negative, got {}", self.budget_fraction));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return bad(format!("alpha must be non-negative, got {a}"));
            }
        }
        if self.batch_size == 0 || self.target_update_every == 0 {
            return bad("batch_size and target_update_every must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty".into());
        }
        if self.action_menu != MENU {
            return bad(format!("action_menu must be {MENU:?}"));
        }
        Ok(())
    }

    /// Reward mode used for relabeling, given the buffer's own mode.
    pub fn reward_mode(&self, buffer_mode: RewardMode) -> RewardMode {
        match self.alpha {
            Some(alpha) => RewardMode::Penalized { alpha },
            None => buffer_mode,
        }
    }
}

/// Online and target copies of both networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub q: ValueModel,
    pub q_target: ValueModel,
    pub v: ValueModel,
    pub v_target: ValueModel,
}

impl Networks {
    pub fn init(coding: &CodingConfig, hidden: [usize; 2], seed: u64) -> Networks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape =
            |head| ModelShape { head, table_rows: coding.hash_table_size, embedding_dim: coding.embedding_dim, hidden };
        let q = ValueModel::init(shape(Head::Q), &mut rng);
        let v = ValueModel::init(shape(Head::V), &mut rng);
        Networks { q_target: q.clone(), v_target: v.clone(), q, v }
    }

    pub fn sync_targets(&mut self) {
        self.q_target.clone_from(&self.q);
        self.v_target.clone_from(&self.v);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub step: usize,
    pub coding: CodingConfig,
    pub norm: NormStats,
    pub reward_mode: RewardMode,
    pub nets: Networks,
}

impl Checkpoint {
    pub fn featurizer(&self) -> Result<Featurizer, GeoError> {
        Ok(Featurizer::new(TileCoder::new(self.coding.clone())?, self.norm))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub q_loss: f64,
    pub v_loss: f64,
    pub batch_spend: f64,
    pub batch_budget: f64,
}

pub fn write_metrics_csv<W: std::io::Write>(out: W, metrics: &[StepMetrics]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for m in metrics {
        w.serialize(m)?;
    }
    if metrics.is_empty() {
        w.write_record(["step", "q_loss", "v_loss", "batch_spend", "batch_budget"])?;
    }
    w.flush()?;
    Ok(())
}

/// Source of the observed action set of a state.
pub trait ActionSupport {
    fn observed_actions(&self, s: &SpatioTemporalState) -> ActionSet;
}

impl ActionSupport for ReplayBuffer {
    fn observed_actions(&self, s: &SpatioTemporalState) -> ActionSet {
        ReplayBuffer::observed_actions(self, s)
    }
}

/// Every state supports the same fixed set.
impl ActionSupport for ActionSet {
    fn observed_actions(&self, _: &SpatioTemporalState) -> ActionSet {
        *self
    }
}

fn forward(
    model: &ValueModel,
    feat: &Featurizer,
    s: &SpatioTemporalState,
    act: &mut Activations,
) -> Result<(), TrainError> {
    let tiles = feat.tiles(s)?;
    model.forward_into(&tiles, &feat.context(s), act)?;
    Ok(())
}

pub fn forward_q(
    model: &ValueModel,
    feat: &Featurizer,
    s: &SpatioTemporalState,
) -> Result<[f64; NUM_ACTIONS], TrainError> {
    let mut act = Activations::default();
    forward(model, feat, s, &mut act)?;
    act.out
        .as_slice()
        .try_into()
        .map_err(|_| TrainError::Model(ModelError::Shape(format!("Q head has {} outputs", act.out.len()))))
}

pub fn forward_v(model: &ValueModel, feat: &Featurizer, s: &SpatioTemporalState) -> Result<f64, TrainError> {
    let mut act = Activations::default();
    forward(model, feat, s, &mut act)?;
    Ok(act.out[0])
}

/// Highest-valued action in `set`; ties go to the lowest menu index.
pub fn masked_argmax(q: &[f64; NUM_ACTIONS], set: ActionSet) -> Option<Action> {
    let mut best: Option<Action> = None;
    for a in set.iter() {
        if best.is_none_or(|b| q[a.index()] > q[b.index()]) {
            best = Some(a);
        }
    }
    best
}

/// Argmax of Q over the actions observed at `s`; a uniform menu action when none were.
pub fn constrained_argmax<R: Rng>(
    q: &ValueModel,
    feat: &Featurizer,
    s: &SpatioTemporalState,
    support: &impl ActionSupport,
    rng: &mut R,
) -> Result<Action, TrainError> {
    let set = support.observed_actions(s);
    if set.is_empty() {
        return Ok(Action::from_index(rng.random_range(0..NUM_ACTIONS)).expect("menu index"));
    }
    let values = forward_q(q, feat, s)?;
    Ok(masked_argmax(&values, set).expect("non-empty set"))
}

/// `v_j = Q'(s_j, argmax_{a in A(s_j)} Q(s_j, a))` and `y_j = r_j + gamma (1 - d_j) V'(s_{j+1})`.
/// An empty observed set falls back to the full menu.
pub fn compute_targets(
    batch: &[Transition],
    nets: &Networks,
    feat: &Featurizer,
    gamma: f64,
    support: &impl ActionSupport,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let mut v = Vec::with_capacity(batch.len());
    let mut y = Vec::with_capacity(batch.len());
    for t in batch {
        let set = match support.observed_actions(&t.s) {
            s if s.is_empty() => ActionSet::FULL,
            s => s,
        };
        let a = masked_argmax(&forward_q(&nets.q, feat, &t.s)?, set).expect("non-empty set");
        v.push(forward_q(&nets.q_target, feat, &t.s)?[a.index()]);
        let boot = if t.done { 0.0 } else { gamma * forward_v(&nets.v_target, feat, &t.s_next)? };
        y.push(t.r + boot);
    }
    Ok((v, y))
}

/// One gradient step on the mean squared error. For a Q model only the
/// output of `actions[j]` is regressed; for V, `actions` is ignored.
/// Returns the loss before the update.
pub fn sgd_step(
    model: &mut ValueModel,
    feat: &Featurizer,
    states: &[&SpatioTemporalState],
    actions: &[Action],
    targets: &[f64],
    lr: f64,
) -> Result<f64, TrainError> {
    let n = states.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut grads = Grads::zeros(&model.shape);
    let loss = accumulate_mse(model, feat, states, actions, targets, &mut grads)?;
    if !loss.is_finite() {
        return Err(TrainError::Model(ModelError::NonFinite(format!("loss {loss} over {n} samples"))));
    }
    model.apply(&grads, lr);
    Ok(loss)
}

/// Mean squared error and its gradient, added into `grads`.
pub fn accumulate_mse(
    model: &ValueModel,
    feat: &Featurizer,
    states: &[&SpatioTemporalState],
    actions: &[Action],
    targets: &[f64],
    grads: &mut Grads,
) -> Result<f64, TrainError> {
    let n = states.len() as f64;
    let mut act = Activations::default();
    let mut d_out = vec![0.0; model.shape.outputs()];
    let mut loss = 0.0;
    for (j, s) in states.iter().enumerate() {
        let tiles = feat.tiles(s)?;
        model.forward_into(&tiles, &feat.context(s), &mut act)?;
        let k = match model.shape.head {
            Head::Q => actions[j].index(),
            Head::V => 0,
        };
        let err = act.out[k] - targets[j];
        loss += err * err / n;
        d_out.iter_mut().for_each(|d| *d = 0.0);
        d_out[k] = 2.0 * err / n;
        model.backward(&tiles, &act, &d_out, grads);
    }
    Ok(loss)
}

/// Budgeted re-assignment of a batch using the online V.
pub fn relabel_problem(
    batch: &[Transition],
    v: &ValueModel,
    feat: &Featurizer,
    cfg: &TrainConfig,
) -> Result<AllocationProblem, TrainError> {
    let mut values = Vec::with_capacity(batch.len());
    let mut costs = Vec::with_capacity(batch.len());
    let mut fares = 0.0;
    for t in batch {
        let inputs = ValueInputs {
            delta_ecr: t.cache.delta_ecr,
            cr: t.cache.cr,
            fare: t.cache.fare,
            v_s: forward_v(v, feat, &t.s)?,
            v_next: forward_v(v, feat, &t.s_next)?,
            done: t.done,
        };
        values.push(value_row(&inputs, cfg.beta, cfg.gamma, cfg.value_variant));
        costs.push(cost_row(t.cache.fare));
        fares += t.cache.fare;
    }
    Ok(AllocationProblem {
        trip_ids: batch.iter().map(|t| t.trip_id).collect(),
        values,
        costs,
        budget: cfg.budget_fraction * fares,
    })
}

pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<StepMetrics>,
}

/// Fresh networks and `cfg.steps` steps of training.
pub fn train(buffer: &mut ReplayBuffer, cfg: &TrainConfig) -> Result<TrainOutput, TrainError> {
    train_from(buffer, cfg, None)
}

/// Continues from `resume` (if any) up to `cfg.steps` total steps.
///
/// Step `t` draws its batch from a stream seeded by `(cfg.seed, t)`, so a run
/// resumed with the buffer saved alongside the checkpoint repeats the
/// uninterrupted run.
pub fn train_from(
    buffer: &mut ReplayBuffer,
    cfg: &TrainConfig,
    resume: Option<Checkpoint>,
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    if (cfg.gamma - buffer.meta.gamma).abs() > 1e-12 {
        return Err(TrainError::Config(format!(
            "config gamma {} differs from the buffer's {}",
            cfg.gamma, buffer.meta.gamma
        )));
    }
    let coding = buffer.meta.coding.clone();
    let norm = buffer.meta.norm;
    let mode = cfg.reward_mode(buffer.meta.reward_mode);
    let (mut nets, start) = match resume {
        Some(ck) => {
            if ck.coding != coding || ck.norm != norm {
                return Err(TrainError::Checkpoint("checkpoint was trained on a different buffer encoding".into()));
            }
            (ck.nets, ck.step)
        }
        None => (Networks::init(&coding, cfg.hidden, cfg.seed), 0),
    };
    let mut feat = Featurizer::new(TileCoder::new(coding.clone())?, norm);
    let checkpoint = |nets: Networks, step: usize| Checkpoint {
        config: cfg.clone(),
        step,
        coding: coding.clone(),
        norm,
        reward_mode: mode,
        nets,
    };
    if cfg.steps <= start {
        return Ok(TrainOutput { checkpoint: checkpoint(nets, start), metrics: Vec::new() });
    }
    if buffer.is_empty() {
        return Err(TrainError::EmptyBuffer);
    }
    feat.warm(buffer.transitions().iter().flat_map(|t| [&t.s, &t.s_next]))?;

    let lagrangian = LagrangianConfig::default();
    let mut metrics = Vec::with_capacity(cfg.steps - start);
    for step in start + 1..=cfg.steps {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::split_seed(cfg.seed, step as u64));
        let batch: Vec<Transition> =
            (0..cfg.batch_size).map(|_| *buffer.get(rng.random_range(0..buffer.len()))).collect();

        let (v_targets, y_targets) = compute_targets(&batch, &nets, &feat, cfg.gamma, &*buffer)?;
        let states: Vec<&SpatioTemporalState> = batch.iter().map(|t| &t.s).collect();
        let actions: Vec<Action> = batch.iter().map(|t| t.a).collect();
        let q_loss = sgd_step(&mut nets.q, &feat, &states, &actions, &y_targets, cfg.learning_rate);
        let v_loss = sgd_step(&mut nets.v, &feat, &states, &actions, &v_targets, cfg.learning_rate);
        let (q_loss, v_loss) = match (q_loss, v_loss) {
            (Ok(q), Ok(v)) if q <= cfg.divergence_threshold && v <= cfg.divergence_threshold => (q, v),
            (q, v) => {
                let q_loss = q.unwrap_or(f64::NAN);
                let v_loss = v.unwrap_or(f64::NAN);
                log::error!("diverged at step {step}: q_loss {q_loss}, v_loss {v_loss}");
                return Err(TrainError::Diverged { step, q_loss, v_loss, metrics });
            }
        };

        let problem = relabel_problem(&batch, &nets.v, &feat, cfg)?;
        let solution = alloc::solve_lagrangian(&problem, lagrangian)?;
        for (t, &a) in batch.iter().zip(&solution.choices) {
            buffer.push_relabel(t.relabeled(a, mode));
        }

        if step % cfg.target_update_every == 0 {
            nets.sync_targets();
        }
        metrics.push(StepMetrics { step, q_loss, v_loss, batch_spend: solution.spend, batch_budget: problem.budget });
        if step % 500 == 0 {
            log::info!("step {step}: q_loss {q_loss:.5}, v_loss {v_loss:.5}");
        }
    }
    Ok(TrainOutput { checkpoint: checkpoint(nets, cfg.steps), metrics })
}

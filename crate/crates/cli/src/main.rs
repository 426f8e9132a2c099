//! `stincentive`: generate a synthetic trip log, learn spatio-temporal values
//! offline, allocate a discount budget, and evaluate the resulting policies.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 a policy exceeded its budget.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use incentive_core::alloc::{self, AllocationProblem, DEFAULT_EPSILON};
use incentive_core::eval::{self, ComparisonReport, EvalOptions};
use incentive_core::learn::{self, TrainConfig};
use incentive_core::market::{self, CityModel, DayPlan, SimMode};
use incentive_core::mdp::{self, RewardMode};
use incentive_core::pipeline::{self, manifest_path, PipelineConfig, RunManifest, SolveConfig, SolveMethod};
use incentive_core::tiles::CodingConfig;
use incentive_core::time::DayKind;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_ERROR: u8 = 1;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "stincentive", version, about = "Budgeted ride discounts from offline spatio-temporal values")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Flags override values from `--config`.
#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Absolute discount budget.
    #[arg(long, global = true)]
    budget: Option<f64>,
    /// Weight of the immediate fare against the value transition.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Penalty on discount spend; implies the penalized reward.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// `eq1`: discounted reward, `eq7`: discounted reward minus `alpha * (1 - a) * fare`.
    #[arg(long, global = true, value_enum)]
    reward_mode: Option<RewardFlag>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum RewardFlag {
    Eq1,
    Eq7,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodFlag {
    Ip,
    GreedyQ,
    Historical,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SolverFlag {
    Exact,
    Lagrangian,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a trip log from a city model (`--config` is a city file).
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// `week`, or a comma list of `weekday` / `weekend`.
        #[arg(long, default_value = "week")]
        days: String,
    },
    /// Turn a trip log into a replay buffer.
    BuildMdp {
        #[arg(long)]
        trips: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train Q and V networks; writes a checkpoint manifest plus `.bin` parameters.
    Train {
        #[arg(long)]
        buffer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Continue from this checkpoint up to the configured step count.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Save the buffer, relabeled transitions included, after training.
        #[arg(long)]
        save_buffer: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Assign a discount to every trip, or solve a serialized allocation problem.
    Solve {
        #[arg(long, required_unless_present = "problem")]
        trips: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["trips", "checkpoint"])]
        problem: Option<PathBuf>,
        /// Policy CSV, or solution JSON with `--problem`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodFlag>,
        #[arg(long, value_enum, default_value = "lagrangian")]
        solver: SolverFlag,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Compare policies on the same trips.
    Eval {
        #[arg(long)]
        trips: PathBuf,
        /// `name=path` or `path`; the first one is the baseline unless `--baseline` is given.
        #[arg(long = "policy", required = true)]
        policies: Vec<String>,
        #[arg(long)]
        baseline: Option<String>,
        /// City file; the standard city when omitted.
        #[arg(long)]
        city: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        markdown: Option<PathBuf>,
        /// Per-cell CSV of V, D and supply minus demand for the last policy.
        #[arg(long)]
        cells: Option<PathBuf>,
        /// Checkpoint providing V for `--cells`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also simulate Bernoulli outcomes with this many replications.
        #[arg(long)]
        sampled: Option<usize>,
    },
    /// Render a report JSON as Markdown.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage end to end into one directory.
    Run {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
struct BudgetViolation(Vec<String>);

impl std::fmt::Display for BudgetViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "budget exceeded by: {}", self.0.join(", "))
    }
}

impl std::error::Error for BudgetViolation {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<BudgetViolation>() => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_BUDGET)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn load_config<T: DeserializeOwned + Default>(c: &Common) -> Result<T> {
    match &c.config {
        Some(p) => pipeline::read_json(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(T::default()),
    }
}

fn resolve_reward(base: RewardMode, c: &Common) -> Result<RewardMode> {
    Ok(match (c.reward_mode, c.alpha) {
        (None, None) => base,
        (Some(RewardFlag::Eq1), None) => RewardMode::Discounted,
        (Some(RewardFlag::Eq1), Some(_)) => bail!("--alpha requires --reward-mode eq7"),
        (_, Some(alpha)) => RewardMode::Penalized { alpha },
        (Some(RewardFlag::Eq7), None) => match base {
            RewardMode::Penalized { .. } => base,
            RewardMode::Discounted => bail!("--reward-mode eq7 needs --alpha or an alpha in the config"),
        },
    })
}

fn parse_days(s: &str) -> Result<DayPlan> {
    if s == "week" {
        return Ok(DayPlan::week());
    }
    s.split(',')
        .map(|d| match d.trim() {
            "weekday" => Ok(DayKind::Weekday),
            "weekend" => Ok(DayKind::Weekend),
            other => bail!("unknown day kind {other:?}"),
        })
        .collect::<Result<Vec<_>>>()
        .map(DayPlan)
}

fn run(cli: Cli) -> Result<()> {
    let c = cli.common;
    match cli.command {
        Command::Gen { out, days } => cmd_gen(&c, &out, &days),
        Command::BuildMdp { trips, out } => cmd_build(&c, &trips, &out),
        Command::Train { buffer, out, metrics, resume, save_buffer, steps } => {
            cmd_train(&c, &buffer, &out, metrics.as_deref(), resume.as_deref(), save_buffer.as_deref(), steps)
        }
        Command::Solve { trips, checkpoint, problem, out, method, solver, epsilon } => match problem {
            Some(p) => cmd_solve_problem(&c, &p, &out, solver, epsilon),
            None => cmd_solve(&c, trips.as_deref().expect("required by clap"), checkpoint.as_deref(), &out, method),
        },
        Command::Eval { trips, policies, baseline, city, out, markdown, cells, checkpoint, sampled } => {
            cmd_eval(&c, EvalArgs { trips, policies, baseline, city, out, markdown, cells, checkpoint, sampled })
        }
        Command::Report { input, out } => {
            let report: ComparisonReport = pipeline::read_json(&input)?;
            let md = report.to_markdown();
            match out {
                Some(p) => std::fs::write(&p, md).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{md}"),
            }
            Ok(())
        }
        Command::Run { out } => cmd_run(&c, &out),
    }
}

fn cmd_gen(c: &Common, out: &Path, days: &str) -> Result<()> {
    let started = Instant::now();
    let city: CityModel = match &c.config {
        Some(p) => pipeline::read_json(p).with_context(|| format!("reading city {}", p.display()))?,
        None => CityModel::standard(),
    };
    city.validate()?;
    let plan = parse_days(days)?;
    let seed = c.seed.unwrap_or(0);
    let trips = market::generate_city(seed, &city, &plan)?;
    pipeline::write_trips(out, &trips)?;
    println!("wrote {} trips over {} days to {}", trips.len(), plan.0.len(), out.display());

    let mut m = RunManifest::new("gen", &serde_json::json!({ "city": city, "days": plan }))?;
    m.seeds.insert("seed".into(), seed);
    m.inputs.extend(c.config.clone());
    m.outputs.push(out.into());
    m.finish(started, &manifest_path(out))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BuildConfig {
    gamma: f64,
    reward_mode: RewardMode,
    /// Standard coding over the standard city's bounding box when absent.
    coding: Option<CodingConfig>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig { gamma: TrainConfig::default().gamma, reward_mode: RewardMode::Discounted, coding: None }
    }
}

fn cmd_build(c: &Common, trips_path: &Path, out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut cfg: BuildConfig = load_config(c)?;
    cfg.reward_mode = resolve_reward(cfg.reward_mode, c)?;
    let coding = cfg.coding.clone().unwrap_or_else(|| CodingConfig::standard(CityModel::standard().bbox));
    let trips = pipeline::read_trips(trips_path)?;
    let buf = pipeline::build_buffer(&trips, &coding, cfg.gamma, cfg.reward_mode)?;
    mdp::save_buffer(out, &buf)?;
    println!("wrote {} transitions ({} trips skipped) to {}", buf.len(), buf.meta.skipped_trips, out.display());
    let mut m = RunManifest::new("build-mdp", &BuildConfig { coding: Some(coding), ..cfg })?;
    m.inputs.push(trips_path.into());
    m.inputs.extend(c.config.clone());
    m.outputs.push(out.into());
    m.finish(started, &manifest_path(out))?;
    Ok(())
}

fn cmd_train(
    c: &Common,
    buffer_path: &Path,
    out: &Path,
    metrics: Option<&Path>,
    resume: Option<&Path>,
    save_buffer: Option<&Path>,
    steps: Option<usize>,
) -> Result<()> {
    let started = Instant::now();
    let mut cfg: TrainConfig = load_config(c)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(b) = c.beta {
        cfg.beta = b;
    }
    if let Some(s) = steps {
        cfg.steps = s;
    }
    match (c.reward_mode, c.alpha) {
        (Some(RewardFlag::Eq1), None) => cfg.alpha = Some(0.0),
        (Some(RewardFlag::Eq1), Some(_)) => bail!("--alpha requires --reward-mode eq7"),
        (_, Some(a)) => cfg.alpha = Some(a),
        _ => {}
    }
    let mut buffer = mdp::load_buffer(buffer_path).with_context(|| format!("loading {}", buffer_path.display()))?;
    let resume_ck =
        resume.map(|p| learn::load_checkpoint(p).with_context(|| format!("loading {}", p.display()))).transpose()?;
    let output = match learn::train_from(&mut buffer, &cfg, resume_ck) {
        Ok(o) => o,
        Err(learn::TrainError::Diverged { step, q_loss, v_loss, metrics: so_far }) => {
            if let Some(p) = metrics {
                learn::write_metrics_csv(std::fs::File::create(p)?, &so_far)?;
            }
            bail!("training diverged at step {step} (q_loss {q_loss}, v_loss {v_loss})");
        }
        Err(e) => return Err(e.into()),
    };
    learn::save_checkpoint(out, &output.checkpoint)?;
    let mut outputs = vec![out.to_path_buf(), out.with_extension("bin")];
    if let Some(p) = metrics {
        learn::write_metrics_csv(std::fs::File::create(p)?, &output.metrics)?;
        outputs.push(p.into());
    }
    if let Some(p) = save_buffer {
        mdp::save_buffer(p, &buffer)?;
        outputs.push(p.into());
    }
    if let Some(last) = output.metrics.last() {
        println!("step {}: q_loss {:.6} v_loss {:.6}", last.step, last.q_loss, last.v_loss);
    }
    println!("wrote checkpoint at step {} to {}", output.checkpoint.step, out.display());
    let mut m = RunManifest::new("train", &cfg)?;
    m.seeds.insert("seed".into(), cfg.seed);
    m.inputs.push(buffer_path.into());
    m.inputs.extend(resume.map(Path::to_path_buf));
    m.inputs.extend(c.config.clone());
    m.outputs = outputs;
    m.finish(started, &manifest_path(out))?;
    Ok(())
}

fn cmd_solve(
    c: &Common,
    trips_path: &Path,
    checkpoint: Option<&Path>,
    out: &Path,
    method: Option<MethodFlag>,
) -> Result<()> {
    let started = Instant::now();
    let mut cfg: SolveConfig = load_config(c)?;
    if let Some(m) = method {
        cfg.method = match m {
            MethodFlag::Ip => SolveMethod::Ip,
            MethodFlag::GreedyQ => SolveMethod::GreedyQ,
            MethodFlag::Historical => SolveMethod::Historical,
        };
    }
    if let Some(b) = c.beta {
        cfg.beta = b;
    }
    if let Some(b) = c.budget {
        cfg.budget = Some(b);
    }
    let trips = pipeline::read_trips(trips_path)?;
    let ck = checkpoint
        .map(|p| learn::load_checkpoint(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let (policy, summary) = pipeline::solve_policy(ck.as_ref(), &trips, &cfg)?;
    let f = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    alloc::write_policy_csv(std::io::BufWriter::new(f), &policy)?;
    println!("{}", summary.one_line());
    let mut m = RunManifest::new("solve", &serde_json::json!({ "solve": cfg, "summary": summary }))?;
    m.inputs.push(trips_path.into());
    m.inputs.extend(checkpoint.map(Path::to_path_buf));
    m.outputs.push(out.into());
    m.finish(started, &manifest_path(out))?;
    Ok(())
}

fn cmd_solve_problem(c: &Common, path: &Path, out: &Path, solver: SolverFlag, epsilon: f64) -> Result<()> {
    let mut problem: AllocationProblem = pipeline::read_json(path)?;
    if let Some(b) = c.budget {
        problem.budget = b;
    }
    let sol = match solver {
        SolverFlag::Exact => alloc::solve_exact(&problem, epsilon)?,
        SolverFlag::Lagrangian => alloc::solve_lagrangian(&problem, alloc::LagrangianConfig::default())?,
    };
    pipeline::write_json(out, &sol)?;
    println!(
        "objective={:.6} spend={:.6} budget={:.6} gap={:.6}",
        sol.objective, sol.spend, problem.budget, sol.gap_bound
    );
    Ok(())
}

struct EvalArgs {
    trips: PathBuf,
    policies: Vec<String>,
    baseline: Option<String>,
    city: Option<PathBuf>,
    out: PathBuf,
    markdown: Option<PathBuf>,
    cells: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    sampled: Option<usize>,
}

fn cmd_eval(c: &Common, a: EvalArgs) -> Result<()> {
    let started = Instant::now();
    let mut opts: EvalOptions = load_config(c)?;
    if c.budget.is_some() {
        opts.budget = c.budget;
    }
    if let Some(s) = c.seed {
        opts.seed = s;
    }
    if let Some(n) = a.sampled {
        opts.mode = SimMode::Sampled;
        opts.replications = n;
    }
    let city: CityModel = match &a.city {
        Some(p) => pipeline::read_json(p)?,
        None => CityModel::standard(),
    };
    let trips = pipeline::read_trips(&a.trips)?;
    let mut policies = Vec::new();
    let mut inputs = vec![a.trips.clone()];
    for spec in &a.policies {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                (p.file_stem().and_then(|s| s.to_str()).unwrap_or(spec).to_string(), p)
            }
        };
        let f = std::fs::File::open(&path).with_context(|| format!("opening policy {}", path.display()))?;
        policies.push((name, alloc::read_policy_csv(std::io::BufReader::new(f))?));
        inputs.push(path);
    }
    if let Some(b) = &a.baseline {
        opts.baseline = policies.iter().position(|(n, _)| n == b).with_context(|| format!("no policy named {b:?}"))?;
    }
    let (report, smd) = pipeline::evaluate(&trips, &city, &policies, &opts)?;
    pipeline::write_json(&a.out, &report)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.markdown {
        std::fs::write(p, report.to_markdown())?;
        outputs.push(p.clone());
    }
    if let Some(p) = &a.cells {
        let (_, last) = policies.last().expect("at least one policy");
        let d = eval::dest_delta_ecr(&trips, &alloc::policy_actions(last, &trips)?);
        let values = match &a.checkpoint {
            Some(ck) => pipeline::state_values(&learn::load_checkpoint(ck)?, &trips)?,
            None => Default::default(),
        };
        let f = std::fs::File::create(p)?;
        eval::write_cell_csv(std::io::BufWriter::new(f), &pipeline::trip_grid(&city)?, &values, &d, &smd)?;
        outputs.push(p.clone());
    }
    for (e, d) in report.policies.iter().zip(&report.deltas) {
        println!(
            "{}: gmv {:.2} ({}) spend {:.2} short-supply D {:.3}",
            e.name,
            e.total_expected_gmv,
            d.gmv_delta_pct.map_or("n/a".into(), |x| format!("{x:+.3}%")),
            e.total_spend,
            e.short_supply_d
        );
    }
    let mut m = RunManifest::new("eval", &opts)?;
    m.seeds.insert("seed".into(), opts.seed);
    m.inputs = inputs;
    m.outputs = outputs;
    m.finish(started, &manifest_path(&a.out))?;
    check_budget(&report)
}

fn check_budget(report: &ComparisonReport) -> Result<()> {
    let over: Vec<String> = report.policies.iter().filter(|p| p.budget_violation).map(|p| p.name.clone()).collect();
    if over.is_empty() {
        Ok(())
    } else {
        Err(BudgetViolation(over).into())
    }
}

fn cmd_run(c: &Common, out: &Path) -> Result<()> {
    let started = Instant::now();
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(b) = c.budget {
        cfg.solve.budget = Some(b);
    }
    if let Some(b) = c.beta {
        cfg.train.beta = b;
        cfg.solve.beta = b;
    }
    cfg.reward_mode = resolve_reward(cfg.reward_mode, c)?;
    let result = pipeline::run_all(&cfg, out)?;
    for (e, d) in result.report.policies.iter().zip(&result.report.deltas) {
        println!(
            "{}: gmv {:.2} ({}) spend {:.2} short-supply D {:.3} (x{})",
            e.name,
            e.total_expected_gmv,
            d.gmv_delta_pct.map_or("n/a".into(), |x| format!("{x:+.3}%")),
            e.total_spend,
            e.short_supply_d,
            d.short_supply_ratio.map_or("n/a".into(), |x| format!("{x:.3}")),
        );
    }
    let seeds = pipeline::StageSeeds::derive(cfg.seed);
    let mut m = RunManifest::new("run", &cfg)?;
    m.seeds = [
        ("seed", cfg.seed),
        ("train_log", seeds.train_log),
        ("eval_log", seeds.eval_log),
        ("train", seeds.train),
        ("eval", seeds.eval),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    m.inputs.extend(c.config.clone());
    m.outputs.push(out.into());
    m.finish(started, &out.join("run.manifest.json"))?;
    check_budget(&result.report)
}

//! Stages shared by the command-line tool and the end-to-end tests:
//! generate, build the buffer, train, solve for a policy, evaluate.

use crate::action::{Action, NO_DISCOUNT};
use crate::alloc::{
    self, cost_row, repair, value_row, AllocError, AllocationProblem, LagrangianConfig, Policy, ValueInputs,
    ValueVariant,
};
use crate::eval::{self, CellSlot, ComparisonReport, EvalError, EvalOptions};
use crate::geo::{GeoError, HexGrid};
use crate::learn::{self, forward_q, forward_v, Checkpoint, StepMetrics, TrainConfig, TrainError};
use crate::market::{self, CityModel, DayPlan, MarketError, SimMode, TripRecord, TRIP_CELL_EDGE_M};
use crate::mdp::{self, trip_states, MdpError, ReplayBuffer, RewardMode};
use crate::tiles::{CodingConfig, TileCoder};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    /// Budgeted assignment over the learned values.
    Ip,
    /// Per-trip argmax of Q, then downgraded until within budget.
    GreedyQ,
    /// The actions recorded in the log.
    Historical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub method: SolveMethod,
    pub beta: f64,
    /// Absolute budget; `None` uses the historical spend of the trips being solved.
    pub budget: Option<f64>,
    pub value_variant: ValueVariant,
    pub lagrangian: LagrangianConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            method: SolveMethod::Ip,
            beta: 0.5,
            budget: None,
            value_variant: ValueVariant::Verbatim,
            lagrangian: LagrangianConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub method: SolveMethod,
    pub num_trips: usize,
    /// Trips that could not be mapped to states and were left undiscounted.
    pub unscored_trips: usize,
    pub objective: f64,
    pub spend: f64,
    pub budget: f64,
    pub gap_bound: f64,
}

impl SolveSummary {
    pub fn one_line(&self) -> String {
        format!(
            "objective={:.6} spend={:.6} budget={:.6} gap={:.6}",
            self.objective, self.spend, self.budget, self.gap_bound
        )
    }
}

/// `sum (1 - a) * fare` under the logged actions.
pub fn historical_spend(trips: &[TripRecord]) -> f64 {
    trips.iter().map(|t| t.cost(t.historical_action)).sum()
}

pub fn trip_grid(city: &CityModel) -> Result<HexGrid, GeoError> {
    HexGrid::new(city.bbox, vec![TRIP_CELL_EDGE_M])
}

/// Value and cost matrices of `trips` under a trained checkpoint. Rows are
/// only produced for trips with valid states; the returned indices map rows
/// back to `trips`.
pub fn ip_problem(
    ck: &Checkpoint,
    trips: &[TripRecord],
    beta: f64,
    budget: f64,
    variant: ValueVariant,
) -> Result<(AllocationProblem, Vec<usize>), PipelineError> {
    let feat = ck.featurizer()?;
    let gamma = ck.config.gamma;
    let mut rows = Vec::new();
    let mut problem = AllocationProblem { trip_ids: Vec::new(), values: Vec::new(), costs: Vec::new(), budget };
    for (i, (t, st)) in trips.iter().zip(trip_states(trips, feat.coder().grid())).enumerate() {
        let Ok(st) = st else { continue };
        let inputs = ValueInputs {
            delta_ecr: std::array::from_fn(|k| t.delta_ecr(Action::from_index(k).expect("menu index"))),
            cr: t.cr,
            fare: t.fare,
            v_s: forward_v(&ck.nets.v_target, &feat, &st.s)?,
            v_next: forward_v(&ck.nets.v_target, &feat, &st.s_next)?,
            done: st.done,
        };
        problem.trip_ids.push(t.trip_id);
        problem.values.push(value_row(&inputs, beta, gamma, variant));
        problem.costs.push(cost_row(t.fare));
        rows.push(i);
    }
    Ok((problem, rows))
}

fn q_problem(
    ck: &Checkpoint,
    trips: &[TripRecord],
    budget: f64,
) -> Result<(AllocationProblem, Vec<usize>), PipelineError> {
    let feat = ck.featurizer()?;
    let mut rows = Vec::new();
    let mut problem = AllocationProblem { trip_ids: Vec::new(), values: Vec::new(), costs: Vec::new(), budget };
    for (i, (t, st)) in trips.iter().zip(trip_states(trips, feat.coder().grid())).enumerate() {
        let Ok(st) = st else { continue };
        problem.trip_ids.push(t.trip_id);
        problem.values.push(forward_q(&ck.nets.q_target, &feat, &st.s)?);
        problem.costs.push(cost_row(t.fare));
        rows.push(i);
    }
    Ok((problem, rows))
}

/// Assigns an action to every trip. Trips without valid states get no discount.
pub fn solve_policy(
    ck: Option<&Checkpoint>,
    trips: &[TripRecord],
    cfg: &SolveConfig,
) -> Result<(Policy, SolveSummary), PipelineError> {
    let budget = cfg.budget.unwrap_or_else(|| historical_spend(trips));
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(AllocError::NegativeBudget(budget).into());
    }
    if !(0.0..=1.0).contains(&cfg.beta) {
        return Err(PipelineError::Config(format!("beta must lie in [0, 1], got {}", cfg.beta)));
    }
    let mut actions = vec![NO_DISCOUNT; trips.len()];
    let need_ck = || ck.ok_or_else(|| PipelineError::Config(format!("{:?} needs a checkpoint", cfg.method)));
    let (scored, objective, gap_bound) = match cfg.method {
        SolveMethod::Historical => {
            for (a, t) in actions.iter_mut().zip(trips) {
                *a = t.historical_action;
            }
            (trips.len(), 0.0, 0.0)
        }
        SolveMethod::Ip => {
            let (problem, rows) = ip_problem(need_ck()?, trips, cfg.beta, budget, cfg.value_variant)?;
            let sol = alloc::solve_lagrangian(&problem, cfg.lagrangian)?;
            for (&i, &a) in rows.iter().zip(&sol.choices) {
                actions[i] = a;
            }
            (rows.len(), sol.objective, sol.gap_bound)
        }
        SolveMethod::GreedyQ => {
            let (problem, rows) = q_problem(need_ck()?, trips, budget)?;
            let mut choices: Vec<Action> = problem
                .values
                .iter()
                .map(|q| learn::masked_argmax(q, crate::action::ActionSet::FULL).expect("full menu"))
                .collect();
            repair(&problem, &mut choices);
            let (objective, _) = problem.evaluate(&choices);
            for (&i, &a) in rows.iter().zip(&choices) {
                actions[i] = a;
            }
            (rows.len(), objective, f64::NAN)
        }
    };
    let spend = trips.iter().zip(&actions).map(|(t, &a)| t.cost(a)).sum();
    let mut policy = Policy::new();
    for (t, &a) in trips.iter().zip(&actions) {
        if policy.insert(t.trip_id, a).is_some() {
            return Err(AllocError::DuplicateTrip(t.trip_id).into());
        }
    }
    let summary = SolveSummary {
        method: cfg.method,
        num_trips: trips.len(),
        unscored_trips: trips.len() - scored,
        objective,
        spend,
        budget,
        gap_bound: if gap_bound.is_finite() { gap_bound } else { 0.0 },
    };
    Ok((policy, summary))
}

/// Mean V over the origin states of `trips`, per (cell, slot).
pub fn state_values(ck: &Checkpoint, trips: &[TripRecord]) -> Result<BTreeMap<CellSlot, f64>, PipelineError> {
    let feat = ck.featurizer()?;
    let mut acc: BTreeMap<CellSlot, (f64, f64)> = BTreeMap::new();
    for st in trip_states(trips, feat.coder().grid()).into_iter().flatten() {
        let v = forward_v(&ck.nets.v_target, &feat, &st.s)?;
        let e = acc.entry(st.s.grid_key()).or_default();
        e.0 += v;
        e.1 += 1.0;
    }
    Ok(acc.into_iter().map(|(k, (s, n))| (k, s / n)).collect())
}

/// Whole-run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    /// City file; `None` is the built-in standard city.
    pub city: Option<PathBuf>,
    pub train_days: DayPlan,
    pub eval_days: DayPlan,
    pub reward_mode: RewardMode,
    /// Tile coding; `None` is the standard coding over the city's bounding box.
    pub coding: Option<CodingConfig>,
    pub train: TrainConfig,
    pub solve: SolveConfig,
    pub eval_mode: SimMode,
    pub eval_replications: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 2024,
            city: None,
            train_days: DayPlan::week(),
            eval_days: DayPlan::week(),
            reward_mode: RewardMode::Discounted,
            coding: None,
            train: TrainConfig::default(),
            solve: SolveConfig::default(),
            eval_mode: SimMode::Expected,
            eval_replications: 20,
        }
    }
}

/// Seeds of the individual stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub train_log: u64,
    pub eval_log: u64,
    pub train: u64,
    pub eval: u64,
}

impl StageSeeds {
    pub fn derive(seed: u64) -> StageSeeds {
        StageSeeds {
            train_log: crate::split_seed(seed, 0),
            eval_log: crate::split_seed(seed, 1),
            train: crate::split_seed(seed, 2),
            eval: crate::split_seed(seed, 3),
        }
    }
}

impl PipelineConfig {
    /// Reads a config file; a relative `city` path is taken relative to the file.
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let mut cfg: PipelineConfig = read_json(path)?;
        if let (Some(city), Some(dir)) = (&cfg.city, path.parent()) {
            if city.is_relative() {
                cfg.city = Some(dir.join(city));
            }
        }
        Ok(cfg)
    }

    pub fn load_city(&self) -> Result<CityModel, PipelineError> {
        match &self.city {
            None => Ok(CityModel::standard()),
            Some(p) => read_json(p),
        }
    }

    pub fn coding_for(&self, city: &CityModel) -> CodingConfig {
        self.coding.clone().unwrap_or_else(|| CodingConfig::standard(city.bbox))
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| PipelineError::File { path: path.into(), source })?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|source| PipelineError::File { path: path.into(), source })
}

pub fn read_trips(path: &Path) -> Result<Vec<TripRecord>, PipelineError> {
    let f = std::fs::File::open(path).map_err(|source| PipelineError::File { path: path.into(), source })?;
    Ok(market::read_trips_jsonl(std::io::BufReader::new(f))?)
}

pub fn write_trips(path: &Path, trips: &[TripRecord]) -> Result<(), PipelineError> {
    let f = std::fs::File::create(path).map_err(|source| PipelineError::File { path: path.into(), source })?;
    Ok(market::write_trips_jsonl(std::io::BufWriter::new(f), trips)?)
}

pub fn build_buffer(
    trips: &[TripRecord],
    coding: &CodingConfig,
    gamma: f64,
    mode: RewardMode,
) -> Result<ReplayBuffer, PipelineError> {
    let coder = TileCoder::new(coding.clone())?;
    Ok(mdp::build_transitions(trips, &coder, gamma, mode)?)
}

/// Policies keyed by their display name, evaluated on the same trips.
pub fn evaluate(
    trips: &[TripRecord],
    city: &CityModel,
    policies: &[(String, Policy)],
    opts: &EvalOptions,
) -> Result<(ComparisonReport, BTreeMap<CellSlot, f64>), PipelineError> {
    let ids: std::collections::BTreeSet<u64> = trips.iter().map(|t| t.trip_id).collect();
    let mut named = Vec::with_capacity(policies.len());
    for (name, p) in policies {
        if p.len() != ids.len() || !p.keys().all(|k| ids.contains(k)) {
            return Err(PipelineError::Config(format!(
                "policy {name:?} covers {} trips, the evaluation set has {}",
                p.len(),
                ids.len()
            )));
        }
        named.push((name.clone(), alloc::policy_actions(p, trips)?));
    }
    let smd = eval::supply_minus_demand(trips, city, &trip_grid(city)?)?;
    Ok((eval::compare_policies(trips, &named, &smd, opts)?, smd))
}

/// Output files of one end-to-end run, relative to its directory.
pub mod files {
    pub const TRAIN_TRIPS: &str = "train_trips.jsonl";
    pub const EVAL_TRIPS: &str = "eval_trips.jsonl";
    pub const BUFFER: &str = "buffer.bin";
    pub const CHECKPOINT: &str = "checkpoint.json";
    pub const METRICS: &str = "metrics.csv";
    pub const POLICY_IP: &str = "policy_ip.csv";
    pub const POLICY_GREEDY: &str = "policy_greedy_q.csv";
    pub const POLICY_HISTORICAL: &str = "policy_historical.csv";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_MD: &str = "report.md";
    pub const CELLS: &str = "cells.csv";
    pub const SUMMARIES: &str = "solve_summaries.json";
}

pub struct RunOutput {
    pub report: ComparisonReport,
    pub summaries: Vec<SolveSummary>,
    pub metrics: Vec<StepMetrics>,
}

/// Runs every stage and writes the artifacts listed in [`files`] into `dir`.
pub fn run_all(cfg: &PipelineConfig, dir: &Path) -> Result<RunOutput, PipelineError> {
    std::fs::create_dir_all(dir)?;
    let seeds = StageSeeds::derive(cfg.seed);
    let city = cfg.load_city()?;
    let coding = cfg.coding_for(&city);

    let train_trips = market::generate_city(seeds.train_log, &city, &cfg.train_days)?;
    let eval_trips = market::generate_city(seeds.eval_log, &city, &cfg.eval_days)?;
    write_trips(&dir.join(files::TRAIN_TRIPS), &train_trips)?;
    write_trips(&dir.join(files::EVAL_TRIPS), &eval_trips)?;
    log::info!("generated {} training and {} evaluation trips", train_trips.len(), eval_trips.len());

    let mut buffer = build_buffer(&train_trips, &coding, cfg.train.gamma, cfg.reward_mode)?;
    mdp::save_buffer(&dir.join(files::BUFFER), &buffer)?;

    let train_cfg = TrainConfig { seed: seeds.train, ..cfg.train.clone() };
    let out = learn::train(&mut buffer, &train_cfg)?;
    learn::save_checkpoint(&dir.join(files::CHECKPOINT), &out.checkpoint)?;
    let metrics_file = std::fs::File::create(dir.join(files::METRICS))?;
    learn::write_metrics_csv(metrics_file, &out.metrics)?;
    let ck = out.checkpoint;

    let hist = historical_spend(&eval_trips);
    let budget = cfg.solve.budget.unwrap_or(hist);
    let mut policies = Vec::new();
    let mut summaries = Vec::new();
    for (method, name, file) in [
        (SolveMethod::Historical, "historical", files::POLICY_HISTORICAL),
        (SolveMethod::Ip, "ip", files::POLICY_IP),
        (SolveMethod::GreedyQ, "greedy-q", files::POLICY_GREEDY),
    ] {
        let solve = SolveConfig { method, budget: Some(budget), ..cfg.solve.clone() };
        let (policy, summary) = solve_policy(Some(&ck), &eval_trips, &solve)?;
        log::info!("{name}: {}", summary.one_line());
        let f = std::fs::File::create(dir.join(file))?;
        alloc::write_policy_csv(std::io::BufWriter::new(f), &policy)?;
        policies.push((name.to_string(), policy));
        summaries.push(summary);
    }
    write_json(&dir.join(files::SUMMARIES), &summaries)?;

    let opts = EvalOptions {
        budget: Some(budget),
        baseline: 0,
        mode: cfg.eval_mode,
        replications: cfg.eval_replications,
        seed: seeds.eval,
    };
    let (report, smd) = evaluate(&eval_trips, &city, &policies, &opts)?;
    write_json(&dir.join(files::REPORT_JSON), &report)?;
    std::fs::write(dir.join(files::REPORT_MD), report.to_markdown())?;

    let ip_actions = alloc::policy_actions(&policies[1].1, &eval_trips)?;
    let d = eval::dest_delta_ecr(&eval_trips, &ip_actions);
    let values = state_values(&ck, &eval_trips)?;
    let cells = std::fs::File::create(dir.join(files::CELLS))?;
    eval::write_cell_csv(std::io::BufWriter::new(cells), &trip_grid(&city)?, &values, &d, &smd)?;

    Ok(RunOutput { report, summaries, metrics: out.metrics })
}

/// Provenance record written next to a command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// SHA-256 of the effective configuration, serialized as JSON.
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Result<RunManifest, PipelineError> {
        let config = serde_json::to_value(config)?;
        let started_unix_ms =
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_millis());
        Ok(RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: crate::sha256_hex(serde_json::to_string(&config)?.as_bytes()),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_ms,
            elapsed_ms: 0,
        })
    }

    pub fn finish(mut self, started: std::time::Instant, path: &Path) -> Result<(), PipelineError> {
        self.elapsed_ms = started.elapsed().as_millis();
        write_json(path, &self)
    }
}

/// `<output>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

//! Scenario sampling, experiment sweeps and result files.
//!
//! A trial seed fixes everything about one instance: tasks come from one
//! derived stream, geometry and fading from another. Trials only depend on
//! their index (not the sweep point), so every sweep point sees the same task
//! draws. Rows are gathered in `(point, trial, method)` order regardless of
//! how many worker threads ran them.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_channel, place_scene, ChannelRealization, FadingParams, Geometry, Room, SceneConfig};
use crate::frontend::{mmse_combiner, quantization_variances, FilterKind};
use crate::latency::{check_feasibility, Allocation, ConfigError, FeasibilityReport, FronthaulForm, SystemConfig, TaskSpec};
use crate::learner::{thread_pool, DatasetConfig, LearnerError, TrainConfig, TrainedModel};
use crate::numerics::{derive_seed, SimRng};
use crate::solver::{audit, solve, AuditReport, Instance, Method, Solution, SolverError, SolverOptions};

/// Environment variable overriding the root of the results tree.
pub const RESULTS_ENV: &str = "CRAN_RESULTS_DIR";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("no feasible instance after {draws} draws")]
    Exhausted { draws: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Distribution of random instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub fading: FadingParams,
    pub room: Room,
    pub min_wall_distance: f64,
    /// Task size range in bits.
    pub task_bits: [f64; 2],
    /// Deadline range in seconds.
    pub deadline: [f64; 2],
    pub filter: FilterKind,
    /// Redraws allowed per trial before it is reported as exhausted.
    pub max_draws: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            fading: FadingParams::default(),
            room: Room::default(),
            min_wall_distance: 0.5,
            task_bits: [1e4, 2e4],
            deadline: [0.5, 1.0],
            filter: FilterKind::Hybrid,
            max_draws: 1_000_000,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system.validate()?;
        let ranges = [("task_bits", self.task_bits), ("deadline", self.deadline)];
        for (name, [lo, hi]) in ranges {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} range [{lo}, {hi}] is not positive and ordered")));
            }
        }
        if self.max_draws == 0 {
            return Err(ConfigError::Invalid("max_draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// One random draw of tasks, geometry and channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub seed: u64,
    pub system: SystemConfig,
    pub tasks: Vec<TaskSpec>,
    pub geometry: Geometry,
    pub channel: ChannelRealization,
}

impl Trial {
    pub fn instance(&self, kind: FilterKind) -> Result<Instance, SolverError> {
        Instance::from_channel(self.system.clone(), self.tasks.clone(), &self.channel, kind)
    }
}

const TASK_STREAM: u64 = 1;
const SCENE_STREAM: u64 = 2;

pub fn sample_tasks(scenario: &ScenarioConfig, seed: u64) -> Result<Vec<TaskSpec>, ConfigError> {
    let mut rng = SimRng::new(derive_seed(seed, &[TASK_STREAM]));
    let [b_lo, b_hi] = scenario.task_bits;
    let [t_lo, t_hi] = scenario.deadline;
    (0..scenario.system.devices)
        .map(|_| {
            let bits = rng.uniform(b_lo, b_hi);
            let deadline = rng.uniform(t_lo, t_hi);
            TaskSpec::new(bits, scenario.system.cycles_per_bit * bits, deadline)
        })
        .collect()
}

pub fn sample_trial(scenario: &ScenarioConfig, seed: u64) -> Result<Trial, ConfigError> {
    scenario.validate()?;
    let tasks = sample_tasks(scenario, seed)?;
    let mut rng = SimRng::new(derive_seed(seed, &[SCENE_STREAM]));
    let scene = SceneConfig {
        room: scenario.room,
        antennas: scenario.system.antennas,
        devices: scenario.system.devices,
        min_wall_distance: scenario.min_wall_distance,
    };
    let geometry = place_scene(&mut rng, &scene);
    let channel = generate_channel(&mut rng, &geometry, &scenario.fading);
    Ok(Trial {
        seed,
        system: scenario.system.clone(),
        tasks,
        geometry,
        channel,
    })
}

/// Necessary aggregate-CPU condition with zero transfer time.
fn cpu_floor_ok(tasks: &[TaskSpec], system: &SystemConfig, bits: u32) -> bool {
    let demand: f64 = tasks
        .iter()
        .map(|t| {
            let fl = crate::latency::fronthaul_latency(
                t.bits,
                system.rf_chains,
                bits,
                system.fronthaul_capacity,
                system.modulation_order,
            );
            t.cycles / (t.deadline - fl)
        })
        .sum();
    tasks.iter().all(|t| t.deadline > 0.0) && demand > 0.0 && demand <= system.cpu_budget
}

/// Feasibility screen at the optimizer's starting point `(P_max/2, midpoint ϖ)`.
pub fn screen_instance(instance: &Instance) -> FeasibilityReport {
    let cfg = &instance.config;
    let p0 = vec![cfg.max_power / 2.0; instance.devices()];
    check_feasibility(&p0, cfg.bits_midpoint(), &instance.tasks, cfg, &instance.link, FronthaulForm::PerTask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrial {
    pub trial: Trial,
    pub instance: Instance,
    /// Draws consumed, including the accepted one.
    pub draws: usize,
}

const TRIAL_STREAM: u64 = 0x7E;

pub fn trial_seed(master: u64, trial: usize, draw: usize) -> u64 {
    derive_seed(master, &[TRIAL_STREAM, trial as u64, draw as u64])
}

/// Redraws until the instance passes the starting-point feasibility screen.
pub fn sample_feasible_trial(scenario: &ScenarioConfig, master: u64, trial: usize) -> Result<SampledTrial, HarnessError> {
    scenario.validate()?;
    let bits0 = scenario.system.bits_midpoint();
    for draw in 0..scenario.max_draws {
        let seed = trial_seed(master, trial, draw);
        if !cpu_floor_ok(&sample_tasks(scenario, seed)?, &scenario.system, bits0) {
            continue;
        }
        let t = sample_trial(scenario, seed)?;
        let instance = t.instance(scenario.filter)?;
        if screen_instance(&instance).feasible {
            return Ok(SampledTrial {
                trial: t,
                instance,
                draws: draw + 1,
            });
        }
    }
    Err(HarnessError::Exhausted {
        draws: scenario.max_draws,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    Joint,
    FixedF,
    FixedVarpi,
    /// Joint optimizer behind the fully digital filter.
    Fdsf,
    Dnn,
}

impl MethodTag {
    pub const ALL: [MethodTag; 5] = [Self::Joint, Self::FixedF, Self::FixedVarpi, Self::Fdsf, Self::Dnn];

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Joint => "joint",
            Self::FixedF => "fixed-f",
            Self::FixedVarpi => "fixed-varpi",
            Self::Fdsf => "fdsf",
            Self::Dnn => "dnn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PowerVsN,
    PowerVsEta,
    Cdf,
    PerDeviceProfile,
    DnnEval,
    Timing,
}

impl ExperimentKind {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::PowerVsN => "power-vs-n",
            Self::PowerVsEta => "power-vs-eta",
            Self::Cdf => "cdf",
            Self::PerDeviceProfile => "per-device-profile",
            Self::DnnEval => "dnn-eval",
            Self::Timing => "timing",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::PowerVsN,
            Self::PowerVsEta,
            Self::Cdf,
            Self::PerDeviceProfile,
            Self::DnnEval,
            Self::Timing,
        ]
        .into_iter()
        .find(|k| k.tag() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub id: String,
    pub kind: ExperimentKind,
    /// Antenna counts for `power-vs-n`, cycles per bit for `power-vs-eta`,
    /// a single antenna count otherwise.
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub methods: Vec<MethodTag>,
    pub scenario: ScenarioConfig,
    pub solver: SolverOptions,
}

impl ExperimentPlan {
    /// Default sweep and methods for `kind`.
    pub fn new(kind: ExperimentKind, scenario: ScenarioConfig, trials: usize, master_seed: u64) -> Self {
        use MethodTag::*;
        let n = scenario.system.antennas as f64;
        let (sweep, methods) = match kind {
            ExperimentKind::PowerVsN => (vec![32.0, 64.0, 128.0, 256.0], vec![Joint, FixedF, FixedVarpi, Fdsf]),
            ExperimentKind::PowerVsEta => (vec![25.0, 50.0, 100.0], vec![Joint, FixedF, FixedVarpi, Fdsf]),
            ExperimentKind::Cdf => (vec![n], vec![Joint, FixedF, FixedVarpi, Dnn]),
            ExperimentKind::PerDeviceProfile => (vec![n], vec![Joint]),
            ExperimentKind::DnnEval | ExperimentKind::Timing => (vec![n], vec![Joint, Dnn]),
        };
        Self {
            id: kind.tag().into(),
            kind,
            sweep,
            trials,
            master_seed,
            methods,
            scenario,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(HarnessError::Plan("trials must be at least 1".into()));
        }
        if self.sweep.is_empty() || self.methods.is_empty() {
            return Err(HarnessError::Plan("sweep and methods must be non-empty".into()));
        }
        for &v in &self.sweep {
            if !(v.is_finite() && v > 0.0) {
                return Err(HarnessError::Plan(format!("sweep value {v} is not positive")));
            }
            if self.kind != ExperimentKind::PowerVsEta && v.fract() != 0.0 {
                return Err(HarnessError::Plan(format!("antenna count {v} is not an integer")));
            }
        }
        Ok(())
    }

    pub fn scenario_at(&self, value: f64) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        match self.kind {
            ExperimentKind::PowerVsEta => s.system.cycles_per_bit = value,
            _ => s.system.antennas = value as usize,
        }
        s
    }
}

/// One method on one trial. Rows with `feasible = true` passed [`audit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub point: usize,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub draws: usize,
    pub method: MethodTag,
    pub feasible: bool,
    /// `ok`, or why the row carries no usable allocation.
    pub status: String,
    pub total_power: Option<f64>,
    pub bits: Option<u32>,
    pub power: Vec<f64>,
    pub cpu: Vec<f64>,
    pub latency: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub worst_latency_excess: Option<f64>,
    /// Excluded from `rows.csv`, which must not depend on the machine.
    pub wall_time: f64,
}

/// Combiner and audit for an allocation produced outside the optimizer.
pub fn evaluate_allocation(instance: &Instance, allocation: &Allocation, tol: f64) -> Result<AuditReport, SolverError> {
    let cfg = &instance.config;
    let quant = quantization_variances(&allocation.power, &instance.link, cfg.noise_power, allocation.bits);
    let combiner = mmse_combiner(&allocation.power, &instance.link, cfg.noise_power, &quant)?;
    Ok(audit(instance, allocation, &combiner, tol))
}

pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub trial: usize,
    pub device: usize,
    pub gain: f64,
    pub bits: f64,
    pub deadline: f64,
    pub power: f64,
    pub cpu_share: f64,
    pub latency: f64,
}

/// Per-device table of a solved instance.
pub fn per_device_profile(instance: &Instance, solution: &Solution, trial: usize) -> Vec<ProfileRow> {
    let gains = instance.link.own_gains();
    let a = &solution.allocation;
    (0..instance.devices())
        .map(|k| ProfileRow {
            trial,
            device: k,
            gain: gains[k],
            bits: instance.tasks[k].bits,
            deadline: instance.tasks[k].deadline,
            power: a.power[k],
            cpu_share: a.cpu[k] / instance.config.cpu_budget,
            latency: solution.latency[k].total(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DominanceReport {
    /// Ordered pairs where the first device is weaker, larger and more urgent.
    pub pairs: usize,
    pub power_violations: usize,
    pub cpu_violations: usize,
}

impl DominanceReport {
    pub fn merge(self, other: Self) -> Self {
        Self {
            pairs: self.pairs + other.pairs,
            power_violations: self.power_violations + other.power_violations,
            cpu_violations: self.cpu_violations + other.cpu_violations,
        }
    }
}

/// Checks that a device no better off on gain, size and deadline gets no less power or CPU.
pub fn dominance_check(profile: &[ProfileRow]) -> DominanceReport {
    let mut rep = DominanceReport::default();
    for a in profile {
        for b in profile {
            if a.device == b.device {
                continue;
            }
            if a.gain <= b.gain && a.bits >= b.bits && a.deadline <= b.deadline {
                rep.pairs += 1;
                if a.power < b.power {
                    rep.power_violations += 1;
                }
                if a.cpu_share < b.cpu_share {
                    rep.cpu_violations += 1;
                }
            }
        }
    }
    rep
}

struct TrialOutput {
    rows: Vec<ResultRow>,
    profile: Vec<ProfileRow>,
}

fn blank_row(plan: &ExperimentPlan, point: usize, trial: usize, seed: u64, draws: usize, method: MethodTag, status: String) -> ResultRow {
    ResultRow {
        experiment: plan.id.clone(),
        point,
        sweep_value: plan.sweep[point],
        trial,
        seed,
        draws,
        method,
        feasible: false,
        status,
        total_power: None,
        bits: None,
        power: Vec::new(),
        cpu: Vec::new(),
        latency: Vec::new(),
        outer_iterations: 0,
        inner_iterations: 0,
        worst_latency_excess: None,
        wall_time: 0.0,
    }
}

fn fill_row(row: &mut ResultRow, allocation: &Allocation, report: &AuditReport) {
    row.feasible = report.passed();
    row.status = if row.feasible { "ok".into() } else { "audit-failed".into() };
    row.total_power = Some(allocation.total_power());
    row.bits = Some(allocation.bits);
    row.power = allocation.power.clone();
    row.cpu = allocation.cpu.clone();
    row.latency = report.latency.clone();
    row.worst_latency_excess = Some(report.worst_latency_excess);
}

fn run_trial(plan: &ExperimentPlan, point: usize, trial: usize, model: Option<&TrainedModel>) -> TrialOutput {
    let scenario = plan.scenario_at(plan.sweep[point]);
    let mut out = TrialOutput {
        rows: Vec::new(),
        profile: Vec::new(),
    };
    let sampled = match sample_feasible_trial(&scenario, plan.master_seed, trial) {
        Ok(s) => s,
        Err(e) => {
            let draws = scenario.max_draws;
            for &m in &plan.methods {
                out.rows.push(blank_row(plan, point, trial, 0, draws, m, format!("no-feasible-draw: {e}")));
            }
            return out;
        }
    };
    let seed = sampled.trial.seed;
    let draws = sampled.draws;
    for &method in &plan.methods {
        let mut row = blank_row(plan, point, trial, seed, draws, method, String::new());
        let solved = match method {
            MethodTag::Dnn => {
                let Some(model) = model else {
                    row.status = "no-model".into();
                    out.rows.push(row);
                    continue;
                };
                let start = Instant::now();
                let allocation = crate::learner::infer(model, &sampled.instance);
                row.wall_time = start.elapsed().as_secs_f64();
                match evaluate_allocation(&sampled.instance, &allocation, AUDIT_TOL) {
                    Ok(report) => fill_row(&mut row, &allocation, &report),
                    Err(e) => row.status = format!("error: {e}"),
                }
                out.rows.push(row);
                continue;
            }
            MethodTag::Fdsf => sampled
                .trial
                .instance(FilterKind::FullyDigital)
                .map_err(|e| (e, 0.0))
                .and_then(|inst| {
                    let start = Instant::now();
                    let r = solve(&inst, Method::Joint, &plan.solver);
                    let t = start.elapsed().as_secs_f64();
                    r.map(|s| (inst, s, t)).map_err(|e| (e, t))
                }),
            _ => {
                let m = match method {
                    MethodTag::FixedF => Method::FixedF,
                    MethodTag::FixedVarpi => Method::FixedVarpi,
                    _ => Method::Joint,
                };
                let start = Instant::now();
                let r = solve(&sampled.instance, m, &plan.solver);
                let t = start.elapsed().as_secs_f64();
                r.map(|s| (sampled.instance.clone(), s, t)).map_err(|e| (e, t))
            }
        };
        match solved {
            Ok((inst, sol, t)) => {
                row.wall_time = t;
                row.outer_iterations = sol.trace.outer_iterations();
                row.inner_iterations = sol.trace.inner_iterations();
                let report = audit(&inst, &sol.allocation, &sol.combiner, AUDIT_TOL);
                fill_row(&mut row, &sol.allocation, &report);
                if row.feasible && !sol.converged() {
                    row.status = "ok-unconverged".into();
                }
                if plan.kind == ExperimentKind::PerDeviceProfile && method == MethodTag::Joint && row.feasible {
                    out.profile = per_device_profile(&inst, &sol, trial);
                }
            }
            Err((e, t)) => {
                row.wall_time = t;
                row.status = match e {
                    SolverError::Infeasible(why) => format!("infeasible: {why}"),
                    other => format!("error: {other}"),
                };
            }
        }
        out.rows.push(row);
    }
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub sweep_value: f64,
    pub method: MethodTag,
    pub trials: usize,
    pub feasible: usize,
    pub infeasible_fraction: f64,
    pub mean_power: Option<f64>,
    pub median_power: Option<f64>,
    pub q10_power: Option<f64>,
    pub q90_power: Option<f64>,
    pub mean_outer_iterations: Option<f64>,
}

/// Per-instance comparison of `first` against `second` on trials where both are
/// feasible. Network rows count whenever they carry an allocation, since their
/// audit outcome is reported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub point: usize,
    pub sweep_value: f64,
    pub first: MethodTag,
    pub second: MethodTag,
    pub paired: usize,
    /// Trials with `P_first ≤ P_second (1 + 1e-9)`.
    pub first_not_worse: usize,
    pub mean_first: Option<f64>,
    pub mean_second: Option<f64>,
    pub median_first: Option<f64>,
    pub median_second: Option<f64>,
}

impl PairedComparison {
    pub fn not_worse_fraction(&self) -> f64 {
        if self.paired == 0 {
            0.0
        } else {
            self.first_not_worse as f64 / self.paired as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawStats {
    pub point: usize,
    pub sweep_value: f64,
    pub trials: usize,
    pub draws: usize,
    pub exhausted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub id: String,
    pub kind: ExperimentKind,
    pub master_seed: u64,
    pub trials: usize,
    pub points: Vec<PointSummary>,
    pub comparisons: Vec<PairedComparison>,
    pub draws: Vec<DrawStats>,
    pub dominance: Option<DominanceReport>,
    /// Sweep points where some method failed on more than half the trials.
    pub failures: Vec<String>,
}

impl ExperimentSummary {
    pub fn point(&self, point: usize, method: MethodTag) -> Option<&PointSummary> {
        self.points.iter().find(|p| p.point == point && p.method == method)
    }

    pub fn comparison(&self, point: usize, first: MethodTag, second: MethodTag) -> Option<&PairedComparison> {
        self.comparisons
            .iter()
            .find(|c| c.point == point && c.first == first && c.second == second)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub plan: ExperimentPlan,
    pub rows: Vec<ResultRow>,
    pub profile: Vec<ProfileRow>,
    pub summary: ExperimentSummary,
}

const COMPARISONS: [(MethodTag, MethodTag); 4] = [
    (MethodTag::Joint, MethodTag::FixedF),
    (MethodTag::Joint, MethodTag::FixedVarpi),
    (MethodTag::Fdsf, MethodTag::Joint),
    (MethodTag::Joint, MethodTag::Dnn),
];

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(plan: &ExperimentPlan, rows: &[ResultRow], profile: &[ProfileRow]) -> ExperimentSummary {
    let mut points = Vec::new();
    let mut comparisons = Vec::new();
    let mut draws = Vec::new();
    let mut failures = Vec::new();
    for (pi, &value) in plan.sweep.iter().enumerate() {
        let at: Vec<&ResultRow> = rows.iter().filter(|r| r.point == pi).collect();
        for &m in &plan.methods {
            let mine: Vec<&&ResultRow> = at.iter().filter(|r| r.method == m).collect();
            let mut powers: Vec<f64> = mine.iter().filter(|r| r.feasible).filter_map(|r| r.total_power).collect();
            powers.sort_by(f64::total_cmp);
            let iters: Vec<f64> = mine.iter().filter(|r| r.feasible).map(|r| r.outer_iterations as f64).collect();
            let trials = mine.len();
            let infeasible_fraction = if trials == 0 { 0.0 } else { 1.0 - powers.len() as f64 / trials as f64 };
            if infeasible_fraction > 0.5 {
                failures.push(format!(
                    "{} at {value}: {:.1}% of {trials} trials infeasible",
                    m.tag(),
                    100.0 * infeasible_fraction
                ));
            }
            points.push(PointSummary {
                point: pi,
                sweep_value: value,
                method: m,
                trials,
                feasible: powers.len(),
                infeasible_fraction,
                mean_power: mean(&powers),
                median_power: (!powers.is_empty()).then(|| quantile(&powers, 0.5)),
                q10_power: (!powers.is_empty()).then(|| quantile(&powers, 0.1)),
                q90_power: (!powers.is_empty()).then(|| quantile(&powers, 0.9)),
                mean_outer_iterations: mean(&iters),
            });
        }
        for (a, b) in COMPARISONS {
            if !(plan.methods.contains(&a) && plan.methods.contains(&b)) {
                continue;
            }
            let mut first = Vec::new();
            let mut second = Vec::new();
            for t in 0..plan.trials {
                let get = |m: MethodTag| {
                    at.iter()
                        .find(|r| r.trial == t && r.method == m && (r.feasible || m == MethodTag::Dnn))
                        .and_then(|r| r.total_power)
                };
                if let (Some(x), Some(y)) = (get(a), get(b)) {
                    first.push(x);
                    second.push(y);
                }
            }
            comparisons.push(PairedComparison {
                point: pi,
                sweep_value: value,
                first: a,
                second: b,
                paired: first.len(),
                first_not_worse: first.iter().zip(&second).filter(|(x, y)| **x <= **y * (1.0 + 1e-9)).count(),
                mean_first: mean(&first),
                mean_second: mean(&second),
                median_first: median(&first),
                median_second: median(&second),
            });
        }
        let first_method = plan.methods[0];
        let per_trial: Vec<&&ResultRow> = at.iter().filter(|r| r.method == first_method).collect();
        let exhausted = per_trial.iter().filter(|r| r.status.starts_with("no-feasible-draw")).count();
        if exhausted * 2 > per_trial.len() {
            failures.push(format!("{exhausted} of {} trials at {value} found no feasible draw", per_trial.len()));
        }
        draws.push(DrawStats {
            point: pi,
            sweep_value: value,
            trials: per_trial.len(),
            draws: per_trial.iter().map(|r| r.draws).sum(),
            exhausted,
        });
    }
    let dominance = (plan.kind == ExperimentKind::PerDeviceProfile).then(|| {
        let mut trials: Vec<usize> = profile.iter().map(|p| p.trial).collect();
        trials.dedup();
        trials.iter().fold(DominanceReport::default(), |acc, &t| {
            let rows: Vec<ProfileRow> = profile.iter().filter(|p| p.trial == t).cloned().collect();
            acc.merge(dominance_check(&rows))
        })
    });
    ExperimentSummary {
        id: plan.id.clone(),
        kind: plan.kind,
        master_seed: plan.master_seed,
        trials: plan.trials,
        points,
        comparisons,
        draws,
        dominance,
        failures,
    }
}

/// Runs every (sweep point, trial) on `jobs` threads (0 = all cores).
pub fn run_experiment(plan: &ExperimentPlan, jobs: usize, model: Option<&TrainedModel>) -> Result<ResultSet, HarnessError> {
    plan.validate()?;
    if plan.methods.contains(&MethodTag::Dnn) {
        let model = model.ok_or_else(|| HarnessError::Plan("method dnn needs a trained model".into()))?;
        if model.devices != plan.scenario.system.devices {
            return Err(HarnessError::Plan(format!(
                "model is for {} devices, scenario has {}",
                model.devices, plan.scenario.system.devices
            )));
        }
    }
    let cells: Vec<(usize, usize)> = (0..plan.sweep.len())
        .flat_map(|p| (0..plan.trials).map(move |t| (p, t)))
        .collect();
    let outputs: Vec<TrialOutput> =
        thread_pool(jobs).install(|| cells.par_iter().map(|&(p, t)| run_trial(plan, p, t, model)).collect());
    let mut rows = Vec::with_capacity(cells.len() * plan.methods.len());
    let mut profile = Vec::new();
    for o in outputs {
        rows.extend(o.rows);
        profile.extend(o.profile);
    }
    let summary = summarize(plan, &rows, &profile);
    for f in &summary.failures {
        log::warn!("{}: {f}", plan.id);
    }
    Ok(ResultSet {
        plan: plan.clone(),
        rows,
        profile,
        summary,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_rows_csv(rows: &[ResultRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "experiment",
        "point",
        "sweep_value",
        "trial",
        "seed",
        "draws",
        "method",
        "feasible",
        "status",
        "total_power_w",
        "varpi",
        "outer_iterations",
        "inner_iterations",
        "worst_latency_excess",
        "power_w",
        "cpu_hz",
        "latency_s",
    ])?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.point.to_string(),
            r.sweep_value.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.draws.to_string(),
            r.method.tag().into(),
            r.feasible.to_string(),
            r.status.clone(),
            opt(r.total_power),
            opt(r.bits),
            r.outer_iterations.to_string(),
            r.inner_iterations.to_string(),
            opt(r.worst_latency_excess),
            join(&r.power),
            join(&r.cpu),
            join(&r.latency),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical CDF of total power per (point, method), feasible rows only.
pub fn write_cdf_csv(rows: &[ResultRow], plan: &ExperimentPlan, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["point", "sweep_value", "method", "total_power_w", "cdf"])?;
    for (pi, value) in plan.sweep.iter().enumerate() {
        for m in &plan.methods {
            let mut v: Vec<f64> = rows
                .iter()
                .filter(|r| r.point == pi && r.method == *m && r.feasible)
                .filter_map(|r| r.total_power)
                .collect();
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            for (i, p) in v.iter().enumerate() {
                w.write_record([
                    pi.to_string(),
                    value.to_string(),
                    m.tag().into(),
                    p.to_string(),
                    ((i + 1) as f64 / n).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_profile_csv(profile: &[ProfileRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in profile {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing_csv(rows: &[ResultRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["point", "trial", "method", "wall_time_s"])?;
    for r in rows {
        w.write_record([r.point.to_string(), r.trial.to_string(), r.method.tag().into(), r.wall_time.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: MethodTag,
    pub runs: usize,
    pub mean_wall_time_s: f64,
    pub median_wall_time_s: f64,
}

pub fn timing_summary(rows: &[ResultRow], methods: &[MethodTag]) -> Vec<MethodTiming> {
    methods
        .iter()
        .map(|&m| {
            let t: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == m && r.total_power.is_some())
                .map(|r| r.wall_time)
                .collect();
            MethodTiming {
                method: m,
                runs: t.len(),
                mean_wall_time_s: mean(&t).unwrap_or(f64::NAN),
                median_wall_time_s: median(&t).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// Files whose bytes depend only on the plan and master seed.
pub const DETERMINISTIC_FILES: [&str; 5] = ["plan.json", "rows.csv", "summary.json", "cdf.csv", "profile.csv"];

/// Writes the deterministic files plus `timing.csv` and `timing.json`.
pub fn emit_results(result: &ResultSet, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut create = |name: &str| -> Result<(PathBuf, std::io::BufWriter<std::fs::File>), HarnessError> {
        let path = dir.join(name);
        let f = std::fs::File::create(&path).map_err(io_err(&path))?;
        written.push(path.clone());
        Ok((path, std::io::BufWriter::new(f)))
    };
    let (path, mut f) = create("plan.json")?;
    serde_json::to_writer_pretty(&mut f, &result.plan)?;
    f.flush().map_err(io_err(&path))?;
    let (path, f) = create("rows.csv")?;
    write_rows_csv(&result.rows, f).map_err(csv_err(&path))?;
    let (path, mut f) = create("summary.json")?;
    serde_json::to_writer_pretty(&mut f, &result.summary)?;
    f.flush().map_err(io_err(&path))?;
    let (path, f) = create("cdf.csv")?;
    write_cdf_csv(&result.rows, &result.plan, f).map_err(csv_err(&path))?;
    if !result.profile.is_empty() {
        let (path, f) = create("profile.csv")?;
        write_profile_csv(&result.profile, f).map_err(csv_err(&path))?;
    }
    let (path, f) = create("timing.csv")?;
    write_timing_csv(&result.rows, f).map_err(csv_err(&path))?;
    let (path, mut f) = create("timing.json")?;
    serde_json::to_writer_pretty(&mut f, &timing_summary(&result.rows, &result.plan.methods))?;
    f.flush().map_err(io_err(&path))?;
    Ok(written)
}

/// `explicit`, else `<env_root>/<experiment>/<stamp>`, else `results/<experiment>/<stamp>`.
pub fn output_dir(explicit: Option<&Path>, env_root: Option<&Path>, experiment: &str, stamp: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => env_root.unwrap_or(Path::new("results")).join(experiment).join(stamp),
    }
}

/// Everything a command-line run can configure from one file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub solver: SolverOptions,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub sweep: Option<Vec<f64>>,
    pub methods: Option<Vec<MethodTag>>,
}

/// Reads a JSON or TOML config; the extension picks the format.
pub fn load_run_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let parse = |message: String| {
        HarnessError::Config(ConfigError::Parse {
            path: path.display().to_string(),
            message,
        })
    };
    let cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| parse(e.to_string()))?,
        _ => serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?,
    };
    cfg.scenario.validate()?;
    Ok(cfg)
}

//! Offloading latency model and the feasibility screen run before optimizing.
//!
//! A task spends time on the air (`b / (B_W log₂(1+γ))`), on the fronthaul
//! (`2 b R ϖ / (C_F log₂M)`) and on the server (`ω / f`). Undefined latencies
//! (zero SINR, zero CPU share) are `f64::INFINITY`, never an overflowed value.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::frontend::{mmse_combiner, quantization_variances, sinr, FilteredLink};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
}

/// One offloaded task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Input size `b_k` in bits.
    pub bits: f64,
    /// Work `ω_k` in CPU cycles.
    pub cycles: f64,
    /// Deadline `𝒯ᵗʰ_k` in seconds.
    pub deadline: f64,
}

impl TaskSpec {
    pub fn new(bits: f64, cycles: f64, deadline: f64) -> Result<Self, ConfigError> {
        let t = Self {
            bits,
            cycles,
            deadline,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.bits) && ok(self.cycles) && ok(self.deadline) {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!(
                "task fields must be positive and finite: {self:?}"
            )))
        }
    }
}

/// Reads tasks from CSV with header `bits,cycles,deadline`.
pub fn read_tasks_csv(reader: impl Read) -> Result<Vec<TaskSpec>, ConfigError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut tasks = Vec::new();
    for (i, row) in rdr.deserialize::<TaskSpec>().enumerate() {
        let task = row.map_err(|e| ConfigError::Parse {
            path: format!("<csv row {}>", i + 1),
            message: e.to_string(),
        })?;
        task.validate()?;
        tasks.push(task);
    }
    Ok(tasks)
}

/// Loads a task batch from a `.json` array or a `.csv` table.
pub fn load_tasks(path: &Path) -> Result<Vec<TaskSpec>, ConfigError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: display.clone(),
        source,
    })?;
    let tasks = if path.extension().is_some_and(|e| e == "csv") {
        read_tasks_csv(text.as_bytes())?
    } else {
        serde_json::from_str::<Vec<TaskSpec>>(&text).map_err(|e| ConfigError::Parse {
            path: display,
            message: e.to_string(),
        })?
    };
    tasks.iter().try_for_each(TaskSpec::validate)?;
    Ok(tasks)
}

/// System constants shared by every device and the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Antennas `N`.
    pub antennas: usize,
    /// Devices `K`.
    pub devices: usize,
    /// RF chains `R`; always equal to `devices`.
    pub rf_chains: usize,
    /// Uplink bandwidth `B_W` in Hz.
    pub bandwidth: f64,
    /// Fronthaul capacity `C_F` in bit/s.
    pub fronthaul_capacity: f64,
    /// Server capacity `F_T` in cycles/s.
    pub cpu_budget: f64,
    /// PSK order `M`.
    pub modulation_order: u32,
    /// Thermal noise power `σ²` in W over the band.
    pub noise_power: f64,
    /// Per-device power cap in W.
    pub max_power: f64,
    /// Cycles per input bit used when generating tasks.
    pub cycles_per_bit: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let bandwidth: f64 = 1.8e5;
        // −169 dBm/Hz over 180 kHz plus a 7 dB noise figure.
        let noise_dbm = -169.0 + 10.0 * bandwidth.log10() + 7.0;
        Self {
            antennas: 128,
            devices: 10,
            rf_chains: 10,
            bandwidth,
            fronthaul_capacity: 1e8,
            cpu_budget: 1.5e7,
            modulation_order: 4,
            noise_power: 1e-3 * 10f64.powf(noise_dbm / 10.0),
            max_power: 1e-3,
            cycles_per_bit: 50.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("fronthaul_capacity", self.fronthaul_capacity),
            ("cpu_budget", self.cpu_budget),
            ("noise_power", self.noise_power),
            ("max_power", self.max_power),
            ("cycles_per_bit", self.cycles_per_bit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.antennas == 0 || self.devices == 0 {
            return Err(ConfigError::Invalid("antennas and devices must be at least 1".into()));
        }
        if self.rf_chains != self.devices {
            return Err(ConfigError::Invalid(format!(
                "rf_chains ({}) must equal devices ({})",
                self.rf_chains, self.devices
            )));
        }
        if self.modulation_order < 2 || !self.modulation_order.is_power_of_two() {
            return Err(ConfigError::Invalid(format!(
                "modulation order {} is not a power of two >= 2",
                self.modulation_order
            )));
        }
        if self.bits_cap() == 0 {
            return Err(ConfigError::Invalid(
                "fronthaul capacity cannot carry even one bit per branch".into(),
            ));
        }
        Ok(())
    }

    pub fn with_devices(mut self, k: usize) -> Self {
        self.devices = k;
        self.rf_chains = k;
        self
    }

    pub fn log2_modulation(&self) -> f64 {
        (self.modulation_order as f64).log2()
    }

    /// Largest bit width allowed by the fronthaul rate, `⌊C_F / (2 B_W R)⌋`.
    pub fn bits_cap(&self) -> u32 {
        (self.fronthaul_capacity / (2.0 * self.bandwidth * self.rf_chains as f64)).floor() as u32
    }

    /// Midpoint of `[1, bits_cap]`, rounded up.
    pub fn bits_midpoint(&self) -> u32 {
        (self.bits_cap() + 2) / 2
    }

    /// Half of the largest feasible bit width, `⌈C_F / (4 B_W R)⌉`.
    pub fn bits_half(&self) -> u32 {
        let half = (self.fronthaul_capacity / (4.0 * self.bandwidth * self.rf_chains as f64)).ceil();
        (half as u32).clamp(1, self.bits_cap().max(1))
    }

    pub fn bits_allowed(&self, bits: u32) -> bool {
        bits >= 1 && bits <= self.bits_cap()
    }
}

/// A decision vector `(p, f, ϖ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub power: Vec<f64>,
    pub cpu: Vec<f64>,
    pub bits: u32,
}

impl Allocation {
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }
}

pub fn transmission_latency(sinr: f64, bits: f64, bandwidth: f64) -> f64 {
    if !(sinr > 0.0) {
        return f64::INFINITY;
    }
    let rate = bandwidth * sinr.ln_1p() / std::f64::consts::LN_2;
    if rate == 0.0 {
        f64::INFINITY
    } else {
        bits / rate
    }
}

pub fn fronthaul_latency(
    bits: f64,
    rf_chains: usize,
    quant_bits: u32,
    capacity: f64,
    modulation_order: u32,
) -> f64 {
    2.0 * bits * rf_chains as f64 * quant_bits as f64
        / (capacity * (modulation_order as f64).log2())
}

pub fn computational_latency(cycles: f64, cpu: f64) -> f64 {
    if !(cpu > 0.0) {
        return f64::INFINITY;
    }
    cycles / cpu
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub transmission: f64,
    pub fronthaul: f64,
    pub compute: f64,
}

impl LatencyBreakdown {
    pub fn total(&self) -> f64 {
        self.transmission + self.fronthaul + self.compute
    }
}

pub fn latency_breakdown(
    alloc: &Allocation,
    tasks: &[TaskSpec],
    config: &SystemConfig,
    sinr: &[f64],
) -> Vec<LatencyBreakdown> {
    tasks
        .iter()
        .enumerate()
        .map(|(k, t)| LatencyBreakdown {
            transmission: transmission_latency(sinr[k], t.bits, config.bandwidth),
            fronthaul: fronthaul_latency(
                t.bits,
                config.rf_chains,
                alloc.bits,
                config.fronthaul_capacity,
                config.modulation_order,
            ),
            compute: computational_latency(t.cycles, alloc.cpu[k]),
        })
        .collect()
}

pub fn total_latency(
    alloc: &Allocation,
    tasks: &[TaskSpec],
    config: &SystemConfig,
    sinr: &[f64],
) -> Vec<f64> {
    latency_breakdown(alloc, tasks, config, sinr)
        .iter()
        .map(LatencyBreakdown::total)
        .collect()
}

/// Which fronthaul term the aggregate CPU condition uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FronthaulForm {
    /// Per-task fronthaul latency `2 b_k R ϖ / (C_F log₂M)`.
    #[default]
    PerTask,
    /// The task-independent `2 B_W R ϖ / C_F`, kept for audit comparison.
    LinkRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Every device finishes transmission plus fronthaul strictly before its deadline.
    pub transfer_ok: bool,
    /// The server can absorb every device's minimal CPU demand.
    pub cpu_ok: bool,
    /// Per-device `𝒯ᵗʰ − ξᵀᴸ − ξᶠᴸ` (seconds).
    pub slack: Vec<f64>,
    /// `Σ ω_k / slack_k` (cycles/s); infinite when some slack is non-positive.
    pub cpu_demand: f64,
    pub sinr: Vec<f64>,
}

/// Feasibility for given per-device SINRs at bit width `bits`.
pub fn feasibility_from_sinr(
    sinr: &[f64],
    bits: u32,
    tasks: &[TaskSpec],
    config: &SystemConfig,
    form: FronthaulForm,
) -> FeasibilityReport {
    let mut slack = Vec::with_capacity(tasks.len());
    let mut cpu_demand = 0.0;
    let mut transfer_ok = config.bits_allowed(bits);
    for (t, &g) in tasks.iter().zip(sinr) {
        let tl = transmission_latency(g, t.bits, config.bandwidth);
        let fl = fronthaul_latency(
            t.bits,
            config.rf_chains,
            bits,
            config.fronthaul_capacity,
            config.modulation_order,
        );
        let s = t.deadline - tl - fl;
        transfer_ok &= s > 0.0;
        slack.push(s);
        let fl_cpu = match form {
            FronthaulForm::PerTask => fl,
            FronthaulForm::LinkRate => {
                2.0 * config.bandwidth * config.rf_chains as f64 * bits as f64
                    / config.fronthaul_capacity
            }
        };
        let s_cpu = t.deadline - tl - fl_cpu;
        cpu_demand += if s_cpu > 0.0 {
            t.cycles / s_cpu
        } else {
            f64::INFINITY
        };
    }
    let cpu_ok = cpu_demand <= config.cpu_budget;
    FeasibilityReport {
        feasible: transfer_ok && cpu_ok,
        transfer_ok,
        cpu_ok,
        slack,
        cpu_demand,
        sinr: sinr.to_vec(),
    }
}

/// Screens a candidate `(p, ϖ)` using the MMSE combiner for that point.
pub fn check_feasibility(
    power: &[f64],
    bits: u32,
    tasks: &[TaskSpec],
    config: &SystemConfig,
    link: &FilteredLink,
    form: FronthaulForm,
) -> FeasibilityReport {
    let quant = quantization_variances(power, link, config.noise_power, bits);
    let gamma = match mmse_combiner(power, link, config.noise_power, &quant) {
        Ok(w) => sinr(power, link, &w, config.noise_power, &quant),
        Err(e) => {
            log::debug!("combiner failed during feasibility check: {e}");
            vec![0.0; tasks.len()]
        }
    };
    feasibility_from_sinr(&gamma, bits, tasks, config, form)
}

/// Smallest CPU shares meeting every deadline exactly: `f_k = ω_k / slack_k`.
pub fn minimal_cpu(report: &FeasibilityReport, tasks: &[TaskSpec]) -> Vec<f64> {
    tasks
        .iter()
        .zip(&report.slack)
        .map(|(t, &s)| if s > 0.0 { t.cycles / s } else { f64::INFINITY })
        .collect()
}

//! Joint transmit-power, CPU-share and quantization-bit allocation.
//!
//! The outer loop alternates three blocks: the MMSE combiner for the current
//! powers, an inner successive-convexification loop over `(p, f)` at fixed
//! combiner and bit width, and an integer line search over the bit width.
//! Inside the inner loop every step is closed form: the CPU split equalizes
//! marginal power savings, and the power update is the fixed point of a
//! standard interference function.

use std::f64::consts::LN_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::frontend::{
    mmse_combiner, quantization_factor, quantization_variances, sinr, FilterKind, FilteredLink,
    SpatialFilter,
};
use crate::latency::{
    check_feasibility, computational_latency, fronthaul_latency, latency_breakdown,
    transmission_latency, Allocation, ConfigError, FronthaulForm, LatencyBreakdown, SystemConfig,
    TaskSpec,
};
use crate::numerics::{ComplexMatrix, NumericsError, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Infeasibility {
    /// The starting point fails the transfer or aggregate-CPU screen.
    Initial { transfer_ok: bool, cpu_demand: f64 },
    /// The server cannot give every device more than its deadline floor.
    CpuBudget { demand: f64, budget: f64 },
    /// A device's CPU share cannot finish its task before the deadline.
    Deadline { device: usize },
    /// A device has zero effective gain or needs unbounded power.
    Unservable { device: usize },
    PowerCap { device: usize, power: f64 },
    /// No bit width in `[1, bits_cap]` satisfies the latency constraints.
    NoBitWidth,
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Initial {
                transfer_ok,
                cpu_demand,
            } => write!(
                f,
                "initial point fails screening (transfer ok: {transfer_ok}, cpu demand {cpu_demand:.4e})"
            ),
            Self::CpuBudget { demand, budget } => {
                write!(f, "cpu floor {demand:.4e} exceeds budget {budget:.4e}")
            }
            Self::Deadline { device } => write!(f, "device {device} cannot meet its deadline"),
            Self::Unservable { device } => write!(f, "device {device} is unservable"),
            Self::PowerCap { device, power } => {
                write!(f, "device {device} needs {power:.4e} W, above the power cap")
            }
            Self::NoBitWidth => write!(f, "no feasible bit width"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("infeasible: {0}")]
    Infeasible(Infeasibility),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl SolverError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Self::Infeasible(_))
    }
}

fn infeasible<T>(why: Infeasibility) -> Result<T, SolverError> {
    Err(SolverError::Infeasible(why))
}

/// Everything a solve needs: system constants, tasks and the filtered channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub config: SystemConfig,
    pub tasks: Vec<TaskSpec>,
    pub link: FilteredLink,
}

impl Instance {
    pub fn new(
        config: SystemConfig,
        tasks: Vec<TaskSpec>,
        link: FilteredLink,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        tasks.iter().try_for_each(TaskSpec::validate)?;
        if tasks.len() != config.devices || link.devices() != config.devices {
            return Err(ConfigError::Invalid(format!(
                "{} tasks and {} channel columns for {} devices",
                tasks.len(),
                link.devices(),
                config.devices
            ))
            .into());
        }
        if link.chains() != config.rf_chains {
            return Err(ConfigError::Invalid(format!(
                "filter has {} chains, config expects {}",
                link.chains(),
                config.rf_chains
            ))
            .into());
        }
        Ok(Self {
            config,
            tasks,
            link,
        })
    }

    pub fn from_channel(
        config: SystemConfig,
        tasks: Vec<TaskSpec>,
        channel: &ChannelRealization,
        kind: FilterKind,
    ) -> Result<Self, SolverError> {
        let filter = SpatialFilter::design(kind, channel)?;
        let link = FilteredLink::new(&filter.v, channel);
        Self::new(config, tasks, link)
    }

    pub fn devices(&self) -> usize {
        self.tasks.len()
    }

    fn fronthaul(&self, k: usize, bits: u32) -> f64 {
        let c = &self.config;
        fronthaul_latency(
            self.tasks[k].bits,
            c.rf_chains,
            bits,
            c.fronthaul_capacity,
            c.modulation_order,
        )
    }

    /// Deadlines net of fronthaul time, `T̄_k = 𝒯ᵗʰ_k − ξᶠᴸ_k(ϖ)`.
    pub fn reduced_deadlines(&self, bits: u32) -> Vec<f64> {
        (0..self.devices())
            .map(|k| self.tasks[k].deadline - self.fronthaul(k, bits))
            .collect()
    }
}

/// Scalar link gains seen through a fixed combiner.
///
/// With `W` fixed, every device's interference-plus-noise is affine in `p`:
/// `D_k(p) = η_k + 2^{−2ϖ} Σ_r Ξ_{r,k}(p) + Σ_{j≠k} α_{k,j} p_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCoefficients {
    /// `α_{k,j} = |w_kᴴ V h_j|²`, indexed `[k][j]`.
    pub alpha: Vec<Vec<f64>>,
    /// `σ² ‖w_kᴴ V‖²`.
    pub eta: Vec<f64>,
    /// `3 |w_{k,r}|²`, indexed `[r][k]`.
    pub xi_weights: Vec<Vec<f64>>,
    /// `|v_rᵀ h_j|²`, indexed `[r][j]`.
    pub chain_gains: Vec<Vec<f64>>,
    /// `σ² ‖v_r‖²`.
    pub chain_noise: Vec<f64>,
    /// `Σ_r 3|w_{k,r}|² |v_rᵀh_j|²`, indexed `[k][j]`.
    quant_slope: Vec<Vec<f64>>,
    /// `Σ_r 3|w_{k,r}|² σ²‖v_r‖²`.
    quant_floor: Vec<f64>,
}

pub fn link_coefficients(
    link: &FilteredLink,
    combiner: &ComplexMatrix,
    noise_power: f64,
) -> LinkCoefficients {
    let (r_count, k_count) = (link.chains(), link.devices());
    let g = &link.gains;
    let alpha = (0..k_count)
        .map(|k| {
            (0..k_count)
                .map(|j| {
                    (0..r_count)
                        .map(|r| combiner[(r, k)].conj() * g[(r, j)])
                        .sum::<C64>()
                        .norm_sqr()
                })
                .collect()
        })
        .collect();
    let eta = (0..k_count)
        .map(|k| {
            let w = combiner.column(k);
            let gw = link.gram.mul_vec(&w);
            noise_power * w.iter().zip(&gw).map(|(a, b)| a.conj() * b).sum::<C64>().re
        })
        .collect();
    let xi_weights: Vec<Vec<f64>> = (0..r_count)
        .map(|r| (0..k_count).map(|k| 3.0 * combiner[(r, k)].norm_sqr()).collect())
        .collect();
    let chain_gains: Vec<Vec<f64>> = (0..r_count)
        .map(|r| (0..k_count).map(|j| g[(r, j)].norm_sqr()).collect())
        .collect();
    let chain_noise: Vec<f64> = link.row_norms.iter().map(|n| noise_power * n).collect();
    let quant_slope = (0..k_count)
        .map(|k| {
            (0..k_count)
                .map(|j| (0..r_count).map(|r| xi_weights[r][k] * chain_gains[r][j]).sum())
                .collect()
        })
        .collect();
    let quant_floor = (0..k_count)
        .map(|k| (0..r_count).map(|r| xi_weights[r][k] * chain_noise[r]).sum())
        .collect();
    LinkCoefficients {
        alpha,
        eta,
        xi_weights,
        chain_gains,
        chain_noise,
        quant_slope,
        quant_floor,
    }
}

impl LinkCoefficients {
    pub fn devices(&self) -> usize {
        self.eta.len()
    }

    /// `Ξ_{r,k}(p)`.
    pub fn xi(&self, r: usize, k: usize, power: &[f64]) -> f64 {
        let rx: f64 = power
            .iter()
            .zip(&self.chain_gains[r])
            .map(|(p, g)| p * g)
            .sum();
        self.xi_weights[r][k] * (rx + self.chain_noise[r])
    }

    /// `Σ_r Ξ_{r,k}(p)`.
    pub fn xi_sum(&self, k: usize, power: &[f64]) -> f64 {
        self.quant_floor[k]
            + self.quant_slope[k]
                .iter()
                .zip(power)
                .map(|(s, p)| s * p)
                .sum::<f64>()
    }

    fn disturbance_scaled(&self, k: usize, power: &[f64], qf: f64) -> f64 {
        let interference: f64 = (0..self.devices())
            .filter(|&j| j != k)
            .map(|j| self.alpha[k][j] * power[j])
            .sum();
        self.eta[k] + qf * self.xi_sum(k, power) + interference
    }

    /// Interference plus noise plus quantization error `D_k(p)` at bit width `bits`.
    pub fn disturbance(&self, k: usize, power: &[f64], bits: u32) -> f64 {
        self.disturbance_scaled(k, power, quantization_factor(bits))
    }

    /// `∂D_k / ∂p_j`.
    pub fn disturbance_slope(&self, k: usize, j: usize, bits: u32) -> f64 {
        let cross = if j == k { 0.0 } else { self.alpha[k][j] };
        cross + quantization_factor(bits) * self.quant_slope[k][j]
    }

    pub fn sinr(&self, k: usize, power: &[f64], bits: u32) -> f64 {
        power[k] * self.alpha[k][k] / self.disturbance(k, power, bits)
    }

    pub fn sinrs(&self, power: &[f64], bits: u32) -> Vec<f64> {
        (0..self.devices()).map(|k| self.sinr(k, power, bits)).collect()
    }
}

/// Tangent lower bound of `log₂(1+ζ)` in `log₂ζ`, taken at each device's current SINR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateState {
    pub psi: Vec<f64>,
    pub beta: Vec<f64>,
    pub zeta: Vec<f64>,
}

/// `(ψ, β)` for a single touching point `ζ`.
pub fn surrogate_terms(zeta: f64) -> (f64, f64) {
    let psi = zeta / (1.0 + zeta);
    let beta = zeta.ln_1p() / LN_2 - psi * zeta.log2();
    (psi, beta)
}

impl SurrogateState {
    pub fn from_zeta(zeta: Vec<f64>) -> Result<Self, SolverError> {
        if let Some(device) = zeta.iter().position(|z| !(z.is_finite() && *z > 0.0)) {
            return infeasible(Infeasibility::Unservable { device });
        }
        let (psi, beta) = zeta.iter().map(|&z| surrogate_terms(z)).unzip();
        Ok(Self { psi, beta, zeta })
    }
}

pub fn surrogate_coefficients(
    power: &[f64],
    bits: u32,
    coeffs: &LinkCoefficients,
) -> Result<SurrogateState, SolverError> {
    SurrogateState::from_zeta(coeffs.sinrs(power, bits))
}

/// `−log₂(1 + ζ_k(2^q))`, the rate term of device `k` as a function of log-powers.
pub fn neg_log_rate(coeffs: &LinkCoefficients, bits: u32, q: &[f64], k: usize) -> f64 {
    let p: Vec<f64> = q.iter().map(|x| x.exp2()).collect();
    -coeffs.sinr(k, &p, bits).ln_1p() / LN_2
}

/// Convex upper bound of [`neg_log_rate`] built from `state`.
pub fn neg_log_rate_surrogate(
    coeffs: &LinkCoefficients,
    bits: u32,
    state: &SurrogateState,
    q: &[f64],
    k: usize,
) -> f64 {
    let p: Vec<f64> = q.iter().map(|x| x.exp2()).collect();
    let gamma = coeffs.alpha[k][k].log2() - coeffs.disturbance(k, &p, bits).log2();
    -state.psi[k] * (gamma + q[k]) - state.beta[k]
}

/// Rate (bits per channel use) device `k` needs when its CPU share is `f`:
/// `f b / (B_W (f T̄ − ω))`. `None` when the share cannot meet the deadline.
pub fn required_rate(task: &TaskSpec, cpu: f64, reduced_deadline: f64, bandwidth: f64) -> Option<f64> {
    let margin = cpu * reduced_deadline - task.cycles;
    (margin > 0.0).then(|| cpu * task.bits / (bandwidth * margin))
}

/// CPU split that minimizes total power under the surrogate constraints.
///
/// `f_k = ω_k/T̄_k + (F_T − Σ_j ω_j/T̄_j) (s_k/T̄_k) / Σ_j (s_j/T̄_j)` with
/// `s_k = √(ln2 · b_k ω_k p_k / ψ_k)`; the bandwidth factors cancel. The
/// budget is always fully used.
pub fn update_f(
    power: &[f64],
    surrogate: &SurrogateState,
    tasks: &[TaskSpec],
    config: &SystemConfig,
    reduced_deadlines: &[f64],
) -> Result<Vec<f64>, SolverError> {
    if let Some(device) = reduced_deadlines.iter().position(|t| !(*t > 0.0)) {
        return infeasible(Infeasibility::Deadline { device });
    }
    let floor: Vec<f64> = tasks
        .iter()
        .zip(reduced_deadlines)
        .map(|(t, tb)| t.cycles / tb)
        .collect();
    let demand: f64 = floor.iter().sum();
    let surplus = config.cpu_budget - demand;
    if !(surplus > 0.0) {
        return infeasible(Infeasibility::CpuBudget {
            demand,
            budget: config.cpu_budget,
        });
    }
    let weights: Vec<f64> = (0..tasks.len())
        .map(|k| {
            let t = &tasks[k];
            (LN_2 * t.bits * t.cycles * power[k] / surrogate.psi[k]).sqrt() / reduced_deadlines[k]
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        let device = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)).unwrap_or(0);
        return infeasible(Infeasibility::Unservable { device });
    }
    Ok(floor
        .iter()
        .zip(&weights)
        .map(|(fl, w)| fl + surplus * w / total)
        .collect())
}

/// CPU split minimizing `Σ p_k(f_k)` exactly for the current surrogate and
/// disturbance, where `p_k(f)` is the power update as a function of `f`.
///
/// Marginal powers are equalized by bisection on the common multiplier. The
/// inner loop falls back to it whenever the closed-form split, which weighs
/// devices by their previous powers, would raise the total power.
#[allow(clippy::too_many_arguments)]
pub fn exact_cpu_split(
    surrogate: &SurrogateState,
    coeffs: &LinkCoefficients,
    tasks: &[TaskSpec],
    config: &SystemConfig,
    bits: u32,
    reduced_deadlines: &[f64],
    previous: &[f64],
) -> Result<Vec<f64>, SolverError> {
    if let Some(device) = reduced_deadlines.iter().position(|t| !(*t > 0.0)) {
        return infeasible(Infeasibility::Deadline { device });
    }
    let k_count = tasks.len();
    let floor: Vec<f64> = (0..k_count).map(|k| tasks[k].cycles / reduced_deadlines[k]).collect();
    let surplus = config.cpu_budget - floor.iter().sum::<f64>();
    if !(surplus > 0.0) {
        return infeasible(Infeasibility::CpuBudget {
            demand: config.cpu_budget - surplus,
            budget: config.cpu_budget,
        });
    }
    let bw = config.bandwidth;
    // ln(−dp_k/df_k) as a function of the margin x = f T̄ − ω.
    let gamma_bar: Vec<f64> = (0..k_count)
        .map(|k| coeffs.alpha[k][k].log2() - coeffs.disturbance(k, previous, bits).log2())
        .collect();
    let log_slope = |k: usize, x: f64| {
        let t = &tasks[k];
        let rate = (x + t.cycles) * t.bits / (reduced_deadlines[k] * bw * x);
        let log2_p = (rate - surrogate.beta[k]) / surrogate.psi[k] - gamma_bar[k];
        LN_2 * log2_p + (LN_2 * t.bits * t.cycles / (surrogate.psi[k] * bw)).ln() - 2.0 * x.ln()
    };
    let x_max: Vec<f64> = (0..k_count).map(|k| surplus * reduced_deadlines[k]).collect();
    let x_min: Vec<f64> = x_max.iter().map(|x| x * 1e-12).collect();
    let margin_at = |k: usize, log_lambda: f64| {
        let (mut lo, mut hi) = (x_min[k].ln(), x_max[k].ln());
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if log_slope(k, mid.exp()) > log_lambda {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    };
    let mut lo = (0..k_count).map(|k| log_slope(k, x_max[k])).fold(f64::INFINITY, f64::min);
    let mut hi = (0..k_count).map(|k| log_slope(k, x_min[k])).fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return infeasible(Infeasibility::Unservable { device: 0 });
    }
    let mut extra = vec![0.0; k_count];
    for _ in 0..128 {
        let mid = 0.5 * (lo + hi);
        extra = (0..k_count).map(|k| margin_at(k, mid) / reduced_deadlines[k]).collect();
        if extra.iter().sum::<f64>() > surplus {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let total: f64 = extra.iter().sum();
    Ok(floor.iter().zip(&extra).map(|(fl, e)| fl + surplus * e / total).collect())
}

/// CPU shares proportional to task size, `f_k = ω_k F_T / Σ_j ω_j`.
pub fn proportional_cpu(tasks: &[TaskSpec], config: &SystemConfig) -> Vec<f64> {
    let total: f64 = tasks.iter().map(|t| t.cycles).sum();
    tasks
        .iter()
        .map(|t| t.cycles * config.cpu_budget / total)
        .collect()
}

/// Power update `p_k = 2^{(r_k − β_k)/ψ_k − Γ̄_k}` with `Γ̄_k = log₂α_kk − log₂D_k(p_prev)`.
#[allow(clippy::too_many_arguments)]
pub fn update_p(
    cpu: &[f64],
    surrogate: &SurrogateState,
    coeffs: &LinkCoefficients,
    tasks: &[TaskSpec],
    config: &SystemConfig,
    bits: u32,
    reduced_deadlines: &[f64],
    previous: &[f64],
) -> Result<Vec<f64>, SolverError> {
    (0..tasks.len())
        .map(|k| {
            let rate = required_rate(&tasks[k], cpu[k], reduced_deadlines[k], config.bandwidth)
                .ok_or(SolverError::Infeasible(Infeasibility::Deadline { device: k }))?;
            let gamma_bar =
                coeffs.alpha[k][k].log2() - coeffs.disturbance(k, previous, bits).log2();
            let p = ((rate - surrogate.beta[k]) / surrogate.psi[k] - gamma_bar).exp2();
            if p.is_finite() && p > 0.0 {
                Ok(p)
            } else {
                infeasible(Infeasibility::Unservable { device: k })
            }
        })
        .collect()
}

/// The power map `I(p)` with surrogate weights and CPU shares held fixed.
#[derive(Debug, Clone)]
pub struct InterferenceMap<'a> {
    coeffs: &'a LinkCoefficients,
    bits: u32,
    /// `2^{(r_k − β_k)/ψ_k} / α_kk`.
    scale: Vec<f64>,
}

impl<'a> InterferenceMap<'a> {
    pub fn new(
        coeffs: &'a LinkCoefficients,
        surrogate: &SurrogateState,
        cpu: &[f64],
        instance: &Instance,
        bits: u32,
    ) -> Result<Self, SolverError> {
        let tbar = instance.reduced_deadlines(bits);
        let scale = (0..instance.devices())
            .map(|k| {
                let rate =
                    required_rate(&instance.tasks[k], cpu[k], tbar[k], instance.config.bandwidth)
                        .ok_or(SolverError::Infeasible(Infeasibility::Deadline { device: k }))?;
                Ok(((rate - surrogate.beta[k]) / surrogate.psi[k]).exp2() / coeffs.alpha[k][k])
            })
            .collect::<Result<_, SolverError>>()?;
        Ok(Self {
            coeffs,
            bits,
            scale,
        })
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.scale
            .iter()
            .enumerate()
            .map(|(k, s)| s * self.coeffs.disturbance(k, power, self.bits))
            .collect()
    }
}

pub fn interference_map(power: &[f64], map: &InterferenceMap<'_>) -> Vec<f64> {
    map.apply(power)
}

/// How CPU shares are chosen inside the inner loop.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpuPolicy {
    #[default]
    Optimized,
    /// `f_k ∝ ω_k`.
    Proportional,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitsPolicy {
    #[default]
    LineSearch,
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Stop the inner loop once no power moves by more than this fraction.
    pub tol_inner: f64,
    pub max_inner: usize,
    /// Stop the outer loop once the objective moves by less than this fraction
    /// and the bit width is unchanged.
    pub tol_outer: f64,
    pub max_outer: usize,
    /// Relative slack allowed when testing a bit width against the deadlines.
    pub line_search_tol: f64,
    pub cpu: CpuPolicy,
    pub bits: BitsPolicy,
    /// Defaults to `P_max / 2` for every device.
    pub initial_power: Option<Vec<f64>>,
    /// Defaults to the midpoint of the allowed bit widths.
    pub initial_bits: Option<u32>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_inner: 1e-8,
            max_inner: 500,
            tol_outer: 1e-6,
            max_outer: 100,
            line_search_tol: 1e-6,
            cpu: CpuPolicy::Optimized,
            bits: BitsPolicy::LineSearch,
            initial_power: None,
            initial_bits: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub power: Vec<f64>,
    pub cpu: Vec<f64>,
    /// Surrogate used for the final power update.
    pub surrogate: SurrogateState,
    /// `1ᵀp`, starting with the input point.
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl InnerResult {
    pub fn iterations(&self) -> usize {
        self.objective.len() - 1
    }
}

fn cpu_for(
    policy: &CpuPolicy,
    power: &[f64],
    surrogate: &SurrogateState,
    instance: &Instance,
    tbar: &[f64],
) -> Result<Vec<f64>, SolverError> {
    match policy {
        CpuPolicy::Optimized => update_f(power, surrogate, &instance.tasks, &instance.config, tbar),
        CpuPolicy::Proportional => Ok(proportional_cpu(&instance.tasks, &instance.config)),
        CpuPolicy::Fixed(f) => Ok(f.clone()),
    }
}

/// Inner loop over `(p, f)` at a fixed combiner and bit width.
pub fn sca_inner_loop(
    instance: &Instance,
    coeffs: &LinkCoefficients,
    bits: u32,
    initial_power: &[f64],
    policy: &CpuPolicy,
    options: &SolverOptions,
) -> Result<InnerResult, SolverError> {
    let tbar = instance.reduced_deadlines(bits);
    let mut power = initial_power.to_vec();
    let mut objective = vec![power.iter().sum::<f64>()];
    let mut last = None;
    let mut converged = false;
    for _ in 0..options.max_inner {
        let surrogate = surrogate_coefficients(&power, bits, coeffs)?;
        let mut cpu = cpu_for(policy, &power, &surrogate, instance, &tbar)?;
        let update = |cpu: &[f64]| {
            update_p(cpu, &surrogate, coeffs, &instance.tasks, &instance.config, bits, &tbar, &power)
        };
        let current: f64 = power.iter().sum();
        let next = match (update(&cpu), policy) {
            (Ok(p), CpuPolicy::Optimized) if p.iter().sum::<f64>() > current * (1.0 + 1e-12) => {
                cpu = exact_cpu_split(&surrogate, coeffs, &instance.tasks, &instance.config, bits, &tbar, &power)?;
                update(&cpu)?
            }
            (Ok(p), _) => p,
            (Err(e), CpuPolicy::Optimized) if e.is_infeasible() => {
                cpu = exact_cpu_split(&surrogate, coeffs, &instance.tasks, &instance.config, bits, &tbar, &power)?;
                update(&cpu)?
            }
            (Err(e), _) => return Err(e),
        };
        let change = next
            .iter()
            .zip(&power)
            .map(|(a, b)| (a - b).abs() / b)
            .fold(0.0, f64::max);
        power = next;
        objective.push(power.iter().sum());
        last = Some((cpu, surrogate));
        if change <= options.tol_inner {
            converged = true;
            break;
        }
    }
    let (cpu, surrogate) = match last {
        Some(x) => x,
        None => {
            let surrogate = surrogate_coefficients(&power, bits, coeffs)?;
            (cpu_for(policy, &power, &surrogate, instance, &tbar)?, surrogate)
        }
    };
    Ok(InnerResult {
        power,
        cpu,
        surrogate,
        objective,
        converged,
    })
}

/// Whether every device meets its deadline at bit width `bits` with `(p, f)` and the combiner fixed.
pub fn bits_feasible(
    power: &[f64],
    cpu: &[f64],
    coeffs: &LinkCoefficients,
    instance: &Instance,
    bits: u32,
    tol: f64,
) -> bool {
    let qf = quantization_factor(bits);
    (0..instance.devices()).all(|k| {
        let t = &instance.tasks[k];
        let zeta = power[k] * coeffs.alpha[k][k] / coeffs.disturbance_scaled(k, power, qf);
        let used = transmission_latency(zeta, t.bits, instance.config.bandwidth)
            + instance.fronthaul(k, bits);
        let budget = t.deadline - computational_latency(t.cycles, cpu[k]);
        used <= budget + tol * t.deadline
    })
}

/// Largest bit width in `[1, bits_cap]` under which every deadline still holds.
pub fn line_search_varpi(
    power: &[f64],
    cpu: &[f64],
    coeffs: &LinkCoefficients,
    instance: &Instance,
    tol: f64,
) -> Result<u32, SolverError> {
    (1..=instance.config.bits_cap())
        .rev()
        .find(|&b| bits_feasible(power, cpu, coeffs, instance, b, tol))
        .ok_or(SolverError::Infeasible(Infeasibility::NoBitWidth))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveTrace {
    /// `1ᵀp` after each outer iteration; entry 0 is the starting point.
    pub objective: Vec<f64>,
    /// Bit width in force during each outer iteration; entry 0 is the start.
    pub bits: Vec<u32>,
    /// `1ᵀp` per inner iteration, one list per outer iteration.
    pub inner_objective: Vec<Vec<f64>>,
    pub inner_converged: Vec<bool>,
    pub converged: bool,
}

impl SolveTrace {
    pub fn outer_iterations(&self) -> usize {
        self.objective.len().saturating_sub(1)
    }

    pub fn inner_iterations(&self) -> usize {
        self.inner_objective.iter().map(|o| o.len().saturating_sub(1)).sum()
    }

    /// Largest relative increase between consecutive outer objectives.
    pub fn max_outer_increase(&self) -> f64 {
        self.objective
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0])
            .fold(0.0, f64::max)
    }

    /// CSV with columns `outer,inner,objective,varpi`.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["outer", "inner", "objective", "varpi"])?;
        w.write_record(["0", "0", &format!("{:e}", self.objective[0]), &self.bits[0].to_string()])?;
        for (o, inner) in self.inner_objective.iter().enumerate() {
            for (i, obj) in inner.iter().enumerate().skip(1) {
                w.write_record([
                    (o + 1).to_string(),
                    i.to_string(),
                    format!("{obj:e}"),
                    self.bits[o + 1].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub allocation: Allocation,
    /// `R × K` combiner used for the final inner loop.
    pub combiner: ComplexMatrix,
    pub coefficients: LinkCoefficients,
    pub surrogate: SurrogateState,
    pub sinr: Vec<f64>,
    pub latency: Vec<LatencyBreakdown>,
    pub trace: SolveTrace,
}

impl Solution {
    pub fn total_power(&self) -> f64 {
        self.allocation.total_power()
    }

    pub fn converged(&self) -> bool {
        self.trace.converged
    }
}

/// The full alternating optimizer. CPU and bit-width policies in `options`
/// turn it into either disjoint baseline.
pub fn alternating_optimize(
    instance: &Instance,
    options: &SolverOptions,
) -> Result<Solution, SolverError> {
    let cfg = &instance.config;
    let k_count = instance.devices();
    let mut power = options
        .initial_power
        .clone()
        .unwrap_or_else(|| vec![cfg.max_power / 2.0; k_count]);
    let mut bits = match options.bits {
        BitsPolicy::Fixed(b) => b,
        BitsPolicy::LineSearch => options.initial_bits.unwrap_or_else(|| cfg.bits_midpoint()),
    };
    if power.len() != k_count || power.iter().any(|p| !(*p > 0.0 && *p <= cfg.max_power)) {
        return Err(ConfigError::Invalid("initial power outside (0, P_max]".into()).into());
    }
    if !cfg.bits_allowed(bits) {
        return Err(ConfigError::Invalid(format!("bit width {bits} outside [1, {}]", cfg.bits_cap())).into());
    }
    let screen = check_feasibility(&power, bits, &instance.tasks, cfg, &instance.link, FronthaulForm::PerTask);
    if !screen.feasible {
        return infeasible(Infeasibility::Initial {
            transfer_ok: screen.transfer_ok,
            cpu_demand: screen.cpu_demand,
        });
    }

    let mut trace = SolveTrace {
        objective: vec![power.iter().sum()],
        bits: vec![bits],
        ..SolveTrace::default()
    };
    let mut state = None;
    for _ in 0..options.max_outer {
        let quant = quantization_variances(&power, &instance.link, cfg.noise_power, bits);
        let combiner = mmse_combiner(&power, &instance.link, cfg.noise_power, &quant)?;
        let coeffs = link_coefficients(&instance.link, &combiner, cfg.noise_power);
        let inner = sca_inner_loop(instance, &coeffs, bits, &power, &options.cpu, options)?;
        if let Some(device) = inner.power.iter().position(|p| *p > cfg.max_power) {
            return infeasible(Infeasibility::PowerCap {
                device,
                power: inner.power[device],
            });
        }
        let next_bits = match options.bits {
            BitsPolicy::LineSearch => line_search_varpi(
                &inner.power,
                &inner.cpu,
                &coeffs,
                instance,
                options.line_search_tol,
            )?,
            BitsPolicy::Fixed(b) => b,
        };
        let previous = *trace.objective.last().unwrap();
        let objective: f64 = inner.power.iter().sum();
        trace.objective.push(objective);
        trace.bits.push(bits);
        trace.inner_converged.push(inner.converged);
        trace.inner_objective.push(inner.objective.clone());
        power = inner.power.clone();
        let settled = (previous - objective).abs() <= options.tol_outer * previous && next_bits == bits;
        state = Some((inner, combiner, coeffs, bits));
        if settled {
            trace.converged = true;
            break;
        }
        bits = next_bits;
    }
    let (inner, combiner, coefficients, bits) =
        state.ok_or_else(|| ConfigError::Invalid("max_outer must be at least 1".into()))?;
    let allocation = Allocation {
        power: inner.power,
        cpu: inner.cpu,
        bits,
    };
    let gamma = coefficients.sinrs(&allocation.power, bits);
    let latency = latency_breakdown(&allocation, &instance.tasks, cfg, &gamma);
    Ok(Solution {
        allocation,
        combiner,
        coefficients,
        surrogate: inner.surrogate,
        sinr: gamma,
        latency,
        trace,
    })
}

/// Which optimizer variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Joint,
    FixedF,
    FixedVarpi,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Joint => "joint",
            Self::FixedF => "fixed-f",
            Self::FixedVarpi => "fixed-varpi",
        }
    }

    pub fn options(&self, config: &SystemConfig, base: &SolverOptions) -> SolverOptions {
        let mut o = base.clone();
        match self {
            Self::Joint => {}
            Self::FixedF => o.cpu = CpuPolicy::Proportional,
            Self::FixedVarpi => o.bits = BitsPolicy::Fixed(config.bits_half()),
        }
        o
    }
}

pub fn solve(instance: &Instance, method: Method, base: &SolverOptions) -> Result<Solution, SolverError> {
    alternating_optimize(instance, &method.options(&instance.config, base))
}

/// Outer loop with `f_k ∝ ω_k`.
pub fn baseline_fixed_f(instance: &Instance, base: &SolverOptions) -> Result<Solution, SolverError> {
    solve(instance, Method::FixedF, base)
}

/// Outer loop with the bit width pinned at `⌈C_F / (4 B_W R)⌉`.
pub fn baseline_fixed_varpi(
    instance: &Instance,
    base: &SolverOptions,
) -> Result<Solution, SolverError> {
    solve(instance, Method::FixedVarpi, base)
}

/// Constraint check recomputed from the filter, combiner and allocation alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub sinr: Vec<f64>,
    pub latency: Vec<f64>,
    pub cpu_total: f64,
    pub power_ok: bool,
    pub cpu_ok: bool,
    pub bits_ok: bool,
    pub latency_ok: bool,
    /// `max_k (ξ_k − 𝒯ᵗʰ_k) / 𝒯ᵗʰ_k`.
    pub worst_latency_excess: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.power_ok && self.cpu_ok && self.bits_ok && self.latency_ok
    }
}

pub fn audit(
    instance: &Instance,
    allocation: &Allocation,
    combiner: &ComplexMatrix,
    tol: f64,
) -> AuditReport {
    let cfg = &instance.config;
    let quant = quantization_variances(&allocation.power, &instance.link, cfg.noise_power, allocation.bits);
    let gamma = sinr(&allocation.power, &instance.link, combiner, cfg.noise_power, &quant);
    let latency: Vec<f64> = (0..instance.devices())
        .map(|k| {
            let t = &instance.tasks[k];
            transmission_latency(gamma[k], t.bits, cfg.bandwidth)
                + fronthaul_latency(
                    t.bits,
                    cfg.rf_chains,
                    allocation.bits,
                    cfg.fronthaul_capacity,
                    cfg.modulation_order,
                )
                + computational_latency(t.cycles, allocation.cpu[k])
        })
        .collect();
    let worst_latency_excess = latency
        .iter()
        .zip(&instance.tasks)
        .map(|(l, t)| (l - t.deadline) / t.deadline)
        .fold(f64::NEG_INFINITY, f64::max);
    let cpu_total: f64 = allocation.cpu.iter().sum();
    AuditReport {
        power_ok: allocation
            .power
            .iter()
            .all(|p| *p >= 0.0 && *p <= cfg.max_power * (1.0 + tol)),
        cpu_ok: allocation.cpu.iter().all(|f| *f > 0.0) && cpu_total <= cfg.cpu_budget * (1.0 + tol),
        bits_ok: cfg.bits_allowed(allocation.bits),
        latency_ok: worst_latency_excess <= tol,
        sinr: gamma,
        latency,
        cpu_total,
        worst_latency_excess,
    }
}

pub fn audit_solution(instance: &Instance, solution: &Solution, tol: f64) -> AuditReport {
    audit(instance, &solution.allocation, &solution.combiner, tol)
}

/// Stationarity residuals of a converged solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `|Σf − F_T| / F_T`.
    pub cpu_residual: f64,
    /// `|ξ_k − 𝒯ᵗʰ_k| / 𝒯ᵗʰ_k` per device.
    pub latency_residual: Vec<f64>,
    /// `‖p − I(p)‖ / ‖p‖`.
    pub fixed_point_residual: f64,
}

pub fn kkt_report(instance: &Instance, solution: &Solution) -> Result<KktReport, SolverError> {
    let cfg = &instance.config;
    let a = &solution.allocation;
    let cpu_total: f64 = a.cpu.iter().sum();
    let latency_residual = solution
        .latency
        .iter()
        .zip(&instance.tasks)
        .map(|(l, t)| (l.total() - t.deadline).abs() / t.deadline)
        .collect();
    let map = InterferenceMap::new(
        &solution.coefficients,
        &solution.surrogate,
        &a.cpu,
        instance,
        a.bits,
    )?;
    let image = map.apply(&a.power);
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let fixed_point_residual = norm(&mut a.power.iter().zip(&image).map(|(p, i)| p - i))
        / norm(&mut a.power.iter().copied());
    Ok(KktReport {
        cpu_residual: (cpu_total - cfg.cpu_budget).abs() / cfg.cpu_budget,
        latency_residual,
        fixed_point_residual,
    })
}

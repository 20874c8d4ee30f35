//! Radio-head spatial filtering, fronthaul quantization statistics and the
//! baseband combiner.
//!
//! The radio head compresses the `N` antenna streams down to `R = K` chains with
//! a filter `V` (`R × N`). The hybrid design approximates the matched filter
//! with a phase-only analog stage `V_A` followed by a small digital stage `V_D`,
//! `V = V_Dᴴ V_Aᴴ`. Each chain output is uniformly quantized with `ϖ` bits per
//! I/Q branch; only the error variance is modelled. The baseband unit then
//! applies one combiner column `w_k` per device.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::numerics::{hermitian_solve, pseudo_inverse, ComplexMatrix, NumericsError, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Hybrid,
    FullyDigital,
}

/// The radio-head filter. `analog`/`digital` are only present for hybrid designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFilter {
    pub kind: FilterKind,
    pub analog: Option<ComplexMatrix>,
    pub digital: Option<ComplexMatrix>,
    /// Composite `R × N` filter; row `r` is `v_rᵀ`.
    pub v: ComplexMatrix,
}

impl SpatialFilter {
    pub fn chains(&self) -> usize {
        self.v.rows()
    }

    /// Builds the filter for `channel` in the requested architecture.
    pub fn design(kind: FilterKind, channel: &ChannelRealization) -> Result<Self, NumericsError> {
        let v_fd = fdsf_matched_filter(channel);
        match kind {
            FilterKind::Hybrid => hsf_decompose(&v_fd),
            FilterKind::FullyDigital => Ok(Self {
                kind,
                analog: None,
                digital: None,
                v: v_fd.conj_transpose(),
            }),
        }
    }
}

/// Per-chain quantization error variances `ϱ_r` for a bit width `ϖ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationModel {
    pub bits: u32,
    /// `+inf` for every chain when `bits == 0`.
    pub variances: Vec<f64>,
}

impl QuantizationModel {
    pub fn is_saturated(&self) -> bool {
        self.variances.iter().any(|v| v.is_infinite())
    }
}

/// `2^{−2ϖ}`, the quantizer's variance scaling; infinite for zero bits.
pub fn quantization_factor(bits: u32) -> f64 {
    if bits == 0 {
        f64::INFINITY
    } else {
        0.25f64.powi(bits as i32)
    }
}

/// Quantities of a filtered channel that every downstream computation needs.
///
/// Computing `V h_j` once removes `N` from all later work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredLink {
    /// `R × K`; column `j` is `V h_j`, entry `(r, j)` is `v_rᵀ h_j`.
    pub gains: ComplexMatrix,
    /// `V Vᴴ` (`R × R`), the covariance of the filtered unit-variance noise.
    pub gram: ComplexMatrix,
    /// `‖v_r‖²` per chain.
    pub row_norms: Vec<f64>,
}

impl FilteredLink {
    pub fn new(v: &ComplexMatrix, channel: &ChannelRealization) -> Self {
        let gains = effective_channel(v, channel);
        let gram = v * &v.conj_transpose();
        let row_norms = (0..gram.rows()).map(|r| gram[(r, r)].re).collect();
        Self {
            gains,
            gram,
            row_norms,
        }
    }

    pub fn chains(&self) -> usize {
        self.gains.rows()
    }

    pub fn devices(&self) -> usize {
        self.gains.cols()
    }

    /// `|G_kk|`, each device's own post-filter gain magnitude.
    pub fn own_gains(&self) -> Vec<f64> {
        (0..self.devices().min(self.chains()))
            .map(|k| self.gains[(k, k)].norm())
            .collect()
    }
}

/// Everything the radio head and baseband unit hold after one design pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendDesign {
    pub filter: SpatialFilter,
    /// `R × K`; column `k` is `w_k`.
    pub combiner: ComplexMatrix,
    pub quantization: QuantizationModel,
}

/// Matched-filter fully-digital design `V_FD = Hᴴ = [h_1, …, h_K]` (`N × K`).
pub fn fdsf_matched_filter(channel: &ChannelRealization) -> ComplexMatrix {
    channel.stacked().conj_transpose()
}

/// Splits `V_FD` into a unit-modulus analog stage and a least-squares digital stage.
///
/// Zero-magnitude entries have no phase; they get phase 0 and a warning.
pub fn hsf_decompose(v_fd: &ComplexMatrix) -> Result<SpatialFilter, NumericsError> {
    let analog = v_fd.map(|z| {
        if z.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            C64::from_polar(1.0, z.arg())
        }
    });
    let zero_entries = v_fd.as_slice().iter().filter(|z| z.norm() == 0.0).count();
    if zero_entries > 0 {
        log::warn!("{zero_entries} zero-magnitude filter entries given analog phase 0");
    }
    let digital = &pseudo_inverse(&analog)? * v_fd;
    let v = &digital.conj_transpose() * &analog.conj_transpose();
    Ok(SpatialFilter {
        kind: FilterKind::Hybrid,
        analog: Some(analog),
        digital: Some(digital),
        v,
    })
}

/// `G = V [h_1, …, h_K]`; `G_{k,j}` is the gain from device `j` into output `k`.
pub fn effective_channel(v: &ComplexMatrix, channel: &ChannelRealization) -> ComplexMatrix {
    v * &channel.columns
}

pub fn quantization_variances(
    power: &[f64],
    link: &FilteredLink,
    noise_power: f64,
    bits: u32,
) -> QuantizationModel {
    let factor = quantization_factor(bits);
    let variances = (0..link.chains())
        .map(|r| {
            if factor.is_infinite() {
                return f64::INFINITY;
            }
            3.0 * chain_power(power, link, noise_power, r) * factor
        })
        .collect();
    QuantizationModel { bits, variances }
}

/// Received power at chain `r`: `Σ_k p_k |v_rᵀh_k|² + σ²‖v_r‖²`.
pub fn chain_power(power: &[f64], link: &FilteredLink, noise_power: f64, r: usize) -> f64 {
    let signal: f64 = power
        .iter()
        .enumerate()
        .map(|(k, &p)| p * link.gains[(r, k)].norm_sqr())
        .sum();
    signal + noise_power * link.row_norms[r]
}

/// Covariance of the quantized chain outputs:
/// `Σ_j p_j (V h_j)(V h_j)ᴴ + σ² V Vᴴ + Q`.
pub fn received_covariance(
    power: &[f64],
    link: &FilteredLink,
    noise_power: f64,
    quant: &QuantizationModel,
) -> ComplexMatrix {
    let r = link.chains();
    let g = &link.gains;
    ComplexMatrix::from_fn(r, r, |a, b| {
        let mut s: C64 = power
            .iter()
            .enumerate()
            .map(|(j, &p)| g[(a, j)] * g[(b, j)].conj() * p)
            .sum();
        s += link.gram[(a, b)] * noise_power;
        if a == b {
            s += quant.variances[a];
        }
        s
    })
}

/// MMSE combiner `w_k = C⁻¹ V h_k`, with `C` from [`received_covariance`].
///
/// With zero quantization bits the covariance is unbounded and the combiner is zero.
pub fn mmse_combiner(
    power: &[f64],
    link: &FilteredLink,
    noise_power: f64,
    quant: &QuantizationModel,
) -> Result<ComplexMatrix, NumericsError> {
    if quant.is_saturated() {
        return Ok(ComplexMatrix::zeros(link.chains(), link.devices()));
    }
    let cov = received_covariance(power, link, noise_power, quant);
    hermitian_solve(&cov, &link.gains)
}

/// Per-chain matched combiner `w_k = V h_k`.
pub fn matched_combiner(link: &FilteredLink) -> ComplexMatrix {
    link.gains.clone()
}

fn quad_form(m: &ComplexMatrix, w: &[C64]) -> f64 {
    let mw = m.mul_vec(w);
    w.iter().zip(&mw).map(|(a, b)| a.conj() * b).sum::<C64>().re
}

/// Post-combining SINR of every device.
pub fn sinr(
    power: &[f64],
    link: &FilteredLink,
    combiner: &ComplexMatrix,
    noise_power: f64,
    quant: &QuantizationModel,
) -> Vec<f64> {
    let k_count = link.devices();
    if quant.is_saturated() {
        return vec![0.0; k_count];
    }
    (0..k_count)
        .map(|k| {
            let w = combiner.column(k);
            let gain = |j: usize| -> f64 {
                w.iter()
                    .enumerate()
                    .map(|(r, wr)| wr.conj() * link.gains[(r, j)])
                    .sum::<C64>()
                    .norm_sqr()
            };
            let signal = power[k] * gain(k);
            if signal == 0.0 {
                return 0.0;
            }
            let interference: f64 = (0..k_count)
                .filter(|&j| j != k)
                .map(|j| power[j] * gain(j))
                .sum();
            let noise = noise_power * quad_form(&link.gram, &w);
            let quantization: f64 = w
                .iter()
                .zip(&quant.variances)
                .map(|(wr, v)| v * wr.norm_sqr())
                .sum();
            signal / (interference + noise + quantization)
        })
        .collect()
}

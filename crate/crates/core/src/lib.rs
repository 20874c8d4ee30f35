//! Joint transmit-power, server-CPU and fronthaul-quantization allocation for
//! IoT computation offloading through a wall-mounted extra-large MIMO radio
//! head connected to a baseband unit over a capacity-limited fronthaul.
//!
//! Modules, bottom-up:
//! - [`numerics`]: complex matrices, Cholesky solves, pseudo-inverse, seeded sampling
//! - [`channel`]: room geometry and Rician channel draws
//! - [`frontend`]: hybrid spatial filter, quantization statistics, MMSE combiner, SINR
//! - [`latency`]: transmission/fronthaul/compute latency and feasibility screening
//! - [`solver`]: the alternating optimizer and its disjoint baselines
//! - [`learner`]: an MLP trained to imitate the optimizer
//! - [`harness`]: scenario sampling, experiment sweeps and result files

pub mod channel;
pub mod frontend;
pub mod harness;
pub mod latency;
pub mod learner;
pub mod numerics;
pub mod solver;

pub use numerics::{ComplexMatrix, SimRng, C64};

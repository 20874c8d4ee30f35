//! Indoor wall-array geometry and per-antenna Rician channels.
//!
//! Antennas sit on the `y = 0` wall of a rectangular room; devices are spread
//! uniformly through the room interior. Each antenna/device pair gets its own
//! distance, shadowing draw and distance-dependent Rician factor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::numerics::{db_to_linear, sample_lognormal_shadow, ComplexMatrix, SimRng, C64};

const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Room {
    pub fn diagonal(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl Default for Room {
    fn default() -> Self {
        Self {
            x: 10.0,
            y: 10.0,
            z: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub room: Room,
    pub antennas: usize,
    pub devices: usize,
    /// Smallest allowed device distance from the antenna wall, in meters.
    pub min_wall_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub room: Room,
    /// `(x, z)` of each antenna on the `y = 0` wall.
    pub antenna_positions: Vec<[f64; 2]>,
    /// `(x, y, z)` of each device.
    pub device_positions: Vec<[f64; 3]>,
}

impl Geometry {
    pub fn antennas(&self) -> usize {
        self.antenna_positions.len()
    }

    pub fn devices(&self) -> usize {
        self.device_positions.len()
    }

    pub fn distance(&self, antenna: usize, device: usize) -> f64 {
        let [ax, az] = self.antenna_positions[antenna];
        let [x, y, z] = self.device_positions[device];
        ((x - ax).powi(2) + y * y + (z - az).powi(2)).sqrt()
    }

    pub fn is_valid(&self) -> bool {
        let r = self.room;
        self.antenna_positions
            .iter()
            .all(|&[x, z]| (0.0..=r.x).contains(&x) && (0.0..=r.z).contains(&z))
            && self.device_positions.iter().all(|&[x, y, z]| {
                (0.0..=r.x).contains(&x) && y > 0.0 && y <= r.y && (0.0..=r.z).contains(&z)
            })
    }
}

/// Rician factor as a function of antenna–device distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RicianProfile {
    /// `κ[dB] = intercept_db + slope_db_per_m · d`.
    DistanceLinearDb { intercept_db: f64, slope_db_per_m: f64 },
    /// Same linear-scale κ for every pair; `0` is Rayleigh, `inf` is pure LOS.
    Fixed { linear: f64 },
}

impl RicianProfile {
    pub fn kappa_db(&self, distance: f64) -> f64 {
        match *self {
            Self::DistanceLinearDb {
                intercept_db,
                slope_db_per_m,
            } => intercept_db + slope_db_per_m * distance,
            Self::Fixed { linear } => 10.0 * linear.log10(),
        }
    }

    pub fn kappa_linear(&self, distance: f64) -> f64 {
        match *self {
            Self::Fixed { linear } => linear,
            _ => db_to_linear(self.kappa_db(distance)),
        }
    }
}

/// Returns the LOS and NLOS amplitude weights `(√(κ/(κ+1)), √(1/(κ+1)))`.
pub fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        return (1.0, 0.0);
    }
    ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    pub wavelength: f64,
    pub pathloss_exponent: f64,
    pub shadow_sigma_db: f64,
    pub rician: RicianProfile,
}

impl FadingParams {
    pub fn wavelength_for_carrier(carrier_hz: f64) -> f64 {
        SPEED_OF_LIGHT / carrier_hz
    }
}

impl Default for FadingParams {
    /// 1.5 GHz carrier, exponent 3.7, 6 dB shadowing, κ = 13 − 0.03·d dB.
    fn default() -> Self {
        Self {
            wavelength: Self::wavelength_for_carrier(1.5e9),
            pathloss_exponent: 3.7,
            shadow_sigma_db: 6.0,
            rician: RicianProfile::DistanceLinearDb {
                intercept_db: 13.0,
                slope_db_per_m: -0.03,
            },
        }
    }
}

/// One channel draw: column `k` of `columns` is the device-`k` channel `h_k ∈ ℂᴺ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub columns: ComplexMatrix,
    /// `distances[k][n]` in meters.
    pub distances: Vec<Vec<f64>>,
}

impl ChannelRealization {
    pub fn antennas(&self) -> usize {
        self.columns.rows()
    }

    pub fn devices(&self) -> usize {
        self.columns.cols()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.columns.column(k)
    }

    /// The `K × N` stack whose row `k` is `h_kᴴ`; its conjugate transpose is the
    /// matched filter `[h_1, …, h_K]`.
    pub fn stacked(&self) -> ComplexMatrix {
        self.columns.conj_transpose()
    }
}

pub fn place_scene(rng: &mut SimRng, config: &SceneConfig) -> Geometry {
    let room = config.room;
    let y_min = config.min_wall_distance.min(room.y);
    let antenna_positions = (0..config.antennas)
        .map(|_| [rng.uniform(0.0, room.x), rng.uniform(0.0, room.z)])
        .collect();
    let device_positions = (0..config.devices)
        .map(|_| {
            [
                rng.uniform(0.0, room.x),
                rng.uniform(y_min, room.y),
                rng.uniform(0.0, room.z),
            ]
        })
        .collect();
    Geometry {
        room,
        antenna_positions,
        device_positions,
    }
}

pub fn los_component(geometry: &Geometry, fading: &FadingParams, k: usize) -> Vec<C64> {
    (0..geometry.antennas())
        .map(|n| {
            let d = geometry.distance(n, k);
            let attenuation = 1.0 / (4.0 * PI * d * d).sqrt();
            C64::from_polar(attenuation, -2.0 * PI * d / fading.wavelength)
        })
        .collect()
}

pub fn nlos_component(
    rng: &mut SimRng,
    geometry: &Geometry,
    fading: &FadingParams,
    k: usize,
) -> Vec<C64> {
    (0..geometry.antennas())
        .map(|n| {
            let d = geometry.distance(n, k);
            let shadow = sample_lognormal_shadow(rng, fading.shadow_sigma_db);
            let g = C64::new(rng.standard_normal(), rng.standard_normal()) / 2f64.sqrt();
            g * (d.powf(-fading.pathloss_exponent) * shadow).sqrt()
        })
        .collect()
}

pub fn generate_channel(
    rng: &mut SimRng,
    geometry: &Geometry,
    fading: &FadingParams,
) -> ChannelRealization {
    let n_ant = geometry.antennas();
    let mut columns = Vec::with_capacity(geometry.devices());
    let mut distances = Vec::with_capacity(geometry.devices());
    for k in 0..geometry.devices() {
        let los = los_component(geometry, fading, k);
        let nlos = nlos_component(rng, geometry, fading, k);
        let dist: Vec<f64> = (0..n_ant).map(|n| geometry.distance(n, k)).collect();
        let h = dist
            .iter()
            .zip(los.iter().zip(&nlos))
            .map(|(&d, (&l, &s))| {
                let (wl, wn) = rician_weights(fading.rician.kappa_linear(d));
                l * wl + s * wn
            })
            .collect();
        columns.push(h);
        distances.push(dist);
    }
    ChannelRealization {
        columns: ComplexMatrix::from_columns(&columns),
        distances,
    }
}

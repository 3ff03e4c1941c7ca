//! System configuration, seeded flat-fading channel generation, and the
//! mutable optimization state (beamformers and powers).
//!
//! Randomness contract: all draws come from a ChaCha8 stream seeded with the
//! caller's `u64` seed, with complex Gaussians produced by an explicit
//! Box-Muller transform, so any output is reproducible from (config, seed).

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::numerics::{canonicalize_phase, CMat, CVec};

/// Static description of the downlink: a base station with `m` antennas
/// serving `k` users, `l` substreams each, under per-substream SINR targets.
///
/// `gamma` and `w` are flat length-K·L vectors in user-major, substream-minor
/// order: flat index m (1-based) maps to user ⌈m/L⌉, substream m−(⌈m/L⌉−1)·L.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// Transmit antennas at the base station.
    pub m: usize,
    /// Number of users.
    pub k: usize,
    /// Receive antennas per user, length `k`.
    pub n: Vec<usize>,
    /// Substreams per user (uniform across users).
    pub l: usize,
    /// Per-substream SINR targets, linear scale, length `k*l`.
    pub gamma: Vec<f64>,
    /// Per-substream weights, length `k*l`, strictly positive.
    pub w: Vec<f64>,
    /// Noise variance at every receive antenna.
    pub sigma2: f64,
    /// Solver stopping threshold on the summed beamformer step size.
    pub epsilon: f64,
    /// Solver iteration cap.
    pub max_iters: usize,
}

#[derive(Debug, Error, PartialEq)]
#[error("{field}: {rule}")]
pub struct ConfigViolation {
    pub field: &'static str,
    pub rule: String,
}

impl SystemConfig {
    /// Total number of substreams K·L.
    pub fn kl(&self) -> usize {
        self.k * self.l
    }

    /// Flat substream index for (user, substream), both 0-based.
    pub fn flat_index(&self, user: usize, sub: usize) -> usize {
        user * self.l + sub
    }

    /// Inverse of [`flat_index`](Self::flat_index): (user, substream), 0-based.
    pub fn user_substream(&self, flat: usize) -> (usize, usize) {
        (flat / self.l, flat % self.l)
    }
}

/// Diagnostic check of every [`SystemConfig`] invariant; empty means valid.
pub fn validate_config(config: &SystemConfig) -> Vec<ConfigViolation> {
    let mut v = Vec::new();
    let mut push = |field, rule: String| v.push(ConfigViolation { field, rule });
    if config.m < 1 {
        push("M", "M >= 1".into());
    }
    if config.k < 1 {
        push("K", "K >= 1".into());
    }
    if config.l < 1 {
        push("L", "L >= 1".into());
    }
    if config.n.len() != config.k {
        push("N", format!("N must have K={} entries", config.k));
    }
    for (i, &nk) in config.n.iter().enumerate() {
        if nk < config.l {
            push("N", format!("N_{} >= L (got {} < {})", i + 1, nk, config.l));
        }
    }
    if config.gamma.len() != config.kl() {
        push("gamma", format!("gamma must have K*L={} entries", config.kl()));
    }
    if config.gamma.iter().any(|&g| !(g > 0.0)) {
        push("gamma", "gamma > 0 elementwise".into());
    }
    if config.w.len() != config.kl() {
        push("w", format!("w must have K*L={} entries", config.kl()));
    }
    if config.w.iter().any(|&x| !(x > 0.0)) {
        push("w", "w > 0 elementwise".into());
    }
    if !(config.sigma2 > 0.0) {
        push("sigma2", "sigma2 > 0".into());
    }
    if !(config.epsilon > 0.0) {
        push("epsilon", "epsilon > 0".into());
    }
    if config.max_iters < 1 {
        push("max_iters", "max_iters >= 1".into());
    }
    v
}

/// The K downlink channel matrices H_k, each N_k × M.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CMat>,
}

/// One standard-normal pair from two uniforms via Box-Muller.
fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // u1 in (0, 1] so the log is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// One circularly symmetric complex Gaussian with unit variance:
/// (g₁ + i·g₂)/√2 with g₁, g₂ independent standard normals.
pub(crate) fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let (g1, g2) = normal_pair(rng);
    Complex64::new(g1, g2) / 2.0f64.sqrt()
}

/// Draw i.i.d. unit-variance Rayleigh-fading channels, deterministic per
/// (config, seed). Entries are filled user by user, row-major.
pub fn draw_channels(config: &SystemConfig, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config
        .n
        .iter()
        .map(|&nk| {
            let mut hk = CMat::zeros(nk, config.m);
            for r in 0..nk {
                for c in 0..config.m {
                    hk[(r, c)] = complex_gaussian(&mut rng);
                }
            }
            hk
        })
        .collect();
    ChannelSet { h }
}

/// Receive filters, transmit filters, and the two power vectors of one
/// solver run. Powers are flat K·L vectors in user-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerState {
    /// Receive filters A_k, each N_k × L, unit-norm canonical-phase columns.
    pub a: Vec<CMat>,
    /// Transmit filters B_k, each M × L, unit-norm canonical-phase columns.
    pub b: Vec<CMat>,
    /// Downlink powers.
    pub p: DVector<f64>,
    /// Virtual-uplink powers.
    pub lambda: DVector<f64>,
}

/// Random starting point: B columns complex Gaussian then column-normalized
/// and phase-canonicalized, p uniform on (0, 1], A and lambda zeroed (they
/// are first computed inside the solver loop). Deterministic per seed.
pub fn init_state(config: &SystemConfig, seed: u64) -> BeamformerState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = (0..config.k)
        .map(|_| {
            let mut bk = CMat::zeros(config.m, config.l);
            for j in 0..config.l {
                let mut col = CVec::from_fn(config.m, |_, _| complex_gaussian(&mut rng));
                let norm = col.norm();
                col.unscale_mut(norm);
                canonicalize_phase(&mut col);
                bk.set_column(j, &col);
            }
            bk
        })
        .collect();
    let p = DVector::from_fn(config.kl(), |_, _| 1.0 - rng.gen::<f64>());
    let a = config.n.iter().map(|&nk| CMat::zeros(nk, config.l)).collect();
    let lambda = DVector::zeros(config.kl());
    BeamformerState { a, b, p, lambda }
}

/// JSON form of [`SystemConfig`]. `gamma` is linear, `gamma_db` is converted
/// as γ = 10^(γ_dB/10); scalar entries broadcast to all K·L substreams and a
/// scalar `N` to all users.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
struct ConfigFile {
    m: usize,
    k: usize,
    n: ScalarOrVec<usize>,
    l: usize,
    #[serde(default, rename = "gamma")]
    gamma: Option<ScalarOrVec<f64>>,
    #[serde(default, rename = "gamma_db")]
    gamma_db: Option<ScalarOrVec<f64>>,
    #[serde(rename = "w")]
    w: ScalarOrVec<f64>,
    #[serde(rename = "sigma2")]
    sigma2: f64,
    #[serde(default, rename = "epsilon")]
    epsilon: Option<f64>,
    #[serde(default, rename = "max_iters")]
    max_iters: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrVec<T> {
    Scalar(T),
    Vec(Vec<T>),
}

impl<T: Clone> ScalarOrVec<T> {
    fn expand(&self, len: usize) -> Vec<T> {
        match self {
            ScalarOrVec::Scalar(v) => vec![v.clone(); len],
            ScalarOrVec::Vec(v) => v.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config must set exactly one of gamma, gamma_db")]
    GammaSpec,
    #[error("invalid config: {0:?}")]
    Invalid(Vec<ConfigViolation>),
}

/// Parse a JSON config document, applying defaults ε = 1e-4, max_iters = 500.
pub fn config_from_json(text: &str) -> Result<SystemConfig, ConfigError> {
    let f: ConfigFile = serde_json::from_str(text)?;
    let kl = f.k * f.l;
    let gamma = match (&f.gamma, &f.gamma_db) {
        (Some(g), None) => g.expand(kl),
        (None, Some(gdb)) => gdb.expand(kl).iter().map(|&db| db_to_linear(db)).collect(),
        _ => return Err(ConfigError::GammaSpec),
    };
    let config = SystemConfig {
        m: f.m,
        k: f.k,
        n: f.n.expand(f.k),
        l: f.l,
        gamma,
        w: f.w.expand(kl),
        sigma2: f.sigma2,
        epsilon: f.epsilon.unwrap_or(1e-4),
        max_iters: f.max_iters.unwrap_or(500),
    };
    let violations = validate_config(&config);
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations));
    }
    Ok(config)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Baseline benchmark config: M = 8 antennas, 2 receive antennas and 2
/// substreams per user.
pub fn baseline_config(k: usize, gamma_db: f64, w: Vec<f64>) -> SystemConfig {
    SystemConfig {
        m: 8,
        k,
        n: vec![2; k],
        l: 2,
        gamma: vec![db_to_linear(gamma_db); 2 * k],
        w,
        sigma2: 1.0,
        epsilon: 1e-4,
        max_iters: 500,
    }
}

//! Link-level verification of a converged design: push QPSK symbols through
//! the downlink signal model with the solved beamformers and powers, and
//! measure the per-substream SINR actually delivered.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{complex_gaussian, BeamformerState, ChannelSet, SystemConfig};
use crate::numerics::CVec;
use crate::solver::{SolveReport, SolveStatus};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("link verification requires a converged solve (got {0})")]
    NotConverged(crate::solver::SolveStatus),
}

#[derive(Debug, Clone, Copy)]
pub struct LinkOptions {
    /// Number of transmitted symbol vectors.
    pub n_sym: usize,
    /// Seed for the symbol and noise streams.
    pub seed: u64,
    /// Override of the link noise variance; test hook, `None` uses σ² from
    /// the config.
    pub noise_sigma2: Option<f64>,
}

impl Default for LinkOptions {
    fn default() -> Self {
        Self {
            n_sym: 100_000,
            seed: 0,
            noise_sigma2: None,
        }
    }
}

/// Measured statistics for one substream.
#[derive(Debug, Clone, Copy)]
pub struct LinkStat {
    pub user: usize,
    pub substream: usize,
    /// Empirical post-SINR, linear.
    pub sinr: f64,
    pub sinr_db: f64,
    /// Deviation from the configured target, in dB.
    pub deviation_db: f64,
    /// Measured symbol error rate.
    pub ser: f64,
    /// AWGN QPSK reference 2Q(√γ)(1 − Q(√γ)/2) at the target SINR.
    pub ser_reference: f64,
}

/// Gray-labeled unit-energy QPSK point from two bits.
fn qpsk_symbol(rng: &mut ChaCha8Rng) -> Complex64 {
    let re = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let im = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    Complex64::new(re, im) / 2.0f64.sqrt()
}

fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / 2.0f64.sqrt())
}

// Abramowitz & Stegun 7.1.26 rational approximation, |error| < 1.5e-7.
fn erfc(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    if sign >= 0.0 {
        1.0 - erf
    } else {
        1.0 + erf
    }
}

pub fn ser_reference(gamma: f64) -> f64 {
    let q = q_function(gamma.sqrt());
    2.0 * q * (1.0 - q / 2.0)
}

/// Transmit `n_sym` QPSK vectors through the downlink with the converged
/// state and estimate per-substream SINR from the known symbols.
///
/// The estimator splits each output into the coherent part g·x, with g the
/// sample-mean diagonal gain, and a residual carrying interference plus
/// noise; the reported SINR is |g|² over the residual variance.
pub fn verify_link(
    report: &SolveReport,
    channels: &ChannelSet,
    config: &SystemConfig,
    options: &LinkOptions,
) -> Result<Vec<LinkStat>, LinkError> {
    if report.status != SolveStatus::Converged {
        return Err(LinkError::NotConverged(report.status));
    }
    let state: &BeamformerState = &report.state;
    let kl = config.kl();
    let sigma = options.noise_sigma2.unwrap_or(config.sigma2).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let mut sum_yx = vec![Complex64::new(0.0, 0.0); kl];
    let mut sum_y2 = vec![0.0f64; kl];
    let mut ys = vec![Vec::with_capacity(options.n_sym); kl];
    let mut xs = vec![Vec::with_capacity(options.n_sym); kl];

    let sqrt_p: Vec<f64> = state.p.iter().map(|&p| p.sqrt()).collect();

    for _ in 0..options.n_sym {
        let x: Vec<Complex64> = (0..kl).map(|_| qpsk_symbol(&mut rng)).collect();

        // s = Σ_i B_i diag(√p_i) x_i
        let mut s = CVec::zeros(config.m);
        for i in 0..config.k {
            for j in 0..config.l {
                let flat = config.flat_index(i, j);
                s += state.b[i].column(j).scale(sqrt_p[flat]) * x[flat];
            }
        }

        for k in 0..config.k {
            let mut received = &channels.h[k] * &s;
            for r in received.iter_mut() {
                *r += complex_gaussian(&mut rng) * sigma;
            }
            let y = state.a[k].adjoint() * received;
            for j in 0..config.l {
                let flat = config.flat_index(k, j);
                sum_yx[flat] += y[j] * x[flat].conj();
                sum_y2[flat] += y[j].norm_sqr();
                ys[flat].push(y[j]);
                xs[flat].push(x[flat]);
            }
        }
    }

    let n = options.n_sym as f64;
    let mut stats = Vec::with_capacity(kl);
    for flat in 0..kl {
        let (k, j) = config.user_substream(flat);
        // x has unit energy, so E[y x*] estimates the diagonal gain directly.
        let g = sum_yx[flat] / n;
        let resid = (sum_y2[flat] / n - g.norm_sqr()).max(f64::MIN_POSITIVE);
        let sinr = g.norm_sqr() / resid;

        let mut errors = 0usize;
        for (y, x) in ys[flat].iter().zip(&xs[flat]) {
            let z = y / g;
            if z.re.signum() != x.re.signum() || z.im.signum() != x.im.signum() {
                errors += 1;
            }
        }

        let gamma = config.gamma[flat];
        stats.push(LinkStat {
            user: k,
            substream: j,
            sinr,
            sinr_db: crate::model::linear_to_db(sinr),
            deviation_db: crate::model::linear_to_db(sinr) - crate::model::linear_to_db(gamma),
            ser: errors as f64 / n,
            ser_reference: ser_reference(gamma),
        });
    }
    Ok(stats)
}

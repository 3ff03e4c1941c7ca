//! Post-SINR evaluation for both link directions and assembly of the linear
//! constraint system (φ, C, d) that the power solves act on.
//!
//! The link-gain form drives constraint assembly; the covariance form of the
//! downlink SINR is computed independently so the two routes can be checked
//! against each other.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{BeamformerState, ChannelSet, SystemConfig};
use crate::numerics::CMat;

#[derive(Debug, Error)]
pub enum SinrError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("interference-plus-noise quadratic form is not positive for substream ({k},{j})")]
    DegenerateDenominator { k: usize, j: usize },
    #[error("direct link gain is zero for substream ({k},{j})")]
    DegenerateGain { k: usize, j: usize },
}

/// Link power gains φ[(k,j)][(m,n)] = |a_{k,j}ᴴ H_k b_{m,n}|², stored as a
/// KL×KL matrix with receive substreams on rows and transmit substreams on
/// columns (user-major flat order on both axes).
#[derive(Debug, Clone)]
pub struct GainTensor {
    pub phi: DMatrix<f64>,
}

/// The linear form of the SINR constraints: Cp + d ≤ 0.
///
/// Row (k,j) of C carries −φ_direct/γ on the diagonal and the cross gains
/// elsewhere; d = σ²·(‖a_{1,1}‖²,…,‖a_{K,L}‖²)ᵀ.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
}

fn check_shapes(
    state: &BeamformerState,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<(), SinrError> {
    if channels.h.len() != config.k || state.a.len() != config.k || state.b.len() != config.k {
        return Err(SinrError::DimensionMismatch(format!(
            "expected {} users, got {} channels / {} A / {} B",
            config.k,
            channels.h.len(),
            state.a.len(),
            state.b.len()
        )));
    }
    for k in 0..config.k {
        let (nk, m) = (config.n[k], config.m);
        if channels.h[k].shape() != (nk, m)
            || state.a[k].shape() != (nk, config.l)
            || state.b[k].shape() != (m, config.l)
        {
            return Err(SinrError::DimensionMismatch(format!("user {k} shapes")));
        }
    }
    if state.p.len() != config.kl() || state.lambda.len() != config.kl() {
        return Err(SinrError::DimensionMismatch("power vector length".into()));
    }
    Ok(())
}

/// Compute all link power gains |a_{k,j}ᴴ H_k b_{m,n}|². The receiving
/// user's channel H_k applies to every transmit column.
pub fn gain_tensor(
    state: &BeamformerState,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<GainTensor, SinrError> {
    check_shapes(state, channels, config)?;
    let kl = config.kl();
    let mut phi = DMatrix::zeros(kl, kl);
    for row in 0..kl {
        let (k, j) = config.user_substream(row);
        // a_{k,j}ᴴ H_k, reused across all transmit columns.
        let at_h = state.a[k].column(j).adjoint() * &channels.h[k];
        for col in 0..kl {
            let (m, n) = config.user_substream(col);
            let g = (&at_h * state.b[m].column(n))[(0, 0)];
            phi[(row, col)] = g.norm_sqr();
        }
    }
    Ok(GainTensor { phi })
}

/// Downlink post-SINR of every substream, covariance form: for each (k,j)
/// the quotient aᴴR^s a over aᴴR^{I+n}a with the signal, self-interference,
/// multiuser-interference, and noise covariances built explicitly.
pub fn sinr_downlink(
    state: &BeamformerState,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<DMatrix<f64>, SinrError> {
    check_shapes(state, channels, config)?;
    let mut out = DMatrix::zeros(config.k, config.l);
    for k in 0..config.k {
        let hk = &channels.h[k];
        let nk = config.n[k];
        for j in 0..config.l {
            let p_kj = state.p[config.flat_index(k, j)];
            let hb = hk * state.b[k].column(j);
            let r_s = (&hb * hb.adjoint()).scale(p_kj);

            let mut r_in = CMat::identity(nk, nk).scale(config.sigma2);
            for i in 0..config.l {
                if i != j {
                    let hbi = hk * state.b[k].column(i);
                    r_in += (&hbi * hbi.adjoint()).scale(state.p[config.flat_index(k, i)]);
                }
            }
            for m in 0..config.k {
                if m != k {
                    for n in 0..config.l {
                        let hbm = hk * state.b[m].column(n);
                        r_in += (&hbm * hbm.adjoint()).scale(state.p[config.flat_index(m, n)]);
                    }
                }
            }

            let a = state.a[k].column(j);
            let num = (a.adjoint() * &r_s * a)[(0, 0)].re;
            let den = (a.adjoint() * &r_in * a)[(0, 0)].re;
            if den <= 0.0 {
                return Err(SinrError::DegenerateDenominator { k, j });
            }
            out[(k, j)] = num / den;
        }
    }
    Ok(out)
}

/// Virtual-uplink post-SINR of every substream. The uplink transmits through
/// H_kᴴ with the receive filters as transmitters, powers λ, and the weight
/// entry as the noise level.
pub fn sinr_uplink(
    state: &BeamformerState,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<DMatrix<f64>, SinrError> {
    check_shapes(state, channels, config)?;
    let m_dim = config.m;
    // Multiuser term Σ_m H_mᴴ A_m diag(λ_m) A_mᴴ H_m, assembled once.
    let mut multiuser = CMat::zeros(m_dim, m_dim);
    let mut per_user: Vec<CMat> = Vec::with_capacity(config.k);
    for m in 0..config.k {
        let mut um = CMat::zeros(m_dim, m_dim);
        for n in 0..config.l {
            let ha = channels.h[m].adjoint() * state.a[m].column(n);
            um += (&ha * ha.adjoint()).scale(state.lambda[config.flat_index(m, n)]);
        }
        multiuser += &um;
        per_user.push(um);
    }

    let mut out = DMatrix::zeros(config.k, config.l);
    for k in 0..config.k {
        for j in 0..config.l {
            let flat = config.flat_index(k, j);
            let ha = channels.h[k].adjoint() * state.a[k].column(j);
            let r_s = (&ha * ha.adjoint()).scale(state.lambda[flat]);

            // Same-user terms i ≠ j plus every other user's block plus noise w.
            let mut r_in = &multiuser - &per_user[k];
            for i in 0..config.l {
                if i != j {
                    let hai = channels.h[k].adjoint() * state.a[k].column(i);
                    r_in += (&hai * hai.adjoint()).scale(state.lambda[config.flat_index(k, i)]);
                }
            }
            r_in += CMat::identity(m_dim, m_dim).scale(config.w[flat]);

            let b = state.b[k].column(j);
            let num = (b.adjoint() * &r_s * b)[(0, 0)].re;
            let den = (b.adjoint() * &r_in * b)[(0, 0)].re;
            if den <= 0.0 {
                return Err(SinrError::DegenerateDenominator { k, j });
            }
            out[(k, j)] = num / den;
        }
    }
    Ok(out)
}

/// Downlink SINRs from the link-gain form, for cross-checking against the
/// covariance route.
pub fn sinr_downlink_from_gains(
    gains: &GainTensor,
    p: &DVector<f64>,
    a_norms_sqr: &DVector<f64>,
    config: &SystemConfig,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(config.k, config.l);
    for row in 0..config.kl() {
        let (k, j) = config.user_substream(row);
        let signal = p[row] * gains.phi[(row, row)];
        let mut interference = config.sigma2 * a_norms_sqr[row];
        for col in 0..config.kl() {
            if col != row {
                // Self-interference and multiuser interference both enter;
                // only the direct term is excluded.
                interference += p[col] * gains.phi[(row, col)];
            }
        }
        out[(k, j)] = signal / interference;
    }
    out
}

/// Assemble C and d of the constraint form Cp + d ≤ 0 from the current
/// beamformers.
pub fn constraint_system(
    state: &BeamformerState,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<ConstraintSystem, SinrError> {
    let gains = gain_tensor(state, channels, config)?;
    let kl = config.kl();
    let mut c = DMatrix::zeros(kl, kl);
    let mut d = DVector::zeros(kl);
    for row in 0..kl {
        let (k, j) = config.user_substream(row);
        let direct = gains.phi[(row, row)];
        if direct <= 0.0 {
            return Err(SinrError::DegenerateGain { k, j });
        }
        for col in 0..kl {
            c[(row, col)] = if col == row {
                -direct / config.gamma[row]
            } else {
                gains.phi[(row, col)]
            };
        }
        d[row] = config.sigma2 * state.a[k].column(j).norm_squared();
    }
    Ok(ConstraintSystem { c, d })
}

/// Squared norms of the receive columns in flat order (the d vector up to σ²).
pub fn receive_norms_sqr(state: &BeamformerState, config: &SystemConfig) -> DVector<f64> {
    DVector::from_fn(config.kl(), |row, _| {
        let (k, j) = config.user_substream(row);
        state.a[k].column(j).norm_squared()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{draw_channels, init_state};
    use crate::numerics::CVec;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use num_complex::Complex64;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_config() -> SystemConfig {
        SystemConfig {
            m: 1,
            k: 1,
            n: vec![1],
            l: 1,
            gamma: vec![1.0],
            w: vec![1.0],
            sigma2: 1.0,
            epsilon: 1e-4,
            max_iters: 500,
        }
    }

    fn scalar_state(p: f64, lambda: f64) -> BeamformerState {
        BeamformerState {
            a: vec![CMat::from_element(1, 1, c64(1.0, 0.0))],
            b: vec![CMat::from_element(1, 1, c64(1.0, 0.0))],
            p: DVector::from_vec(vec![p]),
            lambda: DVector::from_vec(vec![lambda]),
        }
    }

    fn scalar_channels() -> ChannelSet {
        ChannelSet {
            h: vec![CMat::from_element(1, 1, c64(1.0, 0.0))],
        }
    }

    fn random_state(config: &SystemConfig, seed: u64) -> (BeamformerState, ChannelSet) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5150);
        let mut state = init_state(config, seed);
        // Random receive filters and positive powers for a generic state.
        for k in 0..config.k {
            for j in 0..config.l {
                let mut col = CVec::from_fn(config.n[k], |_, _| {
                    c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let norm = col.norm();
                col.unscale_mut(norm);
                state.a[k].set_column(j, &col);
            }
        }
        state.lambda = DVector::from_fn(config.kl(), |_, _| rng.gen::<f64>());
        (state, draw_channels(config, seed))
    }

    #[test]
    fn gain_tensor_identity_channel() {
        let cfg = SystemConfig {
            m: 2,
            n: vec![2],
            k: 1,
            l: 1,
            gamma: vec![1.0],
            w: vec![1.0],
            sigma2: 1.0,
            epsilon: 1e-4,
            max_iters: 1,
        };
        let e1 = CVec::from_vec(vec![c64(1.0, 0.0), c64(0.0, 0.0)]);
        let e2 = CVec::from_vec(vec![c64(0.0, 0.0), c64(1.0, 0.0)]);
        let channels = ChannelSet { h: vec![CMat::identity(2, 2)] };
        let mk = |a: &CVec, b: &CVec| BeamformerState {
            a: vec![CMat::from_columns(&[a.column(0)])],
            b: vec![CMat::from_columns(&[b.column(0)])],
            p: DVector::from_vec(vec![1.0]),
            lambda: DVector::from_vec(vec![0.0]),
        };
        // Aligned vectors over the identity channel: unit gain.
        let g = gain_tensor(&mk(&e1, &e1), &channels, &cfg).unwrap();
        assert_relative_eq!(g.phi[(0, 0)], 1.0, epsilon = 1e-14);
        // a orthogonal to H b: zero gain.
        let g = gain_tensor(&mk(&e2, &e1), &channels, &cfg).unwrap();
        assert_relative_eq!(g.phi[(0, 0)], 0.0, epsilon = 1e-14);
        // a = (1, i)/√2, b = e1: |aᴴ H b|² = 1/2.
        let a = CVec::from_vec(vec![c64(1.0, 0.0), c64(0.0, 1.0)]).unscale(2.0f64.sqrt());
        let g = gain_tensor(&mk(&a, &e1), &channels, &cfg).unwrap();
        assert_relative_eq!(g.phi[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn scalar_link_sinrs() {
        let cfg = scalar_config();
        let ch = scalar_channels();
        let s = scalar_state(2.0, 3.0);
        assert_relative_eq!(sinr_downlink(&s, &ch, &cfg).unwrap()[(0, 0)], 2.0);
        assert_relative_eq!(sinr_uplink(&s, &ch, &cfg).unwrap()[(0, 0)], 3.0);
    }

    #[test]
    fn zero_power_means_zero_sinr() {
        let cfg = crate::model::baseline_config(2, 10.0, vec![1.0; 4]);
        let (mut state, ch) = random_state(&cfg, 3);
        state.p.fill(0.0);
        state.lambda.fill(0.0);
        assert!(sinr_downlink(&state, &ch, &cfg).unwrap().iter().all(|&s| s == 0.0));
        assert!(sinr_uplink(&state, &ch, &cfg).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn covariance_and_gain_forms_agree() {
        let cfg = SystemConfig {
            m: 4,
            k: 2,
            n: vec![2, 2],
            l: 2,
            gamma: vec![1.0; 4],
            w: vec![1.0; 4],
            sigma2: 0.7,
            epsilon: 1e-4,
            max_iters: 1,
        };
        for seed in 0..10 {
            let (state, ch) = random_state(&cfg, seed);
            let cov = sinr_downlink(&state, &ch, &cfg).unwrap();
            let gains = gain_tensor(&state, &ch, &cfg).unwrap();
            let norms = receive_norms_sqr(&state, &cfg);
            let phi = sinr_downlink_from_gains(&gains, &state.p, &norms, &cfg);
            for (x, y) in cov.iter().zip(phi.iter()) {
                assert_relative_eq!(x, y, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn scalar_constraint_system() {
        let cfg = scalar_config();
        let sys = constraint_system(&scalar_state(1.0, 0.0), &scalar_channels(), &cfg).unwrap();
        assert_relative_eq!(sys.c[(0, 0)], -1.0);
        assert_relative_eq!(sys.d[0], 1.0);
    }

    #[test]
    fn constraint_sign_pattern() {
        let cfg = crate::model::baseline_config(3, 5.0, vec![1.0; 6]);
        for seed in 0..50 {
            let (state, ch) = random_state(&cfg, seed);
            let sys = constraint_system(&state, &ch, &cfg).unwrap();
            for i in 0..cfg.kl() {
                assert!(sys.c[(i, i)] < 0.0);
                for j in 0..cfg.kl() {
                    if i != j {
                        assert!(sys.c[(i, j)] >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn constraint_form_matches_sinr_threshold() {
        // Cp + d ≤ 0 elementwise ⇔ every downlink SINR meets its target.
        use rand::{Rng, SeedableRng};
        let cfg = SystemConfig {
            m: 3,
            k: 2,
            n: vec![2, 2],
            l: 1,
            gamma: vec![1.5, 0.8],
            w: vec![1.0, 1.0],
            sigma2: 0.5,
            epsilon: 1e-4,
            max_iters: 1,
        };
        let (mut state, ch) = random_state(&cfg, 5);
        let sys = constraint_system(&state, &ch, &cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let p = DVector::from_fn(cfg.kl(), |_, _| rng.gen::<f64>() * 20.0);
            state.p = p.clone();
            let slack = &sys.c * &p + &sys.d;
            let sinr = sinr_downlink(&state, &ch, &cfg).unwrap();
            let all_met = (0..cfg.kl()).all(|i| {
                let (k, j) = cfg.user_substream(i);
                sinr[(k, j)] >= cfg.gamma[i] - 1e-12
            });
            let all_nonpos = slack.iter().all(|&s| s <= 1e-9);
            assert_eq!(all_met, all_nonpos);
        }
    }

    #[test]
    fn phase_rotation_leaves_sinr_unchanged() {
        let cfg = crate::model::baseline_config(2, 10.0, vec![1.0; 4]);
        let (state, ch) = random_state(&cfg, 11);
        let base_dl = sinr_downlink(&state, &ch, &cfg).unwrap();
        let base_ul = sinr_uplink(&state, &ch, &cfg).unwrap();
        let mut rotated = state.clone();
        let rot = Complex64::from_polar(1.0, 1.234);
        for k in 0..cfg.k {
            let col = rotated.a[k].column(0).map(|z| z * rot);
            rotated.a[k].set_column(0, &col);
            let col = rotated.b[k].column(1).map(|z| z * rot.conj());
            rotated.b[k].set_column(1, &col);
        }
        let dl = sinr_downlink(&rotated, &ch, &cfg).unwrap();
        let ul = sinr_uplink(&rotated, &ch, &cfg).unwrap();
        for (x, y) in base_dl.iter().zip(dl.iter()) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
        for (x, y) in base_ul.iter().zip(ul.iter()) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn uplink_power_monotonicity() {
        // Raising one substream's uplink power raises its own SINR and lowers
        // every other substream's whenever the cross gain is positive.
        let cfg = crate::model::baseline_config(2, 10.0, vec![1.0; 4]);
        let (mut state, ch) = random_state(&cfg, 21);
        state.lambda = DVector::from_element(cfg.kl(), 0.5);
        let before = sinr_uplink(&state, &ch, &cfg).unwrap();
        let target = 1usize;
        state.lambda[target] += 0.25;
        let after = sinr_uplink(&state, &ch, &cfg).unwrap();
        let (tk, tj) = cfg.user_substream(target);
        assert!(after[(tk, tj)] > before[(tk, tj)]);
        for i in 0..cfg.kl() {
            if i != target {
                let (k, j) = cfg.user_substream(i);
                assert!(after[(k, j)] < before[(k, j)]);
            }
        }
    }
}

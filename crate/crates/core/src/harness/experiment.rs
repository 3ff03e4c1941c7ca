//! Seeded Monte Carlo experiments over the solver: single instances with
//! optional target relaxation, target sweeps, and weight sweeps. Trials run
//! concurrently (see [`super::montecarlo`]) but rows are always ordered by
//! (sweep value, seed).

use nalgebra::DVector;

use crate::model::{db_to_linear, draw_channels, linear_to_db, SystemConfig};
use crate::solver::{solve, SolveOptions, SolveReport, SolveStatus};

use super::link::{verify_link, LinkOptions};
use super::montecarlo::map_seeds;
use super::report::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Single,
    SweepGamma,
    SweepWeight,
    VerifyLink,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub config: SystemConfig,
    /// SINR targets for `SweepGamma`, in dB.
    pub gamma_db_grid: Vec<f64>,
    /// MS1 weights for `SweepWeight` (other users stay at 1).
    pub weight_grid: Vec<f64>,
    pub trials: usize,
    pub seed0: u64,
    /// Multiplicative γ back-off applied on infeasible `Single` runs.
    pub backoff: f64,
    pub max_retries: usize,
    /// Symbols per trial for `VerifyLink`.
    pub n_sym: usize,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, config: SystemConfig) -> Self {
        Self {
            kind,
            config,
            gamma_db_grid: Vec::new(),
            weight_grid: Vec::new(),
            trials: 100,
            seed0: 0,
            backoff: 0.5,
            max_retries: 0,
            n_sym: 100_000,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|t| self.seed0 + t).collect()
    }
}

fn per_user_power_db(p: &DVector<f64>, config: &SystemConfig) -> Vec<f64> {
    (0..config.k)
        .map(|k| {
            let total: f64 = (0..config.l).map(|j| p[config.flat_index(k, j)]).sum();
            linear_to_db(total)
        })
        .collect()
}

fn row_from_report(
    experiment: &str,
    seed: u64,
    sweep_value: f64,
    config: &SystemConfig,
    report: &SolveReport,
) -> ResultRow {
    let converged = report.status == SolveStatus::Converged;
    let w = DVector::from_vec(config.w.clone());
    ResultRow {
        experiment: experiment.to_string(),
        seed,
        sweep_value,
        status: report.status.to_string(),
        total_power_db: converged.then(|| linear_to_db(report.state.p.sum())),
        per_user_power_db: if converged {
            per_user_power_db(&report.state.p, config)
        } else {
            Vec::new()
        },
        weighted_objective: converged.then(|| w.dot(&report.state.p)),
        dual_objective: report.audit.map(|a| a.dual_objective),
        duality_gap: report.audit.map(|a| a.gap),
        iterations: report.iterations,
        empirical_sinr_db: Vec::new(),
    }
}

fn run_trial(config: &SystemConfig, seed: u64) -> SolveReport {
    let channels = draw_channels(config, seed);
    solve(config, &channels, &SolveOptions::from_config(config), seed)
}

/// One configuration, many seeds. Infeasible draws retry with γ scaled by
/// the back-off factor, up to `max_retries` times; the sweep value recorded
/// is the final target in dB.
pub fn run_single(spec: &ExperimentSpec) -> Vec<ResultRow> {
    map_seeds(&spec.seeds(), |seed| {
        let mut config = spec.config.clone();
        let mut attempts = 0;
        loop {
            let report = run_trial(&config, seed);
            let gamma_db = linear_to_db(config.gamma[0]);
            if report.status == SolveStatus::Infeasible && attempts < spec.max_retries {
                attempts += 1;
                for g in &mut config.gamma {
                    *g *= spec.backoff;
                }
                continue;
            }
            return row_from_report("single", seed, gamma_db, &config, &report);
        }
    })
}

/// Total-power-versus-γ study: every γ on the grid is run over the same
/// seed set. Infeasible draws are recorded as such, never retried.
pub fn run_sweep_gamma(spec: &ExperimentSpec) -> Vec<ResultRow> {
    let seeds = spec.seeds();
    let mut rows = Vec::new();
    for &gamma_db in &spec.gamma_db_grid {
        let mut config = spec.config.clone();
        for g in &mut config.gamma {
            *g = db_to_linear(gamma_db);
        }
        rows.extend(map_seeds(&seeds, |seed| {
            let report = run_trial(&config, seed);
            row_from_report("sweep_gamma", seed, gamma_db, &config, &report)
        }));
    }
    rows
}

/// MS1-weight study: the grid value is applied to user 1's substreams with
/// every other weight held at 1, over a common seed set.
pub fn run_sweep_weight(spec: &ExperimentSpec) -> Vec<ResultRow> {
    let seeds = spec.seeds();
    let mut rows = Vec::new();
    for &weight in &spec.weight_grid {
        let mut config = spec.config.clone();
        for flat in 0..config.kl() {
            let (k, _) = config.user_substream(flat);
            config.w[flat] = if k == 0 { weight } else { 1.0 };
        }
        rows.extend(map_seeds(&seeds, |seed| {
            let report = run_trial(&config, seed);
            row_from_report("sweep_weight", seed, weight, &config, &report)
        }));
    }
    rows
}

/// Solve each trial and measure the delivered per-substream SINR over the
/// air with QPSK symbols.
pub fn run_verify_link(spec: &ExperimentSpec) -> Vec<ResultRow> {
    map_seeds(&spec.seeds(), |seed| {
        let channels = draw_channels(&spec.config, seed);
        let report = solve(
            &spec.config,
            &channels,
            &SolveOptions::from_config(&spec.config),
            seed,
        );
        let gamma_db = linear_to_db(spec.config.gamma[0]);
        let mut row = row_from_report("verify_link", seed, gamma_db, &spec.config, &report);
        if report.status == SolveStatus::Converged {
            let opts = LinkOptions {
                n_sym: spec.n_sym,
                seed: seed ^ 0x9e3779b97f4a7c15,
                noise_sigma2: None,
            };
            if let Ok(stats) = verify_link(&report, &channels, &spec.config, &opts) {
                row.empirical_sinr_db = stats.iter().map(|s| s.sinr_db).collect();
            }
        }
        row
    })
}

/// Per-sweep-value aggregate over one experiment's rows.
#[derive(Debug, Clone)]
pub struct SweepAggregate {
    pub sweep_value: f64,
    /// Mean total power in dB over feasible trials. Linear powers are
    /// averaged then converted unless `mean_db` was requested.
    pub mean_total_power_db: Option<f64>,
    /// Mean MS1 power in dB over feasible trials.
    pub mean_ms1_power_db: Option<f64>,
    pub feasible: usize,
    pub infeasible: usize,
    pub failed: usize,
    pub infeasible_fraction: f64,
}

/// Collapse rows into one aggregate per sweep value, preserving grid order.
pub fn aggregate(rows: &[ResultRow], mean_db: bool) -> Vec<SweepAggregate> {
    let mut order: Vec<f64> = Vec::new();
    for row in rows {
        if !order.iter().any(|&v| v == row.sweep_value) {
            order.push(row.sweep_value);
        }
    }
    order
        .into_iter()
        .map(|value| {
            let group: Vec<&ResultRow> =
                rows.iter().filter(|r| r.sweep_value == value).collect();
            let feasible: Vec<&&ResultRow> = group
                .iter()
                .filter(|r| r.status == "converged")
                .collect();
            let infeasible = group.iter().filter(|r| r.status == "infeasible").count();
            let failed = group.len() - feasible.len() - infeasible;

            let mean_of = |get: &dyn Fn(&ResultRow) -> Option<f64>| -> Option<f64> {
                if feasible.is_empty() {
                    return None;
                }
                let vals: Vec<f64> = feasible.iter().filter_map(|r| get(r)).collect();
                if vals.is_empty() {
                    return None;
                }
                let n = vals.len() as f64;
                if mean_db {
                    Some(vals.iter().sum::<f64>() / n)
                } else {
                    Some(linear_to_db(
                        vals.iter().map(|&db| db_to_linear(db)).sum::<f64>() / n,
                    ))
                }
            };

            SweepAggregate {
                sweep_value: value,
                mean_total_power_db: mean_of(&|r| r.total_power_db),
                mean_ms1_power_db: mean_of(&|r| r.per_user_power_db.first().copied()),
                feasible: feasible.len(),
                infeasible,
                failed,
                infeasible_fraction: infeasible as f64 / group.len() as f64,
            }
        })
        .collect()
}

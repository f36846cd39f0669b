//! Seeded sweeps over scheme × SNR × dimension × budget.
//!
//! Repetition `k` of a cell runs with seed
//! `derive_seed(master, [fnv1a(scheme), snr.to_bits(), d, N, k])`, so any
//! cell can be re-run on its own. Repetitions run in parallel and are
//! reduced in cell order, so results do not depend on scheduling.

use std::time::{Duration, Instant};

use crate::channel::{audit_power, ChannelSpec, PowerAudit, PowerLedger};
use crate::exec::{map_ordered, Execution};
use crate::optimizer::{lemma1_bound, psgd_run, RunConfig, RunError};
use crate::problems::ConvexProblem;
use crate::rng::{derive_seed, label_hash};

use super::config::{build_code, ExperimentConfig, SchemeSpec};
use super::HarnessError;

/// Average-power slack allowed for analog uses.
pub const POWER_TOLERANCE: f64 = 0.02;

/// Seed of one repetition of one cell.
pub fn cell_seed(
    master: u64,
    scheme: &SchemeSpec,
    snr: f64,
    d: usize,
    budget: u64,
    rep: usize,
) -> u64 {
    derive_seed(
        master,
        &[
            label_hash(&scheme.to_string()),
            snr.to_bits(),
            d as u64,
            budget,
            rep as u64,
        ],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub scheme: SchemeSpec,
    /// Label of the instantiated code, e.g. `digital-ask:9`.
    pub code_label: String,
    pub snr: f64,
    pub dim: usize,
    pub budget: u64,
    pub reps: usize,
    /// Per-repetition gaps in repetition order.
    pub gaps: Vec<f64>,
    pub gap_median: f64,
    pub gap_mean: f64,
    pub gap_iqr: f64,
    pub bias_norm: f64,
    pub alpha_hat_sq: f64,
    /// `None` for codes that skip the channel.
    pub avg_power: Option<f64>,
    pub decode_err_rate: Option<f64>,
    pub bound_overlay: Option<f64>,
    pub power_audit: Option<PowerAudit>,
    /// Audit of constellation symbols alone, at zero tolerance.
    pub ask_audit: Option<PowerAudit>,
    pub wall_time: Duration,
}

impl CellResult {
    pub fn power_ok(&self) -> bool {
        self.power_audit.is_none_or(|a| a.is_ok()) && self.ask_audit.is_none_or(|a| a.is_ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub seed: u64,
    pub cells: Vec<CellResult>,
    /// Cells that could not run, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl SweepResult {
    pub fn power_violations(&self) -> Vec<&CellResult> {
        self.cells.iter().filter(|c| !c.power_ok()).collect()
    }

    pub fn cell(&self, scheme: &str, snr: f64, dim: usize, budget: u64) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.scheme.to_string() == scheme && c.snr == snr && c.dim == dim && c.budget == budget
        })
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

struct Cell {
    scheme: SchemeSpec,
    snr: f64,
    dim: usize,
    budget: u64,
}

#[derive(Debug, Clone)]
struct RepOutcome {
    gap: f64,
    iterations: u64,
    bias_sum: Vec<f64>,
    second_moment_sum: f64,
    ledger: PowerLedger,
    ask_ledger: PowerLedger,
    ask_symbols: u64,
    decode_errors: u64,
    elapsed: Duration,
}

fn run_rep(
    cfg: &ExperimentConfig,
    problem: &ConvexProblem,
    cell: &Cell,
    rep: usize,
) -> Result<(RepOutcome, String, f64, usize), RunError> {
    let start = Instant::now();
    let channel = ChannelSpec::from_snr(cfg.power, cell.snr).map_err(|e| RunError::Parameter {
        name: "snr",
        reason: e.to_string(),
    })?;
    let code = build_code(
        cell.scheme,
        cell.dim,
        problem.grad_bound(),
        cfg.power,
        cell.snr,
        cell.budget,
        &cfg.digital,
    )?;
    let seed = cell_seed(cfg.seed, &cell.scheme, cell.snr, cell.dim, cell.budget, rep);
    let mut run = RunConfig::new(problem, code.as_ref(), channel, cell.budget, seed);
    run.learning_rate = cfg.learning_rate;
    let rec = psgd_run(&run)?;
    let alpha = code.declared_alpha(cell.snr);
    Ok((
        RepOutcome {
            gap: rec.gap,
            iterations: rec.iterations,
            bias_sum: rec.bias_sum,
            second_moment_sum: rec.second_moment_sum,
            ledger: rec.ledger,
            ask_ledger: rec.ask_ledger,
            ask_symbols: rec.ask_symbols,
            decode_errors: rec.decode_errors,
            elapsed: start.elapsed(),
        },
        code.label(),
        alpha,
        code.channel_uses(),
    ))
}

pub fn run_sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<SweepResult, HarnessError> {
    let mut problems = Vec::with_capacity(cfg.dimensions.len());
    for &d in &cfg.dimensions {
        let p = cfg
            .problem
            .build(d, cfg.seed)
            .map_err(|m| super::ConfigError {
                line: None,
                field: "problem".into(),
                message: m,
            })?;
        problems.push(p);
    }

    let mut cells = Vec::with_capacity(cfg.cell_count());
    for scheme in &cfg.schemes {
        for &snr in &cfg.snrs {
            for (di, &dim) in cfg.dimensions.iter().enumerate() {
                for &budget in &cfg.budgets {
                    cells.push((
                        di,
                        Cell {
                            scheme: *scheme,
                            snr,
                            dim,
                            budget,
                        },
                    ));
                }
            }
        }
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.repetitions).map(move |r| (c, r)))
        .collect();
    let outcomes = map_ordered(exec, &jobs, |&(c, rep)| {
        let (di, cell) = &cells[c];
        run_rep(cfg, &problems[*di], cell, rep)
    });

    let mut result = SweepResult {
        seed: cfg.seed,
        cells: Vec::new(),
        skipped: Vec::new(),
    };
    let mut outcomes = outcomes.into_iter();
    for (_, cell) in &cells {
        let reps: Vec<_> = outcomes.by_ref().take(cfg.repetitions).collect();
        let name = format!(
            "{} snr={} d={} N={}",
            cell.scheme, cell.snr, cell.dim, cell.budget
        );
        let mut ok = Vec::with_capacity(reps.len());
        let mut failure = None;
        for r in reps {
            match r {
                Ok(o) => ok.push(o),
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(reason) = failure {
            log::warn!("skipping {name}: {reason}");
            result.skipped.push((name, reason));
            continue;
        }
        result.cells.push(aggregate(cfg, cell, ok));
    }
    Ok(result)
}

fn aggregate(
    cfg: &ExperimentConfig,
    cell: &Cell,
    reps: Vec<(RepOutcome, String, f64, usize)>,
) -> CellResult {
    let code_label = reps[0].1.clone();
    let alpha = reps[0].2;
    let uses = reps[0].3;
    let gaps: Vec<f64> = reps.iter().map(|r| r.0.gap).collect();
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;

    let mut bias = vec![0.0; cell.dim];
    let mut iterations = 0u64;
    let mut second = 0.0;
    let mut ledger = PowerLedger::default();
    let mut ask_ledger = PowerLedger::default();
    let mut ask_symbols = 0;
    let mut errors = 0;
    let mut wall = Duration::ZERO;
    for (r, ..) in &reps {
        for (b, s) in bias.iter_mut().zip(&r.bias_sum) {
            *b += s;
        }
        iterations += r.iterations;
        second += r.second_moment_sum;
        ledger.merge(&r.ledger);
        ask_ledger.merge(&r.ask_ledger);
        ask_symbols += r.ask_symbols;
        errors += r.decode_errors;
        wall += r.elapsed;
    }
    let t = iterations as f64;
    let bias_norm = bias.iter().map(|b| (b / t) * (b / t)).sum::<f64>().sqrt();

    let spec = ChannelSpec::from_snr(cfg.power, cell.snr).expect("validated SNR");
    let power_audit = audit_power(&ledger, &spec, POWER_TOLERANCE).ok();
    let ask_audit = audit_power(&ask_ledger, &spec, 0.0).ok();

    CellResult {
        scheme: cell.scheme,
        code_label,
        snr: cell.snr,
        dim: cell.dim,
        budget: cell.budget,
        reps: reps.len(),
        gap_median: quantile(&sorted, 0.5),
        gap_mean: gaps.iter().sum::<f64>() / n,
        gap_iqr: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        gaps,
        bias_norm,
        alpha_hat_sq: second / t,
        avg_power: ledger.average_power(),
        decode_err_rate: (ask_symbols > 0).then(|| errors as f64 / ask_symbols as f64),
        bound_overlay: cfg.overlay.then(|| {
            lemma1_bound(
                alpha,
                0.0,
                cfg.problem.diameter,
                cell.budget as f64,
                uses as f64,
            )
        }),
        power_audit,
        ask_audit,
        wall_time: wall,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::headline();
        cfg.repetitions = 3;
        cfg.dimensions = vec![8];
        cfg.budgets = vec![256];
        cfg.snrs = vec![1.0, 100.0];
        cfg.schemes.push(SchemeSpec::NoiselessBaseline);
        cfg.schemes.push(SchemeSpec::SampledAnalog(2));
        cfg
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn cell_count_and_order() {
        let cfg = small();
        let res = run_sweep(&cfg, Execution::Sequential).unwrap();
        assert_eq!(res.cells.len(), cfg.cell_count());
        assert!(res.skipped.is_empty());
        assert_eq!(res.cells[0].scheme, SchemeSpec::ScaledAnalog);
        assert_eq!(res.cells[1].snr, 100.0);
        // Sampled analog meets power only on average over its random draws,
        // which a run this short does not resolve to 2%.
        assert!(res
            .power_violations()
            .iter()
            .all(|c| matches!(c.scheme, SchemeSpec::SampledAnalog(_))));
        let base = res.cell("noiseless-baseline", 1.0, 8, 256).unwrap();
        assert_eq!(base.avg_power, None);
        assert_eq!(base.bias_norm, 0.0);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let cfg = small();
        let a = run_sweep(&cfg, Execution::Sequential).unwrap();
        let b = run_sweep(&cfg, Execution::Parallel).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.gaps, y.gaps);
            assert_eq!(x.alpha_hat_sq, y.alpha_hat_sq);
        }
    }

    #[test]
    fn infeasible_cells_are_skipped() {
        let mut cfg = small();
        cfg.budgets = vec![4];
        cfg.schemes = vec![SchemeSpec::ScaledAnalog, SchemeSpec::NoiselessBaseline];
        let res = run_sweep(&cfg, Execution::Sequential).unwrap();
        assert_eq!(res.skipped.len(), 2);
        assert_eq!(res.cells.len(), 2);
    }

    #[test]
    fn cell_seeds_depend_on_every_coordinate() {
        let s = SchemeSpec::ScaledAnalog;
        let base = cell_seed(1, &s, 1.0, 8, 64, 0);
        assert_ne!(base, cell_seed(2, &s, 1.0, 8, 64, 0));
        assert_ne!(
            base,
            cell_seed(1, &SchemeSpec::NoiselessBaseline, 1.0, 8, 64, 0)
        );
        assert_ne!(base, cell_seed(1, &s, 2.0, 8, 64, 0));
        assert_ne!(base, cell_seed(1, &s, 1.0, 9, 64, 0));
        assert_ne!(base, cell_seed(1, &s, 1.0, 8, 65, 0));
        assert_ne!(base, cell_seed(1, &s, 1.0, 8, 64, 1));
    }
}

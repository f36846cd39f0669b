//! Monte Carlo estimates of a code's bias and second moment.
//!
//! Trials draw `ĝ` from the problem's oracle at a fixed query point, send it
//! through the code and channel, and compare the decoded `ψ(Y)` with `ĝ`.
//! This measures the code at the oracle's distribution, not at the worst
//! case over oracles.
//!
//! Trials are split into fixed-size chunks with their own derived seeds, so
//! the result is identical for any thread count.

use crate::channel::{ChannelSpec, PowerLedger};
use crate::code::GradientCode;
use crate::exec::{map_ordered, Execution};
use crate::optimizer::{send, Demodulation};
use crate::problems::ConvexProblem;
use crate::rng::{derive_seed, stream_rng, SharedRandomness, Stream};

use super::HarnessError;

/// Smallest accepted trial count.
pub const MIN_TRIALS: u64 = 10_000;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone)]
pub struct MeasureConfig {
    pub trials: u64,
    pub seed: u64,
    pub demodulation: Demodulation,
    /// Query point; the domain center when `None`.
    pub point: Option<Vec<f64>>,
    pub exec: Execution,
}

impl MeasureConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            demodulation: Demodulation::Noisy,
            point: None,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeQuality {
    pub trials: u64,
    /// `‖mean(ψ(Y) − ĝ)‖`.
    pub bias_norm: f64,
    /// Per-coordinate mean of `ψ(Y) − ĝ`.
    pub bias: Vec<f64>,
    /// Per-coordinate Monte Carlo standard error of `bias`.
    pub bias_se: Vec<f64>,
    /// `mean ‖ψ(Y)‖²`.
    pub alpha_hat_sq: f64,
    /// `mean ‖ĝ‖²`.
    pub oracle_second_moment: f64,
    pub avg_power: Option<f64>,
    pub decode_err_rate: Option<f64>,
}

impl CodeQuality {
    /// Largest `|bias_i| / se_i` over coordinates. Coordinates with zero
    /// spread count as 0 when their bias is 0 and as infinite otherwise.
    pub fn max_z(&self) -> f64 {
        self.bias
            .iter()
            .zip(&self.bias_se)
            .map(|(b, s)| {
                if *s > 0.0 {
                    b.abs() / s
                } else if *b == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
struct Partial {
    n: u64,
    diff_sum: Vec<f64>,
    diff_sq: Vec<f64>,
    est_sq: f64,
    oracle_sq: f64,
    ledger: PowerLedger,
    ask_symbols: u64,
    errors: u64,
}

pub fn measure_code_quality(
    code: &dyn GradientCode,
    problem: &ConvexProblem,
    channel: &ChannelSpec,
    cfg: &MeasureConfig,
) -> Result<CodeQuality, HarnessError> {
    if cfg.trials < MIN_TRIALS {
        return Err(HarnessError::Measure(format!(
            "need at least {MIN_TRIALS} trials, got {}",
            cfg.trials
        )));
    }
    let d = problem.dim();
    if code.dim() != d {
        return Err(crate::code::CodeError::Dimension {
            expected: d,
            got: code.dim(),
        }
        .into());
    }
    let x = match &cfg.point {
        Some(p) => p.clone(),
        None => problem.domain().center().to_vec(),
    };
    let chunks: Vec<u64> = (0..cfg.trials.div_ceil(CHUNK)).collect();
    let partials = map_ordered(cfg.exec, &chunks, |&c| -> Result<Partial, HarnessError> {
        let n = CHUNK.min(cfg.trials - c * CHUNK);
        let seed = derive_seed(cfg.seed, &[c]);
        let mut oracle = stream_rng(seed, Stream::Oracle);
        let mut noise = stream_rng(seed, Stream::Channel);
        let mut private = stream_rng(seed, Stream::Private);
        let (mut enc, mut dec) = code.link(SharedRandomness::new(derive_seed(
            seed,
            &[Stream::Shared as u64],
        )));
        let mut p = Partial {
            n,
            diff_sum: vec![0.0; d],
            diff_sq: vec![0.0; d],
            est_sq: 0.0,
            oracle_sq: 0.0,
            ledger: PowerLedger::default(),
            ask_symbols: 0,
            errors: 0,
        };
        let mut ask_ledger = PowerLedger::default();
        for _ in 0..n {
            let g = problem
                .query_oracle(&x, &mut oracle)
                .map_err(|e| HarnessError::Measure(e.to_string()))?;
            let cw = enc.encode(&g, &mut private)?;
            let rx = send(
                code,
                channel,
                &cw,
                cfg.demodulation,
                &mut noise,
                &mut p.ledger,
                &mut ask_ledger,
            );
            let out = dec.decode(&rx)?;
            p.ask_symbols += cw.ask.iter().filter(|a| a.is_some()).count() as u64;
            p.errors += out.symbol_errors(&cw);
            for (i, (e, gi)) in out.estimate.iter().zip(&g).enumerate() {
                let diff = e - gi;
                p.diff_sum[i] += diff;
                p.diff_sq[i] += diff * diff;
            }
            p.est_sq += out.estimate.iter().map(|e| e * e).sum::<f64>();
            p.oracle_sq += g.iter().map(|e| e * e).sum::<f64>();
        }
        Ok(p)
    });

    let mut total = Partial {
        n: 0,
        diff_sum: vec![0.0; d],
        diff_sq: vec![0.0; d],
        est_sq: 0.0,
        oracle_sq: 0.0,
        ledger: PowerLedger::default(),
        ask_symbols: 0,
        errors: 0,
    };
    for p in partials {
        let p = p?;
        total.n += p.n;
        for i in 0..d {
            total.diff_sum[i] += p.diff_sum[i];
            total.diff_sq[i] += p.diff_sq[i];
        }
        total.est_sq += p.est_sq;
        total.oracle_sq += p.oracle_sq;
        total.ledger.merge(&p.ledger);
        total.ask_symbols += p.ask_symbols;
        total.errors += p.errors;
    }
    let n = total.n as f64;
    let bias: Vec<f64> = total.diff_sum.iter().map(|s| s / n).collect();
    let bias_se: Vec<f64> = total
        .diff_sq
        .iter()
        .zip(&bias)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0) / (n - 1.0)).sqrt())
        .collect();
    Ok(CodeQuality {
        trials: total.n,
        bias_norm: bias.iter().map(|b| b * b).sum::<f64>().sqrt(),
        bias,
        bias_se,
        alpha_hat_sq: total.est_sq / n,
        oracle_second_moment: total.oracle_sq / n,
        avg_power: total.ledger.average_power(),
        decode_err_rate: (total.ask_symbols > 0)
            .then(|| total.errors as f64 / total.ask_symbols as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::ScaledAnalogCode;
    use crate::problems::HardOracle;

    #[test]
    fn rejects_few_trials() {
        let p =
            ConvexProblem::hard_abs(vec![1.0; 4], 0.2, 1.0, 2.0, HardOracle::Bernoulli).unwrap();
        let code = ScaledAnalogCode::new(4, 1.0, 1.0).unwrap();
        let ch = ChannelSpec::from_snr(1.0, 1.0).unwrap();
        assert!(measure_code_quality(&code, &p, &ch, &MeasureConfig::new(100, 0)).is_err());
    }

    #[test]
    fn independent_of_execution_mode() {
        let p = ConvexProblem::hard_abs(vec![1.0, -1.0, 1.0], 0.2, 1.0, 2.0, HardOracle::Bernoulli)
            .unwrap();
        let code = ScaledAnalogCode::new(3, 1.0, 1.0).unwrap();
        let ch = ChannelSpec::from_snr(1.0, 2.0).unwrap();
        let mut cfg = MeasureConfig::new(10_000, 9);
        cfg.exec = Execution::Sequential;
        let a = measure_code_quality(&code, &p, &ch, &cfg).unwrap();
        cfg.exec = Execution::Parallel;
        let b = measure_code_quality(&code, &p, &ch, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.max_z() < 5.0);
        assert!((a.oracle_second_moment - 1.0).abs() < 1e-12);
    }
}

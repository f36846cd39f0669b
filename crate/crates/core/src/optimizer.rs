//! Over-the-air projected SGD.
//!
//! Each of the `T = ⌊N/ℓ⌋` iterations queries the oracle at `x_t`, encodes
//! the answer, sends it through the channel, decodes it and takes the step
//! `x_{t+1} = Γ(x_t − η·ψ(Y_t))`. The output is the average of
//! `x_1, …, x_T` with `x_1` the domain center.

use thiserror::Error;

use crate::channel::{transmit, truncated_noise, ChannelSpec, PowerLedger};
use crate::code::{CodeError, Codeword, Decoded, GradientCode, Received};
use crate::problems::{ConvexProblem, ProblemError};
use crate::rng::{derive_seed, stream_rng, SharedRandomness, SimRng, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("invalid run parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
}

fn parameter(name: &'static str, reason: impl Into<String>) -> RunError {
    RunError::Parameter {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Explicit(f64),
    /// `D/(α√T)` with `α` the code's declared value at the channel SNR.
    Auto,
}

/// How noise is applied to constellation symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Demodulation {
    /// Full Gaussian noise on every use.
    #[default]
    Noisy,
    /// Noise on constellation symbols is drawn conditioned on staying below
    /// half the point spacing, so they always demodulate correctly. Analog
    /// uses are unaffected.
    ForcedCorrect,
}

pub struct RunConfig<'a> {
    pub problem: &'a ConvexProblem,
    pub code: &'a dyn GradientCode,
    pub channel: ChannelSpec,
    /// Total channel uses `N`.
    pub budget: u64,
    pub learning_rate: LearningRate,
    pub seed: u64,
    pub record_trace: bool,
    /// Overrides the domain center as `x_1`.
    pub start: Option<Vec<f64>>,
    pub demodulation: Demodulation,
}

impl<'a> RunConfig<'a> {
    pub fn new(
        problem: &'a ConvexProblem,
        code: &'a dyn GradientCode,
        channel: ChannelSpec,
        budget: u64,
        seed: u64,
    ) -> Self {
        Self {
            problem,
            code,
            channel,
            budget,
            learning_rate: LearningRate::Auto,
            seed,
            record_trace: false,
            start: None,
            demodulation: Demodulation::Noisy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub query: Vec<f64>,
    pub estimate: Vec<f64>,
    /// Codeword energy before noise.
    pub energy: f64,
    /// Constellation symbols decoded to the wrong point.
    pub decode_errors: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub trace: Option<Vec<IterationRecord>>,
    pub averaged: Vec<f64>,
    /// `f(x̄) − f*`.
    pub gap: f64,
    pub iterations: u64,
    pub channel_uses: u64,
    pub learning_rate: f64,
    /// All transmitted symbols. Empty for codes that skip the channel.
    pub ledger: PowerLedger,
    /// Constellation symbols only.
    pub ask_ledger: PowerLedger,
    pub ask_symbols: u64,
    pub decode_errors: u64,
    /// `Σ_t (ψ(Y_t) − ĝ_t)`.
    pub bias_sum: Vec<f64>,
    /// `Σ_t ‖ψ(Y_t)‖²`.
    pub second_moment_sum: f64,
}

impl RunRecord {
    pub fn bias_norm(&self) -> f64 {
        let t = self.iterations as f64;
        self.bias_sum
            .iter()
            .map(|b| (b / t) * (b / t))
            .sum::<f64>()
            .sqrt()
    }

    pub fn alpha_hat_sq(&self) -> f64 {
        self.second_moment_sum / self.iterations as f64
    }

    pub fn decode_error_rate(&self) -> Option<f64> {
        (self.ask_symbols > 0).then(|| self.decode_errors as f64 / self.ask_symbols as f64)
    }
}

/// `D/(α√T)`.
pub fn default_learning_rate(alpha: f64, diameter: f64, iterations: u64) -> Result<f64, RunError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(parameter("alpha", format!("must be positive, got {alpha}")));
    }
    if !(diameter > 0.0) {
        return Err(parameter("diameter", "must be positive"));
    }
    if iterations == 0 {
        return Err(parameter("iterations", "must be positive"));
    }
    Ok(diameter / (alpha * (iterations as f64).sqrt()))
}

/// `D(α/√(N/ℓ) + β)`.
pub fn lemma1_bound(alpha: f64, beta: f64, diameter: f64, budget: f64, uses: f64) -> f64 {
    diameter * (alpha / (budget / uses).sqrt() + beta)
}

/// Sends a codeword through the channel. Codes that skip the channel are
/// passed through and book nothing.
pub fn send(
    code: &dyn GradientCode,
    channel: &ChannelSpec,
    codeword: &Codeword,
    demodulation: Demodulation,
    rng: &mut SimRng,
    ledger: &mut PowerLedger,
    ask_ledger: &mut PowerLedger,
) -> Received {
    if code.bypasses_channel() {
        return Received {
            iteration: codeword.iteration,
            symbols: codeword.symbols.clone(),
        };
    }
    for (s, a) in codeword.symbols.iter().zip(&codeword.ask) {
        if a.is_some() {
            ask_ledger.record_symbol(*s);
        }
    }
    let symbols = match demodulation {
        Demodulation::Noisy => transmit(channel, &codeword.symbols, rng, ledger),
        Demodulation::ForcedCorrect => {
            let mut noisy = transmit(channel, &codeword.symbols, rng, ledger);
            for ((y, s), a) in noisy.iter_mut().zip(&codeword.symbols).zip(&codeword.ask) {
                if let Some(a) = a {
                    *y = s + truncated_noise(channel.sigma(), a.config.half_spacing(), rng);
                }
            }
            noisy
        }
    };
    Received {
        iteration: codeword.iteration,
        symbols,
    }
}

/// Counts and books one decoded codeword.
pub(crate) fn ask_errors(codeword: &Codeword, decoded: &Decoded) -> (u64, u64) {
    let sent = codeword.ask.iter().filter(|a| a.is_some()).count() as u64;
    (sent, decoded.symbol_errors(codeword))
}

pub fn psgd_run(cfg: &RunConfig<'_>) -> Result<RunRecord, RunError> {
    let problem = cfg.problem;
    let code = cfg.code;
    let d = problem.dim();
    if code.dim() != d {
        return Err(CodeError::Dimension {
            expected: d,
            got: code.dim(),
        }
        .into());
    }
    let uses = code.channel_uses() as u64;
    let iterations = cfg.budget / uses;
    if iterations == 0 {
        return Err(parameter(
            "budget",
            format!("N = {} is below one query of {uses} uses", cfg.budget),
        ));
    }
    let eta = match cfg.learning_rate {
        LearningRate::Explicit(eta) if eta >= 0.0 && eta.is_finite() => eta,
        LearningRate::Explicit(eta) => {
            return Err(parameter(
                "learning_rate",
                format!("must be ≥ 0, got {eta}"),
            ))
        }
        LearningRate::Auto => default_learning_rate(
            code.declared_alpha(cfg.channel.snr()),
            problem.diameter(),
            iterations,
        )?,
    };
    let domain = problem.domain();
    let mut x = match &cfg.start {
        Some(s) => {
            if s.len() != d {
                return Err(ProblemError::Dimension {
                    expected: d,
                    got: s.len(),
                }
                .into());
            }
            domain.project(s)
        }
        None => domain.center().to_vec(),
    };

    let mut oracle_rng = stream_rng(cfg.seed, Stream::Oracle);
    let mut channel_rng = stream_rng(cfg.seed, Stream::Channel);
    let mut private_rng = stream_rng(cfg.seed, Stream::Private);
    let shared = SharedRandomness::new(derive_seed(cfg.seed, &[Stream::Shared as u64]));
    let (mut encoder, mut decoder) = code.link(shared);

    let mut sum = vec![0.0; d];
    let mut ledger = PowerLedger::default();
    let mut ask_ledger = PowerLedger::default();
    let mut ask_symbols = 0;
    let mut decode_errors = 0;
    let mut bias_sum = vec![0.0; d];
    let mut second_moment_sum = 0.0;
    let mut trace = cfg.record_trace.then(Vec::new);

    for _ in 0..iterations {
        for (s, xi) in sum.iter_mut().zip(&x) {
            *s += xi;
        }
        let g = problem.query_oracle(&x, &mut oracle_rng)?;
        let codeword = encoder.encode(&g, &mut private_rng)?;
        let received = send(
            code,
            &cfg.channel,
            &codeword,
            cfg.demodulation,
            &mut channel_rng,
            &mut ledger,
            &mut ask_ledger,
        );
        let decoded = decoder.decode(&received)?;
        let (sent, errors) = ask_errors(&codeword, &decoded);
        ask_symbols += sent;
        decode_errors += errors;
        for ((b, e), gi) in bias_sum.iter_mut().zip(&decoded.estimate).zip(&g) {
            *b += e - gi;
        }
        second_moment_sum += decoded.estimate.iter().map(|e| e * e).sum::<f64>();
        let next: Vec<f64> = x
            .iter()
            .zip(&decoded.estimate)
            .map(|(xi, e)| xi - eta * e)
            .collect();
        if let Some(trace) = trace.as_mut() {
            trace.push(IterationRecord {
                query: x.clone(),
                estimate: decoded.estimate,
                energy: codeword.energy(),
                decode_errors: errors,
            });
        }
        x = domain.project(&next);
    }

    let t = iterations as f64;
    let averaged: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let value = match problem.eval_objective(&averaged) {
        Ok(v) => v,
        Err(ProblemError::OutsideDomain) => problem.eval_objective(&domain.project(&averaged))?,
        Err(e) => return Err(e.into()),
    };
    Ok(RunRecord {
        trace,
        averaged,
        gap: value - problem.optimum(),
        iterations,
        channel_uses: iterations * uses,
        learning_rate: eta,
        ledger,
        ask_ledger,
        ask_symbols,
        decode_errors,
        bias_sum,
        second_moment_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::ScaledAnalogCode;
    use crate::code::NoiselessBaseline;
    use crate::digital::{DigitalCode, ShapeTransmission};
    use crate::problems::{Domain, DomainKind, HardOracle};

    fn identity_quadratic(d: usize) -> ConvexProblem {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = 1.0;
        }
        let domain = Domain::centered(DomainKind::L2Ball, d, 2.0).unwrap();
        ConvexProblem::quadratic(domain, a, vec![0.0; d], None).unwrap()
    }

    fn hard(d: usize) -> ConvexProblem {
        let v = (0..d)
            .map(|i| if i % 3 == 0 { -1.0 } else { 1.0 })
            .collect();
        ConvexProblem::hard_abs(v, 0.25, 1.0, 2.0, HardOracle::Bernoulli).unwrap()
    }

    #[test]
    fn learning_rate_and_bound() {
        assert!((default_learning_rate(1.0, 1.0, 100).unwrap() - 0.1).abs() < 1e-15);
        assert!(default_learning_rate(0.0, 1.0, 100).is_err());
        assert!((lemma1_bound(1.0, 0.0, 1.0, 100.0, 1.0) - 0.1).abs() < 1e-15);
        let snr: f64 = 4.0;
        let alpha = (1.0 + 1.0 / snr).sqrt();
        let want = (16.0 * (1.0 + 1.0 / snr)).sqrt() / 1024f64.sqrt();
        assert!((lemma1_bound(alpha, 0.0, 1.0, 1024.0, 16.0) - want).abs() < 1e-15);
        assert!((lemma1_bound(1.0, 0.3, 2.0, 1e300, 1.0) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn noiseless_gradient_descent_converges_monotonically() {
        let d = 3;
        let problem = identity_quadratic(d);
        let code = NoiselessBaseline {
            dim: d,
            grad_bound: problem.grad_bound(),
        };
        let channel = ChannelSpec::noiseless(1.0).unwrap();
        let mut last = f64::INFINITY;
        for budget in [4, 16, 64, 256] {
            let mut cfg = RunConfig::new(&problem, &code, channel, budget, 1);
            cfg.learning_rate = LearningRate::Explicit(0.05);
            cfg.start = Some(vec![0.6, -0.5, 0.4]);
            let rec = psgd_run(&cfg).unwrap();
            assert!(rec.gap < last, "{} !< {last}", rec.gap);
            last = rec.gap;
        }
    }

    #[test]
    fn zero_step_freezes_iterate() {
        let problem = hard(4);
        let code = ScaledAnalogCode::new(4, 1.0, 1.0).unwrap();
        let channel = ChannelSpec::from_snr(1.0, 1.0).unwrap();
        let mut cfg = RunConfig::new(&problem, &code, channel, 400, 3);
        cfg.learning_rate = LearningRate::Explicit(0.0);
        let rec = psgd_run(&cfg).unwrap();
        assert_eq!(rec.averaged, vec![0.0; 4]);
        let f0 = problem.eval_objective(&[0.0; 4]).unwrap();
        assert!((rec.gap - f0).abs() < 1e-15);
        assert_eq!(rec.iterations, 100);
        assert_eq!(rec.channel_uses, 400);
    }

    #[test]
    fn runs_are_deterministic_and_feasible() {
        let d = 6;
        let problem = hard(d);
        let code = DigitalCode::new(d, 1.0, 1.0, 8, 8, None, ShapeTransmission::Single).unwrap();
        let channel = ChannelSpec::from_snr(1.0, 50.0).unwrap();
        let mut cfg = RunConfig::new(&problem, &code, channel, 301, 42);
        cfg.record_trace = true;
        let a = psgd_run(&cfg).unwrap();
        let b = psgd_run(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.channel_uses, 300);
        let trace = a.trace.as_ref().unwrap();
        assert_eq!(trace.len(), 150);
        assert!(trace.iter().all(|r| problem.domain().contains(&r.query)));
        assert_eq!(a.ask_symbols, 150);
        cfg.seed = 43;
        assert_ne!(psgd_run(&cfg).unwrap().averaged, a.averaged);
    }

    #[test]
    fn forced_correct_demodulation_has_no_errors() {
        let d = 8;
        let problem = hard(d);
        let code = DigitalCode::new(d, 1.0, 1.0, 12, 8, None, ShapeTransmission::Single).unwrap();
        let channel = ChannelSpec::from_snr(1.0, 1.0).unwrap();
        let mut cfg = RunConfig::new(&problem, &code, channel, 2000, 5);
        let noisy = psgd_run(&cfg).unwrap();
        assert!(noisy.decode_errors > 0);
        cfg.demodulation = Demodulation::ForcedCorrect;
        let forced = psgd_run(&cfg).unwrap();
        assert_eq!(forced.decode_errors, 0);
        let avg = forced.ask_ledger.average_power().unwrap();
        assert!(avg <= 1.0);
    }

    #[test]
    fn budget_and_dimension_checks() {
        let problem = hard(4);
        let code = ScaledAnalogCode::new(4, 1.0, 1.0).unwrap();
        let channel = ChannelSpec::from_snr(1.0, 1.0).unwrap();
        assert!(psgd_run(&RunConfig::new(&problem, &code, channel, 3, 0)).is_err());
        let wrong = ScaledAnalogCode::new(5, 1.0, 1.0).unwrap();
        assert!(psgd_run(&RunConfig::new(&problem, &wrong, channel, 30, 0)).is_err());
    }

    #[test]
    fn baseline_books_no_power() {
        let problem = hard(4);
        let code = NoiselessBaseline {
            dim: 4,
            grad_bound: 1.0,
        };
        let channel = ChannelSpec::from_snr(1.0, 1.0).unwrap();
        let rec = psgd_run(&RunConfig::new(&problem, &code, channel, 64, 0)).unwrap();
        assert_eq!(rec.ledger.total_uses, 0);
        assert_eq!(rec.bias_norm(), 0.0);
        assert!((rec.alpha_hat_sq() - 1.0).abs() < 1e-12);
    }
}

//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//! repetitions = 30
//! output = "results.csv"
//! overlay = true
//!
//! [problem]
//! kind = "hard-abs"        # or "quadratic"
//! dimension = 64
//! diameter = 2.0
//! gradient_bound = 1.0
//! delta = 0.15
//! oracle = "bernoulli"     # bernoulli | gaussian | exact
//!
//! [channel]
//! power = 1.0
//! snr_db = [-10.0, 60.0]   # or: snr = [0.1, 1e6]
//!
//! [sweep]
//! budgets = [16384]
//! schemes = ["scaled-analog", "sampled-analog:8", "digital-ask:auto"]
//!
//! [digital]
//! levels = 8
//! ```
//!
//! Errors carry the line and field they refer to when it can be located.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::analog::{SampledAnalogCode, ScaledAnalogCode};
use crate::code::{CodeError, GradientCode, NoiselessBaseline};
use crate::digital::ask::bits_for_snr;
use crate::digital::ratq::default_intervals;
use crate::digital::{DigitalCode, ShapeTransmission};
use crate::optimizer::LearningRate;
use crate::problems::{random_signs, ConvexProblem, Domain, DomainKind, HardOracle};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::rotation::padded_dim;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(
                f,
                "config line {l}, field `{}`: {}",
                self.field, self.message
            ),
            None => write!(f, "config field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A gradient code named in the `schemes` list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeSpec {
    ScaledAnalog,
    SampledAnalog(usize),
    /// `bits = None` picks `r` from the SNR and budget.
    Digital {
        bits: Option<u32>,
        split: bool,
    },
    NoiselessBaseline,
}

impl FromStr for SchemeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bits = |arg: Option<&str>| -> Result<Option<u32>, String> {
            match arg {
                None | Some("auto") => Ok(None),
                Some(a) => a
                    .parse::<u32>()
                    .map(Some)
                    .map_err(|_| format!("bad bit count `{a}` in `{s}`")),
            }
        };
        match (name, arg) {
            ("scaled-analog", None) => Ok(Self::ScaledAnalog),
            ("sampled-analog", Some(a)) => a
                .parse::<usize>()
                .map(Self::SampledAnalog)
                .map_err(|_| format!("bad channel-use count `{a}` in `{s}`")),
            ("digital-ask", a) => Ok(Self::Digital {
                bits: bits(a)?,
                split: false,
            }),
            ("digital-ask-split", a) => Ok(Self::Digital {
                bits: bits(a)?,
                split: true,
            }),
            ("noiseless-baseline", None) => Ok(Self::NoiselessBaseline),
            _ => Err(format!(
                "unknown scheme `{s}` (expected scaled-analog, sampled-analog:<uses>, \
                 digital-ask[:auto|<bits>], digital-ask-split[:auto|<bits>], noiseless-baseline)"
            )),
        }
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ScaledAnalog => write!(f, "scaled-analog"),
            Self::SampledAnalog(l) => write!(f, "sampled-analog:{l}"),
            Self::Digital { bits, split } => {
                let name = if *split {
                    "digital-ask-split"
                } else {
                    "digital-ask"
                };
                match bits {
                    Some(b) => write!(f, "{name}:{b}"),
                    None => write!(f, "{name}:auto"),
                }
            }
            Self::NoiselessBaseline => write!(f, "noiseless-baseline"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    HardAbs,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignPattern {
    /// Drawn from the master seed and the dimension.
    Random,
    Alternating,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub diameter: f64,
    /// `None` for a quadratic means "the largest gradient norm on the
    /// domain", which makes the oracle noiseless.
    pub grad_bound: Option<f64>,
    pub delta: f64,
    pub oracle: HardOracle,
    pub domain: DomainKind,
    pub signs: SignPattern,
    /// Row-major rows of `A` for the quadratic.
    pub matrix: Option<Vec<Vec<f64>>>,
    pub target: Option<Vec<f64>>,
    pub center: Option<Vec<f64>>,
}

impl ProblemSpec {
    /// Builds the instance for dimension `d`.
    pub fn build(&self, d: usize, master_seed: u64) -> Result<ConvexProblem, String> {
        match self.kind {
            ProblemKind::HardAbs => {
                let v = match self.signs {
                    SignPattern::Random => {
                        let mut rng =
                            stream_rng(derive_seed(master_seed, &[d as u64]), Stream::Problem);
                        random_signs(d, &mut rng)
                    }
                    SignPattern::Alternating => (0..d)
                        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                        .collect(),
                    SignPattern::Ones => vec![1.0; d],
                };
                let domain = self.domain_for(d)?;
                ConvexProblem::hard_abs_on(
                    domain,
                    v,
                    self.delta,
                    self.grad_bound.unwrap_or(1.0),
                    self.oracle,
                )
                .map_err(|e| e.to_string())
            }
            ProblemKind::Quadratic => {
                let rows = self.matrix.as_ref().ok_or("quadratic needs `matrix`")?;
                let b = self.target.clone().ok_or("quadratic needs `target`")?;
                if rows.iter().any(|r| r.len() != d) {
                    return Err(format!("every matrix row must have {d} entries"));
                }
                let a = rows.iter().flatten().copied().collect();
                ConvexProblem::quadratic(self.domain_for(d)?, a, b, self.grad_bound)
                    .map_err(|e| e.to_string())
            }
        }
    }

    fn domain_for(&self, d: usize) -> Result<Domain, String> {
        let center = self.center.clone().unwrap_or_else(|| vec![0.0; d]);
        Domain::new(self.domain, center, self.diameter).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DigitalOptions {
    pub levels: usize,
    pub intervals: Option<usize>,
    pub transmission: ShapeTransmission,
}

impl Default for DigitalOptions {
    fn default() -> Self {
        Self {
            levels: 8,
            intervals: None,
            transmission: ShapeTransmission::Single,
        }
    }
}

/// Shape bits used by an automatic digital scheme: the SNR-driven value,
/// raised to `log₂(h k)` when it is smaller so one coordinate fits.
pub fn auto_bits(snr: f64, budget: u64, d: usize, opts: &DigitalOptions) -> u32 {
    let h = opts
        .intervals
        .unwrap_or_else(|| default_intervals(padded_dim(d)));
    let floor = (h * opts.levels).trailing_zeros();
    bits_for_snr(snr, budget as f64).max(floor)
}

/// Instantiates a scheme for one sweep cell.
pub fn build_code(
    scheme: SchemeSpec,
    d: usize,
    grad_bound: f64,
    power: f64,
    snr: f64,
    budget: u64,
    opts: &DigitalOptions,
) -> Result<Box<dyn GradientCode>, CodeError> {
    Ok(match scheme {
        SchemeSpec::ScaledAnalog => Box::new(ScaledAnalogCode::new(d, grad_bound, power)?),
        SchemeSpec::SampledAnalog(l) => Box::new(SampledAnalogCode::new(d, grad_bound, power, l)?),
        SchemeSpec::Digital { bits, split } => {
            let r = bits.unwrap_or_else(|| auto_bits(snr, budget, d, opts));
            let transmission = if split {
                ShapeTransmission::Split
            } else {
                opts.transmission
            };
            Box::new(DigitalCode::new(
                d,
                grad_bound,
                power,
                r,
                opts.levels,
                opts.intervals,
                transmission,
            )?)
        }
        SchemeSpec::NoiselessBaseline => Box::new(NoiselessBaseline { dim: d, grad_bound }),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub repetitions: usize,
    pub output: Option<PathBuf>,
    pub overlay: bool,
    /// Worker threads; 0 keeps the runtime default.
    pub threads: usize,
    pub problem: ProblemSpec,
    pub power: f64,
    /// Linear SNR grid.
    pub snrs: Vec<f64>,
    pub budgets: Vec<u64>,
    pub dimensions: Vec<usize>,
    pub schemes: Vec<SchemeSpec>,
    pub learning_rate: LearningRate,
    pub digital: DigitalOptions,
}

impl ExperimentConfig {
    /// The headline comparison: hard instance with the Bernoulli oracle,
    /// `d = 64`, `D = 2`, `B = 1`, analog against automatic digital.
    pub fn headline() -> Self {
        Self {
            seed: 2024,
            repetitions: 30,
            output: None,
            overlay: true,
            threads: 0,
            problem: ProblemSpec {
                kind: ProblemKind::HardAbs,
                diameter: 2.0,
                grad_bound: Some(1.0),
                delta: DEFAULT_DELTA,
                oracle: HardOracle::Bernoulli,
                domain: DomainKind::LinfBox,
                signs: SignPattern::Random,
                matrix: None,
                target: None,
                center: None,
            },
            power: 1.0,
            snrs: vec![0.1, 1e6],
            budgets: vec![1 << 14],
            dimensions: vec![64],
            schemes: vec![
                SchemeSpec::ScaledAnalog,
                SchemeSpec::Digital {
                    bits: None,
                    split: false,
                },
            ],
            learning_rate: LearningRate::Auto,
            digital: DigitalOptions::default(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, super::HarnessError> {
        let src = std::fs::read_to_string(path).map_err(|source| super::HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_toml_str(&src)?)
    }

    pub fn from_toml_str(src: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| line_at(src, s.start));
            ConfigError {
                line,
                field: line.and_then(|l| key_on_line(src, l)).unwrap_or_default(),
                message: e.message().trim().to_string(),
            }
        })?;
        raw.validate(src)
    }

    /// `|schemes| × |snrs| × |dimensions| × |budgets|`.
    pub fn cell_count(&self) -> usize {
        self.schemes.len() * self.snrs.len() * self.dimensions.len() * self.budgets.len()
    }
}

/// Hard-instance parameter δ used when the config leaves it out.
pub const DEFAULT_DELTA: f64 = 0.15;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    repetitions: Option<usize>,
    output: Option<String>,
    overlay: Option<bool>,
    threads: Option<usize>,
    problem: Option<RawProblem>,
    channel: RawChannel,
    sweep: RawSweep,
    digital: Option<RawDigital>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: Option<String>,
    dimension: Option<usize>,
    diameter: Option<f64>,
    gradient_bound: Option<f64>,
    delta: Option<f64>,
    oracle: Option<String>,
    domain: Option<String>,
    signs: Option<String>,
    matrix: Option<Vec<Vec<f64>>>,
    target: Option<Vec<f64>>,
    center: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    power: Option<f64>,
    snr_db: Option<Vec<f64>>,
    snr: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    budgets: Vec<u64>,
    schemes: Vec<String>,
    dimensions: Option<Vec<usize>>,
    learning_rate: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDigital {
    levels: Option<usize>,
    intervals: Option<usize>,
    split: Option<bool>,
}

/// 1-based line containing byte `offset`.
fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn key_on_line(src: &str, line: usize) -> Option<String> {
    let text = src.lines().nth(line - 1)?;
    let key = text.split('=').next()?.trim();
    (!key.is_empty() && !key.starts_with('[')).then(|| key.to_string())
}

/// Line of `key` inside `[section]` (top level when `section` is empty).
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Validator<'a> {
    src: &'a str,
}

impl Validator<'_> {
    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let field = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        ConfigError {
            line: locate(self.src, section, key),
            field,
            message: message.into(),
        }
    }
}

impl RawConfig {
    fn validate(self, src: &str) -> Result<ExperimentConfig, ConfigError> {
        let v = Validator { src };
        let head = ExperimentConfig::headline();

        let repetitions = self.repetitions.unwrap_or(head.repetitions);
        if repetitions == 0 {
            return Err(v.err("", "repetitions", "must be at least 1"));
        }

        let p = self.problem.unwrap_or_default();
        let kind = match p.kind.as_deref().unwrap_or("hard-abs") {
            "hard-abs" => ProblemKind::HardAbs,
            "quadratic" => ProblemKind::Quadratic,
            other => {
                return Err(v.err(
                    "problem",
                    "kind",
                    format!("expected `hard-abs` or `quadratic`, got `{other}`"),
                ))
            }
        };
        let oracle = match p.oracle.as_deref().unwrap_or("bernoulli") {
            "bernoulli" => HardOracle::Bernoulli,
            "gaussian" => HardOracle::Gaussian,
            "exact" => HardOracle::ExactPlusGaussian,
            other => {
                return Err(v.err(
                    "problem",
                    "oracle",
                    format!("expected bernoulli, gaussian or exact, got `{other}`"),
                ))
            }
        };
        let default_domain = match kind {
            ProblemKind::HardAbs => "box",
            ProblemKind::Quadratic => "ball",
        };
        let domain = match p.domain.as_deref().unwrap_or(default_domain) {
            "box" => DomainKind::LinfBox,
            "ball" => DomainKind::L2Ball,
            other => {
                return Err(v.err(
                    "problem",
                    "domain",
                    format!("expected `box` or `ball`, got `{other}`"),
                ))
            }
        };
        let signs = match p.signs.as_deref().unwrap_or("random") {
            "random" => SignPattern::Random,
            "alternating" => SignPattern::Alternating,
            "ones" => SignPattern::Ones,
            other => {
                return Err(v.err(
                    "problem",
                    "signs",
                    format!("expected random, alternating or ones, got `{other}`"),
                ))
            }
        };
        let diameter = p.diameter.unwrap_or(head.problem.diameter);
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(v.err("problem", "diameter", "must be positive"));
        }
        let grad_bound = match (kind, p.gradient_bound) {
            (_, Some(b)) if !(b > 0.0 && b.is_finite()) => {
                return Err(v.err("problem", "gradient_bound", "must be positive"))
            }
            (_, Some(b)) => Some(b),
            (ProblemKind::HardAbs, None) => Some(1.0),
            (ProblemKind::Quadratic, None) => None,
        };
        let delta = p.delta.unwrap_or(DEFAULT_DELTA);
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(v.err("problem", "delta", "must lie in (0, 1/2]"));
        }
        let dimension = match kind {
            ProblemKind::Quadratic => {
                let rows = p
                    .matrix
                    .as_ref()
                    .ok_or_else(|| v.err("problem", "matrix", "required for a quadratic"))?;
                let target = p
                    .target
                    .as_ref()
                    .ok_or_else(|| v.err("problem", "target", "required for a quadratic"))?;
                let d = rows.first().map_or(0, Vec::len);
                if d == 0 || rows.iter().any(|r| r.len() != d) {
                    return Err(v.err(
                        "problem",
                        "matrix",
                        "rows must be nonempty and equal length",
                    ));
                }
                if target.len() != rows.len() {
                    return Err(v.err("problem", "target", "needs one entry per matrix row"));
                }
                if p.dimension.is_some_and(|pd| pd != d) {
                    return Err(v.err("problem", "dimension", "disagrees with the matrix width"));
                }
                d
            }
            ProblemKind::HardAbs => p.dimension.unwrap_or(64),
        };
        if dimension == 0 {
            return Err(v.err("problem", "dimension", "must be positive"));
        }
        if let Some(c) = &p.center {
            if c.len() != dimension {
                return Err(v.err("problem", "center", format!("needs {dimension} entries")));
            }
        }

        let power = self.channel.power.unwrap_or(1.0);
        if !(power > 0.0 && power.is_finite()) {
            return Err(v.err("channel", "power", "must be positive"));
        }
        let snrs = match (&self.channel.snr_db, &self.channel.snr) {
            (Some(db), None) => db.iter().map(|x| 10f64.powf(x / 10.0)).collect::<Vec<_>>(),
            (None, Some(lin)) => lin.clone(),
            (Some(_), Some(_)) => {
                return Err(v.err("channel", "snr", "give either `snr` or `snr_db`, not both"))
            }
            (None, None) => return Err(v.err("channel", "snr", "`snr` or `snr_db` is required")),
        };
        let snr_key = if self.channel.snr.is_some() {
            "snr"
        } else {
            "snr_db"
        };
        if snrs.is_empty() {
            return Err(v.err("channel", snr_key, "grid is empty"));
        }
        if snrs.iter().any(|s| !(*s > 0.0)) {
            return Err(v.err("channel", snr_key, "every SNR must be positive"));
        }

        let sw = self.sweep;
        if sw.budgets.is_empty() || sw.budgets.contains(&0) {
            return Err(v.err(
                "sweep",
                "budgets",
                "need a nonempty list of positive budgets",
            ));
        }
        if sw.budgets.iter().any(|&n| n < 2) {
            return Err(v.err("sweep", "budgets", "budgets must be at least 2"));
        }
        if sw.schemes.is_empty() {
            return Err(v.err("sweep", "schemes", "need at least one scheme"));
        }
        let schemes = sw
            .schemes
            .iter()
            .map(|s| s.parse::<SchemeSpec>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|m| v.err("sweep", "schemes", m))?;
        let dimensions = sw.dimensions.unwrap_or_else(|| vec![dimension]);
        if dimensions.is_empty() || dimensions.contains(&0) {
            return Err(v.err(
                "sweep",
                "dimensions",
                "need a nonempty list of positive dimensions",
            ));
        }
        if kind == ProblemKind::Quadratic && dimensions.iter().any(|&d| d != dimension) {
            return Err(v.err(
                "sweep",
                "dimensions",
                "a quadratic has the matrix dimension only",
            ));
        }
        if p.center.is_some() && dimensions.iter().any(|&d| d != dimension) {
            return Err(v.err(
                "sweep",
                "dimensions",
                "an explicit center fixes the dimension",
            ));
        }
        let learning_rate = match sw.learning_rate {
            None => LearningRate::Auto,
            Some(eta) if eta >= 0.0 && eta.is_finite() => LearningRate::Explicit(eta),
            Some(_) => return Err(v.err("sweep", "learning_rate", "must be ≥ 0")),
        };

        let mut digital = DigitalOptions::default();
        if let Some(dg) = self.digital {
            if let Some(k) = dg.levels {
                if k < 2 || !k.is_power_of_two() {
                    return Err(v.err("digital", "levels", "must be a power of two ≥ 2"));
                }
                digital.levels = k;
            }
            if let Some(h) = dg.intervals {
                if h == 0 || !h.is_power_of_two() {
                    return Err(v.err("digital", "intervals", "must be a power of two ≥ 1"));
                }
                digital.intervals = Some(h);
            }
            if dg.split == Some(true) {
                digital.transmission = ShapeTransmission::Split;
            }
        }

        Ok(ExperimentConfig {
            seed: self.seed.unwrap_or(head.seed),
            repetitions,
            output: self.output.map(PathBuf::from),
            overlay: self.overlay.unwrap_or(false),
            threads: self.threads.unwrap_or(0),
            problem: ProblemSpec {
                kind,
                diameter,
                grad_bound,
                delta,
                oracle,
                domain,
                signs,
                matrix: p.matrix,
                target: p.target,
                center: p.center,
            },
            power,
            snrs,
            budgets: sw.budgets,
            dimensions,
            schemes,
            learning_rate,
            digital,
        })
    }
}

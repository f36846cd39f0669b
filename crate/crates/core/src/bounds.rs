//! Closed-form convergence rates.
//!
//! Every rate is `c·DB/√N` times a slowdown factor, with the universal
//! constant `c` set by [`RateQuery::constant`] (1 by default). `log` is base
//! 2 and `ln` is natural. Bounds that only hold in a regime return
//! [`BoundError::Regime`] outside it.

use thiserror::Error;

use crate::digital::ask::bits_for_snr_unfloored;
use crate::digital::ratq::ln_star;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("{bound} does not apply: {reason}")]
    Regime { bound: &'static str, reason: String },
    #[error("invalid query: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateQuery {
    /// Channel-use budget `N`.
    pub budget: f64,
    pub dim: usize,
    pub snr: f64,
    pub diameter: f64,
    pub grad_bound: f64,
    /// Shape bits. `None` means `log(√(4·SNR/ln N) + 1)`, unrounded.
    pub bits: Option<f64>,
    /// Coordinates kept by a `k`-coordinate sampling code.
    pub coords: Option<usize>,
    /// Universal constant multiplying every bound.
    pub constant: f64,
}

impl RateQuery {
    pub fn new(budget: f64, dim: usize, snr: f64) -> Self {
        Self {
            budget,
            dim,
            snr,
            diameter: 1.0,
            grad_bound: 1.0,
            bits: None,
            coords: None,
            constant: 1.0,
        }
    }

    fn check(&self) -> Result<(), BoundError> {
        if !(self.budget >= 1.0) {
            return Err(BoundError::Parameter(format!(
                "N must be at least 1, got {}",
                self.budget
            )));
        }
        if self.dim == 0 {
            return Err(BoundError::Parameter("d must be positive".into()));
        }
        if !(self.snr > 0.0) {
            return Err(BoundError::Parameter(format!(
                "snr must be positive, got {}",
                self.snr
            )));
        }
        if !(self.diameter > 0.0 && self.grad_bound > 0.0 && self.constant > 0.0) {
            return Err(BoundError::Parameter(
                "D, B and the constant must be positive".into(),
            ));
        }
        Ok(())
    }

    fn d(&self) -> f64 {
        self.dim as f64
    }

    /// `c·DB/√N`.
    fn base(&self) -> f64 {
        self.constant * self.diameter * self.grad_bound / self.budget.sqrt()
    }

    fn rate(&self, prefactor: f64, factor: f64) -> Rate {
        Rate {
            value: prefactor * self.base() * factor,
            factor,
        }
    }

    /// Bits used by the digital bounds.
    pub fn shape_bits(&self) -> f64 {
        self.bits
            .unwrap_or_else(|| bits_for_snr_unfloored(self.snr, self.budget))
    }
}

/// A bound and its slowdown factor over `DB/√N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub value: f64,
    pub factor: f64,
}

fn regime(bound: &'static str, reason: String) -> BoundError {
    BoundError::Regime { bound, reason }
}

/// `DB/√N`.
pub fn classic_rate(q: &RateQuery) -> Result<f64, BoundError> {
    q.check()?;
    Ok(q.base())
}

/// Lower bound for any code: factor `√(d / min{d, ½·log(1 + SNR)})`.
/// Needs `N ≥ d/log(1 + SNR)`.
pub fn general_lower(q: &RateQuery) -> Result<Rate, BoundError> {
    q.check()?;
    let cap = (1.0 + q.snr).log2();
    let need = q.d() / cap;
    if q.budget < need {
        return Err(regime(
            "general lower bound",
            format!("needs N ≥ d/log(1+snr) = {need}"),
        ));
    }
    Ok(q.rate(1.0, (q.d() / q.d().min(0.5 * cap)).sqrt()))
}

fn analog_factor(q: &RateQuery) -> f64 {
    (q.d() + q.d() / q.snr).sqrt()
}

/// Scaled analog upper bound: factor `√(d + d/SNR)`.
pub fn analog_upper(q: &RateQuery) -> Result<Rate, BoundError> {
    q.check()?;
    Ok(q.rate(1.0, analog_factor(q)))
}

/// Lower bound for analog codes, same factor. Needs `N ≥ d(1 + 1/SNR)`.
pub fn analog_lower(q: &RateQuery) -> Result<Rate, BoundError> {
    q.check()?;
    let need = q.d() * (1.0 + 1.0 / q.snr);
    if q.budget < need {
        return Err(regime(
            "analog lower bound",
            format!("needs N ≥ d(1+1/snr) = {need}"),
        ));
    }
    Ok(q.rate(1.0, analog_factor(q)))
}

/// Low-SNR band where analog codes are optimal: both sides carry the factor
/// `√(d/log(1 + SNR))`. Needs `SNR < 1` and `N ≥ d/log(1 + SNR)`.
pub fn analog_low_snr_band(q: &RateQuery) -> Result<(Rate, Rate), BoundError> {
    q.check()?;
    if q.snr >= 1.0 {
        return Err(regime(
            "low-SNR analog band",
            format!("needs snr < 1, got {}", q.snr),
        ));
    }
    let cap = (1.0 + q.snr).log2();
    let need = q.d() / cap;
    if q.budget < need {
        return Err(regime(
            "low-SNR analog band",
            format!("needs N ≥ d/log(1+snr) = {need}"),
        ));
    }
    let r = q.rate(1.0, (q.d() / cap).sqrt());
    Ok((r, r))
}

/// Digital upper bound with an ideal shape quantizer: `2DB/√N` times
/// `√(d / min{d, r})`.
pub fn ask_upper_ideal(q: &RateQuery) -> Result<Rate, BoundError> {
    q.check()?;
    let r = q.shape_bits();
    if !(r > 0.0) {
        return Err(BoundError::Parameter(format!(
            "r must be positive, got {r}"
        )));
    }
    Ok(q.rate(2.0, (q.d() / q.d().min(r)).sqrt()))
}

/// Digital upper bound with the gain-shape RATQ code: `2DB/√N` times
/// `√(d / min{d, r/48})`. Needs `ln*(d/3) ≤ 7` and `r ≥ 6`.
pub fn ask_upper(q: &RateQuery) -> Result<Rate, BoundError> {
    q.check()?;
    let r = q.shape_bits();
    if r < 6.0 {
        return Err(regime("RATQ upper bound", format!("needs r ≥ 6, got {r}")));
    }
    let tower = ln_star(q.d() / 3.0);
    if tower > 7 {
        return Err(regime(
            "RATQ upper bound",
            format!("needs ln*(d/3) ≤ 7, got {tower}"),
        ));
    }
    Ok(q.rate(2.0, (q.d() / q.d().min(r / 48.0)).sqrt()))
}

/// Lower bound for codes that send `k` coordinates and their indices:
/// factor `√(d / min{d, k·log(d/k)})`, independent of SNR. At `k = d`,
/// where `k·log(d/k)` vanishes, the envelope `k·log(d/k) + k(1 + log e)`
/// is used instead.
pub fn kcs_lower(q: &RateQuery) -> Result<Rate, BoundError> {
    q.check()?;
    let k = q
        .coords
        .ok_or_else(|| BoundError::Parameter("k is required".into()))?;
    if k == 0 || k > q.dim {
        return Err(BoundError::Parameter(format!(
            "need 1 ≤ k ≤ d = {}, got {k}",
            q.dim
        )));
    }
    let kf = k as f64;
    let mut budget = kf * (q.d() / kf).log2();
    if budget == 0.0 {
        budget += kf * (1.0 + std::f64::consts::LOG2_E);
    }
    Ok(q.rate(1.0, (q.d() / q.d().min(budget)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    Analog,
    Digital,
}

/// One row of [`crossover_table`]. Factors are relative to `DB/√N` and
/// include the prefactor 2 of the digital bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverRow {
    pub snr: f64,
    pub analog_factor: f64,
    pub digital_factor: f64,
    pub winner: Winner,
}

/// Scaled analog against gain-shape digital across an SNR grid. The digital
/// factor is evaluated even where its preconditions fail.
pub fn crossover_table(
    dim: usize,
    budget: f64,
    snrs: &[f64],
) -> Result<Vec<CrossoverRow>, BoundError> {
    snrs.iter()
        .map(|&snr| {
            let q = RateQuery::new(budget, dim, snr);
            q.check()?;
            let analog = analog_factor(&q);
            let r = q.shape_bits();
            let digital = 2.0 * (q.d() / q.d().min(r / 48.0)).sqrt();
            Ok(CrossoverRow {
                snr,
                analog_factor: analog,
                digital_factor: digital,
                winner: if digital < analog {
                    Winner::Digital
                } else {
                    Winner::Analog
                },
            })
        })
        .collect()
}

//! Additive white Gaussian noise channel with an average power budget.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter `{0}`")]
    Parameter(&'static str),
    #[error("power ledger is empty")]
    EmptyLedger,
}

/// Noise variance and power budget of the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    sigma2: f64,
    power: f64,
}

impl ChannelSpec {
    /// `sigma2 = 0` is a noiseless link with infinite SNR.
    pub fn new(sigma2: f64, power: f64) -> Result<Self, ChannelError> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(ChannelError::Parameter("sigma2"));
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(ChannelError::Parameter("power"));
        }
        Ok(Self { sigma2, power })
    }

    /// Noise variance `P / snr`.
    pub fn from_snr(power: f64, snr: f64) -> Result<Self, ChannelError> {
        if !(snr > 0.0) {
            return Err(ChannelError::Parameter("snr"));
        }
        if snr.is_infinite() {
            return Self::new(0.0, power);
        }
        Self::new(power / snr, power)
    }

    pub fn noiseless(power: f64) -> Result<Self, ChannelError> {
        Self::new(0.0, power)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn snr(&self) -> f64 {
        self.power / self.sigma2
    }
}

/// Running energy and channel-use totals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PowerLedger {
    pub total_energy: f64,
    pub total_uses: u64,
}

impl PowerLedger {
    pub fn record(&mut self, codeword: &[f64]) {
        self.total_energy += codeword.iter().map(|c| c * c).sum::<f64>();
        self.total_uses += codeword.len() as u64;
    }

    pub fn record_symbol(&mut self, symbol: f64) {
        self.total_energy += symbol * symbol;
        self.total_uses += 1;
    }

    pub fn merge(&mut self, other: &PowerLedger) {
        self.total_energy += other.total_energy;
        self.total_uses += other.total_uses;
    }

    /// Average energy per channel use, if any use was recorded.
    pub fn average_power(&self) -> Option<f64> {
        (self.total_uses > 0).then(|| self.total_energy / self.total_uses as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerAudit {
    Ok {
        average: f64,
    },
    /// `excess_ratio` is the average power divided by `P`.
    Violation {
        average: f64,
        excess_ratio: f64,
    },
}

impl PowerAudit {
    pub fn is_ok(&self) -> bool {
        matches!(self, PowerAudit::Ok { .. })
    }
}

/// Checks `energy / uses ≤ P·(1 + tolerance)`.
pub fn audit_power(
    ledger: &PowerLedger,
    spec: &ChannelSpec,
    tolerance: f64,
) -> Result<PowerAudit, ChannelError> {
    let average = ledger.average_power().ok_or(ChannelError::EmptyLedger)?;
    if average <= spec.power * (1.0 + tolerance) {
        Ok(PowerAudit::Ok { average })
    } else {
        Ok(PowerAudit::Violation {
            average,
            excess_ratio: average / spec.power,
        })
    }
}

/// Sends `codeword` through `ℓ = codeword.len()` independent uses of the
/// channel and books its energy in `ledger`.
pub fn transmit(
    spec: &ChannelSpec,
    codeword: &[f64],
    rng: &mut SimRng,
    ledger: &mut PowerLedger,
) -> Vec<f64> {
    ledger.record(codeword);
    let sigma = spec.sigma();
    codeword
        .iter()
        .map(|&c| {
            if sigma == 0.0 {
                c
            } else {
                let z: f64 = rng.sample(StandardNormal);
                c + sigma * z
            }
        })
        .collect()
}

/// A draw from `N(0, σ²)` conditioned on `|Z| < bound`.
///
/// For `bound ≥ σ` plain rejection accepts at least 68% of draws; for
/// narrower windows a uniform proposal on `(−bound, bound)` is accepted with
/// probability `exp(−u²/2σ²) ≥ e^{−1/2}`.
pub fn truncated_noise(sigma: f64, bound: f64, rng: &mut SimRng) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    if bound >= sigma {
        loop {
            let z: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
            if z.abs() < bound {
                return z;
            }
        }
    }
    loop {
        let u = rng.random_range(-bound..bound);
        if rng.random::<f64>() < (-(u * u) / (2.0 * sigma * sigma)).exp() {
            return u;
        }
    }
}

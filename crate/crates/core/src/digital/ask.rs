//! Amplitude shift keying: `2^r` equally spaced points on `[−√P, √P]`.
//!
//! Point `k` (0-based) is `−√P + k·2√P/(2^r − 1)`. Demodulation works in the
//! index domain by rounding, so it never enumerates the constellation and
//! stays exact for large `r`. Exact midpoints go to the lower index.

use crate::code::CodeError;

/// Largest supported resolution. Neighbouring points stay thousands of ulps
/// apart, so noiseless demodulation is exact.
pub const MAX_BITS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AskConfig {
    bits: u32,
    power: f64,
}

impl AskConfig {
    pub fn new(bits: u32, power: f64) -> Result<Self, CodeError> {
        if bits == 0 || bits > MAX_BITS {
            return Err(crate::code::parameter(
                "bits",
                format!("need 1 ≤ r ≤ {MAX_BITS}, got {bits}"),
            ));
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(crate::code::parameter("power", "must be positive"));
        }
        Ok(Self { bits, power })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    /// `2^r − 1`, the largest index.
    pub fn max_index(&self) -> u64 {
        (1u64 << self.bits) - 1
    }

    pub fn points(&self) -> u64 {
        1u64 << self.bits
    }

    /// Half the distance between neighbouring points, `√P/(2^r − 1)`.
    pub fn half_spacing(&self) -> f64 {
        self.power.sqrt() / self.max_index() as f64
    }

    /// The `index`-th point. `|symbol|² ≤ P` holds exactly in floating point.
    pub fn modulate(&self, index: u64) -> Result<f64, CodeError> {
        let m = self.max_index();
        if index > m {
            return Err(CodeError::IndexRange {
                index,
                bits: self.bits,
            });
        }
        let amp = self.power.sqrt();
        let m = m as f64;
        let mut s = (amp * (2.0 * index as f64 - m) / m).clamp(-amp, amp);
        // √P squared can round above P; step toward zero until it doesn't.
        while s * s > self.power {
            s = f64::from_bits(s.to_bits() - 1);
        }
        Ok(s)
    }

    /// Index of the nearest point, ties to the lower index.
    pub fn demodulate(&self, y: f64) -> u64 {
        let amp = self.power.sqrt();
        let m = self.max_index();
        let t = (y + amp) * m as f64 / (2.0 * amp);
        if !(t > 0.5) {
            // Also catches NaN.
            return 0;
        }
        let idx = (t - 0.5).ceil();
        if idx >= m as f64 {
            m
        } else {
            idx as u64
        }
    }
}

pub fn ask_modulate(index: u64, cfg: &AskConfig) -> Result<f64, CodeError> {
    cfg.modulate(index)
}

pub fn ask_demodulate(y: f64, cfg: &AskConfig) -> u64 {
    cfg.demodulate(y)
}

/// Resolution for a given SNR and budget: `⌊log₂(√(4·SNR/ln N) + 1)⌋`,
/// at least 1.
pub fn bits_for_snr(snr: f64, budget: f64) -> u32 {
    assert!(budget > 1.0, "budget must exceed 1");
    let raw = bits_for_snr_unfloored(snr, budget);
    // Guard against log2 landing a hair under an exact integer.
    let r = (raw + 1e-12).floor();
    if r < 1.0 {
        1
    } else {
        r.min(MAX_BITS as f64) as u32
    }
}

/// `log₂(√(4·SNR/ln N) + 1)` without rounding.
pub fn bits_for_snr_unfloored(snr: f64, budget: f64) -> f64 {
    ((4.0 * snr / budget.ln()).sqrt() + 1.0).log2()
}

/// Per-symbol bound `exp(−2·SNR/(2^r − 1)²)`.
pub fn symbol_error_bound(bits: u32, snr: f64) -> f64 {
    let m = ((1u64 << bits) - 1) as f64;
    (-2.0 * snr / (m * m)).exp()
}

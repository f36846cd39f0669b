//! Rotated adaptive tetra-iterated quantizer for unit-norm shapes.
//!
//! The input is an already rotated vector of length `d'`. A public sample of
//! `μd` coordinates is kept; each is placed in the smallest interval
//! `[−M_j, M_j]` of a tetra-iterated ladder that contains it and rounded
//! stochastically to one of `k` uniform levels of that interval.
//!
//! Bit layout of a packed shape: all level indices first, then all interval
//! indices, each block coordinate-major in sample order, most significant
//! bit first.

use rand::Rng;

use crate::analog::sample_without_replacement;
use crate::code::{parameter, CodeError};
use crate::rng::SimRng;

/// `e^{*n}`: the tower `e^{e^{⋯}}` of height `n`, with `e^{*0} = 1`.
/// Saturates at `f64::MAX` instead of overflowing.
pub fn tetration_e(n: u32) -> f64 {
    let mut v = 1.0f64;
    for _ in 0..n {
        v = v.exp();
        if !v.is_finite() {
            return f64::MAX;
        }
    }
    v
}

/// Smallest number of natural logarithms that takes `x` below 1, counting
/// at least one, so `ln*(x) = 1` for every `x < e`.
pub fn ln_star(x: f64) -> u32 {
    let mut v = x.ln();
    let mut n = 1;
    while v >= 1.0 {
        v = v.ln();
        n += 1;
    }
    n
}

fn log2_exact(v: usize) -> u32 {
    debug_assert!(v.is_power_of_two());
    v.trailing_zeros()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatqConfig {
    padded_dim: usize,
    bits: u32,
    levels: usize,
    intervals: usize,
    ladder: Vec<f64>,
    sample_size: usize,
}

impl RatqConfig {
    /// `levels` is `k` (power of two, at least 2). `intervals` overrides the
    /// default `h = 2^⌈log₂(1 + ln*(d'/3))⌉`.
    pub fn new(
        padded_dim: usize,
        bits: u32,
        levels: usize,
        intervals: Option<usize>,
    ) -> Result<Self, CodeError> {
        if padded_dim == 0 {
            return Err(parameter("padded_dim", "must be positive"));
        }
        if levels < 2 || !levels.is_power_of_two() {
            return Err(parameter(
                "levels",
                format!("need a power of two ≥ 2, got {levels}"),
            ));
        }
        let intervals = match intervals {
            Some(h) if h == 0 || !h.is_power_of_two() => {
                return Err(parameter(
                    "intervals",
                    format!("need a power of two ≥ 1, got {h}"),
                ))
            }
            Some(h) => h,
            None => default_intervals(padded_dim),
        };
        let base = 3.0 / padded_dim as f64;
        let ladder: Vec<f64> = (0..intervals as u32)
            .map(|j| (base * tetration_e(j)).sqrt())
            .collect();
        let widest = *ladder.last().expect("at least one interval");
        if widest < 1.0 {
            return Err(parameter(
                "intervals",
                format!("widest interval {widest} < 1 would overflow on unit shapes"),
            ));
        }
        let per_coord = log2_exact(levels) + log2_exact(intervals);
        if bits < per_coord {
            return Err(parameter(
                "bits",
                format!("need r ≥ log₂(hk) = {per_coord}, got {bits}"),
            ));
        }
        let sample_size = (bits.div_ceil(per_coord) as usize).min(padded_dim);
        Ok(Self {
            padded_dim,
            bits,
            levels,
            intervals,
            ladder,
            sample_size,
        })
    }

    pub fn padded_dim(&self) -> usize {
        self.padded_dim
    }

    /// Requested bit budget `r`.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// `M_1, …, M_h`.
    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    /// `μd = min(⌈r / log₂(hk)⌉, d')`.
    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// Sampling ratio `μ = μd/d'`.
    pub fn mu(&self) -> f64 {
        self.sample_size as f64 / self.padded_dim as f64
    }

    pub fn level_bits(&self) -> u32 {
        log2_exact(self.levels) * self.sample_size as u32
    }

    pub fn interval_bits(&self) -> u32 {
        log2_exact(self.intervals) * self.sample_size as u32
    }

    /// Bits actually carried, `μd·log₂(hk)`.
    pub fn payload_bits(&self) -> u32 {
        self.level_bits() + self.interval_bits()
    }

    /// `−M_j + l·2M_j/(k − 1)` for 0-based `j` and `l`.
    pub fn level_value(&self, interval: usize, level: usize) -> f64 {
        let m = self.ladder[interval];
        m * (2.0 * level as f64 / (self.levels - 1) as f64 - 1.0)
    }

    /// Root second moment of the dequantized shape for unit input,
    /// `√((1/μ)(9/(k − 1)² + 1))`.
    pub fn declared_alpha(&self) -> f64 {
        let k1 = (self.levels - 1) as f64;
        ((9.0 / (k1 * k1) + 1.0) / self.mu()).sqrt()
    }

    /// Draws the public sample set.
    pub fn draw_sample(&self, shared: &mut SimRng) -> Vec<usize> {
        sample_without_replacement(self.padded_dim, self.sample_size, shared)
    }
}

/// `2^⌈log₂(1 + ln*(d'/3))⌉`.
pub fn default_intervals(padded_dim: usize) -> usize {
    let n = 1 + ln_star(padded_dim as f64 / 3.0) as usize;
    n.next_power_of_two()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedShape {
    pub sample: Vec<usize>,
    /// 0-based interval index per sampled coordinate.
    pub intervals: Vec<usize>,
    /// 0-based level index per sampled coordinate.
    pub levels: Vec<usize>,
}

/// Quantizes a rotated shape. The sample set is read from `shared`, the
/// rounding coins from `private`.
pub fn ratq_quantize(
    rotated: &[f64],
    cfg: &RatqConfig,
    shared: &mut SimRng,
    private: &mut SimRng,
) -> Result<QuantizedShape, CodeError> {
    let sample = cfg.draw_sample(shared);
    quantize_sampled(rotated, cfg, sample, private)
}

/// Quantizes the coordinates in `sample`, which the caller drew.
pub fn quantize_sampled(
    rotated: &[f64],
    cfg: &RatqConfig,
    sample: Vec<usize>,
    private: &mut SimRng,
) -> Result<QuantizedShape, CodeError> {
    crate::code::check_len(cfg.padded_dim, rotated.len())?;
    let widest = *cfg.ladder.last().expect("nonempty ladder");
    let top = (cfg.levels - 1) as f64;
    let mut intervals = Vec::with_capacity(sample.len());
    let mut levels = Vec::with_capacity(sample.len());
    for &i in &sample {
        let x = rotated[i];
        if !(x.abs() <= widest * (1.0 + 1e-12)) {
            return Err(CodeError::Overflow {
                value: x,
                limit: widest,
            });
        }
        let x = x.clamp(-widest, widest);
        let j = cfg
            .ladder
            .iter()
            .position(|&m| x.abs() <= m)
            .unwrap_or(cfg.intervals - 1);
        let m = cfg.ladder[j];
        let pos = ((x + m) / (2.0 * m) * top).clamp(0.0, top);
        let lo = pos.floor().min(top - 1.0);
        let frac = pos - lo;
        let up = private.random::<f64>() < frac;
        intervals.push(j);
        levels.push(lo as usize + usize::from(up));
    }
    Ok(QuantizedShape {
        sample,
        intervals,
        levels,
    })
}

fn check_shape(q: &QuantizedShape, cfg: &RatqConfig) -> Result<(), CodeError> {
    let n = cfg.sample_size;
    if q.sample.len() != n || q.intervals.len() != n || q.levels.len() != n {
        return Err(CodeError::Malformed(format!(
            "expected {n} sampled coordinates"
        )));
    }
    if let Some(&i) = q.sample.iter().find(|&&i| i >= cfg.padded_dim) {
        return Err(CodeError::Malformed(format!("coordinate {i} out of range")));
    }
    if let Some(&j) = q.intervals.iter().find(|&&j| j >= cfg.intervals) {
        return Err(CodeError::Malformed(format!("interval {j} out of range")));
    }
    if let Some(&l) = q.levels.iter().find(|&&l| l >= cfg.levels) {
        return Err(CodeError::Malformed(format!("level {l} out of range")));
    }
    Ok(())
}

/// Vector of length `d'` with sampled coordinates at `level/μ` and the rest
/// zero. The caller undoes the rotation.
pub fn ratq_dequantize(q: &QuantizedShape, cfg: &RatqConfig) -> Result<Vec<f64>, CodeError> {
    check_shape(q, cfg)?;
    let inv_mu = 1.0 / cfg.mu();
    let mut out = vec![0.0; cfg.padded_dim];
    for ((&i, &j), &l) in q.sample.iter().zip(&q.intervals).zip(&q.levels) {
        out[i] = cfg.level_value(j, l) * inv_mu;
    }
    Ok(out)
}

fn pack_block(values: &[usize], width: u32) -> u64 {
    values
        .iter()
        .fold(0u64, |acc, &v| (acc << width) | v as u64)
}

fn unpack_block(mut index: u64, count: usize, width: u32) -> Vec<usize> {
    let mask = (1u64 << width) - 1;
    let mut out = vec![0usize; count];
    for slot in out.iter_mut().rev() {
        *slot = (index & mask) as usize;
        index >>= width;
    }
    out
}

fn check_index(index: u64, bits: u32) -> Result<(), CodeError> {
    if bits < 64 && index >> bits != 0 {
        return Err(CodeError::IndexRange { index, bits });
    }
    Ok(())
}

fn check_payload(cfg: &RatqConfig) -> Result<(), CodeError> {
    if cfg.payload_bits() > 63 {
        return Err(parameter(
            "bits",
            format!(
                "payload of {} bits does not fit a symbol",
                cfg.payload_bits()
            ),
        ));
    }
    Ok(())
}

/// Level block followed by interval block, `payload_bits()` wide.
pub fn pack_shape_bits(q: &QuantizedShape, cfg: &RatqConfig) -> Result<u64, CodeError> {
    check_shape(q, cfg)?;
    check_payload(cfg)?;
    Ok((pack_levels(q, cfg)? << cfg.interval_bits()) | pack_intervals(q, cfg)?)
}

/// Inverse of [`pack_shape_bits`] given the public sample set.
pub fn unpack_shape_bits(
    index: u64,
    cfg: &RatqConfig,
    sample: &[usize],
) -> Result<QuantizedShape, CodeError> {
    check_payload(cfg)?;
    check_index(index, cfg.payload_bits())?;
    let ib = cfg.interval_bits();
    let levels_index = index >> ib;
    let intervals_index = if ib == 0 {
        0
    } else {
        index & ((1u64 << ib) - 1)
    };
    unpack_split(levels_index, intervals_index, cfg, sample)
}

/// Level block alone, `level_bits()` wide.
pub fn pack_levels(q: &QuantizedShape, cfg: &RatqConfig) -> Result<u64, CodeError> {
    check_shape(q, cfg)?;
    Ok(pack_block(&q.levels, log2_exact(cfg.levels)))
}

/// Interval block alone, `interval_bits()` wide.
pub fn pack_intervals(q: &QuantizedShape, cfg: &RatqConfig) -> Result<u64, CodeError> {
    check_shape(q, cfg)?;
    Ok(pack_block(&q.intervals, log2_exact(cfg.intervals)))
}

/// Rebuilds a shape from separately sent level and interval blocks.
pub fn unpack_split(
    levels_index: u64,
    intervals_index: u64,
    cfg: &RatqConfig,
    sample: &[usize],
) -> Result<QuantizedShape, CodeError> {
    check_index(levels_index, cfg.level_bits())?;
    check_index(intervals_index, cfg.interval_bits())?;
    let n = cfg.sample_size;
    let q = QuantizedShape {
        sample: sample.to_vec(),
        levels: unpack_block(levels_index, n, log2_exact(cfg.levels)),
        intervals: unpack_block(intervals_index, n, log2_exact(cfg.intervals)),
    };
    check_shape(&q, cfg)?;
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::rotation::RotationOperator;
    use proptest::prelude::*;

    #[test]
    fn tetration_and_ln_star() {
        assert_eq!(tetration_e(0), 1.0);
        assert_eq!(tetration_e(1), std::f64::consts::E);
        assert!((tetration_e(2) - 15.154_262_241_479_262).abs() < 1e-12);
        assert_eq!(tetration_e(5), f64::MAX);
        assert_eq!(ln_star(1.0), 1);
        assert_eq!(ln_star(2.7), 1);
        assert_eq!(ln_star(3.0), 2);
        assert_eq!(ln_star(64.0 / 3.0), 3);
    }

    #[test]
    fn ladder_for_three() {
        let cfg = RatqConfig::new(3, 8, 8, None).unwrap();
        assert_eq!(cfg.intervals(), 2);
        assert!((cfg.ladder()[0] - 1.0).abs() < 1e-15);
        assert!((cfg.ladder()[1] - std::f64::consts::E.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn default_interval_counts() {
        assert_eq!(default_intervals(8), 2);
        assert_eq!(default_intervals(16), 4);
        assert_eq!(default_intervals(64), 4);
        assert_eq!(default_intervals(1024), 4);
    }

    #[test]
    fn sample_size_and_payload() {
        let cfg = RatqConfig::new(64, 9, 8, None).unwrap();
        assert_eq!(cfg.sample_size(), 2);
        assert_eq!(cfg.payload_bits(), 10);
        assert!((cfg.mu() - 2.0 / 64.0).abs() < 1e-15);
        let capped = RatqConfig::new(4, 40, 8, Some(2)).unwrap();
        assert_eq!(capped.sample_size(), 4);
        assert!(RatqConfig::new(64, 3, 8, None).is_err());
        assert!(RatqConfig::new(64, 9, 6, None).is_err());
        // One interval of half-width √(3/64) cannot hold a unit coordinate.
        assert!(RatqConfig::new(64, 9, 8, Some(1)).is_err());
    }

    #[test]
    fn level_values_span_interval() {
        let cfg = RatqConfig::new(16, 10, 8, None).unwrap();
        for j in 0..cfg.intervals() {
            let m = cfg.ladder()[j];
            assert!((cfg.level_value(j, 0) + m).abs() < 1e-12 * m);
            assert!((cfg.level_value(j, 7) - m).abs() < 1e-12 * m);
        }
    }

    #[test]
    fn pack_hand_example() {
        let cfg = RatqConfig::new(3, 4, 8, Some(2)).unwrap();
        assert_eq!(cfg.sample_size(), 1);
        let q = QuantizedShape {
            sample: vec![0],
            levels: vec![4],
            intervals: vec![1],
        };
        assert_eq!(pack_shape_bits(&q, &cfg).unwrap(), 9);
        let zero = QuantizedShape {
            sample: vec![2],
            levels: vec![0],
            intervals: vec![0],
        };
        assert_eq!(pack_shape_bits(&zero, &cfg).unwrap(), 0);
        assert_eq!(unpack_shape_bits(9, &cfg, &[0]).unwrap(), q);
        assert!(unpack_shape_bits(16, &cfg, &[0]).is_err());
    }

    #[test]
    fn pack_is_exhaustive_bijection() {
        // payload 3·(3+1) = 12 bits.
        let cfg = RatqConfig::new(8, 12, 8, Some(2)).unwrap();
        assert_eq!(cfg.payload_bits(), 12);
        let sample = vec![5, 1, 6];
        for index in 0..1u64 << 12 {
            let q = unpack_shape_bits(index, &cfg, &sample).unwrap();
            assert_eq!(pack_shape_bits(&q, &cfg).unwrap(), index);
        }
    }

    #[test]
    fn midpoint_rounds_fairly() {
        // M = 1 with k = 2 has levels ±1; 0 sits midway.
        let cfg = RatqConfig::new(3, 1, 2, Some(1)).unwrap();
        let mut private = stream_rng(4, Stream::Private);
        let n = 40_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let q = quantize_sampled(&[0.0, 0.0, 0.0], &cfg, vec![0], &mut private).unwrap();
            sum += cfg.level_value(q.intervals[0], q.levels[0]);
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn on_level_is_deterministic() {
        let cfg = RatqConfig::new(4, 8, 8, None).unwrap();
        let mut private = stream_rng(1, Stream::Private);
        let v = cfg.level_value(0, 3);
        for _ in 0..100 {
            let q = quantize_sampled(&[v, 0.0, 0.0, 0.0], &cfg, vec![0], &mut private).unwrap();
            assert_eq!((q.intervals[0], q.levels[0]), (0, 3));
        }
    }

    #[test]
    fn overflow_is_reported() {
        let cfg = RatqConfig::new(8, 4, 8, Some(2)).unwrap();
        let widest = cfg.ladder()[1];
        let mut x = vec![0.0; 8];
        x[0] = widest * 1.01;
        let mut private = stream_rng(0, Stream::Private);
        assert!(matches!(
            quantize_sampled(&x, &cfg, vec![0], &mut private),
            Err(CodeError::Overflow { .. })
        ));
    }

    #[test]
    fn full_sampling_on_levels_is_exact() {
        let cfg = RatqConfig::new(4, 64, 4, Some(2)).unwrap();
        assert_eq!(cfg.sample_size(), 4);
        let x: Vec<f64> = [1, 0, 3, 2]
            .iter()
            .map(|&l| cfg.level_value(0, l))
            .collect();
        let mut shared = stream_rng(2, Stream::Shared);
        let mut private = stream_rng(2, Stream::Private);
        let q = ratq_quantize(&x, &cfg, &mut shared, &mut private).unwrap();
        assert_eq!(ratq_dequantize(&q, &cfg).unwrap(), x);
    }

    #[test]
    fn shape_estimate_is_unbiased_and_bounded() {
        let d = 8;
        let cfg = RatqConfig::new(d, 8, 8, None).unwrap();
        let x = [0.5, -0.5, 0.5, 0.1, 0.0, -0.3, 0.2, 0.0];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x: Vec<f64> = x.iter().map(|v| v / norm).collect();
        let mut shared = stream_rng(6, Stream::Shared);
        let mut private = stream_rng(6, Stream::Private);
        let trials = 100_000;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut energy = 0.0;
        for _ in 0..trials {
            let rot = RotationOperator::random(d, &mut shared);
            let q = ratq_quantize(&rot.rotate(&x), &cfg, &mut shared, &mut private).unwrap();
            let est = rot.inverse_rotate(&ratq_dequantize(&q, &cfg).unwrap());
            for i in 0..d {
                sum[i] += est[i];
                sq[i] += est[i] * est[i];
            }
            energy += est.iter().map(|v| v * v).sum::<f64>();
        }
        let t = trials as f64;
        for i in 0..d {
            let mean = sum[i] / t;
            let se = ((sq[i] / t - mean * mean) / t).sqrt();
            assert!(
                (mean - x[i]).abs() < 5.0 * se,
                "coord {i}: {mean} vs {}",
                x[i]
            );
        }
        let alpha2 = cfg.declared_alpha().powi(2);
        assert!(energy / t <= alpha2 * 1.05, "{} > {alpha2}", energy / t);
    }

    proptest! {
        #[test]
        fn split_round_trip(levels in prop::collection::vec(0usize..8, 3), intervals in prop::collection::vec(0usize..4, 3)) {
            let cfg = RatqConfig::new(16, 15, 8, Some(4)).unwrap();
            let q = QuantizedShape { sample: vec![3, 9, 0], levels, intervals };
            let li = pack_levels(&q, &cfg).unwrap();
            let ii = pack_intervals(&q, &cfg).unwrap();
            prop_assert_eq!(unpack_split(li, ii, &cfg, &q.sample).unwrap(), q.clone());
            let idx = pack_shape_bits(&q, &cfg).unwrap();
            prop_assert_eq!(idx, (li << 6) | ii);
        }

        #[test]
        fn unit_shapes_never_overflow(seed in any::<u64>(), raw in prop::collection::vec(-1.0f64..1.0, 1..40)) {
            let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(n > 1e-6);
            let x: Vec<f64> = raw.iter().map(|v| v / n).collect();
            let mut shared = stream_rng(seed, Stream::Shared);
            let rot = RotationOperator::random(x.len(), &mut shared);
            let cfg = RatqConfig::new(rot.padded_dim(), 8, 8, None).unwrap();
            let widest = *cfg.ladder().last().unwrap();
            prop_assert!(rot.rotate(&x).iter().all(|v| v.abs() <= widest));
        }
    }
}

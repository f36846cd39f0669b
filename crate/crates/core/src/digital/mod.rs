//! Gain-shape digital code.
//!
//! The gain `‖ĝ‖` is sent as one analog symbol scaled by `√P/B`. The shape
//! `ĝ/‖ĝ‖` is rotated, quantized with RATQ and sent as one ASK symbol, or as
//! two (levels, then intervals) in split mode. The decoder multiplies the
//! decoded gain by the reconstructed shape. Demodulation errors go
//! undetected; the codeword keeps the true indices so callers can count them.

pub mod ask;
pub mod ratq;

use std::str::FromStr;

use crate::code::{
    check_len, parameter, AskSymbol, CodeError, Codeword, Decoded, Decoder, Encoder, GradientCode,
    Received,
};
use crate::problems::norm;
use crate::rng::{SharedCursor, SharedRandomness, SimRng};
use crate::rotation::{padded_dim, RotationOperator};

use self::ask::AskConfig;
use self::ratq::{
    pack_intervals, pack_levels, pack_shape_bits, quantize_sampled, ratq_dequantize,
    unpack_shape_bits, unpack_split, QuantizedShape, RatqConfig,
};

/// `(√P/B)·gain`.
pub fn gain_encode(gain: f64, grad_bound: f64, power: f64) -> Result<f64, CodeError> {
    if gain < 0.0 || gain.is_nan() {
        return Err(CodeError::NegativeGain(gain));
    }
    Ok(power.sqrt() / grad_bound * gain)
}

/// `(B/√P)·y`.
pub fn gain_decode(y: f64, grad_bound: f64, power: f64) -> f64 {
    grad_bound / power.sqrt() * y
}

/// How the quantized shape occupies the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShapeTransmission {
    /// One symbol carrying the whole payload (`ℓ = 2`).
    #[default]
    Single,
    /// Level bits and interval bits in separate symbols (`ℓ = 3`).
    Split,
}

impl FromStr for ShapeTransmission {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Self::Single),
            "split" => Ok(Self::Split),
            other => Err(format!("unknown shape transmission `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalCode {
    dim: usize,
    grad_bound: f64,
    power: f64,
    ratq: RatqConfig,
    transmission: ShapeTransmission,
    /// Constellations for the shape symbols, in transmission order.
    shape_ask: Vec<AskConfig>,
}

impl DigitalCode {
    /// `bits` is the shape budget `r`; `levels` is `k`; `intervals`
    /// overrides the default ladder height.
    pub fn new(
        dim: usize,
        grad_bound: f64,
        power: f64,
        bits: u32,
        levels: usize,
        intervals: Option<usize>,
        transmission: ShapeTransmission,
    ) -> Result<Self, CodeError> {
        if dim == 0 {
            return Err(parameter("dim", "must be positive"));
        }
        if !(grad_bound > 0.0 && grad_bound.is_finite()) {
            return Err(parameter("grad_bound", "must be positive"));
        }
        let ratq = RatqConfig::new(padded_dim(dim), bits, levels, intervals)?;
        let shape_ask = match transmission {
            ShapeTransmission::Single => vec![AskConfig::new(ratq.payload_bits(), power)?],
            ShapeTransmission::Split => {
                let mut v = vec![AskConfig::new(ratq.level_bits(), power)?];
                if ratq.interval_bits() > 0 {
                    v.push(AskConfig::new(ratq.interval_bits(), power)?);
                }
                v
            }
        };
        Ok(Self {
            dim,
            grad_bound,
            power,
            ratq,
            transmission,
            shape_ask,
        })
    }

    pub fn ratq(&self) -> &RatqConfig {
        &self.ratq
    }

    pub fn transmission(&self) -> ShapeTransmission {
        self.transmission
    }

    pub fn shape_constellations(&self) -> &[AskConfig] {
        &self.shape_ask
    }

    fn draw(&self, shared: &mut SimRng) -> (RotationOperator, Vec<usize>) {
        let rotation = RotationOperator::random(self.dim, shared);
        let sample = self.ratq.draw_sample(shared);
        (rotation, sample)
    }

    fn shape_indices(&self, q: &QuantizedShape) -> Result<Vec<u64>, CodeError> {
        match self.transmission {
            ShapeTransmission::Single => Ok(vec![pack_shape_bits(q, &self.ratq)?]),
            ShapeTransmission::Split => {
                let mut v = vec![pack_levels(q, &self.ratq)?];
                if self.shape_ask.len() > 1 {
                    v.push(pack_intervals(q, &self.ratq)?);
                }
                Ok(v)
            }
        }
    }

    fn shape_from_indices(
        &self,
        indices: &[u64],
        sample: &[usize],
    ) -> Result<QuantizedShape, CodeError> {
        match self.transmission {
            ShapeTransmission::Single => unpack_shape_bits(indices[0], &self.ratq, sample),
            ShapeTransmission::Split => unpack_split(
                indices[0],
                indices.get(1).copied().unwrap_or(0),
                &self.ratq,
                sample,
            ),
        }
    }

    /// Encodes with an explicit public draw.
    fn encode_with(
        &self,
        iteration: u64,
        g: &[f64],
        rotation: &RotationOperator,
        sample: Vec<usize>,
        private: &mut SimRng,
    ) -> Result<Codeword, CodeError> {
        check_len(self.dim, g.len())?;
        let gain = norm(g);
        let shape: Vec<f64> = if gain > 0.0 {
            g.iter().map(|x| x / gain).collect()
        } else {
            vec![0.0; self.dim]
        };
        let q = quantize_sampled(&rotation.rotate(&shape), &self.ratq, sample, private)?;
        let mut symbols = vec![gain_encode(gain, self.grad_bound, self.power)?];
        let mut ask = vec![None];
        for (index, config) in self.shape_indices(&q)?.into_iter().zip(&self.shape_ask) {
            symbols.push(config.modulate(index)?);
            ask.push(Some(AskSymbol {
                index,
                config: *config,
            }));
        }
        Ok(Codeword {
            iteration,
            symbols,
            ask,
        })
    }

    fn decode_with(
        &self,
        y: &[f64],
        rotation: &RotationOperator,
        sample: &[usize],
    ) -> Result<Decoded, CodeError> {
        check_len(self.channel_uses(), y.len())?;
        let gain = gain_decode(y[0], self.grad_bound, self.power);
        let indices: Vec<u64> = y[1..]
            .iter()
            .zip(&self.shape_ask)
            .map(|(&yi, cfg)| cfg.demodulate(yi))
            .collect();
        let q = self.shape_from_indices(&indices, sample)?;
        let shape = rotation.inverse_rotate(&ratq_dequantize(&q, &self.ratq)?);
        let mut demodulated = vec![None];
        demodulated.extend(indices.into_iter().map(Some));
        Ok(Decoded {
            estimate: shape.into_iter().map(|s| s * gain).collect(),
            demodulated,
        })
    }
}

struct DigitalEncoder {
    code: DigitalCode,
    cursor: SharedCursor,
}

struct DigitalDecoder {
    code: DigitalCode,
    cursor: SharedCursor,
}

impl Encoder for DigitalEncoder {
    fn encode(&mut self, g: &[f64], private: &mut SimRng) -> Result<Codeword, CodeError> {
        check_len(self.code.dim, g.len())?;
        let (iteration, mut shared) = self.cursor.advance();
        let (rotation, sample) = self.code.draw(&mut shared);
        self.code
            .encode_with(iteration, g, &rotation, sample, private)
    }
}

impl Decoder for DigitalDecoder {
    fn decode(&mut self, received: &Received) -> Result<Decoded, CodeError> {
        if received.iteration != self.cursor.position() {
            return Err(CodeError::Desync {
                expected: self.cursor.position(),
                got: received.iteration,
            });
        }
        let (_, mut shared) = self.cursor.advance();
        let (rotation, sample) = self.code.draw(&mut shared);
        self.code.decode_with(&received.symbols, &rotation, &sample)
    }
}

impl GradientCode for DigitalCode {
    fn label(&self) -> String {
        match self.transmission {
            ShapeTransmission::Single => format!("digital-ask:{}", self.ratq.bits()),
            ShapeTransmission::Split => format!("digital-ask-split:{}", self.ratq.bits()),
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn channel_uses(&self) -> usize {
        1 + self.shape_ask.len()
    }

    /// `B√(1 + 1/SNR)·√((1/μ)(9/(k − 1)² + 1))`, valid when every shape
    /// symbol is demodulated correctly.
    fn declared_alpha(&self, snr: f64) -> f64 {
        self.grad_bound * (1.0 + 1.0 / snr).sqrt() * self.ratq.declared_alpha()
    }

    fn link(&self, shared: SharedRandomness) -> (Box<dyn Encoder>, Box<dyn Decoder>) {
        (
            Box::new(DigitalEncoder {
                code: self.clone(),
                cursor: SharedCursor::new(shared),
            }),
            Box::new(DigitalDecoder {
                code: self.clone(),
                cursor: SharedCursor::new(shared),
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn rx(c: &Codeword) -> Received {
        Received {
            iteration: c.iteration,
            symbols: c.symbols.clone(),
        }
    }

    #[test]
    fn gain_round_trip() {
        let y = gain_encode(0.7, 2.0, 9.0).unwrap();
        assert!((y - 1.05).abs() < 1e-15);
        assert!((gain_decode(y, 2.0, 9.0) - 0.7).abs() < 1e-15);
        assert!(gain_encode(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn gain_second_moment_at_unit_snr() {
        let (b, p) = (1.5, 2.0);
        let sigma = (p / 1.0f64).sqrt();
        let mut rng = stream_rng(3, Stream::Channel);
        let n = 200_000;
        let mut m2 = 0.0;
        for _ in 0..n {
            let z: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
            let est = gain_decode(gain_encode(b, b, p).unwrap() + sigma * z, b, p);
            m2 += est * est;
        }
        let m2 = m2 / n as f64;
        assert!((m2 / (2.0 * b * b) - 1.0).abs() < 0.02, "{m2}");
    }

    #[test]
    fn channel_use_counts() {
        let single = DigitalCode::new(64, 1.0, 1.0, 9, 8, None, ShapeTransmission::Single).unwrap();
        assert_eq!(single.channel_uses(), 2);
        assert_eq!(single.shape_constellations()[0].bits(), 10);
        let split = DigitalCode::new(64, 1.0, 1.0, 9, 8, None, ShapeTransmission::Split).unwrap();
        assert_eq!(split.channel_uses(), 3);
        assert_eq!(split.shape_constellations()[0].bits(), 6);
        assert_eq!(split.shape_constellations()[1].bits(), 4);
        assert_eq!(split.label(), "digital-ask-split:9");
    }

    #[test]
    fn declared_alpha_at_unit_snr_full_sampling() {
        let code = DigitalCode::new(4, 1.0, 1.0, 40, 8, None, ShapeTransmission::Single).unwrap();
        assert_eq!(code.ratq().mu(), 1.0);
        let want = 2f64.sqrt() * (9.0 / 49.0 + 1.0f64).sqrt();
        assert!((code.declared_alpha(1.0) - want).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_decodes_to_zero() {
        let code = DigitalCode::new(8, 1.0, 4.0, 8, 8, None, ShapeTransmission::Single).unwrap();
        let (mut enc, mut dec) = code.link(SharedRandomness::new(1));
        let mut private = stream_rng(1, Stream::Private);
        let c = enc.encode(&[0.0; 8], &mut private).unwrap();
        assert_eq!(c.symbols[0], 0.0);
        let out = dec.decode(&rx(&c)).unwrap();
        assert!(out.estimate.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_sampling_error_is_within_one_step() {
        let code = DigitalCode::new(4, 1.0, 1.0, 40, 8, None, ShapeTransmission::Single).unwrap();
        let cfg = code.ratq().clone();
        assert_eq!(cfg.sample_size(), 4);
        let widest = *cfg.ladder().last().unwrap();
        let step = 2.0 * widest / 7.0;
        let (mut enc, mut dec) = code.link(SharedRandomness::new(8));
        let mut private = stream_rng(8, Stream::Private);
        let g = [0.3, -0.1, 0.25, 0.6];
        let gain = norm(&g);
        for _ in 0..200 {
            let c = enc.encode(&g, &mut private).unwrap();
            let out = dec.decode(&rx(&c)).unwrap();
            let err: Vec<f64> = out.estimate.iter().zip(&g).map(|(a, b)| a - b).collect();
            assert!(norm(&err) <= gain * step * 2.0 + 1e-12);
        }
    }

    #[test]
    fn noiseless_link_is_unbiased() {
        let d = 5;
        for transmission in [ShapeTransmission::Single, ShapeTransmission::Split] {
            let code = DigitalCode::new(d, 2.0, 1.0, 8, 8, None, transmission).unwrap();
            let (mut enc, mut dec) = code.link(SharedRandomness::new(77));
            let mut private = stream_rng(77, Stream::Private);
            let g = [0.9, -0.4, 0.2, 1.1, -0.7];
            let trials = 60_000;
            let mut sum = vec![0.0; d];
            let mut sq = vec![0.0; d];
            for _ in 0..trials {
                let c = enc.encode(&g, &mut private).unwrap();
                let out = dec.decode(&rx(&c)).unwrap();
                assert_eq!(out.symbol_errors(&c), 0);
                for i in 0..d {
                    sum[i] += out.estimate[i];
                    sq[i] += out.estimate[i] * out.estimate[i];
                }
            }
            let t = trials as f64;
            for i in 0..d {
                let mean = sum[i] / t;
                let se = ((sq[i] / t - mean * mean) / t).sqrt();
                assert!((mean - g[i]).abs() < 5.0 * se, "{transmission:?} coord {i}");
            }
        }
    }

    #[test]
    fn shape_symbols_respect_power() {
        let code = DigitalCode::new(16, 1.0, 3.0, 12, 8, None, ShapeTransmission::Split).unwrap();
        let (mut enc, _) = code.link(SharedRandomness::new(5));
        let mut private = stream_rng(5, Stream::Private);
        for t in 0..500 {
            let g: Vec<f64> = (0..16).map(|i| ((i * 7 + t) as f64).sin()).collect();
            let c = enc.encode(&g, &mut private).unwrap();
            for (s, a) in c.symbols.iter().zip(&c.ask) {
                if a.is_some() {
                    assert!(s * s <= 3.0);
                }
            }
        }
    }

    #[test]
    fn desync_is_detected() {
        let code = DigitalCode::new(4, 1.0, 1.0, 8, 8, None, ShapeTransmission::Single).unwrap();
        let (mut enc, mut dec) = code.link(SharedRandomness::new(2));
        let mut private = stream_rng(2, Stream::Private);
        let _ = enc.encode(&[1.0, 0.0, 0.0, 0.0], &mut private).unwrap();
        let c = enc.encode(&[1.0, 0.0, 0.0, 0.0], &mut private).unwrap();
        assert!(matches!(
            dec.decode(&rx(&c)),
            Err(CodeError::Desync {
                expected: 0,
                got: 1
            })
        ));
    }
}

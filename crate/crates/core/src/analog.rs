//! Linear (analog) gradient codes.
//!
//! * [`ScaledAnalogCode`] sends every coordinate once, scaled by `√(Pd)/B`,
//!   so `ℓ = d`.
//! * [`SampledAnalogCode`] rotates the gradient with a random Hadamard
//!   rotation, keeps `ℓ` coordinates chosen uniformly without replacement,
//!   and scales the survivors by `√(Pd')/B`. The decoder re-embeds them,
//!   multiplies by `d'/ℓ` and undoes the rotation.
//!
//! Both decoders are unbiased. Power is guaranteed in expectation only: a
//! single draw with `‖ĝ‖ > B` may exceed `ℓP`, and no clipping is applied.

use rand::Rng;

use crate::code::{
    check_len, parameter, CodeError, Codeword, Counter, Decoded, Decoder, Encoder, GradientCode,
    Received,
};
use crate::rng::{SharedCursor, SharedRandomness, SimRng};
use crate::rotation::{padded_dim, RotationOperator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledAnalogCode {
    dim: usize,
    grad_bound: f64,
    power: f64,
}

impl ScaledAnalogCode {
    pub fn new(dim: usize, grad_bound: f64, power: f64) -> Result<Self, CodeError> {
        if dim == 0 {
            return Err(parameter("dim", "must be positive"));
        }
        if !(grad_bound > 0.0 && grad_bound.is_finite()) {
            return Err(parameter("grad_bound", "must be positive"));
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(parameter("power", "must be positive"));
        }
        Ok(Self {
            dim,
            grad_bound,
            power,
        })
    }

    /// `√(Pd)/B`.
    pub fn scale(&self) -> f64 {
        (self.power * self.dim as f64).sqrt() / self.grad_bound
    }

    pub fn encode(&self, g: &[f64]) -> Result<Vec<f64>, CodeError> {
        check_len(self.dim, g.len())?;
        let s = self.scale();
        Ok(g.iter().map(|x| x * s).collect())
    }

    pub fn decode(&self, y: &[f64]) -> Result<Vec<f64>, CodeError> {
        check_len(self.dim, y.len())?;
        let s = self.scale();
        Ok(y.iter().map(|x| x / s).collect())
    }
}

struct ScaledEncoder {
    code: ScaledAnalogCode,
    counter: Counter,
}

struct ScaledDecoder {
    code: ScaledAnalogCode,
    counter: Counter,
}

impl Encoder for ScaledEncoder {
    fn encode(&mut self, g: &[f64], _: &mut SimRng) -> Result<Codeword, CodeError> {
        let symbols = self.code.encode(g)?;
        Ok(Codeword::analog(self.counter.next(), symbols))
    }
}

impl Decoder for ScaledDecoder {
    fn decode(&mut self, received: &Received) -> Result<Decoded, CodeError> {
        self.counter.expect(received.iteration)?;
        Ok(Decoded::analog(self.code.decode(&received.symbols)?))
    }
}

impl GradientCode for ScaledAnalogCode {
    fn label(&self) -> String {
        "scaled-analog".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn channel_uses(&self) -> usize {
        self.dim
    }

    /// `B·√(1 + 1/SNR)`.
    fn declared_alpha(&self, snr: f64) -> f64 {
        self.grad_bound * (1.0 + 1.0 / snr).sqrt()
    }

    fn link(&self, _: SharedRandomness) -> (Box<dyn Encoder>, Box<dyn Decoder>) {
        (
            Box::new(ScaledEncoder {
                code: *self,
                counter: Counter::default(),
            }),
            Box::new(ScaledDecoder {
                code: *self,
                counter: Counter::default(),
            }),
        )
    }
}

/// The first `k` entries of a uniformly shuffled `0..n` (partial
/// Fisher–Yates), i.e. a uniform `k`-subset in draw order.
pub fn sample_without_replacement(n: usize, k: usize, rng: &mut SimRng) -> Vec<usize> {
    assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// The public draw for one iteration: rotation signs, then the sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDraw {
    pub rotation: RotationOperator,
    pub sample: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAnalogCode {
    dim: usize,
    grad_bound: f64,
    power: f64,
    uses: usize,
}

impl SampledAnalogCode {
    /// `uses` is `ℓ`, with `1 ≤ ℓ ≤ d`.
    pub fn new(dim: usize, grad_bound: f64, power: f64, uses: usize) -> Result<Self, CodeError> {
        ScaledAnalogCode::new(dim, grad_bound, power)?;
        if uses == 0 || uses > dim {
            return Err(parameter("uses", format!("need 1 ≤ ℓ ≤ {dim}, got {uses}")));
        }
        Ok(Self {
            dim,
            grad_bound,
            power,
            uses,
        })
    }

    pub fn padded_dim(&self) -> usize {
        padded_dim(self.dim)
    }

    /// Reads the iteration's rotation and sample set from the public stream.
    pub fn draw(&self, rng: &mut SimRng) -> SampledDraw {
        let rotation = RotationOperator::random(self.dim, rng);
        let sample = sample_without_replacement(self.padded_dim(), self.uses, rng);
        SampledDraw { rotation, sample }
    }

    fn scale(&self) -> f64 {
        (self.power * self.padded_dim() as f64).sqrt() / self.grad_bound
    }

    pub fn encode_with(&self, g: &[f64], draw: &SampledDraw) -> Result<Vec<f64>, CodeError> {
        check_len(self.dim, g.len())?;
        let rotated = draw.rotation.rotate(g);
        let s = self.scale();
        Ok(draw.sample.iter().map(|&i| rotated[i] * s).collect())
    }

    pub fn decode_with(&self, y: &[f64], draw: &SampledDraw) -> Result<Vec<f64>, CodeError> {
        check_len(self.uses, y.len())?;
        let n = self.padded_dim();
        let factor = n as f64 / self.uses as f64 / self.scale();
        let mut embedded = vec![0.0; n];
        for (&i, yi) in draw.sample.iter().zip(y) {
            embedded[i] = yi * factor;
        }
        Ok(draw.rotation.inverse_rotate(&embedded))
    }
}

struct SampledEncoder {
    code: SampledAnalogCode,
    cursor: SharedCursor,
}

struct SampledDecoder {
    code: SampledAnalogCode,
    cursor: SharedCursor,
}

impl Encoder for SampledEncoder {
    fn encode(&mut self, g: &[f64], _: &mut SimRng) -> Result<Codeword, CodeError> {
        check_len(self.code.dim, g.len())?;
        let (iteration, mut rng) = self.cursor.advance();
        let draw = self.code.draw(&mut rng);
        Ok(Codeword::analog(
            iteration,
            self.code.encode_with(g, &draw)?,
        ))
    }
}

impl Decoder for SampledDecoder {
    fn decode(&mut self, received: &Received) -> Result<Decoded, CodeError> {
        if received.iteration != self.cursor.position() {
            return Err(CodeError::Desync {
                expected: self.cursor.position(),
                got: received.iteration,
            });
        }
        let (_, mut rng) = self.cursor.advance();
        let draw = self.code.draw(&mut rng);
        Ok(Decoded::analog(
            self.code.decode_with(&received.symbols, &draw)?,
        ))
    }
}

impl GradientCode for SampledAnalogCode {
    fn label(&self) -> String {
        format!("sampled-analog:{}", self.uses)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn channel_uses(&self) -> usize {
        self.uses
    }

    /// `B·√((d'/ℓ)(1 + 1/SNR))`.
    fn declared_alpha(&self, snr: f64) -> f64 {
        self.grad_bound * (self.padded_dim() as f64 / self.uses as f64 * (1.0 + 1.0 / snr)).sqrt()
    }

    fn link(&self, shared: SharedRandomness) -> (Box<dyn Encoder>, Box<dyn Decoder>) {
        (
            Box::new(SampledEncoder {
                code: *self,
                cursor: SharedCursor::new(shared),
            }),
            Box::new(SampledDecoder {
                code: *self,
                cursor: SharedCursor::new(shared),
            }),
        )
    }
}

/// `(√(Pd)/B)·g`.
pub fn scaled_encode(code: &ScaledAnalogCode, g: &[f64]) -> Result<Vec<f64>, CodeError> {
    code.encode(g)
}

/// `(B/√(Pd))·y`.
pub fn scaled_decode(code: &ScaledAnalogCode, y: &[f64]) -> Result<Vec<f64>, CodeError> {
    code.decode(y)
}

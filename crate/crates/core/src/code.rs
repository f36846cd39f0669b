//! Encoder/decoder pairs for sending gradient estimates over the channel.
//!
//! A [`GradientCode`] is immutable configuration. Calling
//! [`GradientCode::link`] creates one encoder and one decoder, each with its
//! own cursor over the public randomness; every codeword carries the
//! iteration it was produced at, and a decoder whose cursor disagrees reports
//! [`CodeError::Desync`] instead of decoding with the wrong draw.

use thiserror::Error;

use crate::digital::ask::AskConfig;
use crate::rng::{SharedRandomness, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("shared randomness out of step: decoder at draw {expected}, codeword from draw {got}")]
    Desync { expected: u64, got: u64 },
    #[error("invalid code parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("index {index} outside constellation of {bits} bits")]
    IndexRange { index: u64, bits: u32 },
    #[error("malformed quantized shape: {0}")]
    Malformed(String),
    #[error("negative gain {0}")]
    NegativeGain(f64),
    #[error("coordinate {value} overflows the widest interval {limit}")]
    Overflow { value: f64, limit: f64 },
}

pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> CodeError {
    CodeError::Parameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), CodeError> {
    if expected != got {
        return Err(CodeError::Dimension { expected, got });
    }
    Ok(())
}

/// Ground truth for one constellation symbol, kept alongside the codeword
/// so the harness can count demodulation errors. Decoders never see it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AskSymbol {
    pub index: u64,
    pub config: AskConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub iteration: u64,
    pub symbols: Vec<f64>,
    /// One entry per channel use; `None` for analog uses.
    pub ask: Vec<Option<AskSymbol>>,
}

impl Codeword {
    pub fn analog(iteration: u64, symbols: Vec<f64>) -> Self {
        let ask = vec![None; symbols.len()];
        Self {
            iteration,
            symbols,
            ask,
        }
    }

    pub fn energy(&self) -> f64 {
        self.symbols.iter().map(|s| s * s).sum()
    }
}

/// Channel output handed to a decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub iteration: u64,
    pub symbols: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub estimate: Vec<f64>,
    /// Demodulated constellation index per channel use (`None` for analog).
    pub demodulated: Vec<Option<u64>>,
}

impl Decoded {
    pub fn analog(estimate: Vec<f64>) -> Self {
        Self {
            estimate,
            demodulated: Vec::new(),
        }
    }

    /// Number of constellation symbols decoded to the wrong point.
    pub fn symbol_errors(&self, sent: &Codeword) -> u64 {
        sent.ask
            .iter()
            .zip(&self.demodulated)
            .filter(|(s, d)| matches!((s, d), (Some(s), Some(d)) if s.index != *d))
            .count() as u64
    }
}

pub trait Encoder: Send {
    fn encode(&mut self, g: &[f64], private: &mut SimRng) -> Result<Codeword, CodeError>;
}

pub trait Decoder: Send {
    fn decode(&mut self, received: &Received) -> Result<Decoded, CodeError>;
}

/// A `(d, ℓ, P)` code with declared performance pair `(α, β)`.
pub trait GradientCode: Send + Sync {
    fn label(&self) -> String;

    /// Gradient dimension `d`.
    fn dim(&self) -> usize;

    /// Channel uses per query, `ℓ`.
    fn channel_uses(&self) -> usize;

    /// Declared worst-case root second moment of the decoded estimate.
    fn declared_alpha(&self, snr: f64) -> f64;

    /// Declared worst-case bias (zero for every code in this crate).
    fn declared_beta(&self) -> f64 {
        0.0
    }

    /// True for the ideal reference link, which skips the channel.
    fn bypasses_channel(&self) -> bool {
        false
    }

    fn link(&self, shared: SharedRandomness) -> (Box<dyn Encoder>, Box<dyn Decoder>);
}

/// Iteration counter used by codes without public randomness.
#[derive(Debug, Clone, Default)]
pub(crate) struct Counter(u64);

impl Counter {
    pub(crate) fn next(&mut self) -> u64 {
        let i = self.0;
        self.0 += 1;
        i
    }

    pub(crate) fn expect(&mut self, got: u64) -> Result<(), CodeError> {
        if got != self.0 {
            return Err(CodeError::Desync {
                expected: self.0,
                got,
            });
        }
        self.0 += 1;
        Ok(())
    }
}

/// The classic setting: the decoder sees the oracle output exactly.
///
/// Counted as one channel use per query and never sent through the channel,
/// so it spends no power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiselessBaseline {
    pub dim: usize,
    pub grad_bound: f64,
}

struct IdentityEncoder {
    dim: usize,
    counter: Counter,
}

struct IdentityDecoder {
    dim: usize,
    counter: Counter,
}

impl Encoder for IdentityEncoder {
    fn encode(&mut self, g: &[f64], _: &mut SimRng) -> Result<Codeword, CodeError> {
        check_len(self.dim, g.len())?;
        Ok(Codeword::analog(self.counter.next(), g.to_vec()))
    }
}

impl Decoder for IdentityDecoder {
    fn decode(&mut self, received: &Received) -> Result<Decoded, CodeError> {
        self.counter.expect(received.iteration)?;
        check_len(self.dim, received.symbols.len())?;
        Ok(Decoded::analog(received.symbols.clone()))
    }
}

impl GradientCode for NoiselessBaseline {
    fn label(&self) -> String {
        "noiseless-baseline".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn channel_uses(&self) -> usize {
        1
    }

    /// `B`: the estimate is the oracle output itself.
    fn declared_alpha(&self, _snr: f64) -> f64 {
        self.grad_bound
    }

    fn bypasses_channel(&self) -> bool {
        true
    }

    fn link(&self, _: SharedRandomness) -> (Box<dyn Encoder>, Box<dyn Decoder>) {
        (
            Box::new(IdentityEncoder {
                dim: self.dim,
                counter: Counter::default(),
            }),
            Box::new(IdentityDecoder {
                dim: self.dim,
                counter: Counter::default(),
            }),
        )
    }
}

//! Projected stochastic gradient descent where every gradient estimate is
//! coded, sent over a power-limited additive Gaussian noise channel and
//! decoded before the step.
//!
//! The building blocks are convex test problems ([`problems`]), the channel
//! ([`channel`]), analog and digital gradient codes ([`analog`],
//! [`digital`]), the optimizer ([`optimizer`]), closed-form rate bounds
//! ([`bounds`]) and an experiment harness ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analog;
pub mod bounds;
pub mod channel;
pub mod code;
pub mod digital;
pub mod exec;
pub mod harness;
pub mod optimizer;
pub mod problems;
pub mod rng;
pub mod rotation;

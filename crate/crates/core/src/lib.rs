//! Signal processing for a cognitive terahertz nano-receiver: channel
//! synthesis, pulse/carrier mode detection, least-squares equalization,
//! mixture-model modulation classification and Markov modulation prediction.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod classify;
pub mod detector;
mod dsp;
pub mod equalize;
pub mod error;
pub mod predict;
pub mod rng;
pub mod signal;
pub mod specfun;
pub mod waveform;

pub use error::{Error, Result};
pub use signal::{SampledSignal, TimeGrid};
pub use waveform::Scheme;

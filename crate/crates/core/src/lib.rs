//! Simulation of the channel-whispering group key generation protocol over
//! IR-UWB multipath channels.
//!
//! Three nodes share pairwise reciprocal channels. Each node directly probes
//! its two adjacent channels and receives its third, non-adjacent channel
//! indirectly: a cooperator deconvolves its own observation of that channel
//! by its estimate of the cooperator-to-generator channel and transmits the
//! result (the *s-signal*), so that propagation over the real channel
//! reconstructs the missing observation at the generator.
//!
//! Module map:
//!
//! - [`channel`]: Saleh-Valenzuela style sparse multipath realizations.
//! - [`waveform`]: pulses, convolution, AWGN, sinc resampling, synchronization.
//! - [`estimator`]: search-subtract-readjust CIR estimation.
//! - [`deconv`]: valid-part convolution operator and the ML, MAP, MAP-CV and
//!   EM solvers.
//! - [`quantizer`]: signal preprocessing, Gray-coded quantization with guard
//!   bands and drop-index reconciliation.
//! - [`protocol`]: full CKG rounds, the CKD benchmark and packet accounting.
//! - [`metrics`]: RMSE, correlation, ECDF and bit matching.
//! - [`experiment`]: seeded batch sweeps emitting CSV.

pub mod channel;
pub mod deconv;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod link;
pub mod metrics;
pub mod protocol;
pub mod quantizer;
pub mod seed;
pub mod waveform;

pub use error::{Error, Result};

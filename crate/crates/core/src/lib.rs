//! Time-domain channel sounding toolkit.
//!
//! The crate covers the whole measurement chain of a correlation-based
//! sounder: multitone waveform design ([`waveform`]), heterodyne frequency
//! planning and transmitter power behaviour ([`frequency_plan`]), a
//! behavioural air/RF-chain simulator ([`airsim`]), calibration and
//! phase-tracked coherent averaging ([`dsp`]), and impulse-response metrics
//! ([`metrics`]). [`scenario`] ties them together and [`io`] holds the file
//! formats.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod airsim;
pub mod dsp;
pub mod error;
pub mod fft;
pub mod frequency_plan;
pub mod io;
pub mod metrics;
mod optim;
pub mod scenario;
pub mod units;
pub mod waveform;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use airsim::{ChannelTap, ImpairmentConfig, SnapshotSet};
pub use dsp::{CalibrationProfile, FrequencyResponse, GainBudget, ImpulseResponse};
pub use frequency_plan::{FrequencyPlan, PowerModel, SpurReport};
pub use metrics::{CirMetrics, Mpc};
pub use scenario::Scenario;
pub use waveform::{ToneGrid, Waveform};

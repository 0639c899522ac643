//! Spectral extension of rules-based HVAC fault detection.
//!
//! Rules evaluated over building trend data produce binary rule signals.
//! Each signal is decomposed into complex mode values at a handful of
//! periods (finite-sample Fourier averages), which then drive time-scale
//! characterization, compressed reconstruction, pairwise coincidence and
//! per-zone spatial maps.

pub mod coincidence;
pub mod formats;
pub mod ingest;
pub mod pipeline;
pub mod rules;
pub mod spatial;
pub mod spectral;
pub mod synth;

pub use rules::{DiagnosticRule, RuleSignal, TrendSeries};
pub use spectral::{Frequency, FrequencySet, ModeSet, ModeValue, SampledSignal, Sampling};

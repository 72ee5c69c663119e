//! Event-driven Monte Carlo model of the pulsed single-ion source, the two
//! conversion stages and the detectors, producing time-tag streams.

mod config;
mod expected;
mod generator;
mod profile;

pub use config::{
    ChannelModel, DriftModel, EmissionProfile, ExperimentConfig, PulseSequence, DEFAULT_DECAY_NS,
    JITTER_CLAMP_SIGMAS, MAX_DRIFT_NS,
};
pub use expected::{expected_counts, ExpectedCounts, Window};
pub use generator::{CycleClock, SimRecords, Simulation};
pub use profile::ProfileSampler;

use thiserror::Error;

use crate::timetag::FormatError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("missing required config key `{0}`")]
    Missing(&'static str),
    #[error("invalid config value `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("no channel {0} in the configuration")]
    UnknownChannel(u8),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// `sample_emission_time`: maps a uniform draw to an emission offset (ns)
/// from the excitation start.
pub fn sample_emission_time(profile: &EmissionProfile, excitation_duration_ns: f64, draw: f64) -> f64 {
    ProfileSampler::new(profile, excitation_duration_ns).sample(draw)
}

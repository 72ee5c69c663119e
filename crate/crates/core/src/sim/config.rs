use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SimError;
use crate::timetag::ChannelRole;

/// 1/Gamma for Gamma/2pi = 14.8 MHz, in ns.
pub const DEFAULT_DECAY_NS: f64 = 1e3 / (2.0 * std::f64::consts::PI * 14.8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    #[serde(default = "defaults::init_duration_ns")]
    pub init_duration_ns: f64,
    #[serde(default = "defaults::post_init_delay_ns")]
    pub post_init_delay_ns: f64,
    #[serde(default = "defaults::excitation_duration_ns")]
    pub excitation_duration_ns: f64,
    /// Start of the second (background) 650 nm pulse, measured from the
    /// start of the excitation pulse.
    #[serde(default = "defaults::background_pulse_offset_ns")]
    pub background_pulse_offset_ns: f64,
    #[serde(default = "defaults::excitation_duration_ns")]
    pub background_pulse_duration_ns: f64,
}

impl Default for PulseSequence {
    fn default() -> Self {
        Self {
            init_duration_ns: defaults::init_duration_ns(),
            post_init_delay_ns: defaults::post_init_delay_ns(),
            excitation_duration_ns: defaults::excitation_duration_ns(),
            background_pulse_offset_ns: defaults::background_pulse_offset_ns(),
            background_pulse_duration_ns: defaults::excitation_duration_ns(),
        }
    }
}

impl PulseSequence {
    /// Time from cycle start to the excitation trigger.
    pub fn trigger_offset_ns(&self) -> f64 {
        self.init_duration_ns + self.post_init_delay_ns
    }

    /// Length of the active part of the cycle, measured from cycle start.
    pub fn active_span_ns(&self) -> f64 {
        self.trigger_offset_ns()
            + self
                .excitation_duration_ns
                .max(self.background_pulse_offset_ns + self.background_pulse_duration_ns)
    }
}

/// Rise-decay emission shape `(1 - exp(-t/rise)) * exp(-t/decay)` starting
/// `onset_ns` after the excitation pulse begins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionProfile {
    #[serde(default = "defaults::rise_constant_ns")]
    pub rise_constant_ns: f64,
    #[serde(default = "defaults::decay_constant_ns")]
    pub decay_constant_ns: f64,
    #[serde(default)]
    pub onset_ns: f64,
}

impl Default for EmissionProfile {
    fn default() -> Self {
        Self {
            rise_constant_ns: defaults::rise_constant_ns(),
            decay_constant_ns: defaults::decay_constant_ns(),
            onset_ns: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub id: u8,
    pub role: ChannelRole,
    /// Probability that one excitation attempt yields a detected signal
    /// photon on this channel.
    #[serde(default)]
    pub signal_probability: f64,
    #[serde(default)]
    pub flat_noise_cps: f64,
    /// Background rate present only while a 650 nm pulse is on.
    #[serde(default)]
    pub pulse_background_cps: f64,
    #[serde(default)]
    pub dead_time_ns: f64,
    #[serde(default)]
    pub jitter_sigma_ns: f64,
    /// Fixed arrival delay relative to the reference (PMT) arm.
    #[serde(default)]
    pub delay_ns: f64,
    /// Whether second-stage pump detuning modulates this channel.
    #[serde(default)]
    pub pump_drift: bool,
}

impl ChannelModel {
    pub fn new(id: u8, role: ChannelRole) -> Self {
        Self {
            id,
            role,
            signal_probability: 0.0,
            flat_noise_cps: 0.0,
            pulse_background_cps: 0.0,
            dead_time_ns: 0.0,
            jitter_sigma_ns: 0.0,
            delay_ns: 0.0,
            pump_drift: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftModel {
    /// Standard deviation of the arrival-time random walk accumulated over
    /// one hour.
    #[serde(default)]
    pub arrival_step_ns_per_hour: f64,
    #[serde(default = "defaults::drift_update_s")]
    pub update_interval_s: f64,
    /// Peak excursion of the second-stage pump detuning.
    #[serde(default = "defaults::pump_detuning_amplitude_mhz")]
    pub pump_detuning_amplitude_mhz: f64,
    #[serde(default = "defaults::pump_detuning_period_s")]
    pub pump_detuning_period_s: f64,
    #[serde(default = "defaults::photon_linewidth_mhz")]
    pub photon_linewidth_mhz: f64,
    #[serde(default = "defaults::filter_fwhm_mhz")]
    pub filter_fwhm_mhz: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            arrival_step_ns_per_hour: 0.0,
            update_interval_s: defaults::drift_update_s(),
            pump_detuning_amplitude_mhz: defaults::pump_detuning_amplitude_mhz(),
            pump_detuning_period_s: defaults::pump_detuning_period_s(),
            photon_linewidth_mhz: defaults::photon_linewidth_mhz(),
            filter_fwhm_mhz: defaults::filter_fwhm_mhz(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
    #[serde(default = "defaults::repetition_rate_hz")]
    pub repetition_rate_hz: u64,
    #[serde(default)]
    pub trigger_channel: u8,
    #[serde(default)]
    pub pulse: PulseSequence,
    #[serde(default)]
    pub emission: EmissionProfile,
    #[serde(default)]
    pub drift: DriftModel,
    #[serde(rename = "channel", default)]
    pub channels: Vec<ChannelModel>,
}

/// Largest arrival-time drift excursion the generator allows, ns.
pub const MAX_DRIFT_NS: f64 = 300.0;
/// Timing jitter draws are clamped to this many standard deviations.
pub const JITTER_CLAMP_SIGMAS: f64 = 6.0;

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.message().to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> Result<u64, SimError> {
        self.seed.ok_or(SimError::Missing("seed"))
    }

    pub fn duration(&self) -> Result<f64, SimError> {
        self.duration_s.ok_or(SimError::Missing("duration_s"))
    }

    pub fn cycle_period_ns(&self) -> f64 {
        1e9 / self.repetition_rate_hz as f64
    }

    /// Number of excitation attempts R in the run.
    pub fn cycles(&self) -> Result<u64, SimError> {
        Ok((self.duration()? * self.repetition_rate_hz as f64).round() as u64)
    }

    pub fn channel(&self, id: u8) -> Option<&ChannelModel> {
        self.channels.iter().find(|c| c.id == id)
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).into()
    }

    pub fn digest_hex(&self) -> String {
        self.digest().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |field: &str, reason: String| SimError::Invalid {
            field: field.to_string(),
            reason,
        };
        self.seed()?;
        let duration = self.duration()?;
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(invalid("duration_s", format!("must be positive, got {duration}")));
        }
        if self.repetition_rate_hz == 0 {
            return Err(invalid("repetition_rate_hz", "must be positive".into()));
        }
        let p = &self.pulse;
        for (name, value) in [
            ("pulse.init_duration_ns", p.init_duration_ns),
            ("pulse.post_init_delay_ns", p.post_init_delay_ns),
            ("pulse.excitation_duration_ns", p.excitation_duration_ns),
            ("pulse.background_pulse_offset_ns", p.background_pulse_offset_ns),
            ("pulse.background_pulse_duration_ns", p.background_pulse_duration_ns),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {value}")));
            }
        }
        if p.background_pulse_offset_ns < p.excitation_duration_ns {
            return Err(invalid(
                "pulse.background_pulse_offset_ns",
                "background pulse must start after the excitation pulse ends".into(),
            ));
        }
        if p.active_span_ns() > self.cycle_period_ns() {
            return Err(invalid(
                "repetition_rate_hz",
                format!(
                    "active phases span {} ns but the cycle is {:.1} ns",
                    p.active_span_ns(),
                    self.cycle_period_ns()
                ),
            ));
        }
        let e = &self.emission;
        if !(e.rise_constant_ns >= 0.0 && e.rise_constant_ns.is_finite()) {
            return Err(invalid("emission.rise_constant_ns", "must be non-negative".into()));
        }
        if !(e.decay_constant_ns >= 0.0 && e.decay_constant_ns.is_finite()) {
            return Err(invalid("emission.decay_constant_ns", "must be non-negative".into()));
        }
        if !(e.onset_ns >= 0.0 && e.onset_ns < p.excitation_duration_ns) {
            return Err(invalid(
                "emission.onset_ns",
                "must lie inside the excitation pulse".into(),
            ));
        }
        let d = &self.drift;
        for (name, value) in [
            ("drift.arrival_step_ns_per_hour", d.arrival_step_ns_per_hour),
            ("drift.pump_detuning_amplitude_mhz", d.pump_detuning_amplitude_mhz),
            ("drift.photon_linewidth_mhz", d.photon_linewidth_mhz),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(invalid(name, format!("must be non-negative, got {value}")));
            }
        }
        for (name, value) in [
            ("drift.update_interval_s", d.update_interval_s),
            ("drift.pump_detuning_period_s", d.pump_detuning_period_s),
            ("drift.filter_fwhm_mhz", d.filter_fwhm_mhz),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {value}")));
            }
        }

        let mut seen = [false; 256];
        seen[self.trigger_channel as usize] = true;
        let mut total_probability = 0.0;
        for c in &self.channels {
            let field = |name: &str| format!("channel[{}].{name}", c.id);
            if std::mem::replace(&mut seen[c.id as usize], true) {
                return Err(invalid(&field("id"), "duplicate or equal to trigger_channel".into()));
            }
            if c.role == ChannelRole::Trigger {
                return Err(invalid(&field("role"), "detector channels cannot be triggers".into()));
            }
            if !(0.0..=1.0).contains(&c.signal_probability) {
                return Err(invalid(
                    &field("signal_probability"),
                    format!("{} outside [0, 1]", c.signal_probability),
                ));
            }
            total_probability += c.signal_probability;
            for (name, value) in [
                ("flat_noise_cps", c.flat_noise_cps),
                ("pulse_background_cps", c.pulse_background_cps),
                ("dead_time_ns", c.dead_time_ns),
                ("jitter_sigma_ns", c.jitter_sigma_ns),
            ] {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(invalid(&field(name), format!("must be non-negative, got {value}")));
                }
            }
            if !c.delay_ns.is_finite() {
                return Err(invalid(&field("delay_ns"), "must be finite".into()));
            }
            // Signal events of neighbouring cycles must not swap order.
            let spread = c.delay_ns.abs() + MAX_DRIFT_NS + JITTER_CLAMP_SIGMAS * c.jitter_sigma_ns;
            if 2.0 * spread + p.excitation_duration_ns >= self.cycle_period_ns() {
                return Err(invalid(
                    &field("delay_ns"),
                    format!("delay, jitter and drift spread of {spread:.1} ns overlaps neighbouring cycles"),
                ));
            }
        }
        if total_probability > 1.0 {
            return Err(invalid(
                "channel.signal_probability",
                format!(
                    "a single emitter yields at most one photon per cycle; probabilities sum to {total_probability}"
                ),
            ));
        }
        Ok(())
    }
}

mod defaults {
    pub fn init_duration_ns() -> f64 {
        781.0
    }
    pub fn post_init_delay_ns() -> f64 {
        200.0
    }
    pub fn excitation_duration_ns() -> f64 {
        200.0
    }
    pub fn background_pulse_offset_ns() -> f64 {
        380.0
    }
    pub fn rise_constant_ns() -> f64 {
        15.0
    }
    pub fn decay_constant_ns() -> f64 {
        super::DEFAULT_DECAY_NS
    }
    pub fn drift_update_s() -> f64 {
        60.0
    }
    pub fn pump_detuning_amplitude_mhz() -> f64 {
        20.0
    }
    pub fn pump_detuning_period_s() -> f64 {
        3600.0
    }
    pub fn photon_linewidth_mhz() -> f64 {
        14.8
    }
    pub fn filter_fwhm_mhz() -> f64 {
        46.1
    }
    pub fn repetition_rate_hz() -> u64 {
        420_000
    }
}

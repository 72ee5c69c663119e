use super::config::ExperimentConfig;
use super::generator::Simulation;
use super::SimError;

/// Window relative to the trigger, ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start_ns: f64,
    pub width_ns: f64,
}

impl Window {
    pub fn new(start_ns: f64, width_ns: f64) -> Self {
        Self { start_ns, width_ns }
    }

    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.width_ns
    }

    fn overlap(&self, lo: f64, hi: f64) -> f64 {
        (self.end_ns().min(hi) - self.start_ns.max(lo)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedCounts {
    pub signal: f64,
    pub noise: f64,
}

/// Closed-form expected counts in a trigger-relative window over the whole
/// run. Signal uses the emission CDF and the mean pump-drift modulation;
/// timing jitter and arrival-time drift are neglected.
pub fn expected_counts(
    config: &ExperimentConfig,
    channel: u8,
    window: Window,
) -> Result<ExpectedCounts, SimError> {
    let sim = Simulation::new(config.clone())?;
    let model = config.channel(channel).ok_or(SimError::UnknownChannel(channel))?;
    let before = config.pulse.trigger_offset_ns();
    let after = config.cycle_period_ns() - before;
    if !(window.width_ns >= 0.0 && window.start_ns >= -before && window.end_ns() <= after) {
        return Err(SimError::Invalid {
            field: "window".into(),
            reason: format!(
                "[{}, {}) ns lies outside the cycle [-{before:.1}, {after:.1})",
                window.start_ns,
                window.end_ns()
            ),
        });
    }
    let cycles = sim.cycles() as f64;

    let profile = sim.profile();
    let shift = model.delay_ns;
    let fraction = profile.cdf_from_excitation(window.end_ns() - shift)
        - profile.cdf_from_excitation(window.start_ns - shift);
    let modulation = if model.pump_drift {
        sim.mean_modulation()
    } else {
        1.0
    };
    let signal = cycles * model.signal_probability * modulation * fraction;

    let p = &config.pulse;
    let pulse_on = window.overlap(0.0, p.excitation_duration_ns)
        + window.overlap(
            p.background_pulse_offset_ns,
            p.background_pulse_offset_ns + p.background_pulse_duration_ns,
        );
    let noise = cycles * 1e-9 * (model.flat_noise_cps * window.width_ns + model.pulse_background_cps * pulse_on);
    Ok(ExpectedCounts { signal, noise })
}

use serde::{Deserialize, Serialize};

use super::correlation::{snr, CorrelationResult};
use super::counts::gated_counts_with;
use super::gates::{locate_gates, GateSet, GateSpec, NoisePlacement};
use super::histogram::{ArrivalHistogram, ClockLocator, Locator, TriggerTracker};
use super::overlap::{pulse_shape_overlap, OverlapDistance, ShapeInput};
use super::AnalysisError;
use crate::sim::Simulation;
use crate::timetag::{ChannelRole, FormatError, StreamHeader, TimeTagRecord};

/// Gate geometry override for one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelGateConfig {
    pub id: u8,
    pub signal_width_ns: Option<f64>,
    pub noise_width_ns: Option<f64>,
    #[serde(default)]
    pub delay_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "defaults::bin_width_ns")]
    pub bin_width_ns: f64,
    #[serde(default)]
    pub histogram_start_ns: f64,
    #[serde(default = "defaults::histogram_end_ns")]
    pub histogram_end_ns: f64,
    #[serde(default = "defaults::n_max")]
    pub n_max: usize,
    /// Gate re-referencing interval.
    #[serde(default = "defaults::block_s")]
    pub block_s: f64,
    /// With tracking off, one set of gates is placed from the whole run.
    #[serde(default = "defaults::yes")]
    pub drift_tracking: bool,
    #[serde(default = "defaults::background_pulse_offset_ns")]
    pub background_pulse_offset_ns: f64,
    #[serde(default = "defaults::noise_gap_ns")]
    pub noise_gap_ns: f64,
    /// Defaults to the first PMT channel in the stream header.
    #[serde(default)]
    pub reference_channel: Option<u8>,
    #[serde(default)]
    pub trigger_channel: Option<u8>,
    /// Overlap comparison region, measured from each channel's peak.
    #[serde(default = "defaults::overlap_lead_ns")]
    pub overlap_lead_ns: f64,
    #[serde(default = "defaults::overlap_width_ns")]
    pub overlap_width_ns: f64,
    #[serde(default, rename = "channel")]
    pub channels: Vec<ChannelGateConfig>,
}

mod defaults {
    pub fn bin_width_ns() -> f64 {
        1.0
    }
    pub fn histogram_end_ns() -> f64 {
        1000.0
    }
    pub fn n_max() -> usize {
        50
    }
    pub fn block_s() -> f64 {
        3600.0
    }
    pub fn yes() -> bool {
        true
    }
    pub fn background_pulse_offset_ns() -> f64 {
        380.0
    }
    pub fn noise_gap_ns() -> f64 {
        40.0
    }
    pub fn overlap_lead_ns() -> f64 {
        30.0
    }
    pub fn overlap_width_ns() -> f64 {
        120.0
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bin_width_ns: defaults::bin_width_ns(),
            histogram_start_ns: 0.0,
            histogram_end_ns: defaults::histogram_end_ns(),
            n_max: defaults::n_max(),
            block_s: defaults::block_s(),
            drift_tracking: true,
            background_pulse_offset_ns: defaults::background_pulse_offset_ns(),
            noise_gap_ns: defaults::noise_gap_ns(),
            reference_channel: None,
            trigger_channel: None,
            overlap_lead_ns: defaults::overlap_lead_ns(),
            overlap_width_ns: defaults::overlap_width_ns(),
            channels: Vec::new(),
        }
    }
}

/// Default gate width by detector: the noisy telecom channel uses the
/// narrower gate.
pub fn default_gate_width_ns(role: ChannelRole) -> f64 {
    match role {
        ChannelRole::Snspd => 36.0,
        _ => 60.0,
    }
}

impl AnalysisConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, AnalysisError> {
        toml::from_str(text).map_err(|e| AnalysisError::Config(e.to_string()))
    }

    fn block_ps(&self) -> Result<u64, AnalysisError> {
        if !self.drift_tracking {
            return Ok(u64::MAX);
        }
        if !(self.block_s > 0.0 && self.block_s.is_finite()) {
            return Err(AnalysisError::Config(format!("block_s must be positive, got {}", self.block_s)));
        }
        Ok((self.block_s * 1e12).round().max(1.0) as u64)
    }

    fn trigger(&self, header: &StreamHeader) -> Result<u8, AnalysisError> {
        self.trigger_channel
            .or_else(|| header.channels_with_role(ChannelRole::Trigger).next())
            .ok_or_else(|| AnalysisError::Config("stream header maps no trigger channel".into()))
    }

    fn specs(&self, header: &StreamHeader, trigger: u8) -> Result<Vec<(GateSpec, ChannelRole)>, AnalysisError> {
        for c in &self.channels {
            if header.role_of(c.id).is_none() || c.id == trigger {
                return Err(AnalysisError::UnknownChannel(c.id));
            }
        }
        header
            .channel_map
            .iter()
            .filter(|(id, _)| *id != trigger)
            .map(|&(id, role)| {
                let o = self.channels.iter().find(|c| c.id == id);
                let signal = o
                    .and_then(|c| c.signal_width_ns)
                    .unwrap_or_else(|| default_gate_width_ns(role));
                let noise = o.and_then(|c| c.noise_width_ns).unwrap_or(signal);
                let delay = o.map_or(0.0, |c| c.delay_ns);
                if !(signal > 0.0 && noise > 0.0) {
                    return Err(AnalysisError::Config(format!("channel {id} gate widths must be positive")));
                }
                Ok((
                    GateSpec {
                        channel: id,
                        signal_width_ns: signal,
                        noise_width_ns: noise,
                        delay_ns: delay,
                    },
                    role,
                ))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelSummary {
    pub channel: u8,
    pub role: ChannelRole,
    pub signal: u64,
    pub noise: u64,
    pub ignored: u64,
    pub signal_width_ns: f64,
    pub noise_width_ns: f64,
    /// Undefined when the noise window is empty.
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub cycles: u64,
    pub trigger_channel: u8,
    pub reference_channel: u8,
    pub before_first_trigger: u64,
    pub channels: Vec<ChannelSummary>,
    pub correlations: Vec<CorrelationResult>,
    #[serde(skip)]
    pub gates: GateSet,
    #[serde(skip)]
    pub histograms: Vec<ArrivalHistogram>,
    /// Pairwise pulse-shape distances in channel order; absent when some
    /// channel has no background-subtracted area.
    pub overlap: Option<Vec<OverlapDistance>>,
}

impl AnalysisReport {
    pub fn channel(&self, id: u8) -> Option<&ChannelSummary> {
        self.channels.iter().find(|c| c.channel == id)
    }

    pub fn correlation(&self, a: u8, b: u8) -> Option<&CorrelationResult> {
        self.correlations
            .iter()
            .find(|c| c.channel_a == a && c.channel_b == b)
    }
}

/// Runs the two-pass analysis. `open` is called once per pass and must
/// yield the same stream each time.
pub fn analyze<F, I>(header: &StreamHeader, config: &AnalysisConfig, open: F) -> Result<AnalysisReport, AnalysisError>
where
    F: FnMut() -> Result<I, AnalysisError>,
    I: Iterator<Item = Result<TimeTagRecord, FormatError>>,
{
    analyze_located(header, config, open, TriggerTracker::default)
}

/// Analysis of a simulated run straight from the generator. Detections are
/// placed against the generator's clock instead of streamed trigger
/// records; the report is identical to analysing the written stream.
pub fn analyze_simulation(sim: &Simulation, config: &AnalysisConfig) -> Result<AnalysisReport, AnalysisError> {
    let locator = ClockLocator {
        clock: sim.clock(),
        cycles: sim.cycles(),
    };
    analyze_located(&sim.header(), config, || Ok(sim.detections().map(Ok)), || locator)
}

fn analyze_located<F, I, L>(
    header: &StreamHeader,
    config: &AnalysisConfig,
    mut open: F,
    new_locator: impl Fn() -> L,
) -> Result<AnalysisReport, AnalysisError>
where
    F: FnMut() -> Result<I, AnalysisError>,
    I: Iterator<Item = Result<TimeTagRecord, FormatError>>,
    L: Locator,
{
    let trigger = config.trigger(header)?;
    let specs = config.specs(header, trigger)?;
    if specs.is_empty() {
        return Err(AnalysisError::Config("stream has no detector channels".into()));
    }
    let reference = match config.reference_channel {
        Some(id) => id,
        None => specs
            .iter()
            .find(|(_, role)| *role == ChannelRole::Pmt)
            .unwrap_or(&specs[0])
            .0
            .channel,
    };
    let Some(reference_slot) = specs.iter().position(|(s, _)| s.channel == reference) else {
        return Err(AnalysisError::UnknownChannel(reference));
    };
    let block_ps = config.block_ps()?;
    let window = (config.histogram_start_ns, config.histogram_end_ns);
    let template = ArrivalHistogram::new(reference, window.0, window.1, config.bin_width_ns)?;

    // Pass 1: whole-run histograms per channel and per-block reference
    // histograms for gate placement.
    let mut slot = [usize::MAX; 256];
    for (i, (s, _)) in specs.iter().enumerate() {
        slot[s.channel as usize] = i;
    }
    let mut histograms: Vec<ArrivalHistogram> = specs
        .iter()
        .map(|(s, _)| ArrivalHistogram {
            channel: s.channel,
            ..template.clone()
        })
        .collect();
    let mut blocks: Vec<ArrivalHistogram> = Vec::new();
    let mut locator = new_locator();
    for record in open()? {
        let record = record?;
        if record.channel == trigger {
            locator.on_trigger(record.timestamp_ps);
            continue;
        }
        let s = slot[record.channel as usize];
        if s == usize::MAX {
            continue;
        }
        if let Some(at) = locator.locate(record.timestamp_ps) {
            histograms[s].add(at.dt_ns);
            if s == reference_slot {
                let block = (at.trigger_ps / block_ps) as usize;
                if blocks.len() <= block {
                    blocks.resize(block + 1, template.clone());
                }
                blocks[block].add(at.dt_ns);
            }
        }
    }
    let cycles = locator.triggers();
    let Some(last_trigger) = locator.last_trigger_ps() else {
        return Err(AnalysisError::NoCycles);
    };
    for h in &mut histograms {
        h.cycles = cycles;
    }
    // Every block up to the last trigger needs gates, even if the
    // reference channel saw nothing in it.
    let block_count = (last_trigger / block_ps) as usize + 1;
    blocks.resize(block_count, template.clone());

    let reference_width = specs[reference_slot].0.signal_width_ns;
    let placement = NoisePlacement {
        background_pulse_offset_ns: config.background_pulse_offset_ns,
        noise_gap_ns: config.noise_gap_ns,
    };
    let gate_specs: Vec<GateSpec> = specs.iter().map(|(s, _)| *s).collect();
    let gates = locate_gates(&blocks, reference_width, &gate_specs, placement, block_ps)?;

    // Pass 2: tallies and per-cycle presence.
    let (counts, table) = gated_counts_with(open()?, trigger, &gates, new_locator())?;

    let channels = specs
        .iter()
        .map(|(s, role)| {
            let c = counts.channel(s.channel).expect("every spec is gated");
            Ok(ChannelSummary {
                channel: s.channel,
                role: *role,
                signal: c.signal,
                noise: c.noise,
                ignored: c.ignored,
                signal_width_ns: s.signal_width_ns,
                noise_width_ns: s.noise_width_ns,
                snr: snr(c.signal as f64, c.noise as f64, s.signal_width_ns, s.noise_width_ns)?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    let correlations = specs
        .iter()
        .filter(|(s, _)| s.channel != reference)
        .map(|(s, _)| {
            let pair = counts.pair(reference, s.channel)?;
            CorrelationResult::compute(&table, &pair, reference, s.channel, config.n_max)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let inputs: Vec<ShapeInput<'_>> = specs
        .iter()
        .zip(&histograms)
        .zip(&gates.blocks[0].channels)
        .map(|(((s, _), h), g)| ShapeInput {
            histogram: h,
            background_per_bin: counts.channel(s.channel).map_or(0.0, |c| c.noise as f64) * config.bin_width_ns
                / s.noise_width_ns,
            window_start_ns: g.signal.start_ns + 0.5 * g.signal.width_ns - config.overlap_lead_ns,
        })
        .collect();
    let overlap = pulse_shape_overlap(&inputs, config.overlap_width_ns).ok();

    Ok(AnalysisReport {
        cycles: counts.cycles,
        trigger_channel: trigger,
        reference_channel: reference,
        before_first_trigger: counts.before_first_trigger,
        channels,
        correlations,
        gates,
        histograms,
        overlap,
    })
}

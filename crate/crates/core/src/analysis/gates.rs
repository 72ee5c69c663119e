use serde::{Deserialize, Serialize};

use super::histogram::ArrivalHistogram;
use super::AnalysisError;

/// Trigger-relative window `[start_ns, start_ns + width_ns)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub start_ns: f64,
    pub width_ns: f64,
}

impl Gate {
    pub fn new(start_ns: f64, width_ns: f64) -> Self {
        Self { start_ns, width_ns }
    }

    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.width_ns
    }

    #[inline]
    pub fn contains(&self, dt_ns: f64) -> bool {
        dt_ns >= self.start_ns && dt_ns < self.end_ns()
    }

    pub fn overlaps(&self, other: &Gate) -> bool {
        self.start_ns < other.end_ns() && other.start_ns < self.end_ns()
    }
}

/// Per-channel gate geometry requested by the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub channel: u8,
    pub signal_width_ns: f64,
    pub noise_width_ns: f64,
    /// Arrival delay of this channel relative to the reference channel.
    pub delay_ns: f64,
}

/// Where the noise window sits: `noise_gap_ns` after the point in the
/// background pulse that corresponds to the photon peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePlacement {
    pub background_pulse_offset_ns: f64,
    pub noise_gap_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelGates {
    pub channel: u8,
    pub signal: Gate,
    pub noise: Gate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockGates {
    pub reference_peak_ns: f64,
    pub channels: Vec<ChannelGates>,
}

/// Signal and noise windows per channel, re-referenced to the reference
/// channel's photon peak in every time block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateSet {
    pub block_ps: u64,
    pub blocks: Vec<BlockGates>,
}

impl GateSet {
    /// Block index for a trigger timestamp, clamped to the last block.
    #[inline]
    pub fn block_of(&self, trigger_ps: u64) -> usize {
        ((trigger_ps / self.block_ps) as usize).min(self.blocks.len() - 1)
    }

    pub fn gates(&self, block: usize, channel: u8) -> Option<&ChannelGates> {
        self.blocks
            .get(block)?
            .channels
            .iter()
            .find(|g| g.channel == channel)
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelGates> {
        self.blocks[0].channels.iter()
    }

    /// A set with the same gates in every block; used for fixed-gate
    /// comparisons and hand-built tests.
    pub fn fixed(block_ps: u64, blocks: usize, peak_ns: f64, channels: Vec<ChannelGates>) -> Result<Self, AnalysisError> {
        for g in &channels {
            validate(g)?;
        }
        Ok(Self {
            block_ps,
            blocks: vec![
                BlockGates {
                    reference_peak_ns: peak_ns,
                    channels,
                };
                blocks.max(1)
            ],
        })
    }
}

fn validate(g: &ChannelGates) -> Result<(), AnalysisError> {
    if !(g.signal.width_ns > 0.0 && g.noise.width_ns > 0.0) {
        return Err(AnalysisError::Config(format!(
            "channel {} gate widths must be positive",
            g.channel
        )));
    }
    if g.signal.overlaps(&g.noise) {
        return Err(AnalysisError::Config(format!(
            "channel {} signal and noise windows overlap",
            g.channel
        )));
    }
    Ok(())
}

/// Centre of the `window_ns`-wide window holding the most counts, searched
/// over bins whose start lies below `search_end_ns`. Ties over a contiguous
/// run of windows resolve to the middle of the run.
pub fn find_peak(hist: &ArrivalHistogram, window_ns: f64, search_end_ns: f64) -> Option<f64> {
    let w = ((window_ns / hist.bin_width_ns).round() as usize).clamp(1, hist.counts.len());
    let usable = hist
        .counts
        .iter()
        .enumerate()
        .take_while(|(i, _)| hist.bin_start(*i) < search_end_ns)
        .count();
    if usable == 0 || hist.counts[..usable].iter().all(|&c| c == 0) {
        return None;
    }
    let last_start = usable.saturating_sub(w);
    let mut sum: u64 = hist.counts[..w].iter().sum();
    let (mut best, mut best_first, mut best_last) = (sum, 0usize, 0usize);
    let mut run_open = true;
    for s in 1..=last_start {
        sum = sum + hist.counts[s + w - 1] - hist.counts[s - 1];
        if sum > best {
            best = sum;
            best_first = s;
            best_last = s;
            run_open = true;
        } else if sum == best && run_open && best_last == s - 1 {
            best_last = s;
        } else {
            run_open = false;
        }
    }
    let start = hist.bin_start(0) + hist.bin_width_ns * (best_first + best_last) as f64 / 2.0;
    Some(start + 0.5 * w as f64 * hist.bin_width_ns)
}

/// Places gates for every block from that block's reference histogram.
pub fn locate_gates(
    reference_blocks: &[ArrivalHistogram],
    reference_width_ns: f64,
    specs: &[GateSpec],
    placement: NoisePlacement,
    block_ps: u64,
) -> Result<GateSet, AnalysisError> {
    if reference_blocks.is_empty() {
        return Err(AnalysisError::EmptyBlock(0));
    }
    let mut blocks = Vec::with_capacity(reference_blocks.len());
    for (i, hist) in reference_blocks.iter().enumerate() {
        let peak = find_peak(hist, reference_width_ns, placement.background_pulse_offset_ns)
            .ok_or(AnalysisError::EmptyBlock(i))?;
        let channels = specs
            .iter()
            .map(|spec| {
                // Each channel's window is the best placement of its own
                // width on the reference profile, then shifted by its delay.
                let own = if spec.signal_width_ns == reference_width_ns {
                    peak
                } else {
                    find_peak(hist, spec.signal_width_ns, placement.background_pulse_offset_ns)
                        .ok_or(AnalysisError::EmptyBlock(i))?
                };
                let centre = own + spec.delay_ns;
                let gates = ChannelGates {
                    channel: spec.channel,
                    signal: Gate::new(centre - spec.signal_width_ns / 2.0, spec.signal_width_ns),
                    noise: Gate::new(
                        centre + placement.background_pulse_offset_ns + placement.noise_gap_ns,
                        spec.noise_width_ns,
                    ),
                };
                validate(&gates)?;
                Ok(gates)
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?;
        blocks.push(BlockGates {
            reference_peak_ns: peak,
            channels,
        });
    }
    Ok(GateSet { block_ps, blocks })
}

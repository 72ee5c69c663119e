use serde::Serialize;

use super::gates::GateSet;
use super::histogram::{Locator, TriggerTracker};
use super::AnalysisError;
use crate::timetag::{FormatError, TimeTagRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ChannelCounts {
    pub channel: u8,
    /// Detections inside the signal window (multiplicities kept).
    pub signal: u64,
    /// Detections inside the noise window.
    pub noise: u64,
    /// Detections in neither window.
    pub ignored: u64,
}

/// Gated tallies over a run. `cycles` is R, the number of triggers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatedCounts {
    pub cycles: u64,
    pub channels: Vec<ChannelCounts>,
    pub before_first_trigger: u64,
}

impl GatedCounts {
    pub fn channel(&self, id: u8) -> Option<&ChannelCounts> {
        self.channels.iter().find(|c| c.channel == id)
    }

    /// Tallies for the pair `(a, b)` in the form used by the background
    /// predictions: channel `a` is "1", channel `b` is "2".
    pub fn pair(&self, a: u8, b: u8) -> Result<PairCounts, AnalysisError> {
        let ca = self.channel(a).ok_or(AnalysisError::UnknownChannel(a))?;
        let cb = self.channel(b).ok_or(AnalysisError::UnknownChannel(b))?;
        Ok(PairCounts {
            c1_signal: ca.signal as f64,
            c1_noise: ca.noise as f64,
            c2_signal: cb.signal as f64,
            c2_noise: cb.noise as f64,
            cycles: self.cycles as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCounts {
    pub c1_signal: f64,
    pub c1_noise: f64,
    pub c2_signal: f64,
    pub c2_noise: f64,
    pub cycles: f64,
}

impl PairCounts {
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            c1_signal: self.c1_signal * k,
            c1_noise: self.c1_noise * k,
            c2_signal: self.c2_signal * k,
            c2_noise: self.c2_noise * k,
            cycles: self.cycles * k,
        }
    }
}

/// Cycles in which each channel registered at least one signal-window
/// click, sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleTable {
    pub cycles: u64,
    pub signal_cycles: Vec<(u8, Vec<u64>)>,
}

impl CycleTable {
    pub fn new(cycles: u64, channels: impl IntoIterator<Item = u8>) -> Self {
        Self {
            cycles,
            signal_cycles: channels.into_iter().map(|c| (c, Vec::new())).collect(),
        }
    }

    pub fn channel(&self, id: u8) -> Option<&[u64]> {
        self.signal_cycles
            .iter()
            .find(|(c, _)| *c == id)
            .map(|(_, v)| v.as_slice())
    }

    /// Marks a click; repeated clicks in one cycle collapse to one entry.
    pub fn mark(&mut self, id: u8, cycle: u64) -> Result<(), AnalysisError> {
        let list = self
            .signal_cycles
            .iter_mut()
            .find(|(c, _)| *c == id)
            .map(|(_, v)| v)
            .ok_or(AnalysisError::UnknownChannel(id))?;
        if list.last() != Some(&cycle) {
            list.push(cycle);
        }
        Ok(())
    }
}

/// Classifies every detection as signal, noise or ignored using the gates
/// of the block its trigger falls in.
pub fn gated_counts<I>(
    records: I,
    trigger_channel: u8,
    gates: &GateSet,
) -> Result<(GatedCounts, CycleTable), AnalysisError>
where
    I: IntoIterator<Item = Result<TimeTagRecord, FormatError>>,
{
    gated_counts_with(records, trigger_channel, gates, TriggerTracker::default())
}

pub(crate) fn gated_counts_with<I, L>(
    records: I,
    trigger_channel: u8,
    gates: &GateSet,
    mut locator: L,
) -> Result<(GatedCounts, CycleTable), AnalysisError>
where
    I: IntoIterator<Item = Result<TimeTagRecord, FormatError>>,
    L: Locator,
{
    let channel_ids: Vec<u8> = gates.channels().map(|g| g.channel).collect();
    let mut slot = [usize::MAX; 256];
    for (i, id) in channel_ids.iter().enumerate() {
        slot[*id as usize] = i;
    }
    let mut tallies: Vec<ChannelCounts> = channel_ids
        .iter()
        .map(|&channel| ChannelCounts {
            channel,
            ..Default::default()
        })
        .collect();
    let mut presence: Vec<Vec<u64>> = vec![Vec::new(); channel_ids.len()];
    let mut before_first_trigger = 0;

    for record in records {
        let record = record?;
        if record.channel == trigger_channel {
            locator.on_trigger(record.timestamp_ps);
            continue;
        }
        let s = slot[record.channel as usize];
        if s == usize::MAX {
            continue;
        }
        let Some(at) = locator.locate(record.timestamp_ps) else {
            before_first_trigger += 1;
            continue;
        };
        let g = &gates.blocks[gates.block_of(at.trigger_ps)].channels[s];
        let tally = &mut tallies[s];
        if g.signal.contains(at.dt_ns) {
            tally.signal += 1;
            if presence[s].last() != Some(&at.cycle) {
                presence[s].push(at.cycle);
            }
        } else if g.noise.contains(at.dt_ns) {
            tally.noise += 1;
        } else {
            tally.ignored += 1;
        }
    }

    let cycles = locator.triggers();
    let table = CycleTable {
        cycles,
        signal_cycles: channel_ids.iter().copied().zip(presence).collect(),
    };
    Ok((
        GatedCounts {
            cycles,
            channels: tallies,
            before_first_trigger,
        },
        table,
    ))
}

use serde::Serialize;

use super::AnalysisError;
use crate::sim::CycleClock;
use crate::timetag::{FormatError, TimeTagRecord};

/// Detection times relative to the most recent trigger, binned.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrivalHistogram {
    pub channel: u8,
    pub start_ns: f64,
    pub bin_width_ns: f64,
    pub counts: Vec<u64>,
    /// Number of trigger cycles covered.
    pub cycles: u64,
}

impl ArrivalHistogram {
    pub fn new(channel: u8, start_ns: f64, end_ns: f64, bin_width_ns: f64) -> Result<Self, AnalysisError> {
        if !(bin_width_ns > 0.0 && bin_width_ns.is_finite()) {
            return Err(AnalysisError::Config(format!(
                "bin width must be positive, got {bin_width_ns}"
            )));
        }
        if !(end_ns > start_ns) {
            return Err(AnalysisError::Config(format!(
                "histogram window [{start_ns}, {end_ns}) is empty"
            )));
        }
        let bins = ((end_ns - start_ns) / bin_width_ns).ceil() as usize;
        Ok(Self {
            channel,
            start_ns,
            bin_width_ns,
            counts: vec![0; bins],
            cycles: 0,
        })
    }

    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.bin_width_ns * self.counts.len() as f64
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.start_ns + self.bin_width_ns * i as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) + 0.5 * self.bin_width_ns
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one event at `dt_ns` after its trigger; returns whether it fell
    /// inside the window.
    #[inline]
    pub fn add(&mut self, dt_ns: f64) -> bool {
        let x = (dt_ns - self.start_ns) / self.bin_width_ns;
        if x >= 0.0 && x < self.counts.len() as f64 {
            self.counts[x as usize] += 1;
            true
        } else {
            false
        }
    }

    pub fn same_binning(&self, other: &Self) -> bool {
        self.start_ns == other.start_ns
            && self.bin_width_ns == other.bin_width_ns
            && self.counts.len() == other.counts.len()
    }

    /// Adds another histogram with identical binning.
    pub fn merge(&mut self, other: &Self) -> Result<(), AnalysisError> {
        if !self.same_binning(other) {
            return Err(AnalysisError::Binning);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.cycles += other.cycles;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct HistogramDiagnostics {
    /// Detections seen before the first trigger record.
    pub before_first_trigger: u64,
    pub outside_window: u64,
}

/// Position of a detection relative to the trigger train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Placement {
    pub cycle: u64,
    pub trigger_ps: u64,
    pub dt_ns: f64,
}

/// Assigns detections to cycles. Streams carry their triggers; a known
/// clock lets a simulated run skip them.
pub(crate) trait Locator {
    fn on_trigger(&mut self, t: u64);
    fn locate(&self, t: u64) -> Option<Placement>;
    fn triggers(&self) -> u64;
    fn last_trigger_ps(&self) -> Option<u64>;
}

/// Tracks the most recent trigger while streaming records.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct TriggerTracker {
    pub last_trigger_ps: Option<u64>,
    pub triggers: u64,
}

impl Locator for TriggerTracker {
    #[inline]
    fn on_trigger(&mut self, t: u64) {
        self.last_trigger_ps = Some(t);
        self.triggers += 1;
    }

    #[inline]
    fn locate(&self, t: u64) -> Option<Placement> {
        self.last_trigger_ps.map(|trig| Placement {
            cycle: self.triggers - 1,
            trigger_ps: trig,
            dt_ns: t.saturating_sub(trig) as f64 * 1e-3,
        })
    }

    fn triggers(&self) -> u64 {
        self.triggers
    }

    fn last_trigger_ps(&self) -> Option<u64> {
        self.last_trigger_ps
    }
}

/// Locates detections against the trigger times a `CycleClock` would
/// emit, for streams generated without trigger records.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ClockLocator {
    pub clock: CycleClock,
    pub cycles: u64,
}

impl Locator for ClockLocator {
    fn on_trigger(&mut self, _t: u64) {}

    #[inline]
    fn locate(&self, t: u64) -> Option<Placement> {
        if self.cycles == 0 || t < self.clock.trigger_ps(0) {
            return None;
        }
        let since = (t - self.clock.trigger_offset_ps) as u128;
        let mut k = ((since * self.clock.rate_hz as u128 / 1_000_000_000_000) as u64).min(self.cycles - 1);
        while k + 1 < self.cycles && self.clock.trigger_ps(k + 1) <= t {
            k += 1;
        }
        while self.clock.trigger_ps(k) > t {
            k -= 1;
        }
        let trig = self.clock.trigger_ps(k);
        Some(Placement {
            cycle: k,
            trigger_ps: trig,
            dt_ns: (t - trig) as f64 * 1e-3,
        })
    }

    fn triggers(&self) -> u64 {
        self.cycles
    }

    fn last_trigger_ps(&self) -> Option<u64> {
        (self.cycles > 0).then(|| self.clock.trigger_ps(self.cycles - 1))
    }
}

/// Single-pass histogram of one channel's arrival times relative to the
/// most recent trigger on `trigger_channel`.
pub fn build_histogram<I>(
    records: I,
    channel: u8,
    trigger_channel: u8,
    bin_width_ns: f64,
    window: (f64, f64),
) -> Result<(ArrivalHistogram, HistogramDiagnostics), AnalysisError>
where
    I: IntoIterator<Item = Result<TimeTagRecord, FormatError>>,
{
    let mut hist = ArrivalHistogram::new(channel, window.0, window.1, bin_width_ns)?;
    let mut diag = HistogramDiagnostics::default();
    let mut tracker = TriggerTracker::default();
    for record in records {
        let record = record?;
        if record.channel == trigger_channel {
            tracker.on_trigger(record.timestamp_ps);
        } else if record.channel == channel {
            match tracker.locate(record.timestamp_ps) {
                None => diag.before_first_trigger += 1,
                Some(at) => {
                    if !hist.add(at.dt_ns) {
                        diag.outside_window += 1;
                    }
                }
            }
        }
    }
    hist.cycles = tracker.triggers;
    Ok((hist, diag))
}

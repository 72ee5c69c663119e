use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{Seek, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::config::{ExperimentConfig, JITTER_CLAMP_SIGMAS, MAX_DRIFT_NS};
use super::profile::ProfileSampler;
use super::SimError;
use crate::photonics::{filter_transmission, FilterSpec, LorentzianLine};
use crate::timetag::{ChannelRole, StreamHeader, StreamWriter, TimeTagRecord};

const PS_PER_S: u128 = 1_000_000_000_000;

/// Integer cycle clock: cycle `k` starts at `floor(k * 1e12 / rate)` ps and
/// its trigger fires after the initialisation pulse and delay.
#[derive(Debug, Clone, Copy)]
pub struct CycleClock {
    pub rate_hz: u64,
    pub trigger_offset_ps: u64,
}

impl CycleClock {
    pub fn cycle_start_ps(&self, k: u64) -> u64 {
        (k as u128 * PS_PER_S / self.rate_hz as u128) as u64
    }

    pub fn trigger_ps(&self, k: u64) -> u64 {
        self.cycle_start_ps(k) + self.trigger_offset_ps
    }
}

/// Slow drifts: a clamped Gaussian random walk of the arrival time and a
/// sinusoidal second-stage pump detuning.
#[derive(Debug, Clone)]
struct DriftTrack {
    interval_ps: u64,
    arrival_ns: Vec<f64>,
    detuning_amplitude: f64,
    detuning_period_s: f64,
    detuning_phase: f64,
    line_fwhm: f64,
    filter: FilterSpec,
    on_resonance: f64,
}

impl DriftTrack {
    fn new(config: &ExperimentConfig, end_ps: u64, rng: &mut ChaCha8Rng) -> Self {
        let d = &config.drift;
        let interval_ps = ((d.update_interval_s * 1e12) as u64).max(1);
        let steps = (end_ps / interval_ps + 1) as usize;
        let step_sigma = d.arrival_step_ns_per_hour * (d.update_interval_s / 3600.0).sqrt();
        let mut arrival_ns = Vec::with_capacity(steps);
        let mut offset = 0.0_f64;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for _ in 0..steps {
            arrival_ns.push(offset);
            if step_sigma > 0.0 {
                offset = (offset + step_sigma * normal.sample(rng)).clamp(-MAX_DRIFT_NS, MAX_DRIFT_NS);
            }
        }
        let filter = FilterSpec::new(d.filter_fwhm_mhz, 1.0);
        let on_resonance = filter_transmission(&LorentzianLine::new(d.photon_linewidth_mhz, 0.0), &filter)
            .expect("validated filter");
        Self {
            interval_ps,
            arrival_ns,
            detuning_amplitude: d.pump_detuning_amplitude_mhz,
            detuning_period_s: d.pump_detuning_period_s,
            detuning_phase: rng.gen::<f64>() * std::f64::consts::TAU,
            line_fwhm: d.photon_linewidth_mhz,
            filter,
            on_resonance,
        }
    }

    fn arrival_offset_ns(&self, t_ps: u64) -> f64 {
        let i = (t_ps / self.interval_ps) as usize;
        self.arrival_ns[i.min(self.arrival_ns.len() - 1)]
    }

    fn detuning_mhz(&self, t_ps: u64) -> f64 {
        let t_s = t_ps as f64 * 1e-12;
        self.detuning_amplitude
            * (std::f64::consts::TAU * t_s / self.detuning_period_s + self.detuning_phase).sin()
    }

    /// Filter transmission relative to zero detuning.
    fn modulation(&self, t_ps: u64) -> f64 {
        let line = LorentzianLine::new(self.line_fwhm, self.detuning_mhz(t_ps));
        filter_transmission(&line, &self.filter).expect("validated filter") / self.on_resonance
    }
}

/// Deterministic Monte Carlo generator. Records are produced lazily, so a
/// run can be analysed without ever materialising the stream.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ExperimentConfig,
    seed: u64,
    cycles: u64,
    clock: CycleClock,
    end_ps: u64,
    profile: ProfileSampler,
    drift: DriftTrack,
}

/// RNG stream ids; each event source draws from its own stream so the
/// output does not depend on interleaving.
mod stream {
    pub const DRIFT: u64 = 0;
    pub const SIGNAL: u64 = 1;
    pub fn flat_noise(channel: u8) -> u64 {
        16 + 2 * channel as u64
    }
    pub fn pulse_background(channel: u8) -> u64 {
        17 + 2 * channel as u64
    }
}

fn rng_for(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self, SimError> {
        config.validate()?;
        let seed = config.seed()?;
        let cycles = config.cycles()?;
        let clock = CycleClock {
            rate_hz: config.repetition_rate_hz,
            trigger_offset_ps: (config.pulse.trigger_offset_ns() * 1e3).round() as u64,
        };
        let end_ps = clock.cycle_start_ps(cycles);
        let profile = ProfileSampler::new(&config.emission, config.pulse.excitation_duration_ns);
        let drift = DriftTrack::new(&config, end_ps, &mut rng_for(seed, stream::DRIFT));
        Ok(Self {
            config,
            seed,
            cycles,
            clock,
            end_ps,
            profile,
            drift,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Number of excitation attempts (and trigger records).
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn clock(&self) -> CycleClock {
        self.clock
    }

    pub fn profile(&self) -> &ProfileSampler {
        &self.profile
    }

    pub fn end_ps(&self) -> u64 {
        self.end_ps
    }

    /// Mean second-stage filter modulation over the run.
    pub fn mean_modulation(&self) -> f64 {
        let n = 20_000u64;
        (0..n)
            .map(|i| self.drift.modulation(((2 * i + 1) as u128 * self.end_ps as u128 / (2 * n as u128)) as u64))
            .sum::<f64>()
            / n as f64
    }

    pub fn arrival_offset_ns(&self, t_ps: u64) -> f64 {
        self.drift.arrival_offset_ns(t_ps)
    }

    pub fn header(&self) -> StreamHeader {
        let mut map = vec![(self.config.trigger_channel, ChannelRole::Trigger)];
        map.extend(self.config.channels.iter().map(|c| (c.id, c.role)));
        StreamHeader::new(map, self.config.digest())
    }

    pub fn records(&self) -> SimRecords<'_> {
        let mut sources: Vec<Box<dyn EventSource + '_>> = Vec::new();
        if self.config.channels.iter().any(|c| c.signal_probability > 0.0) {
            sources.push(Box::new(SignalSource::new(self)));
        }
        for c in &self.config.channels {
            if c.flat_noise_cps > 0.0 {
                sources.push(Box::new(FlatNoise::new(self, c.id, c.flat_noise_cps)));
            }
            if c.pulse_background_cps > 0.0 {
                sources.push(Box::new(PulseBackground::new(self, c.id, c.pulse_background_cps)));
            }
        }
        let mut heap = BinaryHeap::with_capacity(sources.len());
        for (i, source) in sources.iter_mut().enumerate() {
            if let Some((t, ch)) = source.next_event() {
                heap.push(Reverse((t, i as u16, ch)));
            }
        }
        let mut dead_ps = [0u64; 256];
        for c in &self.config.channels {
            dead_ps[c.id as usize] = (c.dead_time_ns * 1e3).round() as u64;
        }
        let rate = self.config.repetition_rate_hz as u128;
        let mut records = SimRecords {
            sources,
            heap,
            trigger_channel: self.config.trigger_channel,
            cycles: self.cycles,
            next_cycle: 0,
            next_trigger_ps: if self.cycles > 0 { self.clock.trigger_offset_ps } else { u64::MAX },
            next_event_ps: u64::MAX,
            cycle_start_ps: 0,
            remainder: 0,
            step_quotient: (PS_PER_S / rate) as u64,
            step_remainder: (PS_PER_S % rate) as u64,
            rate: rate as u64,
            trigger_offset_ps: self.clock.trigger_offset_ps,
            dead_ps,
            last_kept: [None; 256],
        };
        records.next_event_ps = records.peek_time();
        records
    }

    /// Detection records only. Trigger times follow from `clock()`, so an
    /// analysis of a simulated run can skip the trigger records.
    pub fn detections(&self) -> SimRecords<'_> {
        let mut records = self.records();
        records.cycles = 0;
        records.next_trigger_ps = u64::MAX;
        records
    }

    /// Writes the whole run as a `.qtt` stream.
    pub fn write_qtt<W: Write + Seek>(&self, sink: W) -> Result<(StreamHeader, u64), SimError> {
        let mut writer = StreamWriter::new(sink, self.header())?;
        for record in self.records() {
            writer.write(&record)?;
        }
        let (_, header, bytes) = writer.finish()?;
        Ok((header, bytes))
    }
}

trait EventSource {
    /// Next `(timestamp_ps, channel)`, non-decreasing in time.
    fn next_event(&mut self) -> Option<(u64, u8)>;
}

struct SignalChannel {
    id: u8,
    cumulative: f64,
    delay_ns: f64,
    jitter: Option<Normal<f64>>,
    jitter_clamp: f64,
    pump_drift: bool,
}

/// One emission per cycle at most, routed to a single channel. Cycles with
/// a detection are found by geometric skipping.
struct SignalSource<'a> {
    sim: &'a Simulation,
    rng: ChaCha8Rng,
    channels: Vec<SignalChannel>,
    total: f64,
    log_miss: f64,
    next_cycle: u64,
}

impl<'a> SignalSource<'a> {
    fn new(sim: &'a Simulation) -> Self {
        let mut cumulative = 0.0;
        let channels = sim
            .config
            .channels
            .iter()
            .filter(|c| c.signal_probability > 0.0)
            .map(|c| {
                cumulative += c.signal_probability;
                SignalChannel {
                    id: c.id,
                    cumulative,
                    delay_ns: c.delay_ns,
                    jitter: (c.jitter_sigma_ns > 0.0)
                        .then(|| Normal::new(0.0, c.jitter_sigma_ns).expect("valid sigma")),
                    jitter_clamp: JITTER_CLAMP_SIGMAS * c.jitter_sigma_ns,
                    pump_drift: c.pump_drift,
                }
            })
            .collect();
        Self {
            sim,
            rng: rng_for(sim.seed, stream::SIGNAL),
            channels,
            total: cumulative,
            log_miss: (1.0 - cumulative).ln(),
            next_cycle: 0,
        }
    }

    fn skip(&mut self) -> u64 {
        if self.total >= 1.0 {
            return 0;
        }
        // failures before the first success of a Bernoulli(total) sequence
        let u: f64 = 1.0 - self.rng.gen::<f64>();
        let g = (u.ln() / self.log_miss).floor();
        if g >= u64::MAX as f64 {
            u64::MAX
        } else {
            g as u64
        }
    }
}

impl EventSource for SignalSource<'_> {
    fn next_event(&mut self) -> Option<(u64, u8)> {
        loop {
            let cycle = self.next_cycle.checked_add(self.skip())?;
            if cycle >= self.sim.cycles {
                self.next_cycle = self.sim.cycles;
                return None;
            }
            self.next_cycle = cycle + 1;
            let pick = self.rng.gen::<f64>() * self.total;
            let idx = self
                .channels
                .iter()
                .position(|c| pick < c.cumulative)
                .unwrap_or(self.channels.len() - 1);
            let trigger = self.sim.clock.trigger_ps(cycle);
            let channel = &self.channels[idx];
            if channel.pump_drift {
                let keep = self.sim.drift.modulation(trigger);
                if self.rng.gen::<f64>() >= keep {
                    continue;
                }
            }
            let emission = self.sim.profile.sample(self.rng.gen::<f64>());
            let jitter = match &channel.jitter {
                Some(n) => n.sample(&mut self.rng).clamp(-channel.jitter_clamp, channel.jitter_clamp),
                None => 0.0,
            };
            let offset_ns =
                emission + channel.delay_ns + jitter + self.sim.drift.arrival_offset_ns(trigger);
            let t = trigger as i64 + (offset_ns * 1e3).round() as i64;
            return Some((t.max(0) as u64, channel.id));
        }
    }
}

/// Homogeneous Poisson noise over the whole run.
struct FlatNoise {
    rng: ChaCha8Rng,
    gap: Exp<f64>,
    t_ps: f64,
    end_ps: f64,
    channel: u8,
}

impl FlatNoise {
    fn new(sim: &Simulation, channel: u8, cps: f64) -> Self {
        Self {
            rng: rng_for(sim.seed, stream::flat_noise(channel)),
            gap: Exp::new(cps * 1e-12).expect("positive rate"),
            t_ps: 0.0,
            end_ps: sim.end_ps as f64,
            channel,
        }
    }
}

impl EventSource for FlatNoise {
    fn next_event(&mut self) -> Option<(u64, u8)> {
        self.t_ps += self.gap.sample(&mut self.rng);
        if self.t_ps >= self.end_ps {
            self.t_ps = f64::INFINITY;
            return None;
        }
        Some((self.t_ps as u64, self.channel))
    }
}

/// Poisson background present only while either 650 nm pulse is on. Time
/// is accumulated in "pulse-on" coordinates and mapped back onto cycles.
struct PulseBackground<'a> {
    sim: &'a Simulation,
    rng: ChaCha8Rng,
    gap: Exp<f64>,
    u_ns: f64,
    per_cycle_ns: f64,
    excitation_ns: f64,
    channel: u8,
}

impl<'a> PulseBackground<'a> {
    fn new(sim: &'a Simulation, channel: u8, cps: f64) -> Self {
        let p = &sim.config.pulse;
        Self {
            sim,
            rng: rng_for(sim.seed, stream::pulse_background(channel)),
            gap: Exp::new(cps * 1e-9).expect("positive rate"),
            u_ns: 0.0,
            per_cycle_ns: p.excitation_duration_ns + p.background_pulse_duration_ns,
            excitation_ns: p.excitation_duration_ns,
            channel,
        }
    }
}

impl EventSource for PulseBackground<'_> {
    fn next_event(&mut self) -> Option<(u64, u8)> {
        self.u_ns += self.gap.sample(&mut self.rng);
        let cycle = (self.u_ns / self.per_cycle_ns).floor();
        if cycle >= self.sim.cycles as f64 {
            self.u_ns = f64::INFINITY;
            return None;
        }
        let cycle = cycle as u64;
        let within = (self.u_ns - cycle as f64 * self.per_cycle_ns).max(0.0);
        let offset = if within < self.excitation_ns {
            within
        } else {
            self.sim.config.pulse.background_pulse_offset_ns + (within - self.excitation_ns)
        };
        let trigger = self.sim.clock.trigger_ps(cycle);
        let offset_ns = offset + self.sim.drift.arrival_offset_ns(trigger);
        let t = trigger as i64 + (offset_ns * 1e3).round() as i64;
        Some((t.max(0) as u64, self.channel))
    }
}

/// Time-ordered merge of triggers and all event sources.
pub struct SimRecords<'a> {
    sources: Vec<Box<dyn EventSource + 'a>>,
    heap: BinaryHeap<Reverse<(u64, u16, u8)>>,
    trigger_channel: u8,
    cycles: u64,
    next_cycle: u64,
    /// Timestamp of the next trigger, `u64::MAX` once all are emitted.
    next_trigger_ps: u64,
    /// Earliest pending event, `u64::MAX` when the heap is empty.
    next_event_ps: u64,
    cycle_start_ps: u64,
    remainder: u64,
    step_quotient: u64,
    step_remainder: u64,
    rate: u64,
    trigger_offset_ps: u64,
    dead_ps: [u64; 256],
    last_kept: [Option<u64>; 256],
}

impl SimRecords<'_> {
    #[inline]
    fn advance_cycle(&mut self) {
        self.next_cycle += 1;
        self.cycle_start_ps += self.step_quotient;
        self.remainder += self.step_remainder;
        if self.remainder >= self.rate {
            self.remainder -= self.rate;
            self.cycle_start_ps += 1;
        }
        self.next_trigger_ps = if self.next_cycle < self.cycles {
            self.cycle_start_ps + self.trigger_offset_ps
        } else {
            u64::MAX
        };
    }

    fn peek_time(&self) -> u64 {
        self.heap.peek().map_or(u64::MAX, |Reverse((t, _, _))| *t)
    }
}

impl Iterator for SimRecords<'_> {
    type Item = TimeTagRecord;

    #[inline]
    fn next(&mut self) -> Option<TimeTagRecord> {
        loop {
            // Triggers win ties so an event at the trigger instant belongs
            // to the new cycle.
            if self.next_trigger_ps <= self.next_event_ps {
                if self.next_trigger_ps == u64::MAX {
                    return None;
                }
                let t = self.next_trigger_ps;
                self.advance_cycle();
                return Some(TimeTagRecord::new(t, self.trigger_channel));
            }
            let Reverse((t, source, channel)) = self.heap.pop().expect("pending event");
            if let Some(next) = self.sources[source as usize].next_event() {
                self.heap.push(Reverse((next.0, source, next.1)));
            }
            self.next_event_ps = self.peek_time();
            let dead = self.dead_ps[channel as usize];
            if dead > 0 {
                if let Some(last) = self.last_kept[channel as usize] {
                    if t - last < dead {
                        continue;
                    }
                }
            }
            self.last_kept[channel as usize] = Some(t);
            return Some(TimeTagRecord::new(t, channel));
        }
    }
}

//! Statistical checks of the generator against closed-form expectations,
//! and of the analyzer on simulated streams.

use std::io::Cursor;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlink::analysis::{analyze, analyze_simulation, AnalysisConfig, ChannelGateConfig};
use qlink::presets;
use qlink::sim::{expected_counts, ChannelModel, ExperimentConfig, ProfileSampler, Simulation, Window};
use qlink::timetag::{read_stream, ChannelRole};

fn single_channel(p: f64, noise_cps: f64, seed: u64, duration_s: f64) -> ExperimentConfig {
    let mut apd = ChannelModel::new(2, ChannelRole::Apd);
    apd.signal_probability = p;
    apd.flat_noise_cps = noise_cps;
    let mut cfg = presets::experiment("noise-free").unwrap();
    cfg.seed = Some(seed);
    cfg.duration_s = Some(duration_s);
    cfg.channels = vec![apd];
    cfg
}

/// Trigger-relative arrival times (ns) of every detection on `channel`.
fn arrival_times(sim: &Simulation, channel: u8) -> Vec<f64> {
    let trigger = sim.config().trigger_channel;
    let mut last = None;
    let mut out = Vec::new();
    for r in sim.records() {
        if r.channel == trigger {
            last = Some(r.timestamp_ps);
        } else if r.channel == channel {
            if let Some(t0) = last {
                out.push((r.timestamp_ps - t0) as f64 / 1e3);
            }
        }
    }
    out
}

fn count_in(times: &[f64], w: Window) -> u64 {
    times.iter().filter(|&&t| t >= w.start_ns && t < w.end_ns()).count() as u64
}

#[test]
fn per_shot_probability_is_honoured() {
    let p = 1.04e-3;
    for seed in 1..=5 {
        let sim = Simulation::new(single_channel(p, 0.0, seed, 1e6 / 420_000.0)).unwrap();
        let n = sim.cycles() as f64;
        let hits = sim.detections().filter(|r| r.channel == 2).count() as f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!((hits - n * p).abs() < 4.0 * sigma, "seed {seed}: {hits} vs {}", n * p);
    }
}

/// Simpson's rule on the unnormalised profile, independent of the sampler's
/// closed forms.
fn numeric_mean(rise: f64, decay: f64, onset: f64, window: f64) -> f64 {
    let f = |t: f64| (1.0 - (-t / rise).exp()) * (-t / decay).exp();
    let n = 20_000;
    let h = window / n as f64;
    let (mut area, mut moment) = (0.0, 0.0);
    for i in 0..=n {
        let t = i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        area += w * f(t);
        moment += w * t * f(t);
    }
    onset + moment / area
}

#[test]
fn emission_sample_mean_within_three_standard_errors() {
    let cfg = presets::experiment("paper-493").unwrap();
    let e = cfg.emission;
    let sampler = ProfileSampler::new(&e, cfg.pulse.excitation_duration_ns);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1_000_000;
    let draws: Vec<f64> = (0..n).map(|_| sampler.sample(rng.gen())).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let oracle = numeric_mean(
        e.rise_constant_ns,
        e.decay_constant_ns,
        e.onset_ns,
        cfg.pulse.excitation_duration_ns - e.onset_ns,
    );
    assert!((mean - oracle).abs() < 3.0 * se, "{mean} vs {oracle} (se {se})");
}

#[test]
fn arrival_histogram_follows_profile_cdf() {
    let mut cfg = presets::experiment("noise-free").unwrap();
    cfg.duration_s = Some(10.0);
    let sim = Simulation::new(cfg).unwrap();
    let mut times = arrival_times(&sim, 2);
    times.sort_by(f64::total_cmp);
    let n = times.len() as f64;
    let d = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = sim.profile().cdf_from_excitation(t);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample KS statistic.
    let critical = 1.63 / n.sqrt();
    assert!(d < critical, "D = {d}, critical {critical}, n = {n}");
}

#[test]
fn gated_counts_match_expectation_over_seeds() {
    let signal = Window::new(30.0, 60.0);
    let noise = Window::new(500.0, 60.0);
    for seed in 0..20 {
        let mut cfg = presets::experiment("paper-493").unwrap();
        cfg.seed = Some(seed);
        cfg.duration_s = Some(1.0);
        let sim = Simulation::new(cfg.clone()).unwrap();
        let times = arrival_times(&sim, 2);
        for w in [signal, noise] {
            let e = expected_counts(&cfg, 2, w).unwrap();
            let lambda = e.signal + e.noise;
            let got = count_in(&times, w) as f64;
            assert!(
                (got - lambda).abs() < 4.0 * lambda.sqrt(),
                "seed {seed}, window {w:?}: {got} vs {lambda}"
            );
        }
    }
}

#[test]
fn flat_noise_rate_by_direct_arithmetic() {
    let cfg = single_channel(0.0, 2950.0, 3, 1.0);
    let e = expected_counts(&cfg, 2, Window::new(500.0, 36.0)).unwrap();
    assert!((e.noise - 2950.0 * 36e-9 * 420_000.0).abs() < 1e-9);
}

fn gate_override(id: u8, noise_width_ns: f64) -> ChannelGateConfig {
    ChannelGateConfig {
        id,
        signal_width_ns: None,
        noise_width_ns: Some(noise_width_ns),
        delay_ns: 0.0,
    }
}

#[test]
fn doubling_noise_window_doubles_noise_counts() {
    let mut cfg = presets::experiment("paper-1534").unwrap();
    cfg.duration_s = Some(60.0);
    let sim = Simulation::new(cfg).unwrap();
    let noise_of = |width| {
        let config = AnalysisConfig {
            channels: vec![gate_override(2, width)],
            ..Default::default()
        };
        analyze_simulation(&sim, &config).unwrap().channel(2).unwrap().noise as f64
    };
    let narrow = noise_of(36.0);
    let wide = noise_of(72.0);
    // The wide window is the narrow one plus an independent equal slice.
    assert!(
        (wide - 2.0 * narrow).abs() < 4.0 * (2.0 * narrow).sqrt(),
        "{narrow} -> {wide}"
    );
}

#[test]
fn drift_tracking_never_loses_signal() {
    for seed in 1..=3 {
        let mut cfg = presets::experiment("paper-493").unwrap();
        cfg.seed = Some(seed);
        cfg.duration_s = Some(1800.0);
        cfg.drift.arrival_step_ns_per_hour = 60.0;
        let sim = Simulation::new(cfg).unwrap();
        let signal = |tracking| {
            let config = AnalysisConfig {
                drift_tracking: tracking,
                block_s: 300.0,
                ..Default::default()
            };
            let report = analyze_simulation(&sim, &config).unwrap();
            report.channel(2).unwrap().signal
        };
        let tracked = signal(true);
        let fixed = signal(false);
        assert!(tracked >= fixed, "seed {seed}: tracked {tracked} < fixed {fixed}");
    }
}

#[test]
fn significance_grows_as_root_duration() {
    let mean_z = |duration_s| {
        (1..=4)
            .map(|seed| {
                let mut cfg = presets::experiment("paper-493").unwrap();
                cfg.seed = Some(seed);
                cfg.duration_s = Some(duration_s);
                let sim = Simulation::new(cfg).unwrap();
                analyze_simulation(&sim, &AnalysisConfig::default()).unwrap().correlations[0]
                    .z
                    .unwrap()
            })
            .sum::<f64>()
            / 4.0
    };
    let ratio = mean_z(240.0) / mean_z(60.0);
    assert!((ratio - 2.0).abs() < 0.25, "z ratio {ratio}");
}

#[test]
fn stream_and_clock_analysis_agree() {
    for preset in ["paper-493", "paper-780", "paper-1534"] {
        let mut cfg = presets::experiment(preset).unwrap();
        cfg.duration_s = Some(5.0);
        let sim = Simulation::new(cfg).unwrap();
        let mut sink = Cursor::new(Vec::new());
        sim.write_qtt(&mut sink).unwrap();
        let bytes = sink.into_inner();
        let (header, _) = read_stream(bytes.as_slice()).unwrap();
        let config = AnalysisConfig::default();
        let from_stream = analyze(&header, &config, || Ok(read_stream(bytes.as_slice())?.1)).unwrap();
        let from_clock = analyze_simulation(&sim, &config).unwrap();
        assert_eq!(from_stream, from_clock, "{preset}");
    }
}

#[test]
fn zero_noise_streams_never_put_two_channels_in_one_cycle() {
    let mut cfg = presets::experiment("noise-free").unwrap();
    cfg.duration_s = Some(5.0);
    let sim = Simulation::new(cfg).unwrap();
    let mut seen: Option<u8> = None;
    for r in sim.records() {
        if r.channel == 0 {
            seen = None;
        } else if let Some(c) = seen {
            assert_eq!(c, r.channel, "two channels fired in one cycle at {} ps", r.timestamp_ps);
        } else {
            seen = Some(r.channel);
        }
    }
}

use std::fmt::Write as _;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use qlink::analysis::{analyze_simulation, AnalysisConfig, AnalysisReport, CorrelationResult};
use qlink::photonics::{conversion_efficiency, fit_conversion_curve, ConversionCurve, FitOptions, FitSample};
use qlink::presets::{self, BudgetFile};
use qlink::sim::{expected_counts, ExperimentConfig, Simulation, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Fig2,
    Fig3,
    Fig4a,
    Fig4b,
    Fig4c,
    Budget,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig2 => "fig2",
            Scenario::Fig3 => "fig3",
            Scenario::Fig4a => "fig4a",
            Scenario::Fig4b => "fig4b",
            Scenario::Fig4c => "fig4c",
            Scenario::Budget => "budget",
        }
    }
}

impl FromStr for Scenario {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "fig2" => Scenario::Fig2,
            "fig3" => Scenario::Fig3,
            "fig4a" => Scenario::Fig4a,
            "fig4b" => Scenario::Fig4b,
            "fig4c" => Scenario::Fig4c,
            "budget" => Scenario::Budget,
            other => {
                return Err(anyhow!(
                    "unknown scenario `{other}` (expected fig2, fig3, fig4a, fig4b, fig4c or budget)"
                ))
            }
        })
    }
}

pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: String,
    pub pass: bool,
}

pub struct Run {
    pub scenario: Scenario,
    pub checks: Vec<Check>,
    pub seed: Option<u64>,
    pub config_name: Option<String>,
    pub config_digest: Option<String>,
}

impl Run {
    fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            checks: Vec::new(),
            seed: None,
            config_name: None,
            config_digest: None,
        }
    }

    fn check(&mut self, name: impl Into<String>, measured: f64, target: impl Into<String>, pass: bool) {
        self.checks.push(Check {
            name: name.into(),
            measured,
            target: target.into(),
            pass,
        });
    }

    /// `measured` within `rel` of `target`.
    fn relative(&mut self, name: &str, measured: f64, target: f64, rel: f64) {
        let pass = ((measured - target) / target).abs() <= rel;
        self.check(name, measured, format!("{target} ± {:.0}%", rel * 100.0), pass);
    }

    /// `measured` within `k` standard deviations of `expected`.
    fn sigmas(&mut self, name: &str, measured: f64, expected: f64, sigma: f64, k: f64) {
        let pass = (measured - expected).abs() <= k * sigma;
        self.check(name, measured, format!("{expected:.4} ± {k}σ (σ = {sigma:.4})"), pass);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{}  {:<width$}  {:>14.6}  {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.target
            );
        }
        let _ = writeln!(
            out,
            "{}: {}",
            self.scenario.name(),
            if self.passed() { "pass" } else { "fail" }
        );
        out
    }
}

pub fn run(scenario: Scenario, seed: Option<u64>, duration_s: Option<f64>) -> anyhow::Result<Run> {
    let mut run = Run::new(scenario);
    match scenario {
        Scenario::Fig2 => fig2(&mut run, seed.unwrap_or(2))?,
        Scenario::Fig3 => fig3(&mut run, seed, duration_s)?,
        Scenario::Fig4a => {
            let (report, _) = simulate(&mut run, "paper-493", seed, duration_s)?;
            run.relative("493 nm APD SNR", snr(&report, 2)?, 15.7, 0.15);
            let c = correlation(&report)?;
            background_checks(&mut run, c);
            run.check(
                "G(0) below n≠0 mean (σ)",
                c.z.unwrap_or(0.0),
                "> 10",
                c.z.is_some_and(|z| z > 10.0),
            );
        }
        Scenario::Fig4b => {
            let (report, _) = simulate(&mut run, "paper-780", seed, duration_s)?;
            run.relative("780 nm APD SNR", snr(&report, 2)?, 5.6, 0.15);
            background_checks(&mut run, correlation(&report)?);
        }
        Scenario::Fig4c => {
            let (report, sim) = simulate(&mut run, "paper-1534", seed, duration_s)?;
            run.relative("1534 nm SNSPD SNR", snr(&report, 2)?, 0.04, 0.15);
            let c = correlation(&report)?;
            background_checks(&mut run, c);
            let hours = sim.cycles() as f64 / sim.config().repetition_rate_hz as f64 / 3600.0;
            let z = c.z.unwrap_or(0.0) * (37.5 / hours).sqrt();
            run.check(
                "z scaled to 37.5 h",
                z,
                "4.8 ± 1.5",
                (z - 4.8).abs() <= 1.5,
            );
        }
        Scenario::Budget => budget(&mut run)?,
    }
    Ok(run)
}

fn simulate(
    run: &mut Run,
    preset: &str,
    seed: Option<u64>,
    duration_s: Option<f64>,
) -> anyhow::Result<(AnalysisReport, Simulation)> {
    let mut cfg: ExperimentConfig = presets::experiment(preset)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    if duration_s.is_some() {
        cfg.duration_s = duration_s;
    }
    let sim = Simulation::new(cfg)?;
    run.seed = sim.config().seed;
    run.config_name = Some(format!("preset:{preset}"));
    run.config_digest = Some(sim.config().digest_hex());
    let report = analyze_simulation(&sim, &AnalysisConfig::default()).with_context(|| format!("analysing {preset}"))?;
    Ok((report, sim))
}

fn snr(report: &AnalysisReport, channel: u8) -> anyhow::Result<f64> {
    report
        .channel(channel)
        .and_then(|c| c.snr)
        .ok_or_else(|| anyhow!("channel {channel} has no defined SNR"))
}

fn correlation(report: &AnalysisReport) -> anyhow::Result<&CorrelationResult> {
    report
        .correlations
        .first()
        .ok_or_else(|| anyhow!("no correlation pair in the report"))
}

/// Measured coincidences against the background predictions, with Poisson
/// errors on the measured side.
fn background_checks(run: &mut Run, c: &CorrelationResult) {
    let n_terms = 2.0 * c.raw.n_max as f64;
    run.sigmas(
        "G(0) vs same-cycle prediction",
        c.raw.zero() as f64,
        c.theory_zero,
        c.theory_zero.max(1.0).sqrt(),
        3.0,
    );
    run.sigmas(
        "mean G(n≠0) vs cross-cycle prediction",
        c.off_peak_mean(),
        c.theory_nonzero,
        (c.theory_nonzero.max(1.0) / n_terms).sqrt(),
        3.0,
    );
}

/// Synthetic conversion curves with 5% multiplicative scatter, fitted
/// back.
fn fig2(run: &mut Run, seed: u64) -> anyhow::Result<()> {
    run.seed = Some(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scatter = Normal::new(1.0, 0.05).expect("valid");
    for (stage, eta, p_max) in [("QFC 1", 0.36, 300.0), ("QFC 2", 0.15, 2000.0)] {
        let curve = ConversionCurve::new(eta, p_max)?;
        let samples = (1..=40)
            .map(|i| {
                let p = p_max * 1.6 * i as f64 / 40.0;
                let y = conversion_efficiency(p, &curve)? * scatter.sample(&mut rng);
                Ok(FitSample {
                    power_mw: p,
                    efficiency: y,
                    uncertainty: 0.05 * y.abs().max(1e-6),
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let fit = fit_conversion_curve(&samples, FitOptions::default())?;
        run.relative(&format!("{stage} fitted eta"), fit.curve.eta_peak, eta, 0.02);
    }
    Ok(())
}

fn fig3(run: &mut Run, seed: Option<u64>, duration_s: Option<f64>) -> anyhow::Result<()> {
    let (report, sim) = simulate(run, "paper-493", seed, duration_s)?;
    let overlap = report
        .overlap
        .as_ref()
        .and_then(|o| o.first())
        .map(|d| d.l1)
        .ok_or_else(|| anyhow!("pulse-shape overlap undefined"))?;
    run.check("PMT vs APD pulse-shape L1 distance", overlap, "< 0.1", overlap < 0.1);
    tally_checks(run, &report, &sim)?;

    let (report, sim) = simulate(run, "paper-1534", seed, duration_s.or(Some(600.0)))?;
    tally_checks(run, &report, &sim)?;
    Ok(())
}

/// Gated tallies of the fiber-arm channel against closed-form expectations.
fn tally_checks(run: &mut Run, report: &AnalysisReport, sim: &Simulation) -> anyhow::Result<()> {
    let block = &report.gates.blocks[0];
    let gates = block
        .channels
        .iter()
        .find(|g| g.channel == 2)
        .ok_or_else(|| anyhow!("channel 2 not gated"))?;
    let tallies = report.channel(2).ok_or_else(|| anyhow!("channel 2 missing"))?;
    let role = tallies.role.label();
    let s = expected_counts(sim.config(), 2, Window::new(gates.signal.start_ns, gates.signal.width_ns))?;
    let n = expected_counts(sim.config(), 2, Window::new(gates.noise.start_ns, gates.noise.width_ns))?;
    let signal_expected = s.signal + s.noise;
    let noise_expected = n.signal + n.noise;
    run.sigmas(
        &format!("{role} signal-window counts"),
        tallies.signal as f64,
        signal_expected,
        signal_expected.sqrt(),
        4.0,
    );
    run.sigmas(
        &format!("{role} noise-window counts"),
        tallies.noise as f64,
        noise_expected,
        noise_expected.sqrt(),
        4.0,
    );
    Ok(())
}

fn budget(run: &mut Run) -> anyhow::Result<()> {
    let file = BudgetFile::shipped();
    run.config_name = Some("preset:paper-budget".into());
    let (chains, stages) = file.evaluate()?;
    let stage = |name: &str| {
        stages
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.ratio)
            .ok_or_else(|| anyhow!("budget has no stage `{name}`"))
    };
    let end = stage("493 nm to 1534 nm")?;
    run.check(
        "493 nm to 1534 nm conversion",
        end,
        "0.0066 ± 0.0002",
        (end - 0.0066).abs() <= 0.0002,
    );
    run.relative("493 nm to 780 nm conversion", stage("493 nm to 780 nm")?, 0.195, 0.05);
    for c in &chains {
        if let Some(m) = c.measured {
            run.relative(&format!("{} chain vs measured", c.name), c.report.product, m, 0.05);
        }
    }
    Ok(())
}

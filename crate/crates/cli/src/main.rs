mod manifest;
mod output;
mod reproduce;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use qlink::analysis::{analyze, AnalysisConfig, AnalysisReport};
use qlink::photonics::{fit_conversion_curve, FitOptions, FitSample, ReportRecord};
use qlink::presets::{self, BudgetFile};
use qlink::sim::{ExperimentConfig, Simulation};
use qlink::timetag::read_stream;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "qlink", version, about = "Simulate and analyse trapped-ion photon time-tag streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a `.qtt` time-tag stream from an experiment config.
    Simulate {
        /// Config file, or the name of a shipped preset.
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "duration-s")]
        duration_s: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Histogram, gate and correlate one or more `.qtt` streams.
    Analyze {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Analysis config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "n-max")]
        n_max: Option<usize>,
        #[arg(long = "block-s")]
        block_s: Option<f64>,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit the conversion-efficiency law to power/efficiency data.
    Fit {
        /// CSV with columns power_mw, efficiency and optionally uncertainty.
        data: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a link-budget file.
    Budget {
        /// Budget file, or the name of a shipped preset.
        #[arg(long, default_value = "paper-budget")]
        config: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a reference scenario end to end and compare against its targets.
    Reproduce {
        /// One of fig2, fig3, fig4a, fig4b, fig4c, budget.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "duration-s")]
        duration_s: Option<f64>,
        /// Directory for the pass/fail table and manifest.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Errors that map to exit code 2.
struct UsageError(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for UsageError {
    fn from(e: E) -> Self {
        Self(e.into())
    }
}

enum Outcome {
    Success,
    AcceptanceFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::AcceptanceFailed) => ExitCode::from(1),
        Err(UsageError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<Outcome, UsageError> {
    let started = Instant::now();
    match command {
        Command::Simulate {
            config,
            seed,
            duration_s,
            output,
        } => {
            let (mut cfg, path) = load_experiment(&config)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            if duration_s.is_some() {
                cfg.duration_s = duration_s;
            }
            let sim = Simulation::new(cfg)?;
            let file = File::create(&output).with_context(|| format!("creating {}", output.display()))?;
            let (header, _) = sim.write_qtt(BufWriter::new(file))?;
            println!(
                "wrote {} records over {} cycles to {}",
                header.record_count,
                sim.cycles(),
                output.display()
            );
            let mut m = RunManifest::new("simulate");
            m.config_path = Some(path);
            m.config_digest = Some(sim.config().digest_hex());
            m.seed = sim.config().seed;
            m.effective_config = Some(sim.config().to_toml_string());
            let manifest_path = manifest::beside(&output);
            m.outputs = vec![output, manifest_path.clone()];
            m.finish(started.elapsed(), &manifest_path)?;
            Ok(Outcome::Success)
        }
        Command::Analyze {
            inputs,
            config,
            n_max,
            block_s,
            output,
        } => {
            let mut cfg = match &config {
                Some(p) => AnalysisConfig::from_toml_str(&read_text(p)?)?,
                None => AnalysisConfig::default(),
            };
            if let Some(n) = n_max {
                cfg.n_max = n;
            }
            if let Some(b) = block_s {
                cfg.block_s = b;
            }
            std::fs::create_dir_all(&output).with_context(|| format!("creating {}", output.display()))?;
            let mut m = RunManifest::new("analyze");
            m.config_path = config.as_ref().map(|p| p.display().to_string());
            m.effective_config = Some(toml_text(&cfg));
            for input in &inputs {
                let report = analyze_file(input, &cfg)?;
                let dir = if inputs.len() == 1 {
                    output.clone()
                } else {
                    let stem = input.file_stem().unwrap_or_default();
                    output.join(stem)
                };
                std::fs::create_dir_all(&dir)?;
                m.outputs.extend(output::write_report(&report, &dir)?);
                print_summary(input, &report);
            }
            let manifest_path = output.join("manifest.json");
            m.outputs.push(manifest_path.clone());
            m.finish(started.elapsed(), &manifest_path)?;
            Ok(Outcome::Success)
        }
        Command::Fit { data, output } => {
            let samples = read_fit_samples(&data)?;
            let fit = fit_conversion_curve(&samples, FitOptions::default())?;
            let records = fit.report();
            emit_records(&records, output.as_deref())?;
            if let Some(out) = output {
                let mut m = RunManifest::new("fit");
                m.config_path = Some(data.display().to_string());
                let manifest_path = manifest::beside(&out);
                m.outputs = vec![out, manifest_path.clone()];
                m.finish(started.elapsed(), &manifest_path)?;
            }
            Ok(Outcome::Success)
        }
        Command::Budget { config, output } => {
            let (text, path) = load_text_or_preset(&config)?;
            let budget = BudgetFile::from_toml_str(&text).with_context(|| format!("parsing budget {path}"))?;
            let records = budget_records(&budget)?;
            emit_records(&records, output.as_deref())?;
            if let Some(out) = output {
                let mut m = RunManifest::new("budget");
                m.config_path = Some(path);
                m.effective_config = Some(text);
                let manifest_path = manifest::beside(&out);
                m.outputs = vec![out, manifest_path.clone()];
                m.finish(started.elapsed(), &manifest_path)?;
            }
            Ok(Outcome::Success)
        }
        Command::Reproduce {
            scenario,
            seed,
            duration_s,
            output,
        } => {
            let scenario: reproduce::Scenario = scenario.parse()?;
            let run = reproduce::run(scenario, seed, duration_s)?;
            let table = run.table();
            print!("{table}");
            if let Some(dir) = output {
                std::fs::create_dir_all(&dir)?;
                let table_path = dir.join(format!("{}.txt", scenario.name()));
                std::fs::write(&table_path, &table)?;
                let mut m = RunManifest::new("reproduce");
                m.config_path = run.config_name.clone();
                m.config_digest = run.config_digest.clone();
                m.seed = run.seed;
                let manifest_path = dir.join("manifest.json");
                m.outputs = vec![table_path, manifest_path.clone()];
                m.finish(started.elapsed(), &manifest_path)?;
            }
            Ok(if run.passed() {
                Outcome::Success
            } else {
                Outcome::AcceptanceFailed
            })
        }
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// A path that exists wins over a preset of the same name.
fn load_text_or_preset(spec: &str) -> anyhow::Result<(String, String)> {
    let path = Path::new(spec);
    if path.exists() {
        return Ok((read_text(path)?, spec.to_string()));
    }
    match presets::preset_text(spec) {
        Some(text) => Ok((text.to_string(), format!("preset:{spec}"))),
        None => bail!(
            "`{spec}` is neither a file nor a shipped preset ({})",
            presets::names().collect::<Vec<_>>().join(", ")
        ),
    }
}

fn load_experiment(spec: &str) -> anyhow::Result<(ExperimentConfig, String)> {
    let (text, path) = load_text_or_preset(spec)?;
    let cfg = ExperimentConfig::from_toml_str(&text).with_context(|| format!("in {path}"))?;
    Ok((cfg, path))
}

fn toml_text<T: serde::Serialize>(value: &T) -> String {
    toml::to_string(value).unwrap_or_default()
}

fn analyze_file(path: &Path, cfg: &AnalysisConfig) -> anyhow::Result<AnalysisReport> {
    let open = || -> anyhow::Result<_> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        read_stream(BufReader::with_capacity(1 << 20, file)).with_context(|| format!("reading {}", path.display()))
    };
    let (header, _) = open()?;
    let report = analyze(&header, cfg, || {
        let file = File::open(path)?;
        let (_, records) = read_stream(BufReader::with_capacity(1 << 20, file))?;
        Ok(records)
    })
    .with_context(|| format!("analysing {}", path.display()))?;
    Ok(report)
}

fn print_summary(input: &Path, report: &AnalysisReport) {
    println!("{}: {} cycles", input.display(), report.cycles);
    for c in &report.channels {
        let snr = c.snr.map_or("undefined".to_string(), |s| format!("{s:.4}"));
        println!(
            "  channel {} ({}): signal {} noise {} snr {snr}",
            c.channel,
            c.role.label(),
            c.signal,
            c.noise
        );
    }
    for c in &report.correlations {
        let z = c.z.map_or("undefined".to_string(), |z| format!("{z:.2}"));
        println!(
            "  G2 {}x{}: G(0) {} (expected {:.1}), mean n!=0 {:.1} (expected {:.1}), z {z}",
            c.channel_a,
            c.channel_b,
            c.raw.zero(),
            c.theory_zero,
            c.off_peak_mean(),
            c.theory_nonzero
        );
    }
}

#[derive(serde::Deserialize)]
struct FitRow {
    power_mw: f64,
    efficiency: f64,
    uncertainty: Option<f64>,
}

fn read_fit_samples(path: &Path) -> anyhow::Result<Vec<FitSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut samples = Vec::new();
    for (i, row) in reader.deserialize::<FitRow>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        samples.push(FitSample {
            power_mw: row.power_mw,
            efficiency: row.efficiency,
            uncertainty: row.uncertainty.unwrap_or(1.0),
        });
    }
    Ok(samples)
}

fn budget_records(budget: &BudgetFile) -> anyhow::Result<Vec<ReportRecord>> {
    let (chains, stages) = budget.evaluate()?;
    let mut out = Vec::new();
    for chain in chains {
        for (label, factor, cumulative) in &chain.report.rows {
            out.push(ReportRecord::new(format!("{} / {label}", chain.name), *factor));
            out.push(ReportRecord::new(format!("{} / cumulative after {label}", chain.name), *cumulative));
        }
        out.push(ReportRecord::new(format!("{} / product", chain.name), chain.report.product));
        if let Some(m) = chain.measured {
            out.push(ReportRecord::new(format!("{} / measured", chain.name), m));
        }
    }
    for stage in stages {
        out.push(ReportRecord::new(format!("stage {}", stage.name), stage.ratio));
        if let Some(q) = stage.quoted {
            out.push(ReportRecord::new(format!("stage {} / quoted", stage.name), q));
        }
    }
    Ok(out)
}

fn emit_records(records: &[ReportRecord], output: Option<&Path>) -> anyhow::Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    std::io::stdout().write_all(text.as_bytes())?;
    if let Some(path) = output {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

use std::path::{Path, PathBuf};

use anyhow::Context;

use qlink::analysis::AnalysisReport;

/// Writes the CSV series and JSON summary for one analysed stream and
/// returns the paths written.
pub fn write_report(report: &AnalysisReport, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let paths = vec![
        write_histograms(report, &dir.join("histograms.csv"))?,
        write_gates(report, &dir.join("gates.csv"))?,
        write_g2(report, &dir.join("g2.csv"))?,
        write_symmetrized(report, &dir.join("g2_symmetrized.csv"))?,
        write_summary(report, &dir.join("summary.json"))?,
    ];
    Ok(paths)
}

fn writer(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn write_histograms(report: &AnalysisReport, path: &Path) -> anyhow::Result<PathBuf> {
    let mut w = writer(path)?;
    let mut header = vec!["bin_start_ns".to_string()];
    header.extend(report.histograms.iter().map(|h| format!("channel_{}", h.channel)));
    w.write_record(&header)?;
    if let Some(first) = report.histograms.first() {
        for i in 0..first.counts.len() {
            let mut row = vec![first.bin_start(i).to_string()];
            row.extend(report.histograms.iter().map(|h| h.counts[i].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

fn write_gates(report: &AnalysisReport, path: &Path) -> anyhow::Result<PathBuf> {
    let mut w = writer(path)?;
    w.write_record([
        "block",
        "channel",
        "signal_start_ns",
        "signal_width_ns",
        "noise_start_ns",
        "noise_width_ns",
    ])?;
    for (b, block) in report.gates.blocks.iter().enumerate() {
        for g in &block.channels {
            w.write_record([
                b.to_string(),
                g.channel.to_string(),
                g.signal.start_ns.to_string(),
                g.signal.width_ns.to_string(),
                g.noise.start_ns.to_string(),
                g.noise.width_ns.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// Raw coincidences with the background prediction alongside: the
/// same-cycle expectation at n = 0, the cross-cycle one elsewhere.
fn write_g2(report: &AnalysisReport, path: &Path) -> anyhow::Result<PathBuf> {
    let mut w = writer(path)?;
    w.write_record(["channel_a", "channel_b", "n", "coincidences", "theory"])?;
    for c in &report.correlations {
        for (n, count) in c.raw.iter() {
            let theory = if n == 0 { c.theory_zero } else { c.theory_nonzero };
            w.write_record([
                c.channel_a.to_string(),
                c.channel_b.to_string(),
                n.to_string(),
                count.to_string(),
                theory.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

fn write_symmetrized(report: &AnalysisReport, path: &Path) -> anyhow::Result<PathBuf> {
    let mut w = writer(path)?;
    w.write_record(["channel_a", "channel_b", "n", "coincidences", "theory"])?;
    for c in &report.correlations {
        for (n, value) in c.symmetrized.iter().enumerate() {
            let theory = if n == 0 { c.theory_zero } else { c.theory_nonzero };
            w.write_record([
                c.channel_a.to_string(),
                c.channel_b.to_string(),
                n.to_string(),
                value.to_string(),
                theory.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

fn write_summary(report: &AnalysisReport, path: &Path) -> anyhow::Result<PathBuf> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

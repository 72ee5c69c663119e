use serde::Serialize;

use super::histogram::ArrivalHistogram;
use super::AnalysisError;

/// One arrival-time histogram with its flat background level (counts per
/// bin, usually estimated from the noise window) and the start of the
/// region to compare. Starts may differ between channels to absorb
/// fixed arrival delays.
#[derive(Debug, Clone, Copy)]
pub struct ShapeInput<'a> {
    pub histogram: &'a ArrivalHistogram,
    pub background_per_bin: f64,
    pub window_start_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapDistance {
    pub first: usize,
    pub second: usize,
    /// L1 distance between the unit-area shapes, in `[0, 2]`.
    pub l1: f64,
}

fn normalized(input: &ShapeInput<'_>, width_ns: f64, bins: usize) -> Result<Vec<f64>, AnalysisError> {
    let h = input.histogram;
    let first = ((input.window_start_ns - h.start_ns) / h.bin_width_ns).round();
    if first < 0.0 || first as usize + bins > h.counts.len() {
        return Err(AnalysisError::Config(format!(
            "overlap window [{}, {}) leaves the histogram of channel {}",
            input.window_start_ns,
            input.window_start_ns + width_ns,
            h.channel
        )));
    }
    let first = first as usize;
    let shape: Vec<f64> = h.counts[first..first + bins]
        .iter()
        .map(|&c| c as f64 - input.background_per_bin)
        .collect();
    let area: f64 = shape.iter().sum();
    if !(area > 0.0) {
        return Err(AnalysisError::ZeroArea(h.channel));
    }
    Ok(shape.into_iter().map(|v| v / area).collect())
}

/// Background-subtracts each histogram, scales it to unit area over the
/// comparison window and returns the L1 distance for every pair.
pub fn pulse_shape_overlap(inputs: &[ShapeInput<'_>], width_ns: f64) -> Result<Vec<OverlapDistance>, AnalysisError> {
    let Some(first) = inputs.first() else {
        return Ok(Vec::new());
    };
    if inputs
        .iter()
        .any(|i| i.histogram.bin_width_ns != first.histogram.bin_width_ns)
    {
        return Err(AnalysisError::Binning);
    }
    let bins = (width_ns / first.histogram.bin_width_ns).round() as usize;
    if bins == 0 {
        return Err(AnalysisError::Config("overlap window is narrower than one bin".into()));
    }
    let shapes = inputs
        .iter()
        .map(|i| normalized(i, width_ns, bins))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for i in 0..shapes.len() {
        for j in i + 1..shapes.len() {
            let l1 = shapes[i].iter().zip(&shapes[j]).map(|(a, b)| (a - b).abs()).sum();
            out.push(OverlapDistance { first: i, second: j, l1 });
        }
    }
    Ok(out)
}

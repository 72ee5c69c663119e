//! Streaming analysis of time-tag streams: arrival histograms, drift-tracked
//! gates, gated tallies, cross-cycle coincidences and their background
//! predictions.

mod correlation;
mod counts;
mod gates;
mod histogram;
mod overlap;
mod pipeline;

pub use correlation::{
    g2, g2_from_cycles, significance, snr, symmetrize, theory_g2_nonzero, theory_g2_zero, CorrelationResult,
    G2Series,
};
pub use counts::{gated_counts, ChannelCounts, CycleTable, GatedCounts, PairCounts};
pub use gates::{find_peak, locate_gates, BlockGates, ChannelGates, Gate, GateSet, GateSpec, NoisePlacement};
pub use histogram::{build_histogram, ArrivalHistogram, HistogramDiagnostics};
pub use overlap::{pulse_shape_overlap, OverlapDistance, ShapeInput};
pub use pipeline::{analyze, analyze_simulation, default_gate_width_ns, AnalysisConfig, AnalysisReport, ChannelGateConfig, ChannelSummary};

use thiserror::Error;

use crate::timetag::FormatError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid analysis config: {0}")]
    Config(String),
    #[error("histograms have different binning")]
    Binning,
    #[error("time block {0} has no reference-channel events")]
    EmptyBlock(usize),
    #[error("channel {0} is not part of the analysis")]
    UnknownChannel(u8),
    #[error("stream contains no trigger records")]
    NoCycles,
    #[error("correlation series is all zero")]
    AllZero,
    #[error("n_max = {n_max} is below the required {required}")]
    NMaxTooSmall { n_max: usize, required: usize },
    #[error("channel {0} has no area left after background subtraction")]
    ZeroArea(u8),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

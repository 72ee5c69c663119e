//! Simulation and analysis toolkit for a trapped-ion single-photon source
//! converted to the telecom C-band in two difference-frequency stages.
//!
//! - [`photonics`]: conversion-efficiency law and fit, filter overlap,
//!   noise scenarios and link budgets.
//! - [`timetag`]: the `.qtt` binary time-tag container.
//! - [`sim`]: seeded, event-driven generator of time-tag streams.
//! - [`analysis`]: histograms, gating, G2(n) correlations and their
//!   background predictions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod photonics;
pub mod presets;
pub mod sim;
pub mod timetag;

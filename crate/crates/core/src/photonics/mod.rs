//! Closed-form models for the conversion chain: the pump-power efficiency
//! law and its least-squares fit, Lorentzian filter overlap, tabulated
//! pump-noise scenarios and multiplicative link budgets.

mod budget;
mod conversion;
mod filter;
mod noise;

pub use budget::{budget_product, stage_conversion_ratio, BudgetEntry, BudgetReport, LinkBudget};
pub use conversion::{
    conversion_efficiency, fit_conversion_curve, ConversionCurve, CurveFit, FitOptions, FitSample,
};
pub use filter::{filter_transmission, FilterSpec, LorentzianLine};
pub use noise::{noise_scale_for_scenario, NoiseScenario, NoiseScenarioTable};

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonicsError {
    #[error("pump power must be non-negative, got {0} mW")]
    NegativePower(f64),
    #[error("invalid conversion curve: {0}")]
    InvalidCurve(String),
    #[error("need at least 3 samples with distinct pump powers, got {0}")]
    TooFewSamples(usize),
    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),
    #[error("fit did not converge after {iterations} iterations (last relative step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("filter FWHM must be positive, got {0} MHz")]
    InvalidFilter(f64),
    #[error("invalid photon line: {0}")]
    InvalidLine(String),
    #[error("no noise scenario tabulated for a {0} nm pump")]
    UnknownScenario(f64),
    #[error("budget factor {label:?} = {value} is outside [0, 1]")]
    FactorOutOfRange { label: String, value: f64 },
    #[error("budget has no entries")]
    EmptyBudget,
    #[error("stage conversion input {name} must lie in (0, 1], got {value}")]
    RatioInput { name: &'static str, value: f64 },
}

/// One line of a structured report: a labelled value with an optional
/// one-sigma uncertainty.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ReportRecord {
    pub label: String,
    pub value: f64,
    pub uncertainty: Option<f64>,
}

impl ReportRecord {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            value,
            uncertainty: None,
        }
    }

    pub fn with_uncertainty(label: impl Into<String>, value: f64, sigma: f64) -> Self {
        Self {
            label: label.into(),
            value,
            uncertainty: Some(sigma),
        }
    }
}

impl fmt::Display for ReportRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.uncertainty {
            Some(sigma) => write!(f, "{}\t{:.6e}\t{:.6e}", self.label, self.value, sigma),
            None => write!(f, "{}\t{:.6e}\t-", self.label, self.value),
        }
    }
}

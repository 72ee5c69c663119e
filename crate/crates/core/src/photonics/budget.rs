use serde::{Deserialize, Serialize};

use super::{PhotonicsError, ReportRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub label: String,
    pub factor: f64,
}

/// Ordered chain of efficiency factors between the emitter and a detector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub entries: Vec<BudgetEntry>,
}

impl LinkBudget {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, label: impl Into<String>, factor: f64) -> Self {
        self.entries.push(BudgetEntry {
            label: label.into(),
            factor,
        });
        self
    }

    pub fn without(&self, label: &str) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|e| e.label != label)
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    /// `(label, factor, cumulative product)` per entry.
    pub rows: Vec<(String, f64, f64)>,
    pub product: f64,
}

impl BudgetReport {
    pub fn records(&self) -> Vec<ReportRecord> {
        let mut out: Vec<ReportRecord> = self
            .rows
            .iter()
            .map(|(label, factor, _)| ReportRecord::new(label.clone(), *factor))
            .collect();
        out.push(ReportRecord::new("product", self.product));
        out
    }
}

pub fn budget_product(budget: &LinkBudget) -> Result<BudgetReport, PhotonicsError> {
    if budget.entries.is_empty() {
        return Err(PhotonicsError::EmptyBudget);
    }
    let mut cumulative = 1.0;
    let mut rows = Vec::with_capacity(budget.entries.len());
    for entry in &budget.entries {
        if !(0.0..=1.0).contains(&entry.factor) {
            return Err(PhotonicsError::FactorOutOfRange {
                label: entry.label.clone(),
                value: entry.factor,
            });
        }
        cumulative *= entry.factor;
        rows.push((entry.label.clone(), entry.factor, cumulative));
    }
    Ok(BudgetReport {
        rows,
        product: cumulative,
    })
}

/// Detector-corrected photon-number ratio between two points of the chain,
/// `polarization_factor * (p_b / det_b) / (p_a / det_a)`.
pub fn stage_conversion_ratio(
    p_a: f64,
    det_a: f64,
    p_b: f64,
    det_b: f64,
    polarization_factor: f64,
) -> Result<f64, PhotonicsError> {
    for (name, value) in [("p_a", p_a), ("det_a", det_a), ("p_b", p_b), ("det_b", det_b)] {
        if !(value > 0.0 && value <= 1.0) {
            return Err(PhotonicsError::RatioInput { name, value });
        }
    }
    if !(polarization_factor > 0.0 && polarization_factor.is_finite()) {
        return Err(PhotonicsError::RatioInput {
            name: "polarization_factor",
            value: polarization_factor,
        });
    }
    Ok(polarization_factor * (p_b / det_b) / (p_a / det_a))
}

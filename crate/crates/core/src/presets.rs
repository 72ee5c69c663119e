//! Shipped configurations for the reference run conditions, and the
//! link-budget file format.

use serde::{Deserialize, Serialize};

use crate::photonics::{budget_product, stage_conversion_ratio, BudgetReport, LinkBudget, PhotonicsError};
use crate::sim::{ExperimentConfig, SimError};

const PRESETS: &[(&str, &str)] = &[
    ("paper-493", include_str!("../../../presets/paper-493.toml")),
    ("paper-780", include_str!("../../../presets/paper-780.toml")),
    ("paper-1534", include_str!("../../../presets/paper-1534.toml")),
    ("noise-free", include_str!("../../../presets/noise-free.toml")),
    ("paper-budget", include_str!("../../../presets/paper-budget.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Raw text of a shipped preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn experiment(name: &str) -> Result<ExperimentConfig, SimError> {
    let text = preset_text(name).ok_or_else(|| SimError::Invalid {
        field: "preset".into(),
        reason: format!("no shipped preset named `{name}`"),
    })?;
    ExperimentConfig::from_toml_str(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetFactor {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetChain {
    pub name: String,
    /// Measured per-shot value the chain is compared against, if any.
    pub measured: Option<f64>,
    pub factors: Vec<BudgetFactor>,
}

impl BudgetChain {
    pub fn budget(&self) -> LinkBudget {
        self.factors
            .iter()
            .fold(LinkBudget::new(), |b, f| b.push(f.label.clone(), f.value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRatio {
    pub name: String,
    pub from_per_shot: f64,
    pub from_detector: f64,
    pub to_per_shot: f64,
    pub to_detector: f64,
    #[serde(default = "one")]
    pub polarization_factor: f64,
    /// Published value, for display only.
    pub quoted: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl StageRatio {
    pub fn ratio(&self) -> Result<f64, PhotonicsError> {
        stage_conversion_ratio(
            self.from_per_shot,
            self.from_detector,
            self.to_per_shot,
            self.to_detector,
            self.polarization_factor,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetFile {
    #[serde(default, rename = "chain")]
    pub chains: Vec<BudgetChain>,
    #[serde(default, rename = "stage")]
    pub stages: Vec<StageRatio>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub name: String,
    pub report: BudgetReport,
    pub measured: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub name: String,
    pub ratio: f64,
    pub quoted: Option<f64>,
}

impl BudgetFile {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn shipped() -> Self {
        Self::from_toml_str(preset_text("paper-budget").expect("shipped"))
            .expect("shipped budget parses")
    }

    pub fn chain(&self, name: &str) -> Option<&BudgetChain> {
        self.chains.iter().find(|c| c.name == name)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRatio> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn evaluate(&self) -> Result<(Vec<ChainResult>, Vec<StageResult>), PhotonicsError> {
        let chains = self
            .chains
            .iter()
            .map(|c| {
                Ok(ChainResult {
                    name: c.name.clone(),
                    report: budget_product(&c.budget())?,
                    measured: c.measured,
                })
            })
            .collect::<Result<Vec<_>, PhotonicsError>>()?;
        let stages = self
            .stages
            .iter()
            .map(|s| {
                Ok(StageResult {
                    name: s.name.clone(),
                    ratio: s.ratio()?,
                    quoted: s.quoted,
                })
            })
            .collect::<Result<Vec<_>, PhotonicsError>>()?;
        Ok((chains, stages))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_experiment_preset_validates() {
        for name in names().filter(|n| *n != "paper-budget") {
            let c = experiment(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(experiment("paper-999").is_err());
    }

    #[test]
    fn shipped_budget_closes_on_measured_values() {
        let (chains, _) = BudgetFile::shipped().evaluate().unwrap();
        for c in &chains {
            let measured = c.measured.unwrap();
            let rel = (c.report.product - measured).abs() / measured;
            // the 780 nm chain is itemized only; it lands within 2%
            assert!(rel < 0.02, "{}: {} vs {measured}", c.name, c.report.product);
        }
    }

    #[test]
    fn dropping_butt_coupling_doubles_780() {
        let b = BudgetFile::shipped();
        let chain = b.chain("780 nm, APD").unwrap().budget();
        let full = budget_product(&chain).unwrap().product;
        let cut = budget_product(&chain.without("fiber butt coupling")).unwrap().product;
        assert!((cut / full - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stage_ratios() {
        let (_, stages) = BudgetFile::shipped().evaluate().unwrap();
        let first = stages.iter().find(|s| s.name == "493 nm to 780 nm").unwrap();
        let end = stages.iter().find(|s| s.name == "493 nm to 1534 nm").unwrap();
        // 2 (1.23e-4 / 0.54) / (1.04e-3 / 0.43)
        assert!((first.ratio - 2.0 * 1.23e-4 / 0.54 / (1.04e-3 / 0.43)).abs() < 1e-15);
        assert!((end.ratio - 0.0066).abs() < 2e-4);
    }

    #[test]
    fn unknown_budget_keys_rejected() {
        assert!(BudgetFile::from_toml_str("[[chain]]\nname = \"x\"\nfactors = []\nextra = 1\n").is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::PhotonicsError;

/// Relative anti-Stokes noise at the converted wavelength for a given
/// second-stage pump, normalised to the 1589 nm pump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScenario {
    pub pump_wavelength: f64,
    pub target_wavelength: f64,
    pub noise_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseScenarioTable {
    pub scenarios: Vec<NoiseScenario>,
    /// Matching tolerance on the pump wavelength, nm.
    pub tolerance_nm: f64,
}

impl Default for NoiseScenarioTable {
    fn default() -> Self {
        Self {
            scenarios: vec![
                // C-band baseline
                NoiseScenario {
                    pump_wavelength: 1589.0,
                    target_wavelength: 1534.0,
                    noise_scale: 1.0,
                },
                // S-band
                NoiseScenario {
                    pump_wavelength: 1640.0,
                    target_wavelength: 1515.0,
                    noise_scale: 0.1,
                },
                // O-band; quoted only as "well over" a factor 1000
                NoiseScenario {
                    pump_wavelength: 1930.0,
                    target_wavelength: 1310.0,
                    noise_scale: 1e-3,
                },
            ],
            tolerance_nm: 1.0,
        }
    }
}

impl NoiseScenarioTable {
    pub fn lookup(&self, pump_wavelength_nm: f64) -> Result<&NoiseScenario, PhotonicsError> {
        self.scenarios
            .iter()
            .find(|s| (s.pump_wavelength - pump_wavelength_nm).abs() <= self.tolerance_nm)
            .ok_or(PhotonicsError::UnknownScenario(pump_wavelength_nm))
    }
}

pub fn noise_scale_for_scenario(
    table: &NoiseScenarioTable,
    pump_wavelength_nm: f64,
) -> Result<f64, PhotonicsError> {
    let scenario = table.lookup(pump_wavelength_nm)?;
    if !(scenario.noise_scale > 0.0) {
        return Err(PhotonicsError::UnknownScenario(pump_wavelength_nm));
    }
    Ok(scenario.noise_scale)
}

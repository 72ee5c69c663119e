use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{PhotonicsError, ReportRecord};

/// Pump-power dependence of a difference-frequency conversion stage:
/// `eta_peak * sin^2((pi/2) * sqrt(p / p_max))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversionCurve {
    pub eta_peak: f64,
    /// Pump power at peak efficiency, mW.
    pub p_max: f64,
}

impl ConversionCurve {
    pub fn new(eta_peak: f64, p_max: f64) -> Result<Self, PhotonicsError> {
        let curve = Self { eta_peak, p_max };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        if !(0.0..=1.0).contains(&self.eta_peak) {
            return Err(PhotonicsError::InvalidCurve(format!(
                "eta_peak {} outside [0, 1]",
                self.eta_peak
            )));
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return Err(PhotonicsError::InvalidCurve(format!(
                "p_max {} must be positive",
                self.p_max
            )));
        }
        Ok(())
    }

    fn phase(&self, p: f64) -> f64 {
        FRAC_PI_2 * (p / self.p_max).sqrt()
    }

    /// Efficiency and its partial derivatives with respect to
    /// `(eta_peak, p_max)`.
    fn eval_with_gradient(&self, p: f64) -> (f64, [f64; 2]) {
        let theta = self.phase(p);
        let s = theta.sin();
        let value = self.eta_peak * s * s;
        let d_eta = s * s;
        // d(theta)/d(p_max) = -theta / (2 p_max)
        let d_pmax = self.eta_peak * (2.0 * theta).sin() * (-theta / (2.0 * self.p_max));
        (value, [d_eta, d_pmax])
    }
}

pub fn conversion_efficiency(p: f64, curve: &ConversionCurve) -> Result<f64, PhotonicsError> {
    if p < 0.0 || p.is_nan() {
        return Err(PhotonicsError::NegativePower(p));
    }
    curve.validate()?;
    let s = curve.phase(p).sin();
    Ok(curve.eta_peak * s * s)
}

/// A measured efficiency at one pump power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSample {
    pub power_mw: f64,
    pub efficiency: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the largest relative parameter step.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFit {
    pub curve: ConversionCurve,
    /// Covariance of `(eta_peak, p_max)`.
    pub covariance: [[f64; 2]; 2],
    pub residuals: Vec<f64>,
    pub chi_squared: f64,
    pub iterations: usize,
}

impl CurveFit {
    pub fn eta_sigma(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn p_max_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn residual_norm(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    pub fn report(&self) -> Vec<ReportRecord> {
        let dof = self.residuals.len().saturating_sub(2).max(1) as f64;
        vec![
            ReportRecord::with_uncertainty("eta_peak", self.curve.eta_peak, self.eta_sigma()),
            ReportRecord::with_uncertainty("p_max_mw", self.curve.p_max, self.p_max_sigma()),
            ReportRecord::new("cov_eta_pmax", self.covariance[0][1]),
            ReportRecord::new("chi_squared", self.chi_squared),
            ReportRecord::new("reduced_chi_squared", self.chi_squared / dof),
            ReportRecord::new("residual_norm", self.residual_norm()),
            ReportRecord::new("iterations", self.iterations as f64),
        ]
    }
}

fn validate_samples(samples: &[FitSample]) -> Result<(), PhotonicsError> {
    if samples.len() < 3 {
        return Err(PhotonicsError::TooFewSamples(samples.len()));
    }
    for s in samples {
        if !(s.power_mw >= 0.0 && s.power_mw.is_finite()) {
            return Err(PhotonicsError::NegativePower(s.power_mw));
        }
        if !(s.efficiency >= 0.0 && s.efficiency.is_finite()) {
            return Err(PhotonicsError::DegenerateSamples(format!(
                "efficiency {} at {} mW must be non-negative",
                s.efficiency, s.power_mw
            )));
        }
        if !(s.uncertainty > 0.0 && s.uncertainty.is_finite()) {
            return Err(PhotonicsError::DegenerateSamples(format!(
                "uncertainty {} at {} mW must be positive",
                s.uncertainty, s.power_mw
            )));
        }
    }
    let mut powers: Vec<f64> = samples.iter().map(|s| s.power_mw).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    if powers.len() < 3 {
        return Err(PhotonicsError::TooFewSamples(powers.len()));
    }
    if samples.iter().all(|s| s.efficiency == 0.0) {
        return Err(PhotonicsError::DegenerateSamples(
            "all efficiencies are zero".into(),
        ));
    }
    Ok(())
}

struct Normal2 {
    jtj: [[f64; 2]; 2],
    jtr: [f64; 2],
    chi2: f64,
}

fn normal_equations(curve: &ConversionCurve, samples: &[FitSample]) -> Normal2 {
    let mut jtj = [[0.0; 2]; 2];
    let mut jtr = [0.0; 2];
    let mut chi2 = 0.0;
    for s in samples {
        let w = 1.0 / (s.uncertainty * s.uncertainty);
        let (model, grad) = curve.eval_with_gradient(s.power_mw);
        let r = s.efficiency - model;
        chi2 += w * r * r;
        for i in 0..2 {
            jtr[i] += w * grad[i] * r;
            for j in 0..2 {
                jtj[i][j] += w * grad[i] * grad[j];
            }
        }
    }
    Normal2 { jtj, jtr, chi2 }
}

fn chi_squared(curve: &ConversionCurve, samples: &[FitSample]) -> f64 {
    samples
        .iter()
        .map(|s| {
            let r = (s.efficiency - conversion_efficiency(s.power_mw, curve).unwrap_or(f64::NAN))
                / s.uncertainty;
            r * r
        })
        .sum()
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() <= f64::MIN_POSITIVE || !det.is_finite() {
        return None;
    }
    Some([
        (b[0] * a[1][1] - b[1] * a[0][1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ])
}

fn invert2(a: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() <= f64::MIN_POSITIVE || !det.is_finite() {
        return None;
    }
    Some([
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ])
}

/// Weighted Levenberg-Marquardt fit of [`ConversionCurve`] to measured
/// efficiencies. Starts from the largest observed efficiency and the power
/// at which it was observed.
pub fn fit_conversion_curve(
    samples: &[FitSample],
    options: FitOptions,
) -> Result<CurveFit, PhotonicsError> {
    validate_samples(samples)?;

    let best = samples
        .iter()
        .max_by(|a, b| a.efficiency.total_cmp(&b.efficiency))
        .expect("validated non-empty");
    let mut curve = ConversionCurve {
        eta_peak: best.efficiency.min(1.0),
        p_max: best.power_mw,
    };
    if curve.p_max <= 0.0 {
        return Err(PhotonicsError::DegenerateSamples(
            "peak efficiency observed at zero pump power".into(),
        ));
    }

    let mut lambda = 1e-3;
    let mut last_step = f64::INFINITY;
    let mut normal = normal_equations(&curve, samples);
    for iteration in 1..=options.max_iterations {
        let mut converged_step = None;
        // Inner damping loop: raise lambda until the step reduces chi^2.
        for _ in 0..32 {
            let mut damped = normal.jtj;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] += lambda * normal.jtj[i][i].max(f64::MIN_POSITIVE);
            }
            let Some(delta) = solve2(damped, normal.jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = ConversionCurve {
                eta_peak: curve.eta_peak + delta[0],
                p_max: curve.p_max + delta[1],
            };
            if !(trial.p_max > 0.0 && trial.eta_peak.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let trial_chi2 = chi_squared(&trial, samples);
            if trial_chi2 <= normal.chi2 {
                let rel = (delta[0] / curve.eta_peak.abs().max(f64::MIN_POSITIVE))
                    .abs()
                    .max((delta[1] / curve.p_max).abs());
                curve = trial;
                lambda = (lambda / 10.0).max(1e-12);
                converged_step = Some(rel);
                break;
            }
            lambda *= 10.0;
        }
        // A step that cannot lower chi^2 at any damping means we sit at the
        // minimum to machine precision.
        let rel = converged_step.unwrap_or(0.0);
        last_step = rel;
        normal = normal_equations(&curve, samples);
        if rel < options.tolerance {
            return finish(curve, samples, normal, iteration);
        }
    }
    Err(PhotonicsError::NoConvergence {
        iterations: options.max_iterations,
        last_step,
    })
}

fn finish(
    curve: ConversionCurve,
    samples: &[FitSample],
    normal: Normal2,
    iterations: usize,
) -> Result<CurveFit, PhotonicsError> {
    let covariance = invert2(normal.jtj).ok_or_else(|| {
        PhotonicsError::DegenerateSamples("singular normal matrix at solution".into())
    })?;
    let residuals = samples
        .iter()
        .map(|s| s.efficiency - curve.eval_with_gradient(s.power_mw).0)
        .collect();
    Ok(CurveFit {
        curve,
        covariance,
        residuals,
        chi_squared: normal.chi2,
        iterations,
    })
}

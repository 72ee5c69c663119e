use serde::{Deserialize, Serialize};

use super::PhotonicsError;

/// Spectral line of the emitted photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianLine {
    /// Full width at half maximum, MHz.
    pub fwhm: f64,
    /// Offset of the line centre from the filter centre, MHz.
    pub center_detuning: f64,
}

impl LorentzianLine {
    pub fn new(fwhm: f64, center_detuning: f64) -> Self {
        Self {
            fwhm,
            center_detuning,
        }
    }
}

/// Lorentzian passband filter. Broadband elements in the cascade are folded
/// into `peak_transmission`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub fwhm: f64,
    pub peak_transmission: f64,
}

impl FilterSpec {
    pub fn new(fwhm: f64, peak_transmission: f64) -> Self {
        Self {
            fwhm,
            peak_transmission,
        }
    }
}

/// Fraction of a unit-area Lorentzian photon line passed by a Lorentzian
/// filter.
///
/// The overlap integral of two Lorentzians is a Lorentzian in the detuning
/// whose half-width is the sum of both half-widths, so with half-widths `a`
/// (photon) and `b` (filter):
///
/// `T = T_peak * b (a + b) / ((a + b)^2 + detuning^2)`
pub fn filter_transmission(
    photon: &LorentzianLine,
    filter: &FilterSpec,
) -> Result<f64, PhotonicsError> {
    if !(filter.fwhm > 0.0 && filter.fwhm.is_finite()) {
        return Err(PhotonicsError::InvalidFilter(filter.fwhm));
    }
    if !(0.0..=1.0).contains(&filter.peak_transmission) {
        return Err(PhotonicsError::InvalidLine(format!(
            "filter peak transmission {} outside [0, 1]",
            filter.peak_transmission
        )));
    }
    if !(photon.fwhm >= 0.0 && photon.fwhm.is_finite()) {
        return Err(PhotonicsError::InvalidLine(format!(
            "photon FWHM {} must be non-negative",
            photon.fwhm
        )));
    }
    if !photon.center_detuning.is_finite() {
        return Err(PhotonicsError::InvalidLine("detuning must be finite".into()));
    }
    let a = photon.fwhm / 2.0;
    let b = filter.fwhm / 2.0;
    let width = a + b;
    let d = photon.center_detuning;
    Ok(filter.peak_transmission * b * width / (width * width + d * d))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct numerical overlap on a wide grid (independent of the closed
    /// form). Uses the substitution nu = tan(u) to map the real line onto a
    /// finite interval.
    fn quadrature(photon: &LorentzianLine, filter: &FilterSpec) -> f64 {
        let a = photon.fwhm / 2.0;
        let b = filter.fwhm / 2.0;
        let n = 400_000;
        let scale = a.max(b).max(1.0);
        let mut sum = 0.0;
        let lo = -std::f64::consts::FRAC_PI_2;
        let h = std::f64::consts::PI / n as f64;
        for i in 0..n {
            let u = lo + (i as f64 + 0.5) * h;
            let nu = scale * u.tan();
            let jac = scale / (u.cos() * u.cos());
            let line = a / std::f64::consts::PI / ((nu - photon.center_detuning).powi(2) + a * a);
            let pass = filter.peak_transmission * b * b / (nu * nu + b * b);
            sum += line * pass * jac * h;
        }
        sum
    }

    #[test]
    fn laser_limit_passes_peak() {
        let t = filter_transmission(&LorentzianLine::new(0.0, 0.0), &FilterSpec::new(46.1, 0.26))
            .unwrap();
        assert!((t - 0.26).abs() < 1e-15);
    }

    #[test]
    fn ion_line_through_etalon() {
        let t = filter_transmission(&LorentzianLine::new(14.8, 0.0), &FilterSpec::new(46.1, 0.26))
            .unwrap();
        assert!((t - 0.197).abs() < 0.005, "{t}");
        assert!((t - 0.26 * 46.1 / (46.1 + 14.8)).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let filter = FilterSpec::new(46.1, 0.26);
        for (fwhm, det) in [(14.8, 0.0), (14.8, 20.0), (30.0, -45.0), (5.0, 100.0)] {
            let line = LorentzianLine::new(fwhm, det);
            let exact = filter_transmission(&line, &filter).unwrap();
            let numeric = quadrature(&line, &filter);
            assert!((exact - numeric).abs() < 1e-6, "{fwhm} {det}: {exact} vs {numeric}");
        }
    }

    #[test]
    fn far_detuned_line_is_blocked() {
        let t = filter_transmission(&LorentzianLine::new(14.8, 1e6), &FilterSpec::new(46.1, 0.26))
            .unwrap();
        assert!(t < 1e-4);
    }

    #[test]
    fn non_positive_filter_width_rejected() {
        let line = LorentzianLine::new(14.8, 0.0);
        assert!(matches!(
            filter_transmission(&line, &FilterSpec::new(0.0, 0.26)),
            Err(PhotonicsError::InvalidFilter(_))
        ));
        assert!(filter_transmission(&LorentzianLine::new(-1.0, 0.0), &FilterSpec::new(46.1, 0.26))
            .is_err());
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_linewidth_and_detuning(
            w1 in 0.0f64..200.0, w2 in 0.0f64..200.0,
            d1 in 0.0f64..500.0, d2 in 0.0f64..500.0,
            ffwhm in 0.1f64..500.0, peak in 0.0f64..=1.0,
        ) {
            let filter = FilterSpec::new(ffwhm, peak);
            let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
            let t_lo = filter_transmission(&LorentzianLine::new(lo, 0.0), &filter).unwrap();
            let t_hi = filter_transmission(&LorentzianLine::new(hi, 0.0), &filter).unwrap();
            proptest::prop_assert!(t_hi <= t_lo + 1e-15);

            let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let line_w = w1;
            let a = filter_transmission(&LorentzianLine::new(line_w, dlo), &filter).unwrap();
            let b = filter_transmission(&LorentzianLine::new(line_w, -dhi), &filter).unwrap();
            proptest::prop_assert!(b <= a + 1e-15);
        }
    }
}

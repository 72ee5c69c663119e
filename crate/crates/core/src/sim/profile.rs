//! Inverse-CDF sampling of the rise-decay emission profile.
//!
//! With rise `r`, decay `d` and `k = r d / (r + d)` the unnormalised density
//! `exp(-t/d) - exp(-t/k)` integrates to
//! `G(t) = d (1 - exp(-t/d)) - k (1 - exp(-t/k))`, and the profile is
//! truncated to `[0, W]` where `W` is the rest of the excitation pulse after
//! the onset.

use super::config::EmissionProfile;

#[derive(Debug, Clone, Copy)]
pub struct ProfileSampler {
    decay: f64,
    k: f64,
    onset: f64,
    window: f64,
    norm: f64,
}

/// `integral_0^t exp(-s/a) ds`, with the `a -> 0` limit handled.
fn exp_integral(a: f64, t: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        -a * (-t / a).exp_m1()
    }
}

/// `integral_0^t s exp(-s/a) ds`.
fn exp_moment(a: f64, t: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        let x = t / a;
        a * a * (1.0 - (-x).exp() * (1.0 + x))
    }
}

fn exp_density(a: f64, t: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        (-t / a).exp()
    }
}

impl ProfileSampler {
    /// `excitation_duration_ns` bounds the truncation window.
    pub fn new(profile: &EmissionProfile, excitation_duration_ns: f64) -> Self {
        let rise = profile.rise_constant_ns;
        let decay = profile.decay_constant_ns;
        let k = if rise > 0.0 && decay > 0.0 {
            rise * decay / (rise + decay)
        } else {
            0.0
        };
        let window = (excitation_duration_ns - profile.onset_ns).max(0.0);
        let mut sampler = Self {
            decay,
            k,
            onset: profile.onset_ns,
            window,
            norm: 0.0,
        };
        sampler.norm = sampler.g(window);
        sampler
    }

    fn degenerate(&self) -> bool {
        !(self.norm > 0.0) || self.decay <= 0.0
    }

    fn g(&self, t: f64) -> f64 {
        exp_integral(self.decay, t) - exp_integral(self.k, t)
    }

    fn density(&self, t: f64) -> f64 {
        exp_density(self.decay, t) - exp_density(self.k, t)
    }

    /// Normalised CDF of the emission time measured from the onset.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return if self.degenerate() && t == 0.0 { 1.0 } else { 0.0 };
        }
        if self.degenerate() || t >= self.window {
            return 1.0;
        }
        (self.g(t) / self.norm).clamp(0.0, 1.0)
    }

    /// CDF of the absolute offset from the excitation start.
    pub fn cdf_from_excitation(&self, offset_ns: f64) -> f64 {
        if offset_ns < self.onset {
            0.0
        } else {
            self.cdf(offset_ns - self.onset)
        }
    }

    /// Analytic mean offset from the excitation start.
    pub fn mean(&self) -> f64 {
        if self.degenerate() {
            return self.onset;
        }
        let m = exp_moment(self.decay, self.window) - exp_moment(self.k, self.window);
        self.onset + m / self.norm
    }

    /// Maps a uniform draw in `[0, 1)` to an emission offset (ns) from the
    /// start of the excitation pulse.
    pub fn sample(&self, u: f64) -> f64 {
        if self.degenerate() || u <= 0.0 {
            return self.onset;
        }
        let target = u.min(1.0) * self.norm;
        let (mut lo, mut hi) = (0.0, self.window);
        // Start Newton from the mean-ish scale of the profile.
        let mut t = (self.decay + self.k).min(self.window * 0.5);
        for _ in 0..100 {
            let f = self.g(t) - target;
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let slope = self.density(t);
            let mut next = if slope > 0.0 { t - f / slope } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-9 * (1.0 + t) {
                t = next;
                break;
            }
            t = next;
        }
        self.onset + t
    }
}

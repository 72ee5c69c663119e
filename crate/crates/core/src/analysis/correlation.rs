use serde::Serialize;

use super::counts::{CycleTable, PairCounts};
use super::AnalysisError;

/// Raw coincidence counts `G(n)` for `n` in `[-n_max, n_max]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct G2Series {
    pub n_max: usize,
    /// `counts[n + n_max]` holds `G(n)`.
    pub counts: Vec<u64>,
}

impl G2Series {
    pub fn zeros(n_max: usize) -> Self {
        Self {
            n_max,
            counts: vec![0; 2 * n_max + 1],
        }
    }

    pub fn at(&self, n: i64) -> u64 {
        self.counts[(n + self.n_max as i64) as usize]
    }

    pub fn zero(&self) -> u64 {
        self.counts[self.n_max]
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        let off = self.n_max as i64;
        self.counts.iter().enumerate().map(move |(i, &c)| (i as i64 - off, c))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Mirror image, `G'(n) = G(-n)`.
    pub fn reversed(&self) -> Self {
        let mut counts = self.counts.clone();
        counts.reverse();
        Self {
            n_max: self.n_max,
            counts,
        }
    }
}

/// Counts pairs of signal cycles `(i on a, j on b)` with `j - i = n`.
///
/// Both lists are sorted, so a trailing pointer into `b` keeps the scan
/// linear in the number of pairs within reach.
pub fn g2_from_cycles(a: &[u64], b: &[u64], n_max: usize) -> G2Series {
    let mut series = G2Series::zeros(n_max);
    let reach = n_max as u64;
    let mut lo = 0usize;
    for &i in a {
        let floor = i.saturating_sub(reach);
        while lo < b.len() && b[lo] < floor {
            lo += 1;
        }
        for &j in &b[lo..] {
            if j > i + reach {
                break;
            }
            let n = j as i64 - i as i64;
            series.counts[(n + n_max as i64) as usize] += 1;
        }
    }
    series
}

pub fn g2(table: &CycleTable, a: u8, b: u8, n_max: usize) -> Result<G2Series, AnalysisError> {
    if n_max < 1 {
        return Err(AnalysisError::NMaxTooSmall { n_max, required: 1 });
    }
    let ca = table.channel(a).ok_or(AnalysisError::UnknownChannel(a))?;
    let cb = table.channel(b).ok_or(AnalysisError::UnknownChannel(b))?;
    Ok(g2_from_cycles(ca, cb, n_max))
}

/// `out[0] = G(0)`, `out[n] = (G(n) + G(-n)) / 2`.
pub fn symmetrize(series: &G2Series) -> Vec<f64> {
    (0..=series.n_max as i64)
        .map(|n| {
            if n == 0 {
                series.zero() as f64
            } else {
                0.5 * (series.at(n) + series.at(-n)) as f64
            }
        })
        .collect()
}

fn cycles_of(c: &PairCounts) -> Result<f64, AnalysisError> {
    if c.cycles > 0.0 {
        Ok(c.cycles)
    } else {
        Err(AnalysisError::NoCycles)
    }
}

/// Expected same-cycle coincidences from noise alone:
/// `(C1S C2N + C1N C2S - C1N C2N) / R`.
pub fn theory_g2_zero(c: &PairCounts) -> Result<f64, AnalysisError> {
    let r = cycles_of(c)?;
    Ok((c.c1_signal * c.c2_noise + c.c1_noise * c.c2_signal - c.c1_noise * c.c2_noise) / r)
}

/// Expected coincidences between different cycles: `C1S C2S / R`.
pub fn theory_g2_nonzero(c: &PairCounts) -> Result<f64, AnalysisError> {
    let r = cycles_of(c)?;
    Ok(c.c1_signal * c.c2_signal / r)
}

/// `(C_signal - B) / B` with `B` the noise tally rescaled to the signal
/// gate width. `None` when no background was seen.
pub fn snr(signal: f64, noise: f64, signal_width_ns: f64, noise_width_ns: f64) -> Result<Option<f64>, AnalysisError> {
    if !(noise_width_ns > 0.0) {
        return Err(AnalysisError::Config(format!(
            "noise window width must be positive, got {noise_width_ns}"
        )));
    }
    let b = noise * signal_width_ns / noise_width_ns;
    Ok((b > 0.0).then(|| (signal - b) / b))
}

/// Separation of `G(0)` below the mean `n != 0` level in units of its
/// Poisson standard error.
pub fn significance(series: &G2Series) -> Result<f64, AnalysisError> {
    const MIN_N: usize = 5;
    if series.n_max < MIN_N {
        return Err(AnalysisError::NMaxTooSmall {
            n_max: series.n_max,
            required: MIN_N,
        });
    }
    if series.total() == 0 {
        return Err(AnalysisError::AllZero);
    }
    let off_peak: u64 = series.iter().filter(|(n, _)| *n != 0).map(|(_, c)| c).sum();
    let terms = 2.0 * series.n_max as f64;
    let mean = off_peak as f64 / terms;
    let var = series.zero() as f64 + off_peak as f64 / (terms * terms);
    Ok((mean - series.zero() as f64) / var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub channel_a: u8,
    pub channel_b: u8,
    pub raw: G2Series,
    pub symmetrized: Vec<f64>,
    pub theory_zero: f64,
    pub theory_nonzero: f64,
    pub z: Option<f64>,
}

impl CorrelationResult {
    pub fn compute(table: &CycleTable, pair: &PairCounts, a: u8, b: u8, n_max: usize) -> Result<Self, AnalysisError> {
        let raw = g2(table, a, b, n_max)?;
        let z = match significance(&raw) {
            Ok(z) => Some(z),
            Err(AnalysisError::AllZero) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            channel_a: a,
            channel_b: b,
            symmetrized: symmetrize(&raw),
            theory_zero: theory_g2_zero(pair)?,
            theory_nonzero: theory_g2_nonzero(pair)?,
            raw,
            z,
        })
    }

    /// Mean of the symmetrized series over `n != 0`.
    pub fn off_peak_mean(&self) -> f64 {
        let tail = &self.symmetrized[1..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(c1s: f64, c1n: f64, c2s: f64, c2n: f64, r: f64) -> PairCounts {
        PairCounts {
            c1_signal: c1s,
            c1_noise: c1n,
            c2_signal: c2s,
            c2_noise: c2n,
            cycles: r,
        }
    }

    fn brute(a: &[u64], b: &[u64], n_max: usize) -> Vec<u64> {
        let mut out = vec![0; 2 * n_max + 1];
        for &i in a {
            for &j in b {
                let n = j as i64 - i as i64;
                if n.unsigned_abs() as usize <= n_max {
                    out[(n + n_max as i64) as usize] += 1;
                }
            }
        }
        out
    }

    fn cycles() -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::btree_set(0u64..2000, 0..200).prop_map(|s| s.into_iter().collect())
    }

    #[test]
    fn single_pair() {
        let g = g2_from_cycles(&[5], &[7], 10);
        assert_eq!(g.at(2), 1);
        assert_eq!(g.total(), 1);
    }

    #[test]
    fn empty_table_gives_zeros() {
        let table = CycleTable::new(100, [1, 2]);
        let g = g2(&table, 1, 2, 5).unwrap();
        assert!(g.counts.iter().all(|&c| c == 0));
        assert!(matches!(g2(&table, 1, 9, 5), Err(AnalysisError::UnknownChannel(9))));
        assert!(matches!(g2(&table, 1, 2, 0), Err(AnalysisError::NMaxTooSmall { .. })));
    }

    #[test]
    fn symmetrize_averages_mirror_bins() {
        let mut g = G2Series::zeros(2);
        g.counts = vec![0, 4, 9, 6, 0];
        assert_eq!(symmetrize(&g), vec![9.0, 5.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_theory() {
        let c = pair(1000.0, 10.0, 500.0, 50.0, 1e6);
        assert!((theory_g2_zero(&c).unwrap() - 0.0545).abs() < 1e-15);
        assert!((theory_g2_nonzero(&c).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(theory_g2_zero(&pair(10.0, 0.0, 20.0, 0.0, 5.0)).unwrap(), 0.0);
        assert_eq!(theory_g2_nonzero(&pair(10.0, 3.0, 0.0, 1.0, 5.0)).unwrap(), 0.0);
        assert!(matches!(theory_g2_zero(&pair(1.0, 1.0, 1.0, 1.0, 0.0)), Err(AnalysisError::NoCycles)));
    }

    #[test]
    fn snr_edges() {
        assert_eq!(snr(30.0, 30.0, 36.0, 36.0).unwrap(), Some(0.0));
        assert_eq!(snr(30.0, 60.0, 30.0, 60.0).unwrap(), Some(0.0));
        assert_eq!(snr(30.0, 0.0, 36.0, 36.0).unwrap(), None);
        assert!(snr(1.0, 1.0, 36.0, 0.0).is_err());
    }

    #[test]
    fn significance_flat_series_is_zero() {
        let mut g = G2Series::zeros(5);
        g.counts.iter_mut().for_each(|c| *c = 40);
        assert_eq!(significance(&g).unwrap(), 0.0);
        assert!(matches!(significance(&G2Series::zeros(5)), Err(AnalysisError::AllZero)));
        assert!(significance(&G2Series::zeros(4)).is_err());
    }

    #[test]
    fn significance_hand_value() {
        // off-peak 100 everywhere, G(0) = 64, N = 5
        let mut g = G2Series::zeros(5);
        g.counts.iter_mut().for_each(|c| *c = 100);
        g.counts[5] = 64;
        let expect = 36.0 / (64.0f64 + 1000.0 / 100.0).sqrt();
        assert!((significance(&g).unwrap() - expect).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in cycles(), b in cycles(), n_max in 1usize..40) {
            prop_assert_eq!(g2_from_cycles(&a, &b, n_max).counts, brute(&a, &b, n_max));
        }

        #[test]
        fn swapping_channels_reflects(a in cycles(), b in cycles(), n_max in 1usize..40) {
            let ab = g2_from_cycles(&a, &b, n_max);
            let ba = g2_from_cycles(&b, &a, n_max);
            prop_assert_eq!(&ab, &ba.reversed());
            prop_assert_eq!(symmetrize(&ab), symmetrize(&ba));
        }

        #[test]
        fn conservation(a in cycles(), b in cycles(), n_max in 1usize..40) {
            let pairs = a.iter()
                .flat_map(|i| b.iter().map(move |j| i.abs_diff(*j)))
                .filter(|d| *d <= n_max as u64)
                .count() as u64;
            prop_assert_eq!(g2_from_cycles(&a, &b, n_max).total(), pairs);
        }

        #[test]
        fn theory_is_homogeneous(
            c1s in 0.0..1e4f64, c1n in 0.0..1e4f64, c2s in 0.0..1e4f64, c2n in 0.0..1e4f64,
            r in 1.0..1e7f64, k in 0.01..100.0f64,
        ) {
            let c = pair(c1s, c1n, c2s, c2n, r);
            let z = theory_g2_zero(&c).unwrap();
            let nz = theory_g2_nonzero(&c).unwrap();
            let ks = c.scaled(k);
            let scale = k * (c1s * c2n + c1n * c2s + c1n * c2n) / r;
            prop_assert!((theory_g2_zero(&ks).unwrap() - k * z).abs() <= 1e-9 * (1.0 + scale));
            prop_assert!((theory_g2_nonzero(&ks).unwrap() - k * nz).abs() <= 1e-9 * (1.0 + k * nz));
        }
    }
}

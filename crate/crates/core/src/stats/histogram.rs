//! Start-multistop coincidence histograms and g² normalization.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width_ps: f64,
    /// Bin centers, symmetric around zero delay.
    pub delays_ps: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_singles: (u64, u64),
    pub duration_s: f64,
}

impl CoincidenceHistogram {
    pub fn total_coincidences(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another run with identical binning (e.g. another seed).
    pub fn accumulate(&mut self, other: &CoincidenceHistogram) -> Result<()> {
        if other.delays_ps != self.delays_ps || other.bin_width_ps != self.bin_width_ps {
            return Err(Error::config("cannot add histograms with different binning"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_singles.0 += other.total_singles.0;
        self.total_singles.1 += other.total_singles.1;
        self.duration_s += other.duration_s;
        Ok(())
    }

    /// Number of bins on each side of zero delay.
    pub fn half_bins(&self) -> usize {
        self.counts.len() / 2
    }
}

fn ensure_sorted(tags: &[f64]) -> std::borrow::Cow<'_, [f64]> {
    if tags.windows(2).all(|w| w[0] <= w[1]) {
        std::borrow::Cow::Borrowed(tags)
    } else {
        let mut v = tags.to_vec();
        v.sort_by(f64::total_cmp);
        std::borrow::Cow::Owned(v)
    }
}

/// Histogram of `t2 − t1` over all tag pairs with `|t2 − t1|` inside the window.
///
/// Bin `k` (from `−K` to `K`, `K = round(window/bin)`) collects delays in
/// `[(k − ½)·bin, (k + ½)·bin)`. Tags are in ns.
pub fn coincidence_histogram(
    tags1: &[f64],
    tags2: &[f64],
    bin_ps: f64,
    window_ns: f64,
    duration_s: f64,
) -> Result<CoincidenceHistogram> {
    if !(bin_ps > 0.0 && window_ns > 0.0) {
        return Err(Error::config("bin width and window must be positive"));
    }
    if !(duration_s > 0.0) {
        return Err(Error::config("acquisition duration must be positive"));
    }
    let half = (window_ns * 1e3 / bin_ps).round().max(1.0) as i64;
    let nbins = (2 * half + 1) as usize;
    let bin_ns = bin_ps * 1e-3;
    // Scan one bin beyond the window edge; the bin index alone decides.
    let edge_ns = (half as f64 + 1.5) * bin_ns;

    let starts = ensure_sorted(tags1);
    let stops = ensure_sorted(tags2);
    let mut counts = vec![0u64; nbins];
    let mut lo = 0usize;
    for &t1 in starts.iter() {
        while lo < stops.len() && stops[lo] < t1 - edge_ns {
            lo += 1;
        }
        for &t2 in &stops[lo..] {
            let dt = t2 - t1;
            if dt > edge_ns {
                break;
            }
            let k = (dt / bin_ns + 0.5).floor() as i64 + half;
            if (0..nbins as i64).contains(&k) {
                counts[k as usize] += 1;
            }
        }
    }

    let delays_ps = (0..nbins).map(|i| (i as i64 - half) as f64 * bin_ps).collect();
    Ok(CoincidenceHistogram {
        bin_width_ps: bin_ps,
        delays_ps,
        counts,
        total_singles: (tags1.len() as u64, tags2.len() as u64),
        duration_s,
    })
}

/// Normalized second-order correlation curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Curve {
    pub delays_ps: Vec<f64>,
    pub g2: Vec<f64>,
    /// Accidental coincidences per bin for uncorrelated light
    /// (`N1·N2·bin/T`). `None` for noise-free synthetic curves.
    pub counts_per_unit: Option<f64>,
    /// Width over which each value is averaged; 0 for point samples.
    pub bin_ps: f64,
}

impl G2Curve {
    pub fn noise_free(delays_ps: Vec<f64>, g2: Vec<f64>) -> Self {
        G2Curve { delays_ps, g2, counts_per_unit: None, bin_ps: 0.0 }
    }

    /// Mean of the `2·half_width + 1` bins around zero delay.
    pub fn value_at_zero(&self, half_width: usize) -> f64 {
        let mid = self.delays_ps.iter().enumerate().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map_or(0, |x| x.0);
        let lo = mid.saturating_sub(half_width);
        let hi = (mid + half_width).min(self.g2.len() - 1);
        self.g2[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
    }
}

/// Divides counts by the uncorrelated expectation `N1·N2·bin/T`.
pub fn normalize_g2(hist: &CoincidenceHistogram) -> Result<G2Curve> {
    let (n1, n2) = hist.total_singles;
    let norm = n1 as f64 * n2 as f64 * hist.bin_width_ps * 1e-12 / hist.duration_s;
    if !(norm > 0.0) {
        return Err(Error::numerical("cannot normalize a histogram without singles on both channels"));
    }
    Ok(G2Curve {
        delays_ps: hist.delays_ps.clone(),
        g2: hist.counts.iter().map(|&c| c as f64 / norm).collect(),
        counts_per_unit: Some(norm),
        bin_ps: hist.bin_width_ps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlatnessTest {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl FlatnessTest {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value > significance
    }
}

/// Pearson χ² test of the counts against a constant level.
pub fn chi2_flatness(hist: &CoincidenceHistogram) -> Result<FlatnessTest> {
    let n = hist.counts.len();
    let mean = hist.total_coincidences() as f64 / n as f64;
    if n < 2 || mean <= 0.0 {
        return Err(Error::numerical("flatness test needs at least two bins with coincidences"));
    }
    let chi2: f64 = hist.counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
    let dof = n - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::numerical(e.to_string()))?;
    Ok(FlatnessTest { chi2, dof, p_value: dist.sf(chi2) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_lands_in_its_bin() {
        let h = coincidence_histogram(&[100.0], &[100.25], 50.0, 1.0, 1.0).unwrap();
        assert_eq!(h.total_coincidences(), 1);
        let k = h.delays_ps.iter().position(|&d| d == 250.0).unwrap();
        assert_eq!(h.counts[k], 1);
        assert_eq!(h.delays_ps.len(), 41);
        assert_eq!(h.delays_ps[20], 0.0);
    }

    #[test]
    fn empty_inputs_give_zero_histogram() {
        let h = coincidence_histogram(&[], &[], 10.0, 2.0, 1.0).unwrap();
        assert!(h.counts.iter().all(|&c| c == 0));
        assert!(normalize_g2(&h).is_err());
    }

    #[test]
    fn unsorted_input_is_handled() {
        let a = coincidence_histogram(&[5.0, 1.0], &[1.1, 5.2], 100.0, 1.0, 1.0).unwrap();
        let b = coincidence_histogram(&[1.0, 5.0], &[1.1, 5.2], 100.0, 1.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn accumulate_rejects_mismatched_binning() {
        let mut a = coincidence_histogram(&[1.0], &[1.0], 10.0, 1.0, 1.0).unwrap();
        let b = coincidence_histogram(&[1.0], &[1.0], 20.0, 1.0, 1.0).unwrap();
        assert!(a.accumulate(&b).is_err());
        let c = a.clone();
        a.accumulate(&c).unwrap();
        assert_eq!(a.total_coincidences(), 2);
        assert_eq!(a.duration_s, 2.0);
    }
}

//! Beamsplitter and avalanche-photodiode models.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stream::seeded_rng;
use crate::error::{Error, Result};

/// Gaussian timing jitter σ for a response FWHM.
pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Gaussian jitter standard deviation of one detector, in ps.
    pub jitter_sigma_ps: f64,
    pub efficiency: f64,
    pub dead_time_ns: f64,
}

impl Default for DetectorModel {
    /// Two of these in coincidence give a 350 ps FWHM system response.
    fn default() -> Self {
        DetectorModel {
            jitter_sigma_ps: sigma_from_fwhm(350.0) / std::f64::consts::SQRT_2,
            efficiency: 1.0,
            dead_time_ns: 0.0,
        }
    }
}

impl DetectorModel {
    pub fn ideal() -> Self {
        DetectorModel { jitter_sigma_ps: 0.0, efficiency: 1.0, dead_time_ns: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma_ps >= 0.0 && self.dead_time_ns >= 0.0) {
            return Err(Error::config("detector jitter and dead time must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config("detector efficiency must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Width of the coincidence response of two detectors.
pub fn combined_irf_sigma_ps(a: &DetectorModel, b: &DetectorModel) -> f64 {
    a.jitter_sigma_ps.hypot(b.jitter_sigma_ps)
}

fn finish(mut tags: Vec<f64>, det: &DetectorModel) -> Vec<f64> {
    tags.sort_by(f64::total_cmp);
    if det.dead_time_ns > 0.0 {
        let mut last = f64::NEG_INFINITY;
        tags.retain(|&t| {
            if t - last >= det.dead_time_ns {
                last = t;
                true
            } else {
                false
            }
        });
    }
    tags
}

/// Detection by a single detector: efficiency thinning, jitter, dead time.
pub fn detect_stream(stream: &[f64], det: &DetectorModel, seed: u64) -> Result<Vec<f64>> {
    det.validate()?;
    let mut rng = seeded_rng(seed);
    let jitter = Normal::new(0.0, det.jitter_sigma_ps * 1e-3).map_err(|e| Error::config(e.to_string()))?;
    let tags = stream
        .iter()
        .filter_map(|&t| {
            if rng.random::<f64>() >= det.efficiency {
                return None;
            }
            Some(if det.jitter_sigma_ps > 0.0 { t + jitter.sample(&mut rng) } else { t })
        })
        .collect();
    Ok(finish(tags, det))
}

/// 50/50 beamsplitter followed by two detectors.
pub fn split_and_detect(
    stream: &[f64],
    det1: &DetectorModel,
    det2: &DetectorModel,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    det1.validate()?;
    det2.validate()?;
    let mut rng = seeded_rng(seed);
    let j1 = Normal::new(0.0, det1.jitter_sigma_ps * 1e-3).map_err(|e| Error::config(e.to_string()))?;
    let j2 = Normal::new(0.0, det2.jitter_sigma_ps * 1e-3).map_err(|e| Error::config(e.to_string()))?;
    let mut a = Vec::with_capacity(stream.len() / 2 + 1);
    let mut b = Vec::with_capacity(stream.len() / 2 + 1);
    for &t in stream {
        let first = rng.random::<bool>();
        let (det, jitter, out) = if first { (det1, &j1, &mut a) } else { (det2, &j2, &mut b) };
        if rng.random::<f64>() >= det.efficiency {
            continue;
        }
        out.push(if det.jitter_sigma_ps > 0.0 { t + jitter.sample(&mut rng) } else { t });
    }
    Ok((finish(a, det1), finish(b, det2)))
}

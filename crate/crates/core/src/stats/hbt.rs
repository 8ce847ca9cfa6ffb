//! End-to-end Hanbury Brown–Twiss run: emitter plus background photons,
//! beamsplitter, two detectors, start-multistop histogram and dip fit.

use serde::{Deserialize, Serialize};

use super::detect::{combined_irf_sigma_ps, split_and_detect, DetectorModel};
use super::g2fit::{fit_g2, G2FitResult};
use super::histogram::{coincidence_histogram, normalize_g2, CoincidenceHistogram, G2Curve};
use super::stream::{mix_background, simulate_emitter_stream, EmitterStreamParams};
use crate::error::{Error, Result};

/// Physical inputs of one HBT acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbtScenario {
    /// Photon rate arriving at the beamsplitter.
    pub total_rate_cps: f64,
    /// Share of `total_rate_cps` emitted by the selected line.
    pub signal_fraction: f64,
    /// g²(0) of the selected line itself.
    pub g2_intrinsic: f64,
    pub lifetime_ns: f64,
    pub tau_c_ps: f64,
    pub duration_s: f64,
    pub bin_ps: f64,
    pub window_ns: f64,
    pub detector1: DetectorModel,
    pub detector2: DetectorModel,
}

impl HbtScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_rate_cps > 0.0) {
            return Err(Error::config("total count rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.signal_fraction) {
            return Err(Error::config("signal fraction must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.g2_intrinsic) {
            return Err(Error::config("intrinsic g² must lie in [0, 1)"));
        }
        if !(self.tau_c_ps > 0.0 && self.tau_c_ps < self.lifetime_ns * 1e3) {
            return Err(Error::config("correlation time must be positive and shorter than the lifetime"));
        }
        self.detector1.validate()?;
        self.detector2.validate()
    }

    /// Rates of the antibunched and the Poissonian parts. The intrinsic g²
    /// is realised as an uncorrelated admixture inside the line itself.
    pub fn component_rates(&self) -> (f64, f64) {
        let antibunched = self.total_rate_cps * self.signal_fraction * (1.0 - self.g2_intrinsic).sqrt();
        (antibunched, self.total_rate_cps - antibunched)
    }

    /// Expected g²(0) without detector jitter.
    pub fn expected_g2_zero(&self) -> f64 {
        1.0 - self.signal_fraction.powi(2) * (1.0 - self.g2_intrinsic)
    }

    pub fn irf_sigma_ps(&self) -> f64 {
        combined_irf_sigma_ps(&self.detector1, &self.detector2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbtRun {
    pub tags: (Vec<f64>, Vec<f64>),
    pub histogram: CoincidenceHistogram,
    pub curve: G2Curve,
}

impl HbtRun {
    pub fn fit(&self, irf_sigma_ps: f64) -> Result<G2FitResult> {
        fit_g2(&self.curve, irf_sigma_ps)
    }
}

/// Independent sub-seed for stage `k` of a run.
fn sub_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates one acquisition. Identical scenario and seed give identical tags.
pub fn run_hbt(s: &HbtScenario, seed: u64) -> Result<HbtRun> {
    s.validate()?;
    let (signal_rate, bg_rate) = s.component_rates();
    let signal = if signal_rate > 0.0 {
        let tau_c_ns = s.tau_c_ps * 1e-3;
        let params = EmitterStreamParams {
            rate_cps: signal_rate,
            lifetime_ns: s.lifetime_ns,
            pump_rate_per_ns: EmitterStreamParams::pump_for_correlation_time(tau_c_ns, s.lifetime_ns)?,
        };
        simulate_emitter_stream(&params, s.duration_s, sub_seed(seed, 1))?
    } else {
        Vec::new()
    };
    let stream = mix_background(&signal, bg_rate, s.duration_s, sub_seed(seed, 2))?;
    let tags = split_and_detect(&stream, &s.detector1, &s.detector2, sub_seed(seed, 3))?;
    let histogram = coincidence_histogram(&tags.0, &tags.1, s.bin_ps, s.window_ns, s.duration_s)?;
    let curve = normalize_g2(&histogram)?;
    Ok(HbtRun { tags, histogram, curve })
}

//! Photon time-tag simulation, Hanbury Brown–Twiss histogramming and g² fitting.

pub mod detect;
pub mod g2fit;
pub mod hbt;
pub mod histogram;
pub mod stream;

pub use detect::{combined_irf_sigma_ps, detect_stream, sigma_from_fwhm, split_and_detect, DetectorModel};
pub use g2fit::{
    background_corrected_g2, dip_reduction_factor, fit_g2, g2_model, predict_measured_g2, signal_fraction,
    G2FitResult, G2Uncertainties,
};
pub use hbt::{run_hbt, HbtRun, HbtScenario};
pub use histogram::{
    chi2_flatness, coincidence_histogram, normalize_g2, CoincidenceHistogram, FlatnessTest, G2Curve,
};
pub use stream::{
    mix_background, poisson_stream, seeded_rng, simulate_charge_toggled_streams, simulate_emitter_stream, ChargeToggleModel,
    ChargeToggledStreams, EmitterStreamParams, TransitionParams,
};

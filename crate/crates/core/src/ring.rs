//! Add-drop ring resonator: transfer functions, resonance metrics and the
//! inverse design solver.
//!
//! The round-trip phase uses a first-order dispersion model anchored at a
//! reference wavelength:
//!
//! ```text
//! n_eff(λ) = n_eff(λ_ref) − (λ − λ_ref)·(n_g − n_eff(λ_ref))/λ_ref
//! φ(λ)     = 2π·n_eff(λ)·L/λ = 2π·L·(n_g/λ − (n_g − n_eff(λ_ref))/λ_ref)
//! ```
//!
//! so resonances are equally spaced in inverse wavelength with spacing
//! `1/(n_g·L)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for [`RingParams::is_critically_coupled`].
pub const CRITICAL_COUPLING_TOL: f64 = 1e-3;

/// Default round-trip amplitude transmission. Free calibration knob: only the
/// loaded linewidth is measured, never the intrinsic loss.
pub const DEFAULT_ROUND_TRIP_LOSS: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarization {
    TE,
    TM,
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::TE => f.write_str("TE"),
            Polarization::TM => f.write_str("TM"),
        }
    }
}

impl std::str::FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TE" => Ok(Polarization::TE),
            "TM" => Ok(Polarization::TM),
            other => Err(Error::config(format!("unknown polarization '{other}'"))),
        }
    }
}

/// Amplitude coupling coefficients of one polarization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// Self-coupling at the bus (input) coupler.
    pub t1: f64,
    /// Self-coupling at the drop coupler.
    pub t2: f64,
    /// Round-trip amplitude transmission.
    pub a: f64,
}

impl Coupling {
    pub fn new(t1: f64, t2: f64, a: f64) -> Result<Self> {
        let c = Coupling { t1, t2, a };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t1", self.t1), ("t2", self.t2), ("a", self.a)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("coupling {name} = {v} must lie in (0, 1]")));
            }
        }
        Ok(())
    }

    /// Product `t1·t2·a`, the round-trip field attenuation of the loaded ring.
    pub fn loaded_round_trip(&self) -> f64 {
        self.t1 * self.t2 * self.a
    }

    fn through_at_phase(&self, phi: f64) -> f64 {
        let Coupling { t1, t2, a } = *self;
        let x = self.loaded_round_trip();
        let c = phi.cos();
        let num = t2 * t2 * a * a - 2.0 * x * c + t1 * t1;
        let den = 1.0 - 2.0 * x * c + x * x;
        (num / den).clamp(0.0, 1.0)
    }

    fn drop_at_phase(&self, phi: f64) -> f64 {
        let Coupling { t1, t2, a } = *self;
        let x = self.loaded_round_trip();
        let den = 1.0 - 2.0 * x * phi.cos() + x * x;
        ((1.0 - t1 * t1) * (1.0 - t2 * t2) * a / den).clamp(0.0, 1.0)
    }
}

/// Exponential gap-to-coupling law used to derive the TM couplers from the TE
/// ones. The cross-coupling amplitude `κ = √(1 − t²)` decays as
/// `exp(−gap/decay_length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCouplingModel {
    /// Fabricated ring-bus gap.
    pub design_gap_nm: f64,
    /// Gap at which the TM mode would be critically coupled.
    pub tm_critical_gap_nm: f64,
    /// Field decay length of the TM evanescent tail.
    pub tm_decay_length_nm: f64,
}

impl Default for GapCouplingModel {
    fn default() -> Self {
        GapCouplingModel { design_gap_nm: 180.0, tm_critical_gap_nm: 340.0, tm_decay_length_nm: 500.0 }
    }
}

impl GapCouplingModel {
    /// TM couplers at the design gap, assuming the TM mode reaches the TE
    /// (critical) coupling strength at `tm_critical_gap_nm`.
    pub fn tm_from_te(&self, te: &Coupling) -> Result<Coupling> {
        if self.tm_decay_length_nm <= 0.0 {
            return Err(Error::config("TM decay length must be positive"));
        }
        let gain = ((self.tm_critical_gap_nm - self.design_gap_nm) / self.tm_decay_length_nm).exp();
        let scale = |t: f64| {
            let kappa = ((1.0 - t * t).max(0.0).sqrt() * gain).min(1.0);
            (1.0 - kappa * kappa).max(1e-6).sqrt()
        };
        Coupling::new(scale(te.t1), scale(te.t2), te.a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub radius_um: f64,
    pub group_index: f64,
    pub n_eff_ref: f64,
    pub lambda_ref_nm: f64,
    pub couplings: BTreeMap<Polarization, Coupling>,
}

impl RingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_um > 0.0 && self.radius_um.is_finite()) {
            return Err(Error::config(format!("ring radius {} µm must be positive", self.radius_um)));
        }
        if !(self.group_index >= 1.0 && self.group_index.is_finite()) {
            return Err(Error::config(format!("group index {} must be ≥ 1", self.group_index)));
        }
        if !(self.n_eff_ref > 0.0) {
            return Err(Error::config("effective index must be positive"));
        }
        if !(self.lambda_ref_nm > 0.0) {
            return Err(Error::config("reference wavelength must be positive"));
        }
        if self.couplings.is_empty() {
            return Err(Error::config("ring has no coupling entries"));
        }
        for (pol, c) in &self.couplings {
            c.validate().map_err(|e| Error::config(format!("{pol}: {e}")))?;
        }
        Ok(())
    }

    /// Round-trip length `L = 2π·R` in nanometers.
    pub fn round_trip_nm(&self) -> f64 {
        2.0 * PI * self.radius_um * 1e3
    }

    pub fn coupling(&self, pol: Polarization) -> Result<&Coupling> {
        self.couplings
            .get(&pol)
            .ok_or_else(|| Error::config(format!("ring has no {pol} coupling entry")))
    }

    /// Continuous resonance order `φ(λ)/2π`.
    fn order(&self, wavelength_nm: f64) -> f64 {
        let l = self.round_trip_nm();
        l * (self.group_index / wavelength_nm - (self.group_index - self.n_eff_ref) / self.lambda_ref_nm)
    }

    fn wavelength_of_order(&self, m: f64) -> f64 {
        let l = self.round_trip_nm();
        self.group_index / (m / l + (self.group_index - self.n_eff_ref) / self.lambda_ref_nm)
    }

    /// Round-trip phase at `wavelength_nm`.
    pub fn phase(&self, wavelength_nm: f64) -> f64 {
        2.0 * PI * self.order(wavelength_nm)
    }

    fn check_wavelength(wavelength_nm: f64) -> Result<()> {
        if wavelength_nm > 0.0 && wavelength_nm.is_finite() {
            Ok(())
        } else {
            Err(Error::config(format!("wavelength {wavelength_nm} nm must be positive")))
        }
    }

    /// Through-port power transmission.
    pub fn through_transmission(&self, wavelength_nm: f64, pol: Polarization) -> Result<f64> {
        Self::check_wavelength(wavelength_nm)?;
        let c = self.coupling(pol)?;
        Ok(c.through_at_phase(self.phase(wavelength_nm)))
    }

    /// Drop-port power transmission.
    pub fn drop_transmission(&self, wavelength_nm: f64, pol: Polarization) -> Result<f64> {
        Self::check_wavelength(wavelength_nm)?;
        let c = self.coupling(pol)?;
        Ok(c.drop_at_phase(self.phase(wavelength_nm)))
    }

    /// `FSR = λ²/(n_g·L)`.
    pub fn free_spectral_range(&self, wavelength_nm: f64) -> f64 {
        wavelength_nm * wavelength_nm / (self.group_index * self.round_trip_nm())
    }

    /// Loaded resonance linewidth
    /// `FWHM = (1 − x)·λ²/(π·n_g·L·√x)` with `x = t1·t2·a`.
    pub fn resonance_fwhm(&self, wavelength_nm: f64, pol: Polarization) -> Result<f64> {
        Self::check_wavelength(wavelength_nm)?;
        let x = self.coupling(pol)?.loaded_round_trip();
        if x >= 1.0 {
            return Err(Error::numerical(format!(
                "{pol} resonance is degenerate: t1·t2·a = 1 (lossless, uncoupled ring has infinite Q)"
            )));
        }
        Ok((1.0 - x) * self.free_spectral_range(wavelength_nm) / (PI * x.sqrt()))
    }

    /// Finesse `FSR/FWHM` at `wavelength_nm`.
    pub fn finesse(&self, wavelength_nm: f64, pol: Polarization) -> Result<f64> {
        Ok(self.free_spectral_range(wavelength_nm) / self.resonance_fwhm(wavelength_nm, pol)?)
    }

    /// Resonance wavelength closest to `wavelength_nm`.
    ///
    /// Resonance positions depend only on the indices, so the answer is the
    /// same for both polarizations.
    pub fn nearest_resonance(&self, wavelength_nm: f64) -> f64 {
        let m = self.order(wavelength_nm);
        let lo = self.wavelength_of_order(m.floor());
        let hi = self.wavelength_of_order(m.ceil());
        if (lo - wavelength_nm).abs() <= (hi - wavelength_nm).abs() {
            lo
        } else {
            hi
        }
    }

    /// Drop-port minimum (half-integer order) closest to `wavelength_nm`.
    pub fn nearest_antiresonance(&self, wavelength_nm: f64) -> f64 {
        let m = self.order(wavelength_nm) - 0.5;
        let lo = self.wavelength_of_order(m.floor() + 0.5);
        let hi = self.wavelength_of_order(m.ceil() + 0.5);
        if (lo - wavelength_nm).abs() <= (hi - wavelength_nm).abs() {
            lo
        } else {
            hi
        }
    }

    /// First resonance at or above `wavelength_nm` (within `tol_nm`).
    pub fn next_resonance_at_or_above(&self, wavelength_nm: f64, tol_nm: f64) -> f64 {
        // Order decreases with wavelength.
        let m = self.order(wavelength_nm);
        let candidate = self.wavelength_of_order(m.floor());
        if candidate >= wavelength_nm - tol_nm {
            candidate
        } else {
            self.wavelength_of_order(m.floor() - 1.0)
        }
    }

    /// `|t1 − t2·a| < tol`.
    pub fn is_critically_coupled(&self, pol: Polarization, tol: f64) -> Result<bool> {
        let c = self.coupling(pol)?;
        Ok((c.t1 - c.t2 * c.a).abs() < tol)
    }

    /// Returns a copy whose `n_eff_ref` is nudged so that `lambda_ref_nm` sits
    /// exactly on a resonance.
    pub fn anchored(mut self) -> Self {
        let l = self.round_trip_nm();
        let m = (self.n_eff_ref * l / self.lambda_ref_nm).round().max(1.0);
        self.n_eff_ref = m * self.lambda_ref_nm / l;
        self
    }
}

/// Inputs to [`solve_couplings`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignTargets {
    pub fsr_nm: f64,
    pub fwhm_nm: f64,
    pub wavelength_nm: f64,
    pub radius_um: f64,
    pub loss_a: f64,
    /// Critical coupling (`t1 = t2·a`); otherwise symmetric couplers (`t1 = t2`).
    pub critical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingDesign {
    pub group_index: f64,
    pub coupling: Coupling,
}

impl RingDesign {
    /// Builds a TE-only ring with a resonance anchored at the design wavelength.
    pub fn to_ring(&self, targets: &DesignTargets, n_eff_nominal: f64) -> RingParams {
        let mut couplings = BTreeMap::new();
        couplings.insert(Polarization::TE, self.coupling);
        RingParams {
            radius_um: targets.radius_um,
            group_index: self.group_index,
            n_eff_ref: n_eff_nominal,
            lambda_ref_nm: targets.wavelength_nm,
            couplings,
        }
        .anchored()
    }
}

/// Inverts the FSR and FWHM formulas for the group index and the couplers.
///
/// With `q = π·FWHM/FSR` the loaded round-trip `x = t1·t2·a` solves
/// `(1 − x)/√x = q`, i.e. `√x = (√(q² + 4) − q)/2`.
pub fn solve_couplings(t: &DesignTargets) -> Result<RingDesign> {
    if !(t.fsr_nm > 0.0 && t.fwhm_nm > 0.0) {
        return Err(Error::config("target FSR and FWHM must be positive"));
    }
    if t.fwhm_nm >= t.fsr_nm {
        return Err(Error::config(format!(
            "target FWHM {} nm must be smaller than FSR {} nm (finesse > 1)",
            t.fwhm_nm, t.fsr_nm
        )));
    }
    if !(t.loss_a > 0.0 && t.loss_a <= 1.0) {
        return Err(Error::config(format!("round-trip loss a = {} must lie in (0, 1]", t.loss_a)));
    }
    if !(t.wavelength_nm > 0.0 && t.radius_um > 0.0) {
        return Err(Error::config("wavelength and radius must be positive"));
    }

    let length_nm = 2.0 * PI * t.radius_um * 1e3;
    let group_index = t.wavelength_nm * t.wavelength_nm / (t.fsr_nm * length_nm);
    if group_index < 1.0 {
        return Err(Error::config(format!(
            "target FSR requires group index {group_index:.4} < 1 for this radius"
        )));
    }

    let q = PI * t.fwhm_nm / t.fsr_nm;
    let sqrt_x = ((q * q + 4.0).sqrt() - q) / 2.0;
    let x = sqrt_x * sqrt_x;

    let coupling = if t.critical {
        // t2 = √x/a ≤ 1
        if x > t.loss_a * t.loss_a {
            return Err(Error::config(format!(
                "required t1·t2·a = {x:.6} exceeds a² = {:.6}; linewidth too narrow for the given loss",
                t.loss_a * t.loss_a
            )));
        }
        let t2 = sqrt_x / t.loss_a;
        Coupling::new(t2 * t.loss_a, t2, t.loss_a)?
    } else {
        if x > t.loss_a {
            return Err(Error::config(format!(
                "required t1·t2·a = {x:.6} exceeds a = {:.6}; linewidth too narrow for the given loss",
                t.loss_a
            )));
        }
        let tt = (x / t.loss_a).sqrt();
        Coupling::new(tt, tt, t.loss_a)?
    };

    Ok(RingDesign { group_index, coupling })
}

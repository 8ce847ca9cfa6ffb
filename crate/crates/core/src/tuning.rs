//! Heater-driven tuning of the ring (blue shift) and of the emitter (red
//! shift through residual heating).
//!
//! Both laws are quadratic in the heater voltage (Joule power into a linear
//! thermal model). The emitter wavelength follows a Varshni-shaped
//! temperature dependence `Δλ(T) = A·T²/(T + B)` referenced to the cryostat
//! base temperature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{Polarization, RingParams};

/// Detuning tolerance of [`align_voltage`].
pub const ALIGN_TOL_NM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningCalibration {
    #[serde(rename = "heater_ohms")]
    pub heater_resistance: f64,
    /// Ring shift is `−ring_shift_coeff·V²`.
    #[serde(rename = "ring_nm_per_v2")]
    pub ring_shift_coeff: f64,
    #[serde(rename = "base_k")]
    pub base_temperature: f64,
    /// Emitter temperature rise per V².
    #[serde(rename = "temp_k_per_v2")]
    pub temp_coeff: f64,
    /// Varshni amplitude in nm/K.
    pub varshni_a: f64,
    /// Varshni temperature scale in K.
    pub varshni_b: f64,
    #[serde(rename = "max_v")]
    pub max_voltage: f64,
}

impl Default for TuningCalibration {
    /// 2.8 kΩ heater; 15 V sweeps the ring by 1.152 nm; 12.5 V heats the
    /// emitter from 5 K to 35 K.
    fn default() -> Self {
        TuningCalibration {
            heater_resistance: 2800.0,
            ring_shift_coeff: 1.152 / 225.0,
            base_temperature: 5.0,
            temp_coeff: 30.0 / 156.25,
            varshni_a: 0.05,
            varshni_b: 200.0,
            max_voltage: 15.0,
        }
    }
}

impl TuningCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.heater_resistance > 0.0) {
            return Err(Error::config("heater resistance must be positive"));
        }
        if !(self.ring_shift_coeff >= 0.0) || !(self.temp_coeff >= 0.0) {
            return Err(Error::config("tuning coefficients must be non-negative"));
        }
        if !(self.base_temperature > 0.0) {
            return Err(Error::config("base temperature must be positive"));
        }
        if !(self.varshni_a > 0.0 && self.varshni_b > 0.0) {
            return Err(Error::config("Varshni coefficients must be positive"));
        }
        if !(self.max_voltage > 0.0) {
            return Err(Error::config("max voltage must be positive"));
        }
        Ok(())
    }

    fn check_voltage(&self, voltage: f64) -> Result<()> {
        if voltage >= 0.0 && voltage <= self.max_voltage {
            Ok(())
        } else {
            Err(Error::config(format!(
                "voltage {voltage} V outside the operating range [0, {}] V",
                self.max_voltage
            )))
        }
    }

    /// Joule heating `V²/R` in watts.
    pub fn heater_power(&self, voltage: f64) -> f64 {
        voltage * voltage / self.heater_resistance
    }

    /// Ring resonance shift in nm (never positive).
    pub fn ring_shift(&self, voltage: f64) -> Result<f64> {
        self.check_voltage(voltage)?;
        Ok(-self.ring_shift_coeff * voltage * voltage)
    }

    pub fn emitter_temperature(&self, voltage: f64) -> f64 {
        self.base_temperature + self.temp_coeff * voltage * voltage
    }

    fn varshni(&self, temperature: f64) -> f64 {
        self.varshni_a * temperature * temperature / (temperature + self.varshni_b)
    }

    /// `dΔλ/dT` of the Varshni law.
    pub fn varshni_slope(&self, temperature: f64) -> f64 {
        let b = self.varshni_b;
        self.varshni_a * temperature * (temperature + 2.0 * b) / ((temperature + b) * (temperature + b))
    }

    /// Emitter red shift in nm relative to its wavelength at base temperature.
    pub fn emitter_shift(&self, voltage: f64) -> Result<f64> {
        self.check_voltage(voltage)?;
        Ok(self.varshni(self.emitter_temperature(voltage)) - self.varshni(self.base_temperature))
    }

    /// Position of an emitter line in the ring's untuned wavelength frame.
    ///
    /// Both shifts move this coordinate upwards with voltage.
    pub fn relative_position(&self, line_nm: f64, voltage: f64) -> Result<f64> {
        Ok(line_nm + self.emitter_shift(voltage)? - self.ring_shift(voltage)?)
    }
}

/// Lowest voltage that brings a ring resonance onto the emitter line.
///
/// The line position in the ring frame rises monotonically with voltage, so
/// the first resonance above the starting position is the one reached first;
/// bisection then solves for it.
pub fn align_voltage(
    ring: &RingParams,
    cal: &TuningCalibration,
    line_nm: f64,
    pol: Polarization,
) -> Result<f64> {
    ring.coupling(pol)?;
    let detuning = |v: f64| -> Result<f64> {
        let u = cal.relative_position(line_nm, v)?;
        Ok(u - ring.nearest_resonance(u))
    };

    let u0 = cal.relative_position(line_nm, 0.0)?;
    if detuning(0.0)?.abs() < ALIGN_TOL_NM {
        return Ok(0.0);
    }
    let target = ring.next_resonance_at_or_above(u0, 0.0);

    let (mut lo, mut hi) = (0.0, cal.max_voltage);
    let g_hi = cal.relative_position(line_nm, hi)? - target;
    if g_hi < 0.0 {
        return Err(Error::numerical(format!(
            "no alignment within [0, {hi}] V: detuning {:+.4} nm at 0 V, {:+.4} nm at {hi} V",
            detuning(0.0)?,
            detuning(hi)?
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = cal.relative_position(line_nm, mid)? - target;
        if g.abs() < 1e-9 {
            return Ok(mid);
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let v = 0.5 * (lo + hi);
    let residual = detuning(v)?;
    if residual.abs() >= ALIGN_TOL_NM {
        return Err(Error::numerical(format!("alignment bisection stalled with residual {residual} nm")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{Coupling, RingParams};
    use std::collections::BTreeMap;

    fn designed_test_ring() -> RingParams {
        let mut couplings = BTreeMap::new();
        couplings.insert(Polarization::TE, Coupling::new(0.809_66, 0.817_84, 0.99).unwrap());
        RingParams { radius_um: 70.0, group_index: 1.834_07, n_eff_ref: 1.75, lambda_ref_nm: 880.0, couplings }
            .anchored()
    }

    #[test]
    fn heater_power_values() {
        let cal = TuningCalibration::default();
        assert!((cal.heater_power(15.0) - 0.080_357).abs() < 1e-6);
        assert_eq!(cal.heater_power(0.0), 0.0);
        let small = TuningCalibration { heater_resistance: 900.0, ..cal };
        assert!((small.heater_power(3.0) - 0.010).abs() < 1e-12);
    }

    #[test]
    fn ring_shift_values() {
        let cal = TuningCalibration::default();
        assert!((cal.ring_shift(15.0).unwrap() + 1.152).abs() < 1e-12);
        assert_eq!(cal.ring_shift(0.0).unwrap(), 0.0);
        assert!((cal.ring_shift(7.5).unwrap() + 0.288).abs() < 1e-12);
        assert!(cal.ring_shift(15.5).is_err());
        assert!(cal.ring_shift(-0.1).is_err());
    }

    #[test]
    fn emitter_temperature_values() {
        let cal = TuningCalibration::default();
        assert!((cal.emitter_temperature(12.5) - 35.0).abs() < 1e-12);
        assert_eq!(cal.emitter_temperature(0.0), 5.0);
        assert!((cal.emitter_temperature(6.25) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn emitter_shift_shape() {
        let cal = TuningCalibration::default();
        assert_eq!(cal.emitter_shift(0.0).unwrap(), 0.0);
        let s = cal.emitter_shift(12.5).unwrap();
        assert!(s > 0.05 && s < 0.5, "shift {s}");
        assert!(cal.varshni_slope(35.0) / cal.varshni_slope(5.0) > 3.0);
        let mut prev = 0.0;
        for i in 1..=30 {
            let v = 0.5 * i as f64;
            let cur = cal.emitter_shift(v).unwrap();
            assert!(cur > prev);
            prev = cur;
        }
        assert!(cal.emitter_shift(16.0).is_err());
    }

    #[test]
    fn detuning_rate_is_sum_of_magnitudes() {
        let cal = TuningCalibration::default();
        let h = 1e-5;
        for v in [1.0, 5.0, 10.0, 14.0] {
            let d = |f: &dyn Fn(f64) -> f64| (f(v + h) - f(v - h)) / (2.0 * h);
            let ring_rate = d(&|x| cal.ring_shift(x).unwrap());
            let emit_rate = d(&|x| cal.emitter_shift(x).unwrap());
            let total = d(&|x| cal.relative_position(880.0, x).unwrap());
            assert!((total - (ring_rate.abs() + emit_rate.abs())).abs() < 1e-6);
        }
    }

    #[test]
    fn coverage_exceeds_one_fsr() {
        let cal = TuningCalibration::default();
        let ring = designed_test_ring();
        let ratio = cal.ring_shift(15.0).unwrap().abs() / ring.free_spectral_range(880.0);
        assert!((ratio - 1.20).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn align_on_resonance_is_zero() {
        let cal = TuningCalibration::default();
        let ring = designed_test_ring();
        assert_eq!(align_voltage(&ring, &cal, 880.0, Polarization::TE).unwrap(), 0.0);
    }

    #[test]
    fn align_half_fsr_and_counteracting() {
        let cal = TuningCalibration::default();
        let ring = designed_test_ring();
        let fsr = ring.free_spectral_range(880.0);
        let line = 880.0 + fsr / 2.0;
        let v = align_voltage(&ring, &cal, line, Polarization::TE).unwrap();
        assert!(v > 0.0 && v <= 15.0);
        let u = cal.relative_position(line, v).unwrap();
        assert!((u - ring.nearest_resonance(u)).abs() < ALIGN_TOL_NM);

        let no_heating = TuningCalibration { temp_coeff: 0.0, ..cal };
        let v_ring_only = align_voltage(&ring, &no_heating, line, Polarization::TE).unwrap();
        assert!(v < v_ring_only, "{v} vs {v_ring_only}");
    }

    #[test]
    fn align_unreachable_reports_both_ends() {
        let cal = TuningCalibration { max_voltage: 2.0, ..TuningCalibration::default() };
        let ring = designed_test_ring();
        let err = align_voltage(&ring, &cal, 880.0 + 0.48, Polarization::TE).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("at 0 V") && msg.contains("at 2 V"), "{msg}");
    }

    #[test]
    fn json_keys() {
        let v = serde_json::to_value(TuningCalibration::default()).unwrap();
        for key in ["heater_ohms", "ring_nm_per_v2", "base_k", "temp_k_per_v2", "varshni_a", "varshni_b", "max_v"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}

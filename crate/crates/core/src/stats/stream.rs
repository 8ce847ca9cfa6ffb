//! Photon arrival-time generators. All times are in nanoseconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Gamma, Geometric};

use crate::error::{Error, Result};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Continuously pumped two-level emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterStreamParams {
    /// Detected photon rate after collection losses.
    pub rate_cps: f64,
    pub lifetime_ns: f64,
    pub pump_rate_per_ns: f64,
}

impl EmitterStreamParams {
    /// Rate of complete excitation/emission cycles, per ns.
    pub fn cycle_rate_per_ns(&self) -> f64 {
        1.0 / (1.0 / self.pump_rate_per_ns + self.lifetime_ns)
    }

    /// Antibunching time `1/(W_p + 1/τ)` in ns.
    pub fn correlation_time_ns(&self) -> f64 {
        1.0 / (self.pump_rate_per_ns + 1.0 / self.lifetime_ns)
    }

    /// Pump rate that gives the correlation time `tau_c_ns` at this lifetime.
    pub fn pump_for_correlation_time(tau_c_ns: f64, lifetime_ns: f64) -> Result<f64> {
        let w = 1.0 / tau_c_ns - 1.0 / lifetime_ns;
        if w > 0.0 && w.is_finite() {
            Ok(w)
        } else {
            Err(Error::config(format!(
                "correlation time {tau_c_ns} ns is not shorter than the lifetime {lifetime_ns} ns"
            )))
        }
    }
}

fn check_duration(duration_s: f64) -> Result<f64> {
    if duration_s > 0.0 && duration_s.is_finite() {
        Ok(duration_s * 1e9)
    } else {
        Err(Error::config(format!("duration {duration_s} s must be positive")))
    }
}

/// Photon stream of an antibunched emitter.
///
/// Each cycle is an exponential excitation wait (rate `W_p`) followed by an
/// exponential emission wait (rate `1/τ`); every cycle ends in one photon,
/// kept with probability `rate / cycle_rate`. The number of cycles between
/// kept photons is geometric, so the gap is drawn directly as a sum of two
/// Gamma variates.
pub fn simulate_emitter_stream(p: &EmitterStreamParams, duration_s: f64, seed: u64) -> Result<Vec<f64>> {
    let duration_ns = check_duration(duration_s)?;
    if !(p.rate_cps > 0.0 && p.lifetime_ns > 0.0 && p.pump_rate_per_ns > 0.0) {
        return Err(Error::config("emitter rate, lifetime and pump rate must be positive"));
    }
    let keep = p.rate_cps * 1e-9 / p.cycle_rate_per_ns();
    if keep > 1.0 {
        return Err(Error::config(format!(
            "target rate {:.3e} cps exceeds the saturated emission rate {:.3e} cps",
            p.rate_cps,
            p.cycle_rate_per_ns() * 1e9
        )));
    }

    let mut rng = seeded_rng(seed);
    let skips = Geometric::new(keep).map_err(|e| Error::config(e.to_string()))?;
    let pump_scale = 1.0 / p.pump_rate_per_ns;
    let mut out = Vec::with_capacity((p.rate_cps * duration_s * 1.05) as usize + 16);
    let mut t = 0.0;
    loop {
        let cycles = (skips.sample(&mut rng) + 1) as f64;
        let wait = Gamma::new(cycles, pump_scale).map_err(|e| Error::numerical(e.to_string()))?;
        let decay = Gamma::new(cycles, p.lifetime_ns).map_err(|e| Error::numerical(e.to_string()))?;
        t += wait.sample(&mut rng) + decay.sample(&mut rng);
        if t >= duration_ns {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Homogeneous Poisson arrivals at `rate_cps` over `duration_s`.
pub fn poisson_stream(rate_cps: f64, duration_s: f64, seed: u64) -> Result<Vec<f64>> {
    let duration_ns = check_duration(duration_s)?;
    if !(rate_cps >= 0.0) {
        return Err(Error::config("background rate must be non-negative"));
    }
    if rate_cps == 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = seeded_rng(seed);
    let gaps = Exp::new(rate_cps * 1e-9).map_err(|e| Error::config(e.to_string()))?;
    let mut out = Vec::with_capacity((rate_cps * duration_s * 1.05) as usize + 16);
    let mut t = 0.0;
    loop {
        t += gaps.sample(&mut rng);
        if t >= duration_ns {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Merges two time-ordered streams.
pub fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Adds Poissonian background photons to `stream`.
pub fn mix_background(stream: &[f64], bg_rate_cps: f64, duration_s: f64, seed: u64) -> Result<Vec<f64>> {
    let bg = poisson_stream(bg_rate_cps, duration_s, seed)?;
    Ok(merge_sorted(stream, &bg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeState {
    Neutral,
    Charged,
}

/// One transition's dynamics inside a charge state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionParams {
    pub lifetime_ns: f64,
    pub pump_rate_per_ns: f64,
    /// Probability that an emitted photon is detected.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeToggledStreams {
    /// Exciton photons, emitted only while neutral.
    pub x: Vec<f64>,
    /// Trion photons, emitted only while charged.
    pub t: Vec<f64>,
    /// Start time and state of every charge epoch, in order.
    pub epochs: Vec<(f64, ChargeState)>,
}

impl ChargeToggledStreams {
    pub fn state_at(&self, time_ns: f64) -> ChargeState {
        let idx = self.epochs.partition_point(|(start, _)| *start <= time_ns);
        self.epochs[idx.saturating_sub(1)].1
    }
}

/// Blinking dot used for exciton–trion cross-correlations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeToggleModel {
    pub exciton: TransitionParams,
    pub trion: TransitionParams,
    /// Neutral → charged rate from the ground state, per ns.
    pub toggle_in_per_ns: f64,
    /// Charged → neutral rate from the ground state, per ns.
    pub toggle_out_per_ns: f64,
}

impl Default for ChargeToggleModel {
    fn default() -> Self {
        let line = TransitionParams { lifetime_ns: 1.0, pump_rate_per_ns: 7.0 / 3.0, efficiency: 0.1 };
        ChargeToggleModel { exciton: line, trion: line, toggle_in_per_ns: 0.2, toggle_out_per_ns: 0.2 }
    }
}

impl ChargeToggleModel {
    pub fn simulate(&self, duration_s: f64, seed: u64) -> Result<ChargeToggledStreams> {
        simulate_charge_toggled_streams(
            &self.exciton,
            &self.trion,
            self.toggle_in_per_ns,
            self.toggle_out_per_ns,
            duration_s,
            seed,
        )
    }
}

/// Emitter that blinks between a neutral state (exciton emission) and a
/// charged state (trion emission).
///
/// The charge state only changes while the dot is in its ground state; the
/// walk starts neutral and unexcited at t = 0.
pub fn simulate_charge_toggled_streams(
    x_params: &TransitionParams,
    t_params: &TransitionParams,
    toggle_in_rate: f64,
    toggle_out_rate: f64,
    duration_s: f64,
    seed: u64,
) -> Result<ChargeToggledStreams> {
    let duration_ns = check_duration(duration_s)?;
    for p in [x_params, t_params] {
        if !(p.lifetime_ns > 0.0 && p.pump_rate_per_ns > 0.0) || !(0.0..=1.0).contains(&p.efficiency) {
            return Err(Error::config("transition lifetime and pump rate must be positive, efficiency in [0, 1]"));
        }
    }
    if !(toggle_in_rate >= 0.0 && toggle_out_rate >= 0.0) {
        return Err(Error::config("charge toggle rates must be non-negative"));
    }

    let mut rng = seeded_rng(seed);
    let mut out = ChargeToggledStreams { x: Vec::new(), t: Vec::new(), epochs: vec![(0.0, ChargeState::Neutral)] };
    let mut state = ChargeState::Neutral;
    let mut excited = false;
    let mut t = 0.0;

    loop {
        let (params, toggle) = match state {
            ChargeState::Neutral => (x_params, toggle_in_rate),
            ChargeState::Charged => (t_params, toggle_out_rate),
        };
        let total = if excited { 1.0 / params.lifetime_ns } else { params.pump_rate_per_ns + toggle };
        let unit: f64 = Exp1.sample(&mut rng);
        t += unit / total;
        if t >= duration_ns {
            break;
        }
        if excited {
            excited = false;
            if rng.random::<f64>() < params.efficiency {
                match state {
                    ChargeState::Neutral => out.x.push(t),
                    ChargeState::Charged => out.t.push(t),
                }
            }
        } else if rng.random::<f64>() * total < params.pump_rate_per_ns {
            excited = true;
        } else {
            state = match state {
                ChargeState::Neutral => ChargeState::Charged,
                ChargeState::Charged => ChargeState::Neutral,
            };
            out.epochs.push((t, state));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rate: f64) -> EmitterStreamParams {
        EmitterStreamParams { rate_cps: rate, lifetime_ns: 1.0, pump_rate_per_ns: 7.0 / 3.0 }
    }

    #[test]
    fn seeded_streams_are_reproducible() {
        let a = simulate_emitter_stream(&params(1e8), 1e-4, 9).unwrap();
        let b = simulate_emitter_stream(&params(1e8), 1e-4, 9).unwrap();
        let c = simulate_emitter_stream(&params(1e8), 1e-4, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mean_rate_matches_target() {
        let s = simulate_emitter_stream(&params(2e8), 5e-3, 1).unwrap();
        assert!(s.len() >= 1_000_000);
        let rate = s.len() as f64 / 5e-3;
        assert!((rate / 2e8 - 1.0).abs() < 0.02, "rate {rate}");
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(simulate_emitter_stream(&params(1e8), 0.0, 1).is_err());
        assert!(simulate_emitter_stream(&params(-1.0), 1.0, 1).is_err());
        // Saturated cycle rate is 0.7 photons/ns.
        assert!(simulate_emitter_stream(&params(8e8), 1e-6, 1).is_err());
    }

    #[test]
    fn correlation_time_formula() {
        let p = params(1.0);
        assert!((p.correlation_time_ns() - 0.3).abs() < 1e-12);
        let w = EmitterStreamParams::pump_for_correlation_time(0.3, 1.0).unwrap();
        assert!((w - 7.0 / 3.0).abs() < 1e-12);
        assert!(EmitterStreamParams::pump_for_correlation_time(2.0, 1.0).is_err());
    }

    #[test]
    fn zero_background_is_identity() {
        let s = simulate_emitter_stream(&params(1e8), 1e-5, 3).unwrap();
        assert_eq!(mix_background(&s, 0.0, 1e-5, 4).unwrap(), s);
    }

    #[test]
    fn merge_keeps_order() {
        let m = merge_sorted(&[1.0, 4.0, 6.0], &[2.0, 3.0, 7.0]);
        assert_eq!(m, vec![1.0, 2.0, 3.0, 4.0, 6.0, 7.0]);
    }

    #[test]
    fn no_toggling_means_no_trion_photons() {
        let p = TransitionParams { lifetime_ns: 1.0, pump_rate_per_ns: 1.0, efficiency: 1.0 };
        let s = simulate_charge_toggled_streams(&p, &p, 0.0, 0.0, 1e-5, 5).unwrap();
        assert!(s.t.is_empty());
        assert!(!s.x.is_empty());
        assert_eq!(s.epochs.len(), 1);
    }

    #[test]
    fn photons_respect_charge_epochs() {
        let p = TransitionParams { lifetime_ns: 1.0, pump_rate_per_ns: 2.0, efficiency: 0.5 };
        let s = simulate_charge_toggled_streams(&p, &p, 0.3, 0.3, 1e-5, 6).unwrap();
        assert!(s.epochs.len() > 100);
        assert!(s.x.iter().all(|&t| s.state_at(t) == ChargeState::Neutral));
        assert!(s.t.iter().all(|&t| s.state_at(t) == ChargeState::Charged));
    }
}

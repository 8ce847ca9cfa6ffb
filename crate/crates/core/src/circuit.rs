//! The two-port filtered channel: source → bus waveguide → add-drop ring →
//! through / drop outputs.
//!
//! All composition is incoherent (power spectra add). Ring transmissions are
//! evaluated in the ring's untuned frame, i.e. at `λ − ring_shift(V)`.

use std::collections::BTreeMap;
use std::f64::consts::E;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emitter::{
    linspace, trapezoid, BackgroundKind, BackgroundSource, ComponentKind, EmitterLine, EmitterModel,
    SourceCoupling, SpectralComponent,
};
use crate::error::{Error, Result};
use crate::fit::{fit_lorentzian, LorentzFit};
use crate::ring::{solve_couplings, DesignTargets, GapCouplingModel, Polarization, RingParams};
use crate::tuning::{align_voltage, TuningCalibration};

/// Half-width of the integration window around each component, in FWHM.
pub const LINE_WINDOW_FWHM: f64 = 10.0;

/// Clamp for dB values of vanishing transmissions.
const MAX_ATTENUATION_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBand {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub db_per_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideLosses {
    pub bands: Vec<LossBand>,
    pub source_to_ring_cm: f64,
    pub through_cm: f64,
    pub drop_cm: f64,
    /// Facet and off-chip insertion loss applied to both outputs.
    #[serde(default)]
    pub insertion_db: f64,
}

impl Default for WaveguideLosses {
    fn default() -> Self {
        WaveguideLosses {
            bands: vec![
                LossBand { start_nm: 400.0, stop_nm: 650.0, db_per_cm: 150.0 },
                LossBand { start_nm: 650.0, stop_nm: 1000.0, db_per_cm: 3.0 },
            ],
            source_to_ring_cm: 0.1,
            through_cm: 0.2,
            drop_cm: 0.2,
            insertion_db: 0.0,
        }
    }
}

impl WaveguideLosses {
    pub fn validate(&self) -> Result<()> {
        if self.bands.iter().any(|b| !(b.db_per_cm >= 0.0) || !(b.stop_nm > b.start_nm)) {
            return Err(Error::config("loss bands need start < stop and non-negative dB/cm"));
        }
        if !(self.source_to_ring_cm >= 0.0 && self.through_cm >= 0.0 && self.drop_cm >= 0.0) {
            return Err(Error::config("path lengths must be non-negative"));
        }
        if !(self.insertion_db >= 0.0) {
            return Err(Error::config("insertion loss must be non-negative"));
        }
        Ok(())
    }

    /// Propagation loss at `wavelength`; wavelengths outside every band are lossless.
    pub fn db_per_cm(&self, wavelength: f64) -> f64 {
        self.bands
            .iter()
            .find(|b| wavelength >= b.start_nm && wavelength < b.stop_nm)
            .map_or(0.0, |b| b.db_per_cm)
    }

    pub fn through_factor(&self, wavelength: f64) -> f64 {
        db_to_factor(self.db_per_cm(wavelength) * (self.source_to_ring_cm + self.through_cm) + self.insertion_db)
    }

    pub fn drop_factor(&self, wavelength: f64) -> f64 {
        db_to_factor(self.db_per_cm(wavelength) * (self.source_to_ring_cm + self.drop_cm) + self.insertion_db)
    }
}

/// Attenuation terms of the pump path to the drop port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpBudget {
    pub material_absorption_db: f64,
    pub undercoupling_db: f64,
    pub modal_mismatch_db: f64,
    #[serde(default = "default_pump_nm")]
    pub pump_nm: f64,
}

fn default_pump_nm() -> f64 {
    532.0
}

impl Default for PumpBudget {
    fn default() -> Self {
        PumpBudget {
            material_absorption_db: 15.0,
            undercoupling_db: PumpBudget::undercoupling_from_gap(0.4, 0.1),
            modal_mismatch_db: 10.0,
            pump_nm: default_pump_nm(),
        }
    }
}

impl PumpBudget {
    pub fn validate(&self) -> Result<()> {
        let terms = [self.material_absorption_db, self.undercoupling_db, self.modal_mismatch_db];
        if terms.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::config("pump budget terms must be non-negative dB"));
        }
        if !(self.pump_nm > 0.0) {
            return Err(Error::config("pump wavelength must be positive"));
        }
        Ok(())
    }

    /// Extra attenuation from a wider effective gap at both couplers: the
    /// field coupling falls by `exp(−Δgap/δ)` per coupler, i.e.
    /// `2·20·log10(e)·Δgap/δ` dB in power.
    pub fn undercoupling_from_gap(gap_increase_um: f64, decay_length_um: f64) -> f64 {
        2.0 * 20.0 * E.log10() * gap_increase_um / decay_length_um
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSuppression {
    pub material_absorption_db: f64,
    pub undercoupling_db: f64,
    pub modal_mismatch_db: f64,
    pub ring_drop_db: f64,
    pub total_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitConfig {
    pub ring: RingParams,
    pub tuning: TuningCalibration,
    #[serde(flatten)]
    pub source: EmitterModel,
    #[serde(default)]
    pub coupling: SourceCoupling,
    #[serde(default)]
    pub losses: WaveguideLosses,
    #[serde(default)]
    pub pump_budget: PumpBudget,
    /// Wavelength range over which spectra may be requested.
    #[serde(default = "default_band")]
    pub band_nm: [f64; 2],
    /// Fraction of the drop peak above which a line is routed to the drop port.
    #[serde(default = "default_drop_threshold")]
    pub drop_threshold: f64,
}

fn default_band() -> [f64; 2] {
    [500.0, 950.0]
}

fn default_drop_threshold() -> f64 {
    0.5
}

/// Ring designed for a 0.96 nm FSR and 0.13 nm FWHM at 880 nm, critically
/// coupled for TE, with TM couplers from the gap model.
pub fn designed_test_ring(lambda_ref_nm: f64) -> RingParams {
    let targets = DesignTargets {
        fsr_nm: 0.96,
        fwhm_nm: 0.13,
        wavelength_nm: 880.0,
        radius_um: 70.0,
        loss_a: crate::ring::DEFAULT_ROUND_TRIP_LOSS,
        critical: true,
    };
    designed_ring(&targets, lambda_ref_nm).expect("built-in design targets are feasible")
}

/// Nominal effective index used to place the design's resonance comb.
pub const NOMINAL_N_EFF: f64 = 1.75;

/// Ring meeting `targets` for TE, with TM couplers from the default gap
/// model and a resonance anchored at `lambda_ref_nm`.
pub fn designed_ring(targets: &DesignTargets, lambda_ref_nm: f64) -> Result<RingParams> {
    if !(lambda_ref_nm > 0.0) {
        return Err(Error::config("reference wavelength must be positive"));
    }
    let design = solve_couplings(targets)?;
    let tm = GapCouplingModel::default().tm_from_te(&design.coupling)?;
    let mut ring = RingParams { lambda_ref_nm, ..design.to_ring(targets, NOMINAL_N_EFF) }.anchored();
    ring.couplings.insert(Polarization::TM, tm);
    Ok(ring)
}

impl Default for CircuitConfig {
    /// Single nanowire with trion (880.0 nm) and exciton (881.5 nm) lines. The
    /// ring is parked between the two lines at 0 V.
    fn default() -> Self {
        let line = |label: &str, center: f64, rate: f64| EmitterLine {
            label: label.into(),
            center_wavelength: center,
            linewidth_fwhm: 0.002,
            emission_rate: rate,
            lifetime: 1.0,
            g2_intrinsic: 0.13,
            te_fraction: 0.9,
        };
        CircuitConfig {
            ring: designed_test_ring(880.27),
            tuning: TuningCalibration::default(),
            source: EmitterModel {
                lines: vec![line("T", 880.0, 2.0e6), line("X", 881.5, 1.5e6)],
                backgrounds: vec![
                    BackgroundSource {
                        kind: BackgroundKind::BulkInp,
                        center: 830.0,
                        width_fwhm: 30.0,
                        rate: 3.0e6,
                        te_fraction: 0.5,
                    },
                    BackgroundSource {
                        kind: BackgroundKind::Pump,
                        center: 532.0,
                        width_fwhm: 1e-3,
                        rate: 1.0e12,
                        te_fraction: 0.5,
                    },
                ],
            },
            coupling: SourceCoupling::default(),
            losses: WaveguideLosses::default(),
            pump_budget: PumpBudget::default(),
            band_nm: default_band(),
            drop_threshold: default_drop_threshold(),
        }
    }
}

impl CircuitConfig {
    /// Two quantum dots about 10 nm apart on one bus, for demultiplexing.
    /// Thermal crosstalk to the emitters is weaker than on the single-dot
    /// device, so one 0–15 V sweep passes each line through one resonance.
    pub fn two_dot_default() -> Self {
        let dot = |label: &str, center: f64| EmitterLine {
            label: label.into(),
            center_wavelength: center,
            linewidth_fwhm: 0.002,
            emission_rate: 1.0e6,
            lifetime: 1.0,
            g2_intrinsic: 0.0,
            te_fraction: 1.0,
        };
        let base = CircuitConfig::default();
        CircuitConfig {
            ring: designed_test_ring(875.336),
            tuning: TuningCalibration { temp_coeff: 0.05, ..base.tuning },
            source: EmitterModel { lines: vec![dot("QD1", 875.0), dot("QD2", 885.0)], backgrounds: Vec::new() },
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ring.validate()?;
        self.tuning.validate()?;
        self.source.validate()?;
        self.coupling.validate()?;
        self.losses.validate()?;
        self.pump_budget.validate()?;
        if !(self.band_nm[0] > 0.0 && self.band_nm[1] > self.band_nm[0]) {
            return Err(Error::config("band_nm must be an increasing pair of positive wavelengths"));
        }
        if !(self.drop_threshold > 0.0 && self.drop_threshold < 1.0) {
            return Err(Error::config("drop_threshold must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Voltage that puts a ring resonance on the line labelled `label`.
    pub fn aligned_voltage(&self, label: &str, pol: Polarization) -> Result<f64> {
        let line = self.source.line(label)?;
        align_voltage(&self.ring, &self.tuning, line.center_wavelength, pol)
    }

    /// Through and drop power transfer of one component at `wavelength`
    /// with the ring moved by `ring_offset_nm`.
    ///
    /// The pump reaches the drop port only through its suppression budget;
    /// every other component follows the ring transfer functions.
    fn transfer(
        &self,
        comp: &SpectralComponent,
        wavelength: f64,
        ring_offset_nm: f64,
        pol: Polarization,
        pump_drop: f64,
    ) -> Result<(f64, f64)> {
        let local = wavelength - ring_offset_nm;
        let through = self.ring.through_transmission(local, pol)? * self.losses.through_factor(wavelength);
        let drop = match comp.kind {
            ComponentKind::Background(BackgroundKind::Pump) => pump_drop,
            _ => self.ring.drop_transmission(local, pol)? * self.losses.drop_factor(wavelength),
        };
        Ok((through, drop))
    }

    fn pump_drop_factor(&self) -> Result<f64> {
        Ok(db_to_factor(pump_suppression_db(self)?.total_db))
    }

    fn check_grid(&self, grid: &[f64]) -> Result<()> {
        if grid.is_empty() {
            return Err(Error::config("spectral grid is empty"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("spectral grid must be strictly increasing"));
        }
        let [lo, hi] = self.band_nm;
        if grid[0] < lo || grid[grid.len() - 1] > hi {
            return Err(Error::config(format!(
                "grid [{}, {}] nm leaves the model band [{lo}, {hi}] nm",
                grid[0],
                grid[grid.len() - 1]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSpectra {
    pub grid: Vec<f64>,
    pub through: Vec<f64>,
    pub drop: Vec<f64>,
}

/// Through- and drop-port spectral densities at heater voltage `voltage`.
pub fn port_spectra(cfg: &CircuitConfig, voltage: f64, grid: &[f64], pol: Polarization) -> Result<PortSpectra> {
    cfg.check_grid(grid)?;
    cfg.ring.coupling(pol)?;
    let offset = cfg.tuning.ring_shift(voltage)?;
    let comps = cfg.source.components(voltage, &cfg.tuning)?;
    let pump_drop = cfg.pump_drop_factor()?;
    let eta = cfg.coupling.forward_efficiency;

    let mut through = vec![0.0; grid.len()];
    let mut drop = vec![0.0; grid.len()];
    for (i, &l) in grid.iter().enumerate() {
        for c in &comps {
            let s = eta * c.density(l, Some(pol));
            if s == 0.0 {
                continue;
            }
            let (t, d) = cfg.transfer(c, l, offset, pol, pump_drop)?;
            through[i] += s * t;
            drop[i] += s * d;
        }
    }
    Ok(PortSpectra { grid: grid.to_vec(), through, drop })
}

/// Line-integrated powers of one spectral component (counts/s).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortPower {
    pub label: String,
    /// Launched forward into the bus, before propagation loss.
    pub source: f64,
    pub through: f64,
    pub drop: f64,
}

fn integrate_component(
    cfg: &CircuitConfig,
    comp: &SpectralComponent,
    ring_offset_nm: f64,
    pol: Polarization,
    pump_drop: f64,
) -> Result<PortPower> {
    let [lo, hi] = cfg.band_nm;
    let start = (comp.center_nm - LINE_WINDOW_FWHM * comp.fwhm_nm).max(lo);
    let stop = (comp.center_nm + LINE_WINDOW_FWHM * comp.fwhm_nm).min(hi);
    let zero = PortPower { label: comp.label.clone(), source: 0.0, through: 0.0, drop: 0.0 };
    if stop <= start || comp.rate_cps == 0.0 {
        return Ok(zero);
    }
    let ring_fwhm = cfg.ring.resonance_fwhm(comp.center_nm, pol).unwrap_or(comp.fwhm_nm);
    let step = comp.fwhm_nm.min(ring_fwhm) / 20.0;
    let n = (((stop - start) / step).ceil() as usize + 1).max(2001);
    let grid = linspace(start, stop, n);

    let eta = cfg.coupling.forward_efficiency;
    let mut src = Vec::with_capacity(n);
    let mut thr = Vec::with_capacity(n);
    let mut drp = Vec::with_capacity(n);
    for &l in &grid {
        let s = eta * comp.density(l, Some(pol));
        let (t, d) = cfg.transfer(comp, l, ring_offset_nm, pol, pump_drop)?;
        src.push(s);
        thr.push(s * t);
        drp.push(s * d);
    }
    Ok(PortPower {
        label: comp.label.clone(),
        source: trapezoid(&grid, &src),
        through: trapezoid(&grid, &thr),
        drop: trapezoid(&grid, &drp),
    })
}

/// Per-component line-integrated port powers, integrated over
/// ±[`LINE_WINDOW_FWHM`] linewidths (clipped to the model band).
pub fn component_port_powers(cfg: &CircuitConfig, voltage: f64, pol: Polarization) -> Result<Vec<PortPower>> {
    cfg.ring.coupling(pol)?;
    let offset = cfg.tuning.ring_shift(voltage)?;
    let pump_drop = cfg.pump_drop_factor()?;
    cfg.source
        .components(voltage, &cfg.tuning)?
        .iter()
        .map(|c| integrate_component(cfg, c, offset, pol, pump_drop))
        .collect()
}

fn line_component(cfg: &CircuitConfig, voltage: f64, label: &str) -> Result<SpectralComponent> {
    cfg.source.line(label)?;
    cfg.source
        .components(voltage, &cfg.tuning)?
        .into_iter()
        .find(|c| c.kind == ComponentKind::Line && c.label == label)
        .ok_or_else(|| Error::config(format!("no emitter line labelled '{label}'")))
}

/// Through-port extinction of a line at `voltage`, relative to the same line
/// sitting at a ring anti-resonance:
/// `10·log10(P_through(unaligned) / P_through(voltage))`.
pub fn selectivity_db(cfg: &CircuitConfig, voltage: f64, label: &str, pol: Polarization) -> Result<f64> {
    let comp = line_component(cfg, voltage, label)?;
    let pump_drop = cfg.pump_drop_factor()?;
    let offset = cfg.tuning.ring_shift(voltage)?;
    let at_voltage = integrate_component(cfg, &comp, offset, pol, pump_drop)?;

    let anti = cfg.ring.nearest_antiresonance(comp.center_nm);
    let reference = integrate_component(cfg, &comp, comp.center_nm - anti, pol, pump_drop)?;
    if at_voltage.through <= 0.0 {
        return Ok(MAX_ATTENUATION_DB);
    }
    Ok((10.0 * (reference.through / at_voltage.through).log10()).max(0.0))
}

/// Total attenuation of the pump between injection and the drop port.
pub fn pump_suppression_db(cfg: &CircuitConfig) -> Result<PumpSuppression> {
    let b = &cfg.pump_budget;
    let drop = cfg.ring.drop_transmission(b.pump_nm, Polarization::TE)?;
    let ring_drop_db = factor_to_db(drop);
    Ok(PumpSuppression {
        material_absorption_db: b.material_absorption_db,
        undercoupling_db: b.undercoupling_db,
        modal_mismatch_db: b.modal_mismatch_db,
        ring_drop_db,
        total_db: b.material_absorption_db + b.undercoupling_db + b.modal_mismatch_db + ring_drop_db,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSweep {
    pub label: String,
    pub drop: Vec<f64>,
    pub through: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QwdmSweep {
    pub voltages: Vec<f64>,
    /// Line position relative to the ring, `emitter_shift(V) − ring_shift(V)`.
    pub shift_nm: Vec<f64>,
    /// Ring free spectral range at its reference wavelength.
    pub fsr_nm: f64,
    pub lines: Vec<LineSweep>,
}

impl QwdmSweep {
    pub fn line(&self, label: &str) -> Result<&LineSweep> {
        self.lines
            .iter()
            .find(|l| l.label == label)
            .ok_or_else(|| Error::config(format!("sweep has no line '{label}'")))
    }

    /// Lorentzian fit of one line's drop-port curve against the relative
    /// shift, restricted to one free spectral range centered on its peak.
    pub fn fit_drop(&self, label: &str) -> Result<LorentzFit> {
        let line = self.line(label)?;
        let peak = line
            .drop
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| self.shift_nm[i])
            .ok_or_else(|| Error::config("empty sweep"))?;
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .shift_nm
            .iter()
            .zip(&line.drop)
            .filter(|(s, _)| (**s - peak).abs() <= self.fsr_nm / 2.0)
            .map(|(s, d)| (*s, *d))
            .unzip();
        fit_lorentzian(&x, &y)
    }
}

/// Drop- and through-port line powers of every emitter line across `voltages`.
///
/// Voltages are evaluated in parallel; each point is independent so the
/// result matches sequential evaluation exactly.
pub fn qwdm_sweep(cfg: &CircuitConfig, voltages: &[f64], pol: Polarization) -> Result<QwdmSweep> {
    if voltages.is_empty() {
        return Err(Error::config("voltage grid is empty"));
    }
    let lines = &cfg.source.lines;
    if lines.is_empty() {
        return Err(Error::config("sweep needs at least one emitter line"));
    }
    for (i, a) in lines.iter().enumerate() {
        if lines[i + 1..].iter().any(|b| b.center_wavelength == a.center_wavelength) {
            return Err(Error::config(format!("line '{}' shares its center wavelength", a.label)));
        }
    }
    cfg.ring.coupling(pol)?;
    let pump_drop = cfg.pump_drop_factor()?;

    let points: Vec<(f64, Vec<PortPower>)> = voltages
        .par_iter()
        .map(|&v| -> Result<(f64, Vec<PortPower>)> {
            let offset = cfg.tuning.ring_shift(v)?;
            let shift = cfg.tuning.emitter_shift(v)? - offset;
            let powers = cfg
                .source
                .components(v, &cfg.tuning)?
                .iter()
                .filter(|c| c.kind == ComponentKind::Line)
                .map(|c| integrate_component(cfg, c, offset, pol, pump_drop))
                .collect::<Result<Vec<_>>>()?;
            Ok((shift, powers))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sweeps: Vec<LineSweep> = lines
        .iter()
        .map(|l| LineSweep {
            label: l.label.clone(),
            drop: Vec::with_capacity(voltages.len()),
            through: Vec::with_capacity(voltages.len()),
        })
        .collect();
    let mut shift_nm = Vec::with_capacity(voltages.len());
    for (shift, powers) in points {
        shift_nm.push(shift);
        for (s, p) in sweeps.iter_mut().zip(powers) {
            s.drop.push(p.drop);
            s.through.push(p.through);
        }
    }
    Ok(QwdmSweep {
        voltages: voltages.to_vec(),
        shift_nm,
        fsr_nm: cfg.ring.free_spectral_range(cfg.ring.lambda_ref_nm),
        lines: sweeps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    Drop,
    Through,
}

/// Routes each line to the drop port when its drop transmission exceeds
/// `drop_threshold` times the on-resonance drop peak.
pub fn demux_assignment(cfg: &CircuitConfig, voltage: f64, pol: Polarization) -> Result<BTreeMap<String, Port>> {
    let offset = cfg.tuning.ring_shift(voltage)?;
    let mut out = BTreeMap::new();
    for line in &cfg.source.lines {
        let center = line.center_at(voltage, &cfg.tuning)?;
        let peak = cfg.ring.drop_transmission(cfg.ring.nearest_resonance(center - offset), pol)?;
        let here = cfg.ring.drop_transmission(center - offset, pol)?;
        let port = if peak > 0.0 && here > cfg.drop_threshold * peak { Port::Drop } else { Port::Through };
        out.insert(line.label.clone(), port);
    }
    Ok(out)
}

pub fn db_to_factor(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Attenuation in dB of a power factor, clamped for vanishing factors.
pub fn factor_to_db(factor: f64) -> f64 {
    if factor <= 0.0 {
        MAX_ATTENUATION_DB
    } else {
        (-10.0 * factor.log10()).min(MAX_ATTENUATION_DB)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::Polarization::TE;

    fn local_maxima(y: &[f64]) -> Vec<usize> {
        (1..y.len() - 1).filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1]).collect()
    }

    fn power<'a>(p: &'a [PortPower], label: &str) -> &'a PortPower {
        p.iter().find(|x| x.label == label).unwrap()
    }

    #[test]
    fn default_config_is_valid_and_serializes_all_blocks() {
        let cfg = CircuitConfig::default();
        cfg.validate().unwrap();
        CircuitConfig::two_dot_default().validate().unwrap();
        let v = serde_json::to_value(&cfg).unwrap();
        for key in ["ring", "tuning", "emitters", "backgrounds", "coupling", "losses", "pump_budget"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["ring"]["couplings"]["TE"]["t1"].is_number());
    }

    #[test]
    fn unfiltered_through_shows_both_lines() {
        let cfg = CircuitConfig::default();
        let grid = linspace(879.5, 882.0, 25001);
        let s = port_spectra(&cfg, 0.0, &grid, TE).unwrap();
        let peaks: Vec<f64> = local_maxima(&s.through).into_iter().map(|i| grid[i]).collect();
        for center in [880.0, 881.5] {
            assert!(peaks.iter().any(|p| (p - center).abs() < 1e-3), "{center} missing from {peaks:?}");
        }
    }

    #[test]
    fn aligned_drop_is_dominated_by_the_target() {
        let cfg = CircuitConfig::default();
        let v = cfg.aligned_voltage("T", TE).unwrap();
        let grid = linspace(879.0, 883.0, 40001);
        let s = port_spectra(&cfg, v, &grid, TE).unwrap();
        let imax = s.drop.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let t_now = cfg.source.line("T").unwrap().center_at(v, &cfg.tuning).unwrap();
        assert!((grid[imax] - t_now).abs() < 2e-4);
        let second = local_maxima(&s.drop).into_iter().filter(|&i| i != imax).map(|i| s.drop[i]).fold(0.0, f64::max);
        assert!(s.drop[imax] > 10.0 * second, "{} vs {second}", s.drop[imax]);
    }

    #[test]
    fn ports_never_exceed_the_source() {
        let cfg = CircuitConfig::default();
        for v in [0.0, 3.0, 6.7, 12.0] {
            for p in component_port_powers(&cfg, v, TE).unwrap() {
                assert!(p.through + p.drop <= p.source * (1.0 + 1e-9), "{p:?}");
            }
        }
    }

    #[test]
    fn drop_isolation_is_bounded_by_the_ring_contrast() {
        // Isolation of an off-resonant line on the drop port cannot exceed the
        // drop contrast of the ring itself (about 13.7 dB at this finesse).
        let cfg = CircuitConfig::default();
        let v = cfg.aligned_voltage("T", TE).unwrap();
        let p = component_port_powers(&cfg, v, TE).unwrap();
        let (t, x) = (power(&p, "T"), power(&p, "X"));
        let isolation = 10.0 * ((t.drop / t.source) / (x.drop / x.source)).log10();
        let r = &cfg.ring;
        let lam = r.lambda_ref_nm;
        let contrast = 10.0
            * (r.drop_transmission(lam, TE).unwrap() / r.drop_transmission(r.nearest_antiresonance(lam), TE).unwrap())
                .log10();
        assert!(isolation > 12.0 && isolation <= contrast + 1e-9, "{isolation} vs {contrast}");

        let p0 = component_port_powers(&cfg, 0.0, TE).unwrap();
        let t0 = power(&p0, "T");
        assert!(10.0 * (t0.drop / t0.through).log10() < -10.0);
    }

    #[test]
    fn selectivity_drops_for_broad_lines() {
        let cfg = CircuitConfig::default();
        let v = cfg.aligned_voltage("T", TE).unwrap();
        let narrow = selectivity_db(&cfg, v, "T", TE).unwrap();
        let mut broad = cfg.clone();
        broad.source.lines[0].linewidth_fwhm = 0.02;
        let wide = selectivity_db(&broad, v, "T", TE).unwrap();
        assert!(narrow >= 15.0 && wide < narrow, "{narrow} {wide}");
        assert!(selectivity_db(&cfg, v, "nope", TE).is_err());
    }

    #[test]
    fn zeroed_budget_leaves_only_the_ring_term() {
        let mut cfg = CircuitConfig::default();
        cfg.pump_budget.material_absorption_db = 0.0;
        cfg.pump_budget.undercoupling_db = 0.0;
        cfg.pump_budget.modal_mismatch_db = 0.0;
        let s = pump_suppression_db(&cfg).unwrap();
        assert_eq!(s.total_db, s.ring_drop_db);
        assert!(s.ring_drop_db > 0.0 && s.ring_drop_db < 14.0);
        assert!((PumpBudget::default().undercoupling_db - 69.487).abs() < 1e-3);
    }

    #[test]
    fn sweep_matches_pointwise_evaluation() {
        let cfg = CircuitConfig::two_dot_default();
        let vs = linspace(0.0, 15.0, 16);
        let all = qwdm_sweep(&cfg, &vs, TE).unwrap();
        for (i, &v) in vs.iter().enumerate() {
            let one = qwdm_sweep(&cfg, &[v], TE).unwrap();
            for (a, b) in all.lines.iter().zip(&one.lines) {
                assert_eq!(a.drop[i], b.drop[0]);
                assert_eq!(a.through[i], b.through[0]);
            }
        }
        assert!(qwdm_sweep(&cfg, &[], TE).is_err());
        let mut dup = cfg.clone();
        dup.source.lines[1].center_wavelength = dup.source.lines[0].center_wavelength;
        assert!(qwdm_sweep(&dup, &vs, TE).is_err());
    }

    #[test]
    fn demux_routes_the_aligned_dot_to_drop() {
        let cfg = CircuitConfig::two_dot_default();
        let v = cfg.aligned_voltage("QD1", TE).unwrap();
        let routes = demux_assignment(&cfg, v, TE).unwrap();
        assert_eq!(routes["QD1"], Port::Drop);
        assert_eq!(routes["QD2"], Port::Through);
    }

    #[test]
    fn grid_checks() {
        let cfg = CircuitConfig::default();
        assert!(port_spectra(&cfg, 0.0, &[], TE).is_err());
        assert!(port_spectra(&cfg, 0.0, &[881.0, 880.0], TE).is_err());
        assert!(matches!(port_spectra(&cfg, 0.0, &[400.0, 401.0], TE), Err(Error::Config(_))));
        assert!(port_spectra(&cfg, 20.0, &[880.0, 881.0], TE).is_err());
    }

    #[test]
    fn db_conversions() {
        assert!((db_to_factor(30.0) - 1e-3).abs() < 1e-15);
        assert!((factor_to_db(1e-3) - 30.0).abs() < 1e-12);
        assert_eq!(factor_to_db(0.0), MAX_ATTENUATION_DB);
        assert!(designed_ring(&DesignTargets { fwhm_nm: 2.0, ..reference_targets() }, 880.0).is_err());
    }

    fn reference_targets() -> DesignTargets {
        DesignTargets {
            fsr_nm: 0.96,
            fwhm_nm: 0.13,
            wavelength_nm: 880.0,
            radius_um: 70.0,
            loss_a: 0.99,
            critical: true,
        }
    }
}

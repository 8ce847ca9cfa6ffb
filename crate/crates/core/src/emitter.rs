//! Spectral description of the nanowire source: discrete quantum-dot lines,
//! broadband bulk emission, the leaked pump, and the directional coupling
//! into the waveguide.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::Polarization;
use crate::tuning::TuningCalibration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterLine {
    /// "X", "T" or any free-form name.
    pub label: String,
    /// Center at base temperature (0 V).
    #[serde(rename = "center_nm")]
    pub center_wavelength: f64,
    #[serde(rename = "fwhm_nm")]
    pub linewidth_fwhm: f64,
    #[serde(rename = "rate_cps")]
    pub emission_rate: f64,
    #[serde(rename = "lifetime_ns")]
    pub lifetime: f64,
    #[serde(rename = "g2")]
    pub g2_intrinsic: f64,
    pub te_fraction: f64,
}

impl EmitterLine {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::config(format!("emitter line '{}': {what}", self.label)));
        if !(self.center_wavelength > 0.0) {
            return bad("center wavelength must be positive");
        }
        if !(self.linewidth_fwhm > 0.0) {
            return bad("linewidth must be positive");
        }
        if !(self.emission_rate >= 0.0) {
            return bad("rate must be non-negative");
        }
        if !(self.lifetime > 0.0) {
            return bad("lifetime must be positive");
        }
        if !(0.0..=1.0).contains(&self.g2_intrinsic) {
            return bad("g2 must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.te_fraction) {
            return bad("te_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Line center after heating at `voltage`.
    pub fn center_at(&self, voltage: f64, cal: &TuningCalibration) -> Result<f64> {
        Ok(self.center_wavelength + cal.emitter_shift(voltage)?)
    }

    /// Lorentzian spectral density (counts/s/nm) on `grid`, red-shifted by
    /// the emitter heating at `voltage`.
    pub fn line_spectrum(&self, grid: &[f64], voltage: f64, cal: &TuningCalibration) -> Result<Vec<f64>> {
        if grid.is_empty() {
            return Err(Error::config("spectral grid is empty"));
        }
        let center = self.center_at(voltage, cal)?;
        Ok(grid
            .iter()
            .map(|&l| lorentzian(l, center, self.linewidth_fwhm, self.emission_rate))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    BulkInp,
    Pump,
}

/// Poissonian background emission. Backgrounds do not shift with the heater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSource {
    pub kind: BackgroundKind,
    #[serde(rename = "center_nm")]
    pub center: f64,
    #[serde(rename = "fwhm_nm")]
    pub width_fwhm: f64,
    #[serde(rename = "rate_cps")]
    pub rate: f64,
    #[serde(default = "half")]
    pub te_fraction: f64,
}

fn half() -> f64 {
    0.5
}

impl BackgroundSource {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0) {
            return Err(Error::config("background rate must be non-negative"));
        }
        if !(self.center > 0.0 && self.width_fwhm > 0.0) {
            return Err(Error::config("background center and width must be positive"));
        }
        if !(0.0..=1.0).contains(&self.te_fraction) {
            return Err(Error::config("background te_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            BackgroundKind::BulkInp => "bulk_inp",
            BackgroundKind::Pump => "pump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceCoupling {
    #[serde(rename = "forward")]
    pub forward_efficiency: f64,
    #[serde(rename = "backward")]
    pub backward_efficiency: f64,
}

impl Default for SourceCoupling {
    /// Forward-to-backward ratio 3/4.
    fn default() -> Self {
        SourceCoupling { forward_efficiency: 0.18, backward_efficiency: 0.24 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl SourceCoupling {
    pub fn validate(&self) -> Result<()> {
        let (f, b) = (self.forward_efficiency, self.backward_efficiency);
        if !(0.0..=1.0).contains(&f) || !(0.0..=1.0).contains(&b) || f + b > 1.0 {
            return Err(Error::config(format!(
                "coupling efficiencies forward {f}, backward {b} must be in [0, 1] with sum ≤ 1"
            )));
        }
        Ok(())
    }

    pub fn efficiency(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Forward => self.forward_efficiency,
            Direction::Backward => self.backward_efficiency,
        }
    }

    /// Spectrum launched into the waveguide in direction `dir`.
    pub fn directional(&self, spectrum: &[f64], dir: Direction) -> Vec<f64> {
        let eta = self.efficiency(dir);
        spectrum.iter().map(|s| s * eta).collect()
    }
}

/// Normalized Lorentzian scaled to integrate to `rate`.
pub fn lorentzian(wavelength: f64, center: f64, fwhm: f64, rate: f64) -> f64 {
    let hw = 0.5 * fwhm;
    let d = wavelength - center;
    rate * hw / (PI * (d * d + hw * hw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    Line,
    Background(BackgroundKind),
}

/// One spectral constituent evaluated at a given heater voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralComponent {
    pub label: String,
    pub kind: ComponentKind,
    pub center_nm: f64,
    pub fwhm_nm: f64,
    pub rate_cps: f64,
    pub te_fraction: f64,
}

impl SpectralComponent {
    /// Share of the emission in `pol`; `None` means both polarizations.
    pub fn polarization_weight(&self, pol: Option<Polarization>) -> f64 {
        match pol {
            None => 1.0,
            Some(Polarization::TE) => self.te_fraction,
            Some(Polarization::TM) => 1.0 - self.te_fraction,
        }
    }

    pub fn density(&self, wavelength: f64, pol: Option<Polarization>) -> f64 {
        self.polarization_weight(pol) * lorentzian(wavelength, self.center_nm, self.fwhm_nm, self.rate_cps)
    }
}

/// All emission of one nanowire source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmitterModel {
    #[serde(rename = "emitters")]
    pub lines: Vec<EmitterLine>,
    pub backgrounds: Vec<BackgroundSource>,
}

impl EmitterModel {
    pub fn validate(&self) -> Result<()> {
        self.lines.iter().try_for_each(EmitterLine::validate)?;
        self.backgrounds.iter().try_for_each(BackgroundSource::validate)
    }

    pub fn line(&self, label: &str) -> Result<&EmitterLine> {
        self.lines
            .iter()
            .find(|l| l.label == label)
            .ok_or_else(|| Error::config(format!("no emitter line labelled '{label}'")))
    }

    pub fn components(&self, voltage: f64, cal: &TuningCalibration) -> Result<Vec<SpectralComponent>> {
        let mut out = Vec::with_capacity(self.lines.len() + self.backgrounds.len());
        for l in &self.lines {
            out.push(SpectralComponent {
                label: l.label.clone(),
                kind: ComponentKind::Line,
                center_nm: l.center_at(voltage, cal)?,
                fwhm_nm: l.linewidth_fwhm,
                rate_cps: l.emission_rate,
                te_fraction: l.te_fraction,
            });
        }
        for b in &self.backgrounds {
            out.push(SpectralComponent {
                label: b.label().to_string(),
                kind: ComponentKind::Background(b.kind),
                center_nm: b.center,
                fwhm_nm: b.width_fwhm,
                rate_cps: b.rate,
                te_fraction: b.te_fraction,
            });
        }
        Ok(out)
    }

    /// Incoherent sum of every constituent, each weighted by its share in
    /// `pol` (`None` for the unpolarized total).
    pub fn source_spectrum(
        &self,
        grid: &[f64],
        voltage: f64,
        cal: &TuningCalibration,
        pol: Option<Polarization>,
    ) -> Result<Vec<f64>> {
        if grid.is_empty() {
            return Err(Error::config("spectral grid is empty"));
        }
        let comps = self.components(voltage, cal)?;
        Ok(grid.iter().map(|&l| comps.iter().map(|c| c.density(l, pol)).sum()).collect())
    }
}

/// Trapezoidal integral of `y` sampled on `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n).map(|i| start + step * i as f64).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(label: &str, center: f64, rate: f64, te: f64) -> EmitterLine {
        EmitterLine {
            label: label.into(),
            center_wavelength: center,
            linewidth_fwhm: 0.02,
            emission_rate: rate,
            lifetime: 1.0,
            g2_intrinsic: 0.0,
            te_fraction: te,
        }
    }

    #[test]
    fn lorentzian_peak_and_normalization() {
        let cal = TuningCalibration::default();
        let l = line("T", 880.0, 1e5, 1.0);
        let grid = linspace(880.0 - 200.0 * 0.02, 880.0 + 200.0 * 0.02, 400_001);
        let s = l.line_spectrum(&grid, 0.0, &cal).unwrap();
        let peak = s.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 2.0 * 1e5 / (PI * 0.02)).abs() / peak < 1e-9);
        let total = trapezoid(&grid, &s);
        assert!((total - 1e5).abs() / 1e5 < 0.01, "integral {total}");
    }

    #[test]
    fn heating_shifts_the_peak() {
        let cal = TuningCalibration::default();
        let l = line("T", 880.0, 1.0, 1.0);
        let grid = linspace(879.5, 881.0, 150_001);
        let s = l.line_spectrum(&grid, 12.5, &cal).unwrap();
        let imax = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let expected = 880.0 + cal.emitter_shift(12.5).unwrap();
        assert!((grid[imax] - expected).abs() < 2e-5);
    }

    #[test]
    fn empty_grid_rejected() {
        let cal = TuningCalibration::default();
        assert!(line("T", 880.0, 1.0, 1.0).line_spectrum(&[], 0.0, &cal).is_err());
        assert!(EmitterModel::default().source_spectrum(&[], 0.0, &cal, None).is_err());
    }

    #[test]
    fn composition_rules() {
        let cal = TuningCalibration::default();
        let grid = linspace(878.0, 884.0, 601);
        let t = line("T", 880.0, 3.0, 1.0);
        let x = line("X", 881.5, 2.0, 0.7);
        let single = EmitterModel { lines: vec![t.clone()], backgrounds: vec![] };
        let a = single.source_spectrum(&grid, 0.0, &cal, Some(Polarization::TE)).unwrap();
        assert_eq!(a, t.line_spectrum(&grid, 0.0, &cal).unwrap());

        let both = EmitterModel { lines: vec![t.clone(), x.clone()], backgrounds: vec![] };
        let sum = both.source_spectrum(&grid, 0.0, &cal, None).unwrap();
        let st = t.line_spectrum(&grid, 0.0, &cal).unwrap();
        let sx = x.line_spectrum(&grid, 0.0, &cal).unwrap();
        for i in 0..grid.len() {
            assert!((sum[i] - st[i] - sx[i]).abs() <= 1e-12 * sum[i].max(1.0));
        }
        let te = both.source_spectrum(&grid, 0.0, &cal, Some(Polarization::TE)).unwrap();
        let tm = both.source_spectrum(&grid, 0.0, &cal, Some(Polarization::TM)).unwrap();
        for i in 0..grid.len() {
            assert!((te[i] + tm[i] - sum[i]).abs() <= 1e-12 * sum[i].max(1.0));
        }
    }

    #[test]
    fn two_lines_are_resolvable() {
        let cal = TuningCalibration::default();
        let m = EmitterModel { lines: vec![line("T", 880.0, 1.0, 1.0), line("X", 881.5, 1.0, 1.0)], backgrounds: vec![] };
        let grid = linspace(879.0, 882.5, 3501);
        let s = m.source_spectrum(&grid, 0.0, &cal, None).unwrap();
        let maxima = (1..s.len() - 1).filter(|&i| s[i] > s[i - 1] && s[i] > s[i + 1]).count();
        assert_eq!(maxima, 2);
    }

    #[test]
    fn directional_split_keeps_shape() {
        let c = SourceCoupling::default();
        c.validate().unwrap();
        let cal = TuningCalibration::default();
        let grid = linspace(879.0, 881.0, 201);
        let s = line("T", 880.0, 1.0, 1.0).line_spectrum(&grid, 0.0, &cal).unwrap();
        let f = c.directional(&s, Direction::Forward);
        let b = c.directional(&s, Direction::Backward);
        for (fi, bi) in f.iter().zip(&b) {
            assert!((fi / bi - 0.75).abs() < 1e-12);
        }
        assert!(SourceCoupling { forward_efficiency: 0.6, backward_efficiency: 0.5 }.validate().is_err());
    }

    #[test]
    fn invalid_lines_rejected() {
        let mut l = line("T", 880.0, 1.0, 1.0);
        l.g2_intrinsic = 1.5;
        assert!(l.validate().is_err());
        let mut l = line("T", 880.0, 1.0, 1.0);
        l.linewidth_fwhm = 0.0;
        assert!(l.validate().is_err());
    }
}

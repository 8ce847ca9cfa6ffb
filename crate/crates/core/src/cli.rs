//! Command-line front end. Every data file is accompanied by a
//! `<file>.manifest.json` sidecar describing how it was produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::circuit::{
    designed_ring, port_spectra, pump_suppression_db, qwdm_sweep, CircuitConfig, PumpSuppression,
};
use crate::config::{hbt_scenario, FilterMode, FilteredRates, ProjectConfig};
use crate::emitter::linspace;
use crate::error::{Error, Result};
use crate::fit::LorentzFit;
use crate::io::{self, HistogramTable, SweepTable};
use crate::ring::{DesignTargets, Polarization, RingParams, DEFAULT_ROUND_TRIP_LOSS};
use crate::stats::{chi2_flatness, run_hbt, FlatnessTest, G2FitResult};

pub const SEED_ENV: &str = "QDRING_SEED";

#[derive(Debug, Parser)]
#[command(name = "qdring", version, about = "Quantum-dot emitters routed through a tunable add-drop ring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration; built-in single-dot device when omitted.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Through- and drop-port spectra at one heater voltage.
    Spectra {
        #[command(flatten)]
        common: Common,
        /// Heater voltage; defaults to the voltage aligning the HBT target line.
        #[arg(long)]
        voltage: Option<f64>,
        #[arg(long, default_value = "TE")]
        pol: Polarization,
        #[arg(long, default_value_t = 878.0)]
        grid_start: f64,
        #[arg(long, default_value_t = 884.0)]
        grid_stop: f64,
        #[arg(long, default_value_t = 3001)]
        points: usize,
        /// Replace the configured ring with a ring JSON (e.g. from `design`).
        #[arg(long, value_name = "FILE")]
        ring: Option<PathBuf>,
    },
    /// Line powers at both ports across a heater-voltage sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        v_start: f64,
        #[arg(long, default_value_t = 15.0)]
        v_stop: f64,
        /// Number of voltage intervals (the sweep has `steps + 1` points).
        #[arg(long, default_value_t = 150)]
        v_steps: usize,
        #[arg(long, default_value = "TE")]
        pol: Polarization,
    },
    /// Monte Carlo HBT measurement of the target line, with g² fit.
    Hbt {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = FilterArg::Ring)]
        filter: FilterArg,
        /// Acquisition time in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, env = SEED_ENV, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        bin_ps: Option<f64>,
        #[arg(long)]
        window_ns: Option<f64>,
        /// Multiplies the configured count rate.
        #[arg(long, default_value_t = 1.0)]
        rate_scale: f64,
        /// Also write every detected time tag.
        #[arg(long)]
        write_tags: bool,
    },
    /// Ring geometry and couplers for a target FSR and linewidth.
    Design {
        #[arg(long, default_value_t = 0.96)]
        fsr: f64,
        #[arg(long, default_value_t = 0.13)]
        fwhm: f64,
        /// Ring radius in µm.
        #[arg(long, default_value_t = 70.0)]
        radius: f64,
        /// Design wavelength in nm; a resonance is placed here.
        #[arg(long, default_value_t = 880.0)]
        lambda: f64,
        #[arg(long, default_value_t = DEFAULT_ROUND_TRIP_LOSS)]
        loss_a: f64,
        /// Critical coupling (true) or symmetric couplers (false).
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        critical: bool,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Pump suppression budget between source and drop port.
    Suppression {
        #[command(flatten)]
        common: Common,
    },
    /// Writes a built-in configuration.
    Config {
        #[arg(long, value_enum, default_value_t = Preset::SingleDot)]
        preset: Preset,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    None,
    Ring,
    Ideal,
}

impl From<FilterArg> for FilterMode {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::None => FilterMode::None,
            FilterArg::Ring => FilterMode::Ring,
            FilterArg::Ideal => FilterMode::Ideal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    SingleDot,
    TwoDot,
}

/// Provenance record written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub overrides: BTreeMap<String, String>,
    pub tool_version: String,
    /// Seconds since the Unix epoch; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
}

impl RunManifest {
    fn new(command: &str, config: Option<&Path>) -> Self {
        RunManifest {
            command: command.into(),
            config_path: config.map(|p| p.display().to_string()),
            seeds: Vec::new(),
            outputs: Vec::new(),
            overrides: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: timestamp(),
        }
    }

    fn set<T: ToString>(&mut self, key: &str, value: T) {
        self.overrides.insert(key.into(), value.to_string());
    }

    fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }
}

fn timestamp() -> u64 {
    if let Some(epoch) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return epoch;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn manifest_path(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

/// Collects output files and writes one sidecar per file at the end.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
        let path = self.dir.join(name);
        let w = io::create(&path)?;
        self.files.push(path);
        Ok(w)
    }

    fn finish(self, mut manifest: RunManifest) -> Result<Vec<PathBuf>> {
        manifest.outputs = self.files.iter().map(|p| p.display().to_string()).collect();
        for f in &self.files {
            io::write_json(io::create(&manifest_path(f))?, &manifest)?;
        }
        Ok(self.files)
    }
}

fn load_config(path: Option<&Path>) -> Result<ProjectConfig> {
    match path {
        Some(p) => ProjectConfig::load(p),
        None => Ok(ProjectConfig::default()),
    }
}

fn load_ring(path: &Path) -> Result<RingParams> {
    let ring: RingParams = serde_json::from_reader(std::io::BufReader::new(io::open(path)?))?;
    ring.validate()?;
    Ok(ring)
}

#[derive(Debug, Serialize)]
struct SweepReport<'a> {
    fsr_nm: f64,
    fits: BTreeMap<&'a str, LorentzFit>,
}

#[derive(Debug, Serialize)]
pub struct HbtReport {
    #[serde(flatten)]
    pub fit: Option<G2FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
    pub filter: FilterMode,
    pub signal_fraction: f64,
    pub expected_g2_zero: f64,
    pub rates: FilteredRates,
    pub coincidences: u64,
    pub singles: (u64, u64),
    pub flatness: FlatnessTest,
}

/// Runs one parsed command; returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Spectra { common, voltage, pol, grid_start, grid_stop, points, ring } => {
            let mut cfg = load_config(common.config.as_deref())?;
            let mut m = RunManifest::new("spectra", common.config.as_deref());
            if let Some(path) = &ring {
                cfg.circuit.ring = load_ring(path)?;
                m.set("ring", path.display());
            }
            if points < 2 {
                return Err(Error::config("spectra need at least 2 grid points"));
            }
            if !(grid_stop > grid_start) {
                return Err(Error::config("grid stop must exceed grid start"));
            }
            let v = match voltage {
                Some(v) => v,
                None => cfg.circuit.aligned_voltage(&cfg.hbt.target_line, pol)?,
            };
            m.set("voltage", v);
            m.set("pol", pol);
            m.set("grid_start", grid_start);
            m.set("grid_stop", grid_stop);
            m.set("points", points);
            let spectra = port_spectra(&cfg.circuit, v, &linspace(grid_start, grid_stop, points), pol)?;
            let mut out = Outputs::new(&common.out)?;
            io::write_spectra(out.create("spectra.csv")?, &spectra)?;
            out.finish(m)
        }
        Command::Sweep { common, v_start, v_stop, v_steps, pol } => {
            let cfg = load_config(common.config.as_deref())?;
            if v_steps == 0 {
                return Err(Error::config("voltage sweep needs at least one step"));
            }
            if !(v_stop > v_start) {
                return Err(Error::config("v-stop must exceed v-start"));
            }
            let mut m = RunManifest::new("sweep", common.config.as_deref());
            m.set("v_start", v_start);
            m.set("v_stop", v_stop);
            m.set("v_steps", v_steps);
            m.set("pol", pol);
            let sweep = qwdm_sweep(&cfg.circuit, &linspace(v_start, v_stop, v_steps + 1), pol)?;
            let mut report = SweepReport { fsr_nm: sweep.fsr_nm, fits: BTreeMap::new() };
            for line in &sweep.lines {
                if let Ok(fit) = sweep.fit_drop(&line.label) {
                    report.fits.insert(&line.label, fit);
                }
            }
            let mut out = Outputs::new(&common.out)?;
            io::write_sweep(out.create("sweep.csv")?, &SweepTable::from(&sweep))?;
            io::write_json(out.create("sweep_fit.json")?, &report)?;
            out.finish(m)
        }
        Command::Hbt { common, filter, duration, seed, bin_ps, window_ns, rate_scale, write_tags } => {
            let mut cfg = load_config(common.config.as_deref())?;
            let h = &mut cfg.hbt;
            h.duration_s = duration.unwrap_or(h.duration_s);
            h.bin_ps = bin_ps.unwrap_or(h.bin_ps);
            h.window_ns = window_ns.unwrap_or(h.window_ns);
            cfg.validate()?;
            let mut m = RunManifest::new("hbt", common.config.as_deref());
            m.seeds.push(seed);
            m.set("filter", FilterMode::from(filter));
            m.set_opt("duration", duration);
            m.set_opt("bin_ps", bin_ps);
            m.set_opt("window_ns", window_ns);
            m.set("rate_scale", rate_scale);

            let (scenario, rates) = hbt_scenario(&cfg, filter.into(), rate_scale)?;
            let run = run_hbt(&scenario, seed)?;
            let (fit, fit_error) = match run.fit(scenario.irf_sigma_ps()) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let report = HbtReport {
                fit,
                fit_error,
                filter: filter.into(),
                signal_fraction: scenario.signal_fraction,
                expected_g2_zero: scenario.expected_g2_zero(),
                rates,
                coincidences: run.histogram.total_coincidences(),
                singles: run.histogram.total_singles,
                flatness: chi2_flatness(&run.histogram)?,
            };
            let mut out = Outputs::new(&common.out)?;
            io::write_histogram(out.create("histogram.csv")?, &HistogramTable::from(&run.histogram))?;
            io::write_json(out.create("g2_fit.json")?, &report)?;
            if write_tags {
                io::write_tags(out.create("tags.csv")?, &run.tags.0, &run.tags.1)?;
            }
            out.finish(m)
        }
        Command::Design { fsr, fwhm, radius, lambda, loss_a, critical, out } => {
            let targets =
                DesignTargets { fsr_nm: fsr, fwhm_nm: fwhm, wavelength_nm: lambda, radius_um: radius, loss_a, critical };
            let ring = designed_ring(&targets, lambda)?;
            let mut m = RunManifest::new("design", None);
            m.set("fsr", fsr);
            m.set("fwhm", fwhm);
            m.set("radius", radius);
            m.set("lambda", lambda);
            m.set("loss_a", loss_a);
            m.set("critical", critical);
            let mut outputs = Outputs::new(&out)?;
            io::write_json(outputs.create("ring.json")?, &ring)?;
            io::write_json(std::io::stdout().lock(), &ring)?;
            outputs.finish(m)
        }
        Command::Suppression { common } => {
            let cfg = load_config(common.config.as_deref())?;
            let s = pump_suppression_db(&cfg.circuit)?;
            let mut out = Outputs::new(&common.out)?;
            io::write_json(out.create("suppression.json")?, &s)?;
            write_suppression_csv(out.create("suppression.csv")?, &s)?;
            out.finish(RunManifest::new("suppression", common.config.as_deref()))
        }
        Command::Config { preset, out } => {
            let circuit = match preset {
                Preset::SingleDot => CircuitConfig::default(),
                Preset::TwoDot => CircuitConfig::two_dot_default(),
            };
            let cfg = ProjectConfig { circuit, ..ProjectConfig::default() };
            let mut m = RunManifest::new("config", None);
            m.set("preset", format!("{preset:?}"));
            let mut outputs = Outputs::new(&out)?;
            let name = match preset {
                Preset::SingleDot => "single_dot.json",
                Preset::TwoDot => "two_dot.json",
            };
            io::write_json(outputs.create(name)?, &cfg)?;
            outputs.finish(m)
        }
    }
}

fn write_suppression_csv<W: std::io::Write>(w: W, s: &PumpSuppression) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["term", "db"])?;
    for (term, db) in [
        ("material_absorption", s.material_absorption_db),
        ("undercoupling", s.undercoupling_db),
        ("modal_mismatch", s.modal_mismatch_db),
        ("ring_drop", s.ring_drop_db),
        ("total", s.total_db),
    ] {
        out.write_record([term.to_string(), db.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn manifest_sidecar_name() {
        assert_eq!(manifest_path(Path::new("out/a.csv")), PathBuf::from("out/a.csv.manifest.json"));
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["qdring", "hbt", "--filter", "ideal", "--seed", "7", "--out", "x"]).unwrap();
        match cli.command {
            Command::Hbt { filter, seed, .. } => {
                assert_eq!(filter, FilterArg::Ideal);
                assert_eq!(seed, 7);
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["qdring", "spectra", "--pol", "XY"]).is_err());
        let cli = Cli::try_parse_from(["qdring", "design", "--critical", "false"]).unwrap();
        assert!(matches!(cli.command, Command::Design { critical: false, .. }));
    }
}

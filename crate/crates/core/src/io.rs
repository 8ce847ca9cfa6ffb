//! CSV and JSON files written and read by the command-line tool.
//!
//! Floats are written in Rust's shortest round-trip form, so every file
//! parses back to bit-identical values.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::circuit::{LineSweep, PortSpectra, QwdmSweep};
use crate::error::{Error, Result};
use crate::stats::CoincidenceHistogram;

pub const SPECTRA_HEADER: [&str; 3] = ["wavelength_nm", "through", "drop"];
pub const TAGS_HEADER: [&str; 2] = ["time_ns", "channel"];
pub const HISTOGRAM_HEADER: [&str; 2] = ["delay_ps", "counts"];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if found != expected {
        return Err(Error::config(format!("expected CSV header {}, found {}", expected.join(","), found.join(","))));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::config(format!("CSV row has no column {i}")))?;
    raw.parse().map_err(|_| Error::config(format!("cannot parse CSV value '{raw}'")))
}

pub fn write_spectra<W: Write>(w: W, s: &PortSpectra) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SPECTRA_HEADER)?;
    for i in 0..s.grid.len() {
        out.write_record([s.grid[i].to_string(), s.through[i].to_string(), s.drop[i].to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_spectra<R: Read>(r: R) -> Result<PortSpectra> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &SPECTRA_HEADER)?;
    let mut s = PortSpectra { grid: Vec::new(), through: Vec::new(), drop: Vec::new() };
    for rec in rdr.records() {
        let rec = rec?;
        s.grid.push(field(&rec, 0)?);
        s.through.push(field(&rec, 1)?);
        s.drop.push(field(&rec, 2)?);
    }
    Ok(s)
}

/// Voltage sweep as stored on disk: per-line drop and through powers.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub voltages: Vec<f64>,
    pub lines: Vec<LineSweep>,
}

impl From<&QwdmSweep> for SweepTable {
    fn from(s: &QwdmSweep) -> Self {
        SweepTable { voltages: s.voltages.clone(), lines: s.lines.clone() }
    }
}

pub fn write_sweep<W: Write>(w: W, s: &SweepTable) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["voltage_v".to_string()];
    for l in &s.lines {
        header.push(format!("{}_drop", l.label));
        header.push(format!("{}_through", l.label));
    }
    out.write_record(&header)?;
    for (i, v) in s.voltages.iter().enumerate() {
        let mut row = vec![v.to_string()];
        for l in &s.lines {
            row.push(l.drop[i].to_string());
            row.push(l.through[i].to_string());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sweep<R: Read>(r: R) -> Result<SweepTable> {
    let mut rdr = reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.first().map(String::as_str) != Some("voltage_v") || header.len().is_multiple_of(2) {
        return Err(Error::config("sweep CSV must start with voltage_v followed by drop/through column pairs"));
    }
    let mut lines = Vec::new();
    for pair in header[1..].chunks(2) {
        let label = pair[0]
            .strip_suffix("_drop")
            .filter(|l| pair[1] == format!("{l}_through"))
            .ok_or_else(|| Error::config(format!("unexpected sweep columns {},{}", pair[0], pair[1])))?;
        lines.push(LineSweep { label: label.to_owned(), drop: Vec::new(), through: Vec::new() });
    }
    let mut voltages = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        voltages.push(field(&rec, 0)?);
        for (k, l) in lines.iter_mut().enumerate() {
            l.drop.push(field(&rec, 1 + 2 * k)?);
            l.through.push(field(&rec, 2 + 2 * k)?);
        }
    }
    Ok(SweepTable { voltages, lines })
}

/// Time tags of both detectors, merged in time order (channel 1 first on ties).
pub fn write_tags<W: Write>(w: W, ch1: &[f64], ch2: &[f64]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(TAGS_HEADER)?;
    let (mut i, mut j) = (0, 0);
    while i < ch1.len() || j < ch2.len() {
        let take_first = j >= ch2.len() || (i < ch1.len() && ch1[i] <= ch2[j]);
        let (t, ch) = if take_first {
            i += 1;
            (ch1[i - 1], "1")
        } else {
            j += 1;
            (ch2[j - 1], "2")
        };
        out.write_record([t.to_string().as_str(), ch])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tags<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &TAGS_HEADER)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let t: f64 = field(&rec, 0)?;
        match field::<u8>(&rec, 1)? {
            1 => a.push(t),
            2 => b.push(t),
            c => return Err(Error::config(format!("unknown detector channel {c}"))),
        }
    }
    Ok((a, b))
}

/// Coincidence histogram as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramTable {
    pub delays_ps: Vec<f64>,
    pub counts: Vec<u64>,
}

impl From<&CoincidenceHistogram> for HistogramTable {
    fn from(h: &CoincidenceHistogram) -> Self {
        HistogramTable { delays_ps: h.delays_ps.clone(), counts: h.counts.clone() }
    }
}

pub fn write_histogram<W: Write>(w: W, h: &HistogramTable) -> Result<()> {
    let mut out = writer(w);
    out.write_record(HISTOGRAM_HEADER)?;
    for (d, c) in h.delays_ps.iter().zip(&h.counts) {
        out.write_record([d.to_string(), c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_histogram<R: Read>(r: R) -> Result<HistogramTable> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &HISTOGRAM_HEADER)?;
    let mut h = HistogramTable { delays_ps: Vec::new(), counts: Vec::new() };
    for rec in rdr.records() {
        let rec = rec?;
        h.delays_ps.push(field(&rec, 0)?);
        h.counts.push(field(&rec, 1)?);
    }
    Ok(h)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Creates `path` (and its parent directories) for buffered writing.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))
}

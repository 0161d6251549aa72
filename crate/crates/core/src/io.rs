//! Column tables for every exported result, as CSV or JSON.
//!
//! Numbers are written in Rust's shortest round-trip exponent form, so a
//! table read back is bit-identical to the one written and identical runs
//! produce identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modal::{FemModalResult, ModeShape};
use crate::spectral::Spectrum;
use crate::transient::{FrequencyResponse, Trajectory};

pub const MODE_SHAPE_HEADERS: [&str; 2] = ["x_m", "phi"];
pub const FEM_HEADERS: [&str; 4] = ["node", "x_m", "deflection", "rotation"];
pub const TRAJECTORY_HEADERS: [&str; 6] = ["t_s", "q_m", "qdot_mps", "C_out_F", "i_o_A", "v_load_V"];
pub const RESPONSE_HEADERS: [&str; 4] = ["f_Hz", "amp_m", "phase_rad", "i_amp_A"];
pub const SPECTRUM_HEADERS: [&str; 2] = ["f_Hz", "amplitude"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            _ => Err(Error::invalid(
                "path",
                format!("{} has neither a .csv nor a .json extension", path.display()),
            )),
        }
    }
}

/// Named columns of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Table {
    pub fn new(headers: &[&str], columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(headers.len(), columns.len());
        debug_assert!(columns.windows(2).all(|w| w[0].len() == w[1].len()));
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            columns,
        }
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let i = self.headers.iter().position(|h| h == name)?;
        Some(&self.columns[i])
    }

    /// Writes `<stem>.<ext>` for the format and returns the path.
    pub fn write(&self, dir: &Path, stem: &str, format: Format) -> Result<PathBuf> {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        self.write_to(&path, format)?;
        Ok(path)
    }

    pub fn write_to(&self, path: &Path, format: Format) -> Result<()> {
        let file = File::create(path).map_err(io_error(path))?;
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(BufWriter::new(file));
                w.write_record(&self.headers)?;
                let mut record = Vec::with_capacity(self.columns.len());
                for r in 0..self.rows() {
                    record.clear();
                    record.extend(self.columns.iter().map(|c| format!("{:e}", c[r])));
                    w.write_record(&record)?;
                }
                w.flush().map_err(io_error(path))?;
            }
            Format::Json => {
                let mut w = BufWriter::new(file);
                serde_json::to_writer(&mut w, self)?;
                w.write_all(b"\n").map_err(io_error(path))?;
                w.flush().map_err(io_error(path))?;
            }
        }
        Ok(())
    }

    /// Reads a table, choosing the format by extension.
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_error(path))?;
        let table = match Format::from_path(path)? {
            Format::Csv => {
                let mut r = csv::Reader::from_reader(BufReader::new(file));
                let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
                let mut columns = vec![Vec::new(); headers.len()];
                for (line, record) in r.records().enumerate() {
                    let record = record?;
                    for (c, field) in record.iter().enumerate() {
                        let v = field.trim().parse::<f64>().map_err(|e| {
                            Error::invalid(
                                format!("{}:{}", path.display(), line + 2),
                                format!("column {}: {e}", headers[c]),
                            )
                        })?;
                        columns[c].push(v);
                    }
                }
                Table { headers, columns }
            }
            Format::Json => serde_json::from_reader(BufReader::new(file))?,
        };
        if table.headers.len() != table.columns.len() || table.columns.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::invalid(path.display().to_string(), "ragged table"));
        }
        Ok(table)
    }

    /// Reads a table and checks its header row.
    pub fn read_expecting(path: &Path, headers: &[&str]) -> Result<Self> {
        let t = Self::read(path)?;
        if t.headers != headers {
            return Err(Error::invalid(
                path.display().to_string(),
                format!("headers {:?}, expected {:?}", t.headers, headers),
            ));
        }
        Ok(t)
    }
}

/// φ sampled at `points` evenly spaced positions along the beam.
pub fn mode_shape_table(shape: &ModeShape, points: usize) -> Table {
    let l = shape.length();
    let last = (points - 1) as f64;
    let x: Vec<f64> = (0..points).map(|i| l * i as f64 / last).collect();
    let phi = (0..points).map(|i| shape.at(i as f64 / last)).collect();
    Table::new(&MODE_SHAPE_HEADERS, vec![x, phi])
}

/// Nodal values of FE mode `mode` (1-based).
pub fn fem_table(result: &FemModalResult, mode: usize) -> Table {
    let m = &result.modes[mode - 1];
    let node = (0..result.node_x.len()).map(|i| i as f64).collect();
    Table::new(
        &FEM_HEADERS,
        vec![node, result.node_x.clone(), m.deflection.clone(), m.rotation.clone()],
    )
}

pub fn trajectory_table(tr: &Trajectory) -> Table {
    let t = (0..tr.len()).map(|i| tr.time(i)).collect();
    Table::new(
        &TRAJECTORY_HEADERS,
        vec![
            t,
            tr.q.clone(),
            tr.q_dot.clone(),
            tr.c_out.clone(),
            tr.i_o.clone(),
            tr.v_load.clone(),
        ],
    )
}

pub fn response_table(fr: &FrequencyResponse) -> Table {
    Table::new(
        &RESPONSE_HEADERS,
        vec![
            fr.frequency.clone(),
            fr.amplitude.clone(),
            fr.phase.clone(),
            fr.current_amplitude.clone(),
        ],
    )
}

pub fn spectrum_table(s: &Spectrum) -> Table {
    Table::new(&SPECTRUM_HEADERS, vec![s.frequencies(), s.amplitude.clone()])
}

/// Pretty JSON document with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_error(path))?;
    w.flush().map_err(io_error(path))
}

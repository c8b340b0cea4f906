//! CSV outputs: diagnostics rows and flow maps.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use axisym_core::diagnostics::DiagnosticsRecord;
use axisym_core::lagrangian::FlowMap;

use crate::error::{LabError, Result};

/// `p` with four significant digits, as used in column names.
pub fn format_p(p: f64) -> String {
    let mag = if p == 0.0 { 0 } else { p.abs().log10().floor() as i32 };
    let decimals = (3 - mag).max(0) as usize;
    format!("{p:.decimals$}")
}

/// Shortest representation that reads back to the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:e}")
}

pub fn diagnostics_header(ps: &[f64]) -> Vec<String> {
    let mut h = vec!["t".to_string(), "nu".to_string()];
    h.extend(ps.iter().map(|&p| format!("lp_{}", format_p(p))));
    for name in ["linf", "impulse", "energy", "enstrophy", "grad_u_sq"] {
        h.push(name.into());
    }
    h.extend(ps.iter().map(|&p| format!("diss_{}", format_p(p))));
    h.push("energy_deficit".into());
    h
}

pub fn diagnostics_row(rec: &DiagnosticsRecord) -> Vec<String> {
    let mut row = vec![format_value(rec.t), format_value(rec.nu)];
    row.extend(rec.lp_norms.iter().map(|&(_, v)| format_value(v)));
    for v in [rec.linf_norm, rec.impulse, rec.energy, rec.enstrophy, rec.grad_u_sq] {
        row.push(format_value(v));
    }
    row.extend(rec.dissipation.iter().map(|&(_, v)| format_value(v)));
    row.push(format_value(rec.energy_deficit));
    row
}

/// Streams diagnostics rows to disk, flushing after each one. The first IO
/// error is kept and returned by [`DiagnosticsWriter::finish`].
pub struct DiagnosticsWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
    error: Option<LabError>,
}

fn csv_error(path: &Path, e: csv::Error) -> LabError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LabError::io(path, io),
        other => LabError::Format {
            path: path.into(),
            message: format!("{other:?}"),
        },
    }
}

impl DiagnosticsWriter {
    pub fn create(path: &Path, ps: &[f64]) -> Result<Self> {
        let file = crate::run::buffered(path)?;
        let mut inner = csv::Writer::from_writer(file);
        inner
            .write_record(diagnostics_header(ps))
            .map_err(|e| csv_error(path, e))?;
        Ok(Self {
            path: path.into(),
            inner,
            error: None,
        })
    }

    pub fn push(&mut self, rec: &DiagnosticsRecord) {
        if self.error.is_some() {
            return;
        }
        let res = self
            .inner
            .write_record(diagnostics_row(rec))
            .and_then(|_| self.inner.flush().map_err(csv::Error::from));
        if let Err(e) = res {
            self.error = Some(csv_error(&self.path, e));
        }
    }

    pub fn fail(&mut self, e: LabError) {
        self.error.get_or_insert(e);
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.inner.flush().map_err(|e| LabError::io(&self.path, e))
    }
}

/// Flow-map rows `seed_id,t,phi_r,phi_z` for the seeds still inside the
/// domain.
pub struct FlowMapWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
    error: Option<LabError>,
}

impl FlowMapWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(crate::run::buffered(path)?);
        inner
            .write_record(["seed_id", "t", "phi_r", "phi_z"])
            .map_err(|e| csv_error(path, e))?;
        Ok(Self {
            path: path.into(),
            inner,
            error: None,
        })
    }

    /// Rows for the latest positions in `map`, stamped with time `t`.
    pub fn push(&mut self, t: f64, map: &FlowMap) {
        if self.error.is_some() {
            return;
        }
        let k = map.times.len() - 1;
        for (s, &(r, z)) in map.positions[k].iter().enumerate() {
            if !map.is_active(s, k) {
                continue;
            }
            let row = [s.to_string(), format_value(t), format_value(r), format_value(z)];
            if let Err(e) = self.inner.write_record(row) {
                self.error = Some(csv_error(&self.path, e));
                return;
            }
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.inner.flush().map_err(|e| LabError::io(&self.path, e))
    }
}

/// Writes a whole flow map (every stored time).
pub fn write_flow_map(path: &Path, map: &FlowMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(crate::run::buffered(path)?);
    w.write_record(["seed_id", "t", "phi_r", "phi_z"])
        .map_err(|e| csv_error(path, e))?;
    for (k, &t) in map.times.iter().enumerate() {
        for (s, &(r, z)) in map.positions[k].iter().enumerate() {
            if map.is_active(s, k) {
                w.write_record([s.to_string(), format_value(t), format_value(r), format_value(z)])
                    .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

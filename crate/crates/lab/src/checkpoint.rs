//! AXF1 checkpoints: one JSON header line, then the raw field values as
//! little-endian `f64`, row-major with `z` fastest.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use axisym_core::{FieldRole, HalfPlaneGrid, ScalarField};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const MAGIC: &str = "AXF1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub magic: String,
    pub nr: usize,
    pub nz: usize,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub t: f64,
    pub nu: f64,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub nu: f64,
    pub xi: ScalarField,
}

impl Checkpoint {
    pub fn header(&self) -> Header {
        let g = &self.xi.grid;
        Header {
            magic: MAGIC.into(),
            nr: g.nr,
            nz: g.nz,
            r_max: g.r_max,
            z_min: g.z_min,
            z_max: g.z_max,
            t: self.t,
            nu: self.nu,
            fields: vec!["xi".into()],
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = serde_json::to_string(&self.header()).expect("header serializes");
        w.write_all(header.as_bytes())?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(8 * self.xi.values.len());
        for v in &self.xi.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| LabError::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| LabError::io(path, e))
    }

    pub fn read_from(r: impl Read, path: &Path) -> Result<Self> {
        let bad = |message: String| LabError::Format {
            path: path.into(),
            message,
        };
        let mut reader = BufReader::new(r);
        let mut line = Vec::new();
        reader.read_until(b'\n', &mut line).map_err(|e| LabError::io(path, e))?;
        if line.pop() != Some(b'\n') {
            return Err(bad("missing header line".into()));
        }
        let text = std::str::from_utf8(&line).map_err(|_| bad("header is not UTF-8".into()))?;
        let h: Header = serde_json::from_str(text).map_err(|e| bad(format!("header: {e}")))?;
        if h.magic != MAGIC {
            return Err(bad(format!("magic {:?} is not {MAGIC:?}", h.magic)));
        }
        if h.fields != ["xi"] {
            return Err(bad(format!("unsupported field list {:?}", h.fields)));
        }
        let grid = HalfPlaneGrid::new(h.nr, h.nz, h.r_max, h.z_min, h.z_max).map_err(|e| bad(e.to_string()))?;
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes).map_err(|e| LabError::io(path, e))?;
        let n = grid.len();
        if bytes.len() != 8 * n {
            return Err(bad(format!("expected {} payload bytes, found {}", 8 * n, bytes.len())));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let xi =
            ScalarField::from_values(grid, FieldRole::RelativeVorticity, values).map_err(|e| bad(e.to_string()))?;
        Ok(Self { t: h.t, nu: h.nu, xi })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| LabError::io(path, e))?;
        Self::read_from(file, path)
    }
}

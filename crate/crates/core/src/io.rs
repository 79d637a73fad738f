//! File formats: a JSON header next to a raw little-endian `f64` payload.
//!
//! A grid function `name` is stored as `name.json` plus `name.bin`. The
//! payload holds `points_per_axis^dim` values in row-major order with `x`
//! varying fastest. Critical-radius fields encode `rho = +inf` as the NaN
//! with bit pattern [`RHO_INFINITE_BITS`]. Half-space fields store every
//! channel in turn, each as `len(ladder)` consecutive grid slices.

use crate::error::{Channel, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::potential::{CriticalRadiusField, Rho, RhoOptions};
use crate::semigroup::{HalfSpaceFunction, TLadder};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Bit pattern of the NaN standing for `rho = +inf`.
pub const RHO_INFINITE_BITS: u64 = 0x7FF8_0000_0000_1F1F;

pub const LAYOUT: &str = "row-major, x fastest";
pub const DTYPE: &str = "f64 little-endian";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub dim: usize,
    pub halfwidth: f64,
    pub spacing: f64,
    pub points_per_axis: usize,
}

impl GridHeader {
    pub fn of(g: &Grid) -> GridHeader {
        GridHeader { dim: g.dim(), halfwidth: g.halfwidth(), spacing: g.spacing(), points_per_axis: g.points_per_axis() }
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = Grid::with_steps(self.dim, (self.points_per_axis - 1) / 2, self.spacing)?;
        if g.points_per_axis() != self.points_per_axis || (g.halfwidth() - self.halfwidth).abs() > 1e-9 * self.halfwidth {
            return Err(Error::Format("grid header is inconsistent".into()));
        }
        Ok(g)
    }
}

/// Header of a stored grid function or critical-radius field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub grid: GridHeader,
    pub layout: String,
    pub dtype: String,
    /// Payload file, relative to the header.
    pub data: String,
    /// Bit pattern of the `rho = +inf` sentinel, for critical-radius fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infinite_sentinel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_options: Option<RhoOptions>,
}

/// Header of a stored half-space field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceHeader {
    pub format: String,
    pub version: u32,
    pub grid: GridHeader,
    pub layout: String,
    pub dtype: String,
    pub data: String,
    pub channels: Vec<Channel>,
    /// The `t` ladder; slices are stored in this order.
    pub ladder: Vec<f64>,
}

pub fn encode_values(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn decode_values(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("payload of {} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn header(format: &str, g: &Grid, data: &str) -> FieldHeader {
    FieldHeader {
        format: format.into(),
        version: 1,
        grid: GridHeader::of(g),
        layout: LAYOUT.into(),
        dtype: DTYPE.into(),
        data: data.into(),
        infinite_sentinel: None,
        rho_options: None,
    }
}

fn bin_name(stem: &str) -> String {
    format!("{stem}.bin")
}

/// Header text and payload of a grid function whose payload is `stem.bin`.
pub fn encode_grid_function(f: &GridFunction, stem: &str) -> Result<(String, Vec<u8>)> {
    let h = header("oscillab.grid_function", f.grid(), &bin_name(stem));
    Ok((serde_json::to_string_pretty(&h)?, encode_values(f.values())))
}

pub fn write_grid_function(dir: &Path, stem: &str, f: &GridFunction) -> Result<PathBuf> {
    let (h, b) = encode_grid_function(f, stem)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(bin_name(stem)), b)?;
    let p = dir.join(format!("{stem}.json"));
    fs::write(&p, h)?;
    Ok(p)
}

fn load(header_path: &Path, expect: &str) -> Result<(FieldHeader, Vec<f64>)> {
    let h: FieldHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
    if h.format != expect {
        return Err(Error::Format(format!("expected format {expect}, found {}", h.format)));
    }
    if h.dtype != DTYPE || h.layout != LAYOUT {
        return Err(Error::Format(format!("unsupported dtype/layout {} / {}", h.dtype, h.layout)));
    }
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let v = decode_values(&fs::read(dir.join(&h.data))?)?;
    Ok((h, v))
}

pub fn read_grid_function(header_path: &Path) -> Result<GridFunction> {
    let (h, v) = load(header_path, "oscillab.grid_function")?;
    let g = h.grid.grid()?;
    if v.len() != g.len() {
        return Err(Error::Format(format!("payload has {} values, grid has {}", v.len(), g.len())));
    }
    GridFunction::new(g, v)
}

pub fn write_rho_field(dir: &Path, stem: &str, rho: &CriticalRadiusField) -> Result<PathBuf> {
    let mut h = header("oscillab.rho_field", rho.grid(), &bin_name(stem));
    h.infinite_sentinel = Some(format!("{RHO_INFINITE_BITS:#018x}"));
    h.rho_options = Some(rho.options);
    let v: Vec<f64> = rho
        .values()
        .iter()
        .map(|r| match r {
            Rho::Finite(x) => *x,
            Rho::Infinite => f64::from_bits(RHO_INFINITE_BITS),
        })
        .collect();
    fs::create_dir_all(dir)?;
    fs::write(dir.join(bin_name(stem)), encode_values(&v))?;
    let p = dir.join(format!("{stem}.json"));
    fs::write(&p, serde_json::to_string_pretty(&h)?)?;
    Ok(p)
}

pub fn read_rho_field(header_path: &Path) -> Result<CriticalRadiusField> {
    let (h, v) = load(header_path, "oscillab.rho_field")?;
    let g = h.grid.grid()?;
    if v.len() != g.len() {
        return Err(Error::Format("rho payload does not match the grid".into()));
    }
    let vals = v
        .into_iter()
        .map(|x| {
            if x.to_bits() == RHO_INFINITE_BITS {
                Ok(Rho::Infinite)
            } else if x.is_finite() && x > 0.0 {
                Ok(Rho::Finite(x))
            } else {
                Err(Error::Format(format!("invalid rho sample {x}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    CriticalRadiusField::from_values(g, vals, h.rho_options.unwrap_or_default())
}

pub fn encode_half_space(f: &HalfSpaceFunction, stem: &str) -> Result<(String, Vec<u8>)> {
    let h = HalfSpaceHeader {
        format: "oscillab.half_space".into(),
        version: 1,
        grid: GridHeader::of(f.grid()),
        layout: format!("channel, then t slice, then {LAYOUT}"),
        dtype: DTYPE.into(),
        data: bin_name(stem),
        channels: f.channels().to_vec(),
        ladder: f.ladder().points().to_vec(),
    };
    let mut bytes = Vec::new();
    for &c in f.channels() {
        bytes.extend(encode_values(f.block(c)?));
    }
    Ok((serde_json::to_string_pretty(&h)?, bytes))
}

pub fn write_half_space(dir: &Path, stem: &str, f: &HalfSpaceFunction) -> Result<PathBuf> {
    let (h, b) = encode_half_space(f, stem)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(bin_name(stem)), b)?;
    let p = dir.join(format!("{stem}.json"));
    fs::write(&p, h)?;
    Ok(p)
}

pub fn read_half_space(header_path: &Path) -> Result<HalfSpaceFunction> {
    let h: HalfSpaceHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
    if h.format != "oscillab.half_space" || h.dtype != DTYPE {
        return Err(Error::Format(format!("unsupported half-space file {}", h.format)));
    }
    let g = h.grid.grid()?;
    let ladder = TLadder::from_points(h.ladder.clone())?;
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let v = decode_values(&fs::read(dir.join(&h.data))?)?;
    let block = g.len() * ladder.len();
    if v.len() != block * h.channels.len() {
        return Err(Error::Format("half-space payload does not match its header".into()));
    }
    let data = v.chunks(block).map(|c| c.to_vec()).collect();
    HalfSpaceFunction::new(g, ladder, h.channels, data)
}

/// Minimal CSV writer for numeric tables.
pub fn csv_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

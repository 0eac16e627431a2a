//! File formats.
//!
//! * `F64F`: one text header line
//!   `F64F nx ny dx dy ox oy i_lo i_hi j_lo j_hi`, then `nx·ny`
//!   little-endian `f64` in node order `i·ny + j`.
//! * Medium: a line `TATM <json>` holding the optional analytic profile,
//!   then four `F64F` blocks for `c`, `g11`, `g22`, `q`.
//! * `TRC1`: a line `TRC1 nt nb dt`, a `GRID …` line with the same fields as
//!   `F64F`, the `nb × 2` node coordinates, then `(nt+1)·nb` values,
//!   time-major, all little-endian `f64`.
//! * PGM: binary 8-bit greyscale over Ω̄, min–max scaled, rows from top
//!   (largest y) down; the scale goes to a `.scale.json` sidecar.
//!
//! Every writer goes through [`write_atomic`].

use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TatError};
use crate::grid::{Grid, IndexRect, ScalarField};
use crate::medium::{Medium, Profile};
use crate::wave::{BoundaryTrace, TimeAxis};

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| TatError::Io(e.error))?;
    Ok(())
}

fn fmt_err(msg: impl Into<String>) -> TatError {
    TatError::Format(msg.into())
}

fn grid_fields(g: &Grid) -> String {
    let o = g.omega;
    format!("{} {} {} {} {} {} {} {} {} {}", g.nx, g.ny, g.dx, g.dy, g.origin[0], g.origin[1], o.i_lo, o.i_hi, o.j_lo, o.j_hi)
}

fn parse_grid(tokens: &[&str]) -> Result<Grid> {
    if tokens.len() != 10 {
        return Err(fmt_err(format!("grid header needs 10 fields, found {}", tokens.len())));
    }
    let u = |k: usize| tokens[k].parse::<usize>().map_err(|_| fmt_err(format!("bad integer '{}'", tokens[k])));
    let f = |k: usize| tokens[k].parse::<f64>().map_err(|_| fmt_err(format!("bad number '{}'", tokens[k])));
    Grid::new(u(0)?, u(1)?, f(2)?, f(3)?, [f(4)?, f(5)?], IndexRect::new(u(6)?, u(7)?, u(8)?, u(9)?))
}

fn read_line(r: &mut impl BufRead) -> Result<String> {
    let mut s = String::new();
    if r.read_line(&mut s)? == 0 {
        return Err(fmt_err("unexpected end of file"));
    }
    Ok(s.trim_end_matches('\n').to_string())
}

fn push_f64s(out: &mut Vec<u8>, v: &[f64]) {
    out.reserve(8 * v.len());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf).map_err(|_| fmt_err(format!("expected {n} values")))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub fn encode_field(f: &ScalarField) -> Vec<u8> {
    let mut out = format!("F64F {}\n", grid_fields(&f.grid)).into_bytes();
    push_f64s(&mut out, &f.values);
    out
}

pub fn decode_field(r: &mut impl BufRead) -> Result<ScalarField> {
    let line = read_line(r)?;
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.first() != Some(&"F64F") {
        return Err(fmt_err("missing F64F magic"));
    }
    let grid = parse_grid(&tokens[1..])?;
    let values = read_f64s(r, grid.len())?;
    ScalarField::from_values(&grid, values)
}

pub fn write_field(path: &Path, f: &ScalarField) -> Result<()> {
    write_atomic(path, &encode_field(f))
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    decode_field(&mut r)
}

#[derive(Serialize, Deserialize)]
struct MediumManifest {
    profile: Option<Profile>,
}

pub fn encode_medium(m: &Medium) -> Result<Vec<u8>> {
    let manifest = serde_json::to_string(&MediumManifest { profile: m.profile.clone() }).map_err(|e| fmt_err(e.to_string()))?;
    let mut out = format!("TATM {manifest}\n").into_bytes();
    for f in [&m.c, &m.g11, &m.g22, &m.q] {
        out.extend(encode_field(f));
    }
    Ok(out)
}

pub fn write_medium(path: &Path, m: &Medium) -> Result<()> {
    write_atomic(path, &encode_medium(m)?)
}

pub fn read_medium(path: &Path) -> Result<Medium> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let line = read_line(&mut r)?;
    let json = line.strip_prefix("TATM ").ok_or_else(|| fmt_err("missing TATM magic"))?;
    let manifest: MediumManifest = serde_json::from_str(json).map_err(|e| fmt_err(format!("medium manifest: {e}")))?;
    let c = decode_field(&mut r)?;
    let g11 = decode_field(&mut r)?;
    let g22 = decode_field(&mut r)?;
    let q = decode_field(&mut r)?;
    Medium::new(c, g11, g22, q, manifest.profile)
}

pub fn encode_trace(t: &BoundaryTrace) -> Vec<u8> {
    let mut out = format!("TRC1 {} {} {}\nGRID {}\n", t.time.nt, t.nb(), t.time.dt, grid_fields(&t.grid)).into_bytes();
    let coords: Vec<f64> = t.node_coords().into_iter().flat_map(|(x, y)| [x, y]).collect();
    push_f64s(&mut out, &coords);
    push_f64s(&mut out, &t.values);
    out
}

pub fn write_trace(path: &Path, t: &BoundaryTrace) -> Result<()> {
    write_atomic(path, &encode_trace(t))
}

pub fn read_trace(path: &Path) -> Result<BoundaryTrace> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let head = read_line(&mut r)?;
    let tokens: Vec<&str> = head.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "TRC1" {
        return Err(fmt_err("missing TRC1 header"));
    }
    let nt: usize = tokens[1].parse().map_err(|_| fmt_err("bad nt"))?;
    let nb: usize = tokens[2].parse().map_err(|_| fmt_err("bad nb"))?;
    let dt: f64 = tokens[3].parse().map_err(|_| fmt_err("bad dt"))?;
    if !(dt > 0.0 && dt.is_finite()) || nt == 0 {
        return Err(fmt_err("time axis must have positive step and at least one step"));
    }
    let gline = read_line(&mut r)?;
    let gt: Vec<&str> = gline.split_whitespace().collect();
    if gt.first() != Some(&"GRID") {
        return Err(fmt_err("missing GRID line"));
    }
    let grid = parse_grid(&gt[1..])?;
    let nodes = grid.boundary_nodes();
    if nodes.len() != nb {
        return Err(fmt_err(format!("trace lists {nb} nodes, grid has {}", nodes.len())));
    }
    let coords = read_f64s(&mut r, 2 * nb)?;
    for (b, &(i, j)) in nodes.iter().enumerate() {
        let (x, y) = grid.coords(i, j);
        if (coords[2 * b] - x).abs() > 1e-9 * (1.0 + x.abs()) || (coords[2 * b + 1] - y).abs() > 1e-9 * (1.0 + y.abs()) {
            return Err(fmt_err(format!("node table entry {b} does not match the grid")));
        }
    }
    let values = read_f64s(&mut r, (nt + 1) * nb)?;
    BoundaryTrace::from_values(&grid, TimeAxis { nt, dt }, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

/// Renders `f` over `rect` as an 8-bit PGM.
pub fn encode_pgm(f: &ScalarField, rect: &IndexRect) -> (Vec<u8>, PgmScale) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, j) in rect.iter() {
        lo = lo.min(f.at(i, j));
        hi = hi.max(f.at(i, j));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", rect.nx(), rect.ny()).into_bytes();
    for j in (rect.j_lo..=rect.j_hi).rev() {
        for i in rect.i_lo..=rect.i_hi {
            out.push(((f.at(i, j) - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    (out, PgmScale { min: lo, max: hi })
}

/// Writes `path` and `path.scale.json`.
pub fn write_pgm(path: &Path, f: &ScalarField, rect: &IndexRect) -> Result<()> {
    let (bytes, scale) = encode_pgm(f, rect);
    write_atomic(path, &bytes)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".scale.json");
    let json = serde_json::to_string(&scale).map_err(|e| fmt_err(e.to_string()))?;
    write_atomic(Path::new(&side), json.as_bytes())
}

/// Serializes each item as one JSON line.
pub fn json_lines<T: Serialize>(items: &[T]) -> Result<String> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).map_err(|e| fmt_err(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

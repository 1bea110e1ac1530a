//! Trajectory persistence.
//!
//! CSV: header `t,v_1,u_1,x_1,y_1,z_1,v_2,...`, one row per sample, floats in
//! shortest round-trip form.
//!
//! Binary (all little-endian):
//!
//! | offset | type | content |
//! |---|---|---|
//! | 0 | `[u8; 4]` | magic `CSTJ` |
//! | 4 | `u32` | format version (1) |
//! | 8 | `u32` | state dimension `d` |
//! | 12 | `u64` | sample count `n` |
//! | 20 | `f64 × n(1 + 2d)` | per sample: `t`, state, derivative |

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::Trajectory;
use crate::error::{Error, Result};

pub const BINARY_MAGIC: [u8; 4] = *b"CSTJ";
const BINARY_VERSION: u32 = 1;

fn header(dim: usize) -> String {
    let mut h = String::from("t");
    if dim.is_multiple_of(5) {
        for i in 1..=dim / 5 {
            for name in ["v", "u", "x", "y", "z"] {
                let _ = write!(h, ",{name}_{i}");
            }
        }
    } else {
        for j in 1..=dim {
            let _ = write!(h, ",q_{j}");
        }
    }
    h
}

pub fn write_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(traj.len() * (traj.dim + 1) * 20);
    out.push_str(&header(traj.dim));
    out.push('\n');
    for i in 0..traj.len() {
        let _ = write!(out, "{}", traj.times[i]);
        for v in traj.state(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a trajectory CSV back as `(times, states)`.
pub fn read_csv(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Argument("empty trajectory CSV".into()))??;
    let cols = head.split(',').count();
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
        let vals = vals.map_err(|e| Error::Argument(format!("row {}: {e}", n + 1)))?;
        if vals.len() != cols {
            return Err(Error::Argument(format!("row {} has {} columns, expected {cols}", n + 1, vals.len())));
        }
        times.push(vals[0]);
        states.push(vals[1..].to_vec());
    }
    Ok((times, states))
}

pub fn write_binary(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + traj.len() * (1 + 2 * traj.dim) * 8);
    buf.extend_from_slice(&BINARY_MAGIC);
    buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    buf.extend_from_slice(&(traj.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(traj.len() as u64).to_le_bytes());
    for i in 0..traj.len() {
        buf.extend_from_slice(&traj.times[i].to_le_bytes());
        for v in traj.state(i).iter().chain(traj.deriv(i)) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<Trajectory> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 20 || buf[0..4] != BINARY_MAGIC {
        return Err(Error::Argument("not a trajectory cache (bad magic)".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(Error::Argument(format!("unsupported cache version {version}")));
    }
    let dim = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
    let expected = 20 + n * (1 + 2 * dim) * 8;
    if buf.len() != expected {
        return Err(Error::Argument(format!("cache has {} bytes, expected {expected}", buf.len())));
    }
    let mut vals = buf[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut times = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n * dim);
    let mut derivs = Vec::with_capacity(n * dim);
    for _ in 0..n {
        times.push(vals.next().unwrap());
        states.extend(vals.by_ref().take(dim));
        derivs.extend(vals.by_ref().take(dim));
    }
    Trajectory::from_samples(dim, times, states, derivs)
}

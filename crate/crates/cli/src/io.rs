//! Raw little-endian volumes, index files and the ε sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use qaint_core::{Dims, Lattice, QuantizedField, ScalarGrid};

use crate::error::{CliError, CliResult};

pub fn parse_dims(text: &str) -> CliResult<Dims> {
    let extents = parse_list::<usize>(text, "dims")?;
    Ok(Dims::new(&extents)?)
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad {what} entry '{s}' in '{text}'")))
        })
        .collect()
}

fn read_exact(path: &Path, dims: Dims, width: usize) -> CliResult<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let expected = dims.len() * width;
    if bytes.len() != expected {
        return Err(CliError::Usage(format!(
            "{}: {} bytes, but dims {dims} need {expected}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

pub fn read_volume(path: &Path, dims: Dims) -> CliResult<ScalarGrid> {
    let values = read_exact(path, dims, 4)?
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(Lattice::from_values(dims, values)?)
}

pub fn write_volume(path: &Path, values: &[f32]) -> CliResult<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Rounds each value to the nearest `f32`.
pub fn narrow(grid: &ScalarGrid) -> Vec<f32> {
    grid.as_slice().iter().map(|&v| v as f32).collect()
}

pub fn widen(values: &[f32], dims: Dims) -> CliResult<ScalarGrid> {
    Ok(Lattice::from_values(
        dims,
        values.iter().map(|&v| f64::from(v)).collect(),
    )?)
}

pub fn read_indices(path: &Path, dims: Dims, eps_abs: f64) -> CliResult<QuantizedField> {
    let indices = read_exact(path, dims, 4)?
        .chunks_exact(4)
        .map(|c| i64::from(i32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(QuantizedField::new(dims, indices, eps_abs)?)
}

pub fn write_indices(path: &Path, q: &QuantizedField) -> CliResult<()> {
    let mut bytes = Vec::with_capacity(q.indices().len() * 4);
    for (i, &v) in q.indices().iter().enumerate() {
        let v = i32::try_from(v).map_err(|_| {
            CliError::Usage(format!(
                "index {v} at voxel {i} does not fit in 32 bits; use a larger error bound"
            ))
        })?;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn sidecar_path(q_path: &Path) -> PathBuf {
    let mut name = q_path.as_os_str().to_owned();
    name.push(".eps");
    PathBuf::from(name)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sidecar {
    pub eps_abs: f64,
    pub dims: Dims,
}

pub fn write_sidecar(path: &Path, side: &Sidecar) -> CliResult<()> {
    let dims: Vec<String> = side.dims.shape().iter().map(|n| n.to_string()).collect();
    let text = format!("eps_abs={}\ndims={}\n", side.eps_abs, dims.join(","));
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_sidecar(path: &Path) -> CliResult<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (mut eps_abs, mut dims) = (None, None);
    for line in text.lines() {
        match line.split_once('=') {
            Some(("eps_abs", v)) => {
                eps_abs = Some(v.trim().parse::<f64>().map_err(|_| {
                    CliError::Usage(format!("{}: bad eps_abs '{v}'", path.display()))
                })?)
            }
            Some(("dims", v)) => dims = Some(parse_dims(v.trim())?),
            _ => {}
        }
    }
    match (eps_abs, dims) {
        (Some(eps_abs), Some(dims)) => Ok(Sidecar { eps_abs, dims }),
        _ => Err(CliError::Usage(format!(
            "{}: sidecar needs eps_abs and dims",
            path.display()
        ))),
    }
}

/// `%.9g`-style rendering; infinities print as `inf`.
pub fn fmt_g9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

//! CSV and JSON readers/writers for the external file formats.
//!
//! CSV files are comma-separated with a mandatory header row, `.` decimal
//! point, and `#`-prefixed comment lines ignored. Map files are row-major
//! with pixel centers in µm; positions are taken relative to the first
//! pixel. Values are written with Rust's shortest-roundtrip float
//! formatting, so re-reading a written file reproduces it bit-for-bit.

use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::coop::{CoopInputs, CoopRow};
use crate::dipole::Dipole;
use crate::grid::{FieldMap, Grid};
use crate::mech::TimeSeries;
use crate::register::DetuningProfile;
use crate::spinmodel::{EsrMap, EsrPair};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const ESR_MAP_HEADER: &str = "x_um,y_um,f_minus_hz,f_plus_hz,valid";
pub const FIELD_MAP_HEADER: &str = "x_um,y_um,bz_tesla,valid";
pub const FIELD_MAP_HEADER_GAUSS: &str = "x_um,y_um,bz_gauss,valid";
pub const GRADIENT_MAP_HEADER: &str = "x_um,y_um,grad_t_per_m";
pub const PSD_HEADER: &str = "freq_hz,psd_m2_per_hz";
pub const RINGDOWN_HEADER: &str = "t_s,amplitude_m";
pub const ECHO_HEADER: &str = "tau_s,contrast";
pub const PROFILE_HEADER: &str = "t_s,delta_e_hz";
pub const SCAN_HEADER: &str = "x,contrast";
pub const COOP_ROWS_HEADER: &str = "label,lambda_over_2pi_hz,t2_s,n_kappa_over_2pi_hz";
pub const COOP_TABLE_HEADER: &str = "label,lambda_over_2pi_hz,t2_s,n_kappa_over_2pi_hz,cooperativity";

/// Shortest-roundtrip float formatting, switching to exponent notation
/// outside [1e-4, 1e16) so tiny SI quantities stay readable. Lossless under
/// `str::parse::<f64>()`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs();
    if (1e-4..1e16).contains(&mag) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn data_lines<R: Read>(reader: R) -> Result<Vec<String>, IoError> {
    let mut lines = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push(trimmed.to_string());
    }
    Ok(lines)
}

fn expect_header(lines: &[String], candidates: &[&str]) -> Result<usize, IoError> {
    let Some(first) = lines.first() else {
        return Err(IoError::Format("empty file".into()));
    };
    candidates
        .iter()
        .position(|&h| h == first)
        .ok_or_else(|| {
            IoError::Format(format!(
                "unexpected header {first:?}, expected one of {candidates:?}"
            ))
        })
}

fn parse_f64(field: &str, line: &str) -> Result<f64, IoError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| IoError::Format(format!("bad number {field:?} in line {line:?}")))
}

fn parse_flag(field: &str, line: &str) -> Result<bool, IoError> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(IoError::Format(format!("bad valid flag {other:?} in line {line:?}"))),
    }
}

struct MapRows<T> {
    rows: Vec<(f64, f64, T, bool)>,
}

impl<T: Copy> MapRows<T> {
    // Reconstruct the grid: distinct sorted coordinates must form a uniform
    // lattice covering every row exactly once.
    fn into_grid(self) -> Result<Grid<T>, IoError> {
        let mut xs: Vec<f64> = self.rows.iter().map(|r| r.0).collect();
        let mut ys: Vec<f64> = self.rows.iter().map(|r| r.1).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.dedup();
        let (nx, ny) = (xs.len(), ys.len());
        if nx < 2 || ny < 2 {
            return Err(IoError::Format(format!("map must be at least 2x2, got {nx}x{ny}")));
        }
        if self.rows.len() != nx * ny {
            return Err(IoError::Format(format!(
                "{} rows do not fill a {nx}x{ny} grid",
                self.rows.len()
            )));
        }
        let pitch_um = xs[1] - xs[0];
        let check_uniform = |vals: &[f64], axis: &str| -> Result<(), IoError> {
            for w in vals.windows(2) {
                if ((w[1] - w[0]) - pitch_um).abs() > 1e-6 * pitch_um {
                    return Err(IoError::Format(format!("non-uniform {axis} spacing")));
                }
            }
            Ok(())
        };
        check_uniform(&xs, "x")?;
        check_uniform(&ys, "y")?;

        let index = |v: f64, origin: f64| -> usize {
            ((v - origin) / pitch_um).round() as usize
        };
        let mut data: Vec<Option<(T, bool)>> = vec![None; nx * ny];
        for (x, y, value, valid) in self.rows {
            let ix = index(x, xs[0]);
            let iy = index(y, ys[0]);
            let slot = &mut data[iy * nx + ix];
            if slot.is_some() {
                return Err(IoError::Format(format!("duplicate pixel at ({x}, {y}) um")));
            }
            *slot = Some((value, valid));
        }
        let mut values = Vec::with_capacity(nx * ny);
        let mut mask = Vec::with_capacity(nx * ny);
        for slot in data {
            let (v, m) = slot.ok_or_else(|| IoError::Format("missing pixel in grid".into()))?;
            values.push(v);
            mask.push(m);
        }
        Grid::new(nx, ny, pitch_um * 1e-6, values, mask)
            .map_err(|e| IoError::Format(e.to_string()))
    }
}

/// Read an ESR map (`x_um,y_um,f_minus_hz,f_plus_hz,valid`).
pub fn read_esr_map<R: Read>(reader: R) -> Result<EsrMap, IoError> {
    let lines = data_lines(reader)?;
    expect_header(&lines, &[ESR_MAP_HEADER])?;
    let mut rows = Vec::with_capacity(lines.len() - 1);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(IoError::Format(format!("expected 5 fields in {line:?}")));
        }
        rows.push((
            parse_f64(fields[0], line)?,
            parse_f64(fields[1], line)?,
            EsrPair {
                f_minus_hz: parse_f64(fields[2], line)?,
                f_plus_hz: parse_f64(fields[3], line)?,
            },
            parse_flag(fields[4], line)?,
        ));
    }
    MapRows { rows }.into_grid()
}

pub fn write_esr_map<W: Write>(mut writer: W, map: &EsrMap) -> Result<(), IoError> {
    writeln!(writer, "{ESR_MAP_HEADER}")?;
    for (ix, iy, pair, valid) in map.iter() {
        let (x, y) = map.pos_m(ix, iy);
        writeln!(
            writer,
            "{},{},{},{},{}",
            fmt_num(x * 1e6),
            fmt_num(y * 1e6),
            fmt_num(pair.f_minus_hz),
            fmt_num(pair.f_plus_hz),
            valid as u8
        )?;
    }
    Ok(())
}

/// Read an axial-field map; the `bz_gauss` header variant is converted to
/// Tesla (1 G = 1e-4 T).
pub fn read_field_map<R: Read>(reader: R) -> Result<FieldMap, IoError> {
    let lines = data_lines(reader)?;
    let which = expect_header(&lines, &[FIELD_MAP_HEADER, FIELD_MAP_HEADER_GAUSS])?;
    let scale = if which == 1 { 1e-4 } else { 1.0 };
    let mut rows = Vec::with_capacity(lines.len() - 1);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(IoError::Format(format!("expected 4 fields in {line:?}")));
        }
        rows.push((
            parse_f64(fields[0], line)?,
            parse_f64(fields[1], line)?,
            parse_f64(fields[2], line)? * scale,
            parse_flag(fields[3], line)?,
        ));
    }
    MapRows { rows }.into_grid()
}

pub fn write_field_map<W: Write>(mut writer: W, map: &FieldMap) -> Result<(), IoError> {
    writeln!(writer, "{FIELD_MAP_HEADER}")?;
    for (ix, iy, bz, valid) in map.iter() {
        let (x, y) = map.pos_m(ix, iy);
        writeln!(
            writer,
            "{},{},{},{}",
            fmt_num(x * 1e6),
            fmt_num(y * 1e6),
            fmt_num(bz),
            valid as u8
        )?;
    }
    Ok(())
}

pub fn write_gradient_map<W: Write>(mut writer: W, map: &FieldMap) -> Result<(), IoError> {
    writeln!(writer, "{GRADIENT_MAP_HEADER}")?;
    for (ix, iy, g, _) in map.iter() {
        let (x, y) = map.pos_m(ix, iy);
        writeln!(writer, "{},{},{}", fmt_num(x * 1e6), fmt_num(y * 1e6), fmt_num(g))?;
    }
    Ok(())
}

fn read_two_columns<R: Read>(reader: R, header: &str) -> Result<(Vec<f64>, Vec<f64>), IoError> {
    let lines = data_lines(reader)?;
    expect_header(&lines, &[header])?;
    let mut a = Vec::with_capacity(lines.len() - 1);
    let mut b = Vec::with_capacity(lines.len() - 1);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(IoError::Format(format!("expected 2 fields in {line:?}")));
        }
        a.push(parse_f64(fields[0], line)?);
        b.push(parse_f64(fields[1], line)?);
    }
    Ok((a, b))
}

fn write_two_columns<W: Write>(
    mut writer: W,
    header: &str,
    xs: &[f64],
    ys: &[f64],
) -> Result<(), IoError> {
    writeln!(writer, "{header}")?;
    for (x, y) in xs.iter().zip(ys) {
        writeln!(writer, "{},{}", fmt_num(*x), fmt_num(*y))?;
    }
    Ok(())
}

pub fn read_psd<R: Read>(reader: R) -> Result<TimeSeries, IoError> {
    let (t, v) = read_two_columns(reader, PSD_HEADER)?;
    TimeSeries::new(t, v).map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_psd<W: Write>(writer: W, psd: &TimeSeries) -> Result<(), IoError> {
    write_two_columns(writer, PSD_HEADER, &psd.t, &psd.value)
}

pub fn read_ringdown<R: Read>(reader: R) -> Result<TimeSeries, IoError> {
    let (t, v) = read_two_columns(reader, RINGDOWN_HEADER)?;
    TimeSeries::new(t, v).map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_ringdown<W: Write>(writer: W, series: &TimeSeries) -> Result<(), IoError> {
    write_two_columns(writer, RINGDOWN_HEADER, &series.t, &series.value)
}

pub fn read_echo_curve<R: Read>(reader: R) -> Result<crate::echo::EchoCurve, IoError> {
    let (t, v) = read_two_columns(reader, ECHO_HEADER)?;
    crate::echo::EchoCurve::new(t, v).map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_echo_curve<W: Write>(writer: W, curve: &crate::echo::EchoCurve) -> Result<(), IoError> {
    write_two_columns(writer, ECHO_HEADER, &curve.tau_s, &curve.contrast)
}

/// Read a movement profile (`t_s,delta_e_hz`); the nuclear scaling γn/γe is
/// not part of the file and must come from configuration.
pub fn read_profile<R: Read>(
    reader: R,
    gamma_n_over_gamma_e: f64,
) -> Result<DetuningProfile, IoError> {
    let (t, d) = read_two_columns(reader, PROFILE_HEADER)?;
    DetuningProfile::new(t, d, gamma_n_over_gamma_e).map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_profile<W: Write>(writer: W, profile: &DetuningProfile) -> Result<(), IoError> {
    write_two_columns(writer, PROFILE_HEADER, profile.times_s(), profile.delta_e_hz())
}

pub fn write_scan<W: Write>(writer: W, xs: &[f64], contrast: &[f64]) -> Result<(), IoError> {
    write_two_columns(writer, SCAN_HEADER, xs, contrast)
}

/// Read comparison rows (`label,lambda_over_2pi_hz,t2_s,n_kappa_over_2pi_hz`).
pub fn read_coop_rows<R: Read>(reader: R) -> Result<Vec<CoopInputs>, IoError> {
    let lines = data_lines(reader)?;
    expect_header(&lines, &[COOP_ROWS_HEADER])?;
    let mut rows = Vec::with_capacity(lines.len() - 1);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(IoError::Format(format!("expected 4 fields in {line:?}")));
        }
        rows.push(
            CoopInputs::new(
                fields[0].trim(),
                parse_f64(fields[1], line)?,
                parse_f64(fields[2], line)?,
                parse_f64(fields[3], line)?,
            )
            .map_err(|e| IoError::Format(e.to_string()))?,
        );
    }
    Ok(rows)
}

pub fn write_coop_table<W: Write>(mut writer: W, rows: &[CoopRow]) -> Result<(), IoError> {
    writeln!(writer, "{COOP_TABLE_HEADER}")?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{},{}",
            row.inputs.label,
            fmt_num(row.inputs.lambda_over_2pi_hz),
            fmt_num(row.inputs.t2_s),
            fmt_num(row.inputs.n_kappa_over_2pi_hz),
            fmt_num(row.cooperativity)
        )?;
    }
    Ok(())
}

pub fn read_dipole_json<R: Read>(reader: R) -> Result<Dipole, IoError> {
    serde_json::from_reader(reader).map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_dipole_json<W: Write>(writer: W, dipole: &Dipole) -> Result<(), IoError> {
    serde_json::to_writer_pretty(writer, dipole).map_err(|e| IoError::Format(e.to_string()))
}

//! Text layout for space-time fields.
//!
//! ```text
//! n,m,nx,ny,nt,x_min,x_max,L,T
//! 1,1,3,3,3,0e0,1e0,1e0,1e0
//! ix,iy,it,re,im
//! 0,0,0,0e0,0e0
//! ...
//! ```
//!
//! Lists (`x_min`, `x_max`, and `ix`/`iy` when `n` or `m` exceed 1) are joined
//! with `;`. Reals use Rust's shortest round-trip `{:e}` form. Rows follow the
//! storage order: the first x index varies fastest, then the y indices, then `it`.

use std::fmt::Write as _;

use uhs_core::{Complex64, ComplexField, GridSpec};

use crate::error::{LabError, Result};

pub const GRID_HEADER: &str = "n,m,nx,ny,nt,x_min,x_max,L,T";
pub const ROW_HEADER: &str = "ix,iy,it,re,im";

fn join_reals(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";")
}

fn join_indices(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_field(u: &ComplexField) -> String {
    let g = u.grid();
    let (n, m) = (g.n(), g.m());
    let mut out = String::with_capacity(32 * u.values().len() + 128);
    writeln!(out, "{GRID_HEADER}").unwrap();
    writeln!(
        out,
        "{n},{m},{},{},{},{},{},{:e},{:e}",
        g.nx(),
        g.ny(),
        g.nt(),
        join_reals(g.x_min()),
        join_reals(g.x_max()),
        g.half_width(),
        g.horizon()
    )
    .unwrap();
    writeln!(out, "{ROW_HEADER}").unwrap();
    let mut ix = vec![0usize; n];
    let mut iy = vec![0usize; m];
    let mut it = 0usize;
    for v in u.values() {
        writeln!(out, "{},{},{it},{:e},{:e}", join_indices(&ix), join_indices(&iy), v.re, v.im).unwrap();
        // Advance the multi-index, first x axis fastest.
        let mut carry = true;
        for k in ix.iter_mut() {
            *k += 1;
            if *k < g.nx() {
                carry = false;
                break;
            }
            *k = 0;
        }
        if carry {
            for k in iy.iter_mut() {
                *k += 1;
                if *k < g.ny() {
                    carry = false;
                    break;
                }
                *k = 0;
            }
        }
        if carry {
            it += 1;
        }
    }
    out
}

fn bad(line: usize, msg: impl Into<String>) -> LabError {
    LabError::Validation(format!("field line {line}: {}", msg.into()))
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| bad(line, format!("expected an integer, got {s:?}")))
}

fn parse_real(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| bad(line, format!("expected a real, got {s:?}")))
}

fn parse_list<T>(s: &str, line: usize, f: impl Fn(&str, usize) -> Result<T>) -> Result<Vec<T>> {
    s.split(';').map(|p| f(p, line)).collect()
}

/// Parses [`write_field`] output; every row must appear in storage order.
pub fn read_field(text: &str, label: &str) -> Result<ComplexField> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| LabError::Validation(format!("field: missing {what}")));
    let (k, header) = next("grid header")?;
    if header != GRID_HEADER {
        return Err(bad(k, format!("expected {GRID_HEADER:?}")));
    }
    let (k, values) = next("grid values")?;
    let cols: Vec<&str> = values.split(',').collect();
    if cols.len() != 9 {
        return Err(bad(k, format!("expected 9 columns, got {}", cols.len())));
    }
    let (n, m) = (parse_usize(cols[0], k)?, parse_usize(cols[1], k)?);
    let (nx, ny, nt) = (parse_usize(cols[2], k)?, parse_usize(cols[3], k)?, parse_usize(cols[4], k)?);
    let x_min = parse_list(cols[5], k, parse_real)?;
    let x_max = parse_list(cols[6], k, parse_real)?;
    if x_min.len() != n || x_max.len() != n {
        return Err(bad(k, format!("x extents do not have n = {n} entries")));
    }
    let grid = GridSpec::new(x_min, x_max, m, parse_real(cols[7], k)?, parse_real(cols[8], k)?, nx, ny, nt)?;
    let (k, header) = next("row header")?;
    if header != ROW_HEADER {
        return Err(bad(k, format!("expected {ROW_HEADER:?}")));
    }
    let total = grid.len();
    let mut values = Vec::with_capacity(total);
    for (k, row) in lines {
        if row.is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(k, format!("expected 5 columns, got {}", cols.len())));
        }
        let ix = parse_list(cols[0], k, parse_usize)?;
        let iy = parse_list(cols[1], k, parse_usize)?;
        let it = parse_usize(cols[2], k)?;
        if ix.len() != n || iy.len() != m {
            return Err(bad(k, "index lists do not match n and m"));
        }
        let flat = storage_index(&grid, &ix, &iy, it).ok_or_else(|| bad(k, "index out of range"))?;
        if flat != values.len() {
            return Err(bad(k, format!("row out of storage order (index {flat}, expected {})", values.len())));
        }
        values.push(Complex64::new(parse_real(cols[3], k)?, parse_real(cols[4], k)?));
    }
    if values.len() != total {
        return Err(LabError::Validation(format!("field: {} rows, expected {total}", values.len())));
    }
    Ok(ComplexField::from_values(&grid, values, label)?)
}

fn storage_index(grid: &GridSpec, ix: &[usize], iy: &[usize], it: usize) -> Option<usize> {
    let mut flat = 0usize;
    let mut stride = 1usize;
    for &i in ix {
        if i >= grid.nx() {
            return None;
        }
        flat += i * stride;
        stride *= grid.nx();
    }
    for &j in iy {
        if j >= grid.ny() {
            return None;
        }
        flat += j * stride;
        stride *= grid.ny();
    }
    if it >= grid.nt() {
        return None;
    }
    Some(flat + it * stride)
}

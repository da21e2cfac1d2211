use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quantizer::grid::Grid;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: format!("not a number: {s:?}"),
    })
}

pub(crate) fn parse_usize(s: &str, path: &Path, line: usize) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: format!("not an index: {s:?}"),
    })
}

pub(crate) fn parse_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Grid CSV: header `index,coord_1,...,coord_q,weight`, 0-based indices; an
/// empty weight column means the grid carries no weights.
pub fn grid_to_csv(grid: &Grid) -> String {
    let mut s = String::from("index");
    for c in 1..=grid.dim() {
        let _ = write!(s, ",coord_{c}");
    }
    s.push_str(",weight\n");
    for (i, p) in grid.points().enumerate() {
        let _ = write!(s, "{i}");
        for v in p {
            let _ = write!(s, ",{}", fmt_f64(*v));
        }
        match grid.weights() {
            Some(w) => {
                let _ = writeln!(s, ",{}", fmt_f64(w[i]));
            }
            None => s.push_str(",\n"),
        }
    }
    s
}

pub fn write_grid_csv(path: &Path, grid: &Grid) -> Result<()> {
    write_atomic(path, &grid_to_csv(grid))
}

pub fn read_grid_csv(path: &Path) -> Result<Grid> {
    grid_from_csv(&read_to_string(path)?, path)
}

pub(crate) fn grid_from_csv(text: &str, path: &Path) -> Result<Grid> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let dim = cols.len().saturating_sub(2);
    let expected: Vec<String> = std::iter::once("index".to_string())
        .chain((1..=dim).map(|c| format!("coord_{c}")))
        .chain(std::iter::once("weight".to_string()))
        .collect();
    if dim == 0 || cols != expected {
        return Err(parse_err(path, 1, format!("unexpected header {header:?}")));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut any_missing = false;
    for (ln, line) in lines {
        let line_no = ln + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != dim + 2 {
            return Err(parse_err(path, line_no, format!("expected {} fields", dim + 2)));
        }
        let idx = parse_usize(f[0], path, line_no)?;
        if idx != weights.len() {
            return Err(parse_err(path, line_no, format!("index {idx} out of sequence")));
        }
        for v in &f[1..=dim] {
            points.push(parse_f64(v, path, line_no)?);
        }
        if f[dim + 1].trim().is_empty() {
            any_missing = true;
            weights.push(0.0);
        } else {
            weights.push(parse_f64(f[dim + 1], path, line_no)?);
        }
    }
    let grid = Grid::new(dim, points).map_err(|e| parse_err(path, 0, e.to_string()))?;
    if any_missing {
        return Ok(grid);
    }
    let mut grid = grid;
    grid.set_weights_unchecked(weights);
    Ok(grid)
}

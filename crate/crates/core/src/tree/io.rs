use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quantizer::io::{fmt_f64, grid_from_csv, grid_to_csv, parse_err, parse_f64, parse_usize, read_to_string, write_atomic};
use crate::tree::{Matrix, NoiseMoments, QuantizationTree, TreeMeta};

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn meta_text(tree: &QuantizationTree) -> String {
    let m = tree.meta();
    let mut s = String::new();
    let _ = writeln!(s, "method={}", m.method);
    let _ = writeln!(s, "model={}", m.model);
    let _ = writeln!(s, "n={}", tree.steps());
    let _ = writeln!(s, "sizes={}", join(tree.sizes()));
    let _ = writeln!(s, "dim={}", tree.dim());
    let _ = writeln!(s, "noise_dim={}", tree.noise_dim());
    let _ = writeln!(s, "dt={}", fmt_f64(tree.dt()));
    let _ = writeln!(s, "horizon={}", fmt_f64(tree.dt() * tree.steps() as f64));
    let _ = writeln!(s, "seed={}", m.seed);
    let _ = writeln!(s, "quad_legendre={}", m.legendre_order);
    let _ = writeln!(s, "quad_laguerre={}", m.laguerre_order);
    let _ = writeln!(s, "transition_mode={}", m.transition_mode);
    let _ = writeln!(s, "mc_paths={}", m.mc_paths);
    let _ = writeln!(s, "noise_grid_size={}", m.noise_grid_size);
    let _ = writeln!(s, "unconverged_steps={}", join(&m.unconverged_steps));
    let _ = writeln!(s, "unvisited_rows={}", join(m.unvisited_rows.iter().map(|(k, i)| format!("{k}:{i}"))));
    for w in &m.warnings {
        let _ = writeln!(s, "warning={}", w.replace('\n', " "));
    }
    s
}

/// Writes `meta`, `grid_k.csv`, `trans_k.csv` and `pi_k.csv` into `dir`.
/// Only nonzero transition and noise entries are stored.
pub fn save_tree(tree: &QuantizationTree, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("meta"), &meta_text(tree))?;
    for (k, g) in tree.grids().iter().enumerate() {
        write_atomic(&dir.join(format!("grid_{k}.csv")), &grid_to_csv(g))?;
    }
    let q = tree.noise_dim();
    for k in 0..tree.steps() {
        let t = tree.transition(k);
        let mut s = String::from("i,j,p\n");
        for i in 0..t.rows() {
            for (j, &p) in t.row(i).iter().enumerate() {
                if p != 0.0 {
                    let _ = writeln!(s, "{i},{j},{}", fmt_f64(p));
                }
            }
        }
        write_atomic(&dir.join(format!("trans_{k}.csv")), &s)?;
        let m = tree.noise_moment(k);
        let mut s = String::from("i,j");
        for r in 1..=q {
            let _ = write!(s, ",pi_{r}");
        }
        s.push('\n');
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m.get(i, j);
                if v.iter().any(|&x| x != 0.0) {
                    let _ = write!(s, "{i},{j}");
                    for x in v {
                        let _ = write!(s, ",{}", fmt_f64(*x));
                    }
                    s.push('\n');
                }
            }
        }
        write_atomic(&dir.join(format!("pi_{k}.csv")), &s)?;
    }
    Ok(())
}

fn parse_meta(path: &Path) -> Result<(BTreeMap<String, String>, Vec<String>)> {
    let text = read_to_string(path)?;
    let mut map = BTreeMap::new();
    let mut warnings = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, ln + 1, format!("expected key=value, got {line:?}")))?;
        if k == "warning" {
            warnings.push(v.to_string());
        } else {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok((map, warnings))
}

fn list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(f).collect()
}

/// Reads a tree written by [`save_tree`].
pub fn load_tree(dir: &Path) -> Result<QuantizationTree> {
    let mpath = dir.join("meta");
    let (map, warnings) = parse_meta(&mpath)?;
    let get = |k: &str| {
        map.get(k)
            .map(String::as_str)
            .ok_or_else(|| parse_err(&mpath, 0, format!("missing key {k}")))
    };
    let num = |k: &str| parse_usize(get(k)?, &mpath, 0);
    let n = num("n")?;
    let q = num("noise_dim")?;
    let dt = parse_f64(get("dt")?, &mpath, 0)?;
    let meta = TreeMeta {
        method: get("method")?.to_string(),
        model: get("model")?.to_string(),
        seed: get("seed")?
            .parse()
            .map_err(|_| parse_err(&mpath, 0, "seed is not an integer"))?,
        legendre_order: num("quad_legendre")?,
        laguerre_order: num("quad_laguerre")?,
        transition_mode: get("transition_mode")?.to_string(),
        mc_paths: num("mc_paths")?,
        noise_grid_size: num("noise_grid_size")?,
        unconverged_steps: list(get("unconverged_steps")?, |s| parse_usize(s, &mpath, 0))?,
        unvisited_rows: list(get("unvisited_rows")?, |s| {
            let (k, i) = s
                .split_once(':')
                .ok_or_else(|| parse_err(&mpath, 0, format!("bad row reference {s:?}")))?;
            Ok((parse_usize(k, &mpath, 0)?, parse_usize(i, &mpath, 0)?))
        })?,
        warnings,
    };
    let mut grids = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let p = dir.join(format!("grid_{k}.csv"));
        grids.push(grid_from_csv(&read_to_string(&p)?, &p)?);
    }
    let mut transitions = Vec::with_capacity(n);
    let mut moments = Vec::with_capacity(n);
    for k in 0..n {
        let (rows, cols) = (grids[k].len(), grids[k + 1].len());
        let p = dir.join(format!("trans_{k}.csv"));
        let mut t = Matrix::zeros(rows, cols);
        for (ln, line) in read_to_string(&p)?.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(parse_err(&p, ln + 1, "expected i,j,p"));
            }
            let (i, j) = (parse_usize(f[0], &p, ln + 1)?, parse_usize(f[1], &p, ln + 1)?);
            if i >= rows || j >= cols {
                return Err(parse_err(&p, ln + 1, format!("entry ({i}, {j}) outside {rows} x {cols}")));
            }
            t.row_mut(i)[j] = parse_f64(f[2], &p, ln + 1)?;
        }
        let p = dir.join(format!("pi_{k}.csv"));
        let mut m = NoiseMoments::zeros(rows, cols, q);
        for (ln, line) in read_to_string(&p)?.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 2 + q {
                return Err(parse_err(&p, ln + 1, format!("expected {} fields", 2 + q)));
            }
            let (i, j) = (parse_usize(f[0], &p, ln + 1)?, parse_usize(f[1], &p, ln + 1)?);
            if i >= rows || j >= cols {
                return Err(parse_err(&p, ln + 1, format!("entry ({i}, {j}) outside {rows} x {cols}")));
            }
            for (r, v) in f[2..].iter().enumerate() {
                m.get_mut(i, j)[r] = parse_f64(v, &p, ln + 1)?;
            }
        }
        transitions.push(t);
        moments.push(m);
    }
    QuantizationTree::new(dt, q, grids, transitions, moments, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{EulerModel, ModelKind};
    use crate::tree::{build_recursive_tree_1d, BuildConfig};

    #[test]
    fn round_trip_is_exact() {
        let m = EulerModel::new(ModelKind::BlackScholesEuler { mu: 0.05, sigma: 0.2 }, 0.25, 3, vec![100.0]).unwrap();
        let t = build_recursive_tree_1d(&m, &[5, 7, 9], &BuildConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_tree(&t, dir.path()).unwrap();
        let back = load_tree(dir.path()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_tree(dir.path()).unwrap_err().category(), "io");
    }
}

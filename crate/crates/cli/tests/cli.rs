use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quantree"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn price_line(o: &Output) -> String {
    stdout(o).lines().find(|l| l.starts_with("price=")).unwrap().to_string()
}

#[test]
fn price_bidask_rq() {
    let cfg = config("bidask_bs.cfg");
    let o = run(&["price", "--config", cfg.to_str().unwrap(), "--method", "rq"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p: f64 = price_line(&o)["price=".len()..].parse().unwrap();
    assert!(price_line(&o).starts_with("price=4.7"), "{}", stdout(&o));
    assert!((p - 4.719).abs() <= 0.05);
    assert!(stdout(&o).contains("driver_calls="));
}

#[test]
fn saved_tree_prices_identically() {
    let cfg = config("bidask_bs.cfg");
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree");
    let small = ["--set", "grid_size=40", "--set", "n_steps=8"];
    let mut args = vec!["build-tree", "--config", cfg.to_str().unwrap(), "--method", "grq", "--out", tree.to_str().unwrap()];
    args.extend(small);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tree.join("meta").exists() && tree.join("trans_7.csv").exists());

    let mut direct = vec!["price", "--config", cfg.to_str().unwrap(), "--method", "grq"];
    direct.extend(small);
    let a = run(&direct);
    let mut loaded = vec!["price", "--config", cfg.to_str().unwrap(), "--tree", tree.to_str().unwrap()];
    loaded.extend(small);
    let b = run(&loaded);
    assert!(a.status.success() && b.status.success(), "{}{}", stderr(&a), stderr(&b));
    assert_eq!(price_line(&a), price_line(&b));
}

#[test]
fn solution_csv_has_every_node() {
    let cfg = config("european_bs.cfg");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.csv");
    let o = run(&[
        "price", "--config", cfg.to_str().unwrap(), "--method", "rq", "--set", "grid_size=10", "--set", "n_steps=3",
        "--solution", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "k,i,x_1,y,z_1");
    assert_eq!(lines.count(), 1 + 10 * 3);
}

#[test]
fn missing_model_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "sigma = 0.2\nT = 1\nn_steps = 2\nx0 = 100\ngrid_size = 5\nstrike = 100\n").unwrap();
    let o = run(&["price", "--config", cfg.to_str().unwrap(), "--method", "rq"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.starts_with("error: invalid-argument: ") && e.contains("model"), "{e}");
}

#[test]
fn unknown_key_and_bad_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "model = bs_euler\nvolatility = 0.2\n").unwrap();
    let o = run(&["price", "--config", cfg.to_str().unwrap(), "--method", "rq"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("volatility"));

    let good = config("bidask_bs.cfg");
    let o = run(&["price", "--config", good.to_str().unwrap(), "--method", "xq"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["price", "--config", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["table", "--id", "t9", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: invalid-argument: "));
}

#[test]
fn numeric_failure_exits_1() {
    let cfg = config("bidask_bs.cfg");
    let o = run(&[
        "price", "--config", cfg.to_str().unwrap(), "--method", "hrq", "--set", "sigma=1e308", "--set", "noise_grid_size=10",
        "--set", "grid_size=5", "--set", "n_steps=2",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: numeric: "), "{}", stderr(&o));
}

#[test]
fn normal_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen-normal-grid", "--q", "1", "--size", "12", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("normal_q1_n12_s3.csv")).unwrap();
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn converge_reports_slope() {
    let cfg = config("bidask_bs.cfg");
    let o = run(&["converge", "--config", cfg.to_str().unwrap(), "--method", "rq", "--sizes", "10,20,30,40", "--set", "n_steps=5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.starts_with("N,y0,abs_error\n10,"));
    assert!(s.lines().any(|l| l.starts_with("slope=")));
}

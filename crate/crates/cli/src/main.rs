mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use quantree::harness::{convergence_study, reproduce_table, TableId};
use quantree::quantizer::io::fmt_f64;
use quantree::quantizer::NormalGridCache;
use quantree::tree::{load_tree, save_tree};
use quantree::{build_tree, solve_bdpp, BuildConfig, Error, Result, TreeMethod};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "quantree", version, about = "Quantization trees and reflected BSDE pricing")]
struct Cli {
    /// Worker threads (defaults to the `threads` config key, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a stationary quantizer of N(0, I_q) and store it as CSV.
    GenNormalGrid {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a quantization tree and save it to a directory.
    BuildTree {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
        /// Override a config entry, `key=value`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Price the configured problem, on a fresh tree or a saved one.
    Price {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Write the per-node solution as CSV.
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Price for a list of grid sizes and fit the log-log error slope.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Rerun one of the reference tables and write the comparison CSV.
    Table {
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        mc_paths: Option<usize>,
        #[arg(long)]
        grid_cache: Option<PathBuf>,
        /// Leave the timing columns empty.
        #[arg(long)]
        no_timings: bool,
    },
}

fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects key=value, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn method(s: &str) -> Result<TreeMethod> {
    s.parse()
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {n} threads: {e}")))?;
    }
    Ok(())
}

fn print_warnings(ws: &[String]) {
    for w in ws {
        println!("warning={w}");
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::GenNormalGrid { q, size, seed, out } => {
            set_threads(threads)?;
            let cache = NormalGridCache::new(&out);
            let path = cache.path_for(q, size, seed);
            let t0 = Instant::now();
            let grid = cache.get(q, size, seed)?;
            println!("path={}", path.display());
            println!("size={}", grid.len());
            println!("seconds={:.3}", t0.elapsed().as_secs_f64());
        }
        Command::BuildTree {
            config,
            method: m,
            out,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            set_threads(threads.or(cfg.threads()?))?;
            let model = cfg.model()?;
            let t0 = Instant::now();
            let tree = build_tree(&model, method(&m)?, &cfg.sizes(&model)?, &cfg.build_config()?)?;
            let secs = t0.elapsed().as_secs_f64();
            save_tree(&tree, &out)?;
            println!("method={}", tree.meta().method);
            println!("steps={}", tree.steps());
            println!("build_s={secs:.3}");
            println!("max_row_sum_error={}", fmt_f64(tree.max_row_sum_error()));
            println!("max_kolmogorov_error={}", fmt_f64(tree.max_kolmogorov_error()));
            print_warnings(&tree.meta().warnings);
        }
        Command::Price {
            config,
            method: m,
            tree,
            solution,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            set_threads(threads.or(cfg.threads()?))?;
            let model = cfg.model()?;
            let problem = cfg.problem(&model)?;
            let t0 = Instant::now();
            let tree = match (tree, m) {
                (Some(dir), _) => load_tree(&dir)?,
                (None, Some(m)) => build_tree(&model, method(&m)?, &cfg.sizes(&model)?, &cfg.build_config()?)?,
                (None, None) => return Err(Error::InvalidArgument("price needs --method or --tree".into())),
            };
            let build = t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let sol = solve_bdpp(&tree, &problem)?;
            let solve = t0.elapsed().as_secs_f64();
            if let Some(path) = solution {
                sol.write_csv(&tree, &path)?;
            }
            println!("method={}", tree.meta().method);
            println!("price={}", fmt_f64(sol.price));
            println!("build_s={build:.3}");
            println!("solve_s={solve:.3}");
            println!("driver_calls={}", sol.driver_calls);
            print_warnings(&tree.meta().warnings);
            print_warnings(&sol.warnings);
        }
        Command::Converge {
            config,
            method: m,
            sizes,
            out,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            set_threads(threads.or(cfg.threads()?))?;
            let model = cfg.model()?;
            let problem = cfg.problem(&model)?;
            let study = convergence_study(&model, &problem, method(&m)?, &sizes, &cfg.build_config()?)?;
            let csv = study.to_csv();
            match out {
                Some(p) => std::fs::write(&p, &csv).map_err(|source| Error::Io { path: p, source })?,
                None => print!("{csv}"),
            }
            println!("reference={}", fmt_f64(study.reference));
            match study.slope {
                Some(s) => println!("slope={}", fmt_f64(s)),
                None => println!("slope=undefined"),
            }
        }
        Command::Table {
            id,
            out,
            seed,
            mc_paths,
            grid_cache,
            no_timings,
        } => {
            set_threads(threads)?;
            let id: TableId = id.parse()?;
            let d = BuildConfig::default();
            let cfg = BuildConfig {
                seed,
                mc_paths: mc_paths.unwrap_or(d.mc_paths),
                grid_cache,
                ..d
            };
            let res = reproduce_table(id, &cfg)?;
            res.write_csv(&out, !no_timings)?;
            let mut methods: Vec<&str> = Vec::new();
            for r in &res.rows {
                if !methods.contains(&r.method.as_str()) {
                    methods.push(&r.method);
                }
            }
            for m in methods {
                println!("mean_abs_error_{m}={:.4}", res.mean_abs_error(m));
            }
            println!("max_abs_error={:.4}", res.max_abs_error());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: invalid-argument: {first}");
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = match &e {
                Error::InvalidArgument(m) | Error::Numeric(m) => m.clone(),
                other => other.to_string(),
            };
            eprintln!("error: {}: {}", e.category(), detail.replace('\n', " "));
            match e {
                Error::InvalidArgument(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

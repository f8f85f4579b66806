use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use degenlab_cli::{run, RunOptions};

/// Numerical experiments for degenerate elliptic inverse problems.
#[derive(Parser, Debug)]
#[command(name = "degenlab", version, about)]
struct Args {
    /// Experiment or suite config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports and the run manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Do not read or write the DtN cache.
    #[arg(long)]
    no_cache: bool,
    /// Override the seed of every experiment.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let opts = RunOptions { out: args.out, cache: !args.no_cache, seed: args.seed, cache_dir: None };
    match run(&args.config, &opts) {
        Ok(m) => {
            for c in m.checks() {
                println!("{}", c.line());
            }
            println!("{} checks, {}", m.checks().count(), if m.passed { "all passed" } else { "FAILED" });
            ExitCode::from(if m.passed { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use torus_stokes::cli::{parse_config, parse_config_str, run, Overrides};

/// Compressible Stokes flow on the periodic torus.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// lagrangian, eulerian, uniqueness, pressure-check, bmo or full.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Write the reconstructed velocity at every node.
    #[arg(long)]
    dump_velocity: bool,
    /// Write the flow map at every node.
    #[arg(long)]
    dump_flow: bool,
    /// Seed for the random initial density.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let overrides = Overrides {
        mode: args.mode,
        out: args.out,
        workers: args.workers,
        seed: args.seed,
        dump_velocity: args.dump_velocity,
        dump_flow: args.dump_flow,
    };
    let cfg = match &args.config {
        Some(p) => parse_config(p, &overrides),
        None => parse_config_str("", Path::new("<command line>"), &overrides),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cfg) {
        Ok(out) => {
            if let Some(e) = &out.error {
                eprintln!("error: {e}");
            }
            println!("{}", out.manifest.display());
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lowreg::cli::{run_command, Command};
use lowreg::config::ExperimentConfig;

/// Chart-local curvature verification pipelines.
#[derive(Debug, Parser)]
#[command(name = "lowreg", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for CSV output.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Ok(v) = std::env::var("LOWREG_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global()
                {
                    eprintln!("error: cannot configure {k} threads: {e}");
                    return ExitCode::from(2);
                }
            }
            _ => {
                eprintln!("error: LOWREG_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let result = ExperimentConfig::from_path(&args.config)
        .and_then(|cfg| run_command(args.command, &cfg, &args.out));
    match result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", args.command);
            ExitCode::from(2)
        }
    }
}

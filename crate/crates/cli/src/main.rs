use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fv3::config::parse_config;
use fv3::runner;

#[derive(Parser)]
#[command(name = "fv3", version, about = "Third-order limited finite-volume workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write snapshots, errors and a manifest.
    Run {
        config: PathBuf,
        /// Output directory, overriding `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the `[convergence] sizes` ladder and write the error table.
    Convergence {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a configuration without running it.
    ValidateConfig { config: PathBuf },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("FV3_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FV3_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn load(path: &PathBuf) -> Result<fv3::config::RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match cli.command {
        Command::ValidateConfig { config } => match load(&config) {
            Ok(cfg) => {
                println!("{}: ok ({} on {:?})", config.display(), cfg.scenario.name(), cfg.grid);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Run { config, out } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let dir = runner::output_dir(&cfg, out.as_deref());
            match runner::run(&cfg, &dir) {
                Ok(o) => {
                    if let Some(f) = &o.failure {
                        eprintln!("solver failure at t = {}: {}", f.time, f.message);
                        return ExitCode::from(2);
                    }
                    match o.norms {
                        Some(n) => {
                            println!("t = {} after {} steps, L1 = {:.6e}, Linf = {:.6e}", o.t, o.steps, n.l1, n.linf)
                        }
                        None => println!("t = {} after {} steps", o.t, o.steps),
                    }
                    println!("output in {}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Convergence { config, out } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let dir = runner::output_dir(&cfg, out.as_deref());
            match runner::convergence(&cfg, &dir) {
                Ok(r) => {
                    print!("{}", r.to_csv());
                    println!("output in {}", dir.display());
                    if r.rows.iter().any(|r| r.failure.is_some()) {
                        ExitCode::from(2)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}

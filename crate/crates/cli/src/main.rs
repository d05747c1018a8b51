use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vlq_cli::catalog::catalog;
use vlq_cli::scenario::scenario_registry;
use vlq_cli::{load_config, run_scenario, KernelCache};

#[derive(Parser)]
#[command(name = "vlq", version, about = "Optimal control of singular Volterra equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file; exits 0 only if every check passes.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the built-in problems.
    ListProblems,
    /// Print the available scenarios.
    ListScenarios,
    /// Delete cached kernels (directory from VLQ_CACHE_DIR, default .vlq-cache).
    ClearCache,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_scenario(&cfg, &KernelCache::from_env()) {
                Ok(report) => {
                    print!("{}", report.summary());
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::ListProblems => {
            for (name, summary) in catalog().summaries() {
                println!("{name:<16} {summary}");
            }
            ExitCode::SUCCESS
        }
        Command::ListScenarios => {
            for (name, summary) in scenario_registry().summaries() {
                println!("{name:<18} {summary}");
            }
            ExitCode::SUCCESS
        }
        Command::ClearCache => {
            let cache = KernelCache::from_env();
            match cache.clear() {
                Ok(n) => {
                    println!("removed {n} cached kernels from {}", cache.dir().display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}

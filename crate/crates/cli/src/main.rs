use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jdfilter::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use jdfilter::model::zoo::ZOO;

const EXIT_TEST_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "jdfilter", version, about = "Filtering experiments for partially observed jump diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Directory that relative `output_dir` values resolve against.
        #[arg(long)]
        output_root: Option<PathBuf>,
    },
    /// Check a config and print its canonical form.
    Validate { config: PathBuf },
    /// List the built-in models and their parameters.
    ListModels,
    /// List the experiment kinds.
    ListExperiments,
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let raw = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    ExperimentConfig::from_toml(&raw).map_err(|errors| {
        for issue in &errors.0 {
            eprintln!("config error: {issue}");
        }
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, output_root } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_experiment(&cfg, output_root.as_deref()) {
                Ok(outcome) => {
                    for c in &outcome.manifest.checks {
                        println!("{:<4} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
                    }
                    println!("results in {}", outcome.dir.display());
                    if outcome.pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_TEST_FAILURE)
                    }
                }
                Err(e) if e.is_config() => {
                    eprintln!("config error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                print!("{}", cfg.canonical());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::ListModels => {
            for e in ZOO {
                let params: Vec<String> = e.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:<18} {}", e.name, e.summary);
                if !params.is_empty() {
                    println!("{:<18} params: {}", "", params.join(", "));
                }
            }
            ExitCode::SUCCESS
        }
        Command::ListExperiments => {
            for k in ExperimentKind::ALL {
                println!("{:<18} {}", k.name(), k.summary());
            }
            ExitCode::SUCCESS
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bouncy_cli::config::ExperimentConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bouncy", version, about = "Run bouncy particle sampler experiments from TOML configurations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its summary and tables.
    Run {
        config: PathBuf,
        /// Root seed, overriding the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of replicates, overriding the configuration.
        #[arg(long)]
        replicates: Option<usize>,
        /// Output directory (default: the configured one, else out/<kind>).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write the first replicate's path on a mesh of this spacing.
        #[arg(long)]
        mesh: Option<f64>,
        /// Also write the first replicate's event log.
        #[arg(long)]
        dump_events: bool,
    },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<(ExperimentConfig, String), ExitCode> {
    ExperimentConfig::load(path).map_err(|msg| {
        eprintln!("{msg}");
        ExitCode::from(2)
    })
}

fn report(path: &Path, config: &ExperimentConfig, source: &str) -> bool {
    let problems = config.problems(source);
    for p in &problems {
        eprintln!("{}:{}: {}: {}", path.display(), p.line, p.field, p.message);
    }
    problems.is_empty()
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config: path } => match load(&path) {
            Err(code) => code,
            Ok((config, source)) => {
                if report(&path, &config, &source) {
                    println!("ok");
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(2)
                }
            }
        },
        Command::Run {
            config: path,
            seed,
            replicates,
            out_dir,
            mesh,
            dump_events,
        } => {
            let (mut config, source) = match load(&path) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if !report(&path, &config, &source) {
                return ExitCode::from(2);
            }
            if seed.is_some() {
                config.seed = seed;
            }
            if replicates.is_some() {
                config.replicates = replicates;
            }
            if mesh.is_some() {
                config.mesh = mesh;
            }
            if dump_events {
                config.dump_events = Some(true);
            }
            if config.replicates() == 0 || config.mesh.is_some_and(|m| m.is_nan() || m <= 0.0) {
                eprintln!("--replicates must be positive and --mesh must be > 0");
                return ExitCode::from(2);
            }
            let kind = config.kind.name();
            let dir = out_dir
                .or_else(|| config.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(kind));
            let outcome = match bouncy_cli::run(&config) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::FAILURE;
                }
            };
            if let Err(e) = outcome.write(&dir, kind, config.seed(), config.replicates()) {
                eprintln!("error: {e:#}");
                return ExitCode::FAILURE;
            }
            for c in &outcome.checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {}", dir.display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

//! Command-line runner for Raker experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raker::experiment::{self, Algorithm, ExperimentConfig};
use raker::Error;

#[derive(Debug, Parser)]
#[command(
    name = "raker",
    version,
    about = "Online multi-kernel learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured algorithm and write per-slot telemetry.
    Run(Common),
    /// Write the configured data stream as CSV.
    Synth(Common),
    /// Compare one algorithm against the batch random-feature oracle.
    Regret {
        #[command(flatten)]
        common: Common,
        /// Algorithm to evaluate; defaults to the first configured one.
        #[arg(long)]
        algorithm: Option<String>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed, overriding `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        match err {
            Error::Config(msg) => Failure::Config(msg),
            Error::Runtime { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Singular
            | Error::NonFinite(_) => Failure::Runtime(err.to_string()),
            _ => Failure::Config(err.to_string()),
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let mut config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    // relative CSV paths are resolved against the config file
    if let experiment::StreamSource::Csv { path, .. } = &mut config.stream {
        if path.is_relative() {
            let base = common.config.parent().unwrap_or(Path::new("."));
            *path = base.join(&*path);
        }
    }
    config.validate()?;
    Ok(config)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(common) => {
            let config = load_config(&common)?;
            let output = experiment::run_experiment(&config)?;
            for row in &output.summary {
                println!(
                    "{:<14} {} = {:.6e}  ({:.3}s, median step {:.1}µs)",
                    row.algorithm,
                    row.metric,
                    row.final_metric,
                    row.wall_time_s,
                    row.median_step_us
                );
            }
            println!("telemetry written to {}", output.out_dir.display());
        }
        Command::Synth(common) => {
            let config = load_config(&common)?;
            let path = experiment::write_stream(&config)?;
            println!("{}", path.display());
        }
        Command::Regret { common, algorithm } => {
            let config = load_config(&common)?;
            let algorithm = match algorithm {
                Some(name) => name.parse::<Algorithm>()?,
                None => *config
                    .parsed_algorithms()?
                    .first()
                    .ok_or_else(|| Failure::Config("no algorithms configured".into()))?,
            };
            let (trace, path) = experiment::emit_regret_report(&config, algorithm)?;
            for &(t, scaled) in &trace.checkpoints {
                let regret = trace.regret_at(t).unwrap_or(f64::NAN);
                println!("t = {t:>7}  regret = {regret:>12.4}  regret/√t = {scaled:.4}");
            }
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (kind, msg) = match &failure {
                Failure::Config(m) => ("config error", m),
                Failure::Runtime(m) => ("runtime error", m),
            };
            eprintln!("raker: {kind}: {msg}");
            ExitCode::from(failure.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        let runtime = Error::Runtime {
            algorithm: "raker".into(),
            slot: 3,
            source: Box::new(Error::NonFinite("prediction".into())),
        };
        assert_eq!(Failure::from(runtime).exit_code(), 2);
        assert_eq!(Failure::from(Error::Config("x".into())).exit_code(), 1);
        assert_eq!(
            Failure::from(Error::MissingColumn("y".into())).exit_code(),
            1
        );
        let io = std::io::Error::other("disk full");
        assert_eq!(Failure::from(Error::Io(io)).exit_code(), 2);
    }

    #[test]
    fn cli_parses_overrides() {
        let cli = Cli::try_parse_from([
            "raker",
            "regret",
            "--config",
            "a.toml",
            "--seed",
            "7",
            "--algorithm",
            "single:2",
        ])
        .unwrap();
        match cli.command {
            Command::Regret { common, algorithm } => {
                assert_eq!(common.seed, Some(7));
                assert_eq!(common.out, None);
                assert_eq!(algorithm.as_deref(), Some("single:2"));
            }
            other => panic!("parsed {other:?}"),
        }
        assert!(Cli::try_parse_from(["raker", "run", "--seed", "x", "--config", "a"]).is_err());
    }
}

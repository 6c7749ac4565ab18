use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nanorx_harness::{run, write_artifacts, ExperimentConfig, HarnessError, Overrides, Scenario};

#[derive(Parser)]
#[command(name = "nanorx", version, about = "THz nano-receiver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel frequency/impulse response and a test pulse through it.
    ChannelResponse(RunArgs),
    /// Pulse- vs carrier-mode detection error sweeps.
    ModeDetect(RunArgs),
    /// Modulation classification accuracy over SNR.
    Classify(RunArgs),
    /// Markov prediction of the next modulation scheme.
    Predict(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $NANORX_OUT/<scenario> or out/<scenario>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte-Carlo trials per point (overrides the file).
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, env = "NANORX_OUT", hide = true)]
    out_root: Option<PathBuf>,
}

fn execute(scenario: Scenario, args: RunArgs) -> Result<PathBuf, HarnessError> {
    let ov = Overrides {
        seed: args.seed,
        out: args.out,
        trials: args.trials,
    };
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path, scenario, &ov)?,
        None => ExperimentConfig::defaults(scenario, &ov)?,
    };
    let dir = cfg.out.clone().unwrap_or_else(|| {
        args.out_root
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
            .join(scenario.name())
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| HarnessError::config(format!("thread pool: {e}")))?;
    log::info!("{} with seed {} on {} threads", scenario.name(), cfg.seed, pool.current_num_threads());
    let artifacts = pool.install(|| run(&cfg))?;
    write_artifacts(&dir, &artifacts)?;
    Ok(dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (scenario, args) = match cli.command {
        Command::ChannelResponse(a) => (Scenario::ChannelResponse, a),
        Command::ModeDetect(a) => (Scenario::ModeDetect, a),
        Command::Classify(a) => (Scenario::Classify, a),
        Command::Predict(a) => (Scenario::Predict, a),
    };
    match execute(scenario, args) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(config: Option<PathBuf>, out: PathBuf) -> RunArgs {
        RunArgs {
            config,
            seed: Some(3),
            out: Some(out),
            trials: Some(50),
            threads: 2,
            out_root: None,
        }
    }

    #[test]
    fn cli_parses_subcommands() {
        let cli = Cli::try_parse_from(["nanorx", "mode-detect", "--seed", "9", "--threads", "1"]).unwrap();
        assert!(matches!(cli.command, Command::ModeDetect(RunArgs { seed: Some(9), threads: 1, .. })));
        assert!(Cli::try_parse_from(["nanorx", "classify", "--trials", "many"]).is_err());
    }

    #[test]
    fn writes_into_the_requested_directory() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("md");
        assert_eq!(execute(Scenario::ModeDetect, args(None, out.clone())).unwrap(), out);
        assert!(out.join("pareto.csv").is_file());
        assert!(out.join("metadata.toml").is_file());
    }

    #[test]
    fn invalid_config_leaves_no_output() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, "scenario = \"mode-detect\"\nseed = 1\n[detector]\ngrid = []\n").unwrap();
        let out = dir.path().join("out");
        let err = execute(Scenario::ModeDetect, args(Some(cfg), out.clone())).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!out.exists());

        let missing = dir.path().join("absent.toml");
        let err = execute(Scenario::Predict, args(Some(missing), out.clone())).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!out.exists());
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chaosbench::commands::{cmd_adapt, cmd_check, cmd_fit, cmd_plot, cmd_rate, cmd_risk, cmd_simulate};
use chaosbench::config::ExperimentConfig;
use chaosbench::manifest::load_config;
use chaosbench::CliError;

#[derive(Parser)]
#[command(
    name = "chaosbench",
    version,
    about = "Monte Carlo benchmarks for chaos-kernel regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML) or a run manifest (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one dataset per replication.
    Simulate,
    /// Fit models with fixed or rule-based bandwidths.
    Fit,
    /// Fit models with data-driven bandwidths.
    Adapt,
    /// Score stored models against the truth.
    Risk,
    /// Run a whole campaign and fit the risk decay rate.
    Rate,
    /// Run numerical diagnostics.
    Check,
    /// Render a risk or selection-trace CSV as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
    },
}

fn config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config is required for this command".into()))?;
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Simulate => {
            let m = cmd_simulate(&config(cli)?, &cli.out)?;
            println!("wrote {} files", m.outputs.len());
        }
        Command::Fit => {
            let m = cmd_fit(&config(cli)?, &cli.out)?;
            println!("wrote {} models", m.outputs.len());
        }
        Command::Adapt => {
            let m = cmd_adapt(&config(cli)?, &cli.out)?;
            println!("wrote {} model and trace files", m.outputs.len());
        }
        Command::Risk => {
            cmd_risk(&config(cli)?, &cli.out)?;
            println!("wrote risk.csv and risk_summary.csv");
        }
        Command::Rate => {
            let r = cmd_rate(&config(cli)?, &cli.out)?;
            match r.theoretical_slope {
                Some(t) => println!("slope {:.4} ± {:.4} (theory {t:.4})", r.slope, r.slope_stderr),
                None => println!("slope {:.4} ± {:.4}", r.slope, r.slope_stderr),
            }
        }
        Command::Check => {
            let result = cmd_check(&config(cli)?, &cli.out);
            if let Ok(r) = &result {
                println!("{} checks passed", r.checks.len());
            }
            result?;
        }
        Command::Plot { input } => {
            let path = cmd_plot(input, &cli.out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chaosbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

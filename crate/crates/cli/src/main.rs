use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delaytron_cli::config::RunConfig;
use delaytron_cli::experiment::run_experiment;
use delaytron_cli::plot::emit_plot;
use delaytron_cli::{CliError, Result};
use delaytron_core::datasets::{gen_synnonsep, gen_synsep, SyntheticSpec};

#[derive(Parser)]
#[command(name = "delaytron", version, about = "Multiclass bandit learning under delayed feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a gamma sweep over several seeds and write per-round CSVs.
    Run(Box<RunArgs>),
    /// Plot per-round CSVs as log-log error-rate curves.
    Plot {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset as CSV (label first, 1-based).
    Gen {
        #[arg(long, value_parser = ["synsep", "synnonsep"])]
        dataset: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Every flag overrides the config key of the same name.
#[derive(Args)]
struct RunArgs {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    /// Comma-separated list
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    max_delay: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    dataset_size: Option<String>,
    #[arg(long)]
    dataset_seed: Option<String>,
    #[arg(long)]
    csv_header: Option<String>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    normalization: Option<String>,
    /// A number or theoretical:<case1|bounded_loss|unbounded_loss|bounded_loss_total>
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    w_norm: Option<String>,
    #[arg(long)]
    loss_bound: Option<String>,
    #[arg(long)]
    eta_scale: Option<String>,
    #[arg(long)]
    delay_mode: Option<String>,
    #[arg(long)]
    delay_file: Option<String>,
    #[arg(long)]
    base_seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    plot: Option<String>,
    /// Extra key=value settings, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("algorithm", self.algo),
            ("gamma", self.gamma),
            ("max_delay", self.max_delay),
            ("rounds", self.rounds),
            ("seeds", self.seeds),
            ("out", self.out),
            ("dataset", self.dataset),
            ("dataset_size", self.dataset_size),
            ("dataset_seed", self.dataset_seed),
            ("csv_header", self.csv_header),
            ("label_column", self.label_column),
            ("normalization", self.normalization),
            ("eta", self.eta),
            ("w_norm", self.w_norm),
            ("loss_bound", self.loss_bound),
            ("eta_scale", self.eta_scale),
            ("delay_mode", self.delay_mode),
            ("delay_file", self.delay_file),
            ("base_seed", self.base_seed),
            ("workers", self.workers),
            ("plot", self.plot),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, &v)?;
            }
        }
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {pair:?}")))?;
            config.set(k.trim(), v.trim())?;
        }
        Ok(config)
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let config = args.into_config()?;
            let report = run_experiment(&config)?;
            for row in &report.summary {
                println!(
                    "gamma {:<8} mean final error {:.6} (std {:.6}, n {}){}",
                    row.gamma,
                    row.mean,
                    row.std,
                    row.n,
                    if row.best { "  <- best" } else { "" }
                );
            }
            println!("wrote {} run files to {}", report.round_files.len(), config.out.display());
        }
        Command::Plot { inputs, out } => emit_plot(&inputs, &out)?,
        Command::Gen { dataset, n, seed, out } => {
            if n == 0 {
                return Err(CliError::Config("--n must be at least 1".into()));
            }
            let data = match dataset.as_str() {
                "synsep" => gen_synsep(&SyntheticSpec::synsep(n, seed))?,
                _ => gen_synnonsep(&SyntheticSpec::synnonsep(n, seed))?,
            };
            data.write_csv(&out)?;
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
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use threatwatch_cli::{commands, CliError, PipelineConfig};
use threatwatch_core::ReportFormat;

#[derive(Parser)]
#[command(name = "threatwatch", version, about = "Knife-threat scoring, alerting and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset manifest and print its label statistics.
    Validate {
        #[arg(long)]
        manifest: String,
    },
    /// Assign manifest samples to train/val/test splits.
    Split {
        #[arg(long)]
        manifest: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "0.70,0.15,0.15")]
        ratios: String,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Assess every frame and write one assessment line per frame.
    Score {
        /// Backend URI: jsonl:<path>, synthetic:<script>, extern:<adapter>, or - for stdin.
        #[arg(long)]
        input: String,
        #[arg(long, env = "THREATWATCH_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        out: String,
        /// Abort on the first malformed input line instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Run fusion and temporal alerting, writing alert events.
    Watch {
        #[arg(long)]
        input: String,
        #[arg(long, env = "THREATWATCH_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        alerts: String,
        /// POST each alert event to this URL (overrides the config file).
        #[arg(long)]
        webhook: Option<String>,
        #[arg(long)]
        strict: bool,
    },
    /// Score predictions against labels and report per-class accuracy.
    Eval {
        #[arg(long)]
        pred: String,
        #[arg(long)]
        labels: String,
        #[arg(long, default_value = "-")]
        report: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Generate frames from a scenario script.
    Simulate {
        #[arg(long)]
        scenario: String,
        /// Overrides the script's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "-")]
        out: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::default().default_filter_or(level.unwrap_or("warn"));
    let _ = env_logger::Builder::from_env(env).try_init();
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig, CliError> {
    let cfg = PipelineConfig::load(path.map(PathBuf::as_path));
    init_logging(cfg.as_ref().ok().and_then(|c| c.log_level.as_deref()));
    cfg
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { manifest } => {
            init_logging(None);
            commands::validate(&manifest).map(drop)
        }
        Command::Split {
            manifest,
            seed,
            ratios,
            out,
        } => {
            init_logging(None);
            commands::split(&manifest, seed, &ratios, &out)
        }
        Command::Score {
            input,
            config,
            out,
            strict,
        } => {
            let cfg = load_config(config.as_ref())?;
            commands::score(&input, &cfg, &out, strict).map(drop)
        }
        Command::Watch {
            input,
            config,
            alerts,
            webhook,
            strict,
        } => {
            let cfg = load_config(config.as_ref())?;
            commands::watch(&input, &cfg, &alerts, webhook.as_deref(), strict).map(drop)
        }
        Command::Eval {
            pred,
            labels,
            report,
            format,
        } => {
            init_logging(None);
            let format = match format {
                Format::Json => ReportFormat::Json,
                Format::Table => ReportFormat::TextTable,
            };
            commands::eval(&pred, &labels, &report, format)
        }
        Command::Simulate {
            scenario,
            seed,
            out,
        } => {
            init_logging(None);
            commands::simulate(&scenario, seed, &out).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

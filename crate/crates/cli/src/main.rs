//! `wikialumni` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wikialumni::analytics::CorrelationMethod;
use wikialumni::config::{PageviewMode, PipelineConfig};
use wikialumni::pipeline::{self, Outcome, PipelineError, EXIT_CONFIG};

#[derive(Parser, Debug)]
#[command(name = "wikialumni", version, about = "Rank universities by the Wikipedia popularity of their alumni")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Pipeline config file (TOML).
    #[arg(short, long, global = true, default_value = "wikialumni.toml")]
    config: PathBuf,
    /// Override `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Override `analysis_year`.
    #[arg(long, global = true)]
    year: Option<i32>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stream dumps, resolve redirects and write person files.
    Ingest,
    /// Link persons to universities and write the alumni dataset.
    Extract,
    /// Attribute yearly pageviews to alumni and universities.
    Views {
        /// Override `pageviews.mode`.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<PageviewMode>,
        /// Override `pageviews.rate_limit` (requests per second).
        #[arg(long)]
        rate: Option<f64>,
        /// Override `pageviews.cache_dir`.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Write statistics, rankings and correlation matrices.
    Report {
        /// Override `correlation_method`.
        #[arg(long)]
        method: Option<CorrelationMethod>,
        /// Override `report.top_n`.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Draw a reproducible sample of alumni links for manual review.
    Audit {
        /// Override `audit.rate`.
        #[arg(long)]
        rate: Option<f64>,
        /// Override `audit.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_mode(s: &str) -> Result<PageviewMode, String> {
    match s {
        "live" => Ok(PageviewMode::Live),
        "fixture" => Ok(PageviewMode::Fixture),
        other => Err(format!("unknown mode {other:?} (live | fixture)")),
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&cli.common.config)?;
    if let Some(dir) = &cli.common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(year) = cli.common.year {
        cfg.analysis_year = year;
    }
    match &cli.command {
        Command::Views { mode, rate, cache_dir } => {
            if let Some(m) = mode {
                cfg.pageviews.mode = *m;
            }
            if let Some(r) = rate {
                cfg.pageviews.live.requests_per_second = *r;
            }
            if let Some(d) = cache_dir {
                cfg.pageviews.cache_dir = d.clone();
            }
        }
        Command::Report { method, top } => {
            if let Some(m) = method {
                cfg.correlation_method = *m;
            }
            if let Some(n) = top {
                cfg.top_n = *n;
            }
        }
        Command::Audit { rate, seed } => {
            if let Some(r) = rate {
                cfg.audit_rate = *r;
            }
            if let Some(s) = seed {
                cfg.audit_seed = *s;
            }
        }
        Command::Ingest | Command::Extract => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome, PipelineError> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Ingest => pipeline::cmd_ingest(&cfg),
        Command::Extract => pipeline::cmd_extract(&cfg),
        Command::Views { .. } => pipeline::cmd_views(&cfg),
        Command::Report { .. } => pipeline::cmd_report(&cfg),
        Command::Audit { .. } => pipeline::cmd_audit(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(outcome) => {
            for msg in &outcome.messages {
                println!("{msg}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use teachnow_core::analytics::{report, CourseLog, ProgressBand};
use teachnow_core::audit::audit;
use teachnow_core::event::{read_log_file, write_log_file};
use teachnow_core::sim::{run_sim, table1::table1_log, SimConfig};
use teachnow_core::JsonlSink;
use teachnow_service::{router, App, ServeConfig, SystemClock};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "teachnow", version, about = "Real-time 1:1 help matchmaking for online courses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service, appending to (and first replaying) the log.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Overrides `addr` from the config file.
        #[arg(long)]
        addr: Option<SocketAddr>,
    },
    /// Replay a log and print its state hash and audit summary.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Exit non-zero if the audit finds any protocol violation.
        #[arg(long)]
        check: bool,
    },
    /// Outcome analytics over a log.
    Analyze {
        #[command(subcommand)]
        what: Analysis,
    },
    /// Run the simulator and write its log.
    Simulate {
        /// Flat TOML simulator config, used instead of a preset.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Analysis {
    /// Usage aggregates as JSON.
    Table1 {
        #[arg(long)]
        log: PathBuf,
    },
    /// Helped vs control progress and dropout by day, as CSV.
    Curves {
        #[arg(long)]
        log: PathBuf,
        /// Progress band as a fraction, e.g. `1/100`.
        #[arg(long, default_value = "1/100")]
        band: Ratio<u64>,
    },
    /// Teacher activity around matched and unmatched tickets, as CSV.
    Capture {
        #[arg(long)]
        log: PathBuf,
    },
    /// Control group of every session, one JSON object per line.
    Controls {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "1/100")]
        band: Ratio<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Protocol,
    Cohort,
    CohortNull,
    Timeline,
    Table1,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve { config, log, addr } => serve(&config, &log, addr),
        Command::Replay { log, check } => replay(&log, check),
        Command::Analyze { what } => analyze(what).map(|()| ExitCode::SUCCESS),
        Command::Simulate { config, preset, out } => {
            simulate(config.as_deref(), preset, &out).map(|()| ExitCode::SUCCESS)
        }
    }
}

fn load(log: &Path) -> anyhow::Result<CourseLog> {
    let records = read_log_file(log).with_context(|| format!("reading {}", log.display()))?;
    Ok(CourseLog::from_records(&records)?)
}

fn band(b: Ratio<u64>) -> anyhow::Result<ProgressBand> {
    if b > Ratio::from_integer(1) {
        bail!("band {b} is wider than the whole course");
    }
    Ok(ProgressBand(b))
}

fn analyze(what: Analysis) -> anyhow::Result<()> {
    match what {
        Analysis::Table1 { log } => {
            println!("{}", serde_json::to_string_pretty(&load(&log)?.table1::<f64>())?);
        }
        Analysis::Curves { log, band: b } => {
            let curves = load(&log)?.with_band(band(b)?).cohort_curves_all::<f64>()?;
            print!("{}", report::curves_csv(&curves));
        }
        Analysis::Capture { log } => print!("{}", report::capture_csv(&load(&log)?.matched_vs_unmatched::<f64>())),
        Analysis::Controls { log, band: b } => {
            for group in load(&log)?.with_band(band(b)?).control_groups() {
                println!("{}", serde_json::to_string(&group)?);
            }
        }
    }
    Ok(())
}

fn replay(log: &Path, check: bool) -> anyhow::Result<ExitCode> {
    let records = read_log_file(log).with_context(|| format!("reading {}", log.display()))?;
    let state = teachnow_core::replay(&records)?;
    let report = audit(&records);
    let summary = serde_json::json!({
        "records": records.len(),
        "seq": state.seq(),
        "clock": state.clock(),
        "state_hash": state.hash(),
        "tickets": report.tickets,
        "nudges": report.nudges,
        "sessions": report.sessions,
        "violations": report.violations.len(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    for v in report.violations.iter().take(20) {
        eprintln!("violation at seq {}: {}: {}", v.seq, v.rule, v.detail);
    }
    Ok(if check && !report.is_clean() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn simulate(config: Option<&Path>, preset: Option<Preset>, out: &Path) -> anyhow::Result<()> {
    let name = match preset.unwrap_or(Preset::Protocol) {
        Preset::Table1 => {
            let records = table1_log()?;
            write_log_file(out, &records)?;
            let t = CourseLog::from_records(&records)?.table1::<f64>();
            println!("{}", serde_json::to_string_pretty(&t)?);
            return Ok(());
        }
        Preset::Protocol => "protocol",
        Preset::Cohort => "cohort",
        Preset::CohortNull => "cohort-null",
        Preset::Timeline => "timeline",
    };
    let cfg = match config {
        Some(path) => SimConfig::from_file(path)?,
        None => SimConfig::preset(name).expect("known preset"),
    };
    let mut outcome = run_sim(&cfg)?;
    write_log_file(out, &outcome.records).with_context(|| format!("writing {}", out.display()))?;
    outcome.report.event_log_path = Some(out.display().to_string());
    println!("{}", serde_json::to_string_pretty(&outcome.report)?);
    Ok(())
}

fn serve(config: &Path, log: &Path, addr: Option<SocketAddr>) -> anyhow::Result<ExitCode> {
    let cfg = ServeConfig::from_file(config)?;
    let history = if log.exists() {
        read_log_file(log).with_context(|| format!("refusing to start on {}", log.display()))?
    } else {
        Vec::new()
    };
    tracing::info!(records = history.len(), log = %log.display(), "replayed log");
    let sink = JsonlSink::append_to(log).with_context(|| format!("opening {}", log.display()))?;
    let app = App::start(&history, cfg.course, Box::new(sink), Box::new(SystemClock), cfg.principals)?;
    let addr = addr.or(cfg.addr).unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 8080)));
    let tick = Duration::from_millis(cfg.tick_ms.max(1));

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let ticker = app.clone();
        tokio::spawn(async move {
            let mut every = tokio::time::interval(tick);
            loop {
                every.tick().await;
                if let Err(e) = ticker.tick() {
                    tracing::error!(error = %e.message, "timer sweep failed");
                }
            }
        });
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(%addr, "listening");
        axum::serve(listener, router(app))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(ExitCode::SUCCESS)
    })
}

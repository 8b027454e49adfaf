use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gcs_core::config::demo_config;
use gcs_core::console::Role;
use gcs_core::sim::{LinkModel, Scenario};
use gcs_core::snapshot::ClickScript;
use gcs_station::config_store::{self, StoreError};
use gcs_station::imaging::measure_file;
use gcs_station::server::{serve, RobotTarget, ServeOptions};
use gcs_station::simhost::{run_sim, SimOptions};

#[derive(Parser)]
#[command(name = "gcs", version, about = "Teleoperation ground control station")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the console endpoint.
    Serve(ServeArgs),
    /// Run the stand-alone robot simulator.
    Sim(SimArgs),
    /// Rectify a panel image and measure cracks from a click script.
    Snapshot(SnapshotArgs),
    /// Create or check a configuration file.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
}

#[derive(Args, Clone)]
struct LinkArgs {
    /// JSON scenario file; defaults to the built-in scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// One-way base latency, seconds.
    #[arg(long, default_value_t = 0.0)]
    latency: f64,
    /// Uniform jitter half-width, seconds.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Drop probability per message.
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
    #[arg(long, default_value_t = 100.0)]
    tick_rate: f64,
}

impl LinkArgs {
    fn link(&self) -> LinkModel {
        LinkModel {
            base_latency: self.latency,
            jitter: self.jitter,
            drop_probability: self.drop,
            seed: self.seed,
        }
    }

    fn scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            None => Ok(Scenario::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) {
            bail!("--tick-rate must be positive");
        }
        self.link().validate().map_err(|e| anyhow::anyhow!("{e}"))
    }
}

#[derive(Args)]
struct ServeArgs {
    /// Configuration profile; created from the demo profile if missing.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// `embedded-sim` or the address of `gcs sim --listen`.
    #[arg(long, default_value = "embedded-sim")]
    robot: String,
    /// Default session role: `developer` or `enduser`.
    #[arg(long, default_value = "developer")]
    role: String,
    /// Write every console input to this trace file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Feed robot traffic from a recorded trace instead of a live robot.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Directory with the operator interface bundle served at `/`.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[command(flatten)]
    link: LinkArgs,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value = "127.0.0.1:9090")]
    listen: SocketAddr,
    /// Write robot-to-console traffic to this trace file.
    #[arg(long)]
    record: Option<PathBuf>,
    #[command(flatten)]
    link: LinkArgs,
}

#[derive(Args)]
struct SnapshotArgs {
    #[arg(long)]
    image: PathBuf,
    /// JSON click script: corners, panel size, target scale, cracks.
    #[arg(long)]
    clicks: PathBuf,
    /// Measurement result (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Also write the rectified image here.
    #[arg(long)]
    rectified: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Write the demo profile.
    Init {
        path: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Parse and validate a profile.
    Check { path: PathBuf },
}

fn parse_role(s: &str) -> Result<Role> {
    Role::parse(s).with_context(|| format!("unknown role `{s}`"))
}

fn config_check(path: &Path) -> Result<bool> {
    match config_store::load(path) {
        Ok(cfg) => {
            println!(
                "{}: ok ({} cameras, {} actions, {} settings)",
                path.display(),
                cfg.cameras.len(),
                cfg.actions.len(),
                cfg.settings.len()
            );
            Ok(true)
        }
        Err(StoreError::Invalid(e)) => {
            println!("{}: invalid: {e}", path.display());
            Ok(false)
        }
        Err(e) => {
            println!("{e}");
            Ok(false)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Serve(a) => {
            a.link.check()?;
            let opts = ServeOptions {
                config: a.config,
                listen: a.listen,
                robot: a.robot.parse().unwrap_or(RobotTarget::EmbeddedSim),
                role: parse_role(&a.role)?,
                record: a.record,
                replay: a.replay,
                assets: a.assets,
                scenario: a.link.scenario()?,
                link: a.link.link(),
                tick_rate: a.link.tick_rate,
            };
            runtime()?.block_on(serve(opts))?;
            Ok(true)
        }
        Command::Sim(a) => {
            a.link.check()?;
            let opts = SimOptions {
                listen: a.listen,
                scenario: a.link.scenario()?,
                link: a.link.link(),
                tick_rate: a.link.tick_rate,
                record: a.record,
            };
            runtime()?.block_on(run_sim(opts))?;
            Ok(true)
        }
        Command::Snapshot(a) => {
            let text = fs::read_to_string(&a.clicks).with_context(|| format!("reading {}", a.clicks.display()))?;
            let clicks: ClickScript =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", a.clicks.display()))?;
            let session = measure_file(&a.image, &clicks, a.rectified.as_deref())?;
            for w in &session.warnings {
                eprintln!("warning: {w}");
            }
            for m in &session.measurements {
                println!("{}: {:.2} cm", m.label.as_deref().unwrap_or("crack"), m.length_cm);
            }
            fs::write(&a.out, serde_json::to_string_pretty(&session)? + "\n")
                .with_context(|| format!("writing {}", a.out.display()))?;
            Ok(true)
        }
        Command::Config { command } => match command {
            ConfigCommand::Init { path, force } => {
                if path.exists() && !force {
                    bail!("{} exists; pass --force to overwrite", path.display());
                }
                config_store::save(&path, &demo_config())?;
                println!("wrote {}", path.display());
                Ok(true)
            }
            ConfigCommand::Check { path } => config_check(&path),
        },
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

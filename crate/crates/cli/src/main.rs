//! `distb`: run scenarios, sweep figures, serve the gateway, validate chains.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use distb_core::engine::config::{ConfigError, Mode, Preset, ScenarioConfig};
use distb_core::engine::scenarios;
use distb_core::engine::{EngineError, World};
use distb_core::ledger::{read_chain, StoreError};
use distb_gateway::Gateway;

#[derive(Debug, Parser)]
#[command(name = "distb", version, about = "Blockchain-anchored SDN/IoT simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its report, trace, logs and chains.
    Run {
        /// Scenario config (TOML, `schema = 1`).
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long, env = "DISTB_SEED")]
        seed: Option<u64>,
        /// Output directory; nothing is written elsewhere.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the config mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run the canned sweeps for a preset and write one CSV per figure.
    Figures {
        #[arg(value_enum)]
        preset: PresetArg,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
        #[arg(long, env = "DISTB_SEED")]
        seed: Option<u64>,
        /// Base config instead of the built-in preset.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a scenario to its horizon, then serve the gateway on its state.
    Serve {
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "DISTB_SEED")]
        seed: Option<u64>,
        /// Attach at time zero without running any events.
        #[arg(long)]
        no_run: bool,
    },
    /// Check a persisted chain file. Exit 0 if valid, 1 otherwise.
    Validate { chain: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Distb,
    OpenflowOnly,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Distb => Mode::Distb,
            ModeArg::OpenflowOnly => Mode::OpenflowOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    P1,
    P2,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("chain invalid: {0}")]
    Invalid(String),
    #[error("{0}")]
    Engine(#[from] EngineError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Config(_) | CliError::Usage(_) | CliError::Engine(EngineError::Config(_)) => 2,
            CliError::Engine(_) | CliError::Io(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load(path: &Path, seed: Option<u64>, mode: Option<ModeArg>) -> Result<ScenarioConfig, CliError> {
    let mut c = ScenarioConfig::from_file(path)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(m) = mode {
        c.mode = m.into();
    }
    c.validate()?;
    Ok(c)
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, seed, out, mode } => {
            let c = load(&config, seed, mode)?;
            fs::create_dir_all(&out)?;
            let sim = World::build(c)?.run()?;
            sim.write_outputs(&out)?;
            println!(
                "{} mode, seed {}: throughput {:.1} bit/s, {} events -> {}",
                sim.world.config.mode.as_str(),
                sim.world.config.seed,
                sim.report.throughput_bps,
                sim.world.stats.events,
                out.display()
            );
            Ok(())
        }
        Command::Figures {
            preset,
            out,
            seed,
            config,
        } => {
            let (preset, mut base) = match (preset, config) {
                (p, Some(path)) => (p, ScenarioConfig::from_file(&path)?),
                (PresetArg::P1, None) => (PresetArg::P1, ScenarioConfig::p1()),
                (PresetArg::P2, None) => (PresetArg::P2, ScenarioConfig::p2()),
            };
            if let Some(s) = seed {
                base.seed = s;
            }
            base.validate()?;
            let preset = match preset {
                PresetArg::P1 => Preset::P1,
                PresetArg::P2 => Preset::P2,
            };
            for p in scenarios::figures(preset, &base, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Serve {
            config,
            port,
            host,
            seed,
            no_run,
        } => {
            let c = load(&config, seed, None)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid listen address {host}:{port}")))?;
            let world = World::build(c)?;
            let world = if no_run { world } else { world.run()?.world };
            let gateway = Gateway::from_world(world);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(distb_gateway::serve(gateway, addr, |a| {
                println!("listening on http://{a}");
            }))?;
            Ok(())
        }
        Command::Validate { chain } => {
            let mut f = fs::File::open(&chain)
                .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", chain.display())))?;
            let c = read_chain(&mut f).map_err(|e| match e {
                StoreError::Io(e) => CliError::Io(e),
                other => CliError::Invalid(other.to_string()),
            })?;
            c.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
            println!("ok: {} blocks, {:?} chain, difficulty {}", c.len(), c.kind(), c.difficulty());
            Ok(())
        }
    }
}

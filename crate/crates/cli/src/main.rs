use std::fs;
use std::io::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sipmatch::arm::TaskSpec;
use sipmatch::bench::{bench_report, BenchSpec, SessionRecord};
use sipmatch::config::EngineConfig;
use sipmatch::controller::{binding_table, InterfaceKind};
use sipmatch::replay::{load_recording, replay};
use sipmatch::sim::simulate_session;
use sipmatch::stats::{wilcoxon_signed_rank, Alternative};
use sipmatch_gateway::{GatewayConfig, Server};

#[derive(Parser)]
#[command(name = "sipmatch", version, about = "Sequence-matching sip-and-puff control engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Interface {
    Asp,
    Bsp,
}

impl From<Interface> for InterfaceKind {
    fn from(i: Interface) -> Self {
        match i {
            Interface::Asp => InterfaceKind::Asp,
            Interface::Bsp => InterfaceKind::Bsp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Trace {
    Events,
    Matches,
    Steps,
}

#[derive(Clone, Copy, ValueEnum)]
enum Alt {
    Less,
    Greater,
    #[value(name = "two_sided", alias = "two-sided")]
    TwoSided,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration file and print its binding table, one JSON record per line.
    ValidateLibrary { config: PathBuf },
    /// Run a recorded signal through the engine.
    Replay {
        recording: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "asp")]
        interface: Interface,
        /// Trace printed to stdout.
        #[arg(long, value_enum, default_value = "matches")]
        trace: Trace,
        /// Also write events.csv, matches.csv, steps.csv and metrics.json here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run one virtual-user session and print its metrics.
    Simulate {
        #[arg(long)]
        task: String,
        #[arg(long, value_enum)]
        interface: Interface,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Paired virtual-user benchmark over tasks and seeds.
    Bench {
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values = ["task1_jar", "task2_spoon", "task3_bottle"])]
        tasks: Vec<String>,
        #[arg(long, default_value_t = 30)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        /// JSON-lines report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Exact Wilcoxon signed-rank test on a CSV of `a,b` pairs.
    Stats {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum, default_value = "two_sided")]
        alt: Alt,
    },
    /// Run the live session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value = "sipmatch-store")]
        store: PathBuf,
        /// Directory of static files served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        tick_ms: u64,
        #[arg(long, default_value_t = 100)]
        input_delay_ms: u64,
    },
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(EngineConfig::default()),
    }
}

fn print_json(value: serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{value}")?;
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            bail!("line {line}: expected 2 fields, found {}", record.len());
        }
        let a: f64 = record[0].parse().with_context(|| format!("line {line}: bad value `{}`", &record[0]))?;
        let b: f64 = record[1].parse().with_context(|| format!("line {line}: bad value `{}`", &record[1]))?;
        pairs.push((a, b));
    }
    Ok(pairs)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ValidateLibrary { config } => {
            let config = load_config(Some(&config))?;
            for binding in binding_table(&config.library) {
                print_json(serde_json::to_value(binding)?)?;
            }
        }
        Command::Replay {
            recording,
            config,
            interface,
            trace,
            out_dir,
        } => {
            let config = load_config(config.as_deref())?;
            let samples = load_recording(&recording)?;
            let out = replay(&samples, &config, interface.into())?;
            let text = match trace {
                Trace::Events => out.event_trace(),
                Trace::Matches => out.match_trace(),
                Trace::Steps => out.step_trace(),
            };
            print!("{text}");
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("events.csv"), out.event_trace())?;
                fs::write(dir.join("matches.csv"), out.match_trace())?;
                fs::write(dir.join("steps.csv"), out.step_trace())?;
                fs::write(dir.join("metrics.json"), serde_json::to_string(&out.metrics)? + "\n")?;
            }
        }
        Command::Simulate {
            task,
            interface,
            seed,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            let spec = TaskSpec::shipped(&task)?;
            let model = config.virtual_user.with_seed(seed);
            let metrics = simulate_session(&spec, interface.into(), &model, &config)?;
            print_json(serde_json::to_value(SessionRecord {
                task,
                interface: interface.into(),
                seed,
                metrics,
            })?)?;
        }
        Command::Bench {
            tasks,
            seeds,
            base_seed,
            out,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            let tasks = tasks
                .iter()
                .map(|id| TaskSpec::shipped(id))
                .collect::<Result<Vec<_>, _>>()?;
            let spec = BenchSpec {
                tasks,
                interfaces: vec![InterfaceKind::Asp, InterfaceKind::Bsp],
                model: config.virtual_user.clone(),
                seeds,
                base_seed,
            };
            let report = bench_report(&spec, &config)?;
            print!("{}", report.to_text());
            if let Some(path) = out {
                fs::write(&path, report.to_json_lines()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Stats { pairs, alt } => {
            let alt = match alt {
                Alt::Less => Alternative::Less,
                Alt::Greater => Alternative::Greater,
                Alt::TwoSided => Alternative::TwoSided,
            };
            let result = wilcoxon_signed_rank(&read_pairs(&pairs)?, alt)?;
            print_json(serde_json::to_value(result)?)?;
        }
        Command::Serve {
            port,
            host,
            store,
            static_dir,
            tick_ms,
            input_delay_ms,
        } => {
            if tick_ms == 0 {
                bail!("--tick-ms must be positive");
            }
            let config = GatewayConfig {
                store,
                static_dir,
                tick_ms,
                input_delay_ms,
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let server = Server::bind(config, SocketAddr::new(host, port)).await?;
                eprintln!("listening on http://{}", server.local_addr()?);
                server.run().await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

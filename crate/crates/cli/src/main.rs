use std::fs;
use std::net::IpAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use hybrid_ocean::bench::{format_table, run_matrix, BenchMatrix};
use hybrid_ocean::config::{Mode, SimConfig};
use hybrid_ocean::output;
use hybrid_ocean::sim::Simulation;
use hybrid_ocean::stream::{ServeOptions, StreamServer};

#[derive(Parser)]
#[command(name = "hybrid-ocean", version, about = "Hybrid FFT / wave-particle ocean simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Overrides,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Seed for particle sampling and the FFT phases.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Frames to simulate (bench: measured frames per cell).
    #[arg(long, global = true)]
    frames: Option<usize>,
    /// Where frames, stats and tables are written.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// hybrid, fft-only or wp-only (bench: keep only cells in this mode).
    #[arg(long, global = true)]
    mode: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Headless run writing height frames and stats.
    Run { config: PathBuf },
    /// Steady-state throughput over a configuration matrix.
    Bench { matrix: PathBuf },
    /// Live session streaming frames to a viewer over WebSocket.
    Serve {
        config: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Step as fast as possible instead of at wall-clock pace.
        #[arg(long)]
        unpaced: bool,
    },
}

impl Overrides {
    fn apply(&self, config: &mut SimConfig) -> Result<()> {
        if let Some(s) = self.seed {
            config.seed = s;
            config.fft_seed = None;
        }
        if let Some(f) = self.frames {
            config.frames = f;
        }
        if let Some(d) = &self.output_dir {
            config.output.dir = Some(d.clone());
        }
        if let Some(m) = self.mode {
            config.mode = m;
        }
        config.validate()?;
        Ok(())
    }
}

fn load(path: &PathBuf, overrides: &Overrides) -> Result<SimConfig> {
    let mut config = SimConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?;
    overrides.apply(&mut config)?;
    Ok(config)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let o = &cli.global;
    match &cli.command {
        Command::Run { config } => {
            let config = load(config, o)?;
            if config.output.dir.is_none() {
                info!("no output directory set; running without writing frames");
            }
            let summary = output::run(config)?;
            println!("frames {} written {}", summary.frames, summary.frames_written);
            if let Some(s) = summary.last {
                println!(
                    "particles {} patch_variance {:.6} fft_variance {:.6}",
                    s.particles(),
                    s.patch_variance,
                    s.fft_variance
                );
            }
        }
        Command::Bench { matrix } => {
            let text = fs::read_to_string(matrix).with_context(|| format!("reading {}", matrix.display()))?;
            let mut m = BenchMatrix::parse(&text)?;
            if let Some(f) = o.frames {
                if f == 0 {
                    bail!("--frames must be at least 1 for bench");
                }
                m.settings.frames = f;
            }
            if let Some(mode) = o.mode {
                m.cells.retain(|c| c.config.mode == mode);
            }
            for c in &mut m.cells {
                if let Some(s) = o.seed {
                    c.config.seed = s;
                    c.config.fft_seed = None;
                }
            }
            let table = format_table(&run_matrix(&m)?);
            print!("{table}");
            if let Some(dir) = &o.output_dir {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("bench.csv"), &table)?;
            }
        }
        Command::Serve {
            config,
            port,
            host,
            unpaced,
        } => {
            let config = load(config, o)?;
            let Some(port) = port.or(config.stream.port) else {
                bail!("no port: pass --port or set stream.port");
            };
            let server = StreamServer::bind((*host, port))?;
            info!("serving on ws://{}", server.local_addr()?);
            let summary = server.run(
                Simulation::new(config)?,
                ServeOptions {
                    frames: o.frames,
                    realtime: !unpaced,
                },
            )?;
            println!(
                "frames {} published {} inputs {} rejected {}",
                summary.frames, summary.published, summary.inputs_applied, summary.inputs_rejected
            );
        }
    }
    Ok(())
}

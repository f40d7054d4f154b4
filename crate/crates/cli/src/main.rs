use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use thz_sense::padp::Window;
use thz_sense::scene::SceneModel;
use thz_sense_cli::{
    cmd_estimate, cmd_model, cmd_report, cmd_run_all, cmd_synth, cmd_track, exit_code, PipelineConfig, RunOptions,
    SynthOptions,
};

#[derive(Parser)]
#[command(name = "thzsense", version, about = "Directional channel sounding pipeline: synthesize, estimate, track, model, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory of the run.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene JSON; the built-in L-shaped corridor when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Pipeline config JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Poses to process, e.g. `all`, `14` or `1-3,14`.
    #[arg(long, default_value = "all")]
    poses: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl SynthArgs {
    fn options(&self) -> SynthOptions {
        SynthOptions {
            scene: self.scene.clone(),
            config: self.config.clone(),
            poses: Some(self.poses.clone()),
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    /// PDP window used for the PADP figure data.
    #[arg(long, default_value = "rect")]
    window: Window,
    /// Also write plot-ready CSVs under `figures/`.
    #[arg(long)]
    emit_figures: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize directional CFRs for the selected poses.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Extract MPCs from every rotation angle.
    Estimate {
        /// Detection threshold above the noise floor, dB (config value when omitted).
        #[arg(long)]
        threshold_db: Option<f64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Track MPCs across angles and de-embed the antenna pattern.
    Track {
        /// Delay gate between linked MPCs, ns (config value when omitted).
        #[arg(long)]
        gate_ns: Option<f64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Classify MPCs, fit the diffuse power law and build hybrid CIRs.
    Model {
        #[command(flatten)]
        out: OutDir,
    },
    /// Write the summary report and optional figure data.
    Report {
        #[command(flatten)]
        report: ReportArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run every stage in order.
    RunAll {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        threshold_db: Option<f64>,
        #[arg(long)]
        gate_ns: Option<f64>,
        #[command(flatten)]
        report: ReportArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Write the default config and the built-in scene as JSON.
    Defaults {
        /// Directory to write `config.json` and `scene.json` into; printed when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn defaults(out: Option<&Path>) -> Result<()> {
    let cfg = PipelineConfig::default().to_json();
    let scene = SceneModel::l_room().to_json() + "\n";
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| thz_sense::Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
            thz_sense::io::write_bytes(&dir.join("config.json"), cfg.as_bytes())?;
            thz_sense::io::write_bytes(&dir.join("scene.json"), scene.as_bytes())?;
        }
        None => print!("{cfg}{scene}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { synth, out } => cmd_synth(&out.out, &synth.options()),
        Command::Estimate { threshold_db, out } => cmd_estimate(&out.out, threshold_db),
        Command::Track { gate_ns, out } => cmd_track(&out.out, gate_ns),
        Command::Model { out } => cmd_model(&out.out),
        Command::Report { report, out } => cmd_report(
            &out.out,
            &RunOptions {
                window: report.window,
                emit_figures: report.emit_figures,
                ..RunOptions::default()
            },
        ),
        Command::RunAll {
            synth,
            threshold_db,
            gate_ns,
            report,
            out,
        } => cmd_run_all(
            &out.out,
            &synth.options(),
            &RunOptions {
                threshold_db,
                gate_ns,
                window: report.window,
                emit_figures: report.emit_figures,
            },
        ),
        Command::Defaults { out } => defaults(out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hmkit::synth::SynthSpec;
use hmkit_cli::commands::FEATURE_FILES;
use hmkit_cli::{
    cmd_eval, cmd_fuse_demo, cmd_run, cmd_synth, Ablation, CliError, FuseDemoOptions,
    PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "hmkit",
    version,
    about = "Multimodal human-motion annotation toolkit"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the report as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic capture bundle.
    Synth {
        /// TOML synthesis spec; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Bundle directory to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Synchronize, initialize, refine and evaluate a bundle.
    Run {
        /// TOML pipeline config.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's bundle directory.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Drop the contact term.
        #[arg(long)]
        no_contact: bool,
        /// Drop the smoothness term.
        #[arg(long)]
        no_smooth: bool,
        /// Drop the point-cloud geometry term.
        #[arg(long)]
        no_geo: bool,
    },
    /// Compare a predicted motion file with ground truth.
    Eval {
        /// Predicted motion file.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth motion file.
        #[arg(long)]
        gt: PathBuf,
        /// Body file; the procedural template otherwise.
        #[arg(long)]
        body: Option<PathBuf>,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fuse LiDAR, RGB and event feature CSVs with the tri-modal unit.
    FuseDemo {
        /// Directory holding lidar.csv, rgb.csv and event.csv.
        #[arg(long)]
        features: PathBuf,
        /// Seed for the random weights.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Binary weights file instead of seeded random weights.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Zero every residual output projection.
        #[arg(long)]
        residual_zero: bool,
        /// Output CSV (default: fused.csv in the features directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print<T: serde::Serialize + std::fmt::Debug>(json: bool, value: &T) -> Result<(), CliError> {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?
        );
    } else {
        println!("{value:#?}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, seed, out } => {
            let mut spec = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        CliError::Config(format!("cannot read {}: {e}", path.display()))
                    })?;
                    toml::from_str::<SynthSpec>(&text)
                        .map_err(|e| CliError::Config(e.to_string()))?
                }
                None => SynthSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let frames = cmd_synth(&spec, &out)?;
            eprintln!("wrote {} with {frames} frames", out.display());
        }
        Command::Run {
            config,
            seed,
            bundle,
            output,
            no_contact,
            no_smooth,
            no_geo,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(b) = bundle {
                cfg.bundle = b;
            }
            if let Some(o) = output {
                cfg.output = o;
            }
            let ablation = Ablation {
                no_contact,
                no_smooth,
                no_geo,
            };
            let report = cmd_run(&cfg, ablation)?;
            print(cli.json, &report)?;
        }
        Command::Eval {
            pred,
            gt,
            body,
            out,
        } => {
            let report = cmd_eval(&pred, &gt, body.as_deref())?;
            if let Some(o) = out {
                let text = serde_json::to_string_pretty(&report)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                hmkit::io::write_text(&o, &text)?;
            }
            print(cli.json, &report)?;
        }
        Command::FuseDemo {
            features,
            seed,
            weights,
            residual_zero,
            out,
        } => {
            let out = out.unwrap_or_else(|| features.join("fused.csv"));
            let fused = cmd_fuse_demo(&FuseDemoOptions {
                features_dir: features,
                seed,
                weights,
                residual_zero,
                out: out.clone(),
            })?;
            eprintln!(
                "fused {} frames x {} channels from {} into {}",
                fused.frames(),
                fused.dim(),
                FEATURE_FILES.join(", "),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

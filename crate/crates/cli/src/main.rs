//! `rainview` command-line front end.
//!
//! Exit status: 0 success, 1 validation failure, 2 usage or configuration
//! error, 3 I/O or parse error. Log verbosity comes from `RAINVIEW_LOG`
//! (`error`, `warn`, `info`, `debug`, `trace`; default `warn`).

use clap::{Args, Parser, Subcommand};
use rainview::pipeline::{
    enhance_images, format_pose_table, inspect_poses, load_config, synthesize, validate, EnhanceMode,
    EnhanceOptions, PipelineError,
};
use rainview::recovery::{FitSettings, DEFAULT_ITERS, DEFAULT_LR, DEFAULT_STEPS};
use rainview::Vec3;
use std::path::PathBuf;
use std::process::ExitCode;

const LOG_ENV: &str = "RAINVIEW_LOG";

#[derive(Parser)]
#[command(name = "rainview", version, about = "Multi-view rain synthesis and brightness recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render rainy images and masks for every view, frame time and preset.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit and apply the recursive brightness curve to a directory of PNGs.
    Enhance(EnhanceArgs),
    /// Re-verify a synthesized scene from its manifest.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Number of entries to re-render and compare byte for byte.
        #[arg(long, default_value_t = 3)]
        recheck: usize,
        /// Also write the machine-readable report to this path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print elevation, azimuth and grid bucket for every registered image.
    InspectPoses {
        #[arg(long)]
        colmap: PathBuf,
        #[arg(long, value_parser = parse_vec3, default_value = "0,-1,0", allow_hyphen_values = true)]
        up: Vec3,
        #[arg(long, value_parser = parse_grid, default_value = "1x1")]
        grid: (usize, usize),
    },
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, conflicts_with = "target_exposure", required_unless_present = "target_exposure")]
    reference: Option<PathBuf>,
    #[arg(long)]
    target_exposure: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = DEFAULT_LR)]
    lr: f64,
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    iters: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err("expected three comma-separated numbers".into()),
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, u) = s.split_once(['x', 'X']).ok_or("expected WxU, e.g. 3x4")?;
    let w: usize = w.trim().parse().map_err(|e| format!("W: {e}"))?;
    let u: usize = u.trim().parse().map_err(|e| format!("U: {e}"))?;
    if w == 0 || u == 0 {
        return Err("grid dimensions must be >= 1".into());
    }
    Ok((w, u))
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Synthesize { config, threads } => {
            let config = load_config(&config)?;
            let manifest = synthesize(&config, threads)?;
            println!(
                "{}: {} entries written to {}",
                manifest.scene_name,
                manifest.entries.len(),
                config.output_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Enhance(a) => {
            let mode = match (a.reference, a.target_exposure) {
                (Some(r), None) => EnhanceMode::Reference(r),
                (None, Some(e)) => EnhanceMode::Exposure(e),
                _ => return Err(PipelineError::Usage("give exactly one of --reference, --target-exposure".into())),
            };
            let mut opts = EnhanceOptions::new(a.input, a.out, mode);
            opts.settings = FitSettings {
                steps: a.steps,
                lr: a.lr,
                iters: a.iters,
            };
            let record = enhance_images(&opts)?;
            for img in &record.images {
                println!("{}: loss {:.6e} -> {:.6e}", img.name, img.initial_loss, img.final_loss);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            manifest,
            recheck,
            report,
        } => {
            let r = validate(&manifest, recheck)?;
            if let Some(path) = report {
                std::fs::write(&path, r.to_json() + "\n").map_err(PipelineError::io(&path))?;
            }
            print!("{}", r.summary());
            Ok(if r.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::InspectPoses { colmap, up, grid } => {
            let rows = inspect_poses(&colmap, &up, grid.0, grid.1)?;
            print!("{}", format_pose_table(&rows));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

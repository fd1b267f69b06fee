use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trackersplat_core::io::save_gaussians;
use trackersplat_core::pipeline::store::{load_results, load_scene, save_results, save_scene};
use trackersplat_core::pipeline::{
    compensate_frame, evaluate, generate_scene, run_pipeline, ClipMode, MotionProgram, NoRefinement, OracleTracker,
    PipelineOptions,
};
use trackersplat_core::{Config, Error, TrackField};

#[derive(Parser)]
#[command(name = "trackersplat", version, about = "Track-driven motion compensation for 3D Gaussian scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground truth for every frame.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        gaussians: usize,
        #[arg(long, default_value_t = 8)]
        views: usize,
        #[arg(long, default_value_t = 9)]
        frames: usize,
        /// Fraction of Gaussians that move.
        #[arg(long, default_value_t = 0.3)]
        movers: f64,
        /// Translation per frame, world units.
        #[arg(long, default_value_t = 0.02)]
        translate: f64,
        /// Rotation per frame, degrees.
        #[arg(long, default_value_t = 1.0)]
        rotate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write oracle track fields from frame 0 to every later frame.
    Track {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write the binary TRKF format instead of text.
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compensate one frame from frame 0 using precomputed tracks.
    Compensate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the full pipeline over a scene.
    Pipeline {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 9)]
        clip_len: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = ClipMode::Short)]
        mode: ClipMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare pipeline results against the scene's ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config, Error> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    Config::from_file(path).map_err(|e| match e {
        Error::Io(io) => Error::InvalidConfig(format!("cannot read {}: {io}", path.display())),
        other => other,
    })
}

fn track_file(dir: &Path, view: usize, frame: usize, binary: bool) -> PathBuf {
    dir.join(format!("track_v{view:02}_f{frame:04}.{}", if binary { "trkf" } else { "txt" }))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth {
            seed,
            gaussians,
            views,
            frames,
            movers,
            translate,
            rotate,
            out,
        } => {
            let program = MotionProgram {
                mover_fraction: movers,
                translate,
                rotate_deg: rotate,
                ..MotionProgram::default()
            };
            let scene = generate_scene(seed, gaussians, views, frames, program)?;
            save_scene(&out, &scene)?;
            println!("wrote {} frames of {} Gaussians", scene.n_frames(), scene.n_gaussians());
        }
        Command::Track {
            scene,
            noise,
            seed,
            out,
            binary,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::InvalidConfig(format!("noise must be non-negative, got {noise}")));
            }
            let scene = load_scene(&scene)?;
            fs::create_dir_all(&out)?;
            let mut written = 0;
            for v in 0..scene.cameras.len() {
                let tracker = OracleTracker::new(&scene, v, 0, config.alpha_cutoff)?;
                for k in 1..scene.n_frames() {
                    let field = tracker.track(&scene, k, noise, seed)?;
                    let file = BufWriter::new(File::create(track_file(&out, v, k, binary))?);
                    if binary {
                        field.write_binary(file)?;
                    } else {
                        field.write_text(file)?;
                    }
                    written += 1;
                }
            }
            println!("wrote {written} track fields");
        }
        Command::Compensate {
            scene,
            tracks,
            frame,
            out,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            let scene = load_scene(&scene)?;
            let fields = (0..scene.cameras.len())
                .map(|v| {
                    let text = track_file(&tracks, v, frame, false);
                    if text.exists() {
                        TrackField::read_text(BufReader::new(File::open(text)?))
                    } else {
                        TrackField::read_binary(File::open(track_file(&tracks, v, frame, true))?)
                    }
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let result = compensate_frame(&scene.frames[0], &scene.cameras, &fields, &config)?;
            save_gaussians(&out, &result.gaussians)?;
            let t = result.tally;
            println!(
                "frame {frame}: solved {} propagated {} static {} unsolvable {}",
                t.solved, t.propagated, t.static_, t.unsolvable
            );
        }
        Command::Pipeline {
            scene,
            clip_len,
            workers,
            mode,
            out,
            config,
        } => {
            let options = PipelineOptions {
                clip_len,
                workers,
                mode,
                config: load_config(config.as_deref())?,
            };
            let scene = load_scene(&scene)?;
            let results = run_pipeline(&scene, &options, &NoRefinement)?;
            save_results(&out, &results)?;
            println!("wrote {} frame results", results.len());
        }
        Command::Eval { results, scene, out } => {
            let scene = load_scene(&scene)?;
            let results = load_results(&results)?;
            let report = evaluate(&results, &scene)?;
            report.write_csv(BufWriter::new(File::create(&out)?))?;
            print!("{}", report.summary());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidParameter(_) => 2,
        Error::Parse { .. } | Error::Io(_) | Error::DimensionMismatch(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

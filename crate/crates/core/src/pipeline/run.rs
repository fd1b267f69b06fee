use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{CameraView, Gaussian3D};
use crate::pwils::TrackField;
use crate::multiview::MotionStatus;
use crate::regularize::build_knn;

use super::compensate::{compensate_with_index, FrameResult, StageTimes, StatusTally};
use super::scene::SceneSequence;
use super::track::OracleTracker;

/// How clips relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipMode {
    /// Non-overlapping clips, each starting from ground truth.
    #[default]
    Short,
    /// Clips share boundary frames; each starts from the previous output.
    Long,
}

impl FromStr for ClipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(ClipMode::Short),
            "long" => Ok(ClipMode::Long),
            _ => Err(Error::InvalidConfig(format!("unknown clip mode {s:?}"))),
        }
    }
}

impl fmt::Display for ClipMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipMode::Short => "short",
            ClipMode::Long => "long",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clip {
    pub first_frame: usize,
    pub target_frames: Vec<usize>,
    pub views: Vec<usize>,
}

/// Splits `n_frames` into clips of `clip_len` frames (the last one may be shorter).
pub fn segment_clips(n_frames: usize, n_views: usize, clip_len: usize, mode: ClipMode) -> Result<Vec<Clip>> {
    if clip_len < 2 {
        return Err(Error::InvalidConfig(format!("clip length must be at least 2, got {clip_len}")));
    }
    let views: Vec<usize> = (0..n_views).collect();
    let step = match mode {
        ClipMode::Short => clip_len,
        ClipMode::Long => clip_len - 1,
    };
    let mut clips = Vec::new();
    let mut first = 0;
    while first < n_frames {
        let end = (first + clip_len).min(n_frames);
        clips.push(Clip {
            first_frame: first,
            target_frames: (first + 1..end).collect(),
            views: views.clone(),
        });
        if end == n_frames {
            break;
        }
        first += step;
    }
    Ok(clips)
}

/// Per-frame refinement applied after compensation. The default does nothing.
pub trait RefinementHook: Sync {
    fn refine(&self, _frame: usize, _gaussians: &mut Vec<Gaussian3D>, _cameras: &[CameraView]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoRefinement;

impl RefinementHook for NoRefinement {}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub clip_len: usize,
    pub workers: usize,
    pub mode: ClipMode,
    pub config: Config,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            clip_len: 9,
            workers: 1,
            mode: ClipMode::Short,
            config: Config::default(),
        }
    }
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Compensates every target frame of one clip from `first` on the current
/// pool. Tracks always come from ground truth; `first` is what the model
/// believes the clip's first frame looks like.
fn run_clip(
    scene: &SceneSequence,
    clip: &Clip,
    first: &[Gaussian3D],
    config: &Config,
    hook: &dyn RefinementHook,
) -> Result<Vec<FrameResult>> {
    let setup = Instant::now();
    let trackers = clip
        .views
        .par_iter()
        .map(|&v| OracleTracker::new(scene, v, clip.first_frame, config.alpha_cutoff))
        .collect::<Result<Vec<_>>>()?;
    let shared_tracking = secs(setup);
    let index = build_knn(&first.iter().map(|g| g.mean()).collect::<Vec<_>>(), config.knn_k)?;

    clip.target_frames
        .par_iter()
        .map(|&k| {
            let t0 = Instant::now();
            let tracks = trackers
                .par_iter()
                .map(|t| t.track(scene, k, config.track_noise_px, config.seed))
                .collect::<Result<Vec<TrackField>>>()?;
            let tracking = secs(t0) + shared_tracking / clip.target_frames.len() as f64;
            let t1 = Instant::now();
            let c = compensate_with_index(first, &scene.cameras, &tracks, &index, config)?;
            let compensation = secs(t1);
            let t2 = Instant::now();
            let mut gaussians = c.gaussians;
            hook.refine(k, &mut gaussians, &scene.cameras)?;
            let refinement = secs(t2);
            let statuses: Vec<MotionStatus> = c.updates.iter().map(|u| u.status).collect();
            Ok(FrameResult {
                frame: k,
                source_frame: clip.first_frame,
                tally: StatusTally::from_statuses(&statuses),
                gaussians,
                statuses,
                wall_time: StageTimes {
                    tracking,
                    compensation,
                    refinement,
                },
            })
        })
        .collect()
}

/// Runs the whole sequence on a pool of `workers` threads and returns one
/// result per frame, in frame order. Results do not depend on `workers`.
pub fn run_pipeline(scene: &SceneSequence, options: &PipelineOptions, hook: &dyn RefinementHook) -> Result<Vec<FrameResult>> {
    options.config.validate()?;
    scene.validate()?;
    if options.workers < 1 {
        return Err(Error::InvalidConfig("workers must be at least 1".into()));
    }
    if scene.n_frames() == 0 {
        return Err(Error::InvalidConfig("scene has no frames".into()));
    }
    let clips = segment_clips(scene.n_frames(), scene.cameras.len(), options.clip_len, options.mode)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;

    pool.install(|| {
        let mut results: Vec<Option<FrameResult>> = vec![None; scene.n_frames()];
        match options.mode {
            ClipMode::Short => {
                let per_clip = clips
                    .par_iter()
                    .map(|clip| run_clip(scene, clip, &scene.frames[clip.first_frame], &options.config, hook))
                    .collect::<Result<Vec<_>>>()?;
                for (clip, frames) in clips.iter().zip(per_clip) {
                    results[clip.first_frame] = Some(FrameResult::initialization(clip.first_frame, scene.frames[clip.first_frame].clone()));
                    for r in frames {
                        let k = r.frame;
                        results[k] = Some(r);
                    }
                }
            }
            ClipMode::Long => {
                results[0] = Some(FrameResult::initialization(0, scene.frames[0].clone()));
                for clip in &clips {
                    let first = results[clip.first_frame]
                        .as_ref()
                        .map(|r| r.gaussians.clone())
                        .expect("clip start computed by the previous clip");
                    for r in run_clip(scene, clip, &first, &options.config, hook)? {
                        let k = r.frame;
                        results[k] = Some(r);
                    }
                }
            }
        }
        Ok(results.into_iter().map(|r| r.expect("every frame covered by a clip")).collect())
    })
}

use std::time::Instant;

use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{CameraView, Gaussian3D};
use crate::multiview::{update_all, MotionStatus, MotionUpdate, UpdateThresholds};
use crate::pwils::{accumulate_all_views, SolveThresholds, TrackField};
use crate::regularize::{build_knn, detect_static_all, median_filter, propagate, NeighborIndex, StaticRule};
use crate::splat::{rasterize_weights, WeightMap};

/// Count of Gaussians per final status.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatusTally {
    pub solved: usize,
    pub propagated: usize,
    pub static_: usize,
    pub unsolvable: usize,
}

impl StatusTally {
    pub fn from_statuses(statuses: &[MotionStatus]) -> Self {
        let mut t = StatusTally::default();
        for s in statuses {
            match s {
                MotionStatus::Solved => t.solved += 1,
                MotionStatus::Propagated => t.propagated += 1,
                MotionStatus::Static => t.static_ += 1,
                MotionStatus::Unsolvable => t.unsolvable += 1,
            }
        }
        t
    }

    pub fn total(&self) -> usize {
        self.solved + self.propagated + self.static_ + self.unsolvable
    }
}

/// Wall time per stage, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub tracking: f64,
    pub compensation: f64,
    pub refinement: f64,
}

/// Output of one compensated (or initialization) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: usize,
    /// Frame whose Gaussians this result was computed from; equal to
    /// `frame` for initialization frames.
    pub source_frame: usize,
    pub gaussians: Vec<Gaussian3D>,
    pub statuses: Vec<MotionStatus>,
    pub tally: StatusTally,
    pub wall_time: StageTimes,
}

impl FrameResult {
    /// A clip's first frame, taken as given.
    pub fn initialization(frame: usize, gaussians: Vec<Gaussian3D>) -> Self {
        let statuses = vec![MotionStatus::Static; gaussians.len()];
        FrameResult {
            frame,
            source_frame: frame,
            tally: StatusTally::from_statuses(&statuses),
            gaussians,
            statuses,
            wall_time: StageTimes::default(),
        }
    }

    pub fn is_initialization(&self) -> bool {
        self.frame == self.source_frame
    }
}

/// Intermediate products of [`compensate_frame`], for inspection.
#[derive(Debug, Clone)]
pub struct Compensation {
    pub weightmaps: Vec<WeightMap>,
    pub static_flags: Vec<bool>,
    pub raw_updates: Vec<MotionUpdate>,
    pub updates: Vec<MotionUpdate>,
    pub gaussians: Vec<Gaussian3D>,
}

fn check_tracks(gaussians: &[Gaussian3D], cameras: &[CameraView], tracks: &[TrackField]) -> Result<()> {
    if gaussians.is_empty() {
        return Err(Error::InvalidParameter("no Gaussians to compensate".into()));
    }
    let mut seen = vec![false; cameras.len()];
    for t in tracks {
        let cam = cameras
            .get(t.view_id)
            .ok_or_else(|| Error::DimensionMismatch(format!("track for view {} but {} cameras", t.view_id, cameras.len())))?;
        if std::mem::replace(&mut seen[t.view_id], true) {
            return Err(Error::DimensionMismatch(format!("two track fields for view {}", t.view_id)));
        }
        if (t.width, t.height) != (cam.width, cam.height) {
            return Err(Error::DimensionMismatch(format!(
                "track field {}x{} for a {}x{} camera",
                t.width, t.height, cam.width, cam.height
            )));
        }
    }
    Ok(())
}

/// Full per-frame motion compensation: per-view weights, per-view affine
/// motions, multi-view fusion, static detection, median filtering and
/// propagation. `index` is the k-NN index over `frame1` means.
pub fn compensate_with_index(
    frame1: &[Gaussian3D],
    cameras: &[CameraView],
    tracks: &[TrackField],
    index: &NeighborIndex,
    config: &Config,
) -> Result<Compensation> {
    check_tracks(frame1, cameras, tracks)?;
    let weightmaps = tracks
        .par_iter()
        .map(|t| rasterize_weights(t.view_id, &cameras[t.view_id], frame1, config.alpha_cutoff))
        .collect::<Result<Vec<_>>>()?;
    let table = accumulate_all_views(&weightmaps, tracks, frame1.len(), config.static_threshold_px)?;
    let motions = table.solve(&SolveThresholds::from(config));
    let raw_updates = update_all(frame1, &motions, table.n_views(), cameras, &UpdateThresholds::from(config));
    let static_flags = detect_static_all(&table, &StaticRule::from(config));

    let pinned: Vec<MotionUpdate> = raw_updates
        .iter()
        .zip(&static_flags)
        .zip(frame1)
        .map(|((u, &s), g)| if s { MotionUpdate::unchanged(u.gaussian_id, g, MotionStatus::Static) } else { *u })
        .collect();
    let filtered = median_filter(&pinned, index, frame1)?;
    let propagated = propagate(&filtered.updates, index, &static_flags, frame1, config.propagation_average)?;
    let gaussians = propagated
        .updates
        .par_iter()
        .zip(frame1)
        .map(|(u, g)| u.apply(g))
        .collect::<Result<Vec<_>>>()?;
    Ok(Compensation {
        weightmaps,
        static_flags,
        raw_updates,
        updates: propagated.updates,
        gaussians,
    })
}

/// [`compensate_with_index`] building the k-NN index itself.
pub fn compensate_frame(frame1: &[Gaussian3D], cameras: &[CameraView], tracks: &[TrackField], config: &Config) -> Result<FrameResult> {
    let start = Instant::now();
    let means: Vec<_> = frame1.iter().map(|g| g.mean()).collect();
    let index = build_knn(&means, config.knn_k)?;
    let c = compensate_with_index(frame1, cameras, tracks, &index, config)?;
    let statuses: Vec<MotionStatus> = c.updates.iter().map(|u| u.status).collect();
    Ok(FrameResult {
        frame: 0,
        source_frame: 0,
        tally: StatusTally::from_statuses(&statuses),
        gaussians: c.gaussians,
        statuses,
        wall_time: StageTimes {
            compensation: start.elapsed().as_secs_f64(),
            ..StageTimes::default()
        },
    })
}

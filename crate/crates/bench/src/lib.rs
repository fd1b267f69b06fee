//! Fixtures shared by the benchmarks.

use std::time::Instant;

use rayon::prelude::*;
use trackersplat_core::pipeline::{generate_scene, MotionProgram, OracleTracker, SceneSequence};
use trackersplat_core::regularize::{build_knn, NeighborIndex};
use trackersplat_core::{Config, Gaussian3D, TrackField};

/// A scene plus noiseless tracks from frame 0 to every later frame.
pub struct Fixture {
    pub scene: SceneSequence,
    /// `tracks[k - 1]` holds one field per view for target frame `k`.
    pub tracks: Vec<Vec<TrackField>>,
    pub index: NeighborIndex,
    pub config: Config,
}

impl Fixture {
    pub fn new(n_gaussians: usize, n_views: usize, n_frames: usize) -> Self {
        let config = Config::default();
        let scene = generate_scene(7, n_gaussians, n_views, n_frames, MotionProgram::default()).expect("valid scene");
        let trackers: Vec<_> = (0..n_views)
            .map(|v| OracleTracker::new(&scene, v, 0, config.alpha_cutoff).expect("tracker"))
            .collect();
        let tracks = (1..n_frames)
            .map(|k| trackers.iter().map(|t| t.track(&scene, k, 0.0, 0).expect("track")).collect())
            .collect();
        let index = build_knn(&scene.frames[0].iter().map(Gaussian3D::mean).collect::<Vec<_>>(), config.knn_k)
            .expect("knn");
        Fixture {
            scene,
            tracks,
            index,
            config,
        }
    }

    pub fn frame1(&self) -> &[Gaussian3D] {
        &self.scene.frames[0]
    }

    /// Compensates every target frame on a pool of `workers` threads and
    /// returns the wall time in seconds.
    pub fn compensate_all(&self, workers: usize) -> f64 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("pool");
        let start = Instant::now();
        pool.install(|| {
            self.tracks.par_iter().for_each(|tracks| {
                trackersplat_core::pipeline::compensate_with_index(
                    self.frame1(),
                    &self.scene.cameras,
                    tracks,
                    &self.index,
                    &self.config,
                )
                .expect("compensation");
            })
        });
        start.elapsed().as_secs_f64()
    }
}

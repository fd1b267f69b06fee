//! End-to-end orchestration: synthetic scenes, oracle tracking, per-frame
//! compensation on a worker pool, and evaluation against ground truth.

mod compensate;
mod eval;
mod run;
mod scene;
pub mod store;
mod track;

pub use compensate::{compensate_frame, compensate_with_index, Compensation, FrameResult, StageTimes, StatusTally};
pub use eval::{evaluate, frame_metrics, percentile, ErrorStats, FrameMetrics, MetricsReport, CSV_HEADER};
pub use run::{run_pipeline, segment_clips, Clip, ClipMode, NoRefinement, PipelineOptions, RefinementHook};
pub use scene::{SceneLayout, 
    generate_scene, generate_scene_with_rig, ring_cameras, MotionProgram, MotionSpec, ObjectTrajectory, RigSpec, SceneSequence,
};
pub use track::{front_most, oracle_track, OracleTracker};

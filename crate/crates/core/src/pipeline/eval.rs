use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::Gaussian3D;
use crate::multiview::rotation_angle_between;

use super::compensate::{FrameResult, StageTimes, StatusTally};
use super::scene::SceneSequence;

pub const CSV_HEADER: &str = "frame,source_frame,mean_pos_err,p95_pos_err,mean_rot_err_deg,mean_rel_scale_err,\
mover_mean_pos_err,static_mean_pos_err,mover_mean_displacement,\
solved,propagated,static,unsolvable,tracking_s,compensation_s,refinement_s";

/// Errors of a Gaussian set against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mean_pos_err: f64,
    pub p95_pos_err: f64,
    pub mean_rot_err_deg: f64,
    pub mean_rel_scale_err: f64,
    /// Mean over movers; NaN when the scene has no mover list or no movers.
    pub mover_mean_pos_err: f64,
    /// Mean over static Gaussians; NaN when unknown.
    pub static_mean_pos_err: f64,
    /// Mean ground-truth mover displacement from the source frame.
    pub mover_mean_displacement: f64,
}

impl ErrorStats {
    /// Mover error relative to mover displacement.
    pub fn mover_relative_error(&self) -> f64 {
        self.mover_mean_pos_err / self.mover_mean_displacement
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub frame: usize,
    pub source_frame: usize,
    pub errors: ErrorStats,
    pub tally: StatusTally,
    pub wall_time: StageTimes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Metrics for `estimate` against `truth`; `movers` picks the subset
/// statistics and `source` is the ground truth the estimate started from.
pub fn frame_metrics(
    estimate: &[Gaussian3D],
    truth: &[Gaussian3D],
    source: &[Gaussian3D],
    movers: Option<&[bool]>,
) -> Result<ErrorStats> {
    if estimate.len() != truth.len() || source.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated Gaussians against {} ground-truth",
            estimate.len(),
            truth.len()
        )));
    }
    let pos: Vec<f64> = estimate.iter().zip(truth).map(|(e, t)| (e.mean() - t.mean()).norm()).collect();
    let rot = mean_of(
        estimate
            .iter()
            .zip(truth)
            .map(|(e, t)| rotation_angle_between(&e.rotation(), &t.rotation()).to_degrees()),
    );
    let scale = mean_of(estimate.iter().zip(truth).flat_map(|(e, t)| {
        let (es, ts) = (e.scale(), t.scale());
        (0..3).map(move |a| (es[a] - ts[a]).abs() / ts[a])
    }));
    let (mover_err, static_err, displacement) = match movers {
        Some(mask) => (
            mean_of(pos.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| *p)),
            mean_of(pos.iter().zip(mask).filter(|(_, &m)| !m).map(|(p, _)| *p)),
            mean_of(truth.iter().zip(source).zip(mask).filter(|(_, &m)| m).map(|((t, s), _)| (t.mean() - s.mean()).norm())),
        ),
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    Ok(ErrorStats {
        mean_pos_err: mean_of(pos.iter().copied()),
        p95_pos_err: percentile(&pos, 0.95),
        mean_rot_err_deg: rot,
        mean_rel_scale_err: scale,
        mover_mean_pos_err: mover_err,
        static_mean_pos_err: static_err,
        mover_mean_displacement: displacement,
    })
}

/// Per-frame errors of pipeline results against the scene's ground truth.
pub fn evaluate(results: &[FrameResult], scene: &SceneSequence) -> Result<MetricsReport> {
    let mask = scene.mover_mask();
    let frames = results
        .iter()
        .map(|r| {
            let truth = scene
                .frames
                .get(r.frame)
                .ok_or_else(|| Error::DimensionMismatch(format!("result for frame {} beyond the scene", r.frame)))?;
            let source = scene
                .frames
                .get(r.source_frame)
                .ok_or_else(|| Error::DimensionMismatch(format!("source frame {} beyond the scene", r.source_frame)))?;
            Ok(FrameMetrics {
                frame: r.frame,
                source_frame: r.source_frame,
                errors: frame_metrics(&r.gaussians, truth, source, mask.as_deref())?,
                tally: r.tally,
                wall_time: r.wall_time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { frames })
}

impl MetricsReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for m in &self.frames {
            let e = &m.errors;
            writeln!(
                out,
                "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{},{},{},{},{:.6},{:.6},{:.6}",
                m.frame,
                m.source_frame,
                e.mean_pos_err,
                e.p95_pos_err,
                e.mean_rot_err_deg,
                e.mean_rel_scale_err,
                e.mover_mean_pos_err,
                e.static_mean_pos_err,
                e.mover_mean_displacement,
                m.tally.solved,
                m.tally.propagated,
                m.tally.static_,
                m.tally.unsolvable,
                m.wall_time.tracking,
                m.wall_time.compensation,
                m.wall_time.refinement
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let compensated: Vec<&FrameMetrics> = self.frames.iter().filter(|m| m.frame != m.source_frame).collect();
        let _ = writeln!(s, "frames: {} ({} compensated)", self.frames.len(), compensated.len());
        for m in &self.frames {
            let e = &m.errors;
            let _ = write!(
                s,
                "frame {:>4} <- {:>4}: pos {:.3e} (p95 {:.3e}) rot {:.3}deg scale {:.3e}",
                m.frame, m.source_frame, e.mean_pos_err, e.p95_pos_err, e.mean_rot_err_deg, e.mean_rel_scale_err
            );
            if e.mover_mean_displacement > 0.0 {
                let _ = write!(s, " movers {:.2}% of displacement", 100.0 * e.mover_relative_error());
            }
            let _ = writeln!(
                s,
                " [solved {} propagated {} static {} unsolvable {}]",
                m.tally.solved, m.tally.propagated, m.tally.static_, m.tally.unsolvable
            );
        }
        let total = |f: fn(&StageTimes) -> f64| self.frames.iter().map(|m| f(&m.wall_time)).sum::<f64>();
        let _ = writeln!(
            s,
            "stage time: tracking {:.3}s compensation {:.3}s refinement {:.3}s",
            total(|t| t.tracking),
            total(|t| t.compensation),
            total(|t| t.refinement)
        );
        s
    }
}

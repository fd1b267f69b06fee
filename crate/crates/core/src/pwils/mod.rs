//! Per-Gaussian, per-view affine motion from weighted pixel tracks.
//!
//! Each pixel `x` covered by a Gaussian with blending weight `w` and tracked
//! to `x'` adds the rank-one terms `w [x;1][x;1]^T` to `V1` and
//! `w [x;1] x'^T` to `V2`. The motion `[A|b]` then solves `V1 X = V2`.

mod trackfield;

use std::collections::HashMap;

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use rayon::prelude::*;

pub use trackfield::TrackField;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::AffineMotion;
use crate::splat::WeightMap;

/// Rows of pixels accumulated into one private partial before merging.
const ROWS_PER_CHUNK: usize = 8;

/// Running moments for one (Gaussian, view) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionAccumulator {
    pub v1: Matrix3<f64>,
    pub v2: Matrix3x2<f64>,
    pub weight_sum: f64,
    pub pixel_count: usize,
    pub static_pixel_count: usize,
    pub static_weight_sum: f64,
}

impl Default for MotionAccumulator {
    fn default() -> Self {
        MotionAccumulator {
            v1: Matrix3::zeros(),
            v2: Matrix3x2::zeros(),
            weight_sum: 0.0,
            pixel_count: 0,
            static_pixel_count: 0,
            static_weight_sum: 0.0,
        }
    }
}

impl MotionAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds pixel `x` tracked to `x_prime` with weight `w`. Pixels moving less
    /// than `static_threshold_px` also feed the static statistics.
    pub fn accumulate(&mut self, x: Vector2<f64>, x_prime: Vector2<f64>, w: f64, static_threshold_px: f64) {
        let h = Vector3::new(x.x, x.y, 1.0);
        let wh = w * h;
        self.v1 += wh * h.transpose();
        self.v2 += wh * x_prime.transpose();
        self.weight_sum += w;
        self.pixel_count += 1;
        if (x_prime - x).norm() < static_threshold_px {
            self.static_pixel_count += 1;
            self.static_weight_sum += w;
        }
    }

    pub fn merge(&mut self, other: &MotionAccumulator) {
        self.v1 += other.v1;
        self.v2 += other.v2;
        self.weight_sum += other.weight_sum;
        self.pixel_count += other.pixel_count;
        self.static_pixel_count += other.static_pixel_count;
        self.static_weight_sum += other.static_weight_sum;
    }

    /// Weighted least-squares motion, or `None` when the accumulator covers
    /// too few pixels, too little weight, or has a near-singular `V1`.
    pub fn solve(&self, thresholds: &SolveThresholds) -> Option<AffineMotion> {
        if self.pixel_count < thresholds.min_pixels
            || !(self.weight_sum >= thresholds.min_weight)
            || !(self.v1.determinant() >= thresholds.det_floor)
        {
            return None;
        }
        // LU with partial pivoting; one factorization, two right-hand sides.
        let x = self.v1.lu().solve(&self.v2)?;
        let a = Matrix2::new(x[(0, 0)], x[(1, 0)], x[(0, 1)], x[(1, 1)]);
        let b = Vector2::new(x[(2, 0)], x[(2, 1)]);
        AffineMotion::new(a, b).ok()
    }
}

/// Degeneracy limits for [`MotionAccumulator::solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveThresholds {
    pub det_floor: f64,
    pub min_pixels: usize,
    pub min_weight: f64,
}

impl Default for SolveThresholds {
    fn default() -> Self {
        SolveThresholds::from(&Config::default())
    }
}

impl From<&Config> for SolveThresholds {
    fn from(c: &Config) -> Self {
        SolveThresholds {
            det_floor: c.det_floor,
            min_pixels: c.min_pixels,
            min_weight: c.min_weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewStatus {
    Solved,
    Unsolvable,
}

/// Solved motion of one Gaussian in one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewMotion {
    pub gaussian_id: usize,
    pub view_id: usize,
    pub motion: AffineMotion,
    pub weight_sum: f64,
    pub pixel_count: usize,
    pub status: ViewStatus,
}

impl ViewMotion {
    pub fn from_accumulator(
        gaussian_id: usize,
        view_id: usize,
        acc: &MotionAccumulator,
        thresholds: &SolveThresholds,
    ) -> Self {
        let solved = acc.solve(thresholds);
        ViewMotion {
            gaussian_id,
            view_id,
            motion: solved.unwrap_or_else(AffineMotion::identity),
            weight_sum: acc.weight_sum,
            pixel_count: acc.pixel_count,
            status: if solved.is_some() {
                ViewStatus::Solved
            } else {
                ViewStatus::Unsolvable
            },
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == ViewStatus::Solved
    }
}

/// Accumulators for every (Gaussian, view) pair, Gaussian-major:
/// entry `g * n_views + v` belongs to Gaussian `g` in the `v`-th view.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorTable {
    pub n_gaussians: usize,
    pub view_ids: Vec<usize>,
    accumulators: Vec<MotionAccumulator>,
}

impl AccumulatorTable {
    pub fn n_views(&self) -> usize {
        self.view_ids.len()
    }

    pub fn get(&self, gaussian: usize, view: usize) -> &MotionAccumulator {
        &self.accumulators[gaussian * self.n_views() + view]
    }

    /// Per-view accumulators of one Gaussian, in view order.
    pub fn gaussian(&self, gaussian: usize) -> &[MotionAccumulator] {
        let v = self.n_views();
        &self.accumulators[gaussian * v..(gaussian + 1) * v]
    }

    /// Solves every accumulator; same layout as the table.
    pub fn solve(&self, thresholds: &SolveThresholds) -> Vec<ViewMotion> {
        let v = self.n_views();
        self.accumulators
            .par_iter()
            .enumerate()
            .map(|(i, acc)| ViewMotion::from_accumulator(i / v, self.view_ids[i % v], acc, thresholds))
            .collect()
    }
}

fn accumulate_view(
    map: &WeightMap,
    tracks: &TrackField,
    n_gaussians: usize,
    static_threshold_px: f64,
) -> Result<Vec<MotionAccumulator>> {
    if map.width != tracks.width || map.height != tracks.height {
        return Err(Error::DimensionMismatch(format!(
            "view {}: weight map is {}x{} but track field is {}x{}",
            map.view_id, map.width, map.height, tracks.width, tracks.height
        )));
    }
    if let Some(c) = map.contributions().iter().find(|c| c.gaussian_id >= n_gaussians) {
        return Err(Error::DimensionMismatch(format!(
            "contribution from Gaussian {} but only {n_gaussians} Gaussians",
            c.gaussian_id
        )));
    }
    let width = map.width as usize;
    let height = map.height as usize;
    let chunks: Vec<(usize, usize)> = (0..height)
        .step_by(ROWS_PER_CHUNK)
        .map(|y0| (y0, (y0 + ROWS_PER_CHUNK).min(height)))
        .collect();

    // Private partials per chunk; chunk boundaries do not depend on the
    // thread count, and partials merge in chunk order.
    let partials: Vec<HashMap<usize, MotionAccumulator>> = chunks
        .par_iter()
        .map(|&(y0, y1)| {
            let mut local: HashMap<usize, MotionAccumulator> = HashMap::new();
            for p in y0 * width..y1 * width {
                let Some(x_prime) = tracks.get_index(p) else {
                    continue;
                };
                let x = Vector2::new((p % width) as f64, (p / width) as f64);
                for c in map.pixel_at(p) {
                    local
                        .entry(c.gaussian_id)
                        .or_default()
                        .accumulate(x, x_prime, c.weight(), static_threshold_px);
                }
            }
            local
        })
        .collect();

    let mut dense = vec![MotionAccumulator::default(); n_gaussians];
    for partial in &partials {
        for (&g, acc) in partial {
            dense[g].merge(acc);
        }
    }
    Ok(dense)
}

/// Accumulates moments for every Gaussian in every view. `weightmaps[i]`
/// pairs with `tracks[i]`; pixels without a valid track contribute nothing.
pub fn accumulate_all_views(
    weightmaps: &[WeightMap],
    tracks: &[TrackField],
    n_gaussians: usize,
    static_threshold_px: f64,
) -> Result<AccumulatorTable> {
    if weightmaps.len() != tracks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weight maps but {} track fields",
            weightmaps.len(),
            tracks.len()
        )));
    }
    for (m, t) in weightmaps.iter().zip(tracks) {
        if m.view_id != t.view_id {
            return Err(Error::DimensionMismatch(format!(
                "weight map for view {} paired with track field for view {}",
                m.view_id, t.view_id
            )));
        }
    }
    let per_view: Vec<Vec<MotionAccumulator>> = weightmaps
        .par_iter()
        .zip(tracks.par_iter())
        .map(|(m, t)| accumulate_view(m, t, n_gaussians, static_threshold_px))
        .collect::<Result<_>>()?;

    let n_views = weightmaps.len();
    let mut accumulators = vec![MotionAccumulator::default(); n_gaussians * n_views];
    for (v, accs) in per_view.into_iter().enumerate() {
        for (g, acc) in accs.into_iter().enumerate() {
            accumulators[g * n_views + v] = acc;
        }
    }
    Ok(AccumulatorTable {
        n_gaussians,
        view_ids: weightmaps.iter().map(|m| m.view_id).collect(),
        accumulators,
    })
}

/// Solved motion of every Gaussian in every view, Gaussian-major.
pub fn solve_all_views(
    weightmaps: &[WeightMap],
    tracks: &[TrackField],
    n_gaussians: usize,
    static_threshold_px: f64,
    thresholds: &SolveThresholds,
) -> Result<Vec<ViewMotion>> {
    Ok(accumulate_all_views(weightmaps, tracks, n_gaussians, static_threshold_px)?.solve(thresholds))
}

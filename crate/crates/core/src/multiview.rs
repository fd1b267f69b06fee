//! Fuses per-view affine motions into an updated 3D Gaussian.
//!
//! For every view with a solved motion, the frame-1 Gaussian is projected,
//! moved by the view's affine map, and the moved 2D means and covariances
//! from all views are lifted back to 3D: the mean by DLT triangulation, the
//! covariance by a linear least-squares system on half-vectorized matrices,
//! and rotation/scale by an eigen decomposition whose axes are matched to
//! the frame-1 axes.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::sym::vech3_index;
use crate::geometry::{apply_affine, project_gaussian, projection_jacobian, CameraView, Gaussian2D, Gaussian3D, Sym2, Sym3};
use crate::pwils::ViewMotion;

/// Relative gap below which the two smallest DLT singular values count as equal.
pub const DLT_DEGENERACY_RATIO: f64 = 1e-9;
/// Singular value ratio below which the covariance system is rank deficient.
pub const COVARIANCE_RANK_RATIO: f64 = 1e-9;

/// One view's moved 2D Gaussian and the linearization it was projected with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewObservation {
    pub view_id: usize,
    pub updated: Gaussian2D,
    pub linearization: Matrix2x3<f64>,
    pub weight_sum: f64,
}

/// A pixel observation of a 3D point in a calibrated view.
#[derive(Debug, Clone, Copy)]
pub struct PointObservation<'a> {
    pub view_id: usize,
    pub view: &'a CameraView,
    pub pixel: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionStatus {
    /// Motion measured from tracks (possibly median-filtered).
    Solved,
    /// Motion filled in from solved neighbours.
    Propagated,
    /// Pinned to frame-1 parameters.
    Static,
    /// No motion available; frame-1 parameters are kept.
    Unsolvable,
}

/// Updated parameters of one Gaussian for a target frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionUpdate {
    pub gaussian_id: usize,
    pub delta_mean: Vector3<f64>,
    pub new_rotation: UnitQuaternion<f64>,
    pub new_scale: Vector3<f64>,
    pub status: MotionStatus,
}

impl MotionUpdate {
    /// Frame-1 parameters with the given status.
    pub fn unchanged(gaussian_id: usize, g: &Gaussian3D, status: MotionStatus) -> Self {
        MotionUpdate {
            gaussian_id,
            delta_mean: Vector3::zeros(),
            new_rotation: g.rotation(),
            new_scale: g.scale(),
            status,
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == MotionStatus::Solved
    }

    /// The frame-1 Gaussian moved by this update.
    pub fn apply(&self, g: &Gaussian3D) -> Result<Gaussian3D> {
        g.with_geometry(g.mean() + self.delta_mean, self.new_rotation, self.new_scale)
    }
}

/// Multi-view acceptance limits for [`update_gaussian`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateThresholds {
    pub min_views: usize,
    pub min_weight: f64,
    pub min_pixels: usize,
    pub eig_floor: f64,
}

impl Default for UpdateThresholds {
    fn default() -> Self {
        UpdateThresholds::from(&Config::default())
    }
}

impl From<&Config> for UpdateThresholds {
    fn from(c: &Config) -> Self {
        UpdateThresholds {
            min_views: c.min_views,
            min_weight: c.mv_min_weight,
            min_pixels: c.mv_min_pixels,
            eig_floor: c.eig_floor,
        }
    }
}

/// Linear (DLT) triangulation. Rows are stacked in ascending `view_id`
/// order, so the result does not depend on the order of `observations`.
pub fn triangulate_mean(observations: &[PointObservation<'_>]) -> Result<Vector3<f64>> {
    if observations.len() < 2 {
        return Err(Error::InsufficientViews {
            needed: 2,
            got: observations.len(),
        });
    }
    let mut order: Vec<&PointObservation<'_>> = observations.iter().collect();
    order.sort_by_key(|o| o.view_id);

    let mut a = DMatrix::<f64>::zeros(2 * order.len(), 4);
    for (i, obs) in order.iter().enumerate() {
        let p = obs.view.projection_matrix();
        let (u, v) = (obs.pixel.x, obs.pixel.y);
        a.row_mut(2 * i).copy_from(&(u * p.row(2) - p.row(0)));
        a.row_mut(2 * i + 1).copy_from(&(v * p.row(2) - p.row(1)));
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or(Error::DegenerateGeometry)?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let s = &svd.singular_values;
    let s_max = s[idx[idx.len() - 1]];
    if !(s[idx[1]] - s[idx[0]] > DLT_DEGENERACY_RATIO * s_max) {
        return Err(Error::DegenerateGeometry);
    }
    let x = v_t.row(idx[0]);
    let w = x[3];
    if !(w.abs() > f64::EPSILON * x.norm()) {
        return Err(Error::DegenerateGeometry);
    }
    Ok(Vector3::new(x[0] / w, x[1] / w, x[2] / w))
}

/// Coefficients of `vech(M S M^T)` in terms of `vech(S)`: a 3x6 block.
fn sandwich_rows(m: &Matrix2x3<f64>) -> [[f64; 6]; 3] {
    let mut rows = [[0.0; 6]; 3];
    for (r, (a, b)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
        for i in 0..3 {
            for j in i..3 {
                let coeff = if i == j {
                    m[(a, i)] * m[(b, i)]
                } else {
                    m[(a, i)] * m[(b, j)] + m[(a, j)] * m[(b, i)]
                };
                rows[r][vech3_index(i, j)] = coeff;
            }
        }
    }
    rows
}

/// Least-squares `Sigma` with `M_v Sigma M_v^T = cov_v` for every view.
///
/// Two views give six equations but always leave a one-dimensional null
/// space (`d1 d2^T + d2 d1^T`, with `d_v` the null direction of `M_v`), so in
/// practice three or more distinct views are needed; fewer are reported as
/// [`Error::RankDeficient`].
pub fn solve_covariance3d(observations: &[(Matrix2x3<f64>, Sym2)]) -> Result<Sym3> {
    if observations.len() < 2 {
        return Err(Error::InsufficientViews {
            needed: 2,
            got: observations.len(),
        });
    }
    let n = observations.len();
    let mut a = DMatrix::<f64>::zeros(3 * n, 6);
    let mut rhs = DVector::<f64>::zeros(3 * n);
    for (v, (m, cov)) in observations.iter().enumerate() {
        let rows = sandwich_rows(m);
        let target = cov.vech();
        for r in 0..3 {
            for c in 0..6 {
                a[(3 * v + r, c)] = rows[r][c];
            }
            rhs[3 * v + r] = target[r];
        }
    }
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let ratio = if s_max > 0.0 { s_min / s_max } else { 0.0 };
    if !(ratio >= COVARIANCE_RANK_RATIO) {
        return Err(Error::RankDeficient { ratio });
    }
    let x = svd.solve(&rhs, 0.0).map_err(|_| Error::RankDeficient { ratio })?;
    Ok(Sym3::from_vech([x[0], x[1], x[2], x[3], x[4], x[5]]))
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Splits a covariance into rotation and per-axis scale.
///
/// Eigenvectors are assigned to the reference rotation's axes by the
/// permutation maximizing `sum_k |e_pi(k) . r_k|`; near-ties (degenerate
/// eigenspaces) fall back to matching eigenvalues against the squared
/// reference scales. Each eigenvector is flipped to point along its
/// reference axis and the last axis is flipped if needed for `det = +1`.
pub fn decompose_covariance(
    sigma: &Sym3,
    reference_rotation: &UnitQuaternion<f64>,
    reference_scale: &Vector3<f64>,
    eig_floor: f64,
) -> Result<(UnitQuaternion<f64>, Vector3<f64>)> {
    if !sigma.is_finite() {
        return Err(Error::NegativeEigenvalue { value: f64::NAN });
    }
    let eig = sigma.to_matrix().symmetric_eigen();
    let values = eig.eigenvalues;
    let trace = values.sum();
    let min = values.min();
    if !(trace > 0.0) || min < eig_floor * trace {
        return Err(Error::NegativeEigenvalue { value: min });
    }
    let reference = reference_rotation.to_rotation_matrix().into_inner();
    let vectors = eig.eigenvectors;

    let axis_score = |p: &[usize; 3]| -> f64 {
        (0..3).map(|k| vectors.column(p[k]).dot(&reference.column(k)).abs()).sum()
    };
    let magnitude_cost = |p: &[usize; 3]| -> f64 {
        (0..3)
            .map(|k| {
                let target = (reference_scale[k] * reference_scale[k]).max(f64::MIN_POSITIVE);
                (values[p[k]].ln() - target.ln()).powi(2)
            })
            .sum()
    };
    let best_score = PERMUTATIONS.iter().map(axis_score).fold(f64::NEG_INFINITY, f64::max);
    let perm = PERMUTATIONS
        .iter()
        .filter(|p| axis_score(p) >= best_score - 1e-9)
        .min_by(|a, b| magnitude_cost(a).total_cmp(&magnitude_cost(b)))
        .copied()
        .unwrap_or([0, 1, 2]);

    let mut axes = Matrix3::zeros();
    for (k, &p) in perm.iter().enumerate() {
        let mut e = vectors.column(p).into_owned();
        if e.dot(&reference.column(k)) < 0.0 {
            e = -e;
        }
        axes.set_column(k, &e);
    }
    if axes.determinant() < 0.0 {
        let flipped = -axes.column(2);
        axes.set_column(2, &flipped);
    }
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(axes));
    let scale = Vector3::new(values[perm[0]].sqrt(), values[perm[1]].sqrt(), values[perm[2]].sqrt());
    Ok((rotation, scale))
}

/// Per-view observations of `g` moved by each solved motion, sorted by view id.
pub fn view_observations(g: &Gaussian3D, view_motions: &[ViewMotion], views: &[CameraView]) -> Result<Vec<ViewObservation>> {
    let mut out = Vec::new();
    for vm in view_motions.iter().filter(|vm| vm.is_solved()) {
        let view = views.get(vm.view_id).ok_or_else(|| {
            Error::DimensionMismatch(format!("motion for view {} but only {} views", vm.view_id, views.len()))
        })?;
        let (g2, _) = project_gaussian(view, g)?;
        let m = projection_jacobian(view, &g.mean())?;
        out.push(ViewObservation {
            view_id: vm.view_id,
            updated: apply_affine(&g2, &vm.motion),
            linearization: m,
            weight_sum: vm.weight_sum,
        });
    }
    out.sort_by_key(|o| o.view_id);
    Ok(out)
}

fn try_update(g: &Gaussian3D, obs: &[ViewObservation], views: &[CameraView], eig_floor: f64) -> Result<(Vector3<f64>, UnitQuaternion<f64>, Vector3<f64>)> {
    let points: Vec<PointObservation<'_>> = obs
        .iter()
        .map(|o| PointObservation {
            view_id: o.view_id,
            view: &views[o.view_id],
            pixel: o.updated.mean,
        })
        .collect();
    let mean = triangulate_mean(&points)?;
    let covs: Vec<(Matrix2x3<f64>, Sym2)> = obs.iter().map(|o| (o.linearization, o.updated.cov)).collect();
    let sigma = solve_covariance3d(&covs)?;
    let (rotation, scale) = decompose_covariance(&sigma, &g.rotation(), &g.scale(), eig_floor)?;
    Ok((mean, rotation, scale))
}

/// Updated parameters of Gaussian `gaussian_id` from its per-view motions.
///
/// `views` is indexed by view id. Gaussians with too few solved views, too
/// little weight or too few pixels, or whose triangulation, covariance solve
/// or decomposition fails, come back [`MotionStatus::Unsolvable`].
pub fn update_gaussian(
    gaussian_id: usize,
    g: &Gaussian3D,
    view_motions: &[ViewMotion],
    views: &[CameraView],
    thresholds: &UpdateThresholds,
) -> MotionUpdate {
    let unsolvable = MotionUpdate::unchanged(gaussian_id, g, MotionStatus::Unsolvable);
    let solved: Vec<&ViewMotion> = view_motions.iter().filter(|v| v.is_solved()).collect();
    let weight: f64 = solved.iter().map(|v| v.weight_sum).sum();
    let pixels: usize = solved.iter().map(|v| v.pixel_count).sum();
    if solved.len() < thresholds.min_views || !(weight >= thresholds.min_weight) || pixels < thresholds.min_pixels {
        return unsolvable;
    }
    let Ok(obs) = view_observations(g, view_motions, views) else {
        return unsolvable;
    };
    match try_update(g, &obs, views, thresholds.eig_floor) {
        Ok((mean, rotation, scale)) => MotionUpdate {
            gaussian_id,
            delta_mean: mean - g.mean(),
            new_rotation: rotation,
            new_scale: scale,
            status: MotionStatus::Solved,
        },
        Err(_) => unsolvable,
    }
}

/// [`update_gaussian`] for every Gaussian; `motions` is Gaussian-major with
/// `n_views` entries per Gaussian.
pub fn update_all(
    gaussians: &[Gaussian3D],
    motions: &[ViewMotion],
    n_views: usize,
    views: &[CameraView],
    thresholds: &UpdateThresholds,
) -> Vec<MotionUpdate> {
    gaussians
        .par_iter()
        .enumerate()
        .map(|(i, g)| update_gaussian(i, g, &motions[i * n_views..(i + 1) * n_views], views, thresholds))
        .collect()
}

/// Geodesic angle between two rotations, in radians, ignoring quaternion sign.
pub fn rotation_angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let (a, mut b) = (a.coords, b.coords);
    if a.dot(&b) < 0.0 {
        b = -b;
    }
    4.0 * (a - b).norm().atan2((a + b).norm())
}

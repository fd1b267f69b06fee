//! Neighbourhood regularization of per-Gaussian motion updates: static
//! detection, k-NN median filtering of solved updates, and propagation of
//! neighbour motion into unsolvable Gaussians.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::config::{Config, PropagationAverage};
use crate::error::{Error, Result};
use crate::geometry::Gaussian3D;
use crate::multiview::{MotionStatus, MotionUpdate};
use crate::pwils::AccumulatorTable;

/// Lower bound applied to every scale after an additive update.
pub const MIN_SCALE: f64 = 1e-9;

/// Per-view pixel tallies of one Gaussian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticStats {
    pub gaussian_id: usize,
    /// `(pixel_count, static_pixel_count)` per view.
    pub views: Vec<(usize, usize)>,
}

impl StaticStats {
    pub fn from_table(table: &AccumulatorTable, gaussian_id: usize) -> Self {
        StaticStats {
            gaussian_id,
            views: table
                .gaussian(gaussian_id)
                .iter()
                .map(|a| (a.pixel_count, a.static_pixel_count))
                .collect(),
        }
    }
}

/// Thresholds of the static rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticRule {
    pub min_hit_pixels: usize,
    pub static_fraction: f64,
    pub min_views: usize,
}

impl Default for StaticRule {
    fn default() -> Self {
        StaticRule::from(&Config::default())
    }
}

impl From<&Config> for StaticRule {
    fn from(c: &Config) -> Self {
        StaticRule {
            min_hit_pixels: c.min_hit_pixels,
            static_fraction: c.static_fraction,
            min_views: c.static_min_views,
        }
    }
}

/// True when at least `min_views` views have more than `min_hit_pixels`
/// pixels of which more than `static_fraction` stayed put.
pub fn detect_static(stats: &StaticStats, min_hit_pixels: usize, static_fraction: f64, min_views: usize) -> bool {
    let qualifying = stats
        .views
        .iter()
        .filter(|&&(pixels, fixed)| pixels > min_hit_pixels && fixed as f64 / pixels as f64 > static_fraction)
        .count();
    qualifying >= min_views
}

/// [`detect_static`] for every Gaussian of an accumulator table.
pub fn detect_static_all(table: &AccumulatorTable, rule: &StaticRule) -> Vec<bool> {
    (0..table.n_gaussians)
        .into_par_iter()
        .map(|g| {
            detect_static(
                &StaticStats::from_table(table, g),
                rule.min_hit_pixels,
                rule.static_fraction,
                rule.min_views,
            )
        })
        .collect()
}

/// Exact k-nearest-neighbour lists over fixed positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    positions: Vec<Vector3<f64>>,
    k: usize,
    adjacency: Vec<usize>,
}

impl NeighborIndex {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Neighbours per Gaussian, `min(k, n - 1)`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    /// Neighbours of `i` by ascending distance, ties by id.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i * self.k..(i + 1) * self.k]
    }
}

struct Grid {
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl Grid {
    fn new(positions: &[Vector3<f64>], per_cell: usize) -> Grid {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        let volume: f64 = extent.iter().map(|e| e.max(1e-12)).product();
        let mut cell = (volume * per_cell as f64 / positions.len() as f64).cbrt();
        if !(cell.is_finite() && cell > 0.0) {
            cell = 1.0;
        }
        // keep the dense grid bounded for very flat point sets
        let max_cells = 4 * positions.len() + 8;
        let dims_for = |cell: f64| -> [usize; 3] { [0, 1, 2].map(|a| (extent[a] / cell).floor() as usize + 1) };
        let mut dims = dims_for(cell);
        while dims.iter().product::<usize>() > max_cells {
            cell *= 1.5;
            dims = dims_for(cell);
        }
        let mut grid = Grid {
            origin: lo,
            cell,
            dims,
            starts: vec![0; dims.iter().product::<usize>() + 1],
            items: vec![0; positions.len()],
        };
        let cells: Vec<usize> = positions.iter().map(|p| grid.flat(grid.coords(p))).collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for i in 1..grid.starts.len() {
            grid.starts[i] += grid.starts[i - 1];
        }
        let mut fill = grid.starts.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.items[fill[c]] = i;
            fill[c] += 1;
        }
        grid
    }

    fn coords(&self, p: &Vector3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|a| (((p[a] - self.origin[a]) / self.cell).floor().max(0.0) as usize).min(self.dims[a] - 1))
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_items(&self, c: [usize; 3]) -> &[usize] {
        let f = self.flat(c);
        &self.items[self.starts[f]..self.starts[f + 1]]
    }

    /// Calls `f` for each item in cells at Chebyshev distance exactly `r` from `c`.
    fn for_shell(&self, c: [usize; 3], r: usize, mut f: impl FnMut(usize)) {
        let r = r as i64;
        let range = |a: usize| {
            let lo = (c[a] as i64 - r).max(0);
            let hi = (c[a] as i64 + r).min(self.dims[a] as i64 - 1);
            lo..=hi
        };
        for z in range(2) {
            for y in range(1) {
                let shell_yz = (z - c[2] as i64).abs() == r || (y - c[1] as i64).abs() == r;
                for x in range(0) {
                    if !shell_yz && (x - c[0] as i64).abs() != r {
                        continue;
                    }
                    for &i in self.cell_items([x as usize, y as usize, z as usize]) {
                        f(i);
                    }
                }
            }
        }
    }
}

fn knn_order(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Exact k-NN by Euclidean distance using a uniform grid with expanding
/// shells. Equals the brute-force answer, including the tie rule.
pub fn build_knn(positions: &[Vector3<f64>], k: usize) -> Result<NeighborIndex> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("k-NN needs at least 2 points, got {n}")));
    }
    if positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidParameter("non-finite position".into()));
    }
    let k = k.min(n - 1);
    let grid = Grid::new(positions, k.max(1));
    let max_r = *grid.dims.iter().max().unwrap_or(&1);
    let adjacency: Vec<Vec<usize>> = positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if k == 0 {
                return Vec::new();
            }
            let c = grid.coords(p);
            let mut cand: Vec<(f64, usize)> = Vec::new();
            for r in 0..=max_r {
                grid.for_shell(c, r, |j| {
                    if j != i {
                        cand.push(((positions[j] - p).norm_squared(), j));
                    }
                });
                if cand.len() >= k {
                    cand.sort_by(knn_order);
                    cand.truncate(k.max(cand.len().min(4 * k)));
                    let bound = r as f64 * grid.cell;
                    if cand[k - 1].0 < bound * bound {
                        break;
                    }
                }
            }
            cand.sort_by(knn_order);
            cand.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();
    Ok(NeighborIndex {
        positions: positions.to_vec(),
        k,
        adjacency: adjacency.into_iter().flatten().collect(),
    })
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty set");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        let (a, b) = (values[n / 2 - 1], values[n / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

/// Mean that returns a common value bit-exactly.
fn running_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (i, v) in values.enumerate() {
        if i == 0 {
            m = v;
        } else {
            m += (v - m) / (i + 1) as f64;
        }
    }
    m
}

/// Nearest rotation to `m` in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (mut u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let r = u * v_t;
    if r.determinant() >= 0.0 {
        return r;
    }
    let smallest = svd.singular_values.imin();
    let flipped = -u.column(smallest);
    u.set_column(smallest, &flipped);
    u * v_t
}

fn quaternion_from_matrix(m: &Matrix3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m))
}

fn clamp_scale(s: Vector3<f64>) -> Vector3<f64> {
    s.map(|v| if v >= MIN_SCALE { v } else { MIN_SCALE })
}

/// Updates plus the ids of Gaussians that had no usable neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizeOutput {
    pub updates: Vec<MotionUpdate>,
    pub isolated: Vec<usize>,
}

fn rotation_delta(u: &MotionUpdate, g: &Gaussian3D) -> Matrix3<f64> {
    u.new_rotation.to_rotation_matrix().into_inner() - g.rotation_matrix()
}

/// Replaces every Solved update by the componentwise median of the Solved
/// updates among itself and its neighbours. Other statuses pass through.
pub fn median_filter(updates: &[MotionUpdate], index: &NeighborIndex, frame1: &[Gaussian3D]) -> Result<RegularizeOutput> {
    check_lengths(updates.len(), index, frame1)?;
    let results: Vec<(MotionUpdate, bool)> = (0..updates.len())
        .into_par_iter()
        .map(|i| {
            let own = updates[i];
            if own.status != MotionStatus::Solved {
                return (own, false);
            }
            let mut members = vec![i];
            members.extend(index.neighbors(i).iter().copied().filter(|&j| updates[j].status == MotionStatus::Solved));
            if members.len() == 1 {
                return (own, true);
            }
            let g = &frame1[i];
            let mut buf = Vec::with_capacity(members.len());
            let mut med = |f: &dyn Fn(usize) -> f64| -> f64 {
                buf.clear();
                buf.extend(members.iter().map(|&j| f(j)));
                median(&mut buf)
            };
            let delta_mean = Vector3::from_fn(|a, _| med(&|j| updates[j].delta_mean[a]));
            let rot_deltas: Vec<Matrix3<f64>> = members.iter().map(|&j| rotation_delta(&updates[j], &frame1[j])).collect();
            let d_rot = Matrix3::from_fn(|r, c| {
                let mut v: Vec<f64> = rot_deltas.iter().map(|m| m[(r, c)]).collect();
                median(&mut v)
            });
            let d_scale = Vector3::from_fn(|a, _| med(&|j| updates[j].new_scale[a] - frame1[j].scale()[a]));

            let new_rotation = if d_rot == rot_deltas[0] {
                own.new_rotation
            } else {
                quaternion_from_matrix(&nearest_rotation(&(g.rotation_matrix() + d_rot)))
            };
            let own_d_scale = own.new_scale - g.scale();
            let new_scale = if d_scale == own_d_scale { own.new_scale } else { clamp_scale(g.scale() + d_scale) };
            (
                MotionUpdate {
                    delta_mean,
                    new_rotation,
                    new_scale,
                    ..own
                },
                false,
            )
        })
        .collect();
    Ok(split_results(results))
}

fn check_lengths(n: usize, index: &NeighborIndex, frame1: &[Gaussian3D]) -> Result<()> {
    if index.len() != n || frame1.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} updates, {} indexed positions, {} frame-1 Gaussians",
            n,
            index.len(),
            frame1.len()
        )));
    }
    Ok(())
}

fn split_results(results: Vec<(MotionUpdate, bool)>) -> RegularizeOutput {
    let isolated = results.iter().enumerate().filter(|(_, r)| r.1).map(|(i, _)| i).collect();
    RegularizeOutput {
        updates: results.into_iter().map(|r| r.0).collect(),
        isolated,
    }
}

/// Intrinsic XYZ Euler angles `(a, b, c)` with `R = Rx(a) Ry(b) Rz(c)`.
pub fn euler_xyz(r: &Matrix3<f64>) -> Vector3<f64> {
    let s = r[(0, 2)].clamp(-1.0, 1.0);
    let b = s.asin();
    if s.abs() > 1.0 - 1e-12 {
        Vector3::new(r[(2, 1)].atan2(r[(1, 1)]), b, 0.0)
    } else {
        Vector3::new((-r[(1, 2)]).atan2(r[(2, 2)]), b, (-r[(0, 1)]).atan2(r[(0, 0)]))
    }
}

pub fn from_euler_xyz(e: &Vector3<f64>) -> Matrix3<f64> {
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), e.x);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), e.y);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), e.z);
    (rx * ry * rz).into_inner()
}

/// `atan2(mean sin, mean cos)`.
pub fn circular_mean(angles: &[f64]) -> f64 {
    let n = angles.len() as f64;
    let s: f64 = angles.iter().map(|a| a.sin()).sum::<f64>() / n;
    let c: f64 = angles.iter().map(|a| a.cos()).sum::<f64>() / n;
    s.atan2(c)
}

fn circular_median(angles: &[f64]) -> f64 {
    let centre = circular_mean(angles);
    let mut unwrapped: Vec<f64> = angles
        .iter()
        .map(|a| {
            let mut d = (a - centre) % std::f64::consts::TAU;
            if d > std::f64::consts::PI {
                d -= std::f64::consts::TAU;
            } else if d < -std::f64::consts::PI {
                d += std::f64::consts::TAU;
            }
            centre + d
        })
        .collect();
    median(&mut unwrapped)
}

/// Pins static-flagged Gaussians to frame 1 and fills each non-static
/// Unsolvable Gaussian from its Solved, non-static neighbours. Neighbours
/// are read from the input only, so the result does not depend on order.
pub fn propagate(
    updates: &[MotionUpdate],
    index: &NeighborIndex,
    static_flags: &[bool],
    frame1: &[Gaussian3D],
    average: PropagationAverage,
) -> Result<RegularizeOutput> {
    check_lengths(updates.len(), index, frame1)?;
    if static_flags.len() != updates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} static flags for {} updates",
            static_flags.len(),
            updates.len()
        )));
    }
    let results: Vec<(MotionUpdate, bool)> = (0..updates.len())
        .into_par_iter()
        .map(|i| {
            let own = updates[i];
            let g = &frame1[i];
            if static_flags[i] {
                return (MotionUpdate::unchanged(own.gaussian_id, g, MotionStatus::Static), false);
            }
            if own.status != MotionStatus::Unsolvable {
                return (own, false);
            }
            let sources: Vec<usize> = index
                .neighbors(i)
                .iter()
                .copied()
                .filter(|&j| updates[j].status == MotionStatus::Solved && !static_flags[j])
                .collect();
            if sources.is_empty() {
                return (MotionUpdate::unchanged(own.gaussian_id, g, MotionStatus::Unsolvable), true);
            }
            let combine = |f: &dyn Fn(usize) -> f64| -> f64 {
                match average {
                    PropagationAverage::Mean => running_mean(sources.iter().map(|&j| f(j))),
                    PropagationAverage::Median => {
                        let mut v: Vec<f64> = sources.iter().map(|&j| f(j)).collect();
                        median(&mut v)
                    }
                }
            };
            let delta_mean = Vector3::from_fn(|a, _| combine(&|j| updates[j].delta_mean[a]));
            let d_scale = Vector3::from_fn(|a, _| combine(&|j| updates[j].new_scale[a] - frame1[j].scale()[a]));
            let eulers: Vec<Vector3<f64>> = sources
                .iter()
                .map(|&j| {
                    let rel = updates[j].new_rotation.to_rotation_matrix().into_inner() * frame1[j].rotation_matrix().transpose();
                    euler_xyz(&rel)
                })
                .collect();
            let mean_euler = Vector3::from_fn(|a, _| {
                let angles: Vec<f64> = eulers.iter().map(|e| e[a]).collect();
                match average {
                    PropagationAverage::Mean => circular_mean(&angles),
                    PropagationAverage::Median => circular_median(&angles),
                }
            });
            let rotation = nearest_rotation(&(from_euler_xyz(&mean_euler) * g.rotation_matrix()));
            (
                MotionUpdate {
                    gaussian_id: own.gaussian_id,
                    delta_mean,
                    new_rotation: quaternion_from_matrix(&rotation),
                    new_scale: clamp_scale(g.scale() + d_scale),
                    status: MotionStatus::Propagated,
                },
                false,
            )
        })
        .collect();
    Ok(split_results(results))
}

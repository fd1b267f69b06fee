use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, Gaussian3D};

/// `n` cameras evenly spaced on a horizontal ring around the origin, raised
/// by `elevation` radians and looking at the origin with world +z up.
pub fn ring_cameras(n: usize, radius: f64, elevation: f64, focal: f64, width: u32, height: u32) -> Result<Vec<CameraView>> {
    (0..n).map(|i| ring_camera(i, n, radius, elevation, focal, width, height)).collect()
}

fn ring_camera(i: usize, n: usize, radius: f64, elevation: f64, focal: f64, width: u32, height: u32) -> Result<CameraView> {
    let azimuth = std::f64::consts::TAU * i as f64 / n as f64;
    let eye = radius * Vector3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin());
    CameraView::look_at(eye, Vector3::zeros(), Vector3::z(), focal, width, height)
}

/// Synthetic rigid motion: movers are grouped into rigid objects
/// that each translate by `translate` world units per frame along a fixed
/// random direction and rotate by `rotate_deg` per frame about a fixed
/// random axis through their centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionProgram {
    pub mover_fraction: f64,
    pub translate: f64,
    pub rotate_deg: f64,
    pub objects: usize,
    pub object_radius: f64,
    pub layout: SceneLayout,
}

impl Default for MotionProgram {
    fn default() -> Self {
        MotionProgram {
            mover_fraction: 0.3,
            translate: 0.02,
            rotate_deg: 1.0,
            objects: 6,
            object_radius: 0.15,
            layout: SceneLayout::Cloud,
        }
    }
}

/// Geometry of a generated scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SceneLayout {
    /// Flat splats on a ground disc and on spherical shell objects.
    Surfaces,
    /// Small isotropic-ish splats filling balls (movers) and the unit ball (static).
    #[default]
    Cloud,
}

/// Camera rig used by [`generate_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigSpec {
    pub radius: f64,
    /// Camera `i` sits at `elevations[i % 3]` (radians).
    pub elevations: [f64; 3],
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for RigSpec {
    fn default() -> Self {
        RigSpec {
            radius: 4.0,
            elevations: [12f64.to_radians(), 28f64.to_radians(), 44f64.to_radians()],
            focal: 900.0,
            width: 960,
            height: 540,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectTrajectory {
    pub centre: Vector3<f64>,
    pub direction: Unit<Vector3<f64>>,
    pub axis: Unit<Vector3<f64>>,
}

/// Ground-truth motion of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSpec {
    pub program: MotionProgram,
    pub objects: Vec<ObjectTrajectory>,
    /// Object index per Gaussian; `None` for static Gaussians.
    pub assignment: Vec<Option<usize>>,
}

impl MotionSpec {
    pub fn is_mover(&self, gaussian: usize) -> bool {
        self.assignment[gaussian].is_some()
    }

    /// Rotation and translation of object `o` at frame `k`, as the map
    /// `p -> R (p - c) + c + t`.
    pub fn pose(&self, o: usize, k: usize) -> (UnitQuaternion<f64>, Vector3<f64>) {
        let obj = &self.objects[o];
        let angle = (self.program.rotate_deg * k as f64).to_radians();
        let rotation = UnitQuaternion::from_axis_angle(&obj.axis, angle);
        (rotation, obj.direction.into_inner() * (self.program.translate * k as f64))
    }
}

/// Cameras plus ground-truth Gaussians for every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSequence {
    pub cameras: Vec<CameraView>,
    pub frames: Vec<Vec<Gaussian3D>>,
    /// Present for generated scenes and for loaded scenes with a mover list.
    pub motion: Option<MotionSpec>,
}

impl SceneSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_gaussians(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn mover_mask(&self) -> Option<Vec<bool>> {
        self.motion
            .as_ref()
            .map(|m| m.assignment.iter().map(Option::is_some).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_gaussians();
        if self.frames.iter().any(|f| f.len() != n) {
            return Err(Error::DimensionMismatch("frames differ in Gaussian count".into()));
        }
        if let Some(m) = &self.motion {
            if m.assignment.len() != n {
                return Err(Error::DimensionMismatch("mover list does not match Gaussian count".into()));
            }
        }
        Ok(())
    }
}

/// Height of the static ground disc.
pub const GROUND_HEIGHT: f64 = -0.6;
/// Radius of the static ground disc.
pub const GROUND_RADIUS: f64 = 1.0;

fn random_unit(rng: &mut impl Rng) -> Unit<Vector3<f64>> {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    Unit::new_normalize(Vector3::new(x, y, z))
}

fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q = nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    UnitQuaternion::new_normalize(q)
}

/// A flat splat at `mean` whose thin axis is `normal`.
fn surface_splat(rng: &mut impl Rng, mean: Vector3<f64>, normal: &Unit<Vector3<f64>>, tangent_scale: f64) -> Gaussian3D {
    let n = normal.into_inner();
    let mut helper = random_unit(rng).into_inner();
    while helper.cross(&n).norm() < 0.1 {
        helper = random_unit(rng).into_inner();
    }
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    let frame = Matrix3::from_columns(&[t1, t2, n]);
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(frame));
    let scale = Vector3::new(
        tangent_scale * rng.random_range(0.85..1.15),
        tangent_scale * rng.random_range(0.85..1.15),
        tangent_scale * rng.random_range(0.08..0.12),
    );
    Gaussian3D::new(mean, rotation, scale, rng.random_range(0.85..0.99)).expect("valid surface splat")
}

/// Deterministic synthetic scene on the default rig, laid out per
/// [`MotionProgram::layout`]; movers form rigid objects above
/// [`GROUND_HEIGHT`].
pub fn generate_scene(seed: u64, n_gaussians: usize, n_views: usize, n_frames: usize, motion: MotionProgram) -> Result<SceneSequence> {
    generate_scene_with_rig(seed, n_gaussians, n_views, n_frames, motion, RigSpec::default())
}

pub fn generate_scene_with_rig(
    seed: u64,
    n_gaussians: usize,
    n_views: usize,
    n_frames: usize,
    motion: MotionProgram,
    rig: RigSpec,
) -> Result<SceneSequence> {
    if n_views < 3 {
        return Err(Error::InvalidConfig(format!("need at least 3 views, got {n_views}")));
    }
    if n_gaussians < 10 {
        return Err(Error::InvalidConfig(format!("need at least 10 Gaussians, got {n_gaussians}")));
    }
    if n_frames < 1 {
        return Err(Error::InvalidConfig("need at least 1 frame".into()));
    }
    if !(0.0..=1.0).contains(&motion.mover_fraction) {
        return Err(Error::InvalidConfig(format!("mover fraction {} outside [0, 1]", motion.mover_fraction)));
    }
    if !(motion.translate >= 0.0 && motion.translate.is_finite() && motion.rotate_deg.is_finite()) {
        return Err(Error::InvalidConfig("motion magnitudes must be finite and non-negative".into()));
    }
    if !(motion.object_radius > 0.0 && motion.object_radius < 0.5) {
        return Err(Error::InvalidConfig(format!("object radius {} outside (0, 0.5)", motion.object_radius)));
    }

    let cameras = (0..n_views)
        .map(|i| ring_camera(i, n_views, rig.radius, rig.elevations[i % 3], rig.focal, rig.width, rig.height))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_movers = (motion.mover_fraction * n_gaussians as f64).round() as usize;
    let n_objects = if n_movers == 0 { 0 } else { motion.objects.clamp(1, n_movers) };
    let r = motion.object_radius;
    let travel = motion.translate * n_frames.saturating_sub(1) as f64;

    let ring = 0.45;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut objects = Vec::with_capacity(n_objects);
    for o in 0..n_objects {
        let direction = random_unit(&mut rng);
        let azimuth = phase + std::f64::consts::TAU * o as f64 / n_objects as f64 + rng.random_range(-0.2..0.2);
        let lift = r + 0.05 + travel * (-direction.z).max(0.0) + rng.random_range(0.0..0.35);
        objects.push(ObjectTrajectory {
            centre: Vector3::new(ring * azimuth.cos(), ring * azimuth.sin(), GROUND_HEIGHT + lift),
            direction,
            axis: random_unit(&mut rng),
        });
    }

    let mut frame0 = Vec::with_capacity(n_gaussians);
    let mut assignment = Vec::with_capacity(n_gaussians);
    if motion.layout == SceneLayout::Cloud {
        cloud_gaussians(&mut rng, &objects, n_movers, n_gaussians - n_movers, r, travel, &mut frame0, &mut assignment);
    } else {
        surface_gaussians(&mut rng, &objects, n_movers, n_gaussians - n_movers, r, &mut frame0, &mut assignment);
    }
    finish_scene(cameras, frame0, assignment, objects, motion, n_frames)
}

fn surface_gaussians(
    rng: &mut ChaCha8Rng,
    objects: &[ObjectTrajectory],
    n_movers: usize,
    n_static: usize,
    r: f64,
    frame0: &mut Vec<Gaussian3D>,
    assignment: &mut Vec<Option<usize>>,
) {
    let n_objects = objects.len();
    for (o, obj) in objects.iter().enumerate() {
        let count = n_movers / n_objects + usize::from(o < n_movers % n_objects);
        let tangent = 0.6 * (4.0 * std::f64::consts::PI * r * r / count as f64).sqrt();
        let spin = random_rotation(rng);
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        for i in 0..count {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let normal = Unit::new_normalize(spin * Vector3::new(rho * phi.cos(), rho * phi.sin(), z));
            frame0.push(surface_splat(rng, obj.centre + normal.into_inner() * r, &normal, tangent));
            assignment.push(Some(o));
        }
    }
    if n_static > 0 {
        let tangent = 0.6 * (std::f64::consts::PI * GROUND_RADIUS * GROUND_RADIUS / n_static as f64).sqrt();
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let up = Vector3::z_axis();
        for i in 0..n_static {
            let rho = GROUND_RADIUS * ((i as f64 + 0.5) / n_static as f64).sqrt();
            let phi = golden * i as f64;
            let mean = Vector3::new(rho * phi.cos(), rho * phi.sin(), GROUND_HEIGHT);
            frame0.push(surface_splat(rng, mean, &up, tangent));
            assignment.push(None);
        }
    }
}

fn random_in_ball(rng: &mut impl Rng, radius: f64) -> Vector3<f64> {
    loop {
        let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm_squared() <= 1.0 {
            return p * radius;
        }
    }
}

fn distance_to_segment(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

fn cloud_splat(rng: &mut impl Rng, mean: Vector3<f64>) -> Gaussian3D {
    let scale = Vector3::new(rng.random_range(0.004..0.006), rng.random_range(0.004..0.006), rng.random_range(0.004..0.006));
    Gaussian3D::new(mean, random_rotation(rng), scale, rng.random_range(0.6..0.95)).expect("valid cloud splat")
}

#[allow(clippy::too_many_arguments)]
fn cloud_gaussians(
    rng: &mut ChaCha8Rng,
    objects: &[ObjectTrajectory],
    n_movers: usize,
    n_static: usize,
    r: f64,
    travel: f64,
    frame0: &mut Vec<Gaussian3D>,
    assignment: &mut Vec<Option<usize>>,
) {
    for i in 0..n_movers {
        let o = i % objects.len();
        let mean = objects[o].centre + random_in_ball(rng, r);
        frame0.push(cloud_splat(rng, mean));
        assignment.push(Some(o));
    }
    let clearance = r + 0.1;
    for _ in 0..n_static {
        let mut mean = random_in_ball(rng, 1.0);
        for _ in 0..10_000 {
            let clear = objects.iter().all(|o| {
                let end = o.centre + o.direction.into_inner() * travel;
                distance_to_segment(&mean, &o.centre, &end) >= clearance
            });
            if clear {
                break;
            }
            mean = random_in_ball(rng, 1.0);
        }
        frame0.push(cloud_splat(rng, mean));
        assignment.push(None);
    }
}

fn finish_scene(
    cameras: Vec<CameraView>,
    frame0: Vec<Gaussian3D>,
    assignment: Vec<Option<usize>>,
    objects: Vec<ObjectTrajectory>,
    motion: MotionProgram,
    n_frames: usize,
) -> Result<SceneSequence> {
    let spec = MotionSpec {
        program: motion,
        objects,
        assignment,
    };
    let mut frames = Vec::with_capacity(n_frames);
    frames.push(frame0.clone());
    for k in 1..n_frames {
        let frame = frame0
            .iter()
            .zip(&spec.assignment)
            .map(|(g, a)| match a {
                None => Ok(*g),
                Some(o) => {
                    let (rotation, shift) = spec.pose(*o, k);
                    let offset = g.mean() - spec.objects[*o].centre;
                    let mean = g.mean() + shift + (rotation * offset - offset);
                    g.with_geometry(mean, rotation * g.rotation(), g.scale())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(frame);
    }

    let scene = SceneSequence {
        cameras,
        frames,
        motion: Some(spec),
    };
    for (k, frame) in scene.frames.iter().enumerate() {
        for (v, cam) in scene.cameras.iter().enumerate() {
            if let Some(i) = frame.iter().position(|g| cam.to_camera(&g.mean()).z <= 0.0) {
                return Err(Error::InvalidConfig(format!("Gaussian {i} is behind camera {v} at frame {k}")));
            }
        }
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let a = generate_scene(0, 200, 4, 3, MotionProgram::default()).unwrap();
        let b = generate_scene(0, 200, 4, 3, MotionProgram::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(1, 200, 4, 3, MotionProgram::default()).unwrap();
        assert_ne!(a.frames[0], c.frames[0]);
    }

    #[test]
    fn zero_motion_frames_identical() {
        let program = MotionProgram {
            translate: 0.0,
            rotate_deg: 0.0,
            ..MotionProgram::default()
        };
        let s = generate_scene(3, 200, 4, 5, program).unwrap();
        for f in &s.frames[1..] {
            assert_eq!(f, &s.frames[0]);
        }
    }

    #[test]
    fn mover_displacement_matches_program() {
        let program = MotionProgram {
            mover_fraction: 0.3,
            translate: 0.1,
            rotate_deg: 0.0,
            ..MotionProgram::default()
        };
        let s = generate_scene(4, 300, 4, 4, program).unwrap();
        let mask = s.mover_mask().unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 90);
        for k in 1..4 {
            for (i, &m) in mask.iter().enumerate() {
                let d = (s.frames[k][i].mean() - s.frames[k - 1][i].mean()).norm();
                if m {
                    assert!((d - 0.1).abs() < 1e-12, "mover {i} moved {d}");
                } else {
                    assert_eq!(d, 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(generate_scene(0, 5, 4, 2, MotionProgram::default()), Err(Error::InvalidConfig(_))));
        assert!(matches!(generate_scene(0, 50, 2, 2, MotionProgram::default()), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn movers_rotate_rigidly() {
        let s = generate_scene(5, 300, 4, 3, MotionProgram::default()).unwrap();
        let spec = s.motion.as_ref().unwrap();
        let movers: Vec<usize> = (0..300).filter(|&i| spec.assignment[i] == Some(0)).collect();
        let (a, b) = (movers[0], movers[1]);
        let d0 = (s.frames[0][a].mean() - s.frames[0][b].mean()).norm();
        let d2 = (s.frames[2][a].mean() - s.frames[2][b].mean()).norm();
        assert!((d0 - d2).abs() < 1e-12);
    }
}

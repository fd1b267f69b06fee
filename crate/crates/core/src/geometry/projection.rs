use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::{CameraView, Gaussian3D, Sym2, Sym3};
use crate::error::{Error, Result};

/// Camera-space depth at or below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

/// A projected Gaussian on the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2D {
    pub mean: Vector2<f64>,
    pub cov: Sym2,
}

/// A 2D affine map `x -> A x + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMotion {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
}

impl AffineMotion {
    pub fn new(a: Matrix2<f64>, b: Vector2<f64>) -> Result<Self> {
        if !(a.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidParameter("affine motion must be finite".into()));
        }
        Ok(AffineMotion { a, b })
    }

    pub fn identity() -> Self {
        AffineMotion {
            a: Matrix2::identity(),
            b: Vector2::zeros(),
        }
    }

    pub fn translation(b: Vector2<f64>) -> Self {
        AffineMotion {
            a: Matrix2::identity(),
            b,
        }
    }

    pub fn apply(&self, x: &Vector2<f64>) -> Vector2<f64> {
        self.a * x + self.b
    }

    /// `next ∘ self`: first `self`, then `next`.
    pub fn then(&self, next: &AffineMotion) -> AffineMotion {
        AffineMotion {
            a: next.a * self.a,
            b: next.a * self.b + next.b,
        }
    }
}

/// `R S S^T R^T` for the Gaussian's rotation and scale.
pub fn covariance3d(g: &Gaussian3D) -> Sym3 {
    let r = g.rotation_matrix();
    let s2 = g.scale().component_mul(&g.scale());
    // R diag(s^2) R^T = sum_k s_k^2 r_k r_k^T
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let col = r.column(k);
        m += s2[k] * col * col.transpose();
    }
    Sym3::from_matrix(&m)
}

fn camera_point(view: &CameraView, p: &Vector3<f64>) -> Result<Vector3<f64>> {
    let pc = view.to_camera(p);
    if !(pc.z > MIN_DEPTH) {
        return Err(Error::PointBehindCamera { depth: pc.z });
    }
    Ok(pc)
}

/// Pinhole projection of a world point; returns pixel coordinates and depth.
pub fn project_point(view: &CameraView, p: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
    let pc = camera_point(view, p)?;
    let px = Vector2::new(
        view.fx * pc.x / pc.z + view.cx,
        view.fy * pc.y / pc.z + view.cy,
    );
    Ok((px, pc.z))
}

/// Linearization of [`project_point`] with respect to the world point:
/// the EWA pinhole Jacobian times the world-to-camera rotation.
pub fn projection_jacobian(view: &CameraView, p: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
    let pc = camera_point(view, p)?;
    let inv_z = 1.0 / pc.z;
    let j = Matrix2x3::new(
        view.fx * inv_z,
        0.0,
        -view.fx * pc.x * inv_z * inv_z,
        0.0,
        view.fy * inv_z,
        -view.fy * pc.y * inv_z * inv_z,
    );
    Ok(j * view.rotation())
}

/// Projects a 3D Gaussian to the image plane, returning it with its depth.
pub fn project_gaussian(view: &CameraView, g: &Gaussian3D) -> Result<(Gaussian2D, f64)> {
    let (mean, depth) = project_point(view, &g.mean())?;
    let m = projection_jacobian(view, &g.mean())?;
    let cov = m * covariance3d(g).to_matrix() * m.transpose();
    Ok((
        Gaussian2D {
            mean,
            cov: Sym2::from_matrix(&cov),
        },
        depth,
    ))
}

/// Moves a 2D Gaussian by an affine map: `mean' = A mean + b`, `cov' = A cov A^T`.
pub fn apply_affine(g2: &Gaussian2D, m: &AffineMotion) -> Gaussian2D {
    let cov = m.a * g2.cov.to_matrix() * m.a.transpose();
    Gaussian2D {
        mean: m.apply(&g2.mean),
        cov: Sym2::from_matrix(&cov),
    }
}

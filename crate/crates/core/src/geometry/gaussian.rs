use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// One anisotropic 3D Gaussian: mean, orientation, per-axis scale, opacity.
///
/// The covariance `R S S^T R^T` is derived on demand by
/// [`covariance3d`](crate::geometry::covariance3d) and never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D {
    mean: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
    scale: Vector3<f64>,
    opacity: f64,
}

impl Gaussian3D {
    pub fn new(
        mean: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        scale: Vector3<f64>,
        opacity: f64,
    ) -> Result<Self> {
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite mean {mean:?}")));
        }
        if !rotation.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite rotation".into()));
        }
        if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale must be strictly positive, got {scale:?}"
            )));
        }
        if !(opacity > 0.0 && opacity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "opacity must lie in (0, 1], got {opacity}"
            )));
        }
        // re-normalize only when off unit length (e.g. built with
        // `new_unchecked`), so stored values round-trip bit-exactly
        let rotation = if (rotation.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
            rotation
        } else {
            UnitQuaternion::new_normalize(rotation.into_inner())
        };
        Ok(Gaussian3D {
            mean,
            rotation,
            scale,
            opacity,
        })
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.mean
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.scale
    }

    pub fn opacity(&self) -> f64 {
        self.opacity
    }

    /// Same Gaussian with new geometry; opacity is carried over.
    pub fn with_geometry(
        &self,
        mean: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        scale: Vector3<f64>,
    ) -> Result<Self> {
        Gaussian3D::new(mean, rotation, scale, self.opacity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Quaternion;

    fn q() -> UnitQuaternion<f64> {
        UnitQuaternion::identity()
    }

    #[test]
    fn rejects_bad_scale_and_opacity() {
        let m = Vector3::zeros();
        assert!(Gaussian3D::new(m, q(), Vector3::new(1.0, 0.0, 1.0), 0.5).is_err());
        assert!(Gaussian3D::new(m, q(), Vector3::new(1.0, -1.0, 1.0), 0.5).is_err());
        assert!(Gaussian3D::new(m, q(), Vector3::repeat(1.0), 0.0).is_err());
        assert!(Gaussian3D::new(m, q(), Vector3::repeat(1.0), 1.5).is_err());
        assert!(Gaussian3D::new(m, q(), Vector3::repeat(1.0), 1.0).is_ok());
    }

    #[test]
    fn renormalizes_unchecked_quaternion() {
        let raw = UnitQuaternion::new_unchecked(Quaternion::new(2.0, 0.0, 0.0, 0.0));
        let g = Gaussian3D::new(Vector3::zeros(), raw, Vector3::repeat(1.0), 0.5).unwrap();
        assert!((g.rotation().quaternion().norm() - 1.0).abs() < 1e-12);
    }
}

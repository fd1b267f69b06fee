use nalgebra::{Matrix3, Matrix3x4, Rotation3, Vector3};

use crate::error::{Error, Result};

/// Pinhole camera with a rigid world-to-camera transform.
///
/// Camera frame: x right, y down, z forward. A world point `p` maps to
/// camera space as `R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraView {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraView {
    /// Builds a camera from a world-to-camera rotation matrix, which must be
    /// orthonormal with determinant +1 to within `1e-9`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let orth_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if !(orth_err <= 1e-9) || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "camera rotation is not a proper rotation".into(),
            ));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite camera translation".into()));
        }
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidParameter("non-finite principal point".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("image dimensions must be positive".into()));
        }
        Ok(CameraView {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, with `up` mapped to image-up.
    /// The principal point is the image center.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidParameter("eye coincides with target".into()))?;
        let down = (-up + forward * up.dot(&forward))
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidParameter("up is parallel to view direction".into()))?;
        let right = down.cross(&forward);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        CameraView::new(
            rotation,
            translation,
            focal,
            focal,
            0.5 * f64::from(width - 1),
            0.5 * f64::from(height - 1),
            width,
            height,
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        self.rotation.matrix()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// The 3x4 pinhole projection `K [R | t]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        self.intrinsics() * rt
    }

    /// World point on the ray through pixel `(u, v)` at camera-space depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let pc = Vector3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth);
        self.rotation.inverse() * (pc - self.translation)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

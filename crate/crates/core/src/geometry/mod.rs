//! Domain types and the 3D to 2D projection math.

mod camera;
mod gaussian;
mod projection;
pub(crate) mod sym;

pub use camera::CameraView;
pub use gaussian::Gaussian3D;
pub use projection::{
    apply_affine, covariance3d, project_gaussian, project_point, projection_jacobian,
    AffineMotion, Gaussian2D, MIN_DEPTH,
};
pub use sym::{Sym2, Sym3};

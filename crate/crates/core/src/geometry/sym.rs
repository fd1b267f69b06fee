use nalgebra::{Matrix2, Matrix3};

/// Symmetric 2x2 matrix stored as its three unique entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Sym2 { xx, xy, yy }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Sym2::new(a, 0.0, b)
    }

    /// Symmetric part of a general matrix, `(m + m^T) / 2`.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Sym2 {
            xx: m[(0, 0)],
            xy: 0.5 * (m[(0, 1)] + m[(1, 0)]),
            yy: m[(1, 1)],
        }
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.xx, self.xy, self.xy, self.yy)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let radius = half_diff.hypot(self.xy);
        [mean - radius, mean + radius]
    }

    /// Half-vectorization `(xx, xy, yy)`.
    pub fn vech(&self) -> [f64; 3] {
        [self.xx, self.xy, self.yy]
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }
}

/// Symmetric 3x3 matrix stored as its six unique entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl Sym3 {
    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Sym3 {
            xx: a,
            xy: 0.0,
            xz: 0.0,
            yy: b,
            yz: 0.0,
            zz: c,
        }
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Sym3 {
            xx: m[(0, 0)],
            xy: 0.5 * (m[(0, 1)] + m[(1, 0)]),
            xz: 0.5 * (m[(0, 2)] + m[(2, 0)]),
            yy: m[(1, 1)],
            yz: 0.5 * (m[(1, 2)] + m[(2, 1)]),
            zz: m[(2, 2)],
        }
    }

    /// Inverse of [`Sym3::vech`].
    pub fn from_vech(v: [f64; 6]) -> Self {
        Sym3 {
            xx: v[0],
            xy: v[1],
            xz: v[2],
            yy: v[3],
            yz: v[4],
            zz: v[5],
        }
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }

    /// Half-vectorization in row-major upper-triangle order
    /// `(xx, xy, xz, yy, yz, zz)`.
    pub fn vech(&self) -> [f64; 6] {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.to_matrix().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.vech().iter().all(|v| v.is_finite())
    }
}

/// Index of entry `(i, j)` of a symmetric 3x3 matrix in [`Sym3::vech`] order.
pub(crate) const fn vech3_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match (i, j) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

//! CPU weight rasterizer: per-pixel blending weights `alpha * T` for every
//! Gaussian covering a pixel, composited front to back.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{project_gaussian, CameraView, Gaussian3D, Sym2};

/// Upper clamp on a single contribution's alpha.
pub const ALPHA_CLAMP: f64 = 0.999;
/// Compositing stops once the residual transmittance drops below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Footprints are cut at this Mahalanobis radius.
pub const FOOTPRINT_SIGMA: f64 = 3.0;
/// Smallest admissible `det(Sigma_2D)`.
pub const DET_FLOOR_2D: f64 = 1e-12;

/// One Gaussian's contribution to one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelContribution {
    pub gaussian_id: usize,
    pub pixel: [u32; 2],
    pub alpha: f64,
    pub transmittance: f64,
}

impl PixelContribution {
    /// Blending weight `alpha * T`.
    pub fn weight(&self) -> f64 {
        self.alpha * self.transmittance
    }
}

/// All contributions of one view, grouped by pixel in row-major order and
/// sorted front to back within each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub view_id: usize,
    pub width: u32,
    pub height: u32,
    offsets: Vec<usize>,
    contributions: Vec<PixelContribution>,
    /// Gaussians skipped because their projected covariance was degenerate.
    pub degenerate: Vec<usize>,
}

impl WeightMap {
    /// Contributions at pixel `(x, y)`, front to back.
    pub fn pixel(&self, x: u32, y: u32) -> &[PixelContribution] {
        let i = y as usize * self.width as usize + x as usize;
        &self.contributions[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Contributions of the `index`-th pixel in row-major order.
    pub fn pixel_at(&self, index: usize) -> &[PixelContribution] {
        &self.contributions[self.offsets[index]..self.offsets[index + 1]]
    }

    pub fn contributions(&self) -> &[PixelContribution] {
        &self.contributions
    }

    pub fn len(&self) -> usize {
        self.contributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contributions.is_empty()
    }

    /// Writes one line per contribution:
    /// `view_id pixel_x pixel_y gaussian_id alpha transmittance`.
    pub fn write_debug_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for c in &self.contributions {
            writeln!(
                out,
                "{} {} {} {} {:.8e} {:.8e}",
                self.view_id, c.pixel[0], c.pixel[1], c.gaussian_id, c.alpha, c.transmittance
            )?;
        }
        Ok(())
    }
}

/// Inverse of a symmetric 2x2 matrix.
pub fn invert_2x2(cov: &Sym2) -> Result<Sym2> {
    let det = cov.det();
    if !(det >= DET_FLOOR_2D) {
        return Err(Error::DegenerateCovariance { det });
    }
    let inv_det = 1.0 / det;
    Ok(Sym2::new(cov.yy * inv_det, -cov.xy * inv_det, cov.xx * inv_det))
}

struct Splat {
    depth: f64,
    /// (row-major pixel index, alpha)
    pixels: Vec<(usize, f64)>,
}

enum Footprint {
    Invisible,
    Degenerate,
    Visible(Splat),
}

fn footprint(view: &CameraView, g: &Gaussian3D, alpha_cutoff: f64) -> Footprint {
    let Ok((g2, depth)) = project_gaussian(view, g) else {
        return Footprint::Invisible;
    };
    let Ok(inv) = invert_2x2(&g2.cov) else {
        return Footprint::Degenerate;
    };
    let rx = FOOTPRINT_SIGMA * g2.cov.xx.sqrt();
    let ry = FOOTPRINT_SIGMA * g2.cov.yy.sqrt();
    let (mx, my) = (g2.mean.x, g2.mean.y);
    let x0 = (mx - rx).ceil().max(0.0);
    let x1 = (mx + rx).floor().min(f64::from(view.width) - 1.0);
    let y0 = (my - ry).ceil().max(0.0);
    let y1 = (my + ry).floor().min(f64::from(view.height) - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return Footprint::Invisible;
    }
    let max_d2 = FOOTPRINT_SIGMA * FOOTPRINT_SIGMA;
    let mut pixels = Vec::new();
    for y in y0 as u32..=y1 as u32 {
        let dy = f64::from(y) - my;
        for x in x0 as u32..=x1 as u32 {
            let dx = f64::from(x) - mx;
            let d2 = inv.xx * dx * dx + 2.0 * inv.xy * dx * dy + inv.yy * dy * dy;
            if d2 > max_d2 {
                continue;
            }
            let alpha = (g.opacity() * (-0.5 * d2).exp()).min(ALPHA_CLAMP);
            if alpha < alpha_cutoff {
                continue;
            }
            pixels.push((y as usize * view.width as usize + x as usize, alpha));
        }
    }
    Footprint::Visible(Splat { depth, pixels })
}

/// Rasterizes blending weights of `gaussians` into `view`.
///
/// Each Gaussian covers the integer pixels inside its 3-sigma ellipse; alpha
/// is `opacity * G(x)` clamped to [`ALPHA_CLAMP`], and contributions below
/// `alpha_cutoff` are dropped. Pixels are composited front to back by
/// Gaussian depth (ties broken by index) until the transmittance falls below
/// [`MIN_TRANSMITTANCE`]. Gaussians with degenerate projected covariance are
/// skipped and listed in [`WeightMap::degenerate`]. The output does not
/// depend on the rayon thread count.
pub fn rasterize_weights(
    view_id: usize,
    view: &CameraView,
    gaussians: &[Gaussian3D],
    alpha_cutoff: f64,
) -> Result<WeightMap> {
    if !(alpha_cutoff > 0.0 && alpha_cutoff < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha_cutoff must lie in (0, 1), got {alpha_cutoff}"
        )));
    }
    let footprints: Vec<Footprint> = gaussians
        .par_iter()
        .map(|g| footprint(view, g, alpha_cutoff))
        .collect();

    let n_pixels = view.pixel_count();
    let mut counts = vec![0usize; n_pixels + 1];
    let mut degenerate = Vec::new();
    for (id, fp) in footprints.iter().enumerate() {
        match fp {
            Footprint::Visible(s) => {
                for &(p, _) in &s.pixels {
                    counts[p + 1] += 1;
                }
            }
            Footprint::Degenerate => degenerate.push(id),
            Footprint::Invisible => {}
        }
    }
    for i in 0..n_pixels {
        counts[i + 1] += counts[i];
    }
    let bucket_offsets = counts;

    // (depth, gaussian id, alpha) bucketed by pixel
    let mut buckets = vec![(0.0f64, 0usize, 0.0f64); bucket_offsets[n_pixels]];
    let mut cursor = bucket_offsets.clone();
    for (id, fp) in footprints.iter().enumerate() {
        if let Footprint::Visible(s) = fp {
            for &(p, alpha) in &s.pixels {
                buckets[cursor[p]] = (s.depth, id, alpha);
                cursor[p] += 1;
            }
        }
    }
    drop(footprints);

    let width = view.width as usize;
    let rows: Vec<(Vec<PixelContribution>, Vec<usize>)> = (0..view.height as usize)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::new();
            let mut per_pixel = Vec::with_capacity(width);
            let mut scratch = Vec::new();
            for x in 0..width {
                let p = y * width + x;
                scratch.clear();
                scratch.extend_from_slice(&buckets[bucket_offsets[p]..bucket_offsets[p + 1]]);
                scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let before = out.len();
                let mut t = 1.0;
                for &(_, id, alpha) in &scratch {
                    if t < MIN_TRANSMITTANCE {
                        break;
                    }
                    out.push(PixelContribution {
                        gaussian_id: id,
                        pixel: [x as u32, y as u32],
                        alpha,
                        transmittance: t,
                    });
                    t *= 1.0 - alpha;
                }
                per_pixel.push(out.len() - before);
            }
            (out, per_pixel)
        })
        .collect();

    let mut offsets = Vec::with_capacity(n_pixels + 1);
    offsets.push(0);
    let mut contributions = Vec::with_capacity(rows.iter().map(|r| r.0.len()).sum());
    for (row, per_pixel) in rows {
        for n in per_pixel {
            offsets.push(offsets.last().unwrap() + n);
        }
        contributions.extend(row);
    }

    Ok(WeightMap {
        view_id,
        width: view.width,
        height: view.height,
        offsets,
        contributions,
        degenerate,
    })
}

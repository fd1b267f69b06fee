use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{project_point, CameraView};
use crate::pwils::TrackField;
use crate::splat::rasterize_weights;

use super::scene::SceneSequence;

#[derive(Debug, Clone, Copy)]
struct Anchor {
    gaussian: usize,
    point: Vector3<f64>,
}

type RigidStep = (Matrix3<f64>, Vector3<f64>, Vector3<f64>);

/// Front-most Gaussian per pixel of one view at a source frame, with the
/// pixel back-projected onto that Gaussian's depth plane.
#[derive(Debug, Clone)]
pub struct OracleTracker {
    view_id: usize,
    view: CameraView,
    source_frame: usize,
    anchors: Vec<Option<Anchor>>,
}

impl OracleTracker {
    pub fn new(scene: &SceneSequence, view_id: usize, source_frame: usize, alpha_cutoff: f64) -> Result<Self> {
        let view = *scene
            .cameras
            .get(view_id)
            .ok_or_else(|| Error::InvalidParameter(format!("no camera {view_id}")))?;
        let source = scene
            .frames
            .get(source_frame)
            .ok_or_else(|| Error::InvalidParameter(format!("no frame {source_frame}")))?;
        let map = rasterize_weights(view_id, &view, source, alpha_cutoff)?;
        let width = view.width as usize;
        let anchors = (0..view.pixel_count())
            .into_par_iter()
            .map(|i| {
                let mut best: Option<(usize, f64)> = None;
                for c in map.pixel_at(i) {
                    if best.is_none_or(|(_, w)| c.weight() > w) {
                        best = Some((c.gaussian_id, c.weight()));
                    }
                }
                best.map(|(g, _)| {
                    let depth = view.to_camera(&source[g].mean()).z;
                    Anchor {
                        gaussian: g,
                        point: view.unproject((i % width) as f64, (i / width) as f64, depth),
                    }
                })
            })
            .collect();
        Ok(OracleTracker {
            view_id,
            view,
            source_frame,
            anchors,
        })
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    pub fn source_frame(&self) -> usize {
        self.source_frame
    }

    /// Tracks from the source frame to `target_frame`, with isotropic
    /// gaussian noise keyed by `(seed, view, source, target, pixel)`.
    pub fn track(&self, scene: &SceneSequence, target_frame: usize, noise_sigma_px: f64, seed: u64) -> Result<TrackField> {
        let source = &scene.frames[self.source_frame];
        let target = scene
            .frames
            .get(target_frame)
            .ok_or_else(|| Error::InvalidParameter(format!("no frame {target_frame}")))?;
        if target.len() != source.len() {
            return Err(Error::DimensionMismatch("frames differ in Gaussian count".into()));
        }
        if !(noise_sigma_px >= 0.0 && noise_sigma_px.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise sigma {noise_sigma_px}")));
        }
        // per Gaussian: (R_t R_s^T, mu_s, mu_t) when it moved
        let motions: Vec<Option<RigidStep>> = source
            .iter()
            .zip(target)
            .map(|(s, t)| (s != t).then(|| (t.rotation_matrix() * s.rotation_matrix().transpose(), s.mean(), t.mean())))
            .collect();
        let width = self.view.width as usize;
        let rows: Vec<(Vec<Vector2<f64>>, Vec<bool>)> = (0..self.view.height as usize)
            .into_par_iter()
            .map(|y| {
                let mut rng = noise_stream(seed, self.view_id, self.source_frame, target_frame);
                let mut targets = Vec::with_capacity(width);
                let mut valid = Vec::with_capacity(width);
                for x in 0..width {
                    let pixel = Vector2::new(x as f64, y as f64);
                    let moved = self.anchors[y * width + x].and_then(|a| match motions[a.gaussian] {
                        None => Some(pixel),
                        Some((r, from, to)) => project_point(&self.view, &(r * (a.point - from) + to)).ok().map(|p| p.0),
                    });
                    match moved {
                        Some(p) => {
                            let p = if noise_sigma_px > 0.0 {
                                rng.set_word_pos(4 * (y * width + x) as u128);
                                p + noise_sigma_px * box_muller(&mut rng)
                            } else {
                                p
                            };
                            targets.push(p);
                            valid.push(true);
                        }
                        None => {
                            targets.push(pixel);
                            valid.push(false);
                        }
                    }
                }
                (targets, valid)
            })
            .collect();
        let (targets, valid): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        TrackField::new(
            self.view_id,
            self.view.width,
            self.view.height,
            targets.into_iter().flatten().collect(),
            valid.into_iter().flatten().collect(),
        )
    }
}

fn noise_stream(seed: u64, view: usize, source: usize, target: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (i, v) in [seed, view as u64, source as u64, target as u64].into_iter().enumerate() {
        key[8 * i..8 * i + 8].copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Two independent standard normals from exactly two 64-bit draws, so each
/// pixel owns a fixed slice of the stream.
fn box_muller(rng: &mut ChaCha8Rng) -> Vector2<f64> {
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    Vector2::new(r * theta.cos(), r * theta.sin())
}

/// Dense tracks of one view from `source_frame` to `target_frame`.
pub fn oracle_track(
    scene: &SceneSequence,
    view: usize,
    source_frame: usize,
    target_frame: usize,
    noise_sigma_px: f64,
    seed: u64,
    alpha_cutoff: f64,
) -> Result<TrackField> {
    OracleTracker::new(scene, view, source_frame, alpha_cutoff)?.track(scene, target_frame, noise_sigma_px, seed)
}

/// Source-frame Gaussians as seen by the tracker; exposed for tests.
pub fn front_most(scene: &SceneSequence, view: usize, source_frame: usize, alpha_cutoff: f64) -> Result<Vec<Option<usize>>> {
    Ok(OracleTracker::new(scene, view, source_frame, alpha_cutoff)?
        .anchors
        .iter()
        .map(|a| a.map(|a| a.gaussian))
        .collect())
}

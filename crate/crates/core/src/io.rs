//! Text formats for Gaussian sets and camera rigs.
//!
//! ```text
//! GAUSS3D v1 <count>
//! mean_x mean_y mean_z quat_w quat_x quat_y quat_z scale_x scale_y scale_z opacity
//!
//! CAMERA v1
//! r00 r01 r02 r10 r11 r12 r20 r21 r22 t_x t_y t_z fx fy cx cy width height
//! ```
//!
//! Reals are written with 17 significant digits, which round-trips `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, Gaussian3D};

fn fields(line: &str, lineno: usize, expected: usize) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad number {s:?}"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != expected {
        return Err(Error::parse(lineno, format!("expected {expected} fields, got {}", values.len())));
    }
    Ok(values)
}

fn content_lines<R: BufRead>(input: R) -> impl Iterator<Item = Result<(usize, String)>> {
    input
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(Error::from))
        .filter(|r| r.as_ref().map_or(true, |(_, l)| !l.trim().is_empty()))
}

pub fn write_gaussians<W: Write>(mut out: W, gaussians: &[Gaussian3D]) -> Result<()> {
    writeln!(out, "GAUSS3D v1 {}", gaussians.len())?;
    for g in gaussians {
        let m = g.mean();
        let q = g.rotation();
        let s = g.scale();
        writeln!(
            out,
            "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            m.x,
            m.y,
            m.z,
            q.w,
            q.i,
            q.j,
            q.k,
            s.x,
            s.y,
            s.z,
            g.opacity()
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_gaussians<R: BufRead>(input: R) -> Result<Vec<Gaussian3D>> {
    let mut lines = content_lines(input);
    let (lineno, header) = lines.next().ok_or_else(|| Error::parse(1, "empty Gaussian file"))??;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 || head[0] != "GAUSS3D" || head[1] != "v1" {
        return Err(Error::parse(lineno, format!("bad Gaussian header {header:?}")));
    }
    let count: usize = head[2].parse().map_err(|_| Error::parse(lineno, "bad Gaussian count"))?;
    let mut out = Vec::with_capacity(count.min(1 << 24));
    for line in lines {
        let (lineno, line) = line?;
        if out.len() == count {
            return Err(Error::parse(lineno, "more Gaussians than the header count"));
        }
        let v = fields(&line, lineno, 11)?;
        let q = Quaternion::new(v[3], v[4], v[5], v[6]);
        if !(q.norm() > 0.0) {
            return Err(Error::parse(lineno, "zero quaternion"));
        }
        let g = Gaussian3D::new(
            Vector3::new(v[0], v[1], v[2]),
            UnitQuaternion::new_unchecked(q),
            Vector3::new(v[7], v[8], v[9]),
            v[10],
        )
        .map_err(|e| Error::parse(lineno, e.to_string()))?;
        out.push(g);
    }
    if out.len() != count {
        return Err(Error::parse(0, format!("header promises {count} Gaussians, found {}", out.len())));
    }
    Ok(out)
}

pub fn write_cameras<W: Write>(mut out: W, cameras: &[CameraView]) -> Result<()> {
    writeln!(out, "CAMERA v1")?;
    for c in cameras {
        let r = c.rotation();
        let t = c.translation();
        let mut parts: Vec<String> = Vec::with_capacity(18);
        for i in 0..3 {
            for j in 0..3 {
                parts.push(format!("{:.16e}", r[(i, j)]));
            }
        }
        parts.extend(t.iter().map(|v| format!("{v:.16e}")));
        parts.extend([c.fx, c.fy, c.cx, c.cy].iter().map(|v| format!("{v:.16e}")));
        parts.push(c.width.to_string());
        parts.push(c.height.to_string());
        writeln!(out, "{}", parts.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_cameras<R: BufRead>(input: R) -> Result<Vec<CameraView>> {
    let mut lines = content_lines(input);
    let (lineno, header) = lines.next().ok_or_else(|| Error::parse(1, "empty camera file"))??;
    if header.split_whitespace().collect::<Vec<_>>() != ["CAMERA", "v1"] {
        return Err(Error::parse(lineno, format!("bad camera header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        let (lineno, line) = line?;
        let v = fields(&line, lineno, 18)?;
        let dim = |x: f64| -> Result<u32> {
            if x.fract() == 0.0 && x >= 1.0 && x <= u32::MAX as f64 {
                Ok(x as u32)
            } else {
                Err(Error::parse(lineno, format!("bad image dimension {x}")))
            }
        };
        let rotation = Matrix3::from_row_slice(&v[0..9]);
        let cam = CameraView::new(rotation, Vector3::new(v[9], v[10], v[11]), v[12], v[13], v[14], v[15], dim(v[16])?, dim(v[17])?)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        out.push(cam);
    }
    Ok(out)
}

pub fn save_gaussians(path: impl AsRef<Path>, gaussians: &[Gaussian3D]) -> Result<()> {
    write_gaussians(BufWriter::new(File::create(path)?), gaussians)
}

pub fn load_gaussians(path: impl AsRef<Path>) -> Result<Vec<Gaussian3D>> {
    read_gaussians(BufReader::new(File::open(path)?))
}

pub fn save_cameras(path: impl AsRef<Path>, cameras: &[CameraView]) -> Result<()> {
    write_cameras(BufWriter::new(File::create(path)?), cameras)
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    read_cameras(BufReader::new(File::open(path)?))
}

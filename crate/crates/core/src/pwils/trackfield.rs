use std::io::{BufRead, Read, Write};

use nalgebra::Vector2;

use crate::error::{Error, Result};

const BINARY_MAGIC: &[u8; 4] = b"TRKF";
const BINARY_VERSION: u32 = 1;

/// Dense per-view map from first-frame pixels to tracked target positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackField {
    pub view_id: usize,
    pub width: u32,
    pub height: u32,
    target: Vec<Vector2<f64>>,
    valid: Vec<bool>,
}

impl TrackField {
    pub fn new(
        view_id: usize,
        width: u32,
        height: u32,
        target: Vec<Vector2<f64>>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width as usize * height as usize;
        if target.len() != n || valid.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "track field {width}x{height} needs {n} entries, got {} targets and {} flags",
                target.len(),
                valid.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| valid[i] && !(target[i].x.is_finite() && target[i].y.is_finite())) {
            return Err(Error::InvalidParameter(format!("non-finite track at pixel index {i}")));
        }
        Ok(TrackField {
            view_id,
            width,
            height,
            target,
            valid,
        })
    }

    /// Every pixel valid and mapped to itself.
    pub fn identity(view_id: usize, width: u32, height: u32) -> Self {
        let target = (0..height)
            .flat_map(|y| (0..width).map(move |x| Vector2::new(f64::from(x), f64::from(y))))
            .collect();
        TrackField {
            view_id,
            width,
            height,
            target,
            valid: vec![true; width as usize * height as usize],
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Tracked position of the `index`-th pixel (row-major), if valid.
    pub fn get_index(&self, index: usize) -> Option<Vector2<f64>> {
        self.valid[index].then(|| self.target[index])
    }

    pub fn get(&self, x: u32, y: u32) -> Option<Vector2<f64>> {
        self.get_index(y as usize * self.width as usize + x as usize)
    }

    pub fn targets(&self) -> &[Vector2<f64>] {
        &self.target
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    /// Text format: `TRACKFIELD v1 <view_id> <width> <height>` followed by one
    /// `<x'> <y'> <valid>` line per pixel in row-major order.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "TRACKFIELD v1 {} {} {}", self.view_id, self.width, self.height)?;
        for (t, v) in self.target.iter().zip(&self.valid) {
            writeln!(out, "{} {} {}", t.x, t.y, u8::from(*v))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty track file"))?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "TRACKFIELD" || fields[1] != "v1" {
            return Err(Error::parse(1, format!("bad track header {header:?}")));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| Error::parse(1, format!("bad header field {s:?}")));
        let view_id = num(fields[2])? as usize;
        let width = u32::try_from(num(fields[3])?).map_err(|_| Error::parse(1, "width too large"))?;
        let height = u32::try_from(num(fields[4])?).map_err(|_| Error::parse(1, "height too large"))?;
        let n = width as usize * height as usize;
        let mut target = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let mut it = line.split_whitespace();
            let mut coord = || -> Result<f64> {
                it.next()
                    .ok_or_else(|| Error::parse(lineno, "missing field"))?
                    .parse::<f64>()
                    .map_err(|_| Error::parse(lineno, "bad coordinate"))
            };
            let x = coord()?;
            let y = coord()?;
            let flag = match it.next() {
                Some("0") => false,
                Some("1") => true,
                _ => return Err(Error::parse(lineno, "validity must be 0 or 1")),
            };
            if it.next().is_some() {
                return Err(Error::parse(lineno, "trailing fields"));
            }
            target.push(Vector2::new(x, y));
            valid.push(flag);
        }
        if target.len() != n {
            return Err(Error::parse(
                target.len() + 2,
                format!("expected {n} pixel lines, found {}", target.len()),
            ));
        }
        TrackField::new(view_id, width, height, target, valid)
            .map_err(|e| Error::parse(0, e.to_string()))
    }

    /// Binary format: magic `TRKF`, then little-endian `u32` version, view id,
    /// width and height, then `width * height` (x', y') pairs as `f32`
    /// row-major, then one validity byte per pixel.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(BINARY_MAGIC)?;
        for v in [BINARY_VERSION, self.view_id as u32, self.width, self.height] {
            out.write_all(&v.to_le_bytes())?;
        }
        for t in &self.target {
            out.write_all(&(t.x as f32).to_le_bytes())?;
            out.write_all(&(t.y as f32).to_le_bytes())?;
        }
        let mask: Vec<u8> = self.valid.iter().map(|&v| u8::from(v)).collect();
        out.write_all(&mask)
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf)?;
        if buf.len() < 20 || &buf[..4] != BINARY_MAGIC {
            return Err(Error::parse(0, "missing TRKF magic"));
        }
        let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != BINARY_VERSION {
            return Err(Error::parse(0, format!("unsupported TRKF version {}", word(0))));
        }
        let (view_id, width, height) = (word(1) as usize, word(2), word(3));
        let n = width as usize * height as usize;
        let body = &buf[20..];
        if body.len() != n * 9 {
            return Err(Error::parse(0, format!("TRKF body has {} bytes, expected {}", body.len(), n * 9)));
        }
        let (coords, mask) = body.split_at(n * 8);
        let target = coords
            .chunks_exact(8)
            .map(|c| {
                let x = f32::from_le_bytes(c[..4].try_into().unwrap());
                let y = f32::from_le_bytes(c[4..].try_into().unwrap());
                Vector2::new(f64::from(x), f64::from(y))
            })
            .collect();
        let valid = mask
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::parse(0, format!("bad validity byte {other}"))),
            })
            .collect::<Result<_>>()?;
        TrackField::new(view_id, width, height, target, valid).map_err(|e| Error::parse(0, e.to_string()))
    }
}

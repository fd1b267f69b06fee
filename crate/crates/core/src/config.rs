//! Tunable thresholds for every pipeline stage, loadable from a flat
//! `key = value` text file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How propagation averages neighbour deltas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagationAverage {
    #[default]
    Mean,
    Median,
}

impl FromStr for PropagationAverage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(PropagationAverage::Mean),
            "median" => Ok(PropagationAverage::Median),
            other => Err(Error::InvalidConfig(format!(
                "propagation_average must be mean or median, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for PropagationAverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PropagationAverage::Mean => "mean",
            PropagationAverage::Median => "median",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Contributions with a smaller alpha are never emitted by the rasterizer.
    pub alpha_cutoff: f64,
    /// Per-view motion: minimum `det(V1)`.
    pub det_floor: f64,
    /// Per-view motion: minimum covered pixels.
    pub min_pixels: usize,
    /// Per-view motion: minimum accumulated `alpha * T`.
    pub min_weight: f64,
    /// Multi-view update: minimum number of solved views.
    pub min_views: usize,
    /// Multi-view update: minimum total accumulated weight over solved views.
    pub mv_min_weight: f64,
    /// Multi-view update: minimum total pixels over solved views.
    pub mv_min_pixels: usize,
    /// Tracks moving less than this many pixels count as static pixels.
    pub static_threshold_px: f64,
    /// A view counts toward static detection when strictly more pixels hit.
    pub min_hit_pixels: usize,
    /// A view counts toward static detection when strictly more of its pixels are static.
    pub static_fraction: f64,
    /// Number of qualifying views needed to declare a Gaussian static.
    pub static_min_views: usize,
    /// Neighbour count for regularization.
    pub knn_k: usize,
    /// Eigenvalues below `eig_floor * trace` reject a covariance.
    pub eig_floor: f64,
    pub propagation_average: PropagationAverage,
    /// Standard deviation of the oracle tracker's pixel noise.
    pub track_noise_px: f64,
    /// Seed for oracle-tracker noise.
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            alpha_cutoff: 1.0 / 255.0,
            det_floor: 1e-12,
            min_pixels: 3,
            min_weight: 1e-3,
            min_views: 2,
            mv_min_weight: 1e-3,
            mv_min_pixels: 3,
            static_threshold_px: 1.0,
            min_hit_pixels: 9,
            static_fraction: 0.9,
            static_min_views: 2,
            knn_k: 8,
            eig_floor: 1e-12,
            propagation_average: PropagationAverage::Mean,
            track_noise_px: 0.0,
            seed: 0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for key {key}")))
}

impl Config {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.alpha_cutoff > 0.0 && self.alpha_cutoff < 1.0) {
            return bad("alpha_cutoff must lie in (0, 1)");
        }
        if !(self.det_floor >= 0.0 && self.min_weight >= 0.0 && self.mv_min_weight >= 0.0) {
            return bad("det_floor, min_weight and mv_min_weight must be non-negative");
        }
        if !(self.static_threshold_px >= 0.0) {
            return bad("static_threshold_px must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.static_fraction) {
            return bad("static_fraction must lie in [0, 1]");
        }
        if self.knn_k == 0 {
            return bad("knn_k must be at least 1");
        }
        if self.min_views < 2 {
            return bad("min_views must be at least 2");
        }
        if !(self.eig_floor >= 0.0) {
            return bad("eig_floor must be non-negative");
        }
        if !(self.track_noise_px >= 0.0 && self.track_noise_px.is_finite()) {
            return bad("track_noise_px must be a non-negative number");
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha_cutoff" => self.alpha_cutoff = parse_value(key, value)?,
            "det_floor" => self.det_floor = parse_value(key, value)?,
            "min_pixels" => self.min_pixels = parse_value(key, value)?,
            "min_weight" => self.min_weight = parse_value(key, value)?,
            "min_views" => self.min_views = parse_value(key, value)?,
            "mv_min_weight" => self.mv_min_weight = parse_value(key, value)?,
            "mv_min_pixels" => self.mv_min_pixels = parse_value(key, value)?,
            "static_threshold_px" => self.static_threshold_px = parse_value(key, value)?,
            "min_hit_pixels" => self.min_hit_pixels = parse_value(key, value)?,
            "static_fraction" => self.static_fraction = parse_value(key, value)?,
            "static_min_views" => self.static_min_views = parse_value(key, value)?,
            "knn_k" => self.knn_k = parse_value(key, value)?,
            "eig_floor" => self.eig_floor = parse_value(key, value)?,
            "propagation_average" => self.propagation_average = value.parse()?,
            "track_noise_px" => self.track_noise_px = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }
}

impl FromStr for Config {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut config = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "alpha_cutoff = {}", self.alpha_cutoff)?;
        writeln!(f, "det_floor = {}", self.det_floor)?;
        writeln!(f, "min_pixels = {}", self.min_pixels)?;
        writeln!(f, "min_weight = {}", self.min_weight)?;
        writeln!(f, "min_views = {}", self.min_views)?;
        writeln!(f, "mv_min_weight = {}", self.mv_min_weight)?;
        writeln!(f, "mv_min_pixels = {}", self.mv_min_pixels)?;
        writeln!(f, "static_threshold_px = {}", self.static_threshold_px)?;
        writeln!(f, "min_hit_pixels = {}", self.min_hit_pixels)?;
        writeln!(f, "static_fraction = {}", self.static_fraction)?;
        writeln!(f, "static_min_views = {}", self.static_min_views)?;
        writeln!(f, "knn_k = {}", self.knn_k)?;
        writeln!(f, "eig_floor = {}", self.eig_floor)?;
        writeln!(f, "propagation_average = {}", self.propagation_average)?;
        writeln!(f, "track_noise_px = {}", self.track_noise_px)?;
        writeln!(f, "seed = {}", self.seed)
    }
}

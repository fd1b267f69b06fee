//! Directory layouts.
//!
//! Scene: `cameras.txt`, `scene.txt` (`SCENE v1 <frames>`), one
//! `frame_NNNN.gauss` per frame and optionally `movers.txt`
//! (`MOVERS v1 <count>`, then an object id or `-1` per Gaussian).
//!
//! Results: one `frame_NNNN.gauss` per frame plus `frames.txt`
//! (`RESULTS v1 <frames>`, then per frame: frame, source frame, the four
//! status counts, stage times and a status string with one letter per
//! Gaussian: `S` solved, `P` propagated, `T` static, `U` unsolvable).

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{load_cameras, load_gaussians, save_cameras, save_gaussians};
use crate::multiview::MotionStatus;

use super::compensate::{FrameResult, StageTimes, StatusTally};
use super::scene::{MotionProgram, MotionSpec, SceneSequence};

pub fn frame_file(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("frame_{frame:04}.gauss"))
}

fn header(path: &Path, magic: &str) -> Result<(Vec<String>, usize)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head: Vec<&str> = lines.next().ok_or_else(|| Error::parse(1, format!("{} is empty", path.display())))?.split_whitespace().collect();
    if head.len() != 3 || head[0] != magic || head[1] != "v1" {
        return Err(Error::parse(1, format!("bad header in {}", path.display())));
    }
    let count = head[2].parse().map_err(|_| Error::parse(1, "bad count"))?;
    Ok((lines.map(str::to_owned).collect(), count))
}

pub fn save_scene(dir: impl AsRef<Path>, scene: &SceneSequence) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_cameras(dir.join("cameras.txt"), &scene.cameras)?;
    fs::write(dir.join("scene.txt"), format!("SCENE v1 {}\n", scene.n_frames()))?;
    for (k, frame) in scene.frames.iter().enumerate() {
        save_gaussians(frame_file(dir, k), frame)?;
    }
    if let Some(m) = &scene.motion {
        let mut out = BufWriter::new(File::create(dir.join("movers.txt"))?);
        writeln!(out, "MOVERS v1 {}", m.assignment.len())?;
        for a in &m.assignment {
            match a {
                Some(o) => writeln!(out, "{o}")?,
                None => writeln!(out, "-1")?,
            }
        }
        out.flush()?;
    }
    Ok(())
}

/// Loads a scene. The mover list, when present, is kept as an assignment
/// only (object trajectories are not stored).
pub fn load_scene(dir: impl AsRef<Path>) -> Result<SceneSequence> {
    let dir = dir.as_ref();
    let cameras = load_cameras(dir.join("cameras.txt"))?;
    let (_, n_frames) = header(&dir.join("scene.txt"), "SCENE")?;
    let frames = (0..n_frames).map(|k| load_gaussians(frame_file(dir, k))).collect::<Result<Vec<_>>>()?;
    let movers_path = dir.join("movers.txt");
    let motion = if movers_path.exists() {
        let (lines, count) = header(&movers_path, "MOVERS")?;
        if lines.len() != count {
            return Err(Error::parse(0, format!("mover list promises {count} entries, found {}", lines.len())));
        }
        let assignment = lines
            .iter()
            .enumerate()
            .map(|(i, l)| match l.trim().parse::<i64>() {
                Ok(-1) => Ok(None),
                Ok(o) if o >= 0 => Ok(Some(o as usize)),
                _ => Err(Error::parse(i + 2, format!("bad mover entry {l:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Some(MotionSpec {
            program: MotionProgram::default(),
            objects: Vec::new(),
            assignment,
        })
    } else {
        None
    };
    let scene = SceneSequence { cameras, frames, motion };
    scene.validate()?;
    Ok(scene)
}

fn status_char(s: MotionStatus) -> char {
    match s {
        MotionStatus::Solved => 'S',
        MotionStatus::Propagated => 'P',
        MotionStatus::Static => 'T',
        MotionStatus::Unsolvable => 'U',
    }
}

fn status_from_char(c: char) -> Option<MotionStatus> {
    Some(match c {
        'S' => MotionStatus::Solved,
        'P' => MotionStatus::Propagated,
        'T' => MotionStatus::Static,
        'U' => MotionStatus::Unsolvable,
        _ => return None,
    })
}

pub fn save_results(dir: impl AsRef<Path>, results: &[FrameResult]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join("frames.txt"))?);
    writeln!(out, "RESULTS v1 {}", results.len())?;
    for r in results {
        save_gaussians(frame_file(dir, r.frame), &r.gaussians)?;
        let t = &r.tally;
        let w = &r.wall_time;
        let statuses: String = r.statuses.iter().map(|&s| status_char(s)).collect();
        writeln!(
            out,
            "{} {} {} {} {} {} {:.9e} {:.9e} {:.9e} {}",
            r.frame, r.source_frame, t.solved, t.propagated, t.static_, t.unsolvable, w.tracking, w.compensation, w.refinement, statuses
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_results(dir: impl AsRef<Path>) -> Result<Vec<FrameResult>> {
    let dir = dir.as_ref();
    let file = BufReader::new(File::open(dir.join("frames.txt"))?);
    let mut lines = file.lines();
    let head = lines.next().ok_or_else(|| Error::parse(1, "empty results index"))??;
    let head: Vec<&str> = head.split_whitespace().collect();
    if head.len() != 3 || head[0] != "RESULTS" || head[1] != "v1" {
        return Err(Error::parse(1, "bad results header"));
    }
    let count: usize = head[2].parse().map_err(|_| Error::parse(1, "bad frame count"))?;
    let mut results = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 10 {
            return Err(Error::parse(lineno, "expected 10 fields"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(lineno, format!("bad integer {s:?}")));
        let real = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad number {s:?}")));
        let frame = int(f[0])?;
        let tally = StatusTally {
            solved: int(f[2])?,
            propagated: int(f[3])?,
            static_: int(f[4])?,
            unsolvable: int(f[5])?,
        };
        let statuses = f[9]
            .chars()
            .map(|c| status_from_char(c).ok_or_else(|| Error::parse(lineno, format!("bad status {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let gaussians = load_gaussians(frame_file(dir, frame))?;
        if statuses.len() != gaussians.len() || tally.total() != gaussians.len() || StatusTally::from_statuses(&statuses) != tally {
            return Err(Error::parse(lineno, "status tallies do not match the frame's Gaussians"));
        }
        results.push(FrameResult {
            frame,
            source_frame: int(f[1])?,
            gaussians,
            statuses,
            tally,
            wall_time: StageTimes {
                tracking: real(f[6])?,
                compensation: real(f[7])?,
                refinement: real(f[8])?,
            },
        });
    }
    if results.len() != count {
        return Err(Error::parse(0, format!("results index promises {count} frames, found {}", results.len())));
    }
    Ok(results)
}

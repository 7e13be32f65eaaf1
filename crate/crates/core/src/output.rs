//! Headless runs: height frames, per-frame statistics and the config echo.
//!
//! Frames are raw little-endian f32 grids (`frame_%06d.raw`, row-major) with
//! a one-line `.meta` sidecar. Statistics go to `stats.csv`; wall-clock stage
//! times go to a separate `timings.csv` so `stats.csv` stays deterministic.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::field::HeightField;
use crate::sim::{FrameStats, FrameTimings, Simulation};

pub const STATS_FILE: &str = "stats.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CONFIG_FILE: &str = "config.txt";

pub const TIMINGS_HEADER: &str = "frame,fft_ms,inject_ms,advect_ms,interaction_ms,synthesis_ms,blend_ms,total_ms";

/// Sidecar describing one raw frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMeta {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub origin: [f64; 2],
    pub time: f64,
}

impl FrameMeta {
    pub fn of(field: &HeightField, time: f64) -> Self {
        Self {
            nx: field.nx,
            ny: field.ny,
            spacing: field.spacing,
            origin: field.origin,
            time,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "nx={} ny={} spacing={} origin_x={} origin_y={} time={}",
            self.nx, self.ny, self.spacing, self.origin[0], self.origin[1], self.time
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let mut meta = FrameMeta {
            nx: 0,
            ny: 0,
            spacing: 0.0,
            origin: [0.0; 2],
            time: 0.0,
        };
        for item in line.split_whitespace() {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::config("meta", format!("malformed item `{item}`")))?;
            let bad = |_| Error::config("meta", format!("bad value for `{k}`"));
            match k {
                "nx" => meta.nx = v.parse().map_err(|_| bad(()))?,
                "ny" => meta.ny = v.parse().map_err(|_| bad(()))?,
                "spacing" => meta.spacing = v.parse().map_err(|_| bad(()))?,
                "origin_x" => meta.origin[0] = v.parse().map_err(|_| bad(()))?,
                "origin_y" => meta.origin[1] = v.parse().map_err(|_| bad(()))?,
                "time" => meta.time = v.parse().map_err(|_| bad(()))?,
                _ => return Err(Error::config("meta", format!("unknown key `{k}`"))),
            }
        }
        Ok(meta)
    }
}

pub fn frame_stem(index: u64) -> String {
    format!("frame_{index:06}")
}

/// Heights as little-endian f32, row-major.
pub fn encode_heights(field: &HeightField) -> Vec<u8> {
    field.height.iter().flat_map(|&h| (h as f32).to_le_bytes()).collect()
}

pub fn decode_heights(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Numeric(format!("{} bytes is not a whole number of f32", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Writes `frame_%06d.raw` and `frame_%06d.meta`; returns the raw path.
pub fn write_frame(dir: &Path, index: u64, field: &HeightField, time: f64) -> Result<PathBuf> {
    let stem = frame_stem(index);
    let raw = dir.join(format!("{stem}.raw"));
    fs::write(&raw, encode_heights(field))?;
    fs::write(dir.join(format!("{stem}.meta")), FrameMeta::of(field, time).to_line() + "\n")?;
    Ok(raw)
}

pub fn read_frame(dir: &Path, index: u64) -> Result<(FrameMeta, Vec<f32>)> {
    let stem = frame_stem(index);
    let meta = FrameMeta::parse(fs::read_to_string(dir.join(format!("{stem}.meta")))?.trim())?;
    let heights = decode_heights(&fs::read(dir.join(format!("{stem}.raw")))?)?;
    if heights.len() != meta.nx * meta.ny {
        return Err(Error::Numeric(format!(
            "{stem}: {} values for a {}x{} grid",
            heights.len(),
            meta.nx,
            meta.ny
        )));
    }
    Ok((meta, heights))
}

/// Column names for `stats.csv`; fixed for a given config.
pub fn stats_header(n_buckets: usize, body_ids: &[u32]) -> String {
    let mut cols: Vec<String> = ["frame", "time", "particles", "patch_variance", "fft_variance", "clamped"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for b in 0..n_buckets {
        for name in ["count", "injected", "despawned", "emitted", "resident"] {
            cols.push(format!("{name}_{b}"));
        }
    }
    for id in body_ids {
        for name in ["x", "y", "z", "yaw"] {
            cols.push(format!("body{id}_{name}"));
        }
    }
    cols.join(",")
}

pub fn stats_row(s: &FrameStats) -> String {
    let mut cols = vec![
        s.frame.to_string(),
        s.time.to_string(),
        s.particles().to_string(),
        s.patch_variance.to_string(),
        s.fft_variance.to_string(),
        s.clamped.to_string(),
    ];
    for b in 0..s.counts.len() {
        cols.push(s.counts[b].to_string());
        cols.push(s.injected_energy[b].to_string());
        cols.push(s.despawned_energy[b].to_string());
        cols.push(s.emitted_energy[b].to_string());
        cols.push(s.resident_energy[b].to_string());
    }
    for p in &s.bodies {
        cols.extend(p.position.iter().map(|v| v.to_string()));
        cols.push(p.yaw.to_string());
    }
    cols.join(",")
}

pub fn timings_row(frame: u64, t: &FrameTimings) -> String {
    format!(
        "{frame},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
        t.fft, t.inject, t.advect, t.interaction, t.synthesis, t.blend, t.total
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub frames: u64,
    pub frames_written: usize,
    pub last: Option<FrameStats>,
}

/// Runs `config.frames` frames, writing outputs when `config.output.dir` is
/// set. A zero-frame run writes only the config echo and the CSV headers.
pub fn run(config: SimConfig) -> Result<RunSummary> {
    let dir = config.output.dir.clone();
    let frames = config.frames;
    let mut sim = Simulation::new(config)?;
    let mut writers = match &dir {
        Some(d) => Some(Writers::create(d, &sim)?),
        None => None,
    };
    let mut summary = RunSummary {
        frames: 0,
        frames_written: 0,
        last: None,
    };
    for _ in 0..frames {
        let timings = sim.step()?;
        let stats = sim.stats();
        if let Some(w) = writers.as_mut() {
            summary.frames_written += w.frame(&sim, &stats, &timings)? as usize;
        }
        summary.frames = sim.frame();
        summary.last = Some(stats);
    }
    if let Some(w) = writers.as_mut() {
        w.flush()?;
    }
    Ok(summary)
}

struct Writers {
    dir: PathBuf,
    stats: BufWriter<File>,
    timings: Option<BufWriter<File>>,
    frames: bool,
    every: usize,
}

impl Writers {
    fn create(dir: &Path, sim: &Simulation) -> Result<Self> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), sim.config.to_text())?;
        let ids: Vec<u32> = sim.bodies.iter().map(|b| b.body.id).collect();
        let mut stats = BufWriter::new(File::create(dir.join(STATS_FILE))?);
        writeln!(stats, "{}", stats_header(sim.table.len(), &ids))?;
        let timings = if sim.config.output.timings {
            let mut w = BufWriter::new(File::create(dir.join(TIMINGS_FILE))?);
            writeln!(w, "{TIMINGS_HEADER}")?;
            Some(w)
        } else {
            None
        };
        let mut w = Self {
            dir: dir.to_path_buf(),
            stats,
            timings,
            frames: sim.config.output.frames,
            every: sim.config.output.every.max(1),
        };
        w.flush()?;
        Ok(w)
    }

    /// Returns whether a height frame was written.
    fn frame(&mut self, sim: &Simulation, stats: &FrameStats, timings: &FrameTimings) -> Result<bool> {
        writeln!(self.stats, "{}", stats_row(stats))?;
        if let Some(t) = self.timings.as_mut() {
            writeln!(t, "{}", timings_row(stats.frame, timings))?;
        }
        let index = stats.frame - 1;
        if self.frames && index.is_multiple_of(self.every as u64) {
            if let Some(field) = &sim.surface {
                write_frame(&self.dir, index, field, sim.time())?;
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn flush(&mut self) -> Result<()> {
        self.stats.flush()?;
        if let Some(t) = self.timings.as_mut() {
            t.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Boundary;

    #[test]
    fn meta_round_trips() {
        let m = FrameMeta {
            nx: 3,
            ny: 2,
            spacing: 0.1,
            origin: [-5.0, 2.5],
            time: 1.0 / 60.0,
        };
        assert_eq!(FrameMeta::parse(&m.to_line()).unwrap(), m);
        assert!(FrameMeta::parse("nx=3 bogus=1").is_err());
    }

    #[test]
    fn frame_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let h = vec![0.5, -1.25, 3.0, 1e-3, 0.0, -0.0];
        let f = HeightField::from_heights(3, 2, [1.0, 2.0], 0.5, h.clone(), Boundary::Clamped);
        let raw = write_frame(dir.path(), 7, &f, 0.25).unwrap();
        assert!(raw.ends_with("frame_000007.raw"));
        assert_eq!(fs::metadata(&raw).unwrap().len(), 24);
        let (meta, back) = read_frame(dir.path(), 7).unwrap();
        assert_eq!(meta, FrameMeta::of(&f, 0.25));
        let expect: Vec<f32> = h.iter().map(|&v| v as f32).collect();
        assert_eq!(back, expect);
    }

    #[test]
    fn header_and_row_have_matching_columns() {
        let s = FrameStats {
            frame: 1,
            time: 0.1,
            counts: vec![1, 2],
            injected_energy: vec![0.5; 2],
            despawned_energy: vec![0.0; 2],
            emitted_energy: vec![0.0; 2],
            resident_energy: vec![0.5; 2],
            patch_variance: 0.0,
            fft_variance: 0.0,
            clamped: 0,
            bodies: vec![crate::sim::BodyPose {
                id: 4,
                position: [1.0, 2.0, 3.0],
                yaw: 0.0,
            }],
        };
        let header = stats_header(2, &[4]);
        assert_eq!(header.split(',').count(), stats_row(&s).split(',').count());
        assert!(header.ends_with("body4_yaw"));
        assert_eq!(TIMINGS_HEADER.split(',').count(), timings_row(1, &FrameTimings::default()).split(',').count());
    }

    #[test]
    fn zero_frame_run_writes_header_and_echo_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = SimConfig::parse("fft.n=32\nsim.frames=0\n").unwrap();
        c.output.dir = Some(dir.path().to_path_buf());
        let s = run(c.clone()).unwrap();
        assert_eq!(s.frames, 0);
        let stats = fs::read_to_string(dir.path().join(STATS_FILE)).unwrap();
        assert_eq!(stats.lines().count(), 1);
        assert_eq!(fs::read_to_string(dir.path().join(CONFIG_FILE)).unwrap(), c.to_text());
        let raws = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "raw"))
            .count();
        assert_eq!(raws, 0);
    }
}

//! Throughput over a matrix of configurations.
//!
//! A matrix file is a config text plus `bench.*` settings and per-cell
//! overrides:
//!
//! ```text
//! spectrum.u10=5
//! bench.warmup=100
//! bench.frames=300
//! cell.0.name=coarse
//! cell.0.spectrum.n_omega=8
//! cell.0.spectrum.n_theta=8
//! ```
//!
//! Without any `cell.*` keys the matrix is the default sweep over sampling
//! counts, wind speed, patch resolution and the three modes.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use log::info;

use crate::config::{Mode, SimConfig};
use crate::error::{Error, Result};
use crate::sim::{Population, Simulation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prefill {
    /// Long enough for the slowest bucket to cross the largest patch.
    Crossing,
    Seconds(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSettings {
    pub warmup: usize,
    pub frames: usize,
    pub prefill: Prefill,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            warmup: 100,
            frames: 300,
            prefill: Prefill::Crossing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub name: String,
    pub config: SimConfig,
    /// Overrides the matrix-wide prefill.
    pub prefill: Option<Prefill>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchMatrix {
    pub settings: BenchSettings,
    pub cells: Vec<BenchCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub name: String,
    pub mode: Mode,
    pub n_omega: usize,
    pub n_theta: usize,
    pub u10: f64,
    pub res: usize,
    /// Mean live particle count over the measured frames.
    pub particles: f64,
    /// Frames per second from the median frame time.
    pub fps: f64,
    /// Particle updates per second (particles × fps).
    pub particle_rate: f64,
    pub median_ms: f64,
}

fn parse_setting<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_prefill(key: &str, value: &str) -> Result<Prefill> {
    match value {
        "crossing" => Ok(Prefill::Crossing),
        v => {
            let s: f64 = parse_setting(key, v)?;
            if s >= 0.0 {
                Ok(Prefill::Seconds(s))
            } else {
                Err(Error::config(key, "must be >= 0"))
            }
        }
    }
}

impl BenchMatrix {
    pub fn parse(text: &str) -> Result<Self> {
        let mut settings = BenchSettings::default();
        let mut base = String::new();
        let mut overrides: BTreeMap<usize, Vec<(String, String)>> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!("line {}", n + 1), "expected key=value"));
            };
            let (key, value) = (key.trim(), value.trim());
            if let Some(rest) = key.strip_prefix("cell.") {
                let (idx, sub) = rest
                    .split_once('.')
                    .ok_or_else(|| Error::config(key, "expected cell.N.key"))?;
                let idx: usize = parse_setting(key, idx)?;
                overrides.entry(idx).or_default().push((sub.to_string(), value.to_string()));
                continue;
            }
            match key {
                "bench.warmup" => settings.warmup = parse_setting(key, value)?,
                "bench.frames" => settings.frames = parse_setting(key, value)?,
                "bench.prefill" => settings.prefill = parse_prefill(key, value)?,
                _ => {
                    base.push_str(line);
                    base.push('\n');
                }
            }
        }
        if settings.frames == 0 {
            return Err(Error::config("bench.frames", "must be at least 1"));
        }
        let base = SimConfig::parse(&base)?;
        if overrides.is_empty() {
            return Ok(Self::default_sweep(base, settings));
        }
        let mut cells = Vec::with_capacity(overrides.len());
        for (idx, sets) in overrides {
            let mut config = base.clone();
            let mut name = format!("cell{idx}");
            let mut prefill = None;
            for (k, v) in sets {
                if k == "name" {
                    name = v;
                } else if k == "bench.prefill" {
                    prefill = Some(parse_prefill(&format!("cell.{idx}.{k}"), &v)?);
                } else {
                    config.set(&k, &v).map_err(|e| Error::config(format!("cell.{idx}.{k}"), e.to_string()))?;
                }
            }
            config.validate()?;
            cells.push(BenchCell { name, config, prefill });
        }
        Ok(Self { settings, cells })
    }

    /// Modes, sampling counts, patch resolutions and wind speeds varied one
    /// at a time around `base`. The wp-only cell tiles the whole FFT domain
    /// and is measured without prefill: filling 25 patches to steady state
    /// is out of reach on small machines, and an empty population only
    /// understates its cost.
    pub fn default_sweep(base: SimConfig, settings: BenchSettings) -> Self {
        let cell = |name: &str, f: &dyn Fn(&mut SimConfig)| {
            let mut config = base.clone();
            f(&mut config);
            BenchCell {
                name: name.to_string(),
                config,
                prefill: None,
            }
        };
        let res = |r: usize| {
            move |c: &mut SimConfig| {
                if let Some(p) = c.patches.first_mut() {
                    p.res = r;
                }
            }
        };
        let counts = |n: usize| {
            move |c: &mut SimConfig| {
                c.n_omega = n;
                c.n_theta = n;
            }
        };
        let wind = |u: f64| move |c: &mut SimConfig| c.u10 = u;
        let mut wp_only = cell("wp-only", &|c| c.mode = Mode::WpOnly);
        wp_only.prefill = Some(Prefill::Seconds(0.0));
        let cells = vec![
            cell("fft-only", &|c| c.mode = Mode::FftOnly),
            wp_only,
            cell("hybrid", &|_| {}),
            cell("hybrid-n12", &counts(12)),
            cell("hybrid-n8", &counts(8)),
            cell("hybrid-res256", &res(256)),
            cell("hybrid-res1024", &res(1024)),
            cell("hybrid-u3", &wind(3.0)),
            cell("hybrid-u10", &wind(10.0)),
            cell("hybrid-u15", &wind(15.0)),
        ];
        Self { settings, cells }
    }
}

/// Simulated seconds for the slowest bucket to cross the largest patch
/// diagonal, with a 20% allowance.
pub fn crossing_time(sim: &Simulation) -> f64 {
    let diag = sim
        .patches
        .iter()
        .map(|p| p.region.l1.hypot(p.region.l2))
        .fold(0.0, f64::max);
    let slowest = sim.table.buckets.iter().map(|b| b.speed).fold(f64::INFINITY, f64::min);
    if diag == 0.0 || !slowest.is_finite() {
        0.0
    } else {
        1.2 * diag / slowest
    }
}

/// Cells whose configs differ only in patch resolution evolve identical
/// particle populations, so they can share one prefill.
fn population_key(config: &SimConfig) -> String {
    config
        .to_text()
        .lines()
        .filter(|l| !(l.starts_with("patch.") && l.contains(".res=")) && !l.starts_with("output.") && !l.starts_with("sim.frames"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn measure(name: &str, sim: &mut Simulation, settings: &BenchSettings) -> Result<BenchRow> {
    for _ in 0..settings.warmup {
        sim.step()?;
    }
    let mut times = Vec::with_capacity(settings.frames);
    let mut particles = 0.0;
    for _ in 0..settings.frames {
        let t = Instant::now();
        sim.step()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
        particles += sim.particle_count() as f64;
    }
    let median_ms = median(&mut times);
    let fps = 1e3 / median_ms;
    let particles = particles / settings.frames as f64;
    let c = &sim.config;
    Ok(BenchRow {
        name: name.to_string(),
        mode: c.mode,
        n_omega: c.n_omega,
        n_theta: c.n_theta,
        u10: c.u10,
        res: c.patches.first().map_or(0, |p| p.res),
        particles,
        fps,
        particle_rate: particles * fps,
        median_ms,
    })
}

/// Runs every cell in order and reports steady-state throughput.
pub fn run_matrix(matrix: &BenchMatrix) -> Result<Vec<BenchRow>> {
    let keys: Vec<String> = matrix
        .cells
        .iter()
        .map(|c| {
            let prefill = c.prefill.unwrap_or(matrix.settings.prefill);
            format!("{}\nprefill={prefill:?}", population_key(&c.config))
        })
        .collect();
    let mut remaining: HashMap<&str, usize> = HashMap::new();
    for k in &keys {
        *remaining.entry(k).or_default() += 1;
    }
    let mut cache: HashMap<&str, Population> = HashMap::new();
    let mut rows = Vec::with_capacity(matrix.cells.len());
    for (cell, key) in matrix.cells.iter().zip(&keys) {
        let mut sim = Simulation::new(cell.config.clone())?;
        let started = Instant::now();
        let prefill = cell.prefill.unwrap_or(matrix.settings.prefill);
        match cache.get(key.as_str()) {
            Some(donor) => sim.adopt_population(donor)?,
            None => {
                let seconds = match prefill {
                    Prefill::Crossing => crossing_time(&sim),
                    Prefill::Seconds(s) => s,
                };
                sim.prefill(seconds);
            }
        }
        let left = remaining.get_mut(key.as_str()).expect("every key is counted");
        *left -= 1;
        if *left > 0 && !cache.contains_key(key.as_str()) {
            cache.insert(key, sim.population());
        } else if *left == 0 {
            cache.remove(key.as_str());
        }
        info!("{}: prefilled in {:.1}s", cell.name, started.elapsed().as_secs_f64());
        let row = measure(&cell.name, &mut sim, &matrix.settings)?;
        info!("{}: {:.2} fps, {:.0} particles", row.name, row.fps, row.particles);
        rows.push(row);
    }
    Ok(rows)
}

pub const TABLE_HEADER: &str = "name,mode,n_omega,n_theta,u10,res,particles,median_ms,fps,particle_rate";

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.0},{:.3},{:.3},{:.0}\n",
            r.name,
            r.mode.as_str(),
            r.n_omega,
            r.n_theta,
            r.u10,
            r.res,
            r.particles,
            r.median_ms,
            r.fps,
            r.particle_rate
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even_sets() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn matrix_cells_apply_overrides() {
        let m = BenchMatrix::parse(
            "fft.n=32\nbench.warmup=1\nbench.frames=2\nbench.prefill=0.5\ncell.1.spectrum.n_omega=8\ncell.0.name=base\ncell.1.name=coarse\n",
        )
        .unwrap();
        assert_eq!(m.settings.warmup, 1);
        assert_eq!(m.settings.prefill, Prefill::Seconds(0.5));
        assert_eq!(m.cells.len(), 2);
        assert_eq!(m.cells[0].name, "base");
        assert_eq!(m.cells[0].config.n_omega, 16);
        assert_eq!(m.cells[1].config.n_omega, 8);
        assert_eq!(m.cells[1].config.fft_n, 32);
        let m = BenchMatrix::parse("cell.0.bench.prefill=3\ncell.1.name=b\n").unwrap();
        assert_eq!(m.cells[0].prefill, Some(Prefill::Seconds(3.0)));
        assert_eq!(m.cells[1].prefill, None);
        assert!(BenchMatrix::parse("cell.0.bench.prefill=-1\n").is_err());
    }

    #[test]
    fn bad_cell_keys_are_rejected() {
        assert!(BenchMatrix::parse("cell.0.spectrum.nope=1\n").is_err());
        assert!(BenchMatrix::parse("cell.x.name=a\n").is_err());
        assert!(BenchMatrix::parse("bench.frames=0\n").is_err());
    }

    #[test]
    fn default_sweep_covers_modes_and_axes() {
        let m = BenchMatrix::parse("").unwrap();
        let names: Vec<&str> = m.cells.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names.len(), 10);
        assert!(names.contains(&"wp-only") && names.contains(&"hybrid-res1024"));
        let wp = m.cells.iter().find(|c| c.name == "wp-only").unwrap();
        assert_eq!(wp.prefill, Some(Prefill::Seconds(0.0)));
        let u3 = m.cells.iter().find(|c| c.name == "hybrid-u3").unwrap();
        assert_eq!(u3.config.u10, 3.0);
    }

    #[test]
    fn resolution_variants_share_a_population() {
        let m = BenchMatrix::parse("").unwrap();
        let key = |n: &str| population_key(&m.cells.iter().find(|c| c.name == n).unwrap().config);
        assert_eq!(key("hybrid"), key("hybrid-res256"));
        assert_ne!(key("hybrid"), key("hybrid-n8"));
    }

    #[test]
    fn small_matrix_runs() {
        let m = BenchMatrix::parse(
            "fft.n=32\npatch.0.origin_x=100\npatch.0.origin_y=100\npatch.0.size_x=80\npatch.0.size_y=80\npatch.0.res=64\npatch.0.margin=4\nspectrum.n_omega=4\nspectrum.n_theta=4\nspectrum.u10=10\nbench.warmup=1\nbench.frames=3\nbench.prefill=2\ncell.0.name=a\ncell.1.patch.0.res=128\n",
        )
        .unwrap();
        let rows = run_matrix(&m).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.fps > 0.0 && r.particles > 0.0));
        // Same population, different resolution.
        assert_eq!(rows[0].particles, rows[1].particles);
        assert_eq!(rows[1].res, 128);
        let table = format_table(&rows);
        assert_eq!(table.lines().count(), 3);
    }
}

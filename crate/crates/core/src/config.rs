//! Flat `key=value` scenario configuration.
//!
//! Keys carry a section prefix (`spectrum.u10=5`); patches and bodies are
//! indexed lists (`patch.0.res=512`, `body.0.density=500`). Lines starting
//! with `#` and blank lines are ignored. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::spectrum::{Representative, DEFAULT_SIGMA_HIGH, DEFAULT_SIGMA_LOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Hybrid,
    FftOnly,
    WpOnly,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(Mode::Hybrid),
            "fft-only" => Ok(Mode::FftOnly),
            "wp-only" => Ok(Mode::WpOnly),
            other => Err(Error::config("sim.mode", format!("unknown mode `{other}`"))),
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hybrid => "hybrid",
            Mode::FftOnly => "fft-only",
            Mode::WpOnly => "wp-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchConfig {
    pub origin: [f64; 2],
    pub size: [f64; 2],
    /// Texels along the x side.
    pub res: usize,
    pub margin: f64,
    /// Body id whose position the patch re-centers on each frame.
    pub follow: Option<u32>,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            origin: [200.0, 200.0],
            size: [100.0, 100.0],
            res: 512,
            margin: 10.0,
            follow: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyConfig {
    pub id: u32,
    pub size: [f64; 3],
    pub density: f64,
    pub position: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 3],
    pub probes: [usize; 2],
    pub max_thrust: f64,
    pub max_rudder_torque: f64,
    pub thrust: f64,
    pub rudder: f64,
}

impl Default for BodyConfig {
    fn default() -> Self {
        Self {
            id: 0,
            size: [4.0, 2.0, 1.0],
            density: 500.0,
            position: [250.0, 250.0, 0.0],
            yaw: 0.0,
            velocity: [0.0; 3],
            probes: [4, 2],
            max_thrust: 4000.0,
            max_rudder_torque: 2000.0,
            thrust: 0.0,
            rudder: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Write `frame_%06d.raw` files.
    pub frames: bool,
    /// Write every n-th frame.
    pub every: usize,
    /// Composite grid; defaults to the FFT tile at FFT resolution.
    pub res: Option<usize>,
    pub origin: Option<[f64; 2]>,
    pub extent: Option<f64>,
    /// Write the wall-clock `timings.csv`.
    pub timings: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            frames: true,
            every: 1,
            res: None,
            origin: None,
            extent: None,
            timings: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub port: Option<u16>,
    /// Streamed grid resolution (square).
    pub res: usize,
    pub rate_hz: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            port: None,
            res: 128,
            rate_hz: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub u10: f64,
    pub fetch: f64,
    pub g: f64,
    /// Mean wave direction (rad, from +x).
    pub direction: f64,
    pub n_omega: usize,
    pub n_theta: usize,
    pub representative: Representative,
    /// Peak-width parameters below and above the spectral peak.
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub rho: f64,
    pub trough_ratio: f64,
    pub fft_n: usize,
    pub fft_domain: f64,
    pub fft_choppiness: f64,
    pub fft_seed: Option<u64>,
    pub seed: u64,
    pub dt: f64,
    pub frames: usize,
    pub mode: Mode,
    pub recompute_normals: bool,
    pub patch_choppiness: f64,
    pub energy_scale: f64,
    pub suction_scale: f64,
    pub wake_particles: usize,
    pub patches: Vec<PatchConfig>,
    pub bodies: Vec<BodyConfig>,
    pub output: OutputConfig,
    pub stream: StreamConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            u10: 5.0,
            fetch: 10_000.0,
            g: 9.81,
            direction: 0.0,
            n_omega: 16,
            n_theta: 16,
            representative: Representative::Centroid,
            sigma_low: DEFAULT_SIGMA_LOW,
            sigma_high: DEFAULT_SIGMA_HIGH,
            rho: 1000.0,
            trough_ratio: 0.5,
            fft_n: 256,
            fft_domain: 500.0,
            fft_choppiness: 1.0,
            fft_seed: None,
            seed: 1,
            dt: 1.0 / 60.0,
            frames: 600,
            mode: Mode::Hybrid,
            recompute_normals: false,
            patch_choppiness: 1.0,
            energy_scale: 1.0,
            suction_scale: 1.0,
            wake_particles: 8,
            patches: vec![PatchConfig::default()],
            bodies: Vec::new(),
            output: OutputConfig::default(),
            stream: StreamConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{value}`"))),
    }
}

/// Grows `list` so index `idx` exists.
fn slot<T: Default>(list: &mut Vec<T>, idx: usize) -> &mut T {
    while list.len() <= idx {
        list.push(T::default());
    }
    &mut list[idx]
}

impl SimConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses and validates a config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut explicit_patches = false;
        let mut duration = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!("line {}", n + 1), "expected key=value"));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.starts_with("patch.") && !explicit_patches {
                cfg.patches.clear();
                explicit_patches = true;
            }
            if key == "sim.duration" {
                duration = Some(parse::<f64>(key, value)?);
                continue;
            }
            cfg.set(key, value)?;
        }
        if let Some(d) = duration {
            if !(d >= 0.0) {
                return Err(Error::config("sim.duration", "must be >= 0"));
            }
            cfg.frames = (d / cfg.dt).round() as usize;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "spectrum.u10" => self.u10 = parse(key, value)?,
            "spectrum.fetch" => self.fetch = parse(key, value)?,
            "spectrum.g" => self.g = parse(key, value)?,
            "spectrum.direction" => self.direction = parse(key, value)?,
            "spectrum.n_omega" => self.n_omega = parse(key, value)?,
            "spectrum.n_theta" => self.n_theta = parse(key, value)?,
            "spectrum.representative" => {
                self.representative = match value {
                    "centroid" => Representative::Centroid,
                    "midpoint" => Representative::Midpoint,
                    _ => return Err(Error::config(key, "expected centroid or midpoint")),
                }
            }
            "spectrum.sigma_low" => self.sigma_low = parse(key, value)?,
            "spectrum.sigma_high" => self.sigma_high = parse(key, value)?,
            "water.rho" => self.rho = parse(key, value)?,
            "particles.trough_ratio" => self.trough_ratio = parse(key, value)?,
            "fft.n" => self.fft_n = parse(key, value)?,
            "fft.domain" => self.fft_domain = parse(key, value)?,
            "fft.choppiness" => self.fft_choppiness = parse(key, value)?,
            "fft.seed" => self.fft_seed = Some(parse(key, value)?),
            "sim.seed" => self.seed = parse(key, value)?,
            "sim.dt" => self.dt = parse(key, value)?,
            "sim.frames" => self.frames = parse(key, value)?,
            "sim.mode" => self.mode = value.parse()?,
            "coupling.recompute_normals" => self.recompute_normals = parse_bool(key, value)?,
            "synthesis.choppiness" => self.patch_choppiness = parse(key, value)?,
            "emission.energy_scale" => self.energy_scale = parse(key, value)?,
            "emission.suction_scale" => self.suction_scale = parse(key, value)?,
            "emission.wake_particles" => self.wake_particles = parse(key, value)?,
            "output.dir" => self.output.dir = Some(PathBuf::from(value)),
            "output.frames" => self.output.frames = parse_bool(key, value)?,
            "output.every" => self.output.every = parse(key, value)?,
            "output.res" => self.output.res = Some(parse(key, value)?),
            "output.origin_x" => slot_origin(&mut self.output.origin)[0] = parse(key, value)?,
            "output.origin_y" => slot_origin(&mut self.output.origin)[1] = parse(key, value)?,
            "output.extent" => self.output.extent = Some(parse(key, value)?),
            "output.timings" => self.output.timings = parse_bool(key, value)?,
            "stream.port" => self.stream.port = Some(parse(key, value)?),
            "stream.res" => self.stream.res = parse(key, value)?,
            "stream.rate_hz" => self.stream.rate_hz = parse(key, value)?,
            _ => return self.set_indexed(key, value),
        }
        Ok(())
    }

    fn set_indexed(&mut self, key: &str, value: &str) -> Result<()> {
        let mut parts = key.splitn(3, '.');
        let (section, idx, field) = match (parts.next(), parts.next(), parts.next()) {
            (Some(s), Some(i), Some(f)) => (s, i, f),
            _ => return Err(Error::config(key, "unknown key")),
        };
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::config(key, "unknown key"))?;
        if idx > 1024 {
            return Err(Error::config(key, "list index too large"));
        }
        match section {
            "patch" => {
                let p = slot(&mut self.patches, idx);
                match field {
                    "origin_x" => p.origin[0] = parse(key, value)?,
                    "origin_y" => p.origin[1] = parse(key, value)?,
                    "size_x" => p.size[0] = parse(key, value)?,
                    "size_y" => p.size[1] = parse(key, value)?,
                    "res" => p.res = parse(key, value)?,
                    "margin" => p.margin = parse(key, value)?,
                    "follow" => p.follow = Some(parse(key, value)?),
                    _ => return Err(Error::config(key, "unknown key")),
                }
            }
            "body" => {
                let b = slot(&mut self.bodies, idx);
                b.id = idx as u32;
                match field {
                    "size_x" => b.size[0] = parse(key, value)?,
                    "size_y" => b.size[1] = parse(key, value)?,
                    "size_z" => b.size[2] = parse(key, value)?,
                    "density" => b.density = parse(key, value)?,
                    "x" => b.position[0] = parse(key, value)?,
                    "y" => b.position[1] = parse(key, value)?,
                    "z" => b.position[2] = parse(key, value)?,
                    "yaw" => b.yaw = parse(key, value)?,
                    "vx" => b.velocity[0] = parse(key, value)?,
                    "vy" => b.velocity[1] = parse(key, value)?,
                    "vz" => b.velocity[2] = parse(key, value)?,
                    "probes_x" => b.probes[0] = parse(key, value)?,
                    "probes_y" => b.probes[1] = parse(key, value)?,
                    "max_thrust" => b.max_thrust = parse(key, value)?,
                    "max_rudder_torque" => b.max_rudder_torque = parse(key, value)?,
                    "thrust" => b.thrust = parse(key, value)?,
                    "rudder" => b.rudder = parse(key, value)?,
                    _ => return Err(Error::config(key, "unknown key")),
                }
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("spectrum.u10", self.u10),
            ("spectrum.fetch", self.fetch),
            ("spectrum.g", self.g),
            ("water.rho", self.rho),
            ("fft.domain", self.fft_domain),
            ("stream.rate_hz", self.stream.rate_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::config("sim.dt", format!("must be in (0, 0.1], got {}", self.dt)));
        }
        if self.n_omega < 2 {
            return Err(Error::config("spectrum.n_omega", "must be >= 2"));
        }
        if self.n_theta < 1 {
            return Err(Error::config("spectrum.n_theta", "must be >= 1"));
        }
        if !self.fft_n.is_power_of_two() || self.fft_n < 4 {
            return Err(Error::config("fft.n", "must be a power of two >= 4"));
        }
        for (key, s) in [("spectrum.sigma_low", self.sigma_low), ("spectrum.sigma_high", self.sigma_high)] {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::config(key, "must be in (0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.trough_ratio) {
            return Err(Error::config("particles.trough_ratio", "must be in [0, 1]"));
        }
        if !(self.energy_scale >= 0.0 && self.suction_scale >= 0.0) {
            return Err(Error::config("emission.energy_scale", "scales must be >= 0"));
        }
        if self.output.every == 0 {
            return Err(Error::config("output.every", "must be >= 1"));
        }
        if self.stream.res < 2 {
            return Err(Error::config("stream.res", "must be >= 2"));
        }
        if self.output.res.is_some_and(|r| r < 2) {
            return Err(Error::config("output.res", "must be >= 2"));
        }
        if self.output.extent.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::config("output.extent", "must be positive"));
        }
        for (i, p) in self.patches.iter().enumerate() {
            if !(p.size[0] > 0.0 && p.size[1] > 0.0) {
                return Err(Error::config(format!("patch.{i}.size_x"), "sizes must be positive"));
            }
            if p.res < 2 {
                return Err(Error::config(format!("patch.{i}.res"), "must be >= 2"));
            }
            if !(p.margin >= 0.0 && p.margin < 0.5 * p.size[0].min(p.size[1])) {
                return Err(Error::config(
                    format!("patch.{i}.margin"),
                    "must be in [0, half the shorter side)",
                ));
            }
            if let Some(id) = p.follow {
                if !self.bodies.iter().any(|b| b.id == id) {
                    return Err(Error::config(format!("patch.{i}.follow"), format!("no body {id}")));
                }
            }
        }
        for (i, a) in self.patches.iter().enumerate() {
            for (j, b) in self.patches.iter().enumerate().skip(i + 1) {
                let apart = a.origin[0] + a.size[0] <= b.origin[0]
                    || b.origin[0] + b.size[0] <= a.origin[0]
                    || a.origin[1] + a.size[1] <= b.origin[1]
                    || b.origin[1] + b.size[1] <= a.origin[1];
                if !apart && a.follow.is_none() && b.follow.is_none() {
                    return Err(Error::config(format!("patch.{j}"), format!("overlaps patch {i}")));
                }
            }
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if !(b.size.iter().all(|s| *s > 0.0) && b.density > 0.0) {
                return Err(Error::config(format!("body.{i}.density"), "size and density must be positive"));
            }
            if b.probes[0] == 0 || b.probes[1] == 0 {
                return Err(Error::config(format!("body.{i}.probes_x"), "must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn fft_seed(&self) -> u64 {
        self.fft_seed.unwrap_or(self.seed)
    }

    /// Canonical key=value listing of every setting, sorted by key.
    pub fn to_text(&self) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("spectrum.u10", self.u10.to_string());
        put("spectrum.fetch", self.fetch.to_string());
        put("spectrum.g", self.g.to_string());
        put("spectrum.direction", self.direction.to_string());
        put("spectrum.n_omega", self.n_omega.to_string());
        put("spectrum.n_theta", self.n_theta.to_string());
        put(
            "spectrum.representative",
            match self.representative {
                Representative::Centroid => "centroid",
                Representative::Midpoint => "midpoint",
            }
            .to_string(),
        );
        put("spectrum.sigma_low", self.sigma_low.to_string());
        put("spectrum.sigma_high", self.sigma_high.to_string());
        put("water.rho", self.rho.to_string());
        put("particles.trough_ratio", self.trough_ratio.to_string());
        put("fft.n", self.fft_n.to_string());
        put("fft.domain", self.fft_domain.to_string());
        put("fft.choppiness", self.fft_choppiness.to_string());
        put("fft.seed", self.fft_seed().to_string());
        put("sim.seed", self.seed.to_string());
        put("sim.dt", self.dt.to_string());
        put("sim.frames", self.frames.to_string());
        put("sim.mode", self.mode.as_str().to_string());
        put("coupling.recompute_normals", self.recompute_normals.to_string());
        put("synthesis.choppiness", self.patch_choppiness.to_string());
        put("emission.energy_scale", self.energy_scale.to_string());
        put("emission.suction_scale", self.suction_scale.to_string());
        put("emission.wake_particles", self.wake_particles.to_string());
        put("output.frames", self.output.frames.to_string());
        put("output.every", self.output.every.to_string());
        put("output.timings", self.output.timings.to_string());
        if let Some(r) = self.output.res {
            put("output.res", r.to_string());
        }
        if let Some(o) = self.output.origin {
            put("output.origin_x", o[0].to_string());
            put("output.origin_y", o[1].to_string());
        }
        if let Some(e) = self.output.extent {
            put("output.extent", e.to_string());
        }
        if let Some(p) = self.stream.port {
            put("stream.port", p.to_string());
        }
        put("stream.res", self.stream.res.to_string());
        put("stream.rate_hz", self.stream.rate_hz.to_string());
        for (i, p) in self.patches.iter().enumerate() {
            put(&format!("patch.{i}.origin_x"), p.origin[0].to_string());
            put(&format!("patch.{i}.origin_y"), p.origin[1].to_string());
            put(&format!("patch.{i}.size_x"), p.size[0].to_string());
            put(&format!("patch.{i}.size_y"), p.size[1].to_string());
            put(&format!("patch.{i}.res"), p.res.to_string());
            put(&format!("patch.{i}.margin"), p.margin.to_string());
            if let Some(f) = p.follow {
                put(&format!("patch.{i}.follow"), f.to_string());
            }
        }
        for (i, b) in self.bodies.iter().enumerate() {
            let fields = [
                ("size_x", b.size[0]),
                ("size_y", b.size[1]),
                ("size_z", b.size[2]),
                ("density", b.density),
                ("x", b.position[0]),
                ("y", b.position[1]),
                ("z", b.position[2]),
                ("yaw", b.yaw),
                ("vx", b.velocity[0]),
                ("vy", b.velocity[1]),
                ("vz", b.velocity[2]),
                ("max_thrust", b.max_thrust),
                ("max_rudder_torque", b.max_rudder_torque),
                ("thrust", b.thrust),
                ("rudder", b.rudder),
            ];
            for (k, v) in fields {
                put(&format!("body.{i}.{k}"), v.to_string());
            }
            put(&format!("body.{i}.probes_x"), b.probes[0].to_string());
            put(&format!("body.{i}.probes_y"), b.probes[1].to_string());
        }
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

fn slot_origin(o: &mut Option<[f64; 2]>) -> &mut [f64; 2] {
    o.get_or_insert([0.0, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = SimConfig::parse("").unwrap();
        assert_eq!(c, SimConfig::default());
        assert_eq!(c.patches.len(), 1);
        assert_eq!(c.patches[0].res, 512);
    }

    #[test]
    fn parses_sections_and_lists() {
        let text = "# comment\nspectrum.u10 = 10\nsim.mode=wp-only\npatch.0.res=256\npatch.1.origin_x=400\npatch.1.origin_y=0\nbody.0.density=300\nsim.duration=2\n";
        let c = SimConfig::parse(text).unwrap();
        assert_eq!(c.u10, 10.0);
        assert_eq!(c.mode, Mode::WpOnly);
        assert_eq!(c.patches.len(), 2);
        assert_eq!(c.patches[0].res, 256);
        assert_eq!(c.patches[1].origin, [400.0, 0.0]);
        assert_eq!(c.bodies[0].density, 300.0);
        assert_eq!(c.frames, 120);
    }

    #[test]
    fn errors_name_the_field() {
        let msg = |t: &str| SimConfig::parse(t).unwrap_err().to_string();
        assert!(msg("spectrum.bogus=1").contains("spectrum.bogus"));
        assert!(msg("sim.dt=0.5").contains("sim.dt"));
        assert!(msg("spectrum.u10=abc").contains("spectrum.u10"));
        assert!(msg("spectrum.u10=-1").contains("spectrum.u10"));
        assert!(msg("fft.n=100").contains("fft.n"));
        assert!(msg("patch.0.margin=60").contains("patch.0.margin"));
        assert!(msg("noequals").contains("line 1"));
        assert!(msg("patch.0.follow=3").contains("patch.0.follow"));
    }

    #[test]
    fn overlapping_patches_are_rejected() {
        let t = "patch.0.origin_x=0\npatch.0.origin_y=0\npatch.1.origin_x=50\npatch.1.origin_y=50\n";
        let e = SimConfig::parse(t).unwrap_err().to_string();
        assert!(e.contains("patch.1"), "{e}");
        let t = "patch.0.origin_x=0\npatch.0.origin_y=0\npatch.1.origin_x=100\npatch.1.origin_y=0\n";
        assert!(SimConfig::parse(t).is_ok());
    }

    #[test]
    fn echo_round_trips() {
        let text = "spectrum.u10=7.5\npatch.0.res=128\nbody.0.x=240\nbody.0.y=250\npatch.0.follow=0\noutput.res=64\n";
        let c = SimConfig::parse(text).unwrap();
        let again = SimConfig::parse(&c.to_text()).unwrap();
        assert_eq!(c.to_text(), again.to_text());
        assert_eq!(again.patches[0].follow, Some(0));
    }
}

//! Floating bodies: probe-based buoyancy against the blended surface and
//! particle emission from the water a body pushes aside.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::SurfaceSample;
use crate::particles::{amplitude_for_energy, push_pair, PatchRegion, WaveParticle};
use crate::spectrum::BucketTable;

/// Kelvin wake half-angle, asin(1/3).
pub const KELVIN_HALF_ANGLE: f64 = 0.339_836_909_454_121_9;

/// A vertical column of hull volume sampled at one body-frame point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    /// Body-frame position of the column bottom (m).
    pub offset: [f64; 3],
    /// Displaced volume when fully submerged (m³).
    pub volume: f64,
    /// Column height (m).
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloatingBody {
    pub id: u32,
    /// World position of the body-frame origin (m); z is up.
    pub position: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 3],
    pub yaw_rate: f64,
    pub mass: f64,
    /// Moment of inertia about the vertical axis (kg m²).
    pub yaw_inertia: f64,
    pub probes: Vec<Probe>,
    pub hull_extent: f64,
    /// Linear drag at full submersion (N s/m).
    pub linear_drag: f64,
    /// Yaw drag at full submersion (N m s).
    pub yaw_drag: f64,
    /// Thrust at full throttle (N), applied along the heading.
    pub max_thrust: f64,
    /// Yaw torque at full rudder (N m).
    pub max_rudder_torque: f64,
    /// Steering inputs in [-1, 1].
    pub thrust: f64,
    pub rudder: f64,
}

impl FloatingBody {
    /// Box hull of size `[lx, ly, lz]` and uniform `density`, origin at the
    /// box center, with an `nx × ny` grid of probe columns on the bottom face.
    /// Drag is set for a heave damping ratio of about 0.2 at half submersion.
    pub fn box_hull(
        id: u32,
        size: [f64; 3],
        density: f64,
        probes: [usize; 2],
        rho: f64,
        g: f64,
    ) -> Result<Self> {
        let [lx, ly, lz] = size;
        if !(lx > 0.0 && ly > 0.0 && lz > 0.0) {
            return Err(Error::config("body.size", "box dimensions must be > 0"));
        }
        if !(density > 0.0) {
            return Err(Error::config("body.density", "must be > 0"));
        }
        if probes[0] == 0 || probes[1] == 0 {
            return Err(Error::config("body.probes", "probe grid must be at least 1x1"));
        }
        let volume = lx * ly * lz;
        let mass = density * volume;
        let count = probes[0] * probes[1];
        let mut list = Vec::with_capacity(count);
        for j in 0..probes[1] {
            for i in 0..probes[0] {
                list.push(Probe {
                    offset: [
                        -0.5 * lx + (i as f64 + 0.5) * lx / probes[0] as f64,
                        -0.5 * ly + (j as f64 + 0.5) * ly / probes[1] as f64,
                        -0.5 * lz,
                    ],
                    volume: volume / count as f64,
                    height: lz,
                });
            }
        }
        let stiffness = rho * g * lx * ly;
        let linear_drag = 0.8 * (mass * stiffness).sqrt();
        let yaw_inertia = mass * (lx * lx + ly * ly) / 12.0;
        Ok(Self {
            id,
            position: [0.0; 3],
            yaw: 0.0,
            velocity: [0.0; 3],
            yaw_rate: 0.0,
            mass,
            yaw_inertia,
            probes: list,
            hull_extent: 0.5 * lx.max(ly),
            linear_drag,
            yaw_drag: linear_drag * (lx * lx + ly * ly) / 12.0,
            max_thrust: 0.0,
            max_rudder_torque: 0.0,
            thrust: 0.0,
            rudder: 0.0,
        })
    }

    pub fn total_volume(&self) -> f64 {
        self.probes.iter().map(|p| p.volume).sum()
    }

    pub fn heading(&self) -> [f64; 2] {
        [self.yaw.cos(), self.yaw.sin()]
    }

    /// Rotates a body-frame offset by yaw (horizontal part only).
    fn rotate(&self, o: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [c * o[0] - s * o[1], s * o[0] + c * o[1], o[2]]
    }

    pub fn probe_world(&self, probe: &Probe) -> [f64; 3] {
        let r = self.rotate(probe.offset);
        [
            self.position[0] + r[0],
            self.position[1] + r[1],
            self.position[2] + r[2],
        ]
    }

    /// Sets steering inputs, clamped to [-1, 1].
    pub fn steer(&mut self, thrust: f64, rudder: f64) {
        self.thrust = thrust.clamp(-1.0, 1.0);
        self.rudder = rudder.clamp(-1.0, 1.0);
    }
}

/// Per-probe submersion against the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeState {
    pub sample: SurfaceSample,
    /// Surface height minus column bottom height (m), unclamped.
    pub depth: f64,
    /// Submerged fraction of the column in [0, 1].
    pub fraction: f64,
}

pub fn probe_states(body: &FloatingBody, surface: &dyn Fn([f64; 2]) -> SurfaceSample) -> Vec<ProbeState> {
    body.probes
        .iter()
        .map(|p| {
            let w = body.probe_world(p);
            let sample = surface([w[0], w[1]]);
            let depth = sample.height - w[2];
            ProbeState {
                sample,
                depth,
                fraction: (depth / p.height).clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// Submerged volume and volume-weighted mean submersion depth (m).
pub fn submersion(body: &FloatingBody, states: &[ProbeState]) -> (f64, f64) {
    let mut volume = 0.0;
    let mut moment = 0.0;
    for (p, s) in body.probes.iter().zip(states) {
        let v = p.volume * s.fraction;
        volume += v;
        moment += v * s.depth.clamp(0.0, p.height);
    }
    let mean_depth = if volume > 0.0 { moment / volume } else { 0.0 };
    (volume, mean_depth)
}

/// One semi-implicit Euler step of heave, horizontal drift and yaw.
pub fn buoyancy_step(
    body: &mut FloatingBody,
    surface: &dyn Fn([f64; 2]) -> SurfaceSample,
    dt: f64,
    rho: f64,
    g: f64,
) {
    let states = probe_states(body, surface);
    let total = body.total_volume();
    let mut force = [0.0, 0.0, -body.mass * g];
    let mut torque = 0.0;
    let mut wet = 0.0;
    for (p, s) in body.probes.iter().zip(&states) {
        if s.fraction <= 0.0 {
            continue;
        }
        let share = p.volume / total;
        wet += share * s.fraction;
        let r = body.rotate(p.offset);
        let lift = rho * g * p.volume * s.fraction;
        let v = [
            body.velocity[0] - body.yaw_rate * r[1],
            body.velocity[1] + body.yaw_rate * r[0],
            body.velocity[2],
        ];
        let c = body.linear_drag * share * s.fraction;
        let f = [
            lift * s.sample.normal[0] - c * v[0],
            lift * s.sample.normal[1] - c * v[1],
            lift * s.sample.normal[2] - c * v[2],
        ];
        for k in 0..3 {
            force[k] += f[k];
        }
        torque += r[0] * f[1] - r[1] * f[0];
    }
    if wet > 0.0 {
        let h = body.heading();
        force[0] += body.thrust * body.max_thrust * h[0];
        force[1] += body.thrust * body.max_thrust * h[1];
        torque += body.rudder * body.max_rudder_torque - body.yaw_drag * wet * body.yaw_rate;
    }
    for k in 0..3 {
        body.velocity[k] += force[k] / body.mass * dt;
        body.position[k] += body.velocity[k] * dt;
    }
    body.yaw_rate += torque / body.yaw_inertia * dt;
    body.yaw += body.yaw_rate * dt;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionMode {
    Ring,
    Wake,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionEvent {
    pub origin: [f64; 2],
    pub mode: EmissionMode,
    /// Signed volume behind the event (m³); negative is suction.
    pub delta_volume: f64,
    pub energy: f64,
    /// Reversed horizontal velocity, wake only.
    pub direction: Option<[f64; 2]>,
    pub bucket: usize,
    pub particles: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionSettings {
    pub rho: f64,
    pub g: f64,
    /// Multiplies the potential-energy budget of displaced water.
    pub energy_scale: f64,
    /// Multiplies the budget of suction (shrinking submerged volume) events.
    pub suction_scale: f64,
    pub trough_ratio: f64,
    /// Directions per wake event.
    pub wake_particles: usize,
}

impl Default for EmissionSettings {
    fn default() -> Self {
        Self {
            rho: 1000.0,
            g: 9.81,
            energy_scale: 1.0,
            suction_scale: 1.0,
            trough_ratio: 0.5,
            wake_particles: 8,
        }
    }
}

/// Particles and events produced by one body in one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Emission {
    pub events: Vec<EmissionEvent>,
    pub particles: Vec<WaveParticle>,
}

impl Emission {
    pub fn energy(&self) -> f64 {
        self.events.iter().map(|e| e.energy).sum()
    }
}

/// Tracks the submerged volume between steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmissionTracker {
    pub previous_volume: Option<f64>,
}

impl EmissionTracker {
    /// Emits ring particles for the change in submerged volume and wake
    /// particles for the volume swept horizontally during `dt`.
    #[allow(clippy::too_many_arguments)]
    pub fn emit(
        &mut self,
        body: &FloatingBody,
        states: &[ProbeState],
        patch: &PatchRegion,
        table: &BucketTable,
        dt: f64,
        time: f64,
        settings: &EmissionSettings,
    ) -> Emission {
        let (volume, mean_depth) = submersion(body, states);
        let previous = self.previous_volume.replace(volume).unwrap_or(volume);
        let center = [body.position[0], body.position[1]];
        if patch.distance_outside(center) > body.hull_extent {
            return Emission::default();
        }
        let mut out = Emission::default();
        let ring_dv = volume - previous;
        if ring_dv != 0.0 {
            emit_ring(&mut out, center, ring_dv, mean_depth, body, table, time, settings);
        }
        let vh = [body.velocity[0], body.velocity[1]];
        let speed = (vh[0] * vh[0] + vh[1] * vh[1]).sqrt();
        if speed > 0.0 && volume > 0.0 {
            let swept = volume * speed * dt / (2.0 * body.hull_extent);
            let back = [-vh[0] / speed, -vh[1] / speed];
            emit_wake(&mut out, center, back, swept, mean_depth, body, table, time, settings);
        }
        out
    }
}

fn budget(dv: f64, mean_depth: f64, settings: &EmissionSettings) -> f64 {
    let scale = if dv < 0.0 {
        settings.energy_scale * settings.suction_scale
    } else {
        settings.energy_scale
    };
    scale * settings.rho * settings.g * dv.abs() * mean_depth
}

#[allow(clippy::too_many_arguments)]
fn emit_ring(
    out: &mut Emission,
    center: [f64; 2],
    dv: f64,
    mean_depth: f64,
    body: &FloatingBody,
    table: &BucketTable,
    time: f64,
    settings: &EmissionSettings,
) {
    let energy = budget(dv, mean_depth, settings);
    if energy <= 0.0 {
        return;
    }
    let bucket = &table.buckets[table.nearest_radius(body.hull_extent)];
    let n = table.n_theta;
    let per = energy / n as f64;
    let sign = dv.signum();
    let amplitude = sign * amplitude_for_energy(per, bucket.radius, settings.rho, settings.g);
    let dtheta = 2.0 * PI / n as f64;
    for j in 0..n {
        let a = -PI + (j as f64 + 0.5) * dtheta;
        let d = [a.cos(), a.sin()];
        let pos = [
            center[0] + body.hull_extent * d[0],
            center[1] + body.hull_extent * d[1],
        ];
        push_pair(&mut out.particles, pos, d, amplitude, bucket, settings.trough_ratio, time);
    }
    out.events.push(EmissionEvent {
        origin: center,
        mode: EmissionMode::Ring,
        delta_volume: dv,
        energy,
        direction: None,
        bucket: bucket.index,
        particles: n,
    });
}

#[allow(clippy::too_many_arguments)]
fn emit_wake(
    out: &mut Emission,
    center: [f64; 2],
    back: [f64; 2],
    dv: f64,
    mean_depth: f64,
    body: &FloatingBody,
    table: &BucketTable,
    time: f64,
    settings: &EmissionSettings,
) {
    let energy = budget(dv, mean_depth, settings);
    let n = settings.wake_particles;
    if energy <= 0.0 || n == 0 {
        return;
    }
    let bucket = &table.buckets[table.nearest_radius(0.5 * body.hull_extent)];
    let amplitude = amplitude_for_energy(energy / n as f64, bucket.radius, settings.rho, settings.g);
    let stern = [
        center[0] + body.hull_extent * back[0],
        center[1] + body.hull_extent * back[1],
    ];
    let base = back[1].atan2(back[0]);
    for k in 0..n {
        let offset = if n == 1 {
            0.0
        } else {
            -KELVIN_HALF_ANGLE + 2.0 * KELVIN_HALF_ANGLE * k as f64 / (n - 1) as f64
        };
        let a = base + offset;
        push_pair(
            &mut out.particles,
            stern,
            [a.cos(), a.sin()],
            amplitude,
            bucket,
            settings.trough_ratio,
            time,
        );
    }
    out.events.push(EmissionEvent {
        origin: stern,
        mode: EmissionMode::Wake,
        delta_volume: dv,
        energy,
        direction: Some(back),
        bucket: bucket.index,
        particles: n,
    });
}

//! The per-frame pipeline: FFT evolve, particle inject and advect, body
//! interaction, patch synthesis, and compositing.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Mode, SimConfig};
use crate::coupling::{PatchSurface, QueryOptions, Surface};
use crate::error::{Error, Result};
use crate::fft::{FftConfig, FftState};
use crate::field::{variance, HeightField, SurfaceSample};
use crate::interaction::{buoyancy_step, probe_states, EmissionSettings, EmissionTracker, FloatingBody};
use crate::particles::{inject, InjectionLedger, InjectionSettings, ParticleSet, PatchRegion};
use crate::spectrum::{build_buckets, BucketTable, DirectionalSpectrum, SpectrumParams};
use crate::synthesis::PatchSynthesizer;

/// One wave-particle patch and its population.
#[derive(Debug, Clone)]
pub struct PatchState {
    pub region: PatchRegion,
    pub res: usize,
    pub follow: Option<u32>,
    pub particles: ParticleSet,
    pub ledger: InjectionLedger,
    /// Field synthesized in the last completed frame.
    pub field: Option<HeightField>,
    synth: usize,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct BodyState {
    pub body: FloatingBody,
    tracker: EmissionTracker,
}

/// Wall-clock time per pipeline stage (ms).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameTimings {
    pub fft: f64,
    pub inject: f64,
    pub advect: f64,
    pub interaction: f64,
    pub synthesis: f64,
    pub blend: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub id: u32,
    pub position: [f64; 3],
    pub yaw: f64,
}

/// Deterministic per-frame statistics, summed over patches.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStats {
    pub frame: u64,
    pub time: f64,
    pub counts: Vec<usize>,
    /// Cumulative per-bucket energies (J).
    pub injected_energy: Vec<f64>,
    pub despawned_energy: Vec<f64>,
    pub emitted_energy: Vec<f64>,
    pub resident_energy: Vec<f64>,
    /// Height variance over the first patch's interior (inside the margin).
    pub patch_variance: f64,
    pub fft_variance: f64,
    pub clamped: usize,
    pub bodies: Vec<BodyPose>,
}

impl FrameStats {
    pub fn particles(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Frames between row sorts of the particle lists. Particles drift well
/// under a texel per frame, so splat locality decays slowly.
const RESORT_EVERY: u64 = 32;

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Particle state of every patch, transferable between simulations whose
/// patches cover the same regions.
#[derive(Debug, Clone)]
pub struct Population {
    time: f64,
    patches: Vec<(PatchRegion, ParticleSet, InjectionLedger, ChaCha8Rng)>,
}

#[derive(Debug)]
pub struct Simulation {
    pub config: SimConfig,
    pub spectrum: DirectionalSpectrum,
    pub table: BucketTable,
    pub fft: Option<FftState>,
    pub fft_field: Option<HeightField>,
    /// Composite surface on the output grid from the last completed frame.
    pub surface: Option<HeightField>,
    pub patches: Vec<PatchState>,
    pub bodies: Vec<BodyState>,
    synths: Vec<PatchSynthesizer>,
    injection: InjectionSettings,
    emission: EmissionSettings,
    time: f64,
    frame: u64,
}

/// Shifts `region` so its center sits on `target`, snapped to the texel grid.
fn recenter(region: &mut PatchRegion, target: [f64; 2], texel: f64) {
    for (k, size) in [region.l1, region.l2].into_iter().enumerate() {
        let corner = target[k] - 0.5 * size;
        region.origin[k] = (corner / texel).round() * texel;
    }
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let params = SpectrumParams::derive(config.u10, config.fetch, config.g)?.with_sigma(config.sigma_low, config.sigma_high)?;
        let spectrum = DirectionalSpectrum::new(params, config.direction);
        let table = build_buckets(&params, config.n_omega, config.n_theta, config.representative)?;
        let fft = match config.mode {
            Mode::WpOnly => None,
            _ => Some(FftState::new(
                &spectrum,
                FftConfig {
                    n: config.fft_n,
                    domain_size: config.fft_domain,
                    seed: config.fft_seed(),
                    choppiness: config.fft_choppiness,
                },
            )?),
        };
        let regions: Vec<(PatchRegion, usize, Option<u32>)> = match config.mode {
            Mode::FftOnly => Vec::new(),
            Mode::Hybrid => config
                .patches
                .iter()
                .map(|p| Ok((PatchRegion::new(p.origin, p.size[0], p.size[1], p.margin)?, p.res, p.follow)))
                .collect::<Result<_>>()?,
            Mode::WpOnly => {
                let tile = config
                    .patches
                    .first()
                    .ok_or_else(|| Error::config("patch.0", "wp-only mode tiles the first patch"))?;
                let nx = (config.fft_domain / tile.size[0]).floor().max(1.0) as usize;
                let ny = (config.fft_domain / tile.size[1]).floor().max(1.0) as usize;
                let mut out = Vec::with_capacity(nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        let origin = [i as f64 * tile.size[0], j as f64 * tile.size[1]];
                        out.push((PatchRegion::new(origin, tile.size[0], tile.size[1], tile.margin)?, tile.res, None));
                    }
                }
                out
            }
        };
        let mut synths: Vec<PatchSynthesizer> = Vec::new();
        let mut shapes: Vec<(f64, f64, usize)> = Vec::new();
        let mut patches = Vec::with_capacity(regions.len());
        for (k, (region, res, follow)) in regions.into_iter().enumerate() {
            let shape = (region.l1, region.l2, res);
            let synth = match shapes.iter().position(|s| *s == shape) {
                Some(i) => i,
                None => {
                    synths.push(PatchSynthesizer::new(&region, res, &table, config.patch_choppiness)?);
                    shapes.push(shape);
                    synths.len() - 1
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64 + 1);
            patches.push(PatchState {
                region,
                res,
                follow,
                particles: ParticleSet::new(table.len()),
                ledger: InjectionLedger::new(table.len()),
                field: None,
                synth,
                rng,
            });
        }
        let bodies = config
            .bodies
            .iter()
            .map(|b| {
                let mut body = FloatingBody::box_hull(b.id, b.size, b.density, b.probes, config.rho, config.g)?;
                body.position = b.position;
                body.yaw = b.yaw;
                body.velocity = b.velocity;
                body.max_thrust = b.max_thrust;
                body.max_rudder_torque = b.max_rudder_torque;
                body.steer(b.thrust, b.rudder);
                Ok(BodyState {
                    body,
                    tracker: EmissionTracker::default(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let injection = InjectionSettings {
            rho: config.rho,
            trough_ratio: config.trough_ratio,
        };
        let emission = EmissionSettings {
            rho: config.rho,
            g: config.g,
            energy_scale: config.energy_scale,
            suction_scale: config.suction_scale,
            trough_ratio: config.trough_ratio,
            wake_particles: config.wake_particles,
        };
        let mut sim = Self {
            config,
            spectrum,
            table,
            fft,
            fft_field: None,
            surface: None,
            patches,
            bodies,
            synths,
            injection,
            emission,
            time: 0.0,
            frame: 0,
        };
        sim.fft_field = sim.fft.as_ref().map(|f| f.synthesize(0.0));
        Ok(sim)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Frames completed so far.
    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Sets a body's steering inputs; unknown ids are ignored.
    pub fn steer(&mut self, id: u32, thrust: f64, rudder: f64) -> bool {
        match self.bodies.iter_mut().find(|b| b.body.id == id) {
            Some(b) => {
                b.body.steer(thrust, rudder);
                true
            }
            None => false,
        }
    }

    fn inject_and_advect(&mut self, timings: &mut FrameTimings) {
        let dt = self.config.dt;
        let g = self.config.g;
        for patch in &mut self.patches {
            let t0 = Instant::now();
            let born = inject(
                &patch.region,
                &self.table,
                &self.spectrum,
                &mut patch.ledger,
                dt,
                self.time,
                &self.injection,
                &mut patch.rng,
            );
            patch.particles.extend(born);
            timings.inject += ms(t0);
            let t0 = Instant::now();
            let gone = patch.particles.advect(&self.table, dt, &patch.region);
            patch.ledger.record_despawn(&gone, &self.table, self.injection.rho, g);
            timings.advect += ms(t0);
        }
    }

    /// Advances particle populations only (no FFT, bodies or synthesis).
    pub fn prefill(&mut self, seconds: f64) {
        let steps = (seconds / self.config.dt).round() as usize;
        let mut scratch = FrameTimings::default();
        for _ in 0..steps {
            self.time += self.config.dt;
            self.inject_and_advect(&mut scratch);
        }
    }

    pub fn population(&self) -> Population {
        Population {
            time: self.time,
            patches: self
                .patches
                .iter()
                .map(|p| (p.region, p.particles.clone(), p.ledger.clone(), p.rng.clone()))
                .collect(),
        }
    }

    /// Takes over a population evolved elsewhere, e.g. a shared prefill.
    pub fn adopt_population(&mut self, population: &Population) -> Result<()> {
        if population.patches.len() != self.patches.len()
            || population.patches.iter().zip(&self.patches).any(|(q, p)| q.0 != p.region)
        {
            return Err(Error::config("patch", "population was evolved on different patches"));
        }
        for (p, (_, particles, ledger, rng)) in self.patches.iter_mut().zip(&population.patches) {
            p.particles = particles.clone();
            p.ledger = ledger.clone();
            p.rng = rng.clone();
        }
        self.time = population.time;
        Ok(())
    }

    /// Runs one frame of the pipeline.
    pub fn step(&mut self) -> Result<FrameTimings> {
        let start = Instant::now();
        let mut timings = FrameTimings::default();
        let dt = self.config.dt;
        self.time += dt;

        let t0 = Instant::now();
        let next_fft = self.fft.as_ref().map(|f| f.synthesize(self.time));
        timings.fft = ms(t0);

        self.inject_and_advect(&mut timings);

        let t0 = Instant::now();
        self.interact();
        timings.interaction = ms(t0);

        self.fft_field = next_fft;

        let t0 = Instant::now();
        for patch in &mut self.patches {
            let synth = &mut self.synths[patch.synth];
            if self.frame.is_multiple_of(RESORT_EVERY) {
                patch.particles.sort_rows(patch.region.l1 / patch.res as f64);
            }
            patch.field = Some(synth.synthesize(&patch.particles, &patch.region)?);
        }
        timings.synthesis = ms(t0);

        let t0 = Instant::now();
        self.surface = Some(self.composite());
        timings.blend = ms(t0);

        self.frame += 1;
        timings.total = ms(start);
        Ok(timings)
    }

    /// Emission and buoyancy against the previous frame's surface.
    fn interact(&mut self) {
        if self.bodies.is_empty() {
            return;
        }
        let dt = self.config.dt;
        let (rho, g) = (self.config.rho, self.config.g);
        let options = QueryOptions {
            recompute_normals: self.config.recompute_normals,
        };
        let regions: Vec<PatchRegion> = self.patches.iter().map(|p| p.region).collect();
        let fields: Vec<Option<HeightField>> = self.patches.iter_mut().map(|p| p.field.take()).collect();
        {
            let surfaces: Vec<PatchSurface> = regions
                .iter()
                .zip(&fields)
                .filter_map(|(region, f)| f.as_ref().map(|field| PatchSurface { region, field }))
                .collect();
            let surface = Surface {
                background: self.fft_field.as_ref(),
                patches: &surfaces,
                options,
            };
            let query = |p: [f64; 2]| -> SurfaceSample { surface.query(p) };
            for state in &mut self.bodies {
                let states = probe_states(&state.body, &query);
                let center = [state.body.position[0], state.body.position[1]];
                if let Some(k) = regions.iter().position(|r| r.contains(center)) {
                    let patch = &mut self.patches[k];
                    let out = state.tracker.emit(
                        &state.body,
                        &states,
                        &patch.region,
                        &self.table,
                        dt,
                        self.time,
                        &self.emission,
                    );
                    for p in &out.particles {
                        let b = p.bucket as usize;
                        patch.ledger.emitted_energy[b] += p.energy(self.table.buckets[b].radius, rho, g);
                    }
                    patch.particles.extend(out.particles);
                } else {
                    state.tracker.previous_volume = None;
                }
                buoyancy_step(&mut state.body, &query, dt, rho, g);
            }
        }
        for (patch, field) in self.patches.iter_mut().zip(fields) {
            patch.field = field;
        }
        for k in 0..self.patches.len() {
            let Some(id) = self.patches[k].follow else { continue };
            let Some(state) = self.bodies.iter().find(|b| b.body.id == id) else { continue };
            let target = [state.body.position[0], state.body.position[1]];
            let texel = self.patches[k].region.l1 / self.patches[k].res as f64;
            recenter(&mut self.patches[k].region, target, texel);
        }
    }

    /// The current hybrid surface.
    pub fn with_surface<T>(&self, f: impl FnOnce(&Surface) -> T) -> T {
        let surfaces: Vec<PatchSurface> = self
            .patches
            .iter()
            .filter_map(|p| p.field.as_ref().map(|field| PatchSurface { region: &p.region, field }))
            .collect();
        let surface = Surface {
            background: self.fft_field.as_ref(),
            patches: &surfaces,
            options: QueryOptions {
                recompute_normals: self.config.recompute_normals,
            },
        };
        f(&surface)
    }

    /// Output grid: origin, spacing and resolution.
    pub fn output_grid(&self) -> ([f64; 2], f64, usize) {
        let res = self.config.output.res.unwrap_or(self.config.fft_n);
        let extent = self.config.output.extent.unwrap_or(self.config.fft_domain);
        let origin = self.config.output.origin.unwrap_or([0.0, 0.0]);
        (origin, extent / res as f64, res)
    }

    /// The composited surface sampled on the output grid.
    pub fn composite(&self) -> HeightField {
        let (origin, spacing, res) = self.output_grid();
        self.with_surface(|s| s.composite(origin, spacing, res, res))
    }

    pub fn composite_grid(&self, origin: [f64; 2], spacing: f64, res: usize) -> HeightField {
        self.with_surface(|s| s.composite(origin, spacing, res, res))
    }

    pub fn body_poses(&self) -> Vec<BodyPose> {
        self.bodies
            .iter()
            .map(|b| BodyPose {
                id: b.body.id,
                position: b.body.position,
                yaw: b.body.yaw,
            })
            .collect()
    }

    pub fn particle_count(&self) -> usize {
        self.patches.iter().map(|p| p.particles.len()).sum()
    }

    pub fn stats(&self) -> FrameStats {
        let n = self.table.len();
        let (rho, g) = (self.config.rho, self.config.g);
        let mut s = FrameStats {
            frame: self.frame,
            time: self.time,
            counts: vec![0; n],
            injected_energy: vec![0.0; n],
            despawned_energy: vec![0.0; n],
            emitted_energy: vec![0.0; n],
            resident_energy: vec![0.0; n],
            patch_variance: 0.0,
            fft_variance: self.fft_field.as_ref().map_or(0.0, |f| f.variance()),
            clamped: self.synths.iter().map(|s| s.stack.clamped).sum(),
            bodies: self.body_poses(),
        };
        for p in &self.patches {
            let counts = p.particles.counts();
            let resident = p.particles.resident_energy(&self.table, rho, g);
            for b in 0..n {
                s.counts[b] += counts[b];
                s.injected_energy[b] += p.ledger.injected_energy[b];
                s.despawned_energy[b] += p.ledger.despawned_energy[b];
                s.emitted_energy[b] += p.ledger.emitted_energy[b];
                s.resident_energy[b] += resident[b];
            }
        }
        if let Some(p) = self.patches.first() {
            s.patch_variance = p.field.as_ref().map_or(0.0, |f| interior_variance(f, &p.region));
        }
        s
    }
}

/// Height variance over texels at least `margin` inside the patch.
pub fn interior_variance(field: &HeightField, region: &PatchRegion) -> f64 {
    let mut values = Vec::new();
    for j in 0..field.ny {
        for i in 0..field.nx {
            let p = [
                field.origin[0] + i as f64 * field.spacing,
                field.origin[1] + j as f64 * field.spacing,
            ];
            if region.inward_depth(p) >= region.margin {
                values.push(field.at(i, j));
            }
        }
    }
    variance(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig::parse(
            "fft.n=32\npatch.0.origin_x=100\npatch.0.origin_y=100\npatch.0.size_x=80\npatch.0.size_y=80\npatch.0.res=64\npatch.0.margin=4\nspectrum.n_omega=4\nspectrum.n_theta=4\nspectrum.u10=10\n",
        )
        .unwrap()
    }

    #[test]
    fn modes_select_components() {
        let mut c = small();
        let s = Simulation::new(c.clone()).unwrap();
        assert!(s.fft.is_some() && s.patches.len() == 1);
        c.mode = Mode::FftOnly;
        let s = Simulation::new(c.clone()).unwrap();
        assert!(s.fft.is_some() && s.patches.is_empty());
        c.mode = Mode::WpOnly;
        let s = Simulation::new(c).unwrap();
        assert!(s.fft.is_none());
        assert_eq!(s.patches.len(), 36);
        assert_eq!(s.synths.len(), 1);
    }

    #[test]
    fn steps_produce_particles_and_fields() {
        let mut s = Simulation::new(small()).unwrap();
        for _ in 0..30 {
            s.step().unwrap();
        }
        assert_eq!(s.frame(), 30);
        assert!((s.time() - 0.5).abs() < 1e-12);
        let st = s.stats();
        assert!(st.particles() > 0);
        assert!(st.fft_variance > 0.0);
        assert!(s.patches[0].field.is_some());
    }

    #[test]
    fn ledger_balances_resident_energy() {
        let mut s = Simulation::new(small()).unwrap();
        s.prefill(20.0);
        s.step().unwrap();
        let st = s.stats();
        for b in 0..st.counts.len() {
            let lhs = st.injected_energy[b] + st.emitted_energy[b] - st.despawned_energy[b];
            assert!((lhs - st.resident_energy[b]).abs() <= 1e-9 * st.injected_energy[b]);
        }
    }

    #[test]
    fn following_patch_tracks_body() {
        let mut c = small();
        c.bodies.push(crate::config::BodyConfig {
            position: [120.0, 120.0, 0.0],
            velocity: [1.0, 0.0, 0.0],
            ..Default::default()
        });
        c.patches[0].follow = Some(0);
        let mut s = Simulation::new(c).unwrap();
        for _ in 0..60 {
            s.step().unwrap();
        }
        let b = s.bodies[0].body.position;
        let center = s.patches[0].region.center();
        let texel = 80.0 / 64.0;
        assert!((center[0] - b[0]).abs() <= texel && (center[1] - b[1]).abs() <= texel);
    }

    #[test]
    fn recenter_snaps_to_texels() {
        let mut r = PatchRegion::new([0.0, 0.0], 10.0, 10.0, 1.0).unwrap();
        recenter(&mut r, [7.3, 2.26], 0.5);
        assert_eq!(r.origin, [2.5, -2.5]);
    }
}

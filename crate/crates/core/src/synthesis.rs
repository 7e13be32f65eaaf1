//! Patch height synthesis: particles are splatted into one layer per
//! frequency bucket, each layer is smoothed by two separable passes, and the
//! layers are summed into the patch height field.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Boundary, HeightField};
use crate::particles::{ParticleSet, PatchRegion};
use crate::spectrum::BucketTable;

/// Above this half-width the sliding-sum path is used.
const SLIDING_THRESHOLD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvolutionMethod {
    /// Direct taps for narrow kernels, sliding sums for wide ones.
    #[default]
    Auto,
    Direct,
    Sliding,
}

/// Symmetric 1-D raised-cosine kernel ½(1 + cos(πx/r)) sampled at texel
/// offsets inside the radius, normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingKernel {
    pub half_width: usize,
    pub taps: Vec<f64>,
    /// Scale that makes a unit splat on a texel center peak at 1.
    pub peak_gain: f64,
    norm: f64,
    /// Phase advance per texel, π·texel/r.
    step: f64,
}

/// cos and sin of `step · m` for m in `0..len`.
fn phase_table(step: f64, len: usize) -> Vec<(f64, f64)> {
    (0..len)
        .map(|m| {
            let (s, c) = (step * m as f64).sin_cos();
            (c, s)
        })
        .collect()
}

impl SmoothingKernel {
    /// Kernel whose support matches a particle of `radius` on a grid of
    /// `texel` spacing.
    pub fn raised_cosine(radius: f64, texel: f64) -> Self {
        let ratio = radius / texel;
        let half_width = if ratio > 1.0 { ratio.ceil() as usize - 1 } else { 0 };
        let step = if ratio > 0.0 { PI / ratio } else { 0.0 };
        let raw: Vec<f64> = (-(half_width as i64)..=half_width as i64)
            .map(|k| 1.0 + (step * k as f64).cos())
            .collect();
        let sum: f64 = raw.iter().sum();
        let taps: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let center = taps[half_width];
        Self {
            half_width,
            taps,
            peak_gain: 1.0 / (center * center),
            norm: 1.0 / sum,
            step,
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    fn use_sliding(&self, method: ConvolutionMethod) -> bool {
        match method {
            ConvolutionMethod::Auto => self.half_width > SLIDING_THRESHOLD,
            ConvolutionMethod::Direct => false,
            ConvolutionMethod::Sliding => true,
        }
    }

    /// `out[j] = Σ_k taps[k] · input[offset + j + k - R]`, zero outside `input`.
    pub fn convolve(&self, input: &[f64], offset: usize, out: &mut [f64], method: ConvolutionMethod) {
        if self.use_sliding(method) {
            let phases = phase_table(self.step, input.len().max(offset + out.len()));
            self.convolve_sliding(input, offset, out, &phases, &mut Vec::new());
        } else {
            self.convolve_direct(input, offset, out);
        }
    }

    fn convolve_direct(&self, input: &[f64], offset: usize, out: &mut [f64]) {
        let r = self.half_width as i64;
        let len = input.len() as i64;
        for (j, o) in out.iter_mut().enumerate() {
            let c = offset as i64 + j as i64;
            let lo = (c - r).max(0);
            let hi = (c + r).min(len - 1);
            let mut acc = 0.0;
            for m in lo..=hi {
                acc += self.taps[(m - c + r) as usize] * input[m as usize];
            }
            *o = acc;
        }
    }

    /// Raised cosine as box sum plus the real part of a windowed phasor sum;
    /// both come from prefix sums, so the cost is independent of the width.
    fn convolve_sliding(
        &self,
        input: &[f64],
        offset: usize,
        out: &mut [f64],
        phases: &[(f64, f64)],
        prefix: &mut Vec<[f64; 3]>,
    ) {
        let r = self.half_width;
        let n = input.len();
        prefix.clear();
        prefix.reserve(n + 1);
        let mut acc = [0.0; 3];
        prefix.push(acc);
        for (&x, &(c, s)) in input.iter().zip(phases) {
            acc[0] += x;
            acc[1] += x * c;
            acc[2] += x * s;
            prefix.push(acc);
        }
        for (j, o) in out.iter_mut().enumerate() {
            let c = offset + j;
            let lo = c.saturating_sub(r);
            let hi = (c + r + 1).min(n);
            if lo >= hi {
                *o = 0.0;
                continue;
            }
            let (cs, s) = phases[c];
            let (a, b) = (prefix[hi], prefix[lo]);
            // Re(e^{-iφc} Σ x_m e^{iφm})
            let phased = cs * (a[1] - b[1]) + s * (a[2] - b[2]);
            *o = self.norm * (a[0] - b[0] + phased);
        }
    }

    /// The same convolution applied down the rows of a row-major grid of
    /// `width` columns: output row j is centered on input row `offset + j`.
    fn convolve_rows(
        &self,
        input: &[f64],
        width: usize,
        offset: usize,
        out: &mut [f64],
        method: ConvolutionMethod,
        phases: &[(f64, f64)],
    ) {
        let rows = input.len() / width;
        let r = self.half_width;
        let row = |m: usize| &input[m * width..(m + 1) * width];
        if !self.use_sliding(method) {
            for (j, o) in out.chunks_exact_mut(width).enumerate() {
                o.iter_mut().for_each(|v| *v = 0.0);
                let c = offset + j;
                for m in c.saturating_sub(r)..(c + r + 1).min(rows) {
                    let w = self.taps[m + r - c];
                    for (v, x) in o.iter_mut().zip(row(m)) {
                        *v += w * x;
                    }
                }
            }
            return;
        }
        // Running window sums of x, x·cos and x·sin over input rows.
        let mut sums = WindowSums::new(width);
        let mut lo = offset.saturating_sub(r);
        let mut hi = lo;
        for (j, o) in out.chunks_exact_mut(width).enumerate() {
            let c = offset + j;
            let want_hi = (c + r + 1).min(rows);
            while hi < want_hi {
                sums.update(row(hi), 1.0, phases[hi]);
                hi += 1;
            }
            let want_lo = c.saturating_sub(r);
            while lo < want_lo {
                sums.update(row(lo), -1.0, phases[lo]);
                lo += 1;
            }
            let (cs, s) = phases[c];
            for (((v, b), re), im) in o.iter_mut().zip(&sums.boxed).zip(&sums.re).zip(&sums.im) {
                *v = self.norm * (b + cs * re + s * im);
            }
        }
    }
}

struct WindowSums {
    boxed: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl WindowSums {
    fn new(width: usize) -> Self {
        Self {
            boxed: vec![0.0; width],
            re: vec![0.0; width],
            im: vec![0.0; width],
        }
    }

    fn update(&mut self, row: &[f64], sign: f64, (c, s): (f64, f64)) {
        let (c, s) = (sign * c, sign * s);
        for (((b, re), im), &x) in self.boxed.iter_mut().zip(&mut self.re).zip(&mut self.im).zip(row) {
            *b += sign * x;
            *re += c * x;
            *im += s * x;
        }
    }
}

/// Blocked transpose of a `rows × cols` row-major grid.
fn transpose(input: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    const BLOCK: usize = 32;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    out[c * rows + r] = input[r * cols + c];
                }
            }
        }
    }
}

/// One accumulation grid; `apron` texels of padding surround the patch grid
/// so particles just outside still contribute their inward tails.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub apron: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    /// Patch grid size in texels.
    pub nx: usize,
    pub ny: usize,
    pub texel_size: f64,
    /// World position of patch texel (0, 0)'s center.
    pub origin: [f64; 2],
    pub layers: Vec<Layer>,
    /// Splats that fell outside their layer and were clamped to its edge.
    pub clamped: usize,
}

impl LayerStack {
    /// Stack for a patch with `resolution` texels along its x side.
    pub fn new(patch: &PatchRegion, resolution: usize, kernels: &[SmoothingKernel]) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::config("patch.res", "resolution must be >= 2"));
        }
        let texel = patch.l1 / resolution as f64;
        let nx = resolution;
        let ny = ((patch.l2 / texel).round() as usize).max(2);
        let layers = kernels
            .iter()
            .map(|k| {
                let apron = k.half_width;
                let width = nx + 2 * apron;
                let height = ny + 2 * apron;
                Layer {
                    apron,
                    width,
                    height,
                    data: vec![0.0; width * height],
                }
            })
            .collect();
        let mut stack = Self {
            nx,
            ny,
            texel_size: texel,
            origin: [0.0; 2],
            layers,
            clamped: 0,
        };
        stack.set_patch(patch);
        Ok(stack)
    }

    /// Re-anchors the grid on the patch (used when the patch moves).
    pub fn set_patch(&mut self, patch: &PatchRegion) {
        self.origin = [
            patch.origin[0] + 0.5 * self.texel_size,
            patch.origin[1] + 0.5 * self.texel_size,
        ];
    }

    pub fn clear(&mut self) {
        for layer in &mut self.layers {
            layer.data.iter_mut().for_each(|v| *v = 0.0);
        }
        self.clamped = 0;
    }
}

/// Bilinear splat of every particle's signed amplitude into its bucket's
/// layer. Layers are cleared first.
pub fn accumulate(particles: &ParticleSet, stack: &mut LayerStack) {
    stack.clear();
    let origin = stack.origin;
    let texel = stack.texel_size;
    let clamped: usize = stack
        .layers
        .par_iter_mut()
        .zip(particles.buckets.par_iter())
        .map(|(layer, ps)| {
            let mut clamped = 0;
            let w = layer.width;
            let max_u = (layer.width - 1) as f64;
            let max_v = (layer.height - 1) as f64;
            for p in ps {
                let mut u = (p.position[0] - origin[0]) / texel + layer.apron as f64;
                let mut v = (p.position[1] - origin[1]) / texel + layer.apron as f64;
                if !(0.0..=max_u).contains(&u) || !(0.0..=max_v).contains(&v) {
                    clamped += 1;
                    u = u.clamp(0.0, max_u);
                    v = v.clamp(0.0, max_v);
                }
                let i0 = (u.floor() as usize).min(layer.width.saturating_sub(2));
                let j0 = (v.floor() as usize).min(layer.height.saturating_sub(2));
                let fx = u - i0 as f64;
                let fy = v - j0 as f64;
                let a = p.amplitude;
                let base = j0 * w + i0;
                layer.data[base] += a * (1.0 - fx) * (1.0 - fy);
                layer.data[base + 1] += a * fx * (1.0 - fy);
                layer.data[base + w] += a * (1.0 - fx) * fy;
                layer.data[base + w + 1] += a * fx * fy;
            }
            clamped
        })
        .sum();
    stack.clamped = clamped;
}

/// Kernels for every bucket of `table` at the given texel size.
pub fn kernels_for(table: &BucketTable, texel: f64) -> Vec<SmoothingKernel> {
    table
        .buckets
        .iter()
        .map(|b| SmoothingKernel::raised_cosine(b.radius, texel))
        .collect()
}

/// Smooths one layer along y then x and crops the apron. Both passes run
/// over whole rows; the grid is transposed in between.
fn smooth_layer(layer: &Layer, kernel: &SmoothingKernel, nx: usize, ny: usize, method: ConvolutionMethod) -> Vec<f64> {
    let a = layer.apron;
    let phases = phase_table(kernel.step, layer.width.max(layer.height));
    let mut cols = vec![0.0; ny * layer.width];
    kernel.convolve_rows(&layer.data, layer.width, a, &mut cols, method, &phases);
    let mut cols_t = vec![0.0; ny * layer.width];
    transpose(&cols, ny, layer.width, &mut cols_t);
    let mut out_t = vec![0.0; nx * ny];
    kernel.convolve_rows(&cols_t, ny, a, &mut out_t, method, &phases);
    let mut out = cols;
    out.truncate(nx * ny);
    transpose(&out_t, nx, ny, &mut out);
    out
}

/// Smooths every layer with its bucket's kernel and sums them, each scaled
/// by its kernel's peak gain. Returns the patch height grid (row-major).
pub fn smooth_and_sum(stack: &LayerStack, kernels: &[SmoothingKernel], method: ConvolutionMethod) -> Result<Vec<f64>> {
    if kernels.len() != stack.layers.len() {
        return Err(Error::config("patch.kernels", "one kernel per layer required"));
    }
    let (nx, ny) = (stack.nx, stack.ny);
    for k in kernels {
        if k.len() > nx.min(ny) {
            return Err(Error::config(
                "patch.res",
                format!("kernel of {} taps is wider than the {nx}x{ny} grid", k.len()),
            ));
        }
    }
    let smoothed: Vec<Vec<f64>> = stack
        .layers
        .par_iter()
        .zip(kernels.par_iter())
        .map(|(layer, kernel)| smooth_layer(layer, kernel, nx, ny, method))
        .collect();
    let mut heights = vec![0.0; nx * ny];
    for (layer, kernel) in smoothed.iter().zip(kernels) {
        let gain = kernel.peak_gain;
        for (h, v) in heights.iter_mut().zip(layer) {
            *h += gain * v;
        }
    }
    Ok(heights)
}

/// Wraps summed heights into a field with finite-difference normals and an
/// optional choppy displacement -χ ∇h r̄.
pub fn finish_field(heights: Vec<f64>, stack: &LayerStack, choppiness: f64, mean_radius: f64) -> HeightField {
    let mut field = HeightField::from_heights(
        stack.nx,
        stack.ny,
        stack.origin,
        stack.texel_size,
        heights,
        Boundary::Clamped,
    );
    if choppiness != 0.0 {
        for j in 0..field.ny {
            for i in 0..field.nx {
                let [gx, gy] = field.gradient(i, j, Boundary::Clamped);
                let idx = field.index(i, j);
                field.displacement[idx] = [-choppiness * gx * mean_radius, -choppiness * gy * mean_radius];
            }
        }
    }
    field
}

/// Per-patch synthesis pipeline state.
#[derive(Debug, Clone)]
pub struct PatchSynthesizer {
    pub kernels: Vec<SmoothingKernel>,
    pub stack: LayerStack,
    pub method: ConvolutionMethod,
    pub choppiness: f64,
    mean_radius: f64,
}

impl PatchSynthesizer {
    pub fn new(patch: &PatchRegion, resolution: usize, table: &BucketTable, choppiness: f64) -> Result<Self> {
        let texel = patch.l1 / resolution as f64;
        let kernels = kernels_for(table, texel);
        let stack = LayerStack::new(patch, resolution, &kernels)?;
        for k in &kernels {
            if k.len() > stack.nx.min(stack.ny) {
                return Err(Error::config(
                    "patch.res",
                    format!("kernel of {} taps is wider than the patch grid", k.len()),
                ));
            }
        }
        let mean_radius = table.buckets.iter().map(|b| b.radius).sum::<f64>() / table.len() as f64;
        Ok(Self {
            kernels,
            stack,
            method: ConvolutionMethod::Auto,
            choppiness,
            mean_radius,
        })
    }

    pub fn synthesize(&mut self, particles: &ParticleSet, patch: &PatchRegion) -> Result<HeightField> {
        self.stack.set_patch(patch);
        accumulate(particles, &mut self.stack);
        let heights = smooth_and_sum(&self.stack, &self.kernels, self.method)?;
        Ok(finish_field(heights, &self.stack, self.choppiness, self.mean_radius))
    }
}

//! Periodic background height field synthesized from the shared directional
//! spectrum by frequency-domain phase evolution and a 2-D inverse FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Boundary, HeightField};
use crate::spectrum::{integrate, DirectionalSpectrum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FftConfig {
    /// Texels per side; must be a power of two.
    pub n: usize,
    /// Physical side length of the periodic tile (m).
    pub domain_size: f64,
    pub seed: u64,
    /// Horizontal displacement scale; 0 disables choppy displacement.
    pub choppiness: f64,
}

impl Default for FftConfig {
    fn default() -> Self {
        Self {
            n: 256,
            domain_size: 500.0,
            seed: 1,
            choppiness: 1.0,
        }
    }
}

#[derive(Clone)]
pub struct FftState {
    pub n: usize,
    pub domain_size: f64,
    pub g: f64,
    pub choppiness: f64,
    pub seed: u64,
    /// Initial amplitudes of waves travelling along each wavevector.
    pub h0: Vec<Complex64>,
    /// conj(h0(-k)), cached per bin.
    h0_mirror: Vec<Complex64>,
    /// ω(k) = sqrt(g |k|) per bin.
    pub dispersion: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftState")
            .field("n", &self.n)
            .field("domain_size", &self.domain_size)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

/// Signed frequency index of FFT bin `i`.
#[inline]
fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl FftState {
    /// Draws complex Gaussian amplitudes whose variance reproduces the
    /// spectrum's energy on the discrete wavevector grid.
    pub fn new(spectrum: &DirectionalSpectrum, config: FftConfig) -> Result<Self> {
        let g = spectrum.params.g;
        Self::from_density(config, g, |omega, heading| {
            spectrum.evaluate_heading(omega, heading).unwrap_or(0.0)
        })
    }

    /// Like [`new`](Self::new) with an arbitrary S(ω, heading) density.
    pub fn from_density(
        config: FftConfig,
        g: f64,
        density: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let n = config.n;
        validate(&config)?;
        let dk = 2.0 * PI / config.domain_size;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut h0 = vec![Complex64::new(0.0, 0.0); n * n];
        for iy in 0..n {
            for ix in 0..n {
                let xi_re: f64 = StandardNormal.sample(&mut rng);
                let xi_im: f64 = StandardNormal.sample(&mut rng);
                // Nyquist rows/columns have no travelling counterpart.
                if ix == n / 2 || iy == n / 2 {
                    continue;
                }
                let kx = signed_index(ix, n) as f64 * dk;
                let ky = signed_index(iy, n) as f64 * dk;
                let k = kx.hypot(ky);
                if k == 0.0 {
                    continue;
                }
                let omega = (g * k).sqrt();
                let heading = ky.atan2(kx);
                let s = density(omega, heading);
                // S(ω,θ) dω dθ = S_k k dk dθ with dω/dk = g / 2ω; the mirrored
                // term doubles the per-bin variance, hence the leading 1/2.
                let variance = 0.5 * s * (g / (2.0 * omega)) / k * dk * dk;
                let scale = (0.5 * variance).sqrt();
                h0[iy * n + ix] = Complex64::new(xi_re * scale, xi_im * scale);
            }
        }
        Self::from_amplitudes(config, g, h0)
    }

    /// Builds a state from explicit initial amplitudes (bin-indexed, row-major
    /// with kx varying fastest).
    pub fn from_amplitudes(config: FftConfig, g: f64, mut h0: Vec<Complex64>) -> Result<Self> {
        validate(&config)?;
        let n = config.n;
        if h0.len() != n * n {
            return Err(Error::config("fft.h0", "amplitude grid must be n*n"));
        }
        h0[0] = Complex64::new(0.0, 0.0);
        let dk = 2.0 * PI / config.domain_size;
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        let mut dispersion = vec![0.0; n * n];
        let mut h0_mirror = vec![Complex64::new(0.0, 0.0); n * n];
        for iy in 0..n {
            for ix in 0..n {
                let idx = iy * n + ix;
                kx[idx] = signed_index(ix, n) as f64 * dk;
                ky[idx] = signed_index(iy, n) as f64 * dk;
                dispersion[idx] = (g * kx[idx].hypot(ky[idx])).sqrt();
                let mirror = ((n - iy) % n) * n + (n - ix) % n;
                h0_mirror[idx] = h0[mirror].conj();
            }
        }
        let inverse = FftPlanner::new().plan_fft_inverse(n);
        Ok(Self {
            n,
            domain_size: config.domain_size,
            g,
            choppiness: config.choppiness,
            seed: config.seed,
            h0,
            h0_mirror,
            dispersion,
            kx,
            ky,
            inverse,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.domain_size / self.n as f64
    }

    /// Time-evolved spectrum h(k, t) = h0(k) e^{-iωt} + conj(h0(-k)) e^{iωt};
    /// Hermitian in k for every t.
    pub fn spectrum_at(&self, t: f64) -> Vec<Complex64> {
        self.h0
            .iter()
            .zip(&self.h0_mirror)
            .zip(&self.dispersion)
            .map(|((&a, &b), &w)| {
                let rot = Complex64::from_polar(1.0, -w * t);
                a * rot + b * rot.conj()
            })
            .collect()
    }

    /// Complex-valued inverse transform of the evolved spectrum. Its imaginary
    /// part is round-off only.
    pub fn height_complex(&self, t: f64) -> Vec<Complex64> {
        let mut grid = self.spectrum_at(t);
        self.inverse_2d(&mut grid);
        grid
    }

    /// Unnormalized 2-D inverse DFT, in place.
    fn inverse_2d(&self, grid: &mut [Complex64]) {
        let n = self.n;
        self.inverse.process(grid);
        transpose(grid, n);
        self.inverse.process(grid);
        transpose(grid, n);
    }

    pub fn synthesize(&self, t: f64) -> HeightField {
        let n = self.n;
        let spec = self.spectrum_at(t);
        let mut height = spec.clone();
        self.inverse_2d(&mut height);

        let mut field = HeightField::from_heights(
            n,
            n,
            [0.0, 0.0],
            self.spacing(),
            height.iter().map(|c| c.re).collect(),
            Boundary::Periodic,
        );

        if self.choppiness != 0.0 {
            // D(x) = Σ -i k/|k| h(k) e^{ik·x}
            let mut dx = vec![Complex64::new(0.0, 0.0); n * n];
            let mut dy = vec![Complex64::new(0.0, 0.0); n * n];
            for idx in 0..n * n {
                let k = self.kx[idx].hypot(self.ky[idx]);
                if k > 0.0 {
                    let minus_i_h = Complex64::new(spec[idx].im, -spec[idx].re);
                    dx[idx] = minus_i_h * (self.kx[idx] / k);
                    dy[idx] = minus_i_h * (self.ky[idx] / k);
                }
            }
            self.inverse_2d(&mut dx);
            self.inverse_2d(&mut dy);
            let chop = self.choppiness;
            for (out, (a, b)) in field.displacement.iter_mut().zip(dx.iter().zip(&dy)) {
                *out = [chop * a.re, chop * b.re];
            }
        }
        field
    }
}

fn validate(config: &FftConfig) -> Result<()> {
    if config.n < 2 || !config.n.is_power_of_two() {
        return Err(Error::config("fft.n", format!("{} is not a power of two", config.n)));
    }
    if !(config.domain_size > 0.0 && config.domain_size.is_finite()) {
        return Err(Error::config("fft.domain_size", "must be > 0"));
    }
    Ok(())
}

fn transpose(grid: &mut [Complex64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            grid.swap(j * n + i, i * n + j);
        }
    }
}

/// Surface-elevation variance the discrete grid resolves, by quadrature of
/// S(ω, θ) over the wavevector square covered by non-DC, non-Nyquist bins.
pub fn resolved_band_variance(
    spectrum: &DirectionalSpectrum,
    n: usize,
    domain_size: f64,
) -> Result<f64> {
    let g = spectrum.params.g;
    let dk = 2.0 * PI / domain_size;
    let inner = 0.5 * dk;
    let outer = (n as f64 / 2.0 - 0.5) * dk;
    let steps = 2048;
    let h = 2.0 * PI / steps as f64;
    let mut total = 0.0;
    for s in 0..steps {
        let phi = -PI + (s as f64 + 0.5) * h;
        let box_scale = phi.cos().abs().max(phi.sin().abs());
        let w_lo = (g * inner / box_scale).sqrt();
        let w_hi = (g * outer / box_scale).sqrt();
        let radial = integrate(
            |w| spectrum.evaluate_heading(w, phi).unwrap_or(0.0),
            w_lo,
            w_hi,
        )?;
        total += radial * h;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SpectrumParams;

    fn spectrum() -> DirectionalSpectrum {
        DirectionalSpectrum::new(SpectrumParams::derive(5.0, 10_000.0, 9.81).unwrap(), 0.0)
    }

    fn small(n: usize) -> FftConfig {
        FftConfig {
            n,
            domain_size: 100.0,
            seed: 7,
            choppiness: 1.0,
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let cfg = FftConfig { n: 100, ..small(16) };
        assert!(matches!(FftState::new(&spectrum(), cfg), Err(Error::Config { .. })));
        let cfg = FftConfig { domain_size: 0.0, ..small(16) };
        assert!(FftState::new(&spectrum(), cfg).is_err());
    }

    #[test]
    fn zero_spectrum_gives_flat_surface() {
        let state = FftState::from_density(small(32), 9.81, |_, _| 0.0).unwrap();
        assert!(state.h0.iter().all(|c| c.norm() == 0.0));
        let f = state.synthesize(3.0);
        assert!(f.height.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let a = FftState::new(&spectrum(), small(32)).unwrap();
        let b = FftState::new(&spectrum(), small(32)).unwrap();
        assert_eq!(a.h0, b.h0);
        let c = FftState::new(&spectrum(), FftConfig { seed: 8, ..small(32) }).unwrap();
        assert_ne!(a.h0, c.h0);
    }

    #[test]
    fn dc_bin_is_zero_and_evolved_spectrum_is_hermitian() {
        let n = 32;
        let state = FftState::new(&spectrum(), small(n)).unwrap();
        assert_eq!(state.h0[0], Complex64::new(0.0, 0.0));
        let spec = state.spectrum_at(2.5);
        for iy in 0..n {
            for ix in 0..n {
                let a = spec[iy * n + ix];
                let b = spec[((n - iy) % n) * n + (n - ix) % n];
                assert!((a - b.conj()).norm() <= 1e-15 * (1.0 + a.norm()));
            }
        }
    }

    /// O(n⁴) reference transform for the FFT path.
    fn direct_idft(spec: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for y in 0..n {
            for x in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for ky in 0..n {
                    for kx in 0..n {
                        let phase = 2.0 * PI * ((kx * x + ky * y) % n) as f64 / n as f64;
                        acc += spec[ky * n + kx] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[y * n + x] = acc;
            }
        }
        out
    }

    #[test]
    fn transform_matches_direct_dft() {
        let n = 16;
        let state = FftState::new(&spectrum(), small(n)).unwrap();
        let t = 1.7;
        let fast = state.height_complex(t);
        let slow = direct_idft(&state.spectrum_at(t), n);
        let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() <= 1e-9 * scale.max(1e-300));
        }
    }

    #[test]
    fn t_zero_is_plain_inverse_of_initial_spectrum() {
        let n = 16;
        let state = FftState::new(&spectrum(), small(n)).unwrap();
        let spec0: Vec<Complex64> = state
            .h0
            .iter()
            .zip(&state.h0_mirror)
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(state.spectrum_at(0.0), spec0);
        let f = state.synthesize(0.0);
        let direct = direct_idft(&spec0, n);
        for (h, d) in f.height.iter().zip(&direct) {
            assert!((h - d.re).abs() < 1e-12);
        }
    }

    #[test]
    fn imaginary_residue_is_negligible() {
        let state = FftState::new(&spectrum(), small(64)).unwrap();
        let grid = state.height_complex(12.0);
        let max_re = grid.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let max_im = grid.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        assert!(max_im < 1e-9 * max_re, "{max_im} vs {max_re}");
    }

    #[test]
    fn surface_is_periodic_and_zero_mean() {
        let state = FftState::new(&spectrum(), small(64)).unwrap();
        let f = state.synthesize(4.0);
        let a = f.sample(13.1, 77.7, Boundary::Periodic);
        let b = f.sample(13.1 + 100.0, 77.7 - 100.0, Boundary::Periodic);
        assert!((a.height - b.height).abs() < 1e-12);
        let rms = f.variance().sqrt();
        assert!(f.mean().abs() < 1e-9 * rms);
    }

    #[test]
    fn variance_is_stationary_under_phase_rotation() {
        let state = FftState::new(&spectrum(), small(64)).unwrap();
        // Parseval: the variance is Σ|h(k,t)|²/... which only changes through
        // the cross terms between k and -k.
        let v0 = state.synthesize(0.0).variance();
        let v1 = state.synthesize(100.0).variance();
        assert!(((v0 - v1) / v0).abs() < 0.01, "{v0} vs {v1}");
    }

    #[test]
    fn normals_are_unit_and_displacement_finite() {
        let state = FftState::new(&spectrum(), small(32)).unwrap();
        let f = state.synthesize(1.0);
        for n in &f.normal {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            assert!((len - 1.0).abs() < 1e-6);
        }
        assert!(f.displacement.iter().all(|d| d[0].is_finite() && d[1].is_finite()));
        assert!(f.displacement.iter().any(|d| d[0] != 0.0));
    }
}

//! JONSWAP frequency spectrum with cos-2s directional spreading, and the
//! equal-energy frequency buckets that both the FFT field and the wave
//! particles are sampled from.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Peak-width below and above the peak frequency.
pub const DEFAULT_SIGMA_LOW: f64 = 0.07;
pub const DEFAULT_SIGMA_HIGH: f64 = 0.09;

/// Sampled band, as multiples of the peak frequency.
pub const BAND_LOW: f64 = 0.5;
pub const BAND_HIGH: f64 = 2.5;

const QUAD_BASE_INTERVALS: usize = 4096;
const QUAD_MAX_INTERVALS: usize = 1 << 20;
const QUAD_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumParams {
    pub u10: f64,
    pub fetch: f64,
    pub g: f64,
    pub alpha: f64,
    pub omega_p: f64,
    pub gamma: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
}

fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

impl SpectrumParams {
    /// Fetch-limited JONSWAP parameters from wind speed, fetch and gravity.
    pub fn derive(u10: f64, fetch: f64, g: f64) -> Result<Self> {
        require_positive("u10", u10)?;
        require_positive("fetch", fetch)?;
        require_positive("g", g)?;

        let alpha = 0.076 * (u10 * u10 / (fetch * g)).powf(0.22);
        let omega_p = 22.0 * (g * g / (u10 * fetch)).cbrt();
        let gamma = 7.0 * (g * fetch / (u10 * u10)).powf(-0.142);

        Ok(Self {
            u10,
            fetch,
            g,
            alpha,
            omega_p,
            gamma,
            sigma_low: DEFAULT_SIGMA_LOW,
            sigma_high: DEFAULT_SIGMA_HIGH,
        })
    }

    pub fn with_sigma(mut self, sigma_low: f64, sigma_high: f64) -> Result<Self> {
        for (name, s) in [("sigma_low", sigma_low), ("sigma_high", sigma_high)] {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Domain {
                    name,
                    value: s,
                    reason: "must lie in (0, 1)",
                });
            }
        }
        self.sigma_low = sigma_low;
        self.sigma_high = sigma_high;
        Ok(self)
    }

    /// One-dimensional spectral density S_J(ω) in m²·s/rad.
    pub fn evaluate_1d(&self, omega: f64) -> Result<f64> {
        require_positive("omega", omega)?;
        Ok(self.density_unchecked(omega))
    }

    fn density_unchecked(&self, omega: f64) -> f64 {
        let wp = self.omega_p;
        let sigma = if omega <= wp {
            self.sigma_low
        } else {
            self.sigma_high
        };
        let r = (-(omega - wp).powi(2) / (2.0 * sigma * sigma * wp * wp)).exp();
        let ratio = wp / omega;
        self.alpha * self.g * self.g * omega.powi(-5) * (-1.25 * ratio.powi(4)).exp()
            * self.gamma.powf(r)
    }

    /// Spreading exponent s(ω) of the cos-2s model.
    pub fn spreading_exponent(&self, omega: f64) -> f64 {
        let mu = if omega <= self.omega_p { 5.0 } else { -2.5 };
        16.0 * (omega / self.omega_p).powf(mu)
    }

    /// Normalized cos-2s spreading Dir(ω, θ) in 1/rad; θ is relative to the
    /// mean wave direction and is wrapped to [-π, π].
    pub fn evaluate_dir(&self, omega: f64, theta: f64) -> Result<f64> {
        require_positive("omega", omega)?;
        Ok(self.spreading_unchecked(omega, theta))
    }

    fn spreading_unchecked(&self, omega: f64, theta: f64) -> f64 {
        let s = self.spreading_exponent(omega);
        let norm =
            (libm::lgamma(s + 1.0) - libm::lgamma(s + 0.5)).exp() / (2.0 * PI.sqrt());
        let half = 0.5 * wrap_angle(theta);
        // cos(θ/2) >= 0 on [-π, π]; max() guards the -0 rounding at ±π.
        norm * half.cos().max(0.0).powf(2.0 * s)
    }

    /// Lower and upper edge of the sampled band.
    pub fn band(&self) -> (f64, f64) {
        (BAND_LOW * self.omega_p, BAND_HIGH * self.omega_p)
    }
}

/// Wraps an angle to [-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    if (-PI..=PI).contains(&theta) {
        return theta;
    }
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped < -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalSpectrum {
    pub params: SpectrumParams,
    /// Mean wave direction in the world frame (radians from +x).
    pub mean_direction: f64,
}

impl DirectionalSpectrum {
    pub fn new(params: SpectrumParams, mean_direction: f64) -> Self {
        Self {
            params,
            mean_direction,
        }
    }

    /// S(ω, θ) = S_J(ω) · Dir(ω, θ), θ relative to the mean direction.
    pub fn evaluate_2d(&self, omega: f64, theta: f64) -> Result<f64> {
        require_positive("omega", omega)?;
        Ok(self.params.density_unchecked(omega) * self.params.spreading_unchecked(omega, theta))
    }

    /// Same as [`evaluate_2d`](Self::evaluate_2d) with a world-frame heading.
    pub fn evaluate_heading(&self, omega: f64, heading: f64) -> Result<f64> {
        self.evaluate_2d(omega, heading - self.mean_direction)
    }
}

/// How a bucket's representative frequency is picked inside its interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Representative {
    /// Energy-weighted mean frequency of the interval.
    #[default]
    Centroid,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBucket {
    pub index: usize,
    pub omega: f64,
    pub lower: f64,
    pub upper: f64,
    pub delta_omega: f64,
    /// Particle radius πg/ω² (half the deep-water wavelength).
    pub radius: f64,
    /// Phase speed g/ω.
    pub speed: f64,
    /// ∫ S_J dω over the bucket interval (m²).
    pub energy_density: f64,
}

impl FrequencyBucket {
    pub fn wavelength(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn wavenumber(&self, g: f64) -> f64 {
        self.omega * self.omega / g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketTable {
    pub buckets: Vec<FrequencyBucket>,
    pub n_omega: usize,
    pub n_theta: usize,
    /// ∫ S_J dω over the whole sampled band (m²).
    pub total_energy: f64,
}

impl BucketTable {
    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn delta_theta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    /// Direction samples spanning [-π, π] (cell centers), relative to the
    /// mean direction.
    pub fn theta_samples(&self) -> impl Iterator<Item = f64> + '_ {
        let dt = self.delta_theta();
        (0..self.n_theta).map(move |j| -PI + (j as f64 + 0.5) * dt)
    }

    /// Index of the bucket whose particle radius is closest to `radius`.
    pub fn nearest_radius(&self, radius: f64) -> usize {
        let mut best = 0;
        let mut best_err = f64::INFINITY;
        for b in &self.buckets {
            let err = (b.radius - radius).abs();
            if err < best_err {
                best = b.index;
                best_err = err;
            }
        }
        best
    }

    pub fn max_radius(&self) -> f64 {
        self.buckets.iter().map(|b| b.radius).fold(0.0, f64::max)
    }
}

/// Trapezoid rule on `intervals` equal intervals, returning the running
/// cumulative integral at each of the `intervals + 1` nodes.
fn cumulative_trapezoid(f: &impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> Vec<f64> {
    let h = (b - a) / intervals as f64;
    let mut out = Vec::with_capacity(intervals + 1);
    let mut acc = 0.0;
    let mut prev = f(a);
    out.push(0.0);
    for i in 1..=intervals {
        let x = if i == intervals { b } else { a + i as f64 * h };
        let cur = f(x);
        acc += 0.5 * (prev + cur) * h;
        prev = cur;
        out.push(acc);
    }
    out
}

/// Trapezoid quadrature refined by interval doubling until the relative
/// change drops below 1e-8. Returns the node count used and the cumulative
/// integral on that grid.
fn adaptive_cumulative(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<(usize, Vec<f64>)> {
    let mut n = QUAD_BASE_INTERVALS;
    let mut cum = cumulative_trapezoid(f, a, b, n);
    loop {
        let total = *cum.last().unwrap();
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite integral over [{a}, {b}]"
            )));
        }
        if n >= QUAD_MAX_INTERVALS {
            return Ok((n, cum));
        }
        let finer = cumulative_trapezoid(f, a, b, 2 * n);
        let finer_total = *finer.last().unwrap();
        let converged = (finer_total - total).abs() <= QUAD_REL_TOL * finer_total.abs();
        n *= 2;
        cum = finer;
        if converged {
            return Ok((n, cum));
        }
    }
}

/// Adaptive trapezoid integral of `f` over [a, b].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    adaptive_cumulative(&f, a, b).map(|(_, c)| *c.last().unwrap())
}

/// Partitions [0.5ωp, 2.5ωp] into `n_omega` intervals of equal ∫S_J dω.
pub fn build_buckets(
    params: &SpectrumParams,
    n_omega: usize,
    n_theta: usize,
    representative: Representative,
) -> Result<BucketTable> {
    if n_omega < 2 {
        return Err(Error::config("n_omega", "need at least 2 frequency buckets"));
    }
    if n_theta < 2 {
        return Err(Error::config("n_theta", "need at least 2 direction samples"));
    }
    let (lo, hi) = params.band();
    let density = |w: f64| params.density_unchecked(w);
    let (intervals, cum) = adaptive_cumulative(&density, lo, hi)?;
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::Numeric("spectrum carries no energy in band".into()));
    }
    let h = (hi - lo) / intervals as f64;

    // Invert the monotone cumulative energy at the quantiles k/N.
    let mut edges = Vec::with_capacity(n_omega + 1);
    edges.push(lo);
    let mut node = 0;
    for k in 1..n_omega {
        let target = total * k as f64 / n_omega as f64;
        while cum[node + 1] < target {
            node += 1;
        }
        let (c0, c1) = (cum[node], cum[node + 1]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        edges.push(lo + (node as f64 + frac) * h);
    }
    edges.push(hi);

    let g = params.g;
    let mut buckets = Vec::with_capacity(n_omega);
    for (index, w) in edges.windows(2).enumerate() {
        let (lower, upper) = (w[0], w[1]);
        let energy = integrate(density, lower, upper)?;
        let omega = match representative {
            Representative::Centroid => integrate(|x| x * density(x), lower, upper)? / energy,
            Representative::Midpoint => 0.5 * (lower + upper),
        };
        buckets.push(FrequencyBucket {
            index,
            omega,
            lower,
            upper,
            delta_omega: upper - lower,
            radius: PI * g / (omega * omega),
            speed: g / omega,
            energy_density: energy,
        });
    }

    Ok(BucketTable {
        buckets,
        n_omega,
        n_theta,
        total_energy: total,
    })
}

use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use hybrid_ocean::config::SimConfig;
use hybrid_ocean::coupling::blend_weight;
use hybrid_ocean::fft::{resolved_band_variance, FftConfig, FftState};
use hybrid_ocean::particles::PatchRegion;
use hybrid_ocean::sim::Simulation;
use hybrid_ocean::spectrum::{build_buckets, DirectionalSpectrum, Representative, SpectrumParams};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

static BAND: OnceLock<f64> = OnceLock::new();

fn small_config(seed: u64) -> SimConfig {
    SimConfig::parse(&format!(
        "fft.n=32\nspectrum.u10=10\nspectrum.n_omega=4\nspectrum.n_theta=6\n\
         patch.0.origin_x=100\npatch.0.origin_y=100\npatch.0.size_x=60\npatch.0.size_y=40\n\
         patch.0.res=64\npatch.0.margin=4\nsim.seed={seed}\n"
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spreading_integrates_to_one(u10 in 3.0f64..15.0, frac in 0.0f64..1.0) {
        let p = SpectrumParams::derive(u10, 10_000.0, 9.81).unwrap();
        let w = p.omega_p * (0.5 + 2.0 * frac);
        let total = simpson(|t| p.evaluate_dir(w, t).unwrap(), -PI, PI, 1 << 13);
        prop_assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn buckets_partition_the_band_evenly(u10 in 3.0f64..15.0, n in 2usize..20) {
        let p = SpectrumParams::derive(u10, 10_000.0, 9.81).unwrap();
        let t = build_buckets(&p, n, 8, Representative::Centroid).unwrap();
        let (lo, hi) = p.band();
        prop_assert!((t.buckets[0].lower - lo).abs() < 1e-9);
        prop_assert!((t.buckets[n - 1].upper - hi).abs() < 1e-9);
        let mut sum = 0.0;
        for pair in t.buckets.windows(2) {
            prop_assert!((pair[0].upper - pair[1].lower).abs() < 1e-12);
        }
        for b in &t.buckets {
            prop_assert!(b.lower < b.omega && b.omega < b.upper);
            let e = simpson(|w| p.evaluate_1d(w).unwrap(), b.lower, b.upper, 4000);
            prop_assert!((e / (t.total_energy / n as f64) - 1.0).abs() < 0.01);
            sum += e;
        }
        prop_assert!((sum / t.total_energy - 1.0).abs() < 1e-3);
    }

    #[test]
    fn blend_weight_is_bounded(
        x in -50.0f64..150.0,
        y in -50.0f64..150.0,
        l1 in 10.0f64..100.0,
        l2 in 10.0f64..100.0,
        m in 0.5f64..5.0,
    ) {
        let region = PatchRegion::new([0.0, 0.0], l1, l2, m).unwrap();
        let w = blend_weight(&region, [x, y]);
        prop_assert!((0.0..=1.0).contains(&w));
        if !region.contains([x, y]) {
            prop_assert_eq!(w, 0.0);
        }
        if region.inward_depth([x, y]) >= m {
            prop_assert_eq!(w, 1.0);
        }
    }

    #[test]
    fn fft_variance_matches_resolved_band(seed in any::<u64>()) {
        let s = DirectionalSpectrum::new(SpectrumParams::derive(5.0, 10_000.0, 9.81).unwrap(), 0.3);
        let config = FftConfig { n: 128, domain_size: 500.0, seed, choppiness: 0.0 };
        let field = FftState::new(&s, config).unwrap().synthesize(3.0);
        let band = *BAND.get_or_init(|| resolved_band_variance(&s, 128, 500.0).unwrap());
        prop_assert!((field.variance() / band - 1.0).abs() < 0.05, "{} vs {band}", field.variance());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn particle_energy_is_conserved_and_stages_fit_the_frame(seed in any::<u64>()) {
        let mut sim = Simulation::new(small_config(seed)).unwrap();
        sim.prefill(5.0);
        for _ in 0..20 {
            let t = sim.step().unwrap();
            let stages = t.fft + t.inject + t.advect + t.interaction + t.synthesis + t.blend;
            prop_assert!(stages <= t.total + 1e-6, "{stages} > {}", t.total);
        }
        let s = sim.stats();
        let injected: f64 = s.injected_energy.iter().sum();
        let out: f64 = s.despawned_energy.iter().sum::<f64>() + s.resident_energy.iter().sum::<f64>()
            - s.emitted_energy.iter().sum::<f64>();
        prop_assert!(injected > 0.0);
        prop_assert!((out / injected - 1.0).abs() < 0.05, "{out} vs {injected}");
        prop_assert_eq!(s.particles(), sim.particle_count());
    }
}

//! Two-pass smoothing must equal a direct 2-D convolution with the outer
//! product kernel.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hybrid_ocean::particles::PatchRegion;
use hybrid_ocean::synthesis::{smooth_and_sum, ConvolutionMethod, LayerStack, SmoothingKernel};

fn direct_2d(data: &[f64], width: usize, apron: usize, n: usize, radius_texels: f64) -> Vec<f64> {
    let r = apron as i64;
    let w1 = |k: i64| 1.0 + (PI * k as f64 / radius_texels).cos();
    let mut norm = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            norm += w1(dx) * w1(dy);
        }
    }
    let peak = norm / (w1(0) * w1(0));
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let u = (i + apron) as i64 + dx;
                    let v = (j + apron) as i64 + dy;
                    acc += w1(dx) * w1(dy) * data[v as usize * width + u as usize];
                }
            }
            // Normalized kernel times the unit-peak gain.
            out[j * n + i] = acc / norm * peak;
        }
    }
    out
}

#[test]
fn two_pass_equals_direct_2d() {
    let n = 32;
    let patch = PatchRegion::new([0.0, 0.0], n as f64, n as f64, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for radius in [1.5, 4.0, 6.3, 11.0] {
        let k = SmoothingKernel::raised_cosine(radius, 1.0);
        let mut stack = LayerStack::new(&patch, n, std::slice::from_ref(&k)).unwrap();
        let layer = &mut stack.layers[0];
        layer.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let expected = direct_2d(&layer.data, layer.width, layer.apron, n, radius);
        let scale = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for method in [ConvolutionMethod::Direct, ConvolutionMethod::Sliding] {
            let got = smooth_and_sum(&stack, std::slice::from_ref(&k), method).unwrap();
            let err = got.iter().zip(&expected).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-12 * scale.max(1.0), "r {radius} {method:?}: {err:e}");
        }
    }
}

//! Stitching patch fields into the periodic background with distance-based
//! blend weights, and world-space surface queries against the result.

use crate::error::{Error, Result};
use crate::field::{normal_from_gradient, normalize3, Boundary, HeightField, SurfaceSample};
use crate::particles::PatchRegion;

/// 3t² - 2t³ on [0, 1], clamped outside.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Patch weight at a world position: 0 on and outside the boundary, 1 at
/// depth >= margin.
#[inline]
pub fn blend_weight(patch: &PatchRegion, p: [f64; 2]) -> f64 {
    let depth = patch.inward_depth(p);
    if depth <= 0.0 {
        0.0
    } else if patch.margin <= 0.0 || depth >= patch.margin {
        1.0
    } else {
        smoothstep(depth / patch.margin)
    }
}

/// Per-texel patch weights, sampled at texel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendMask {
    pub nx: usize,
    pub ny: usize,
    pub margin: f64,
    pub weights: Vec<f64>,
}

impl BlendMask {
    pub fn build(patch: &PatchRegion, resolution: usize) -> Self {
        let texel = patch.l1 / resolution as f64;
        let nx = resolution;
        let ny = ((patch.l2 / texel).round() as usize).max(2);
        let mut weights = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let p = [
                    patch.origin[0] + (i as f64 + 0.5) * texel,
                    patch.origin[1] + (j as f64 + 0.5) * texel,
                ];
                weights.push(blend_weight(patch, p));
            }
        }
        Self {
            nx,
            ny,
            margin: patch.margin,
            weights,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.weights[j * self.nx + i]
    }
}

pub fn check_non_overlapping(regions: &[PatchRegion]) -> Result<()> {
    for (a, ra) in regions.iter().enumerate() {
        for (b, rb) in regions.iter().enumerate().skip(a + 1) {
            if ra.overlaps(rb) {
                return Err(Error::config(
                    format!("patch.{b}"),
                    format!("overlaps patch {a}"),
                ));
            }
        }
    }
    Ok(())
}

/// A synthesized patch as seen by the compositor.
#[derive(Debug, Clone, Copy)]
pub struct PatchSurface<'a> {
    pub region: &'a PatchRegion,
    pub field: &'a HeightField,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryOptions {
    /// Derive normals from the blended height instead of blending normals.
    pub recompute_normals: bool,
}

/// The hybrid surface at one instant: an optional periodic background plus
/// non-overlapping patches.
#[derive(Debug, Clone, Copy)]
pub struct Surface<'a> {
    pub background: Option<&'a HeightField>,
    pub patches: &'a [PatchSurface<'a>],
    pub options: QueryOptions,
}

impl<'a> Surface<'a> {
    fn covering(&self, p: [f64; 2]) -> Option<&PatchSurface<'a>> {
        self.patches.iter().find(|s| s.region.contains(p))
    }

    fn background_sample(&self, p: [f64; 2]) -> SurfaceSample {
        match self.background {
            Some(f) => f.sample(p[0], p[1], Boundary::Periodic),
            None => SurfaceSample {
                height: 0.0,
                normal: [0.0, 0.0, 1.0],
            },
        }
    }

    /// Blended height and normal at a world position.
    pub fn query(&self, p: [f64; 2]) -> SurfaceSample {
        let blended = self.blended(p);
        if !self.options.recompute_normals {
            return blended;
        }
        let h = self
            .covering(p)
            .map(|s| s.field.spacing)
            .or(self.background.map(|b| b.spacing))
            .unwrap_or(1.0);
        let hx = self.blended([p[0] + h, p[1]]).height - self.blended([p[0] - h, p[1]]).height;
        let hy = self.blended([p[0], p[1] + h]).height - self.blended([p[0], p[1] - h]).height;
        SurfaceSample {
            height: blended.height,
            normal: normal_from_gradient(hx / (2.0 * h), hy / (2.0 * h)),
        }
    }

    fn blended(&self, p: [f64; 2]) -> SurfaceSample {
        let Some(patch) = self.covering(p) else {
            return self.background_sample(p);
        };
        let local = patch.field.sample(p[0], p[1], Boundary::Clamped);
        if self.background.is_none() {
            return local;
        }
        let w = blend_weight(patch.region, p);
        if w == 0.0 {
            return self.background_sample(p);
        }
        if w == 1.0 {
            return local;
        }
        let far = self.background_sample(p);
        let mut normal = [0.0; 3];
        for c in 0..3 {
            normal[c] = w * local.normal[c] + (1.0 - w) * far.normal[c];
        }
        SurfaceSample {
            height: w * local.height + (1.0 - w) * far.height,
            normal: normalize3(normal),
        }
    }

    /// Samples the composite surface on a regular grid.
    pub fn composite(&self, origin: [f64; 2], spacing: f64, nx: usize, ny: usize) -> HeightField {
        let mut field = HeightField::flat(nx, ny, origin, spacing);
        for j in 0..ny {
            for i in 0..nx {
                let p = [origin[0] + i as f64 * spacing, origin[1] + j as f64 * spacing];
                let s = self.query(p);
                let idx = j * nx + i;
                field.height[idx] = s.height;
                field.normal[idx] = s.normal;
            }
        }
        field
    }
}

/// Convenience wrapper over [`Surface::query`].
pub fn query_surface(
    p: [f64; 2],
    background: Option<&HeightField>,
    patches: &[PatchSurface<'_>],
    options: QueryOptions,
) -> SurfaceSample {
    Surface {
        background,
        patches,
        options,
    }
    .query(p)
}

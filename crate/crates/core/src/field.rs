/// How samples outside the grid are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Indices wrap around (periodic FFT tile).
    Periodic,
    /// Indices clamp to the nearest edge texel.
    Clamped,
}

/// Regular grid of surface elevation, horizontal displacement and normals.
///
/// Texel `(i, j)` sits at `origin + (i, j) * spacing`; storage is row-major
/// with `i` (x) varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    pub spacing: f64,
    pub height: Vec<f64>,
    pub displacement: Vec<[f64; 2]>,
    pub normal: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub height: f64,
    pub normal: [f64; 3],
}

impl HeightField {
    pub fn flat(nx: usize, ny: usize, origin: [f64; 2], spacing: f64) -> Self {
        let len = nx * ny;
        Self {
            nx,
            ny,
            origin,
            spacing,
            height: vec![0.0; len],
            displacement: vec![[0.0; 2]; len],
            normal: vec![[0.0, 0.0, 1.0]; len],
        }
    }

    /// Wraps a height grid and derives its normals.
    pub fn from_heights(
        nx: usize,
        ny: usize,
        origin: [f64; 2],
        spacing: f64,
        height: Vec<f64>,
        boundary: Boundary,
    ) -> Self {
        assert_eq!(height.len(), nx * ny, "height grid size mismatch");
        let mut field = Self {
            nx,
            ny,
            origin,
            spacing,
            height,
            displacement: vec![[0.0; 2]; nx * ny],
            normal: vec![[0.0, 0.0, 1.0]; nx * ny],
        };
        field.compute_normals(boundary);
        field
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.height[self.index(i, j)]
    }

    /// Central-difference gradient at texel (i, j).
    pub fn gradient(&self, i: usize, j: usize, boundary: Boundary) -> [f64; 2] {
        let d = |n: usize, k: usize| -> (usize, usize, f64) {
            match boundary {
                Boundary::Periodic => ((k + n - 1) % n, (k + 1) % n, 2.0),
                Boundary::Clamped => {
                    let lo = k.saturating_sub(1);
                    let hi = (k + 1).min(n - 1);
                    (lo, hi, (hi - lo) as f64)
                }
            }
        };
        let (xl, xh, xs) = d(self.nx, i);
        let (yl, yh, ys) = d(self.ny, j);
        let gx = if xs > 0.0 {
            (self.at(xh, j) - self.at(xl, j)) / (xs * self.spacing)
        } else {
            0.0
        };
        let gy = if ys > 0.0 {
            (self.at(i, yh) - self.at(i, yl)) / (ys * self.spacing)
        } else {
            0.0
        };
        [gx, gy]
    }

    pub fn compute_normals(&mut self, boundary: Boundary) {
        for j in 0..self.ny {
            for i in 0..self.nx {
                let [gx, gy] = self.gradient(i, j, boundary);
                let idx = self.index(i, j);
                self.normal[idx] = normal_from_gradient(gx, gy);
            }
        }
    }

    /// Bilinear sample of height and normal at a world position.
    pub fn sample(&self, x: f64, y: f64, boundary: Boundary) -> SurfaceSample {
        let u = (x - self.origin[0]) / self.spacing;
        let v = (y - self.origin[1]) / self.spacing;
        let (i0, i1, fx) = self.axis(u, self.nx, boundary);
        let (j0, j1, fy) = self.axis(v, self.ny, boundary);
        let w = [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ];
        let idx = [
            self.index(i0, j0),
            self.index(i1, j0),
            self.index(i0, j1),
            self.index(i1, j1),
        ];
        let mut height = 0.0;
        let mut normal = [0.0; 3];
        for (wk, &k) in w.iter().zip(&idx) {
            height += wk * self.height[k];
            for c in 0..3 {
                normal[c] += wk * self.normal[k][c];
            }
        }
        SurfaceSample {
            height,
            normal: normalize3(normal),
        }
    }

    fn axis(&self, u: f64, n: usize, boundary: Boundary) -> (usize, usize, f64) {
        match boundary {
            Boundary::Periodic => {
                let base = u.floor();
                let f = u - base;
                let i0 = (base as i64).rem_euclid(n as i64) as usize;
                (i0, (i0 + 1) % n, f)
            }
            Boundary::Clamped => {
                let max = (n - 1) as f64;
                let u = u.clamp(0.0, max);
                let i0 = (u.floor() as usize).min(n.saturating_sub(2));
                let f = u - i0 as f64;
                (i0, (i0 + 1).min(n - 1), f)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.height.iter().sum::<f64>() / self.height.len() as f64
    }

    pub fn variance(&self) -> f64 {
        variance(&self.height)
    }

    /// Extent covered by texel centers.
    pub fn extent(&self) -> [f64; 2] {
        [
            (self.nx - 1) as f64 * self.spacing,
            (self.ny - 1) as f64 * self.spacing,
        ]
    }
}

pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[inline]
pub fn normal_from_gradient(gx: f64, gy: f64) -> [f64; 3] {
    normalize3([-gx, -gy, 1.0])
}

#[inline]
pub fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if len > 0.0 {
        [v[0] / len, v[1] / len, v[2] / len]
    } else {
        [0.0, 0.0, 1.0]
    }
}

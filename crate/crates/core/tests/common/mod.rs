//! Brute-force reference implementations and fixtures shared by the
//! integration suites. Written separately from the library code: plain
//! nested loops over an explicit sampler, everything in f64.
#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxtwin_core::radiometry::NormalizedVolume;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform white noise in `[0, 1]`.
pub fn noise_field(rng: &mut ChaCha8Rng, dims: [usize; 3], spacing: [f32; 3]) -> NormalizedVolume {
    let n = dims.iter().product();
    let values = (0..n).map(|_| rng.random::<f32>()).collect();
    NormalizedVolume { dims, spacing, values }
}

/// Sum of a few random low-frequency sinusoids, rescaled into `[0, 1]`.
pub fn smooth_field(rng: &mut ChaCha8Rng, dims: [usize; 3], spacing: [f32; 3]) -> NormalizedVolume {
    let waves: Vec<([f64; 3], f64, f64)> = (0..4)
        .map(|_| {
            let k = [0, 1, 2].map(|_| rng.random_range(-0.4..0.4));
            (k, rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.2..1.0))
        })
        .collect();
    let norm: f64 = waves.iter().map(|w| w.2).sum();
    let mut values = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [x as f64 * spacing[0] as f64, y as f64 * spacing[1] as f64, z as f64 * spacing[2] as f64];
                let s: f64 = waves
                    .iter()
                    .map(|(k, phase, amp)| amp * (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).sin())
                    .sum();
                values.push((0.5 + 0.5 * s / norm) as f32);
            }
        }
    }
    NormalizedVolume { dims, spacing, values }
}

pub fn random_spacing(rng: &mut ChaCha8Rng) -> [f32; 3] {
    [0, 1, 2].map(|_| rng.random_range(0.5f32..2.0))
}

struct Sampler<'a> {
    nv: &'a NormalizedVolume,
}

impl Sampler<'_> {
    fn get(&self, p: [i64; 3]) -> f64 {
        let [nx, ny, _] = self.nv.dims;
        self.nv.values[p[0] as usize + nx * (p[1] as usize + ny * p[2] as usize)] as f64
    }

    fn shifted(p: [i64; 3], axis: usize, by: i64) -> [i64; 3] {
        let mut q = p;
        q[axis] += by;
        q
    }

    fn h(&self, axis: usize) -> f64 {
        self.nv.spacing[axis] as f64
    }

    /// First derivative: central in the interior, forward/backward at the ends.
    fn d1(&self, p: [i64; 3], axis: usize) -> f64 {
        let n = self.nv.dims[axis] as i64;
        let h = self.h(axis);
        if p[axis] == 0 {
            (self.get(Self::shifted(p, axis, 1)) - self.get(p)) / h
        } else if p[axis] == n - 1 {
            (self.get(p) - self.get(Self::shifted(p, axis, -1))) / h
        } else {
            (self.get(Self::shifted(p, axis, 1)) - self.get(Self::shifted(p, axis, -1))) / (2.0 * h)
        }
    }

    /// Interior central difference, usable at any interior point.
    fn central(&self, p: [i64; 3], axis: usize, f: &dyn Fn([i64; 3]) -> f64) -> f64 {
        (f(Self::shifted(p, axis, 1)) - f(Self::shifted(p, axis, -1))) / (2.0 * self.h(axis))
    }
}

pub fn oracle_gradient(nv: &NormalizedVolume) -> Vec<[f64; 3]> {
    let s = Sampler { nv };
    let [nx, ny, nz] = nv.dims;
    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz as i64 {
        for y in 0..ny as i64 {
            for x in 0..nx as i64 {
                out.push([0, 1, 2].map(|a| s.d1([x, y, z], a)));
            }
        }
    }
    out
}

/// Hessian at an interior voxel. Diagonal terms use the three-point stencil;
/// mixed terms are central differences of central differences.
pub fn oracle_hessian(nv: &NormalizedVolume, c: [usize; 3]) -> [[f64; 3]; 3] {
    let s = Sampler { nv };
    let p = c.map(|v| v as i64);
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        let h = s.h(a);
        m[a][a] = (s.get(Sampler::shifted(p, a, 1)) - 2.0 * s.get(p) + s.get(Sampler::shifted(p, a, -1))) / (h * h);
    }
    for a in 0..3 {
        for b in 0..3 {
            if a == b {
                continue;
            }
            let inner = |q: [i64; 3]| s.central(q, b, &|r| s.get(r));
            m[a][b] = s.central(p, a, &inner);
        }
    }
    m
}

/// Directional curvature, zero on the boundary shell and on flat voxels.
pub fn oracle_kappa(nv: &NormalizedVolume) -> Vec<f64> {
    let s = Sampler { nv };
    let [nx, ny, nz] = nv.dims;
    let mut out = vec![0.0; nx * ny * nz];
    for z in 1..nz - 1 {
        for y in 1..ny - 1 {
            for x in 1..nx - 1 {
                let p = [x as i64, y as i64, z as i64];
                let g = [0, 1, 2].map(|a| s.d1(p, a));
                let len = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if len < 1e-6 {
                    continue;
                }
                let u = g.map(|v| v / len);
                let h = oracle_hessian(nv, [x, y, z]);
                let mut k = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        k += u[a] * h[a][b] * u[b];
                    }
                }
                out[x + nx * (y + ny * z)] = k;
            }
        }
    }
    out
}

/// `(c_acc, a_acc)` after compositing the samples front to back, in f64.
pub fn oracle_composite(samples: &[([f64; 3], f64)]) -> ([f64; 3], f64) {
    let mut c = [0.0; 3];
    let mut a = 0.0;
    for (color, alpha) in samples {
        let t = 1.0 - a;
        for k in 0..3 {
            c[k] += t * alpha * color[k];
        }
        a += t * alpha;
    }
    (c, a)
}

/// Sequential min-max rescale in f64.
pub fn oracle_normalize(raw: &[f32]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in raw {
        lo = lo.min(v as f64);
        hi = hi.max(v as f64);
    }
    raw.iter().map(|&v| (v as f64 - lo) / (hi - lo)).collect()
}

//! First and second spatial derivatives of a normalized volume.
//!
//! Gradients use central differences in the interior and one-sided
//! differences on the boundary shell, with per-axis spacing. Curvature is the
//! second derivative along the gradient direction, `ĝᵀ H ĝ`, and is zero on the
//! boundary shell and wherever the gradient is degenerate.

use rayon::prelude::*;

use crate::radiometry::NormalizedVolume;

/// Gradient magnitudes below this (normalized intensity per mm) have no
/// usable direction.
pub const GRADIENT_EPSILON: f32 = 1e-6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MorphologyError {
    #[error("volume {dims:?} is too small; every axis needs at least 3 voxels")]
    VolumeTooSmall { dims: [usize; 3] },
    #[error("coordinate {coord:?} lies on the boundary of a {dims:?} volume")]
    BoundaryCoordinate { coord: [usize; 3], dims: [usize; 3] },
}

pub type Result<T> = std::result::Result<T, MorphologyError>;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub dims: [usize; 3],
    /// Per-voxel gradient, normalized intensity per mm.
    pub vectors: Vec<[f32; 3]>,
    pub magnitudes: Vec<f32>,
    pub grad_max: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    pub dims: [usize; 3],
    pub kappa: Vec<f32>,
}

pub type Hessian = [[f64; 3]; 3];

fn check_size(dims: [usize; 3]) -> Result<()> {
    if dims.iter().any(|&d| d < 3) {
        return Err(MorphologyError::VolumeTooSmall { dims });
    }
    Ok(())
}

/// Derivative along one axis at position `i` of `n`, given accessor `at`.
#[inline]
fn axis_derivative(at: impl Fn(usize) -> f32, i: usize, n: usize, h: f32) -> f32 {
    if i == 0 {
        (at(1) - at(0)) / h
    } else if i == n - 1 {
        (at(n - 1) - at(n - 2)) / h
    } else {
        (at(i + 1) - at(i - 1)) / (2.0 * h)
    }
}

/// Gradient at a single voxel, using the same stencil as [`gradient_field`].
#[inline]
pub fn gradient_at(nv: &NormalizedVolume, x: usize, y: usize, z: usize) -> [f32; 3] {
    let [nx, ny, nz] = nv.dims;
    let [hx, hy, hz] = nv.spacing;
    [
        axis_derivative(|i| nv.at(i, y, z), x, nx, hx),
        axis_derivative(|j| nv.at(x, j, z), y, ny, hy),
        axis_derivative(|k| nv.at(x, y, k), z, nz, hz),
    ]
}

#[inline]
pub fn norm3(v: [f32; 3]) -> f32 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Per-voxel gradient vectors and magnitudes, plus their maximum.
pub fn gradient_field(nv: &NormalizedVolume) -> Result<GradientField> {
    check_size(nv.dims)?;
    let [nx, ny, _] = nv.dims;
    let slice = nx * ny;
    let mut vectors = vec![[0f32; 3]; nv.len()];
    vectors
        .par_chunks_mut(slice)
        .enumerate()
        .for_each(|(z, plane)| {
            for y in 0..ny {
                for x in 0..nx {
                    plane[x + nx * y] = gradient_at(nv, x, y, z);
                }
            }
        });
    let magnitudes: Vec<f32> = vectors.par_iter().map(|&v| norm3(v)).collect();
    let grad_max = parallel_max(&magnitudes);
    Ok(GradientField {
        dims: nv.dims,
        vectors,
        magnitudes,
        grad_max,
    })
}

/// Hessian by second central differences. Off-diagonal terms use the four
/// diagonal neighbours in the relevant plane.
pub fn hessian_at(nv: &NormalizedVolume, coord: [usize; 3]) -> Result<Hessian> {
    let dims = nv.dims;
    if (0..3).any(|a| coord[a] == 0 || coord[a] + 1 >= dims[a]) {
        return Err(MorphologyError::BoundaryCoordinate { coord, dims });
    }
    Ok(hessian_interior(nv, coord))
}

#[inline]
fn hessian_interior(nv: &NormalizedVolume, c: [usize; 3]) -> Hessian {
    let h = [nv.spacing[0] as f64, nv.spacing[1] as f64, nv.spacing[2] as f64];
    let sample = |d: [isize; 3]| -> f64 {
        nv.at(
            (c[0] as isize + d[0]) as usize,
            (c[1] as isize + d[1]) as usize,
            (c[2] as isize + d[2]) as usize,
        ) as f64
    };
    let center = sample([0, 0, 0]);
    let mut m = [[0f64; 3]; 3];
    for a in 0..3 {
        let mut plus = [0isize; 3];
        let mut minus = [0isize; 3];
        plus[a] = 1;
        minus[a] = -1;
        m[a][a] = (sample(plus) - 2.0 * center + sample(minus)) / (h[a] * h[a]);
    }
    for a in 0..3 {
        for b in (a + 1)..3 {
            let offset = |sa: isize, sb: isize| {
                let mut d = [0isize; 3];
                d[a] = sa;
                d[b] = sb;
                d
            };
            let v = (sample(offset(1, 1)) - sample(offset(1, -1)) - sample(offset(-1, 1)) + sample(offset(-1, -1)))
                / (4.0 * h[a] * h[b]);
            m[a][b] = v;
            m[b][a] = v;
        }
    }
    m
}

#[inline]
fn central_gradient_f64(nv: &NormalizedVolume, c: [usize; 3]) -> [f64; 3] {
    let [x, y, z] = c;
    let h = nv.spacing.map(|s| s as f64);
    [
        (nv.at(x + 1, y, z) as f64 - nv.at(x - 1, y, z) as f64) / (2.0 * h[0]),
        (nv.at(x, y + 1, z) as f64 - nv.at(x, y - 1, z) as f64) / (2.0 * h[1]),
        (nv.at(x, y, z + 1) as f64 - nv.at(x, y, z - 1) as f64) / (2.0 * h[2]),
    ]
}

/// `ĝᵀ H ĝ` at every interior voxel with a non-degenerate gradient.
pub fn directional_curvature(nv: &NormalizedVolume, g: &GradientField) -> CurvatureField {
    let [nx, ny, nz] = nv.dims;
    let slice = nx * ny;
    let mut kappa = vec![0f32; nv.len()];
    if nv.dims.iter().all(|&d| d >= 3) {
        kappa.par_chunks_mut(slice).enumerate().for_each(|(z, plane)| {
            if z == 0 || z == nz - 1 {
                return;
            }
            for y in 1..ny - 1 {
                for x in 1..nx - 1 {
                    let idx = nv.index(x, y, z);
                    let mag = g.magnitudes[idx];
                    if mag < GRADIENT_EPSILON {
                        continue;
                    }
                    // Direction from an f64 difference: the f32 vector loses too
                    // much relative precision on weak edges.
                    let v = central_gradient_f64(nv, [x, y, z]);
                    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if len == 0.0 {
                        continue;
                    }
                    let dir = [v[0] / len, v[1] / len, v[2] / len];
                    let hm = hessian_interior(nv, [x, y, z]);
                    let mut k = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            k += dir[a] * hm[a][b] * dir[b];
                        }
                    }
                    plane[x + nx * y] = k as f32;
                }
            }
        });
    }
    CurvatureField { dims: nv.dims, kappa }
}

/// Maximum of a slice via a chunked two-level reduction. `max` is
/// associative and commutative on non-NaN floats, so the result is exact and
/// independent of chunking.
pub fn parallel_max(values: &[f32]) -> f32 {
    const CHUNK: usize = 4096;
    values
        .par_chunks(CHUNK)
        .map(|c| c.iter().copied().fold(0.0f32, f32::max))
        .reduce(|| 0.0, f32::max)
}

pub fn max_gradient_magnitude(g: &GradientField) -> f32 {
    parallel_max(&g.magnitudes)
}

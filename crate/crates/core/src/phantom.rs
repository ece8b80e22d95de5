//! Deterministic synthetic head phantoms.
//!
//! The tri-tissue phantom is an ellipsoidal head: dark skull shell, a CSF
//! layer with folded inner boundary, gray-matter cortex, white-matter core,
//! two CSF ventricles, a bright enhancing lesion and a few thin vessels.
//! Tissue intensities are Gaussian around configurable normalized modes, so
//! the histogram has three peaks exactly where requested. The lesion centre
//! holds the global maximum, which makes the normalized modes equal the
//! requested ones.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::volume_io::Volume;

/// Mode triplets (CSF, GM, WM) and raw maxima of the three reference cohorts.
pub const COHORT_A: ([f32; 3], f32) = ([0.110, 0.167, 0.183], 1154.0);
pub const COHORT_B: ([f32; 3], f32) = ([0.054, 0.128, 0.310], 8034.0);
pub const COHORT_C: ([f32; 3], f32) = ([0.063, 0.128, 0.181], 17152.9);

const SKULL_MAX: f32 = 0.035;
const LESION_LEVEL: f32 = 0.85;
const VESSEL_LEVEL: f32 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    /// Normalized CSF, GM and WM modes.
    pub modes: [f32; 3],
    /// Standard deviation of tissue noise, in normalized units.
    pub sigma: f32,
    /// Raw intensity that normalizes to 1.0.
    pub i_max_raw: f32,
    pub vessels: bool,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(dims: [usize; 3], modes: [f32; 3], i_max_raw: f32) -> Self {
        PhantomSpec {
            dims,
            spacing: [1.0; 3],
            modes,
            sigma: 0.002,
            i_max_raw,
            vessels: true,
            seed: 0x5eed,
        }
    }

    pub fn cohort_a(dims: [usize; 3]) -> Self {
        Self::new(dims, COHORT_A.0, COHORT_A.1)
    }

    pub fn cohort_b(dims: [usize; 3]) -> Self {
        Self::new(dims, COHORT_B.0, COHORT_B.1)
    }

    pub fn cohort_c(dims: [usize; 3]) -> Self {
        Self::new(dims, COHORT_C.0, COHORT_C.1)
    }

    /// Normalized intensities, before raw scaling.
    pub fn generate_normalized(&self) -> Vec<f32> {
        let [nx, ny, nz] = self.dims;
        let extent = [0, 1, 2].map(|a| self.dims[a] as f32 * self.spacing[a]);
        let half = extent.iter().copied().fold(f32::INFINITY, f32::min) * 0.5;
        let noise = Normal::new(0.0f32, self.sigma.max(0.0)).expect("finite sigma");
        let lesion_center = [0.30f32, -0.22, 0.18];

        let mut values = vec![0f32; nx * ny * nz];
        values.par_chunks_mut(nx * ny).enumerate().for_each(|(z, plane)| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (z as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            for y in 0..ny {
                for x in 0..nx {
                    let q = [
                        ((x as f32 + 0.5) * self.spacing[0] - 0.5 * extent[0]) / half,
                        ((y as f32 + 0.5) * self.spacing[1] - 0.5 * extent[1]) / half,
                        ((z as f32 + 0.5) * self.spacing[2] - 0.5 * extent[2]) / half,
                    ];
                    let region = self.classify(q, lesion_center);
                    plane[x + nx * y] = match region {
                        Region::Air => 0.0,
                        Region::Skull => rng.random::<f32>() * SKULL_MAX,
                        Region::Tissue(i) => (self.modes[i] + noise.sample(&mut rng)).clamp(0.0, 1.0),
                        Region::Lesion => (LESION_LEVEL + noise.sample(&mut rng)).clamp(0.0, 0.99),
                        Region::Vessel => (VESSEL_LEVEL + noise.sample(&mut rng)).clamp(0.0, 0.99),
                    };
                }
            }
        });

        // Pin the global maximum at the voxel nearest the lesion centre.
        let centre = [0, 1, 2].map(|a| {
            let p = 0.5 * extent[a] + lesion_center[a] * half;
            ((p / self.spacing[a]).floor() as usize).min(self.dims[a] - 1)
        });
        values[centre[0] + nx * (centre[1] + ny * centre[2])] = 1.0;
        values
    }

    pub fn generate(&self) -> Volume {
        let voxels = self.generate_normalized().into_iter().map(|v| v * self.i_max_raw).collect();
        Volume::from_voxels(self.dims, self.spacing, voxels).expect("phantom dims are valid")
    }

    fn classify(&self, q: [f32; 3], lesion_center: [f32; 3]) -> Region {
        let axes = [0.80f32, 0.92, 0.86];
        let e = ((q[0] / axes[0]).powi(2) + (q[1] / axes[1]).powi(2) + (q[2] / axes[2]).powi(2)).sqrt();
        if e > 1.0 {
            return Region::Air;
        }
        if e > 0.92 {
            return Region::Skull;
        }
        let theta = q[1].atan2(q[0]);
        let phi = (q[2] / (e * axes[2]).max(1e-6)).clamp(-1.0, 1.0).acos();
        let fold = (7.0 * theta).sin() * (5.0 * phi).cos();

        if self.vessels {
            // Rings in the CSF layer and a midline vessel.
            let in_layer = (e - 0.885).abs() < 0.02;
            let ring = in_layer && ((q[2] - 0.25).abs() < 0.02 || (q[2] + 0.05).abs() < 0.02);
            let midline = q[0].abs() < 0.022 && (q[2] - 0.55).abs() < 0.022 && q[1].abs() < 0.6;
            if ring || midline {
                return Region::Vessel;
            }
        }

        let d = [q[0] - lesion_center[0], q[1] - lesion_center[1], q[2] - lesion_center[2]];
        if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() < 0.13 {
            return Region::Lesion;
        }

        for side in [-1.0f32, 1.0] {
            let v = [(q[0] - side * 0.13) / 0.08, (q[1] - 0.05) / 0.24, (q[2] - 0.08) / 0.12];
            if v[0] * v[0] + v[1] * v[1] + v[2] * v[2] < 1.0 {
                return Region::Tissue(0);
            }
        }

        if e > 0.84 + 0.035 * fold {
            Region::Tissue(0)
        } else if e > 0.62 + 0.03 * fold {
            Region::Tissue(1)
        } else {
            Region::Tissue(2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Region {
    Air,
    Skull,
    Tissue(usize),
    Lesion,
    Vessel,
}

/// A sharp-edged sphere of `inside` raw intensity centred in a zero volume.
pub fn sphere_phantom(dims: [usize; 3], spacing: [f32; 3], radius_mm: f32, inside: f32) -> Volume {
    let extent = [0, 1, 2].map(|a| dims[a] as f32 * spacing[a]);
    let mut voxels = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [x, y, z];
                let r2: f32 = (0..3)
                    .map(|a| {
                        let d = (p[a] as f32 + 0.5) * spacing[a] - 0.5 * extent[a];
                        d * d
                    })
                    .sum();
                voxels.push(if r2 <= radius_mm * radius_mm { inside } else { 0.0 });
            }
        }
    }
    Volume::from_voxels(dims, spacing, voxels).expect("valid sphere dims")
}

/// Two flat intensity plateaus inside a zero background: only two modes.
pub fn bimodal_phantom(dims: [usize; 3]) -> Volume {
    let [nx, ny, nz] = dims;
    let mut voxels = Vec::with_capacity(nx * ny * nz);
    for _z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let border = x == 0 || y == 0 || x == nx - 1 || y == ny - 1;
                voxels.push(if border {
                    0.0
                } else if x < nx / 2 {
                    300.0
                } else {
                    1000.0
                });
            }
        }
    }
    Volume::from_voxels(dims, [1.0; 3], voxels).expect("valid dims")
}

//! Fixed scene suite for comparing engines against each other.

use crate::engine::{OrbitSpec, RenderEngine, Result};
use crate::phantom::{PhantomSpec, sphere_phantom};
use crate::raymarch::{FrameBuffer, ImageDiff};
use crate::transfer::{CurvatureMode, RenderParams, TissueWindows, unmask_preset};
use crate::volume_io::Volume;

/// Largest allowed per-channel mean absolute difference, in 1/255 steps.
pub const PARITY_MAE: f64 = 2.0;
/// Largest allowed single-channel difference, in 1/255 steps.
pub const PARITY_MAX: u8 = 8;

pub fn within_parity(d: &ImageDiff) -> bool {
    d.worst_mae() <= PARITY_MAE && d.worst_max() <= PARITY_MAX
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub name: &'static str,
    pub volume: Volume,
    pub windows: TissueWindows,
    pub params: RenderParams,
    pub orbit: OrbitSpec,
}

impl Scene {
    /// Preprocesses, applies the scene parameters and renders one frame.
    pub fn render<E: RenderEngine + ?Sized>(&self, engine: &mut E, width: u32, height: u32) -> Result<FrameBuffer> {
        engine.upload_and_preprocess(&self.volume)?;
        let cam = self.orbit.camera(self.volume.header.extent_mm(), width, height);
        engine.set_params(&self.windows, &self.params, &cam)?;
        engine.render_frame(width, height)
    }
}

/// Tri-tissue phantom, sphere, unmasking preset, zero alpha and an oblique
/// camera with curvature weighting. `n` is the phantom edge length.
pub fn parity_suite(n: usize) -> Vec<Scene> {
    let tri = PhantomSpec::cohort_a([n; 3]).generate();
    let rp = RenderParams::for_spacing(tri.spacing());
    let tw = TissueWindows::default();
    let orbit = OrbitSpec::default();

    let sphere = sphere_phantom([n; 3], [1.0; 3], 0.3 * n as f32, 1000.0);
    let mut sphere_windows = tw;
    sphere_windows.wm.base_alpha = 0.5;

    let mut zero = rp;
    zero.class_multiplier = [0.0; 4];

    let mut oblique = rp;
    oblique.curvature_mode = CurvatureMode::Linear;
    oblique.curvature_lambda = 0.5;

    vec![
        Scene {
            name: "tri-tissue",
            volume: tri.clone(),
            windows: tw,
            params: rp,
            orbit,
        },
        Scene {
            name: "sphere",
            params: RenderParams::for_spacing(sphere.spacing()),
            volume: sphere,
            windows: sphere_windows,
            orbit,
        },
        Scene {
            name: "unmask",
            volume: tri.clone(),
            windows: tw,
            params: unmask_preset(&rp),
            orbit,
        },
        Scene {
            name: "zero-alpha",
            volume: tri.clone(),
            windows: tw,
            params: zero,
            orbit,
        },
        Scene {
            name: "oblique",
            volume: PhantomSpec::cohort_b([n; 3]).generate(),
            windows: tw,
            params: oblique,
            orbit: OrbitSpec {
                azimuth_deg: 37.0,
                elevation_deg: 52.0,
                ..orbit
            },
        },
    ]
}

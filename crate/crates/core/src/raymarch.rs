//! Reference CPU raymarcher.
//!
//! One ray per pixel centre, marched front to back through the volume's
//! bounding box at a fixed step. Intensity is sampled trilinearly and the
//! morphology fields by nearest voxel. Per-sample opacity is corrected for
//! the step length relative to 1 mm, composited with the emission-absorption
//! recurrence, and laid over the background. Output is deterministic: rows
//! are rendered independently, so the thread count cannot change a pixel.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::morphology::{CurvatureField, GradientField};
use crate::radiometry::NormalizedVolume;
use crate::transfer::{RenderParams, TissueWindows, sample_opacity};

/// Reference step length for opacity correction.
pub const STEP_REF_MM: f32 = 1.0;
/// Display gamma applied when quantizing to 8 bits.
pub const DISPLAY_GAMMA: f32 = 2.2;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RenderError {
    #[error("degenerate camera: {0}")]
    DegenerateCamera(&'static str),
    #[error("sample position {0:?} lies outside the volume")]
    OutOfBounds([f32; 3]),
    #[error("preprocessed fields do not match the volume: {0}")]
    PreprocessMismatch(String),
    #[error("image size {0}x{1} must be positive")]
    EmptyImage(u32, u32),
}

pub type Result<T> = std::result::Result<T, RenderError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub eye: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    pub vfov_deg: f32,
    pub aspect: f32,
}

/// Orthonormal, right-handed camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraBasis {
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
    pub tan_half_fov: f32,
}

pub const DEFAULT_VFOV_DEG: f32 = 40.0;

impl Camera {
    pub fn basis(&self) -> Result<CameraBasis> {
        let view = self.target - self.eye;
        if view.length() <= 1e-6 {
            return Err(RenderError::DegenerateCamera("eye and target coincide"));
        }
        let forward = view.normalize();
        let side = forward.cross(self.up);
        if side.length() <= 1e-6 * self.up.length().max(1e-30) || self.up.length() == 0.0 {
            return Err(RenderError::DegenerateCamera("up is parallel to the view direction"));
        }
        if !(self.vfov_deg > 0.0 && self.vfov_deg < 180.0) {
            return Err(RenderError::DegenerateCamera("vertical field of view must lie in (0, 180)"));
        }
        if !(self.aspect > 0.0) {
            return Err(RenderError::DegenerateCamera("aspect must be positive"));
        }
        let right = side.normalize();
        Ok(CameraBasis {
            right,
            up: right.cross(forward),
            forward,
            tan_half_fov: (self.vfov_deg.to_radians() * 0.5).tan(),
        })
    }

    /// Camera orbiting `center` with `+z` up. Azimuth is measured from `+x`
    /// towards `+y`; elevation is clamped short of the poles.
    pub fn orbit(center: Vec3, azimuth_deg: f32, elevation_deg: f32, distance: f32, vfov_deg: f32, aspect: f32) -> Self {
        let az = azimuth_deg.to_radians();
        let el = elevation_deg.clamp(-89.0, 89.0).to_radians();
        let dir = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        Camera {
            eye: center + dir * distance,
            target: center,
            up: Vec3::new(0.0, 0.0, 1.0),
            vfov_deg,
            aspect,
        }
    }

    /// Orbit distance at which a sphere enclosing `extent` fills the view.
    pub fn fit_distance(extent: [f32; 3], vfov_deg: f32) -> f32 {
        let radius = 0.5 * Vec3::from_array(extent).length();
        radius / (vfov_deg.to_radians() * 0.5).sin() * 1.05
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, t: f32) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[inline]
fn ray_from_basis(eye: Vec3, b: &CameraBasis, aspect: f32, px: u32, py: u32, width: u32, height: u32) -> Ray {
    let sx = ((px as f32 + 0.5) / width as f32) * 2.0 - 1.0;
    let sy = 1.0 - ((py as f32 + 0.5) / height as f32) * 2.0;
    let dir = b.forward + b.right * (sx * b.tan_half_fov * aspect) + b.up * (sy * b.tan_half_fov);
    Ray {
        origin: eye,
        direction: dir.normalize(),
    }
}

/// Perspective ray through the centre of pixel `(px, py)`; `py` grows downwards.
pub fn generate_ray(cam: &Camera, px: u32, py: u32, width: u32, height: u32) -> Result<Ray> {
    let b = cam.basis()?;
    Ok(ray_from_basis(cam.eye, &b, cam.aspect, px, py, width, height))
}

/// Slab intersection with the box `[0, extent]`. Returns `(t_near, t_far)`
/// with `t_near` clamped to 0 for origins inside the box.
pub fn intersect_volume(r: &Ray, extent: Vec3) -> Option<(f32, f32)> {
    let mut t_near = f32::NEG_INFINITY;
    let mut t_far = f32::INFINITY;
    for axis in 0..3 {
        let o = r.origin.component(axis);
        let d = r.direction.component(axis);
        let hi = extent.component(axis);
        if d == 0.0 {
            if o < 0.0 || o > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut t0, mut t1) = ((0.0 - o) * inv, (hi - o) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
    }
    let t_near = t_near.max(0.0);
    if t_far < t_near {
        return None;
    }
    Some((t_near, t_far))
}

/// Continuous-index coordinate of `p` along one axis, with voxel centres at
/// `(i + 0.5) * h`, clamped to the centre range.
#[inline]
fn continuous_index(p: f32, h: f32, n: usize) -> (usize, f32) {
    let u = (p / h - 0.5).clamp(0.0, (n - 1) as f32);
    let i0 = (u.floor() as usize).min(n.saturating_sub(2));
    (i0, u - i0 as f32)
}

#[inline]
fn trilinear_unchecked(nv: &NormalizedVolume, p: Vec3) -> f32 {
    let [nx, ny, nz] = nv.dims;
    let (x0, fx) = continuous_index(p.x, nv.spacing[0], nx);
    let (y0, fy) = continuous_index(p.y, nv.spacing[1], ny);
    let (z0, fz) = continuous_index(p.z, nv.spacing[2], nz);
    let x1 = (x0 + 1).min(nx - 1);
    let y1 = (y0 + 1).min(ny - 1);
    let z1 = (z0 + 1).min(nz - 1);
    let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
    let c00 = lerp(nv.at(x0, y0, z0), nv.at(x1, y0, z0), fx);
    let c10 = lerp(nv.at(x0, y1, z0), nv.at(x1, y1, z0), fx);
    let c01 = lerp(nv.at(x0, y0, z1), nv.at(x1, y0, z1), fx);
    let c11 = lerp(nv.at(x0, y1, z1), nv.at(x1, y1, z1), fx);
    lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
}

/// Trilinear interpolation at a position in millimetres.
pub fn trilinear_sample(nv: &NormalizedVolume, pos_mm: [f32; 3]) -> Result<f32> {
    let extent = nv.extent_mm();
    if (0..3).any(|a| !(pos_mm[a] >= 0.0 && pos_mm[a] <= extent[a])) {
        return Err(RenderError::OutOfBounds(pos_mm));
    }
    Ok(trilinear_unchecked(nv, Vec3::from_array(pos_mm)))
}

#[inline]
fn nearest_index(nv: &NormalizedVolume, p: Vec3) -> usize {
    let axis = |v: f32, h: f32, n: usize| ((v / h).floor().max(0.0) as usize).min(n - 1);
    nv.index(
        axis(p.x, nv.spacing[0], nv.dims[0]),
        axis(p.y, nv.spacing[1], nv.dims[1]),
        axis(p.z, nv.spacing[2], nv.dims[2]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompositeState {
    pub c_acc: [f32; 3],
    pub a_acc: f32,
}

/// One front-to-back emission-absorption step. Both updates use the
/// transmittance from before the step.
#[inline]
pub fn composite_step(s: CompositeState, c_sample: [f32; 3], alpha: f32) -> CompositeState {
    let transmit = 1.0 - s.a_acc;
    CompositeState {
        c_acc: [
            s.c_acc[0] + transmit * c_sample[0] * alpha,
            s.c_acc[1] + transmit * c_sample[1] * alpha,
            s.c_acc[2] + transmit * c_sample[2] * alpha,
        ],
        a_acc: s.a_acc + transmit * alpha,
    }
}

/// Opacity of one sample rescaled so that density does not depend on step length.
#[inline]
pub fn step_corrected_alpha(alpha: f32, step_mm: f32) -> f32 {
    if alpha <= 0.0 {
        return 0.0;
    }
    if alpha >= 1.0 {
        return 1.0;
    }
    1.0 - (1.0 - alpha).powf(step_mm / STEP_REF_MM)
}

/// Linear to 8-bit display value.
#[inline]
pub fn encode_channel(linear: f32) -> u8 {
    let v = linear.clamp(0.0, 1.0).powf(1.0 / DISPLAY_GAMMA);
    (v * 255.0 + 0.5).floor() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffer {
    pub width: u32,
    pub height: u32,
    /// Display-encoded RGBA rows, top row first.
    pub pixels: Vec<u8>,
    /// Linear RGBA working values.
    pub linear: Vec<[f32; 4]>,
}

impl FrameBuffer {
    /// Builds both buffers from linear values.
    pub fn from_linear(width: u32, height: u32, linear: Vec<[f32; 4]>) -> Self {
        assert_eq!(linear.len(), (width * height) as usize);
        let mut pixels = Vec::with_capacity(linear.len() * 4);
        for px in &linear {
            pixels.extend_from_slice(&[
                encode_channel(px[0]),
                encode_channel(px[1]),
                encode_channel(px[2]),
                (px[3].clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8,
            ]);
        }
        FrameBuffer {
            width,
            height,
            pixels,
            linear,
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = 4 * (y * self.width + x) as usize;
        self.pixels[i..i + 4].try_into().unwrap()
    }

    /// Number of pixels whose RGB differs from the encoded background.
    pub fn count_non_background(&self, background: [f32; 3]) -> usize {
        let bg = background.map(encode_channel);
        self.pixels.chunks_exact(4).filter(|p| p[..3] != bg).count()
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.encode_png(std::io::BufWriter::new(file))
    }

    pub fn encode_png(&self, w: impl Write) -> std::io::Result<()> {
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(std::io::Error::other)?;
        writer.write_image_data(&self.pixels).map_err(std::io::Error::other)?;
        writer.finish().map_err(std::io::Error::other)
    }

    /// Raw little-endian `f32` RGBA, row-major, top row first.
    pub fn write_raw_f32(&self, mut w: impl Write) -> std::io::Result<()> {
        for px in &self.linear {
            for c in px {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Per-channel mean and maximum absolute difference of two 8-bit images, in
/// units of 1/255.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageDiff {
    pub mae: [f64; 3],
    pub max: [u8; 3],
}

impl ImageDiff {
    pub fn between(a: &FrameBuffer, b: &FrameBuffer) -> Self {
        assert_eq!((a.width, a.height), (b.width, b.height), "image sizes differ");
        let mut sum = [0u64; 3];
        let mut max = [0u8; 3];
        for (pa, pb) in a.pixels.chunks_exact(4).zip(b.pixels.chunks_exact(4)) {
            for c in 0..3 {
                let d = pa[c].abs_diff(pb[c]);
                sum[c] += d as u64;
                max[c] = max[c].max(d);
            }
        }
        let n = (a.width * a.height) as f64;
        ImageDiff {
            mae: sum.map(|s| s as f64 / n),
            max,
        }
    }

    pub fn worst_mae(&self) -> f64 {
        self.mae.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst_max(&self) -> u8 {
        *self.max.iter().max().unwrap()
    }
}

/// Borrowed view of everything a frame needs besides the live parameters.
#[derive(Debug, Clone, Copy)]
pub struct SceneFields<'a> {
    pub volume: &'a NormalizedVolume,
    pub gradient: &'a GradientField,
    pub curvature: &'a CurvatureField,
    pub kappa_scale: f32,
}

impl SceneFields<'_> {
    fn check(&self) -> Result<()> {
        let dims = self.volume.dims;
        let n = self.volume.len();
        if self.gradient.dims != dims || self.gradient.magnitudes.len() != n {
            return Err(RenderError::PreprocessMismatch(format!(
                "gradient field {:?} vs volume {dims:?}",
                self.gradient.dims
            )));
        }
        if self.curvature.dims != dims || self.curvature.kappa.len() != n {
            return Err(RenderError::PreprocessMismatch(format!(
                "curvature field {:?} vs volume {dims:?}",
                self.curvature.dims
            )));
        }
        if !(self.gradient.grad_max > 0.0) {
            return Err(RenderError::PreprocessMismatch("gradient maximum is zero".into()));
        }
        if !(self.kappa_scale > 0.0) {
            return Err(RenderError::PreprocessMismatch("kappa scale must be positive".into()));
        }
        Ok(())
    }
}

/// Marches one ray, returning linear RGBA composited over the background.
pub fn march_ray(scene: &SceneFields<'_>, ray: &Ray, tw: &TissueWindows, rp: &RenderParams) -> [f32; 4] {
    let bg = rp.background;
    let extent = Vec3::from_array(scene.volume.extent_mm());
    let Some((t_near, t_far)) = intersect_volume(ray, extent) else {
        return [bg[0], bg[1], bg[2], 1.0];
    };
    let step = rp.step_mm;
    let steps = ((t_far - t_near) / step).ceil().max(0.0) as u32;
    let grad_max = scene.gradient.grad_max;
    let mut state = CompositeState::default();
    for i in 0..steps {
        let t = t_near + (i as f32 + 0.5) * step;
        let p = ray.at(t).clamp(Vec3::ZERO, extent);
        let intensity = trilinear_unchecked(scene.volume, p);
        let vox = nearest_index(scene.volume, p);
        let (alpha, color) = sample_opacity(
            intensity,
            scene.gradient.magnitudes[vox],
            grad_max,
            scene.curvature.kappa[vox],
            scene.kappa_scale,
            tw,
            rp,
        );
        if alpha > 0.0 {
            state = composite_step(state, color, step_corrected_alpha(alpha, step));
            if state.a_acc >= rp.early_stop_alpha {
                break;
            }
        }
    }
    let t = 1.0 - state.a_acc;
    [
        state.c_acc[0] + t * bg[0],
        state.c_acc[1] + t * bg[1],
        state.c_acc[2] + t * bg[2],
        1.0,
    ]
}

/// Renders a full frame.
pub fn render(
    scene: &SceneFields<'_>,
    tw: &TissueWindows,
    rp: &RenderParams,
    cam: &Camera,
    width: u32,
    height: u32,
) -> Result<FrameBuffer> {
    if width == 0 || height == 0 {
        return Err(RenderError::EmptyImage(width, height));
    }
    scene.check()?;
    let basis = cam.basis()?;
    let mut linear = vec![[0f32; 4]; (width * height) as usize];
    linear
        .par_chunks_mut(width as usize)
        .enumerate()
        .for_each(|(py, row)| {
            for (px, out) in row.iter_mut().enumerate() {
                let ray = ray_from_basis(cam.eye, &basis, cam.aspect, px as u32, py as u32, width, height);
                *out = march_ray(scene, &ray, tw, rp);
            }
        });
    Ok(FrameBuffer::from_linear(width, height, linear))
}

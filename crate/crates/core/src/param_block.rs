//! Byte layout of the per-frame parameter block.
//!
//! Everything a frame depends on apart from the preprocessed fields lives in
//! this block, so an interaction is a single small buffer write. The layout is
//! versioned and shared with the WGSL kernels and the browser viewer.
//!
//! Version 1 is eighteen 16-byte rows, little-endian:
//!
//! | row | contents |
//! |-----|----------|
//! | 0 | `u32` version, `u32` flags, `u32` width, `u32` height |
//! | 1 | eye xyz, tan(vfov/2) |
//! | 2 | right xyz, aspect |
//! | 3 | up xyz, 0 |
//! | 4 | forward xyz, 0 |
//! | 5 | extent mm xyz, step mm |
//! | 6 | spacing xyz, early-stop alpha |
//! | 7 | `u32` dims xyz, 0 |
//! | 8 | grad max, kappa scale, curvature lambda, reference step mm |
//! | 9 | background rgb, 0 |
//! | 10..=13 | per class (CSF, GM, WM, HIGH): lo, hi, base alpha, multiplier |
//! | 14..=17 | per class color rgb, 0 |
//!
//! Flags: bit 0 unmask enabled, bit 1 linear curvature weighting.

use crate::raymarch::{Camera, RenderError, STEP_REF_MM};
use crate::transfer::{CurvatureMode, RenderParams, TissueClass, TissueWindows};

pub const PARAM_BLOCK_VERSION: u32 = 1;
pub const PARAM_BLOCK_SIZE: usize = 18 * 16;

pub const FLAG_UNMASK: u32 = 1;
pub const FLAG_CURVATURE_LINEAR: u32 = 2;

/// Byte offset of the row holding width and height, rewritten per frame size.
pub const VIEWPORT_OFFSET: usize = 8;

/// Volume facts computed once at preprocess time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeConstants {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    pub grad_max: f32,
    pub kappa_scale: f32,
}

#[derive(Clone, PartialEq)]
pub struct ParamBlock(pub [u8; PARAM_BLOCK_SIZE]);

impl std::fmt::Debug for ParamBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamBlock")
            .field("version", &self.u32_at(0))
            .field("flags", &self.u32_at(4))
            .finish_non_exhaustive()
    }
}

struct Rows {
    buf: [u8; PARAM_BLOCK_SIZE],
}

impl Rows {
    fn f32x4(&mut self, row: usize, v: [f32; 4]) {
        for (i, x) in v.iter().enumerate() {
            let at = row * 16 + i * 4;
            self.buf[at..at + 4].copy_from_slice(&x.to_le_bytes());
        }
    }

    fn u32x4(&mut self, row: usize, v: [u32; 4]) {
        for (i, x) in v.iter().enumerate() {
            let at = row * 16 + i * 4;
            self.buf[at..at + 4].copy_from_slice(&x.to_le_bytes());
        }
    }
}

impl ParamBlock {
    pub fn pack(
        tw: &TissueWindows,
        rp: &RenderParams,
        cam: &Camera,
        volume: &VolumeConstants,
    ) -> Result<Self, RenderError> {
        let basis = cam.basis()?;
        let mut flags = 0;
        if rp.unmask_enabled {
            flags |= FLAG_UNMASK;
        }
        if rp.curvature_mode == CurvatureMode::Linear {
            flags |= FLAG_CURVATURE_LINEAR;
        }
        let [hx, hy, hz] = volume.spacing;
        let [nx, ny, nz] = volume.dims;
        let mut rows = Rows {
            buf: [0; PARAM_BLOCK_SIZE],
        };
        rows.u32x4(0, [PARAM_BLOCK_VERSION, flags, 0, 0]);
        rows.f32x4(1, [cam.eye.x, cam.eye.y, cam.eye.z, basis.tan_half_fov]);
        rows.f32x4(2, [basis.right.x, basis.right.y, basis.right.z, cam.aspect]);
        rows.f32x4(3, [basis.up.x, basis.up.y, basis.up.z, 0.0]);
        rows.f32x4(4, [basis.forward.x, basis.forward.y, basis.forward.z, 0.0]);
        rows.f32x4(5, [nx as f32 * hx, ny as f32 * hy, nz as f32 * hz, rp.step_mm]);
        rows.f32x4(6, [hx, hy, hz, rp.early_stop_alpha]);
        rows.u32x4(7, [nx as u32, ny as u32, nz as u32, 0]);
        rows.f32x4(8, [volume.grad_max, volume.kappa_scale, rp.curvature_lambda, STEP_REF_MM]);
        rows.f32x4(9, [rp.background[0], rp.background[1], rp.background[2], 0.0]);
        for c in TissueClass::ALL {
            let ch = tw.channel(c);
            rows.f32x4(10 + c.index(), [ch.lo, ch.hi, ch.base_alpha, rp.multiplier(c)]);
            rows.f32x4(14 + c.index(), [ch.color[0], ch.color[1], ch.color[2], 0.0]);
        }
        Ok(ParamBlock(rows.buf))
    }

    pub fn set_viewport(&mut self, width: u32, height: u32) {
        self.0[VIEWPORT_OFFSET..VIEWPORT_OFFSET + 4].copy_from_slice(&width.to_le_bytes());
        self.0[VIEWPORT_OFFSET + 4..VIEWPORT_OFFSET + 8].copy_from_slice(&height.to_le_bytes());
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn u32_at(&self, offset: usize) -> u32 {
        u32::from_le_bytes(self.0[offset..offset + 4].try_into().unwrap())
    }

    pub fn f32_at(&self, offset: usize) -> f32 {
        f32::from_le_bytes(self.0[offset..offset + 4].try_into().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::transfer::unmask_preset;

    fn constants() -> VolumeConstants {
        VolumeConstants {
            dims: [64, 48, 32],
            spacing: [1.0, 1.0, 2.0],
            grad_max: 0.25,
            kappa_scale: 0.01,
        }
    }

    fn camera() -> Camera {
        Camera::orbit(Vec3::new(32.0, 24.0, 32.0), 30.0, 20.0, 200.0, 40.0, 1.0)
    }

    #[test]
    fn layout_fields_land_at_documented_offsets() {
        let tw = TissueWindows::default();
        let mut rp = unmask_preset(&RenderParams::default());
        rp.curvature_mode = CurvatureMode::Linear;
        rp.curvature_lambda = 0.5;
        let mut block = ParamBlock::pack(&tw, &rp, &camera(), &constants()).unwrap();
        block.set_viewport(320, 200);
        assert_eq!(block.u32_at(0), PARAM_BLOCK_VERSION);
        assert_eq!(block.u32_at(4), FLAG_UNMASK | FLAG_CURVATURE_LINEAR);
        assert_eq!(block.u32_at(8), 320);
        assert_eq!(block.u32_at(12), 200);
        assert_eq!(block.f32_at(5 * 16 + 8), 64.0);
        assert_eq!(block.f32_at(5 * 16 + 12), rp.step_mm);
        assert_eq!(block.u32_at(7 * 16 + 4), 48);
        assert_eq!(block.f32_at(8 * 16), 0.25);
        assert_eq!(block.f32_at(8 * 16 + 8), 0.5);
        // GM window row
        assert_eq!(block.f32_at(11 * 16), 0.12);
        assert_eq!(block.f32_at(11 * 16 + 12), 0.0);
        // HIGH color row
        assert_eq!(block.f32_at(17 * 16), tw.high.color[0]);
    }

    #[test]
    fn degenerate_camera_is_rejected() {
        let mut cam = camera();
        cam.up = cam.target - cam.eye;
        assert!(ParamBlock::pack(&TissueWindows::default(), &RenderParams::default(), &cam, &constants()).is_err());
    }
}

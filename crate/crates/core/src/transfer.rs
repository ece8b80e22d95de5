//! Tissue windows and the sample opacity law.
//!
//! Opacity is the product of the class weight of the sample's intensity, its
//! relative edge strength `|∇I| / |∇I|max`, and an optional curvature weight,
//! clamped to `[0, 1]`. Flat regions therefore stay transparent whatever
//! their intensity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::radiometry::{NormalizedVolume, is_foreground};

/// Lower edge of the high-intensity band exposed by unmasking.
pub const HIGH_BAND_LO: f32 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TissueClass {
    Csf,
    Gm,
    Wm,
    High,
}

impl TissueClass {
    pub const ALL: [TissueClass; 4] = [TissueClass::Csf, TissueClass::Gm, TissueClass::Wm, TissueClass::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TissueClass::Csf => "csf",
            TissueClass::Gm => "gm",
            TissueClass::Wm => "wm",
            TissueClass::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueChannel {
    pub lo: f32,
    pub hi: f32,
    pub base_alpha: f32,
    pub color: [f32; 3],
}

/// Per-class windows. CSF, GM and WM partition `[0.05, 1.0]` as
/// `[0.05, 0.12)`, `[0.12, 0.18)`, `[0.18, 1.0]`; HIGH is `(0.20, 1.0]` and
/// overlaps WM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueWindows {
    pub csf: TissueChannel,
    pub gm: TissueChannel,
    pub wm: TissueChannel,
    pub high: TissueChannel,
}

impl Default for TissueWindows {
    fn default() -> Self {
        TissueWindows {
            csf: TissueChannel {
                lo: 0.05,
                hi: 0.12,
                base_alpha: 0.35,
                color: [0.2, 0.4, 0.9],
            },
            gm: TissueChannel {
                lo: 0.12,
                hi: 0.18,
                base_alpha: 0.6,
                color: [0.75, 0.7, 0.65],
            },
            wm: TissueChannel {
                lo: 0.18,
                hi: 1.0,
                base_alpha: 0.85,
                color: [0.95, 0.95, 0.9],
            },
            high: TissueChannel {
                lo: HIGH_BAND_LO,
                hi: 1.0,
                base_alpha: 1.0,
                color: [0.9, 0.2, 0.2],
            },
        }
    }
}

impl TissueWindows {
    pub fn channel(&self, class: TissueClass) -> &TissueChannel {
        match class {
            TissueClass::Csf => &self.csf,
            TissueClass::Gm => &self.gm,
            TissueClass::Wm => &self.wm,
            TissueClass::High => &self.high,
        }
    }

    pub fn channel_mut(&mut self, class: TissueClass) -> &mut TissueChannel {
        match class {
            TissueClass::Csf => &mut self.csf,
            TissueClass::Gm => &mut self.gm,
            TissueClass::Wm => &mut self.wm,
            TissueClass::High => &mut self.high,
        }
    }

    /// Base class of an intensity. Windows are `[lo, hi)`, except that a window
    /// reaching 1.0 also contains 1.0.
    pub fn classify(&self, i_norm: f32) -> Option<TissueClass> {
        [TissueClass::Csf, TissueClass::Gm, TissueClass::Wm]
            .into_iter()
            .find(|&c| {
                let ch = self.channel(c);
                i_norm >= ch.lo && (i_norm < ch.hi || (ch.hi >= 1.0 && i_norm <= ch.hi))
            })
    }

    /// Whether an intensity lies in the HIGH band `(lo, hi]`.
    pub fn in_high_band(&self, i_norm: f32) -> bool {
        i_norm > self.high.lo && i_norm <= self.high.hi
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        for c in TissueClass::ALL {
            let ch = self.channel(c);
            if !(0.0..=1.0).contains(&ch.base_alpha) {
                return Err(TransferError::Invalid(format!("{} base_alpha {} outside [0, 1]", c.name(), ch.base_alpha)));
            }
            if !(ch.lo < ch.hi) || ch.lo < 0.0 || ch.hi > 1.0 {
                return Err(TransferError::Invalid(format!("{} window [{}, {}] is invalid", c.name(), ch.lo, ch.hi)));
            }
            if ch.color.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(TransferError::Invalid(format!("{} color outside [0, 1]", c.name())));
            }
        }
        if self.csf.hi > self.gm.lo || self.gm.hi > self.wm.lo {
            return Err(TransferError::Invalid("CSF, GM and WM windows must be ordered and disjoint".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureMode {
    #[default]
    Off,
    Linear,
}

/// Live render controls. Everything here can change between frames without
/// recomputing any preprocessed field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Opacity multipliers, indexed by [`TissueClass::index`].
    pub class_multiplier: [f32; 4],
    pub curvature_mode: CurvatureMode,
    pub curvature_lambda: f32,
    pub step_mm: f32,
    pub early_stop_alpha: f32,
    pub background: [f32; 3],
    pub unmask_enabled: bool,
}

pub const DEFAULT_EARLY_STOP_ALPHA: f32 = 0.99;

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            class_multiplier: [1.0; 4],
            curvature_mode: CurvatureMode::Off,
            curvature_lambda: 0.0,
            step_mm: 0.5,
            early_stop_alpha: DEFAULT_EARLY_STOP_ALPHA,
            background: [0.0; 3],
            unmask_enabled: false,
        }
    }
}

impl RenderParams {
    /// Defaults with the step set to half the smallest voxel spacing.
    pub fn for_spacing(spacing: [f32; 3]) -> Self {
        RenderParams {
            step_mm: default_step(spacing),
            ..Default::default()
        }
    }

    pub fn multiplier(&self, class: TissueClass) -> f32 {
        self.class_multiplier[class.index()]
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        if !(self.step_mm > 0.0 && self.step_mm.is_finite()) {
            return Err(TransferError::Invalid(format!("step_mm {} must be positive", self.step_mm)));
        }
        if !(self.early_stop_alpha > 0.0 && self.early_stop_alpha <= 1.0) {
            return Err(TransferError::Invalid(format!(
                "early_stop_alpha {} must lie in (0, 1]",
                self.early_stop_alpha
            )));
        }
        if self.class_multiplier.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(TransferError::Invalid("class multipliers must lie in [0, 1]".into()));
        }
        if !(self.curvature_lambda >= 0.0) {
            return Err(TransferError::Invalid("curvature lambda must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn default_step(spacing: [f32; 3]) -> f32 {
    0.5 * spacing.iter().copied().fold(f32::INFINITY, f32::min)
}

#[derive(Debug, thiserror::Error)]
pub enum TransferError {
    #[error("invalid transfer configuration: {0}")]
    Invalid(String),
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Class weight and color for an intensity.
///
/// With unmasking on, intensities in the HIGH band take the HIGH channel in
/// place of their base class.
#[inline]
pub fn window_response(i_norm: f32, tw: &TissueWindows, rp: &RenderParams) -> (f32, [f32; 3]) {
    let class = if rp.unmask_enabled && tw.in_high_band(i_norm) {
        Some(TissueClass::High)
    } else {
        tw.classify(i_norm)
    };
    match class {
        Some(c) => {
            let ch = tw.channel(c);
            (ch.base_alpha * rp.multiplier(c), ch.color)
        }
        None => (0.0, [0.0; 3]),
    }
}

/// `w(κ)`: identity when off, `clamp(1 + λ|κ|/scale, 0, 2)` when linear.
#[inline]
pub fn curvature_weight(kappa: f32, rp: &RenderParams, kappa_scale: f32) -> f32 {
    match rp.curvature_mode {
        CurvatureMode::Off => 1.0,
        CurvatureMode::Linear => (1.0 + rp.curvature_lambda * kappa.abs() / kappa_scale).clamp(0.0, 2.0),
    }
}

/// Per-sample opacity and emitted color.
#[inline]
pub fn sample_opacity(
    i_norm: f32,
    grad_mag: f32,
    grad_max: f32,
    kappa: f32,
    kappa_scale: f32,
    tw: &TissueWindows,
    rp: &RenderParams,
) -> (f32, [f32; 3]) {
    let (weight, color) = window_response(i_norm, tw, rp);
    if weight == 0.0 || grad_mag == 0.0 {
        return (0.0, color);
    }
    let edge = grad_mag / grad_max;
    let alpha = (weight * edge * curvature_weight(kappa, rp, kappa_scale)).clamp(0.0, 1.0);
    (alpha, color)
}

/// Nearest-rank percentile of `|κ|` over foreground voxels, used to scale
/// curvature into the weighting function. Falls back to 1.0 when every
/// foreground curvature is zero.
pub fn kappa_scale(nv: &NormalizedVolume, kappa: &[f32]) -> f32 {
    const PERCENTILE: f64 = 0.99;
    let mut mags: Vec<f32> = nv
        .values
        .iter()
        .zip(kappa)
        .filter(|(v, _)| is_foreground(**v))
        .map(|(_, k)| k.abs())
        .collect();
    if mags.is_empty() {
        return 1.0;
    }
    let rank = ((PERCENTILE * mags.len() as f64).ceil() as usize).clamp(1, mags.len()) - 1;
    let (_, nth, _) = mags.select_nth_unstable_by(rank, f32::total_cmp);
    if *nth > 0.0 { *nth } else { 1.0 }
}

/// On-disk JSON document shared by the CLI and the viewer. Every key is
/// optional; absent keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub windows: Option<ClassMap<[f32; 2]>>,
    pub base_alpha: Option<ClassMap<f32>>,
    pub colors: Option<ClassMap<[f32; 3]>>,
    pub multipliers: Option<ClassMap<f32>>,
    pub curvature: Option<CurvatureConfig>,
    pub step_mm: Option<f32>,
    pub early_stop_alpha: Option<f32>,
    pub unmask: Option<bool>,
    pub background: Option<[f32; 3]>,
}

/// One optional value per tissue class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassMap<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csf: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gm: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wm: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high: Option<T>,
}

impl<T: Copy> ClassMap<T> {
    pub fn get(&self, class: TissueClass) -> Option<T> {
        match class {
            TissueClass::Csf => self.csf,
            TissueClass::Gm => self.gm,
            TissueClass::Wm => self.wm,
            TissueClass::High => self.high,
        }
    }

    pub fn full(f: impl Fn(TissueClass) -> T) -> Self {
        ClassMap {
            csf: Some(f(TissueClass::Csf)),
            gm: Some(f(TissueClass::Gm)),
            wm: Some(f(TissueClass::Wm)),
            high: Some(f(TissueClass::High)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureConfig {
    pub mode: CurvatureMode,
    #[serde(default)]
    pub lambda: f32,
}

impl TransferConfig {
    pub fn from_json(text: &str) -> Result<Self, TransferError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TransferError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Resolves the document against defaults. `spacing` supplies the
    /// default step when `step_mm` is absent.
    pub fn resolve(&self, spacing: [f32; 3]) -> Result<(TissueWindows, RenderParams), TransferError> {
        let mut tw = TissueWindows::default();
        let mut rp = RenderParams::for_spacing(spacing);
        for c in TissueClass::ALL {
            let ch = tw.channel_mut(c);
            if let Some([lo, hi]) = self.windows.and_then(|m| m.get(c)) {
                ch.lo = lo;
                ch.hi = hi;
            }
            if let Some(a) = self.base_alpha.and_then(|m| m.get(c)) {
                ch.base_alpha = a;
            }
            if let Some(col) = self.colors.and_then(|m| m.get(c)) {
                ch.color = col;
            }
            if let Some(m) = self.multipliers.and_then(|m| m.get(c)) {
                rp.class_multiplier[c.index()] = m;
            }
        }
        if let Some(cv) = self.curvature {
            rp.curvature_mode = cv.mode;
            rp.curvature_lambda = cv.lambda;
        }
        if let Some(s) = self.step_mm {
            rp.step_mm = s;
        }
        if let Some(e) = self.early_stop_alpha {
            rp.early_stop_alpha = e;
        }
        if let Some(u) = self.unmask {
            rp.unmask_enabled = u;
        }
        if let Some(bg) = self.background {
            rp.background = bg;
        }
        tw.validate()?;
        rp.validate()?;
        Ok((tw, rp))
    }

    /// Fully populated document describing the given settings.
    pub fn from_settings(tw: &TissueWindows, rp: &RenderParams) -> Self {
        TransferConfig {
            windows: Some(ClassMap::full(|c| [tw.channel(c).lo, tw.channel(c).hi])),
            base_alpha: Some(ClassMap::full(|c| tw.channel(c).base_alpha)),
            colors: Some(ClassMap::full(|c| tw.channel(c).color)),
            multipliers: Some(ClassMap::full(|c| rp.multiplier(c))),
            curvature: Some(CurvatureConfig {
                mode: rp.curvature_mode,
                lambda: rp.curvature_lambda,
            }),
            step_mm: Some(rp.step_mm),
            early_stop_alpha: Some(rp.early_stop_alpha),
            unmask: Some(rp.unmask_enabled),
            background: Some(rp.background),
        }
    }
}

/// Preset that zeroes CSF/GM/WM and exposes the high-intensity band.
pub fn unmask_preset(rp: &RenderParams) -> RenderParams {
    RenderParams {
        class_multiplier: [0.0, 0.0, 0.0, 1.0],
        unmask_enabled: true,
        ..*rp
    }
}

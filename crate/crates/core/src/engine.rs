//! Render engines and the benchmark harness.
//!
//! An engine preprocesses a volume once and then renders any number of
//! frames from a parameter block. Parameter changes never touch the
//! preprocessed fields; the pass counters make that observable.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::morphology::{self, CurvatureField, GradientField, MorphologyError};
use crate::param_block::VolumeConstants;
use crate::radiometry::{self, NormalizedVolume, RadiometryError};
use crate::raymarch::{self, Camera, DEFAULT_VFOV_DEG, FrameBuffer, RenderError, SceneFields};
use crate::transfer::{self, RenderParams, TissueClass, TissueWindows, TransferConfig, TransferError};
use crate::volume_io::{self, Volume, VolumeIoError};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Io(#[from] VolumeIoError),
    #[error(transparent)]
    Radiometry(#[from] RadiometryError),
    #[error(transparent)]
    Morphology(#[from] MorphologyError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("no volume has been preprocessed")]
    NotPreprocessed,
    #[error("set_params must be called before rendering")]
    ParamsNotSet,
    #[error("no GPU adapter available: {0}")]
    GpuUnavailable(String),
    #[error("volume {dims:?} exceeds the device's 3D texture limit of {limit}")]
    VolumeTooLarge { dims: [usize; 3], limit: u32 },
    #[error("GPU device lost: {0}")]
    DeviceLost(String),
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// Dispatch counts since the engine was created. Both only ever increase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PassCounters {
    pub preprocess: u64,
    pub render: u64,
}

/// Normalized volume and its morphology, computed once per upload.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub volume: NormalizedVolume,
    pub gradient: GradientField,
    pub curvature: CurvatureField,
    pub kappa_scale: f32,
}

impl Preprocessed {
    pub fn compute(volume: &Volume) -> Result<Self> {
        let nv = radiometry::normalize(volume)?;
        Self::from_normalized(nv)
    }

    pub fn from_normalized(nv: NormalizedVolume) -> Result<Self> {
        let gradient = morphology::gradient_field(&nv)?;
        let curvature = morphology::directional_curvature(&nv, &gradient);
        let kappa_scale = transfer::kappa_scale(&nv, &curvature.kappa);
        Ok(Preprocessed {
            volume: nv,
            gradient,
            curvature,
            kappa_scale,
        })
    }

    pub fn scene(&self) -> SceneFields<'_> {
        SceneFields {
            volume: &self.volume,
            gradient: &self.gradient,
            curvature: &self.curvature,
            kappa_scale: self.kappa_scale,
        }
    }

    pub fn constants(&self) -> VolumeConstants {
        VolumeConstants {
            dims: self.volume.dims,
            spacing: self.volume.spacing,
            grad_max: self.gradient.grad_max,
            kappa_scale: self.kappa_scale,
        }
    }
}

/// Common surface of the CPU and GPU engines.
pub trait RenderEngine {
    fn device_name(&self) -> String;
    fn counters(&self) -> PassCounters;
    /// Normalizes the volume and computes every field the renderer needs.
    fn upload_and_preprocess(&mut self, volume: &Volume) -> Result<()>;
    /// Replaces the live parameters. Never re-runs preprocessing.
    fn set_params(&mut self, tw: &TissueWindows, rp: &RenderParams, cam: &Camera) -> Result<()>;
    /// Renders one complete frame from the current parameters.
    fn render_frame(&mut self, width: u32, height: u32) -> Result<FrameBuffer>;
    /// Preprocessed volume facts, once available.
    fn volume_constants(&self) -> Option<VolumeConstants>;
}

/// Engine backed by the reference raymarcher.
#[derive(Debug, Default)]
pub struct CpuEngine {
    scene: Option<Preprocessed>,
    params: Option<(TissueWindows, RenderParams, Camera)>,
    counters: PassCounters,
}

impl CpuEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn preprocessed(&self) -> Option<&Preprocessed> {
        self.scene.as_ref()
    }
}

impl RenderEngine for CpuEngine {
    fn device_name(&self) -> String {
        format!("cpu ({} threads)", rayon::current_num_threads())
    }

    fn counters(&self) -> PassCounters {
        self.counters
    }

    fn upload_and_preprocess(&mut self, volume: &Volume) -> Result<()> {
        self.scene = Some(Preprocessed::compute(volume)?);
        self.counters.preprocess += 1;
        Ok(())
    }

    fn set_params(&mut self, tw: &TissueWindows, rp: &RenderParams, cam: &Camera) -> Result<()> {
        cam.basis()?;
        self.params = Some((*tw, *rp, *cam));
        Ok(())
    }

    fn render_frame(&mut self, width: u32, height: u32) -> Result<FrameBuffer> {
        let scene = self.scene.as_ref().ok_or(EngineError::NotPreprocessed)?;
        let (tw, rp, cam) = self.params.as_ref().ok_or(EngineError::ParamsNotSet)?;
        let frame = raymarch::render(&scene.scene(), tw, rp, cam, width, height)?;
        self.counters.render += 1;
        Ok(frame)
    }

    fn volume_constants(&self) -> Option<VolumeConstants> {
        self.scene.as_ref().map(Preprocessed::constants)
    }
}

/// Camera placement around the volume centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub azimuth_deg: f32,
    pub elevation_deg: f32,
    /// Orbit radius in mm; `None` fits the whole volume in view.
    pub distance_mm: Option<f32>,
    pub vfov_deg: f32,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        OrbitSpec {
            azimuth_deg: -90.0,
            elevation_deg: 15.0,
            distance_mm: None,
            vfov_deg: DEFAULT_VFOV_DEG,
        }
    }
}

impl OrbitSpec {
    pub fn camera(&self, extent: [f32; 3], width: u32, height: u32) -> Camera {
        let center = Vec3::from_array(extent) * 0.5;
        let distance = self
            .distance_mm
            .filter(|d| *d > 0.0)
            .unwrap_or_else(|| Camera::fit_distance(extent, self.vfov_deg));
        Camera::orbit(
            center,
            self.azimuth_deg,
            self.elevation_deg,
            distance,
            self.vfov_deg,
            width as f32 / height as f32,
        )
    }
}

/// Reference timings echoed alongside every benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub ttfp_healthy_ms: f64,
    pub ttfp_pathological_ms: f64,
    pub fps: f64,
}

pub const REFERENCE_FIGURES: ReferenceFigures = ReferenceFigures {
    ttfp_healthy_ms: 917.00,
    ttfp_pathological_ms: 750.40,
    fps: 82.0,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Definitions {
    pub ttfp: String,
    pub fps: String,
}

impl Default for Definitions {
    fn default() -> Self {
        Definitions {
            ttfp: "parse→first readback".into(),
            fps: "frames / sum of per-frame set_params+render+readback time while orbiting 360° and oscillating the GM multiplier".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub ttfp_ms: f64,
    pub fps: f64,
    pub frame_times_ms: Vec<f64>,
    pub width: u32,
    pub height: u32,
    pub dims: [usize; 3],
    pub device_name: String,
    pub definitions: Definitions,
    pub reference: ReferenceFigures,
    pub counters: PassCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtfpMeasurement {
    pub ttfp_ms: f64,
    pub dims: [usize; 3],
    pub first_frame: FrameBuffer,
}

/// Times parse → preprocess → set_params → first completed frame.
pub fn measure_ttfp<E: RenderEngine + ?Sized>(
    engine: &mut E,
    nifti_bytes: &[u8],
    config: &TransferConfig,
    orbit: &OrbitSpec,
    width: u32,
    height: u32,
) -> Result<TtfpMeasurement> {
    let start = Instant::now();
    let volume = volume_io::load_volume(nifti_bytes)?;
    engine.upload_and_preprocess(&volume)?;
    let (tw, rp) = config.resolve(volume.spacing())?;
    let cam = orbit.camera(volume.header.extent_mm(), width, height);
    engine.set_params(&tw, &rp, &cam)?;
    let first_frame = engine.render_frame(width, height)?;
    let ttfp_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(TtfpMeasurement {
        ttfp_ms,
        dims: volume.dims(),
        first_frame,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpsMeasurement {
    pub fps: f64,
    pub frame_times_ms: Vec<f64>,
}

/// Renders continuously for `seconds`, orbiting a full turn and oscillating
/// the GM multiplier through a parameter update every frame.
pub fn measure_fps<E: RenderEngine + ?Sized>(
    engine: &mut E,
    tw: &TissueWindows,
    rp: &RenderParams,
    orbit: &OrbitSpec,
    width: u32,
    height: u32,
    seconds: f64,
) -> Result<FpsMeasurement> {
    let extent = engine
        .volume_constants()
        .map(|c| [0, 1, 2].map(|a| c.dims[a] as f32 * c.spacing[a]))
        .ok_or(EngineError::NotPreprocessed)?;
    let gm = TissueClass::Gm.index();
    let mut frame_times_ms = Vec::new();
    let run = Instant::now();
    loop {
        let phase = (run.elapsed().as_secs_f64() / seconds.max(1e-9)).min(1.0);
        let mut frame_rp = *rp;
        frame_rp.class_multiplier[gm] = (0.5 + 0.5 * (std::f64::consts::TAU * phase).cos()) as f32;
        let frame_orbit = OrbitSpec {
            azimuth_deg: orbit.azimuth_deg + (360.0 * phase) as f32,
            ..*orbit
        };
        let cam = frame_orbit.camera(extent, width, height);
        let t0 = Instant::now();
        engine.set_params(tw, &frame_rp, &cam)?;
        engine.render_frame(width, height)?;
        frame_times_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        if run.elapsed().as_secs_f64() >= seconds {
            break;
        }
    }
    let total_ms: f64 = frame_times_ms.iter().sum();
    Ok(FpsMeasurement {
        fps: frame_times_ms.len() as f64 * 1e3 / total_ms,
        frame_times_ms,
    })
}

/// Full benchmark: TTFP on a fresh pipeline, then the sustained-FPS run.
pub fn run_bench<E: RenderEngine + ?Sized>(
    engine: &mut E,
    nifti_bytes: &[u8],
    config: &TransferConfig,
    orbit: &OrbitSpec,
    width: u32,
    height: u32,
    seconds: f64,
) -> Result<BenchReport> {
    let ttfp = measure_ttfp(engine, nifti_bytes, config, orbit, width, height)?;
    let constants = engine.volume_constants().ok_or(EngineError::NotPreprocessed)?;
    let (tw, rp) = config.resolve(constants.spacing)?;
    let fps = measure_fps(engine, &tw, &rp, orbit, width, height, seconds)?;
    Ok(BenchReport {
        ttfp_ms: ttfp.ttfp_ms,
        fps: fps.fps,
        frame_times_ms: fps.frame_times_ms,
        width,
        height,
        dims: ttfp.dims,
        device_name: engine.device_name(),
        definitions: Definitions::default(),
        reference: REFERENCE_FIGURES,
        counters: engine.counters(),
    })
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use voxtwin_core::engine::run_bench;
use voxtwin_core::math::Vec3;
use voxtwin_core::phantom::{PhantomSpec, bimodal_phantom, sphere_phantom};
use voxtwin_core::radiometry::{self, RadiometryError};
use voxtwin_core::volume_io::{self, Datatype, WriteOptions};
use voxtwin_core::{Camera, CpuEngine, EngineError, OrbitSpec, RenderEngine, TransferConfig, Volume};
use voxtwin_gpu::GpuEngine;

use crate::error::CliError;
use crate::{AnalyzeArgs, BenchArgs, Cohort, EngineArgs, PhantomArgs, PhantomKind, RenderArgs, StoredType};

type Result<T> = std::result::Result<T, CliError>;

fn write_json<T: Serialize>(value: &T, out: Option<&Path>, pretty: bool) -> Result<()> {
    let mut text = if pretty {
        serde_json::to_string_pretty(value)?
    } else {
        serde_json::to_string(value)?
    };
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn load_volume(path: &Path) -> Result<Volume> {
    volume_io::load_file(path).map_err(|source| CliError::Load {
        path: path.to_path_buf(),
        source,
    })
}

fn load_config(path: Option<&Path>) -> Result<TransferConfig> {
    Ok(path.map(TransferConfig::load).transpose()?.unwrap_or_default())
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let volume = load_volume(&args.input)?;
    let report = match radiometry::analyze(&volume) {
        Ok(r) => r,
        Err((hist, e)) => {
            if let (Some(h), RadiometryError::InsufficientModes { .. }) = (hist, &e) {
                log::info!("{} of {} voxels above background", h.used_voxels, h.total_voxels);
            }
            return Err(e.into());
        }
    };
    write_json(&report, args.out.as_deref(), args.pretty)?;
    if !report.in_window.all() {
        return Err(CliError::OutOfWindow(report.in_window));
    }
    Ok(())
}

/// GPU engine unless told otherwise; falls back to the CPU when allowed.
fn select_engine(args: &EngineArgs) -> Result<Box<dyn RenderEngine>> {
    if args.cpu_only {
        return Ok(Box::new(CpuEngine::new()));
    }
    match GpuEngine::from_env() {
        Ok(e) => Ok(Box::new(e)),
        Err(EngineError::GpuUnavailable(why)) if !args.require_gpu => {
            log::warn!("no GPU adapter ({why}); rendering on the CPU");
            Ok(Box::new(CpuEngine::new()))
        }
        Err(EngineError::GpuUnavailable(why)) => Err(CliError::GpuRequired(why)),
        Err(e) => Err(e.into()),
    }
}

fn camera(args: &RenderArgs, volume: &Volume) -> Camera {
    let (w, h) = args.size;
    let aspect = w as f32 / h as f32;
    if let (Some(eye), Some(target)) = (args.eye, args.target) {
        return Camera {
            eye: Vec3::from_array(eye),
            target: Vec3::from_array(target),
            up: Vec3::from_array(args.up),
            vfov_deg: args.vfov,
            aspect,
        };
    }
    let mut orbit = OrbitSpec {
        vfov_deg: args.vfov,
        ..OrbitSpec::default()
    };
    if let Some([az, el, d]) = args.orbit {
        orbit.azimuth_deg = az;
        orbit.elevation_deg = el;
        orbit.distance_mm = (d > 0.0).then_some(d);
    }
    orbit.camera(volume.header.extent_mm(), w, h)
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let config = load_config(args.params.as_deref())?;
    let volume = load_volume(&args.input)?;
    let (tw, rp) = config.resolve(volume.spacing())?;
    let cam = camera(args, &volume);
    let mut engine = select_engine(&args.engine)?;
    engine.upload_and_preprocess(&volume)?;
    engine.set_params(&tw, &rp, &cam)?;
    let (w, h) = args.size;
    let frame = engine.render_frame(w, h)?;
    log::info!(
        "{}: {} of {} pixels show tissue",
        engine.device_name(),
        frame.count_non_background(rp.background),
        w * h
    );
    frame.write_png(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    if let Some(raw) = &args.raw {
        let file = File::create(raw).map_err(|e| CliError::io(raw, e))?;
        let mut out = BufWriter::new(file);
        frame.write_raw_f32(&mut out).map_err(|e| CliError::io(raw, e))?;
        out.flush().map_err(|e| CliError::io(raw, e))?;
    }
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let config = load_config(args.params.as_deref())?;
    let bytes = std::fs::read(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let mut engine: Box<dyn RenderEngine> = if args.cpu_only {
        Box::new(CpuEngine::new())
    } else {
        match GpuEngine::from_env() {
            Ok(e) => Box::new(e),
            Err(EngineError::GpuUnavailable(why)) => return Err(CliError::GpuRequired(why)),
            Err(e) => return Err(e.into()),
        }
    };
    let (w, h) = args.size;
    let report = run_bench(engine.as_mut(), &bytes, &config, &OrbitSpec::default(), w, h, args.seconds)?;
    log::info!("ttfp {:.1} ms, {:.1} fps on {}", report.ttfp_ms, report.fps, report.device_name);
    write_json(&report, args.out.as_deref(), args.pretty)
}

fn stored_type(t: StoredType) -> (Datatype, f32) {
    match t {
        StoredType::U8 => (Datatype::Uint8, u8::MAX as f32),
        StoredType::I16 => (Datatype::Int16, i16::MAX as f32),
        StoredType::U16 => (Datatype::Uint16, u16::MAX as f32),
        StoredType::F32 => (Datatype::Float32, 0.0),
    }
}

pub fn gen_phantom(args: &PhantomArgs) -> Result<()> {
    let dims = args.dims;
    let volume = match args.kind {
        PhantomKind::Tissue => {
            let mut spec = match args.cohort {
                Cohort::A => PhantomSpec::cohort_a(dims),
                Cohort::B => PhantomSpec::cohort_b(dims),
                Cohort::C => PhantomSpec::cohort_c(dims),
            };
            spec.modes = args.modes.unwrap_or(spec.modes);
            spec.sigma = args.sigma.unwrap_or(spec.sigma);
            spec.seed = args.seed.unwrap_or(spec.seed);
            spec.vessels = !args.no_vessels;
            spec.generate()
        }
        PhantomKind::Sphere => {
            let r = 0.3 * *dims.iter().min().unwrap() as f32;
            sphere_phantom(dims, [1.0; 3], r, 1000.0)
        }
        PhantomKind::Bimodal => bimodal_phantom(dims),
        PhantomKind::Constant => {
            Volume::from_voxels(dims, [1.0; 3], vec![100.0; dims.iter().product()]).map_err(EngineError::from)?
        }
    };

    let (datatype, type_max) = stored_type(args.datatype);
    let mut opts = WriteOptions {
        datatype,
        gzip: args.out.extension().is_some_and(|e| e == "gz"),
        ..WriteOptions::default()
    };
    // Integer types store voxel / slope so the full range is used.
    let stored = if type_max > 0.0 && volume.i_max > 0.0 {
        let slope = volume.i_max / type_max;
        opts.scl_slope = slope;
        volume.voxels.iter().map(|v| v / slope).collect()
    } else {
        volume.voxels.clone()
    };
    let bytes = volume_io::encode_nifti(dims, volume.spacing(), &stored, &opts).map_err(EngineError::from)?;
    std::fs::write(&args.out, bytes).map_err(|e| CliError::io(&args.out, e))
}

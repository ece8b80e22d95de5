//! `voxtwin`: analyze, render and benchmark MRI volumes from the command line.
//!
//! Exit codes: 0 ok, 1 I/O or pipeline failure, 2 fewer than three
//! histogram modes, 3 a tissue peak outside its window, 4 GPU required but
//! unavailable.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "voxtwin", version, about = "Direct volume rendering for T1 MRI volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Histogram analysis: voxel counts, tissue peaks and window checks.
    Analyze(AnalyzeArgs),
    /// Render one frame to PNG.
    Render(RenderArgs),
    /// Time-to-first-pixel and sustained frame rate.
    Bench(BenchArgs),
    /// Write a synthetic test volume.
    #[command(hide = true)]
    GenPhantom(PhantomArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    input: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args, Debug, Clone)]
struct EngineArgs {
    /// Never touch the GPU.
    #[arg(long)]
    cpu_only: bool,
    /// Fail with exit code 4 instead of falling back to the CPU.
    #[arg(long, conflicts_with = "cpu_only")]
    require_gpu: bool,
}

#[derive(Args, Debug)]
struct RenderArgs {
    input: PathBuf,
    /// Transfer configuration JSON; defaults when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Orbit camera as `azimuth,elevation[,distance]` in degrees and mm.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_orbit)]
    orbit: Option<[f32; 3]>,
    /// Explicit eye position in mm; overrides --orbit.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vec3, requires = "target")]
    eye: Option<[f32; 3]>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vec3, requires = "eye")]
    target: Option<[f32; 3]>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vec3, default_value = "0,0,1")]
    up: [f32; 3],
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = voxtwin_core::raymarch::DEFAULT_VFOV_DEG)]
    vfov: f32,
    #[arg(long, value_parser = parse_size, default_value = "512x512")]
    size: (u32, u32),
    #[arg(long)]
    out: PathBuf,
    /// Also dump the linear RGBA frame as little-endian f32.
    #[arg(long)]
    raw: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    input: PathBuf,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_parser = parse_size, default_value = "512x512")]
    size: (u32, u32),
    #[arg(long, default_value_t = 5.0)]
    seconds: f64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
    /// Time the CPU renderer instead of requiring a GPU.
    #[arg(long)]
    cpu_only: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum PhantomKind {
    /// Tri-Gaussian tissue with lesion and vessels.
    Tissue,
    Sphere,
    Bimodal,
    Constant,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Cohort {
    A,
    B,
    C,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum StoredType {
    U8,
    I16,
    U16,
    F32,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long, value_enum, default_value = "tissue")]
    kind: PhantomKind,
    #[arg(long, value_enum, default_value = "a")]
    cohort: Cohort,
    /// Normalized CSF,GM,WM modes; overrides the cohort's.
    #[arg(long, value_parser = parse_vec3)]
    modes: Option<[f32; 3]>,
    /// Edge length `N` or `XxYxZ`.
    #[arg(long, value_parser = parse_dims, default_value = "128")]
    dims: [usize; 3],
    /// Tissue noise SD in normalized units.
    #[arg(long)]
    sigma: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_vessels: bool,
    #[arg(long, value_enum, default_value = "f32")]
    datatype: StoredType,
    /// Output path; a `.gz` suffix writes gzip.
    #[arg(long)]
    out: PathBuf,
}

fn parse_floats<const N: usize>(s: &str) -> Result<Vec<f32>, String> {
    let v: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() > N || v.iter().any(|x| !x.is_finite()) {
        return Err(format!("expected at most {N} finite numbers"));
    }
    Ok(v)
}

fn parse_orbit(s: &str) -> Result<[f32; 3], String> {
    match parse_floats::<3>(s)?.as_slice() {
        [az, el] => Ok([*az, *el, 0.0]),
        [az, el, d] => Ok([*az, *el, *d]),
        _ => Err("expected azimuth,elevation[,distance]".into()),
    }
}

fn parse_vec3(s: &str) -> Result<[f32; 3], String> {
    parse_floats::<3>(s)?.try_into().map_err(|_| "expected x,y,z".to_string())
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: u32 = w.parse().map_err(|e| format!("width: {e}"))?;
    let h: u32 = h.parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 || w > 16384 || h > 16384 {
        return Err("width and height must be in 1..=16384".into());
    }
    Ok((w, h))
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| p.parse().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [n] => Ok([*n; 3]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err("expected N or XxYxZ".into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(&a),
        Command::Render(a) => commands::render(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::GenPhantom(a) => commands::gen_phantom(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("voxtwin: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

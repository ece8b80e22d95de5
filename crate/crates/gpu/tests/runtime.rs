//! Device tests. Without an adapter each one prints SKIP and returns.

use rand::{RngExt, SeedableRng};
use voxtwin_core::phantom::PhantomSpec;
use voxtwin_core::raymarch::ImageDiff;
use voxtwin_core::scenes::{parity_suite, within_parity};
use voxtwin_core::{CpuEngine, EngineError, OrbitSpec, Preprocessed, RenderEngine, RenderParams, TissueWindows, Volume};
use voxtwin_gpu::{AdapterPreference, GpuEngine};

fn engine(test: &str) -> Option<GpuEngine> {
    match GpuEngine::new(AdapterPreference::from_env()) {
        Ok(e) => Some(e),
        Err(EngineError::GpuUnavailable(why)) => {
            eprintln!("SKIP {test}: no GPU adapter ({why})");
            None
        }
        Err(e) => panic!("{test}: {e}"),
    }
}

#[test]
fn init_yields_a_context_or_gpu_unavailable() {
    match GpuEngine::new(AdapterPreference::Default) {
        Ok(e) => {
            let caps = e.context().caps;
            assert!(caps.max_texture_dimension_3d > 0);
            assert!(caps.max_invocations_per_workgroup >= 64);
            assert_eq!(e.counters(), Default::default());
        }
        Err(EngineError::GpuUnavailable(_)) => {}
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn gradient_and_reduction_match_cpu() {
    let Some(mut gpu) = engine("gradient_and_reduction_match_cpu") else { return };
    let volume = PhantomSpec::cohort_a([128; 3]).generate();
    gpu.upload_and_preprocess(&volume).unwrap();
    let cpu = Preprocessed::compute(&volume).unwrap();
    let g = gpu.download_gradient().unwrap();
    for (a, b) in g.vectors.iter().zip(&cpu.gradient.vectors) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 1e-4, "{a:?} vs {b:?}");
        }
    }
    assert!((g.grad_max - cpu.gradient.grad_max).abs() <= 1e-5);
}

#[test]
fn reduction_matches_cpu_max_on_random_volumes() {
    let Some(mut gpu) = engine("reduction_matches_cpu_max_on_random_volumes") else { return };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
    for _ in 0..50 {
        let dims = [0, 1, 2].map(|_| rng.random_range(3usize..40));
        let n = dims.iter().product();
        let voxels = (0..n).map(|_| rng.random_range(0.0f32..1000.0)).collect();
        let volume = Volume::from_voxels(dims, [1.0; 3], voxels).unwrap();
        gpu.upload_and_preprocess(&volume).unwrap();
        let cpu = Preprocessed::compute(&volume).unwrap();
        let got = gpu.volume_constants().unwrap().grad_max;
        assert!((got - cpu.gradient.grad_max).abs() <= 1e-5, "{dims:?}: {got} vs {}", cpu.gradient.grad_max);
    }
}

#[test]
fn oversized_volume_is_rejected() {
    let Some(mut gpu) = engine("oversized_volume_is_rejected") else { return };
    let limit = gpu.context().caps.max_texture_dimension_3d as usize;
    let volume = Volume::from_voxels([limit + 1, 3, 3], [1.0; 3], (0..(limit + 1) * 9).map(|i| i as f32).collect()).unwrap();
    assert!(matches!(gpu.upload_and_preprocess(&volume), Err(EngineError::VolumeTooLarge { .. })));
}

#[test]
fn parity_with_cpu_on_scene_suite() {
    let Some(mut gpu) = engine("parity_with_cpu_on_scene_suite") else { return };
    for scene in parity_suite(128) {
        let a = scene.render(&mut gpu, 256, 256).unwrap();
        let b = scene.render(&mut CpuEngine::new(), 256, 256).unwrap();
        let d = ImageDiff::between(&a, &b);
        assert!(within_parity(&d), "{}: {d:?}", scene.name);
    }
}

#[test]
fn consecutive_frames_are_bit_identical() {
    let Some(mut gpu) = engine("consecutive_frames_are_bit_identical") else { return };
    let scene = &parity_suite(64)[0];
    let first = scene.render(&mut gpu, 128, 128).unwrap();
    for _ in 0..3 {
        assert_eq!(gpu.render_frame(128, 128).unwrap().linear, first.linear);
    }
}

#[test]
fn parameter_updates_never_preprocess() {
    let Some(mut gpu) = engine("parameter_updates_never_preprocess") else { return };
    let volume = PhantomSpec::cohort_a([48; 3]).generate();
    gpu.upload_and_preprocess(&volume).unwrap();
    let cam = OrbitSpec::default().camera(volume.header.extent_mm(), 64, 64);
    let tw = TissueWindows::default();
    let mut rp = RenderParams::for_spacing(volume.spacing());
    gpu.set_params(&tw, &rp, &cam).unwrap();
    let before = gpu.render_frame(64, 64).unwrap();
    rp.class_multiplier[1] = 0.0;
    gpu.set_params(&tw, &rp, &cam).unwrap();
    let without_gm = gpu.render_frame(64, 64).unwrap();
    assert_ne!(before.pixels, without_gm.pixels);
    rp.class_multiplier[1] = 1.0;
    gpu.set_params(&tw, &rp, &cam).unwrap();
    assert_eq!(gpu.render_frame(64, 64).unwrap().linear, before.linear);
    assert_eq!(gpu.counters().preprocess, 1);
    assert_eq!(gpu.counters().render, 3);
}

mod common;

use proptest::prelude::*;
use rand::RngExt;
use voxtwin_core::engine::{CpuEngine, OrbitSpec, PassCounters, Preprocessed, RenderEngine};
use voxtwin_core::math::Vec3;
use voxtwin_core::phantom::{PhantomSpec, sphere_phantom};
use voxtwin_core::radiometry::NormalizedVolume;
use voxtwin_core::raymarch::{
    Camera, CompositeState, FrameBuffer, composite_step, generate_ray, render, step_corrected_alpha,
};
use voxtwin_core::transfer::{
    CurvatureMode, RenderParams, TissueClass, TissueWindows, TransferConfig, sample_opacity, unmask_preset,
};

fn cohort_scene(n: usize) -> Preprocessed {
    Preprocessed::compute(&PhantomSpec::cohort_a([n; 3]).generate()).unwrap()
}

fn front_camera(extent: [f32; 3], size: u32) -> Camera {
    OrbitSpec::default().camera(extent, size, size)
}

#[test]
fn closed_form_for_identical_samples() {
    let mut s = CompositeState::default();
    for _ in 0..10 {
        s = composite_step(s, [1.0; 3], 0.1);
    }
    let want = 1.0 - 0.9f64.powi(10);
    assert!((s.a_acc as f64 - want).abs() <= 1e-6, "{}", s.a_acc);
    assert!((want - 0.651_321_56).abs() < 1e-8);
}

#[test]
fn transparent_samples_are_an_identity() {
    let start = CompositeState {
        c_acc: [0.2, 0.3, 0.1],
        a_acc: 0.4,
    };
    assert_eq!(composite_step(start, [0.9, 0.1, 0.5], 0.0), start);
}

#[test]
fn randomized_sequences_stay_bounded_and_monotone() {
    let mut rng = common::rng(3);
    for _ in 0..1000 {
        let n = rng.random_range(1..64);
        let samples: Vec<([f64; 3], f64)> = (0..n)
            .map(|_| ([0, 1, 2].map(|_| rng.random::<f64>()), rng.random::<f64>()))
            .collect();
        let mut s = CompositeState::default();
        for (c, a) in &samples {
            let next = composite_step(s, c.map(|v| v as f32), *a as f32);
            assert!(next.a_acc >= s.a_acc && next.a_acc <= 1.0);
            assert!(next.c_acc.iter().all(|&v| v <= 1.0 + 1e-6));
            s = next;
        }
        let (c, a) = common::oracle_composite(&samples);
        assert!((s.a_acc as f64 - a).abs() < 1e-5);
        for k in 0..3 {
            assert!((s.c_acc[k] as f64 - c[k]).abs() < 1e-5);
        }
    }
}

#[test]
fn opacity_examples() {
    let tw = TissueWindows::default();
    let mut rp = RenderParams::default();
    // WM base alpha 0.85 scaled to weight 0.8 via the multiplier.
    rp.class_multiplier[TissueClass::Wm.index()] = 0.8 / 0.85;
    let (a, _) = sample_opacity(0.5, 0.5, 1.0, 0.0, 1.0, &tw, &rp);
    assert!((a - 0.4).abs() < 1e-6, "{a}");
    rp.class_multiplier[TissueClass::Wm.index()] = 1.0 / 0.85;
    let (a, _) = sample_opacity(0.5, 1.0, 1.0, 0.0, 1.0, &tw, &rp);
    assert!((a - 1.0).abs() < 1e-6);
    let (a, _) = sample_opacity(0.5, 0.0, 1.0, 0.3, 1.0, &tw, &rp);
    assert_eq!(a, 0.0);
}

#[test]
fn windows_partition_the_unit_interval() {
    let tw = TissueWindows::default();
    for i in 0..=10_000 {
        let v = i as f32 / 10_000.0;
        let hits = [TissueClass::Csf, TissueClass::Gm, TissueClass::Wm]
            .into_iter()
            .filter(|&c| {
                let ch = tw.channel(c);
                v >= ch.lo && (v < ch.hi || (ch.hi >= 1.0 && v <= 1.0))
            })
            .count();
        assert!(hits <= 1);
        assert_eq!(tw.classify(v).is_some(), v >= 0.05);
    }
    assert_eq!(tw.classify(0.12), Some(TissueClass::Gm));
    assert_eq!(tw.classify(0.18), Some(TissueClass::Wm));
    assert_eq!(tw.classify(1.0), Some(TissueClass::Wm));
    assert_eq!(tw.classify(0.0499), None);
}

fn class_params() -> impl Strategy<Value = (f32, f32, f32, f32, [f32; 4], bool, bool, f32)> {
    (
        0.0f32..=1.0,
        0.0f32..=2.0,
        0.01f32..=2.0,
        -5.0f32..5.0,
        prop::array::uniform4(0.0f32..=1.0),
        any::<bool>(),
        any::<bool>(),
        0.0f32..4.0,
    )
}

proptest! {
    #[test]
    fn opacity_is_bounded_and_monotone((i, g, gmax, k, mult, unmask, curv, lambda) in class_params(), bump in 0.0f32..1.0) {
        let tw = TissueWindows::default();
        let rp = RenderParams {
            class_multiplier: mult,
            unmask_enabled: unmask,
            curvature_mode: if curv { CurvatureMode::Linear } else { CurvatureMode::Off },
            curvature_lambda: lambda,
            ..RenderParams::default()
        };
        let (a, _) = sample_opacity(i, g, gmax, k, 0.5, &tw, &rp);
        prop_assert!((0.0..=1.0).contains(&a));
        let (zero, _) = sample_opacity(i, 0.0, gmax, k, 0.5, &tw, &rp);
        prop_assert_eq!(zero, 0.0);

        let (more_grad, _) = sample_opacity(i, g + bump, gmax, k, 0.5, &tw, &rp);
        prop_assert!(more_grad >= a);

        for c in 0..4 {
            let mut up = rp;
            up.class_multiplier[c] = (up.class_multiplier[c] + bump).min(1.0);
            let (more, _) = sample_opacity(i, g, gmax, k, 0.5, &tw, &up);
            prop_assert!(more >= a);
        }

        let off = RenderParams { class_multiplier: [0.0; 4], ..rp };
        prop_assert_eq!(sample_opacity(i, g, gmax, k, 0.5, &tw, &off).0, 0.0);
    }

    #[test]
    fn rays_have_unit_direction(az in -180.0f32..180.0, el in -80.0f32..80.0, px in 0u32..64, py in 0u32..48) {
        let cam = Camera::orbit(Vec3::new(10.0, 20.0, 5.0), az, el, 300.0, 45.0, 64.0 / 48.0);
        let r = generate_ray(&cam, px, py, 64, 48).unwrap();
        prop_assert!((r.direction.length() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn step_correction_composes(alpha in 0.0f32..0.999, step in 0.05f32..2.0) {
        let half = step_corrected_alpha(alpha, step / 2.0);
        let twice = 1.0 - (1.0 - half) * (1.0 - half);
        prop_assert!((twice - step_corrected_alpha(alpha, step)).abs() < 1e-5);
    }
}

#[test]
fn sphere_silhouette_matches_projected_disc() {
    let dims = [96; 3];
    let radius = 30.0f32;
    let scene = Preprocessed::compute(&sphere_phantom(dims, [1.0; 3], radius, 1000.0)).unwrap();
    let mut tw = TissueWindows::default();
    tw.wm.lo = 0.5;
    let rp = RenderParams {
        class_multiplier: [0.0, 0.0, 1.0, 0.0],
        ..RenderParams::for_spacing([1.0; 3])
    };
    let (size, distance, vfov) = (200u32, 150.0f32, 40.0f32);
    let cam = Camera::orbit(Vec3::new(48.0, 48.0, 48.0), 30.0, 20.0, distance, vfov, 1.0);
    let frame = render(&scene.scene(), &tw, &rp, &cam, size, size).unwrap();

    let half_angle = (radius / distance).asin();
    let disc_px = half_angle.tan() / (vfov.to_radians() / 2.0).tan() * size as f32 / 2.0;
    let expected = std::f64::consts::PI * (disc_px as f64).powi(2);
    let got = frame.count_non_background(rp.background) as f64;
    let rel = (got - expected).abs() / expected;
    assert!(rel <= 0.02, "coverage {got} vs disc {expected:.1} ({:.2}%)", rel * 100.0);
}

#[test]
fn volume_below_every_window_renders_background() {
    let v = sphere_phantom([24; 3], [1.0; 3], 8.0, 1.0);
    // Only 0 and 1 present; restrict all windows above 1 by lifting CSF/GM/WM to tiny bands.
    let mut nv = voxtwin_core::radiometry::normalize(&v).unwrap();
    for x in nv.values.iter_mut() {
        *x *= 0.04;
    }
    let scene = Preprocessed::from_normalized(nv).unwrap();
    let rp = RenderParams {
        background: [0.1, 0.2, 0.3],
        ..RenderParams::for_spacing([1.0; 3])
    };
    let frame = render(&scene.scene(), &TissueWindows::default(), &rp, &front_camera([24.0; 3], 32), 32, 32).unwrap();
    assert_eq!(frame.count_non_background(rp.background), 0);
}

#[test]
fn zero_multipliers_render_pure_background() {
    let scene = cohort_scene(40);
    let rp = RenderParams {
        class_multiplier: [0.0; 4],
        unmask_enabled: true,
        background: [0.05, 0.05, 0.08],
        ..RenderParams::for_spacing([1.0; 3])
    };
    let frame = render(&scene.scene(), &TissueWindows::default(), &rp, &front_camera([40.0; 3], 48), 48, 48).unwrap();
    assert_eq!(frame.count_non_background(rp.background), 0);
}

#[test]
fn unmask_preset_shows_only_high_channel_color() {
    let scene = cohort_scene(64);
    let tw = TissueWindows::default();
    let rp = unmask_preset(&RenderParams::for_spacing([1.0; 3]));
    let frame = render(&scene.scene(), &tw, &rp, &front_camera([64.0; 3], 64), 64, 64).unwrap();
    assert!(frame.count_non_background(rp.background) > 0);
    let c = tw.high.color;
    for px in &frame.linear {
        // Foreground is a scalar multiple of the HIGH color over black.
        let s = px[0] / c[0];
        assert!((px[1] - s * c[1]).abs() < 1e-5 && (px[2] - s * c[2]).abs() < 1e-5, "{px:?}");
    }
}

fn max_channel_diff(a: &FrameBuffer, b: &FrameBuffer) -> u8 {
    a.pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| x.abs_diff(*y))
        .max()
        .unwrap_or(0)
}

#[test]
fn early_termination_is_sound() {
    let scene = cohort_scene(64);
    let tw = TissueWindows::default();
    let cam = front_camera([64.0; 3], 96);
    let default = RenderParams::for_spacing([1.0; 3]);
    let full = RenderParams {
        early_stop_alpha: 1.0,
        ..default
    };
    let a = render(&scene.scene(), &tw, &default, &cam, 96, 96).unwrap();
    let b = render(&scene.scene(), &tw, &full, &cam, 96, 96).unwrap();
    // Stopping leaves at most 1 - early_stop_alpha of transmittance, which
    // bounds the change in every linear channel.
    let bound = 1.0 - default.early_stop_alpha;
    for (x, y) in a.linear.iter().zip(&b.linear) {
        for k in 0..3 {
            assert!((x[k] - y[k]).abs() <= bound + 1e-6, "{x:?} vs {y:?}");
        }
    }
    let over = a.pixels.iter().zip(&b.pixels).filter(|(x, y)| x.abs_diff(**y) > 1).count();
    eprintln!(
        "early stop: max 8-bit difference {}, channels above 1/255: {over} of {}",
        max_channel_diff(&a, &b),
        a.pixels.len()
    );
}

fn mean_linear(f: &FrameBuffer) -> f64 {
    f.linear.iter().map(|p| (p[0] + p[1] + p[2]) as f64).sum::<f64>() / (3 * f.linear.len()) as f64
}

#[test]
fn halving_the_step_converges_on_a_smooth_volume() {
    let n = 48;
    let c = n as f32 / 2.0;
    let mut values = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let d2 = [x, y, z].iter().map(|&i| (i as f32 + 0.5 - c).powi(2)).sum::<f32>();
                values.push((-d2 / (2.0 * 9.0f32.powi(2))).exp());
            }
        }
    }
    let scene = Preprocessed::from_normalized(NormalizedVolume::new([n; 3], [1.0; 3], values).unwrap()).unwrap();
    let tw = TissueWindows::default();
    let cam = front_camera([n as f32; 3], 48);
    let means: Vec<f64> = [2.0, 1.0, 0.5, 0.25, 0.125]
        .iter()
        .map(|&step| {
            let rp = RenderParams {
                step_mm: step,
                early_stop_alpha: 1.0,
                ..RenderParams::default()
            };
            mean_linear(&render(&scene.scene(), &tw, &rp, &cam, 48, 48).unwrap())
        })
        .collect();
    let deltas: Vec<f64> = means.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in deltas.windows(2) {
        assert!(w[1] < w[0], "step deltas {deltas:?}");
    }
}

#[test]
fn renders_do_not_depend_on_thread_count() {
    let scene = cohort_scene(48);
    let tw = TissueWindows::default();
    let rp = RenderParams::for_spacing([1.0; 3]);
    let cam = front_camera([48.0; 3], 40);
    let reference = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| render(&scene.scene(), &tw, &rp, &cam, 40, 40).unwrap());
    for threads in [2, 5] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let frame = pool.install(|| render(&scene.scene(), &tw, &rp, &cam, 40, 40).unwrap());
        assert_eq!(frame.pixels, reference.pixels);
        assert_eq!(frame.linear, reference.linear);
    }
}

#[test]
fn interaction_cycles_never_preprocess() {
    let volume = PhantomSpec::cohort_b([32; 3]).generate();
    let extent = volume.header.extent_mm();
    let mut engine = CpuEngine::new();
    engine.upload_and_preprocess(&volume).unwrap();
    let mut rng = common::rng(100);
    let tw = TissueWindows::default();
    let mut last = None;
    for _ in 0..100 {
        let rp = RenderParams {
            class_multiplier: [0, 1, 2, 3].map(|_| rng.random::<f32>()),
            unmask_enabled: rng.random(),
            ..RenderParams::for_spacing([1.0; 3])
        };
        let orbit = OrbitSpec {
            azimuth_deg: rng.random_range(-180.0..180.0),
            elevation_deg: rng.random_range(-60.0..60.0),
            ..OrbitSpec::default()
        };
        let cam = orbit.camera(extent, 24, 24);
        engine.set_params(&tw, &rp, &cam).unwrap();
        engine.render_frame(24, 24).unwrap();
        last = Some((rp, cam));
    }
    assert_eq!(engine.counters(), PassCounters { preprocess: 1, render: 100 });

    let (rp, cam) = last.unwrap();
    let after = engine.render_frame(24, 24).unwrap();
    let mut fresh = CpuEngine::new();
    fresh.upload_and_preprocess(&volume).unwrap();
    fresh.set_params(&tw, &rp, &cam).unwrap();
    assert_eq!(fresh.render_frame(24, 24).unwrap(), after);
}

#[test]
fn config_documents_round_trip() {
    let mut tw = TissueWindows::default();
    tw.gm.base_alpha = 0.42;
    let rp = RenderParams {
        class_multiplier: [0.1, 0.2, 0.3, 0.4],
        curvature_mode: CurvatureMode::Linear,
        curvature_lambda: 0.7,
        step_mm: 0.3,
        unmask_enabled: true,
        ..RenderParams::default()
    };
    let text = serde_json::to_string_pretty(&TransferConfig::from_settings(&tw, &rp)).unwrap();
    let back = TransferConfig::from_json(&text).unwrap().resolve([1.0; 3]).unwrap();
    assert_eq!(back, (tw, rp));

    let partial = TransferConfig::from_json(r#"{"multipliers": {"csf": 0, "gm": 0, "wm": 0}, "unmask": true}"#).unwrap();
    let (_, rp) = partial.resolve([2.0, 1.0, 1.0]).unwrap();
    assert_eq!(rp.class_multiplier, [0.0, 0.0, 0.0, 1.0]);
    assert!(rp.unmask_enabled);
    assert_eq!(rp.step_mm, 0.5);
    assert!(TransferConfig::from_json(r#"{"bogus": 1}"#).is_err());
}

use monovo_core::image::Image;
use monovo_core::photometry::{ResponseLut, VignetteMap};
use monovo_core::response::{
    calibrate_response, energy_response, update_irradiance, update_response, ExposureSweep, ResponseOptions,
};
use monovo_core::synthetic::{gen_exposure_sweep, gen_plane_observations, Pattern, PoseSampler, SyntheticScene};
use monovo_core::vignette::{
    calibrate_vignette, collect_samples, update_plane, update_vignette, GridLayout, VignetteOptions,
};
use monovo_core::Error;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn small_sweep_scene(seed: u64, gamma: f64) -> SyntheticScene {
    SyntheticScene::new(
        Pattern::Gradient,
        (1e-3, 1e4),
        ResponseLut::gamma(gamma).unwrap(),
        VignetteMap::cos4(40, 30, 30.0).unwrap(),
        seed,
    )
    .unwrap()
}

#[test]
fn identity_response_is_recovered() {
    let scene = SyntheticScene::new(
        Pattern::Gradient,
        (1e-3, 1e4),
        ResponseLut::identity(),
        VignetteMap::uniform(80, 60),
        0,
    )
    .unwrap();
    let (sweep, truth) = gen_exposure_sweep(&scene, 120, 0.05, 1.05).unwrap();
    let cal = calibrate_response(&sweep, &ResponseOptions::default()).unwrap();
    assert!(cal.warnings.is_empty(), "{:?}", cal.warnings);
    let err = max_abs_diff(cal.response.values(), truth.response.values());
    assert!(err < 2.0, "max deviation {err}");
}

#[test]
fn overexposed_sweep_has_no_observations() {
    let frames = vec![(Image::filled(4, 4, 255u8), 1.0), (Image::filled(4, 4, 255u8), 2.0)];
    let sweep = ExposureSweep::new(frames).unwrap();
    assert_eq!(
        calibrate_response(&sweep, &ResponseOptions::default()).unwrap_err(),
        Error::NoValidObservations
    );
}

#[test]
fn response_update_is_bin_average() {
    let scene = small_sweep_scene(1, 2.2);
    let (sweep, _) = gen_exposure_sweep(&scene, 30, 0.05, 1.2).unwrap();
    let opts = ResponseOptions::default();
    let u0 = *ResponseLut::identity().values();
    let irr = update_irradiance(&u0, &sweep, &opts);
    let (u, counts) = update_response(&u0, &irr, &sweep, &opts);

    let mut sum = [0.0f64; 256];
    let mut n = [0usize; 256];
    for (img, t) in sweep.frames() {
        for (k, b) in img.as_slice().iter().zip(irr.as_slice()) {
            if *k == 255 {
                continue;
            }
            if let Some(b) = b {
                sum[*k as usize] += t * b;
                n[*k as usize] += 1;
            }
        }
    }
    for k in 0..255 {
        assert_eq!(counts[k], n[k]);
        if n[k] > 0 {
            let mean = sum[k] / n[k] as f64;
            assert!((u[k] - mean).abs() <= 1e-9 * mean.abs().max(1.0), "bin {k}");
        }
    }
}

#[test]
fn response_energy_perturbation_matches_recomputation() {
    let scene = small_sweep_scene(2, 1.8);
    let (sweep, _) = gen_exposure_sweep(&scene, 12, 0.1, 1.5).unwrap();
    let opts = ResponseOptions::default();
    let u = *ResponseLut::gamma(1.5).unwrap().values();
    let irr = update_irradiance(&u, &sweep, &opts);
    let e0 = energy_response(&u, &irr, &sweep, 255).unwrap();

    let x = 300;
    let delta = 0.37;
    let mut moved = irr.clone();
    let b = moved.as_slice()[x].unwrap();
    moved.as_mut_slice()[x] = Some(b + delta);
    let e1 = energy_response(&u, &moved, &sweep, 255).unwrap();

    // each valid observation of x changes by (t d)^2 - 2 t d (U - t B)
    let mut expected = 0.0;
    for (img, t) in sweep.frames() {
        let k = img.as_slice()[x];
        if k == 255 {
            continue;
        }
        let r = u[k as usize] - t * b;
        expected += (t * delta).powi(2) - 2.0 * t * delta * r;
    }
    assert!(((e1 - e0) - expected).abs() < 1e-9 * e0.max(1.0));
}

#[test]
fn response_is_invariant_to_exposure_scaling() {
    let scene = small_sweep_scene(3, 2.2);
    let (sweep, _) = gen_exposure_sweep(&scene, 60, 0.05, 1.1).unwrap();
    let opts = ResponseOptions::default();
    let a = calibrate_response(&sweep, &opts).unwrap();
    let b = calibrate_response(&sweep.scaled_exposures(3.0).unwrap(), &opts).unwrap();
    assert!(max_abs_diff(a.response.values(), b.response.values()) < 1e-6);
    for (x, y) in a.irradiance.as_slice().iter().zip(b.irradiance.as_slice()) {
        match (x, y) {
            (Some(x), Some(y)) => assert!((x / 3.0 - y).abs() <= 1e-6 * x.abs().max(1e-9)),
            (None, None) => {}
            _ => panic!("validity differs"),
        }
    }
}

fn non_increasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0])
}

#[test]
fn energy_traces_never_increase() {
    for seed in 0..100 {
        let scene = small_sweep_scene(seed, 1.5 + (seed % 5) as f64 * 0.3).with_noise(0.5);
        let (sweep, _) = gen_exposure_sweep(&scene, 25, 0.05, 1.25).unwrap();
        let cal = calibrate_response(&sweep, &ResponseOptions::default()).unwrap();
        assert!(
            non_increasing(&cal.energy_trace),
            "response seed {seed}: {:?}",
            cal.energy_trace
        );

        let scene = SyntheticScene::new(
            Pattern::Texture,
            (20.0, 60.0),
            ResponseLut::gamma(2.2).unwrap(),
            VignetteMap::cos4(40, 30, 30.0).unwrap(),
            seed,
        )
        .unwrap()
        .with_noise(0.5);
        let sampler = PoseSampler {
            focal: 30.0,
            ..PoseSampler::default()
        };
        let obs = gen_plane_observations(&scene, 6, seed, &sampler).unwrap();
        let opts = VignetteOptions::new(GridLayout::unit(60).unwrap());
        let cal = calibrate_vignette(&obs, &scene.response, &opts).unwrap();
        assert!(
            non_increasing(&cal.energy_trace),
            "vignette seed {seed}: {:?}",
            cal.energy_trace
        );
    }
}

fn small_plane_problem(pattern: Pattern, vignette: VignetteMap) -> (SyntheticScene, PoseSampler) {
    let scene = SyntheticScene::new(pattern, (20.0, 60.0), ResponseLut::gamma(2.2).unwrap(), vignette, 7).unwrap();
    let sampler = PoseSampler {
        focal: 30.0,
        ..PoseSampler::default()
    };
    (scene, sampler)
}

#[test]
fn flat_vignette_is_recovered_exactly() {
    // integer C and exposures with a linear response quantize without error
    let scene = SyntheticScene::new(
        Pattern::Constant,
        (30.0, 30.0),
        ResponseLut::identity(),
        VignetteMap::uniform(40, 30),
        7,
    )
    .unwrap();
    let sampler = PoseSampler {
        focal: 30.0,
        integer_exposures: true,
        ..PoseSampler::default()
    };
    let obs = gen_plane_observations(&scene, 50, 0, &sampler).unwrap();
    let cal = calibrate_vignette(
        &obs,
        &scene.response,
        &VignetteOptions::new(GridLayout::unit(100).unwrap()),
    )
    .unwrap();
    for (v, seen) in cal.vignette.factors().as_slice().iter().zip(cal.observed.as_slice()) {
        if *seen {
            assert!((v - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn vignette_fixed_point_holds_at_convergence() {
    // the energy stops resolving parameter changes near sqrt(eps), so the
    // fixed point is checked on a well-coupled problem
    let (scene, sampler) = small_plane_problem(Pattern::Texture, VignetteMap::cos4(20, 15, 15.0).unwrap());
    let sampler = PoseSampler { focal: 15.0, ..sampler };
    let obs = gen_plane_observations(&scene, 50, 1, &sampler).unwrap();
    let grid = GridLayout::unit(40).unwrap();
    let opts = VignetteOptions {
        tol: 0.0,
        max_iters: 5_000,
        ..VignetteOptions::new(grid)
    };
    let cal = calibrate_vignette(&obs, &scene.response, &opts).unwrap();
    assert!(cal.connectivity.is_connected());

    let samples = collect_samples(&obs, &scene.response, &grid, 255).unwrap();
    let v = cal.vignette.factors().as_slice();
    let c: Vec<f64> = cal.plane.values.as_slice().iter().map(|c| c.unwrap_or(0.0)).collect();
    let (c_next, _) = update_plane(&samples, v, grid.cells());
    let (v_next, _) = update_vignette(&samples, &c, v.len());
    let c_scale = c.iter().fold(0.0f64, |m, x| m.max(*x));
    assert!(max_abs_diff(&c, &c_next) < 1e-9 * c_scale);
    assert!(max_abs_diff(v, &v_next) < 1e-9);
}

#[test]
fn returned_vignette_is_gauge_invariant() {
    let (scene, sampler) = small_plane_problem(Pattern::Texture, VignetteMap::cos4(40, 30, 30.0).unwrap());
    let obs = gen_plane_observations(&scene, 8, 2, &sampler).unwrap();
    let opts = VignetteOptions::new(GridLayout::unit(60).unwrap());
    let a = calibrate_vignette(&obs, &scene.response, &opts).unwrap();
    // scaling every exposure by 2.5 rescales C but must not change V
    let scaled: Vec<_> = obs
        .iter()
        .cloned()
        .map(|mut o| {
            o.exposure_ms *= 2.5;
            o
        })
        .collect();
    let b = calibrate_vignette(&scaled, &scene.response, &opts).unwrap();
    assert!(max_abs_diff(a.vignette.factors().as_slice(), b.vignette.factors().as_slice()) < 1e-9);
}

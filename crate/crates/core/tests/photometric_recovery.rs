mod common;

use common::*;
use proptest::prelude::*;
use rainview::photometric::{
    ambient_from_density, brightness_histogram, compose, compose_legacy, preset_params, DEFAULT_BASE_DENSITY,
};
use rainview::recovery::{be_curve, enhance, fit_params, loss_and_gradient, undo_attenuation};
use rainview::{AmbientLight, CurveParams, FitSettings, ImageBuffer, Objective, RainMask, RainPreset};

fn image(w: u32, h: u32) -> impl Strategy<Value = ImageBuffer> {
    prop::collection::vec(0.0f64..=1.0, (w * h * 3) as usize).prop_map(move |d| ImageBuffer::new(w, h, d))
}

fn mask(w: u32, h: u32) -> impl Strategy<Value = RainMask> {
    prop::collection::vec(0.0f64..=1.0, (w * h) as usize).prop_map(move |values| RainMask { width: w, height: h, values })
}

fn curve_params(n: usize, lim: f64) -> impl Strategy<Value = CurveParams> {
    prop::collection::vec(prop::array::uniform3(-lim..=lim), n).prop_map(|s| CurveParams::new(s).unwrap())
}

/// Objective value computed from scratch, for finite differences.
fn loss_oracle(img: &ImageBuffer, a: &CurveParams, obj: &Objective) -> f64 {
    let out: Vec<f64> = img
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| curve_oracle(v, &a.steps.iter().map(|s| s[i % 3]).collect::<Vec<_>>()))
        .collect();
    match obj {
        Objective::MseToReference(r) => {
            out.iter().zip(&r.data).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / out.len() as f64
        }
        Objective::ExposureTarget { target, patch } => {
            let (w, h, p) = (img.width, img.height, *patch);
            let mut total = 0.0;
            let mut tiles = 0.0;
            for ty in (0..h).step_by(p as usize) {
                for tx in (0..w).step_by(p as usize) {
                    let (mut s, mut n) = (0.0, 0.0);
                    for y in ty..(ty + p).min(h) {
                        for x in tx..(tx + p).min(w) {
                            let i = ((y * w + x) * 3) as usize;
                            s += (out[i] + out[i + 1] + out[i + 2]) / 3.0;
                            n += 1.0;
                        }
                    }
                    total += (s / n - target).powi(2);
                    tiles += 1.0;
                }
            }
            total / tiles
        }
    }
}

fn max_fd_rel_err(img: &ImageBuffer, a: &CurveParams, obj: &Objective) -> f64 {
    let (_, g) = loss_and_gradient(img, a, obj).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for s in 0..a.len() {
        for c in 0..3 {
            let mut hi = a.clone();
            let mut lo = a.clone();
            hi.steps[s][c] += h;
            lo.steps[s][c] -= h;
            let fd = (loss_oracle(img, &hi, obj) - loss_oracle(img, &lo, obj)) / (2.0 * h);
            let an = g.steps[s][c];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-8));
        }
    }
    worst
}

#[test]
fn documented_light_values() {
    let l = ambient_from_density([1.0; 3], 0.2, 5.0).unwrap();
    assert!((l.0[0] - 0.367879441).abs() < 1e-9);
    let (den, light) = preset_params(RainPreset::Light, [1.0; 3], 1.0, 0.1).unwrap();
    assert_eq!(den, 0.1);
    assert!((light.0[0] - 0.904837418).abs() < 1e-9);
    let dens: Vec<f64> = RainPreset::ALL
        .iter()
        .map(|&p| preset_params(p, [1.0; 3], 1.0, DEFAULT_BASE_DENSITY).unwrap().0)
        .collect();
    assert!(dens[2] > dens[1] && dens[1] > dens[0]);
    for p in RainPreset::ALL {
        assert_eq!(preset_params(p, [0.8, 0.7, 0.6], 0.0, 0.1).unwrap().1 .0, [0.8, 0.7, 0.6]);
    }
}

#[test]
fn hand_evaluated_compositions() {
    let b = ImageBuffer::new(1, 1, vec![0.4, 0.9, 0.5]);
    let m = RainMask { width: 1, height: 1, values: vec![0.2] };
    let out = compose(&b, &m, &AmbientLight([0.5, 1.0, 1.0]), [1.0; 3]).unwrap();
    assert!((out.data[0] - 0.3).abs() < 1e-15);
    let m3 = RainMask { values: vec![0.3], ..m.clone() };
    assert_eq!(compose(&b, &m3, &AmbientLight::WHITE, [1.0; 3]).unwrap().data[1], 1.0);
    let legacy = compose_legacy(&b, &RainMask { values: vec![0.25], ..m }, [1.0; 3]).unwrap();
    assert_eq!(legacy.data[2], 0.75);
}

#[test]
fn histogram_examples() {
    let c = ImageBuffer::filled(7, 3, 0.5);
    let h = brightness_histogram(&c, 10);
    assert_eq!(h[5], 21);
    let half = ImageBuffer::from_fn(4, 4, |x, _, _| if x < 2 { 0.0 } else { 1.0 });
    assert_eq!(brightness_histogram(&half, 2), [8, 8]);
}

#[test]
fn curve_examples() {
    let i = ImageBuffer::filled(2, 2, 0.5);
    assert!(be_curve(&i, [0.8; 3]).unwrap().data.iter().all(|&v| (v - 0.7).abs() < 1e-15));
    let t = enhance(&i, &CurveParams::new(vec![[1.0; 3]; 4]).unwrap()).unwrap();
    let seq: Vec<f64> = t.stages.iter().map(|s| s.data[0]).collect();
    assert_eq!(seq, [0.5, 0.75, 0.9375, 0.99609375, 0.9999847412109375]);
    assert!(be_curve(&i, [1.5, 0.0, 0.0]).is_err());
}

#[test]
fn fit_examples() {
    let r = ImageBuffer::new(64, 64, midtone(64, 64, 0.3));
    let same = fit_params(&r, &Objective::MseToReference(r.clone()), &FitSettings::default()).unwrap();
    assert!(same.final_loss() < 1e-10);
    assert!(same.params.steps.iter().flatten().all(|a| a.abs() < 1e-6));
    let frozen = fit_params(&r, &Objective::MseToReference(r.clone()), &FitSettings { lr: 0.0, iters: 1, ..Default::default() }).unwrap();
    assert!(frozen.params.steps.iter().flatten().all(|&a| a == 0.0));

    let dim = ImageBuffer::new(64, 64, r.data.iter().map(|v| 0.6 * v).collect());
    let base = dim.mse(&r);
    let fit = fit_params(&dim, &Objective::MseToReference(r.clone()), &FitSettings::default()).unwrap();
    let out = enhance(&dim, &fit.params).unwrap();
    // the fitter run as its own oracle reduces the error by about 90% at the default step size
    assert!(out.output().mse(&r) <= 0.4 * base, "{} vs {base}", out.output().mse(&r));
    assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));

    for l in [1.0, 0.6, 0.4] {
        let img = ImageBuffer::new(32, 32, r.data.iter().take(32 * 32 * 3).map(|v| v * l).collect());
        let (trace, fit) = undo_attenuation(&img, &AmbientLight([l; 3]), &FitSettings::default()).unwrap();
        assert!(fit.final_loss() <= fit.history[0]);
        assert!(trace.output().mean_luma() >= img.mean_luma() - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn compose_is_bounded_and_ordered(b in image(6, 5), m in mask(6, 5), gamma in 0.01f64..2.0, base in 0.01f64..2.0) {
        let mut prev = f64::INFINITY;
        for p in RainPreset::ALL {
            let (_, light) = preset_params(p, [1.0; 3], gamma, base).unwrap();
            let out = compose(&b, &m, &light, [1.0; 3]).unwrap();
            prop_assert!(out.in_range());
            prop_assert!(out.mean_luma() <= prev);
            prev = out.mean_luma();
        }
        let dry = RainMask { values: vec![0.0; 30], ..m.clone() };
        prop_assert_eq!(compose(&b, &dry, &AmbientLight::WHITE, [1.0; 3]).unwrap(), b.clone());
        prop_assert_eq!(brightness_histogram(&b, 17).iter().sum::<u64>(), 30);
    }

    #[test]
    fn light_decreases_with_density(l0 in prop::array::uniform3(0.01f64..=1.0), gamma in 0.001f64..5.0, d in 0.0f64..10.0, dd in 1e-3f64..5.0) {
        let a = ambient_from_density(l0, gamma, d).unwrap();
        let b = ambient_from_density(l0, gamma, d + dd).unwrap();
        for c in 0..3 {
            prop_assert!(b.0[c] < a.0[c]);
        }
    }

    #[test]
    fn curve_closure_monotonicity_and_brightening(i in 0.0f64..=1.0, j in 0.0f64..=1.0, a in -1.0f64..=1.0, p in curve_params(4, 1.0)) {
        let img = ImageBuffer::new(2, 1, vec![i, i, i, j, j, j]);
        let out = be_curve(&img, [a; 3]).unwrap();
        prop_assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
        if i <= j {
            prop_assert!(out.data[0] <= out.data[3]);
        }
        let pos = CurveParams::new(p.steps.iter().map(|s| s.map(f64::abs)).collect()).unwrap();
        let t = enhance(&img, &pos).unwrap();
        for w in t.stages.windows(2) {
            prop_assert!(w[1].data.iter().zip(&w[0].data).all(|(n, o)| n >= o));
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences(
        img in image(8, 8),
        reference in image(8, 8),
        p in curve_params(4, 0.9),
        target in 0.0f64..1.0,
        patch in 1u32..9,
    ) {
        let mse = Objective::MseToReference(reference);
        prop_assert!(max_fd_rel_err(&img, &p, &mse) < 1e-5);
        let exp = Objective::ExposureTarget { target, patch };
        prop_assert!(max_fd_rel_err(&img, &p, &exp) < 1e-5);
    }

    #[test]
    fn fitting_never_worsens_mse(img in image(8, 8), reference in image(8, 8)) {
        let fit = fit_params(&img, &Objective::MseToReference(reference), &FitSettings { iters: 20, ..Default::default() }).unwrap();
        prop_assert!(fit.final_loss() <= fit.history[0]);
        prop_assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn fitting_ignores_thread_count() {
    use rainview::pipeline::with_threads;
    let r = ImageBuffer::new(200, 150, midtone(200, 150, 0.7));
    let dim = ImageBuffer::new(200, 150, r.data.iter().map(|v| 0.7 * v).collect());
    let run = |threads, obj: Objective| {
        with_threads(Some(threads), || fit_params(&dim, &obj, &FitSettings { iters: 30, ..Default::default() }).unwrap())
            .unwrap()
    };
    for obj in [Objective::MseToReference(r.clone()), Objective::ExposureTarget { target: 0.6, patch: 16 }] {
        assert_eq!(run(1, obj.clone()), run(5, obj));
    }
}

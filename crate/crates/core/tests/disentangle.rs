use brite::disentangle::*;
use brite::field::{Mask, ScalarField2D};
use brite::phantom::*;

const N: usize = 64;
const SP: (f64, f64) = (2.0, 2.0);

struct Case {
    anatomy: ScalarField2D,
    params: TagParams,
    g_h: ScalarField2D,
    g_v: ScalarField2D,
}

fn case(seed: u64, tp: f64) -> Case {
    let anatomy = gen_oval_anatomy(seed, N, N, SP, &OvalSpec::default()).unwrap();
    let mut params = TagParams::from_period(tp, 0.45, 0.55).unwrap();
    params.phase_h = 1.3;
    params.phase_v = 4.0;
    let id = Motion::Static.frames(1, N, N, SP).unwrap();
    let seq = synthesize_sequence(&anatomy, &params, &FadingParams::preset(FadingPreset::None), &id, &[0.0], 0.0, seed).unwrap();
    Case {
        anatomy,
        params,
        g_h: seq.frames_h[0].clone(),
        g_v: seq.frames_v[0].clone(),
    }
}

fn run(c: &Case, tp_hint: f64) -> DisentangleResult {
    let prior = PixelGridPrior::new(N, N, 1e-3).unwrap();
    disentangle(&c.g_h, &c.g_v, &prior, &init_tag_params(tp_hint).unwrap(), &DisentangleOptions::default()).unwrap()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn foreground(c: &Case, field: &ScalarField2D) -> Vec<f64> {
    let m = Mask::threshold(&c.anatomy, 0.05);
    field.data().iter().zip(m.data()).filter(|(_, &k)| k).map(|(&v, _)| v).collect()
}

fn rmse(a: &ScalarField2D, b: &ScalarField2D) -> f64 {
    (a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn round_trip_recovers_tags_and_anatomy() {
    let c = case(21, 18.0);
    // Hint off by 2% from the true period.
    let r = run(&c, 18.36);
    let rel = (r.params.frequency - c.params.frequency).abs() / c.params.frequency;
    assert!(rel < 0.01, "frequency error {rel}");

    let truth = foreground(&c, &c.anatomy);
    let est = foreground(&c, &r.anatomy);
    let corr = pearson(&truth, &est);
    assert!(corr > 0.95, "correlation {corr}");

    // Amplitude and offset are identified up to the anatomy scale.
    let scale = est.iter().sum::<f64>() / truth.iter().sum::<f64>();
    let (a, b) = (r.params.amplitude * scale, r.params.offset * scale);
    assert!((a - 0.45).abs() < 0.05 * 0.45, "A {a} (raw {})", r.params.amplitude);
    assert!((b - 0.55).abs() < 0.05 * 0.55, "B {b} (raw {})", r.params.offset);
    let ratio = r.params.amplitude / r.params.offset;
    assert!((ratio - 0.45 / 0.55).abs() < 0.05 * 0.45 / 0.55);

    let (rh, rv) = reconstruct_t0(&r).unwrap();
    assert_eq!(rh.shape(), c.g_h.shape());
    assert!(rmse(&rh, &c.g_h) < 0.02 && rmse(&rv, &c.g_v) < 0.02);
}

#[test]
fn loss_trajectory_and_determinism() {
    let c = case(22, 12.0);
    let r = run(&c, 12.0);
    assert_eq!(r.loss_history.len(), DisentangleOptions::default().iterations);
    let mut running = f64::INFINITY;
    for &l in &r.loss_history {
        assert!(l.is_finite());
        let next = running.min(l);
        assert!(next <= running);
        running = next;
    }
    assert_eq!(running, r.final_loss);
    assert!(!r.degenerate);
    assert_eq!(run(&c, 12.0), r);
}

#[test]
fn intensity_gauge() {
    let c = case(23, 12.0);
    let k = 0.6;
    let scaled = Case {
        anatomy: c.anatomy.clone(),
        params: c.params,
        g_h: c.g_h.map(|v| k * v).unwrap(),
        g_v: c.g_v.map(|v| k * v).unwrap(),
    };
    let r1 = run(&c, 12.0);
    let r2 = run(&scaled, 12.0);
    let (h1, v1) = reconstruct_t0(&r1).unwrap();
    let (h2, v2) = reconstruct_t0(&r2).unwrap();
    let h1 = h1.map(|v| k * v).unwrap();
    let v1 = v1.map(|v| k * v).unwrap();
    assert!(rmse(&h1, &h2) < 0.01, "{}", rmse(&h1, &h2));
    assert!(rmse(&v1, &v2) < 0.01);
}

#[test]
fn zero_input_is_degenerate() {
    let z = ScalarField2D::zeros(N, N, SP).unwrap();
    let prior = PixelGridPrior::new(N, N, 1e-3).unwrap();
    let r = disentangle(&z, &z, &prior, &init_tag_params(12.0).unwrap(), &DisentangleOptions::default()).unwrap();
    assert!(r.degenerate);
    assert!(r.anatomy.max_abs() < 0.02, "max anatomy {}", r.anatomy.max_abs());
}

#[test]
fn invalid_inputs() {
    let c = case(24, 12.0);
    let prior = PixelGridPrior::new(N, N, 1e-3).unwrap();
    let init = init_tag_params(12.0).unwrap();
    let small = ScalarField2D::zeros(32, 32, SP).unwrap();
    assert!(disentangle(&c.g_h, &small, &prior, &init, &DisentangleOptions::default()).is_err());
    let small_prior = PixelGridPrior::new(32, 32, 1e-3).unwrap();
    assert!(disentangle(&c.g_h, &c.g_v, &small_prior, &init, &DisentangleOptions::default()).is_err());
    let bad = DisentangleOptions {
        lr_latent: -1.0,
        ..DisentangleOptions::default()
    };
    assert!(disentangle(&c.g_h, &c.g_v, &prior, &init, &bad).is_err());
    assert!(PixelGridPrior::new(N, N, f64::NAN).is_err());
}

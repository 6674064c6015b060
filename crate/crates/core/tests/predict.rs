mod common;

use std::sync::Arc;

use common::oracle::*;
use common::Lcg;
use fracspde::fields::{BasisSpec, FieldParams};
use fracspde::inference::*;
use fracspde::mesh::{build_rect_mesh, Rect, TriMesh};
use fracspde::predict::*;
use fracspde::priors::{derive_hyper, PriorInputs, SpectralPenalty};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn mesh(side: f64) -> Arc<TriMesh> {
    Arc::new(build_rect_mesh(Rect::new(0.0, side, 0.0, side), 0.0, 1.0).unwrap())
}

fn model(mesh: Arc<TriMesh>, class: ModelClass, obs: ObservationSet) -> Model {
    let b = BasisSpec::with_count(4, mesh.interest_rect());
    let pen = SpectralPenalty::new(&b, [2.0, 3.0, 4.0, 4.0]);
    let spec = ModelSpec { class, nu_fixed: 1.0, order: 1, eps: 1e-4, basis: b };
    let mut i = PriorInputs::with_medians(2.0, 1.0, 0.3);
    i.tau_beta = 0.5;
    Model::new(spec, mesh, derive_hyper(&i).unwrap(), Some(pen), obs).unwrap()
}

fn theta(m: &Model, nu: f64, sigma_n2: f64) -> Vec<f64> {
    let mut f = FieldParams::stationary(1.1, 0.9, 0.2, -0.1, nu, 4);
    if m.layout.n_basis > 0 {
        f.alpha_kappa = vec![0.1, -0.2, 0.05, 0.1];
        f.alpha_vx = vec![0.2, 0.0, -0.1, 0.1];
    }
    m.encode(&NaturalParams { fields: f, sigma_n2 }).unwrap()
}

fn random_points(r: Rect, n: usize, rng: &mut Lcg) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.range(r.x0, r.x1), rng.range(r.y0, r.y1)]).collect()
}

#[test]
fn crps_at_zero_residual() {
    let v = crps_gaussian(0.0, 1.0, 0.0).unwrap();
    assert!((v - 0.23370).abs() < 1e-5, "{v}");
    assert!(crps_gaussian(0.0, 0.0, 1.0).is_err());
    assert!(crps_gaussian(0.0, -1.0, 1.0).is_err());
}

#[test]
fn crps_matches_quadrature() {
    let mut rng = Lcg::new(99);
    for _ in 0..100 {
        let (m, s) = (rng.range(-3.0, 3.0), rng.range(0.1, 3.0));
        let y = m + s * rng.range(-4.0, 4.0);
        let a = crps_gaussian(m, s, y).unwrap();
        let b = crps_by_quadrature(m, s, y);
        assert!((a - b).abs() < 1e-6, "({m}, {s}, {y}): {a} vs {b}");
    }
}

proptest! {
    #[test]
    fn crps_homogeneous(m in -5.0f64..5.0, s in 0.01f64..5.0, d in -10.0f64..10.0, c in 0.01f64..20.0) {
        let a = crps_gaussian(m, c * s, m + c * d).unwrap();
        let b = c * crps_gaussian(m, s, m + d).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn crps_envelope(m in -5.0f64..5.0, s in 0.01f64..5.0, y in -10.0f64..10.0) {
        let v = crps_gaussian(m, s, y).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(v <= (y - m).abs() + s);
    }
}

fn prediction(mean: Vec<f64>, sd: Vec<f64>) -> Prediction {
    Prediction { locations: vec![[0.0, 0.0]; mean.len()], mean, sd, scale: Scale::Latent }
}

#[test]
fn score_set_basic_cases() {
    let truth = vec![0.3, -1.0, 2.0];
    let s = score_set(&prediction(truth.clone(), vec![1.0; 3]), &truth).unwrap();
    assert_eq!(s.rmse, 0.0);
    let s = score_set(&prediction(truth.iter().map(|t| t + 0.7).collect(), vec![0.4, 2.0, 1.0]), &truth).unwrap();
    assert!((s.rmse - 0.7).abs() < 1e-14);
    assert!(score_set(&prediction(vec![0.0; 2], vec![1.0; 2]), &truth).is_err());
}

#[test]
fn score_set_matches_two_pass() {
    let mut rng = Lcg::new(4);
    let n = 500;
    let mean: Vec<f64> = (0..n).map(|_| rng.range(-2.0, 2.0)).collect();
    let sd: Vec<f64> = (0..n).map(|_| rng.range(0.1, 2.0)).collect();
    let truth: Vec<f64> = (0..n).map(|_| rng.range(-3.0, 3.0)).collect();
    let got = score_set(&prediction(mean.clone(), sd.clone()), &truth).unwrap();
    let errs: Vec<f64> = mean.iter().zip(&truth).map(|(m, t)| (m - t) * (m - t)).collect();
    let rmse = (errs.iter().sum::<f64>() / n as f64).sqrt();
    let crps: Vec<f64> = (0..n)
        .map(|i| {
            let z = (truth[i] - mean[i]) / sd[i];
            let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let cdf = statrs::distribution::ContinuousCDF::cdf(&statrs::distribution::Normal::new(0.0, 1.0).unwrap(), z);
            sd[i] * (z * (2.0 * cdf - 1.0) + 2.0 * phi - 1.0 / std::f64::consts::PI.sqrt())
        })
        .collect();
    let crps = crps.iter().sum::<f64>() / n as f64;
    assert!((got.rmse - rmse).abs() < 1e-12);
    assert!((got.crps - crps).abs() < 1e-12);
}

#[test]
fn near_interpolation_at_observed_vertex() {
    let m0 = mesh(4.0);
    let v = 12;
    let p = m0.vertices()[v];
    let obs = ObservationSet::simple(vec![p, [0.5, 3.2]], vec![1.7, -0.4]).unwrap();
    let m = model(m0, ModelClass::NfS, obs);
    let th = theta(&m, 1.0, 1e-10);
    let post = m.conditional_moments(&th).unwrap();
    let pred = predict(&m, &post, 0, &[p], None, Scale::Latent).unwrap();
    assert!((pred.mean[0] - 1.7).abs() < 1e-4);
    assert!(pred.sd[0] < 1e-3);
}

#[test]
fn no_data_gives_prior_marginals() {
    let m0 = mesh(5.0);
    let m = model(m0.clone(), ModelClass::FS, ObservationSet::empty());
    let th = theta(&m, 0.6, 0.2);
    let post = m.conditional_moments(&th).unwrap();
    let verts: Vec<[f64; 2]> = [3, 8, 20].iter().map(|&i| m0.vertices()[i]).collect();
    let pred = predict(&m, &post, 0, &verts, None, Scale::Latent).unwrap();
    let pr = post.p_r.to_dense();
    let cov = &pr * post.q_tilde.to_dense().try_inverse().unwrap() * pr.transpose();
    for (k, &i) in [3, 8, 20].iter().enumerate() {
        assert_eq!(pred.mean[k], 0.0);
        assert!((pred.sd[k].powi(2) - cov[(i, i)]).abs() < 1e-10 * cov[(i, i)]);
    }
    let obs = predict(&m, &post, 0, &verts, None, Scale::Observation).unwrap();
    for k in 0..3 {
        assert!(((obs.sd[k].powi(2) - pred.sd[k].powi(2)) - 0.2).abs() < 1e-12);
    }
}

#[test]
fn matches_dense_oracle() {
    let m0 = mesh(2.0);
    assert_eq!(m0.n_vertices(), 9);
    let mut rng = Lcg::new(21);
    let r = m0.interest_rect();
    for (class, covariates, nu) in [(ModelClass::NfS, false, 1.0), (ModelClass::FNs, true, 0.7), (ModelClass::FS, false, 1.5)] {
        let locs = random_points(r, 6, &mut rng);
        let vals: Vec<f64> = (0..6).map(|_| rng.range(-1.0, 1.0)).collect();
        let design = covariates.then(|| DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { locs[i][1] }));
        let obs = ObservationSet::new(locs, vals, design, None).unwrap();
        let m = model(m0.clone(), class, obs);
        let th = theta(&m, nu, 0.3);
        let post = m.conditional_moments(&th).unwrap();
        let new = random_points(r, 7, &mut rng);
        let dnew = covariates.then(|| DMatrix::from_fn(7, 2, |i, j| if j == 0 { 1.0 } else { new[i][1] }));
        let pred = predict(&m, &post, 0, &new, dnew.as_ref(), Scale::Latent).unwrap();
        let (mean, var) = dense_prediction(&m, &post, &new, dnew.as_ref());
        for i in 0..7 {
            assert!((pred.mean[i] - mean[i]).abs() < 1e-8 * mean.amax().max(1.0), "{class:?} mean {i}");
            assert!((pred.sd[i].powi(2) - var[i]).abs() < 1e-8 * var[i], "{class:?} var {i}");
        }
    }
}

#[test]
fn variance_shrinks_with_more_observations() {
    let m0 = mesh(6.0);
    let r = m0.interest_rect();
    let mut rng = Lcg::new(31);
    let locs = random_points(r, 40, &mut rng);
    let vals: Vec<f64> = (0..40).map(|_| rng.range(-1.0, 1.0)).collect();
    let targets = random_points(r, 25, &mut rng);
    let mut prev: Option<Vec<f64>> = None;
    for n in [0, 5, 10, 20, 40] {
        let obs = ObservationSet::simple(locs[..n].to_vec(), vals[..n].to_vec()).unwrap();
        let m = model(m0.clone(), ModelClass::FNs, obs);
        let th = theta(&m, 0.8, 0.25);
        let post = m.conditional_moments(&th).unwrap();
        let sd = predict(&m, &post, 0, &targets, None, Scale::Latent).unwrap().sd;
        let obs_sd = predict(&m, &post, 0, &targets, None, Scale::Observation).unwrap().sd;
        for (a, b) in sd.iter().zip(&obs_sd) {
            assert!(*a > 0.0 && b >= a);
        }
        if let Some(p) = prev {
            for (a, b) in sd.iter().zip(&p) {
                assert!(*a <= b * (1.0 + 1e-12), "n = {n}: {a} > {b}");
            }
        }
        prev = Some(sd);
    }
}

#[test]
fn rejects_bad_inputs() {
    let m0 = mesh(3.0);
    let obs = ObservationSet::new(vec![[1.0, 1.0]], vec![0.2], Some(DMatrix::from_element(1, 1, 1.0)), None).unwrap();
    let m = model(m0, ModelClass::NfS, obs);
    let post = m.conditional_moments(&theta(&m, 1.0, 0.1)).unwrap();
    assert!(predict(&m, &post, 0, &[[1.0, 1.0]], None, Scale::Latent).is_err());
    let d = DMatrix::from_element(1, 1, 1.0);
    assert!(predict(&m, &post, 0, &[[10.0, 1.0]], Some(&d), Scale::Latent).is_err());
    assert!(predict(&m, &post, 3, &[[1.0, 1.0]], Some(&d), Scale::Latent).is_err());
}

#[test]
fn csv_round_trip() {
    let p = Prediction { locations: vec![[0.5, 1.5], [2.0, 3.0]], mean: vec![0.1, -0.2], sd: vec![1.0, 0.5], scale: Scale::Observation };
    let dir = std::env::temp_dir().join(format!("pred_rt_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("p.csv");
    p.write_csv(&f).unwrap();
    let text = std::fs::read_to_string(&f).unwrap();
    assert!(text.starts_with("x,y,mean,sd,scale\n"));
    assert_eq!(Prediction::read_csv(&f).unwrap(), p);
    std::fs::remove_dir_all(dir).unwrap();
}

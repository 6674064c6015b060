mod common;

use common::Lcg;
use fracspde::fields::*;
use fracspde::mesh::Rect;
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

fn rect() -> Rect {
    Rect::new(1.0, 4.0, -2.0, 3.0)
}

#[test]
fn basis_point_values() {
    let r = rect();
    let spec = BasisSpec::grid(2, 2, r);
    assert_eq!(spec.len(), 8);
    let scale = (r.width() * r.height()).sqrt();
    let f = spec.eval_point([r.x0, 0.7]);
    let i10 = spec.modes.iter().position(|&m| m == (1, 0)).unwrap();
    assert!((f[i10] - 2f64.sqrt() / scale).abs() < 1e-14);
    let f = spec.eval_point([(r.x0 + r.x1) / 2.0, (r.y0 + r.y1) / 2.0]);
    let i11 = spec.modes.iter().position(|&m| m == (1, 1)).unwrap();
    assert!(f[i11].abs() < 1e-14);
}

#[test]
fn basis_orthonormal_by_quadrature() {
    let r = rect();
    let spec = BasisSpec::grid(3, 3, r);
    let n = 200;
    let (dx, dy) = (r.width() / n as f64, r.height() / n as f64);
    let mut gram = vec![vec![0.0; spec.len()]; spec.len()];
    for i in 0..n {
        for j in 0..n {
            let p = [r.x0 + (i as f64 + 0.5) * dx, r.y0 + (j as f64 + 0.5) * dy];
            let f = spec.eval_point(p);
            for a in 0..f.len() {
                for b in 0..f.len() {
                    gram[a][b] += f[a] * f[b] * dx * dy;
                }
            }
        }
    }
    for a in 0..spec.len() {
        for b in 0..spec.len() {
            let expect = if a == b { 1.0 } else { 0.0 };
            assert!((gram[a][b] - expect).abs() < 1e-3, "({a},{b}) = {}", gram[a][b]);
        }
    }
}

#[test]
fn basis_clamps_outside_rect() {
    let r = rect();
    let spec = BasisSpec::grid(2, 1, r);
    assert_eq!(spec.eval_point([r.x0 - 5.0, r.y1 + 2.0]), spec.eval_point([r.x0, r.y1]));
}

#[test]
fn zero_coefficients_are_stationary() {
    let r = rect();
    let spec = BasisSpec::grid(2, 2, r);
    let p = FieldParams::stationary(0.3, 1.7, 0.2, -0.1, 0.5, spec.len());
    for v in field_values(&p, &spec, &[[1.5, 0.0], [3.9, 2.9], [-10.0, 7.0]]).unwrap() {
        assert_eq!(v.kappa, p.log_kappa0.exp());
        assert_eq!(v.sigma, p.log_sigma0.exp());
        assert_eq!((v.vx, v.vy), (0.2, -0.1));
    }
}

#[test]
fn single_cosine_ridge() {
    let r = rect();
    let spec = BasisSpec::grid(1, 0, r);
    let mut p = FieldParams::stationary(1.0, 1.0, 0.0, 0.0, 0.5, spec.len());
    let c = 0.4;
    p.alpha_kappa[0] = c;
    let v = field_values(&p, &spec, &[[r.x0, 0.0], [r.x1, 0.0]]).unwrap();
    let diff = v[0].kappa.ln() - v[1].kappa.ln();
    let expect = 2.0 * c * 2f64.sqrt() / (r.width() * r.height()).sqrt();
    assert!((diff - expect).abs() < 1e-12);
}

#[test]
fn length_mismatch_rejected() {
    let spec = BasisSpec::grid(1, 1, rect());
    let p = FieldParams::stationary(1.0, 1.0, 0.0, 0.0, 0.5, 2);
    assert!(field_values(&p, &spec, &[[2.0, 0.0]]).is_err());
}

#[test]
fn fields_positive_for_random_draws() {
    let r = rect();
    let spec = BasisSpec::grid(2, 2, r);
    let mut rng = Lcg::new(7);
    for _ in 0..10_000 {
        let mut p = FieldParams::stationary(rng.range(0.01, 10.0), rng.range(0.01, 10.0), 0.0, 0.0, 0.5, spec.len());
        for a in p.alpha_kappa.iter_mut().chain(p.alpha_sigma.iter_mut()) {
            *a = rng.range(-5.0, 5.0);
        }
        let pt = [rng.range(r.x0, r.x1), rng.range(r.y0, r.y1)];
        let v = field_values(&p, &spec, &[pt]).unwrap()[0];
        assert!(v.kappa > 0.0 && v.sigma > 0.0);
    }
}

#[test]
fn h_known_values() {
    let h = h_from_v(0.0, 0.0);
    assert_eq!((h.h11, h.h12, h.h22), (1.0, 0.0, 1.0));
    let h = h_from_v(2f64.ln(), 0.0);
    assert!((h.h11 - 2.0).abs() < 1e-14 && h.h12.abs() < 1e-14 && (h.h22 - 0.5).abs() < 1e-14);
}

#[test]
fn h_continuous_at_origin() {
    for eps in [1e-3, 1e-5, 1e-8] {
        for ang in [0.0f64, 0.7, 2.0, 4.0] {
            let h = h_from_v(eps * ang.cos(), eps * ang.sin());
            let d = (h.to_matrix() - nalgebra::Matrix2::identity()).norm();
            assert!(d <= 2.0 * eps, "eps={eps} dist={d}");
        }
    }
}

#[test]
fn tau_reference_values() {
    assert!((tau(1.0, 1.0, 1.0, 1.0) - (4.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    let (sigma0, kappa0) = (1.3, 0.4);
    let t = tau(1.0, sigma0, kappa0, 1.0);
    assert!((sigma_from_tau(1.0, t, kappa0, 1.0) - sigma0).abs() < 1e-12);
}

#[test]
fn tau_matches_gamma_functions() {
    let mut rng = Lcg::new(3);
    for _ in 0..1000 {
        let (beta, sigma, kappa) = (rng.range(0.55, 1.95), rng.range(0.1, 5.0), rng.range(0.05, 3.0));
        let g = (ln_gamma(2.0 * beta) - ln_gamma(2.0 * beta - 1.0)).exp();
        let expect = sigma * (4.0 * std::f64::consts::PI * g).sqrt() * kappa.powf(2.0 * beta - 1.0);
        let got = tau(beta, sigma, kappa, 1.0);
        assert!((got - expect).abs() < 1e-12 * expect.max(1.0), "{got} vs {expect}");
    }
}

#[test]
fn interpretable_reference_values() {
    let p = interpretable(0.5, 0.2, 0.0, 0.0);
    assert!((p.rho - 10.0).abs() < 1e-12);
    let p = interpretable(0.5, 1.0, 2f64.ln(), 0.0);
    assert!((p.a - 2.0).abs() < 1e-14 && p.psi == 0.0);
    assert!(from_interpretable(Interpretable { rho: 1.0, a: 0.9, psi: 0.0 }, 0.5).is_err());
}

#[test]
fn interpretable_round_trip() {
    let mut rng = Lcg::new(11);
    for _ in 0..1000 {
        let p = Interpretable {
            rho: rng.range(0.5, 50.0),
            a: rng.range(1.01, 10.0),
            psi: rng.range(-std::f64::consts::FRAC_PI_2 + 1e-6, std::f64::consts::FRAC_PI_2),
        };
        let nu = rng.range(0.1, 2.9);
        let (kappa, vx, vy) = from_interpretable(p, nu).unwrap();
        let q = interpretable(nu, kappa, vx, vy);
        assert!((q.rho - p.rho).abs() < 1e-12 * p.rho);
        assert!((q.a - p.a).abs() < 1e-12 * p.a);
        assert!((q.psi - p.psi).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn h_unit_determinant_and_eigenvalues(vx in -3.0f64..3.0, vy in -3.0f64..3.0) {
        let h = h_from_v(vx, vy);
        prop_assert!((h.det() - 1.0).abs() < 1e-12 * (h.h11.abs() + h.h22.abs()).powi(2).max(1.0));
        let n = vx.hypot(vy);
        let eig = h.to_matrix().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        prop_assert!((hi - n.exp()).abs() < 1e-12 * n.exp());
        prop_assert!((lo - (-n).exp()).abs() < 1e-12 * n.exp());
    }

    #[test]
    fn h_jacobian_matches_fd(vx in -2.0f64..2.0, vy in -2.0f64..2.0) {
        let (_, j) = h_with_jacobian(vx, vy);
        let d = 1e-6;
        let comps = |h: AnisoTensor| [h.h11, h.h12, h.h22];
        let px = comps(h_from_v(vx + d, vy));
        let mx = comps(h_from_v(vx - d, vy));
        let py = comps(h_from_v(vx, vy + d));
        let my = comps(h_from_v(vx, vy - d));
        for r in 0..3 {
            prop_assert!(((px[r] - mx[r]) / (2.0 * d) - j[r][0]).abs() < 1e-6 * (1.0 + j[r][0].abs()));
            prop_assert!(((py[r] - my[r]) / (2.0 * d) - j[r][1]).abs() < 1e-6 * (1.0 + j[r][1].abs()));
        }
    }
}

mod common;

use common::{gaussians, random_directions, rng, unit};
use mfl_core::activation::SphereActivation;
use mfl_core::diagnostics::{
    estimate_k, excess_risk_from_predictions, fit_decay_rate, lsi_bound_euclidean, lsi_bound_sphere,
    oscillation_bound, second_moment_norm, subspace_alignment, sphere_schedule, LsiBound,
};
use mfl_core::loss::Loss;
use mfl_core::net::{ParticleEnsemble, Space};
use mfl_core::tasks::{Dataset, NoiseLaw};
use proptest::prelude::*;

/// `Ê|φ''(⟨w,x⟩)⟨v,x⟩² − φ'(⟨w,x⟩)⟨w,x⟩|` written out directly.
fn curvature(data: &Dataset, w: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..data.n {
        let x = data.input(i);
        let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        let vx: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
        let t = z.tanh();
        let d1 = 1.0 - t * t;
        let d2 = -2.0 * t * d1;
        s += (d2 * vx * vx - d1 * z).abs();
    }
    s / data.n as f64
}

#[test]
fn random_probes_approach_the_grid_maximum() {
    let mut r = rng(17);
    for trial in 0..3 {
        let data = Dataset::from_parts(3, gaussians(&mut r, 6), vec![0.0; 2], 0.0, 0, 0).unwrap();
        // 1° grid over w ∈ S², and over the unit circle of tangents at w.
        let deg = std::f64::consts::PI / 180.0;
        let mut best: f64 = 0.0;
        for a in 0..=180 {
            let th = a as f64 * deg;
            for b in 0..360 {
                let ph = b as f64 * deg;
                let w = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                let e1 = [th.cos() * ph.cos(), th.cos() * ph.sin(), -th.sin()];
                let e2 = [-ph.sin(), ph.cos(), 0.0];
                for c in 0..180 {
                    let ps = c as f64 * deg;
                    let v: Vec<f64> = (0..3).map(|i| ps.cos() * e1[i] + ps.sin() * e2[i]).collect();
                    best = best.max(curvature(&data, &w, &v));
                }
            }
        }
        let est = estimate_k(&data, &SphereActivation::Tanh, 10_000, trial).unwrap();
        assert!(est.estimate <= best * (1.0 + 1e-3), "probe {} beat grid {}", est.estimate, best);
        assert!(est.estimate >= 0.95 * best, "probe {} grid {}", est.estimate, best);
        assert!(est.estimate <= est.upper);
    }
}

#[test]
fn k_upper_has_the_remark_scale() {
    let mut r = rng(3);
    for d in [3usize, 8, 20] {
        let n = 10 * d;
        let data = Dataset::from_parts(d, gaussians(&mut r, n * d), vec![0.0; n], 0.0, 0, 0).unwrap();
        let est = estimate_k(&data, &SphereActivation::Tanh, 500, 1).unwrap();
        let s = second_moment_norm(&data).unwrap();
        assert!(est.estimate <= est.upper);
        assert!(est.upper <= 2.0 * s.sqrt() + s);
    }
}

#[test]
fn orthogonal_probe_contributes_nothing() {
    let data = Dataset::from_parts(3, vec![0.0, 0.0, 1.0], vec![0.0], 0.0, 0, 0).unwrap();
    let v = mfl_core::diagnostics::probe_curvature(&data, &SphereActivation::Linear, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
    assert_eq!(v, 0.0);
}

#[test]
fn half_predictor_excess_risk_is_one_eighth() {
    let mut r = rng(8);
    let (d, n) = (5, 1_000_000);
    let u = unit(&mut r, d);
    let x = gaussians(&mut r, n * d);
    let y: Vec<f64> = x.chunks(d).map(|row| row.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
    let preds: Vec<f64> = y.iter().map(|v| v / 2.0).collect();
    let ex = excess_risk_from_predictions(&preds, &y, &Loss::Squared, 0.0, NoiseLaw::Gaussian).unwrap();
    assert!((ex.value - 0.125).abs() <= 3.0 * ex.stderr, "{} ± {}", ex.value, ex.stderr);
}

#[test]
fn perfect_and_null_predictors() {
    let y = [1.0, -1.0, 1.0, 1.0];
    let ex = excess_risk_from_predictions(&y, &y, &Loss::PseudoHuber { delta: 1.0 }, 0.0, NoiseLaw::Gaussian).unwrap();
    assert_eq!(ex.value, 0.0);
    let ex = excess_risk_from_predictions(&[0.0; 4], &y, &Loss::Squared, 0.0, NoiseLaw::Gaussian).unwrap();
    assert_eq!(ex.value, 0.5);
}

fn sphere_ens(rows: &[Vec<f64>]) -> ParticleEnsemble {
    ParticleEnsemble::from_weights(Space::Sphere, rows[0].len(), rows.len(), rows.concat()).unwrap()
}

#[test]
fn alignment_extremes_and_isotropic_mean() {
    let u = mfl_core::linalg::Mat::from_rows(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
    assert_eq!(subspace_alignment(&sphere_ens(&[vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]]), &u).unwrap(), 1.0);
    assert_eq!(subspace_alignment(&sphere_ens(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.6, 0.8]]), &u).unwrap(), 0.0);

    let mut r = rng(12);
    let (d, k, m) = (12usize, 3usize, 10_000usize);
    let dirs = random_directions(&mut r, k, d);
    let w = gaussians(&mut r, m * 2 * (d + 1));
    let ens = ParticleEnsemble::from_weights(Space::Euclidean, d, m, w).unwrap();
    let got = subspace_alignment(&ens, &dirs).unwrap();
    // Beta(k/2, (d-k)/2) has variance p(1-p)/(d/2+1); norm weights add ~20%.
    let p = k as f64 / d as f64;
    let se = (p * (1.0 - p) / (d as f64 / 2.0 + 1.0) / m as f64).sqrt();
    assert!((got - p).abs() <= 3.0 * se * 1.2, "{got} vs {p} ({se})");
}

#[test]
fn oscillation_of_linear_functions() {
    let mut r = rng(6);
    let constant = |_: &[f64]| 3.0;
    assert_eq!(oscillation_bound(&constant, 5, 1000, 0), 0.0);
    for d in [2usize, 5, 10] {
        let a: Vec<f64> = gaussians(&mut r, d);
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let f = |w: &[f64]| w.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>();
        let g = |w: &[f64]| 7.5 + f(w);
        let est = oscillation_bound(&f, d, 1_000_000, 9);
        assert!(est <= 2.0 * na * (1.0 + 1e-12));
        assert!(est >= 0.95 * 2.0 * na, "d={d}: {est} vs {}", 2.0 * na);
        assert!((oscillation_bound(&g, d, 1000, 9) - oscillation_bound(&f, d, 1000, 9)).abs() < 1e-12);
    }
}

#[test]
fn constant_trace_has_no_rate() {
    let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
    let fit = fit_decay_rate(&t, &[2.0; 50], 0, None).unwrap();
    assert_eq!(fit.rate, 0.0);
    assert!(fit.low_confidence);
}

#[test]
fn bound_reference_values() {
    let e4 = lsi_bound_euclidean(1.0, 1.0, 1.0, 1.0).value().unwrap();
    assert!((e4 - 4f64.exp()).abs() <= 1e-12 * e4);
    let e16 = lsi_bound_euclidean(2.0, 0.5, 2.0, 1.0).value().unwrap();
    assert!((e16 / 16f64.exp() - 1.0).abs() <= 1e-12);
    let s = lsi_bound_sphere(100.0, 1.0, 10.0, 1.0, 1.0).value().unwrap();
    assert!((s - 1.0 / 90.0).abs() <= 1e-15);
    assert_eq!(lsi_bound_sphere(100.0, 1.0, 100.0, 1.0, 1.0), LsiBound::Infeasible);
    // Planner-scale temperatures overflow; the log stays exact.
    match lsi_bound_euclidean(5000.0, 1e-3, 4.0, 1.0) {
        LsiBound::Overflow { ln_value } => assert!((ln_value - (80_000.0 - 5f64.ln())).abs() < 1e-9),
        other => panic!("{other:?}"),
    }
}

#[test]
fn scheduled_bound_is_two_over_rho_d() {
    for (db, eps, rho, c, k) in [(10.0, 0.1, 1.0, 1.0, 1.0), (3.0, 0.2, 0.5, 1.0, 2.5), (1.0, 0.05, 0.9, 0.5, 0.7)] {
        let sch = sphere_schedule(db, eps, rho, c, k, std::f64::consts::E * eps).unwrap();
        let d = sch.d_min as f64;
        let b = lsi_bound_sphere(d, rho, sch.beta, c, k).value().unwrap();
        assert!(b <= 2.0 / (rho * d) * (1.0 + 1e-12), "{b} vs {}", 2.0 / (rho * d));
    }
    let sch = sphere_schedule(10.0, 0.1, 1.0, 1.0, 1.0, std::f64::consts::E * 0.1).unwrap();
    assert_eq!(sch.beta, 100.0);
    assert_eq!(sch.d_min, 200);
    assert!((sch.t_bound - 0.5).abs() < 1e-12);
}

proptest! {
    #[test]
    fn sphere_bound_shrinks_with_dimension(d in 2.0f64..1e4, step in 1.0f64..100.0, beta in 0.0f64..5.0, k in 0.1f64..3.0) {
        let rho = 0.8;
        let a = lsi_bound_sphere(d, rho, beta, 1.0, k);
        let b = lsi_bound_sphere(d + step, rho, beta, 1.0, k);
        if let (Some(x), Some(y)) = (a.value(), b.value()) {
            prop_assert!(y < x);
        }
        if a.value().is_some() {
            prop_assert!(b.value().is_some());
        }
    }

    #[test]
    fn euclidean_bound_grows_with_iota_and_shrinks_with_lambda(beta in 0.1f64..50.0, lambda in 1e-3f64..1.0, iota in 0.5f64..4.0) {
        let base = lsi_bound_euclidean(beta, lambda, iota, 1.0).ln_value().unwrap();
        prop_assert!(lsi_bound_euclidean(beta, lambda, iota * 1.1, 1.0).ln_value().unwrap() > base);
        prop_assert!(lsi_bound_euclidean(beta, lambda * 1.1, iota, 1.0).ln_value().unwrap() < base);
    }
}

//! Risk and alignment measurements, LSI-bound calculators, curvature
//! estimation, the sphere schedule, and decay-rate fitting.
//!
//! The objective traces only carry the energy part of the free energy; the
//! entropy term is not estimated, so [`fit_decay_rate`] reports a surrogate.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::activation::SphereActivation;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, orthonormalize_rows, top_eigenvalue, Mat};
use crate::loss::Loss;
use crate::math::{asinh, ceil, exp, ln, round, sqrt};
use crate::net::{predictions, Activation, ParticleEnsemble, Space};
use crate::rng::{fill_normal, fill_uniform_sphere, stream, Domain};
use crate::sphere::riemannian_hessian_quadform;
use crate::tasks::{Dataset, NoiseLaw};

/// Largest finite `ln` value of an `f64`.
const LN_MAX: f64 = 709.782712893384;

/// An LSI constant bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LsiBound {
    Finite { value: f64, ln_value: f64 },
    /// Too large for an `f64`; only the logarithm is meaningful.
    Overflow { ln_value: f64 },
    /// The bound's precondition fails.
    Infeasible,
}

impl LsiBound {
    pub fn value(&self) -> Option<f64> {
        match *self {
            LsiBound::Finite { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn ln_value(&self) -> Option<f64> {
        match *self {
            LsiBound::Finite { ln_value, .. } | LsiBound::Overflow { ln_value } => Some(ln_value),
            LsiBound::Infeasible => None,
        }
    }
}

/// `C_LSI ≤ exp(4 C_ρ ι β) / (β λ)`
pub fn lsi_bound_euclidean(beta: f64, lambda: f64, iota: f64, c_rho: f64) -> LsiBound {
    let expo = 4.0 * c_rho * iota * beta;
    let ln_value = expo - ln(beta * lambda);
    if ln_value > LN_MAX || !expo.is_finite() {
        LsiBound::Overflow { ln_value }
    } else {
        LsiBound::Finite { value: exp(expo) / (beta * lambda), ln_value }
    }
}

/// `C_LSI ≤ 1/(ϱ d − β C_ρ K)` when `β < ϱ d / (C_ρ K)`.
pub fn lsi_bound_sphere(d: f64, rho: f64, beta: f64, c_rho: f64, k: f64) -> LsiBound {
    let gap = rho * d - beta * c_rho * k;
    if !(gap > 0.0) {
        return LsiBound::Infeasible;
    }
    LsiBound::Finite { value: 1.0 / gap, ln_value: -ln(gap) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSchedule {
    pub beta: f64,
    pub d_min: u64,
    /// Time horizon at `d = d_min`.
    pub t_bound: f64,
    /// Sphere LSI bound at `(β, d_min)`.
    pub c_lsi: LsiBound,
}

/// `β = Δ̄/ε`, `d_min = ⌈2 C_ρ K Δ̄/(ϱ ε)⌉`, `T = Δ̄/(ε ϱ d_min) · ln(F₀/ε)`.
pub fn sphere_schedule(delta_bar: f64, epsilon: f64, rho: f64, c_rho: f64, k: f64, f0: f64) -> Result<SphereSchedule> {
    for (name, v) in [("delta_bar", delta_bar), ("epsilon", epsilon), ("rho", rho), ("c_rho", c_rho), ("k", k)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, "must be positive and finite"));
        }
    }
    if !(f0 > epsilon) {
        return Err(Error::ObjectiveBelowTarget { f0, epsilon });
    }
    let beta = delta_bar / epsilon;
    let raw = 2.0 * c_rho * k * delta_bar / (rho * epsilon);
    // arithmetic noise must not push an integral value up by one
    let r = round(raw);
    let d_min = if (raw - r).abs() <= 1e-12 * r.max(1.0) { r } else { ceil(raw) };
    let d_min = d_min.max(1.0);
    let t_bound = delta_bar / (epsilon * rho * d_min) * ln(f0 / epsilon);
    Ok(SphereSchedule { beta, d_min: d_min as u64, t_bound, c_lsi: lsi_bound_sphere(d_min, rho, beta, c_rho, k) })
}

/// Fraction of samples where `sign(ŷ) ≠ sign(y)`, with `sign(0) = +1`.
pub fn classification_error(preds: &[f64], labels: &[f64]) -> f64 {
    let wrong = preds.iter().zip(labels).filter(|(p, y)| (**p >= 0.0) != (**y >= 0.0)).count();
    wrong as f64 / preds.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessRisk {
    pub value: f64,
    pub stderr: f64,
    /// `E ρ(ξ)` subtracted from the mean test loss.
    pub baseline: f64,
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // split first so the recursion never sees a symmetric coincidence
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// `E ρ(ξ)` for label noise of standard deviation `ς`.
pub fn noise_baseline(loss: &Loss, noise_std: f64, law: NoiseLaw) -> f64 {
    if noise_std == 0.0 {
        return 0.0;
    }
    match (*loss, law) {
        (Loss::Squared, _) => 0.5 * noise_std * noise_std,
        (Loss::PseudoHuber { delta }, NoiseLaw::Uniform) => {
            // mean of δ²(√(1+r²) − 1) for r uniform on [0, a/δ]
            let r = sqrt(3.0) * noise_std / delta;
            let s = sqrt(1.0 + r * r);
            delta * delta * ((r * s + asinh(r)) / (2.0 * r) - 1.0)
        }
        (Loss::PseudoHuber { .. }, NoiseLaw::Gaussian) => {
            let c = 1.0 / sqrt(2.0 * core::f64::consts::PI);
            let f = |u: f64| loss.value(noise_std * u) * c * exp(-0.5 * u * u);
            integrate(&f, -40.0, 40.0, 1e-12)
        }
    }
}

/// Excess risk from precomputed test predictions.
pub fn excess_risk_from_predictions(
    preds: &[f64],
    labels: &[f64],
    loss: &Loss,
    noise_std: f64,
    law: NoiseLaw,
) -> Result<ExcessRisk> {
    let n = preds.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let losses: Vec<f64> = preds.iter().zip(labels).map(|(p, y)| loss.value(y - p)).collect();
    let mean = losses.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let baseline = noise_baseline(loss, noise_std, law);
    Ok(ExcessRisk { value: mean - baseline, stderr: sqrt(var / n as f64), baseline })
}

/// `E ρ(y − ŷ(x)) − E ρ(ξ)` on a held-out set.
pub fn excess_risk(
    ens: &ParticleEnsemble,
    act: &Activation,
    test: &Dataset,
    loss: &Loss,
    noise_std: f64,
    law: NoiseLaw,
) -> Result<ExcessRisk> {
    if test.n == 0 {
        return Err(Error::EmptyDataset);
    }
    let p = predictions(ens, act, test)?;
    excess_risk_from_predictions(&p, &test.labels, loss, noise_std, law)
}

/// Norm-weighted mean of `‖P_U v_j‖² / ‖v_j‖²`, where `v_j` is the input
/// part of `ω₁ − ω₂` (Euclidean) or the particle itself (sphere).
pub fn subspace_alignment(ens: &ParticleEnsemble, u: &Mat) -> Result<f64> {
    let d = ens.dim();
    if u.cols != d {
        return Err(Error::DimensionMismatch { expected: d, found: u.cols });
    }
    let q = orthonormalize_rows(u)?;
    let mut v = vec![0.0; d];
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..ens.len() {
        let w = ens.particle(j);
        match ens.space() {
            Space::Euclidean => {
                for c in 0..d {
                    v[c] = w[c] - w[d + 1 + c];
                }
            }
            Space::Sphere => v.copy_from_slice(w),
        }
        let nv = norm(&v);
        if nv <= 1e-12 {
            continue;
        }
        let proj: f64 = (0..q.rows).map(|i| dot(q.row(i), &v)).map(|c| c * c).sum();
        num += nv * (proj / (nv * nv)).min(1.0);
        den += nv;
    }
    if den == 0.0 {
        return Err(Error::AllDegenerate);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub estimate: f64,
    pub upper: f64,
    /// `‖Σ̂‖` of the empirical second-moment matrix.
    pub sigma_hat_norm: f64,
}

/// `Ê|⟨v, ∇²_w Ψ(x; w) v⟩|` for one probe.
pub fn probe_curvature(data: &Dataset, phi: &SphereActivation, w: &[f64], v: &[f64]) -> f64 {
    let s: f64 = (0..data.n).map(|i| riemannian_hessian_quadform(w, v, data.input(i), phi).abs()).sum();
    s / data.n as f64
}

/// `‖(1/n) Σ x xᵀ‖`
pub fn second_moment_norm(data: &Dataset) -> Result<f64> {
    if data.n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = data.d;
    let mut m = Mat::zeros(d, d);
    crate::linalg::gemm(d, data.n, d, 1.0 / data.n as f64, &data.inputs, (1, d), &data.inputs, (d, 1), 0.0, &mut m.data, (d, 1));
    Ok(top_eigenvalue(&m).max(0.0))
}

/// `|φ''|∞ ‖Σ̂‖ + |φ'|∞ ‖Σ̂‖^{1/2}`
pub fn k_upper(data: &Dataset, phi: &SphereActivation) -> Result<f64> {
    let s = second_moment_norm(data)?;
    Ok(phi.curvature_sup() * s + phi.slope_sup() * sqrt(s))
}

/// Random-probe estimate of `K` with `w` uniform on the sphere and `v` a
/// uniform unit tangent at `w`.
pub fn estimate_k(data: &Dataset, phi: &SphereActivation, probes: usize, seed: u64) -> Result<KEstimate> {
    if data.n == 0 {
        return Err(Error::EmptyDataset);
    }
    if probes == 0 {
        return Err(invalid("probes", "need at least one probe"));
    }
    let d = data.d;
    let mut rng = stream(seed, Domain::Probes, 0);
    let mut w = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut best: f64 = 0.0;
    for _ in 0..probes {
        fill_uniform_sphere(&mut rng, &mut w);
        unit_tangent(&mut rng, &w, &mut v);
        best = best.max(probe_curvature(data, phi, &w, &v));
    }
    let s = second_moment_norm(data)?;
    Ok(KEstimate { estimate: best, upper: phi.curvature_sup() * s + phi.slope_sup() * sqrt(s), sigma_hat_norm: s })
}

fn unit_tangent<R: rand::Rng + ?Sized>(rng: &mut R, w: &[f64], v: &mut [f64]) {
    loop {
        fill_normal(rng, v);
        crate::net::project_tangent_in_place(w, v);
        let n = norm(v);
        if n > 1e-12 {
            v.iter_mut().for_each(|c| *c /= n);
            return;
        }
    }
}

/// Monte-Carlo `max f − min f` over uniform sphere points; a lower bound on
/// the oscillation of `f`.
pub fn oscillation_bound(f: &dyn Fn(&[f64]) -> f64, d: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, Domain::Oscillation, 0);
    let mut w = vec![0.0; d];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..samples {
        fill_uniform_sphere(&mut rng, &mut w);
        let v = f(&w);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if samples == 0 {
        0.0
    } else {
        hi - lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Per-step rate `r` in `F_t − floor ≈ C e^{−r t}`.
    pub rate: f64,
    pub floor: f64,
    pub points: usize,
    pub r_squared: f64,
    pub low_confidence: bool,
}

/// Least-squares slope of `ln(v − floor)` against the step, after
/// `burn_in` records. The floor is `min v − margin` (default margin
/// `1e-6 · range`) and points are used while `v − floor` stays above
/// `1e-2` of its first value.
pub fn fit_decay_rate(steps: &[f64], values: &[f64], burn_in: usize, margin: Option<f64>) -> Result<DecayFit> {
    if steps.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: steps.len(), found: values.len() });
    }
    if values.len() <= burn_in + 10 {
        return Err(Error::TraceTooShort { len: values.len(), burn_in });
    }
    let (ts, vs) = (&steps[burn_in..], &values[burn_in..]);
    let lo = vs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 1e-12 * hi.abs().max(1.0)) {
        return Ok(DecayFit { rate: 0.0, floor: lo, points: vs.len(), r_squared: 0.0, low_confidence: true });
    }
    let floor = lo - margin.unwrap_or(1e-6 * range);
    let gap0 = vs[0] - floor;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, v) in ts.iter().zip(vs) {
        let g = v - floor;
        if g < 1e-2 * gap0 {
            break;
        }
        xs.push(*t);
        ys.push(ln(g));
    }
    if xs.len() < 2 {
        return Ok(DecayFit { rate: 0.0, floor, points: xs.len(), r_squared: 0.0, low_confidence: true });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 0.0 };
    let used = &vs[..xs.len()];
    let falling = used.windows(2).filter(|w| w[1] <= w[0]).count();
    let monotone = falling as f64 >= 0.5 * (used.len() - 1) as f64;
    let low_confidence = xs.len() < 10 || r_squared < 0.9 || !monotone || slope >= 0.0;
    Ok(DecayFit { rate: -slope, floor, points: xs.len(), r_squared, low_confidence })
}

/// `2η / (β C_LSI)`, the per-step contraction the bound would give.
pub fn theoretical_decay_rate(eta: f64, beta: f64, c_lsi: &LsiBound) -> Option<f64> {
    let ln_c = c_lsi.ln_value()?;
    Some(exp(ln(2.0 * eta / beta) - ln_c))
}

/// Everything `diagnose` reports about a trained ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub space: Space,
    pub excess_risk: f64,
    pub excess_risk_stderr: f64,
    pub classification_error: Option<f64>,
    pub alignment: Option<f64>,
    pub c_lsi_euclidean: Option<LsiBound>,
    pub c_lsi_sphere: Option<LsiBound>,
    pub k_estimate: Option<f64>,
    pub k_upper: Option<f64>,
    pub sphere_schedule: Option<SphereSchedule>,
    pub decay: Option<DecayFit>,
    pub theoretical_rate: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_bound_values() {
        let b = lsi_bound_euclidean(1.0, 1.0, 1.0, 1.0);
        assert_eq!(b.value(), Some(exp(4.0)));
        assert!((b.value().unwrap() - 54.598150033144236).abs() < 1e-12);
        let b = lsi_bound_euclidean(2.0, 0.5, 2.0, 1.0);
        assert!((b.value().unwrap() / 8.886110520507872e6 - 1.0).abs() < 1e-12);
        let b = lsi_bound_euclidean(500.0, 0.1, 4.0, 1.0);
        match b {
            LsiBound::Overflow { ln_value } => assert!((ln_value - (8000.0 - ln(50.0))).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sphere_bound_values() {
        assert_eq!(lsi_bound_sphere(100.0, 1.0, 10.0, 1.0, 1.0).value(), Some(1.0 / 90.0));
        assert_eq!(lsi_bound_sphere(100.0, 1.0, 100.0, 1.0, 1.0), LsiBound::Infeasible);
        assert_eq!(lsi_bound_sphere(100.0, 1.0, 120.0, 1.0, 1.0), LsiBound::Infeasible);
    }

    #[test]
    fn schedule_values() {
        let s = sphere_schedule(10.0, 0.1, 1.0, 1.0, 1.0, core::f64::consts::E * 0.1).unwrap();
        assert_eq!(s.beta, 100.0);
        assert_eq!(s.d_min, 200);
        assert!((s.t_bound - 0.5).abs() < 1e-15);
        assert_eq!(s.c_lsi.value(), Some(2.0 / 200.0));
        assert!(sphere_schedule(10.0, 0.1, 1.0, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn baselines() {
        assert_eq!(noise_baseline(&Loss::Squared, 0.0, NoiseLaw::Gaussian), 0.0);
        assert_eq!(noise_baseline(&Loss::Squared, 0.5, NoiseLaw::Gaussian), 0.125);
        // small noise: pseudo-Huber ≈ t²/2 − t⁴/(8δ²)
        let s = 1e-2;
        let v = noise_baseline(&Loss::PseudoHuber { delta: 1.0 }, s, NoiseLaw::Gaussian);
        assert!((v - (0.5 * s * s - 3.0 * s.powi(4) / 8.0)).abs() < 1e-12);
        let u = noise_baseline(&Loss::PseudoHuber { delta: 1.0 }, 0.4, NoiseLaw::Uniform);
        let a = sqrt(3.0) * 0.4;
        let num = integrate(&|t| Loss::PseudoHuber { delta: 1.0 }.value(t), -a, a, 1e-13) / (2.0 * a);
        assert!((u - num).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_exact_exponential() {
        let t: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| 1.0 + exp(-0.01 * t)).collect();
        let f = fit_decay_rate(&t, &v, 0, None).unwrap();
        assert!((f.rate / 0.01 - 1.0).abs() < 0.01, "{f:?}");
        assert!(!f.low_confidence);
        let c = fit_decay_rate(&t, &vec![3.0; 1000], 0, None).unwrap();
        assert_eq!(c.rate, 0.0);
        assert!(c.low_confidence);
        assert!(fit_decay_rate(&t[..15], &v[..15], 5, None).is_err());
    }

    #[test]
    fn decay_fit_gradient_descent_contraction() {
        // f(w) = μ w²/2 under GD contracts f by (1 − ημ)² per step
        let (eta, mu) = (0.05, 0.8);
        let mut w: f64 = 2.0;
        let mut t = Vec::new();
        let mut v = Vec::new();
        for s in 0..400 {
            t.push(s as f64);
            v.push(0.5 * mu * w * w);
            w -= eta * mu * w;
        }
        let f = fit_decay_rate(&t, &v, 0, None).unwrap();
        let expect = -2.0 * ln(1.0 - eta * mu);
        assert!((f.rate / expect - 1.0).abs() < 0.05, "{} vs {expect}", f.rate);
    }

    #[test]
    fn error_rate_signs() {
        assert_eq!(classification_error(&[0.0, -0.1, 0.3], &[1.0, 1.0, -1.0]), 2.0 / 3.0);
    }
}

//! Riemannian MFLA on the unit sphere `S^{d-1}`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::activation::SphereActivation;
use crate::covariance::CovarianceModel;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm};
use crate::loss::Loss;
use crate::math::{cos, sin};
use crate::mfla::{check_common, run_loop, LoopSpec, RunOptions, RunOutput, DEFAULT_RENORMALIZE_EVERY};
use crate::net::{Activation, ParticleEnsemble, Space};
use crate::rng::{fill_normal, fill_uniform_sphere, stream, Domain, NoiseSource};
use crate::tasks::Dataset;
use crate::trace::Observer;

/// Norm tolerance accepted for points on the sphere.
pub const UNIT_TOL: f64 = 1e-10;

fn default_eval_every() -> u64 {
    crate::mfla::DEFAULT_EVAL_EVERY
}

fn default_renormalize() -> u64 {
    DEFAULT_RENORMALIZE_EVERY
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereConfig {
    pub eta: f64,
    pub beta: f64,
    #[serde(default)]
    pub loss: Loss,
    #[serde(default)]
    pub activation: SphereActivation,
    pub steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    pub seed: u64,
    /// Curvature constant; `(d − 2)/d` when absent.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_renormalize")]
    pub renormalize_every: u64,
}

impl SphereConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.eta, self.beta, self.eval_every)?;
        self.loss.validate()?;
        if let Loss::Squared = self.loss {
            return Err(invalid("loss", "sphere dynamics need a Lipschitz loss (pseudo_huber)"));
        }
        if let Some(r) = self.rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("rho", "must be positive"));
            }
        }
        self.activation.verify()
    }

    pub fn rho(&self, d: usize) -> f64 {
        self.rho.unwrap_or_else(|| default_rho(d))
    }
}

/// `ϱ = (d − 2)/d`, so that `ϱ d` is the Ricci bound of the unit sphere.
pub fn default_rho(d: usize) -> f64 {
    (d as f64 - 2.0) / d as f64
}

fn check_unit(w: &[f64]) -> Result<()> {
    let n = norm(w);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit { norm: n });
    }
    Ok(())
}

/// `v − ⟨v, w⟩ w`
pub fn tangent_project(w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if w.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), found: v.len() });
    }
    check_unit(w)?;
    let mut out = v.to_vec();
    crate::net::project_tangent_in_place(w, &mut out);
    Ok(out)
}

/// `cos(‖t‖) w + sin(‖t‖) t/‖t‖`
pub fn exp_map(w: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    if w.len() != t.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), found: t.len() });
    }
    let tn = norm(t);
    let inner = dot(t, w);
    if inner.abs() > 1e-10 * tn.max(f64::MIN_POSITIVE) && tn > 0.0 {
        return Err(Error::NotTangent { inner });
    }
    let mut out = t.to_vec();
    exp_map_in_place(w, &mut out);
    Ok(out)
}

/// Overwrites the tangent vector `t` with `exp_w(t)`.
pub(crate) fn exp_map_in_place(w: &[f64], t: &mut [f64]) {
    let tn = norm(t);
    if tn < 1e-14 {
        t.copy_from_slice(w);
        return;
    }
    let (c, s) = (cos(tn), sin(tn) / tn);
    for (ti, wi) in t.iter_mut().zip(w) {
        *ti = c * wi + s * *ti;
    }
}

/// `⟨v, ∇²_w φ(⟨w, x⟩) v⟩` on the sphere:
/// `φ''(⟨w,x⟩)⟨v,x⟩² − φ'(⟨w,x⟩)⟨w,x⟩`.
pub fn riemannian_hessian_quadform(w: &[f64], v: &[f64], x: &[f64], phi: &SphereActivation) -> f64 {
    let z = dot(w, x);
    let vx = dot(v, x);
    let (_, d1, d2) = phi.eval(z);
    d2 * vx * vx - d1 * z
}

/// One sphere step outside a run loop; returns the tangency residual.
pub fn sphere_step(
    ens: &mut ParticleEnsemble,
    data: &Dataset,
    config: &SphereConfig,
    noise: &dyn NoiseSource,
    step: u64,
) -> Result<crate::mfla::StepStats> {
    config.validate()?;
    let mut t = crate::mfla::Trainer::new(
        Activation::Sphere(config.activation),
        data,
        config.loss,
        0.0,
        config.eta,
        config.beta,
    );
    t.step(ens, noise, step)
}

/// Sphere counterpart of [`crate::mfla::run`].
pub fn run_sphere(
    init: ParticleEnsemble,
    train: &Dataset,
    config: &SphereConfig,
    noise: &dyn NoiseSource,
    opts: RunOptions<'_>,
    observer: &mut dyn Observer,
) -> Result<RunOutput> {
    config.validate()?;
    if init.space() != Space::Sphere {
        return Err(Error::SpaceMismatch("sphere run needs a sphere ensemble"));
    }
    let spec = LoopSpec {
        eta: config.eta,
        beta: config.beta,
        lambda: 0.0,
        loss: config.loss,
        steps: config.steps,
        eval_every: config.eval_every,
        renormalize_every: config.renormalize_every,
    };
    run_loop(init, Activation::Sphere(config.activation), train, spec, noise, opts, observer)
}

/// Planted teacher network: `m` uniform particles on the sphere.
pub fn planted_teacher(d: usize, m: usize, seed: u64) -> Result<ParticleEnsemble> {
    let mut rng = stream(seed, Domain::Teacher, 1);
    let mut w = vec![0.0; m * d];
    for row in w.chunks_exact_mut(d) {
        fill_uniform_sphere(&mut rng, row);
    }
    ParticleEnsemble::from_weights(Space::Sphere, d, m, w)
}

/// Labels `y = f_teacher(x) + ς ξ` for inputs `x = Σ^{1/2} z`.
pub fn teacher_dataset(
    teacher: &ParticleEnsemble,
    phi: SphereActivation,
    covariance: &CovarianceModel,
    n: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    let d = teacher.dim();
    if covariance.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: covariance.dim() });
    }
    let mut rng = stream(seed, Domain::Teacher, 0);
    let mut z = vec![0.0; d];
    let mut inputs = vec![0.0; n * d];
    for row in inputs.chunks_exact_mut(d) {
        fill_normal(&mut rng, &mut z);
        covariance.apply_sqrt_into(&z, row)?;
    }
    let act = Activation::Sphere(phi);
    let mut labels = Vec::with_capacity(n);
    for row in inputs.chunks_exact(d) {
        let y = crate::net::predict(teacher, &act, row)?;
        labels.push(y + noise_std * crate::rng::normal(&mut rng));
    }
    Dataset::from_parts(d, inputs, labels, 1.0, seed, teacher.version())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_cases() {
        let w = [0.6, 0.8, 0.0];
        assert!(tangent_project(&w, &w).unwrap().iter().all(|v| v.abs() < 1e-16));
        let v = [0.8, -0.6, 2.0];
        let p = tangent_project(&w, &v).unwrap();
        assert_eq!(p, v.to_vec());
        assert!(tangent_project(&[1.0, 1.0, 0.0], &v).is_err());
    }

    #[test]
    fn exp_map_cases() {
        let w = [1.0, 0.0, 0.0];
        assert_eq!(exp_map(&w, &[0.0; 3]).unwrap(), w.to_vec());
        let t = [0.0, core::f64::consts::FRAC_PI_2, 0.0];
        let out = exp_map(&w, &t).unwrap();
        assert!((out[0]).abs() < 1e-16 && (out[1] - 1.0).abs() < 1e-16);
        let mut rng = stream(3, Domain::Misc, 0);
        for _ in 0..100 {
            let mut w = [0.0; 7];
            fill_uniform_sphere(&mut rng, &mut w);
            let mut v = [0.0; 7];
            fill_normal(&mut rng, &mut v);
            let t = tangent_project(&w, &v).unwrap();
            let out = exp_map(&w, &t).unwrap();
            assert!((norm(&out) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_hessian_is_minus_inner() {
        let phi = SphereActivation::Linear;
        let w = [1.0, 0.0, 0.0];
        let x = [0.0, 0.0, 2.0];
        assert_eq!(riemannian_hessian_quadform(&w, &[0.0, 1.0, 0.0], &x, &phi), 0.0);
        let x = [0.3, 0.5, -0.2];
        for v in [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.6, 0.8]] {
            assert!((riemannian_hessian_quadform(&w, &v, &x, &phi) + 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn hessian_matches_geodesic_differences() {
        let phi = SphereActivation::Tanh;
        let mut rng = stream(8, Domain::Misc, 1);
        for _ in 0..50 {
            let mut w = [0.0; 5];
            fill_uniform_sphere(&mut rng, &mut w);
            let mut v = [0.0; 5];
            fill_normal(&mut rng, &mut v);
            let mut v = tangent_project(&w, &v).unwrap();
            let n = norm(&v);
            v.iter_mut().for_each(|c| *c /= n);
            let mut x = [0.0; 5];
            fill_normal(&mut rng, &mut x);
            let f = |s: f64| {
                let g: Vec<f64> = w.iter().zip(&v).map(|(a, b)| cos(s) * a + sin(s) * b).collect();
                phi.eval(dot(&g, &x)).0
            };
            let h = 1e-4;
            let fd = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
            let q = riemannian_hessian_quadform(&w, &v, &x, &phi);
            assert!((fd - q).abs() < 1e-4, "{fd} vs {q}");
        }
    }

    #[test]
    fn zero_gradient_infinite_beta_is_fixed() {
        let teacher = planted_teacher(4, 3, 1).unwrap();
        let cov = CovarianceModel::build(&crate::covariance::CovarianceSpec::isotropic(4)).unwrap();
        let data = teacher_dataset(&teacher, SphereActivation::Tanh, &cov, 6, 0.0, 2).unwrap();
        let mut e = teacher.clone();
        let config = SphereConfig {
            eta: 0.1,
            beta: f64::INFINITY,
            loss: Loss::default(),
            activation: SphereActivation::Tanh,
            steps: 1,
            eval_every: 1,
            seed: 0,
            rho: None,
            renormalize_every: 100,
        };
        sphere_step(&mut e, &data, &config, &crate::rng::NoNoise, 0).unwrap();
        for (a, b) in e.weights().iter().zip(teacher.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

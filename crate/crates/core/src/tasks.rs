//! Synthetic multi-index tasks `y = g(Ux) + ξ` and their finite samples.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceKind, CovarianceModel, CovarianceSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, orthonormalize_rows, Mat};
use crate::math::{ln_factorial, exp, powf, sqrt, tanh};
use crate::planner::tail_radius;
use crate::rng::{fill_normal, normal, stream, Domain};

/// Link function as configured; scale constants are resolved against `r_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinkSpec {
    /// `sign(∏ z_i)`
    Parity,
    /// `c ‖z‖ / r_x`
    LipschitzNorm {
        #[serde(default = "one")]
        c: f64,
    },
    /// `Σ tanh(z_i / r_x)`
    RidgeTanh,
    /// `He_s(z √k / r_x) / √(s!)`, single index only.
    HermiteSingle { degree: u32 },
}

fn one() -> f64 {
    1.0
}

impl LinkSpec {
    pub fn resolve(&self, r_x: f64, k: usize) -> Result<LinkKind> {
        Ok(match *self {
            LinkSpec::Parity => LinkKind::Parity,
            LinkSpec::LipschitzNorm { c } => LinkKind::LipschitzNorm { lipschitz: c / r_x },
            LinkSpec::RidgeTanh => LinkKind::RidgeTanh { scale: 1.0 / r_x },
            LinkSpec::HermiteSingle { degree } => {
                if k != 1 {
                    return Err(invalid("link", "hermite_single requires k = 1"));
                }
                LinkKind::HermiteSingle { degree, scale: sqrt(k as f64) / r_x }
            }
        })
    }
}

/// A link function with all constants fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkKind {
    Parity,
    LipschitzNorm { lipschitz: f64 },
    RidgeTanh { scale: f64 },
    HermiteSingle { degree: u32, scale: f64 },
}

/// Probabilists' Hermite polynomial `He_s(x)`.
pub fn hermite(degree: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if degree == 0 {
        return prev;
    }
    for n in 1..degree {
        let next = x * cur - n as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

impl LinkKind {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match *self {
            LinkKind::Parity => {
                // a zero factor makes the product zero, which maps to +1
                if z.iter().any(|v| *v == 0.0) {
                    return 1.0;
                }
                let negatives = z.iter().filter(|v| **v < 0.0).count();
                if negatives % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            LinkKind::LipschitzNorm { lipschitz } => lipschitz * norm(z),
            LinkKind::RidgeTanh { scale } => z.iter().map(|v| tanh(v * scale)).sum(),
            LinkKind::HermiteSingle { degree, scale } => {
                hermite(degree, z[0] * scale) / sqrt(exp(ln_factorial(degree)))
            }
        }
    }

    /// Lipschitz constant on all of ℝ^k, when one exists.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            LinkKind::LipschitzNorm { lipschitz } => Some(lipschitz),
            LinkKind::RidgeTanh { scale } => Some(scale),
            LinkKind::HermiteSingle { degree: 0 | 1, scale } => Some(scale),
            _ => None,
        }
    }

    pub fn is_sign_valued(&self) -> bool {
        matches!(self, LinkKind::Parity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLaw {
    Gaussian,
    /// `x = Σ^{1/2} z` with `z` uniform on `{±1}^d`.
    RademacherCube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    #[default]
    Gaussian,
    /// Uniform on `[-√3 ς, √3 ς]`, variance `ς²`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionPolicy {
    /// Haar-distributed orthonormal frame.
    RandomOrthonormal,
    /// The first `k` standard basis vectors.
    Coordinate,
    /// Haar frame plus a spike direction with `√k ‖Uθ‖ = d^{-γ₁}`.
    /// `gamma1` defaults to the spiked covariance's own exponent.
    SpikeAligned {
        #[serde(default)]
        gamma1: Option<f64>,
    },
    /// Rows supported on disjoint coordinate classes with
    /// `‖U e_i‖² ∝ i^{-γ}` inside each class; requires a diagonal covariance.
    /// `gamma` defaults to the power-law covariance's own exponent.
    SpectrumAligned {
        #[serde(default)]
        gamma: Option<f64>,
    },
}

/// Target directions together with the covariance they were drawn against
/// (spike-aligned draws replace the spike direction).
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    /// `k × d`, rows `u_i/√k`.
    pub u: Mat,
    pub covariance: CovarianceModel,
}

fn scale_rows(u: &mut Mat, s: f64) {
    u.data.iter_mut().for_each(|v| *v *= s);
}

fn haar_frame<R: Rng>(rng: &mut R, k: usize, d: usize) -> Result<Mat> {
    if k > d {
        return Err(Error::TooManyDirections { k, d });
    }
    let mut g = Mat::zeros(k, d);
    fill_normal(rng, &mut g.data);
    orthonormalize_rows(&g)
}

pub fn sample_directions(
    d: usize,
    k: usize,
    policy: DirectionPolicy,
    model: &CovarianceModel,
    seed: u64,
) -> Result<Directions> {
    if k == 0 {
        return Err(invalid("k", "at least one direction is required"));
    }
    if k > d {
        return Err(Error::TooManyDirections { k, d });
    }
    if model.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: model.dim() });
    }
    let mut rng = stream(seed, Domain::Directions, 0);
    let inv_sqrt_k = 1.0 / sqrt(k as f64);
    let mut covariance = model.clone();
    let u = match policy {
        DirectionPolicy::RandomOrthonormal => {
            let mut q = haar_frame(&mut rng, k, d)?;
            scale_rows(&mut q, inv_sqrt_k);
            q
        }
        DirectionPolicy::Coordinate => {
            let mut q = Mat::zeros(k, d);
            for i in 0..k {
                q.data[i * d + i] = inv_sqrt_k;
            }
            q
        }
        DirectionPolicy::SpikeAligned { gamma1 } => {
            let gamma1 = gamma1.ok_or(invalid("gamma1", "spike_aligned needs an exponent"))?;
            if !(0.0..=0.5).contains(&gamma1) {
                return Err(invalid("gamma1", format!("{gamma1} not in [0, 1/2]")));
            }
            let mut q = haar_frame(&mut rng, k, d)?;
            let cos_psi = powf(d as f64, -gamma1);
            let theta = spike_direction(&mut rng, &q, cos_psi)?;
            covariance = model.with_spike_direction(&theta)?;
            scale_rows(&mut q, inv_sqrt_k);
            q
        }
        DirectionPolicy::SpectrumAligned { gamma } => {
            let gamma = gamma.ok_or(invalid("gamma", "spectrum_aligned needs an exponent"))?;
            if model.diagonal().is_none() && !model.is_isotropic() {
                return Err(Error::UnsupportedSpec("spectrum_aligned needs a diagonal covariance"));
            }
            let mut q = Mat::zeros(k, d);
            for i in 0..d {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                q.data[(i % k) * d + i] = sign * powf((i + 1) as f64, -0.5 * gamma);
            }
            for r in 0..k {
                let row = q.row_mut(r);
                let n = norm(row);
                row.iter_mut().for_each(|v| *v *= inv_sqrt_k / n);
            }
            q
        }
    };
    Ok(Directions { u, covariance })
}

/// `θ = cos ψ · v_in + sin ψ · v_out` with `v_in` in the row span of the
/// orthonormal frame `q` and `v_out` orthogonal to it.
fn spike_direction<R: Rng>(rng: &mut R, q: &Mat, cos_psi: f64) -> Result<Vec<f64>> {
    let (k, d) = (q.rows, q.cols);
    let mut v_in = vec![0.0; d];
    let mut coeffs = vec![0.0; k];
    fill_normal(rng, &mut coeffs);
    let cn = norm(&coeffs);
    for (r, c) in coeffs.iter().enumerate() {
        crate::linalg::axpy(c / cn, q.row(r), &mut v_in);
    }
    let sin_psi = sqrt((1.0 - cos_psi * cos_psi).max(0.0));
    let mut theta: Vec<f64> = v_in.iter().map(|v| cos_psi * v).collect();
    if sin_psi > 0.0 {
        if k == d {
            return Err(invalid("gamma1", "no orthogonal complement when k = d"));
        }
        let mut v_out = vec![0.0; d];
        loop {
            fill_normal(rng, &mut v_out);
            for r in 0..k {
                let p = dot(&v_out, q.row(r));
                crate::linalg::axpy(-p, q.row(r), &mut v_out);
            }
            let n = norm(&v_out);
            if n > 1e-8 {
                v_out.iter_mut().for_each(|v| *v /= n);
                break;
            }
        }
        crate::linalg::axpy(sin_psi, &v_out, &mut theta);
    }
    let n = norm(&theta);
    theta.iter_mut().for_each(|v| *v /= n);
    Ok(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub d: usize,
    pub k: usize,
    pub link: LinkSpec,
    #[serde(default)]
    pub noise_std: f64,
    pub input_law: InputLaw,
    pub covariance: CovarianceKind,
    pub direction_policy: DirectionPolicy,
    #[serde(default)]
    pub noise_law: NoiseLaw,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.d {
            return Err(Error::TooManyDirections { k: self.k, d: self.d });
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid("noise_std", "must be finite and nonnegative"));
        }
        if self.input_law == InputLaw::RademacherCube
            && !matches!(self.covariance, CovarianceKind::Isotropic | CovarianceKind::Explicit { .. })
        {
            return Err(invalid(
                "input_law",
                "rademacher_cube requires an isotropic or explicit covariance",
            ));
        }
        self.covariance_spec().validate()
    }

    pub fn covariance_spec(&self) -> CovarianceSpec {
        CovarianceSpec { d: self.d, kind: self.covariance.clone() }
    }

    /// Fills policy exponents left unspecified from the covariance kind.
    pub fn resolved_policy(&self) -> DirectionPolicy {
        match (self.direction_policy, &self.covariance) {
            (DirectionPolicy::SpikeAligned { gamma1: None }, CovarianceKind::Spiked { gamma1, .. }) => {
                DirectionPolicy::SpikeAligned { gamma1: Some(*gamma1) }
            }
            (DirectionPolicy::SpectrumAligned { gamma: None }, CovarianceKind::PowerLaw { gamma, .. }) => {
                DirectionPolicy::SpectrumAligned { gamma: Some(*gamma) }
            }
            (p, _) => p,
        }
    }
}

/// FNV-1a, used to tag datasets with the task they came from.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A task with its covariance, directions and link constants fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub spec: TaskSpec,
    pub covariance: CovarianceModel,
    pub directions: Mat,
    pub link: LinkKind,
    pub r_x: f64,
    /// `r̃_x`, the constant bias coordinate of augmented inputs.
    pub bias: f64,
    pub hash: u64,
}

/// Finite sample from a task.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub d: usize,
    /// `n × d`
    pub inputs: Vec<f64>,
    /// `n × (d+1)`, rows `(x, r̃_x)`.
    pub augmented: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
    pub seed: u64,
    pub task_hash: u64,
}

impl Dataset {
    pub fn from_parts(d: usize, inputs: Vec<f64>, labels: Vec<f64>, bias: f64, seed: u64, task_hash: u64) -> Result<Self> {
        let n = labels.len();
        if inputs.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, found: inputs.len() });
        }
        if labels.iter().any(|v| !v.is_finite()) {
            return Err(invalid("labels", "labels must be finite"));
        }
        let mut augmented = Vec::with_capacity(n * (d + 1));
        for row in inputs.chunks_exact(d.max(1)).take(n) {
            augmented.extend_from_slice(row);
            augmented.push(bias);
        }
        Ok(Self { n, d, inputs, augmented, labels, bias, seed, task_hash })
    }

    #[inline]
    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn augmented_input(&self, i: usize) -> &[f64] {
        &self.augmented[i * (self.d + 1)..(i + 1) * (self.d + 1)]
    }
}

impl Task {
    /// Draws directions and fixes `r_x`, `r̃_x` (for `n_train` samples) and the link.
    pub fn realize(spec: &TaskSpec, n_train: usize, q: f64, sigma_u: f64, direction_seed: u64) -> Result<Self> {
        spec.validate()?;
        let model = CovarianceModel::build(&spec.covariance_spec())?;
        let dirs = sample_directions(spec.d, spec.k, spec.resolved_policy(), &model, direction_seed)?;
        let r_x = sqrt(dirs.covariance.r_x_sq(&dirs.u)?);
        if !(r_x > 0.0) {
            return Err(Error::DegenerateDirections { r_x_sq: r_x * r_x });
        }
        let link = spec.link.resolve(r_x, spec.k)?;
        let bias = tail_radius(r_x, sigma_u, q, n_train.max(1) as f64);
        let tag = format!("{spec:?}|{direction_seed}|{n_train}|{q}|{sigma_u}");
        Ok(Self {
            spec: spec.clone(),
            covariance: dirs.covariance,
            directions: dirs.u,
            link,
            r_x,
            bias,
            hash: fnv1a(tag.as_bytes()),
        })
    }

    pub fn effective_dimension(&self) -> Result<f64> {
        self.covariance.effective_dimension(&self.directions)
    }

    /// `Ux`
    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        self.directions.mul_vec(x, out);
    }

    /// Noise-free targets `g(Ux)` for every sample.
    pub fn clean_targets(&self, data: &Dataset) -> Vec<f64> {
        let mut z = vec![0.0; self.spec.k];
        (0..data.n)
            .map(|i| {
                self.project(data.input(i), &mut z);
                self.link.eval(&z)
            })
            .collect()
    }

    pub fn generate_dataset(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let d = self.spec.d;
        let mut rng = stream(seed, Domain::Data, 0);
        let mut inputs = vec![0.0; n * d];
        let mut labels = vec![0.0; n];
        let mut zbuf = vec![0.0; d];
        let mut proj = vec![0.0; self.spec.k];
        let sigma = self.spec.noise_std;
        for i in 0..n {
            match self.spec.input_law {
                InputLaw::Gaussian => fill_normal(&mut rng, &mut zbuf),
                InputLaw::RademacherCube => zbuf
                    .iter_mut()
                    .for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 }),
            }
            let x = &mut inputs[i * d..(i + 1) * d];
            self.covariance.apply_sqrt_into(&zbuf, x)?;
            self.directions.mul_vec(x, &mut proj);
            let xi = match self.spec.noise_law {
                NoiseLaw::Gaussian => sigma * normal(&mut rng),
                NoiseLaw::Uniform => sigma * sqrt(3.0) * (2.0 * rng.random::<f64>() - 1.0),
            };
            labels[i] = self.link.eval(&proj) + xi;
        }
        Dataset::from_parts(d, inputs, labels, self.bias, seed, self.hash)
    }
}

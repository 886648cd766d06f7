//! The mean-field two-layer network: particle ensembles, predictions,
//! regularized empirical risk and first-variation gradients.
//!
//! Both spaces share one kernel layout. The weights are viewed as a
//! `units × width` row-major matrix: a Euclidean particle `(ω₁, ω₂)`
//! contributes two units of width `d+1` with output signs `+1, −1`; a sphere
//! particle is a single unit of width `d`. Inputs are the matching `n × width`
//! matrix (augmented inputs for Euclidean, raw inputs for the sphere).

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};
use serde::{Deserialize, Serialize};

use crate::activation::{SmoothRelu, SphereActivation};
use crate::error::{Error, Result};
use crate::linalg::{dot, gemm, norm};
use crate::loss::Loss;
use crate::math::sqrt;
use crate::rng::{fill_normal, fill_uniform_sphere, stream, Domain};
use crate::tasks::Dataset;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Rows processed per kernel block; also the unit of parallel work.
pub(crate) const ROW_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Euclidean,
    Sphere,
}

impl Space {
    pub fn tag(self) -> u32 {
        match self {
            Space::Euclidean => 0,
            Space::Sphere => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Space::Euclidean),
            1 => Some(Space::Sphere),
            _ => None,
        }
    }

    /// Coordinates per particle.
    pub fn particle_width(self, d: usize) -> usize {
        match self {
            Space::Euclidean => 2 * d + 2,
            Space::Sphere => d,
        }
    }
}

/// `m` particles in `ℝ^{2d+2}` or on `S^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    space: Space,
    d: usize,
    m: usize,
    weights: Vec<f64>,
    version: u64,
}

impl ParticleEnsemble {
    pub fn from_weights(space: Space, d: usize, m: usize, weights: Vec<f64>) -> Result<Self> {
        let width = space.particle_width(d);
        if m == 0 || d == 0 {
            return Err(crate::error::invalid("m", "ensemble needs m >= 1 and d >= 1"));
        }
        if weights.len() != m * width {
            return Err(Error::DimensionMismatch { expected: m * width, found: weights.len() });
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
        if space == Space::Sphere {
            for row in weights.chunks_exact(width) {
                let n = norm(row);
                if (n - 1.0).abs() > 1e-12 {
                    return Err(Error::NotUnit { norm: n });
                }
            }
        }
        Ok(Self { space, d, m, weights, version: fresh_version() })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn width(&self) -> usize {
        self.space.particle_width(self.d)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mutable access; invalidates every prediction cache taken earlier.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.version = fresh_version();
        &mut self.weights
    }

    pub(crate) fn replace_weights(&mut self, buf: &mut Vec<f64>) {
        core::mem::swap(&mut self.weights, buf);
        self.version = fresh_version();
    }

    pub fn particle(&self, j: usize) -> &[f64] {
        let w = self.width();
        &self.weights[j * w..(j + 1) * w]
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// `R(W) = ‖W‖_F² / m`
    pub fn regularizer(&self) -> f64 {
        dot(&self.weights, &self.weights) / self.m as f64
    }

    /// Largest `|‖w_j‖ − 1|` over particles.
    pub fn max_norm_deviation(&self) -> f64 {
        self.weights
            .chunks_exact(self.width())
            .map(|r| (norm(r) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Rescales every row to unit norm (sphere guard).
    pub fn renormalize(&mut self) {
        let w = self.width();
        for row in self.weights_mut().chunks_exact_mut(w) {
            let n = norm(row);
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// i.i.d. Gaussian particles in `ℝ^{2d+2}`; default std `1/√(2d+2)` gives
/// `E‖w‖² = 1`.
pub fn init_gaussian(m: usize, d: usize, std: Option<f64>, seed: u64) -> Result<ParticleEnsemble> {
    let width = Space::Euclidean.particle_width(d);
    let std = std.unwrap_or(1.0 / sqrt(width as f64));
    let mut rng = stream(seed, Domain::Init, 0);
    let mut weights = vec![0.0; m * width];
    fill_normal(&mut rng, &mut weights);
    weights.iter_mut().for_each(|v| *v *= std);
    ParticleEnsemble::from_weights(Space::Euclidean, d, m, weights)
}

/// i.i.d. uniform particles on `S^{d-1}`.
pub fn init_sphere_uniform(m: usize, d: usize, seed: u64) -> Result<ParticleEnsemble> {
    let mut rng = stream(seed, Domain::Init, 0);
    let mut weights = vec![0.0; m * d];
    for row in weights.chunks_exact_mut(d) {
        fill_uniform_sphere(&mut rng, row);
    }
    ParticleEnsemble::from_weights(Space::Sphere, d, m, weights)
}

/// Network activation, tied to the particle space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// `Ψ(x; w) = φ(⟨x̃, ω₁⟩) − φ(⟨x̃, ω₂⟩)` on `ℝ^{2d+2}`.
    Paired(SmoothRelu),
    /// `Ψ(x; w) = φ(⟨w, x⟩)` on the sphere.
    Sphere(SphereActivation),
}

impl Activation {
    pub fn space(&self) -> Space {
        match self {
            Activation::Paired(_) => Space::Euclidean,
            Activation::Sphere(_) => Space::Sphere,
        }
    }

    #[inline(always)]
    fn value_slope(&self, z: f64) -> (f64, f64) {
        match self {
            Activation::Paired(a) => a.value_slope(z),
            Activation::Sphere(a) => {
                let (v, s, _) = a.eval(z);
                (v, s)
            }
        }
    }

    fn check(&self, ens: &ParticleEnsemble) -> Result<()> {
        if self.space() != ens.space() {
            return Err(Error::SpaceMismatch("activation does not match ensemble space"));
        }
        Ok(())
    }
}

/// `Ψ(x̃; w) = φ(⟨x̃, ω₁⟩) − φ(⟨x̃, ω₂⟩)`
pub fn activation_pair(x_aug: &[f64], w: &[f64], act: &SmoothRelu) -> Result<f64> {
    let h = x_aug.len();
    if w.len() != 2 * h {
        return Err(Error::DimensionMismatch { expected: 2 * h, found: w.len() });
    }
    let (a, _, _) = act.eval(dot(x_aug, &w[..h]));
    let (b, _, _) = act.eval(dot(x_aug, &w[h..]));
    Ok(a - b)
}

/// Single-input prediction `(1/m) Σ_j Ψ(x; w_j)`: augmented input for the
/// Euclidean space, raw input on the sphere.
pub fn predict(ens: &ParticleEnsemble, act: &Activation, x: &[f64]) -> Result<f64> {
    act.check(ens)?;
    let expected = match ens.space() {
        Space::Euclidean => ens.dim() + 1,
        Space::Sphere => ens.dim(),
    };
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, found: x.len() });
    }
    let mut sum = 0.0;
    for j in 0..ens.len() {
        let w = ens.particle(j);
        sum += match act {
            Activation::Paired(a) => activation_pair(x, w, a)?,
            Activation::Sphere(a) => a.eval(dot(w, x)).0,
        };
    }
    Ok(sum / ens.len() as f64)
}

/// Kernel geometry for an ensemble over a dataset.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub units: usize,
    pub width: usize,
    pub paired: bool,
}

impl Layout {
    pub fn of(ens: &ParticleEnsemble) -> Self {
        match ens.space() {
            Space::Euclidean => Layout { units: 2 * ens.len(), width: ens.dim() + 1, paired: true },
            Space::Sphere => Layout { units: ens.len(), width: ens.dim(), paired: false },
        }
    }

    #[inline(always)]
    pub fn sign(&self, unit: usize) -> f64 {
        if self.paired && unit % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }
}

pub(crate) fn inputs<'a>(ens: &ParticleEnsemble, data: &'a Dataset) -> Result<&'a [f64]> {
    if data.n == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.d != ens.dim() {
        return Err(Error::DimensionMismatch { expected: ens.dim(), found: data.d });
    }
    Ok(match ens.space() {
        Space::Euclidean => &data.augmented,
        Space::Sphere => &data.inputs,
    })
}

/// Phase-one products of a training step: predictions on every sample plus
/// the activation slopes `φ'(⟨x_i, unit⟩)` reused by the gradient phase.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    version: u64,
    n: usize,
    units: usize,
    predictions: Vec<f64>,
    slopes: Vec<f64>,
    slopes_live: bool,
}

impl Evaluation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_current(&self, ens: &ParticleEnsemble) -> bool {
        self.version == ens.version()
    }

    pub(crate) fn ensure_current(&self, ens: &ParticleEnsemble) -> Result<()> {
        if self.version != ens.version() {
            return Err(Error::StaleCache { cache: self.version, ensemble: ens.version() });
        }
        Ok(())
    }
}

/// Computes predictions and slopes for a block of sample rows.
fn evaluate_block(
    layout: Layout,
    act: &Activation,
    w: &[f64],
    x_rows: &[f64],
    inv_m: f64,
    pre: &mut [f64],
    preds: &mut [f64],
) {
    let rows = preds.len();
    gemm(
        rows,
        layout.width,
        layout.units,
        1.0,
        x_rows,
        (layout.width, 1),
        w,
        (1, layout.width),
        0.0,
        pre,
        (layout.units, 1),
    );
    for (row, p) in pre.chunks_exact_mut(layout.units).zip(preds.iter_mut()) {
        let mut sum = 0.0;
        if layout.paired {
            for pair in row.chunks_exact_mut(2) {
                let (a, sa) = act.value_slope(pair[0]);
                let (b, sb) = act.value_slope(pair[1]);
                sum += a - b;
                pair[0] = sa;
                pair[1] = sb;
            }
        } else {
            for z in row.iter_mut() {
                let (a, sa) = act.value_slope(*z);
                sum += a;
                *z = sa;
            }
        }
        *p = sum * inv_m;
    }
}

/// Phase one: predictions `ŷ(x_i)` for all samples.
pub fn evaluate(
    ens: &ParticleEnsemble,
    act: &Activation,
    data: &Dataset,
    parallel: bool,
    out: &mut Evaluation,
) -> Result<()> {
    act.check(ens)?;
    let x = inputs(ens, data)?;
    let layout = Layout::of(ens);
    let n = data.n;
    out.predictions.resize(n, 0.0);
    out.slopes.resize(n * layout.units, 0.0);
    let inv_m = 1.0 / ens.len() as f64;
    let w = ens.weights();
    let block = |(blk, (pre, preds)): (usize, (&mut [f64], &mut [f64]))| {
        let r0 = blk * ROW_BLOCK;
        let rows = preds.len();
        let xs = &x[r0 * layout.width..(r0 + rows) * layout.width];
        evaluate_block(layout, act, w, xs, inv_m, pre, preds);
    };
    let pre_chunks = out.slopes.chunks_mut(ROW_BLOCK * layout.units);
    let pred_chunks = out.predictions.chunks_mut(ROW_BLOCK);
    if parallel {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.slopes
                .par_chunks_mut(ROW_BLOCK * layout.units)
                .zip(out.predictions.par_chunks_mut(ROW_BLOCK))
                .enumerate()
                .for_each(block);
        }
        #[cfg(not(feature = "parallel"))]
        pre_chunks.zip(pred_chunks).enumerate().for_each(block);
    } else {
        pre_chunks.zip(pred_chunks).enumerate().for_each(block);
    }
    out.version = ens.version();
    out.n = n;
    out.units = layout.units;
    out.slopes_live = true;
    Ok(())
}

/// Convenience wrapper returning only the predictions.
pub fn predictions(ens: &ParticleEnsemble, act: &Activation, data: &Dataset) -> Result<Vec<f64>> {
    let mut e = Evaluation::new();
    evaluate(ens, act, data, false, &mut e)?;
    Ok(e.predictions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub risk: f64,
    pub reg: f64,
    pub total: f64,
}

/// Mean loss from precomputed predictions.
pub fn mean_loss(preds: &[f64], labels: &[f64], loss: &Loss) -> f64 {
    let s: f64 = preds.iter().zip(labels).map(|(p, y)| loss.value(p - y)).sum();
    s / preds.len() as f64
}

/// `Ĵ_λ(W) = (1/n) Σ ρ(ŷ_i − y_i) + (λ/2) R(W)`; on the sphere `R ≡ 1` is
/// reported and `λ` is ignored.
pub fn risk_from_predictions(ens: &ParticleEnsemble, preds: &[f64], labels: &[f64], loss: &Loss, lambda: f64) -> RiskBreakdown {
    let risk = mean_loss(preds, labels, loss);
    match ens.space() {
        Space::Euclidean => {
            let reg = ens.regularizer();
            RiskBreakdown { risk, reg, total: risk + 0.5 * lambda * reg }
        }
        Space::Sphere => RiskBreakdown { risk, reg: 1.0, total: risk },
    }
}

pub fn regularized_empirical_risk(
    ens: &ParticleEnsemble,
    act: &Activation,
    data: &Dataset,
    loss: &Loss,
    lambda: f64,
) -> Result<RiskBreakdown> {
    let preds = predictions(ens, act, data)?;
    Ok(risk_from_predictions(ens, &preds, &data.labels, loss, lambda))
}

/// Removes the radial component: `v − ⟨v, w⟩ w`.
#[inline]
pub(crate) fn project_tangent_in_place(w: &[f64], v: &mut [f64]) {
    let c = dot(v, w);
    for (vi, wi) in v.iter_mut().zip(w) {
        *vi -= c * wi;
    }
}

/// `∇_w Ĵ'_λ[μ_W](w_j)` for a single particle, computed sample by sample from
/// cached predictions. Sphere gradients are projected to the tangent space.
pub fn first_variation_gradient(
    ens: &ParticleEnsemble,
    act: &Activation,
    data: &Dataset,
    loss: &Loss,
    lambda: f64,
    j: usize,
    cache: &Evaluation,
) -> Result<Vec<f64>> {
    act.check(ens)?;
    cache.ensure_current(ens)?;
    let x = inputs(ens, data)?;
    if j >= ens.len() {
        return Err(Error::DimensionMismatch { expected: ens.len(), found: j });
    }
    let w = ens.particle(j);
    let mut g = vec![0.0; w.len()];
    let inv_n = 1.0 / data.n as f64;
    match act {
        Activation::Paired(phi) => {
            let h = data.d + 1;
            for i in 0..data.n {
                let xa = &x[i * h..(i + 1) * h];
                let r = loss.derivative(cache.predictions[i] - data.labels[i]) * inv_n;
                let (_, s1, _) = phi.eval(dot(xa, &w[..h]));
                let (_, s2, _) = phi.eval(dot(xa, &w[h..]));
                crate::linalg::axpy(r * s1, xa, &mut g[..h]);
                crate::linalg::axpy(-r * s2, xa, &mut g[h..]);
            }
            crate::linalg::axpy(lambda, w, &mut g);
        }
        Activation::Sphere(phi) => {
            let d = data.d;
            for i in 0..data.n {
                let xi = &x[i * d..(i + 1) * d];
                let r = loss.derivative(cache.predictions[i] - data.labels[i]) * inv_n;
                let (_, s, _) = phi.eval(dot(w, xi));
                crate::linalg::axpy(r * s, xi, &mut g);
            }
            project_tangent_in_place(w, &mut g);
        }
    }
    Ok(g)
}

/// Gradients for every particle (`m × width`, same layout as the weights).
///
/// Consumes the slopes stored by [`evaluate`]; the evaluation must be
/// refreshed before it can be used for gradients again.
pub fn first_variation_gradients(
    ens: &ParticleEnsemble,
    act: &Activation,
    data: &Dataset,
    loss: &Loss,
    lambda: f64,
    cache: &mut Evaluation,
    parallel: bool,
    out: &mut Vec<f64>,
) -> Result<()> {
    act.check(ens)?;
    cache.ensure_current(ens)?;
    if !cache.slopes_live {
        return Err(Error::StaleCache { cache: cache.version, ensemble: ens.version() });
    }
    let x = inputs(ens, data)?;
    let layout = Layout::of(ens);
    let n = data.n;
    let inv_n = 1.0 / n as f64;
    // S[i, u] = ρ'(ŷ_i − y_i) · sign_u · φ'_iu / n
    for (i, row) in cache.slopes.chunks_exact_mut(layout.units).enumerate() {
        let r = loss.derivative(cache.predictions[i] - data.labels[i]) * inv_n;
        for (u, s) in row.iter_mut().enumerate() {
            *s *= r * layout.sign(u);
        }
    }
    cache.slopes_live = false;
    out.resize(layout.units * layout.width, 0.0);
    let s = &cache.slopes;
    // G = Sᵀ X, split over blocks of units
    let block = |(blk, g): (usize, &mut [f64])| {
        let u0 = blk * ROW_BLOCK;
        let rows = g.len() / layout.width;
        gemm(
            rows,
            n,
            layout.width,
            1.0,
            &s[u0..],
            (1, layout.units),
            x,
            (layout.width, 1),
            0.0,
            g,
            (layout.width, 1),
        );
    };
    let chunk = ROW_BLOCK * layout.width;
    if parallel {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk).enumerate().for_each(block);
        }
        #[cfg(not(feature = "parallel"))]
        out.chunks_mut(chunk).enumerate().for_each(block);
    } else {
        out.chunks_mut(chunk).enumerate().for_each(block);
    }
    match ens.space() {
        Space::Euclidean => crate::linalg::axpy(lambda, ens.weights(), out),
        Space::Sphere => {
            for (g, w) in out.chunks_exact_mut(layout.width).zip(ens.weights().chunks_exact(layout.width)) {
                project_tangent_in_place(w, g);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Dataset;

    fn relu() -> SmoothRelu {
        SmoothRelu::new(3.0, 4.0).unwrap()
    }

    fn toy_data(d: usize, n: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed, Domain::Misc, 0);
        let mut x = vec![0.0; n * d];
        fill_normal(&mut rng, &mut x);
        let mut y = vec![0.0; n];
        fill_normal(&mut rng, &mut y);
        Dataset::from_parts(d, x, y, 1.3, seed, 0).unwrap()
    }

    #[test]
    fn pair_symmetry_and_zero_half() {
        let a = relu();
        let x = [0.3, -1.2, 1.0];
        let w = [0.5, 0.1, -0.2, 0.5, 0.1, -0.2];
        assert_eq!(activation_pair(&x, &w, &a).unwrap(), 0.0);
        let w = [0.5, 0.1, -0.2, 0.0, 0.0, 0.0];
        let expect = a.eval(dot(&x, &w[..3])).0 - core::f64::consts::LN_2 / 3.0;
        assert!((activation_pair(&x, &w, &a).unwrap() - expect).abs() < 1e-15);
        assert!(activation_pair(&x, &w[..4], &a).is_err());
    }

    #[test]
    fn singleton_and_swap_predictions() {
        let a = relu();
        let act = Activation::Paired(a);
        let w1 = vec![0.2, -0.4, 0.1, 0.7, 0.3, -0.5];
        let single = ParticleEnsemble::from_weights(Space::Euclidean, 2, 1, w1.clone()).unwrap();
        let x = [0.4, 1.1, 2.0];
        assert_eq!(predict(&single, &act, &x).unwrap(), activation_pair(&x, &w1, &a).unwrap());
        let mut both = w1.clone();
        both.extend_from_slice(&w1[3..]);
        both.extend_from_slice(&w1[..3]);
        let swapped = ParticleEnsemble::from_weights(Space::Euclidean, 2, 2, both).unwrap();
        assert!(predict(&swapped, &act, &x).unwrap().abs() < 1e-16);
        let same = ParticleEnsemble::from_weights(Space::Euclidean, 2, 2, [w1.clone(), w1.clone()].concat()).unwrap();
        assert!((predict(&same, &act, &x).unwrap() - activation_pair(&x, &w1, &a).unwrap()).abs() < 1e-16);
    }

    #[test]
    fn zero_weights_parity_risk_half() {
        let d = 3;
        let x = vec![1.0, -1.0, 1.0, -1.0, -1.0, 1.0];
        let data = Dataset::from_parts(d, x, vec![1.0, -1.0], 2.0, 0, 0).unwrap();
        let ens = ParticleEnsemble::from_weights(Space::Euclidean, d, 4, vec![0.0; 4 * 8]).unwrap();
        let r = regularized_empirical_risk(&ens, &Activation::Paired(relu()), &data, &Loss::Squared, 0.0).unwrap();
        assert_eq!(r.risk, 0.5);
        assert_eq!(r.total, r.risk);
    }

    #[test]
    fn batch_matches_naive_double_loop() {
        let (d, m, n) = (4, 3, 8);
        let data = toy_data(d, n, 4);
        let ens = init_gaussian(m, d, Some(0.8), 11).unwrap();
        let a = relu();
        let lambda = 0.1;
        let loss = Loss::PseudoHuber { delta: 1.0 };
        let got = regularized_empirical_risk(&ens, &Activation::Paired(a), &data, &loss, lambda).unwrap();
        let mut risk = 0.0;
        for i in 0..n {
            let xa = data.augmented_input(i);
            let mut yhat = 0.0;
            for j in 0..m {
                let w = ens.particle(j);
                let mut z1 = 0.0;
                let mut z2 = 0.0;
                for c in 0..=d {
                    z1 += xa[c] * w[c];
                    z2 += xa[c] * w[d + 1 + c];
                }
                yhat += a.eval(z1).0 - a.eval(z2).0;
            }
            yhat /= m as f64;
            risk += loss.value(yhat - data.labels[i]);
        }
        risk /= n as f64;
        let reg: f64 = ens.weights().iter().map(|v| v * v).sum::<f64>() / m as f64;
        assert!((got.risk - risk).abs() < 1e-12);
        assert!((got.reg - reg).abs() < 1e-12);
        assert!((got.total - (risk + 0.5 * lambda * reg)).abs() < 1e-12);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let data = toy_data(3, 5, 1);
        let mut ens = init_gaussian(2, 3, None, 1).unwrap();
        let act = Activation::Paired(relu());
        let mut ev = Evaluation::new();
        evaluate(&ens, &act, &data, false, &mut ev).unwrap();
        ens.weights_mut()[0] += 1.0;
        let err = first_variation_gradient(&ens, &act, &data, &Loss::Squared, 0.0, 0, &ev);
        assert!(matches!(err, Err(Error::StaleCache { .. })));
    }

    #[test]
    fn pure_regularizer_gradient() {
        let d = 2;
        let x = vec![0.5, -0.5, 1.0, 0.25];
        let ens = init_gaussian(3, d, None, 2).unwrap();
        let act = Activation::Paired(relu());
        let preds = predictions(&ens, &act, &Dataset::from_parts(d, x.clone(), vec![0.0, 0.0], 1.0, 0, 0).unwrap()).unwrap();
        // labels equal to the predictions make every residual vanish
        let data = Dataset::from_parts(d, x, preds, 1.0, 0, 0).unwrap();
        let mut ev = Evaluation::new();
        evaluate(&ens, &act, &data, false, &mut ev).unwrap();
        for lambda in [0.0, 0.3] {
            let g = first_variation_gradient(&ens, &act, &data, &Loss::Squared, lambda, 1, &ev).unwrap();
            for (gi, wi) in g.iter().zip(ens.particle(1)) {
                assert_eq!(*gi, lambda * wi);
            }
        }
    }

    #[test]
    fn batch_gradients_match_per_particle() {
        for space in [Space::Euclidean, Space::Sphere] {
            let (d, m, n) = (5, 70, 9);
            let data = toy_data(d, n, 3);
            let (ens, act) = match space {
                Space::Euclidean => (init_gaussian(m, d, Some(0.6), 5).unwrap(), Activation::Paired(relu())),
                Space::Sphere => (init_sphere_uniform(m, d, 5).unwrap(), Activation::Sphere(SphereActivation::Tanh)),
            };
            let loss = Loss::PseudoHuber { delta: 0.5 };
            let mut ev = Evaluation::new();
            evaluate(&ens, &act, &data, false, &mut ev).unwrap();
            let singles: Vec<Vec<f64>> = (0..m)
                .map(|j| first_variation_gradient(&ens, &act, &data, &loss, 0.2, j, &ev).unwrap())
                .collect();
            let mut all = Vec::new();
            first_variation_gradients(&ens, &act, &data, &loss, 0.2, &mut ev, false, &mut all).unwrap();
            for (j, g) in singles.iter().enumerate() {
                for (a, b) in g.iter().zip(&all[j * ens.width()..(j + 1) * ens.width()]) {
                    assert!((a - b).abs() < 1e-13, "{space:?}");
                }
            }
            // slopes were consumed
            assert!(first_variation_gradients(&ens, &act, &data, &loss, 0.2, &mut ev, false, &mut all).is_err());
        }
    }

    #[test]
    fn negation_symmetry() {
        let data = toy_data(3, 6, 8);
        let ens = init_gaussian(5, 3, None, 3).unwrap();
        let act = Activation::Paired(relu());
        let mut swapped = ens.weights().to_vec();
        for row in swapped.chunks_exact_mut(8) {
            let (a, b) = row.split_at_mut(4);
            a.swap_with_slice(b);
        }
        let neg = ParticleEnsemble::from_weights(Space::Euclidean, 3, 5, swapped).unwrap();
        let p = predictions(&ens, &act, &data).unwrap();
        let q = predictions(&neg, &act, &data).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn sphere_rows_must_be_unit() {
        assert!(matches!(
            ParticleEnsemble::from_weights(Space::Sphere, 2, 1, vec![1.0, 1.0]),
            Err(Error::NotUnit { .. })
        ));
    }
}

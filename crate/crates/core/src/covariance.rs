//! Covariance structures for the input law and the effective dimensions they
//! induce together with a set of target directions.
//!
//! Every model is rescaled to unit operator norm at construction. Structured
//! models (isotropic, spiked, power-law) apply `Σ` and `Σ^{1/2}` in `O(d)`;
//! explicit matrices are eigendecomposed once and applied densely.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, symmetric_eigen, Mat};
use crate::math::{powf, sqrt};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const UNIT_FROBENIUS_TOL: f64 = 1e-10;
const DEGENERATE_R_X_SQ: f64 = 1e-300;

/// Shape of the covariance, independent of the ambient dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceKind {
    Isotropic,
    /// `(I + α θθᵀ)/(1 + α)` with `α = d^γ₂` and spike-target overlap `d^{-γ₁}`.
    Spiked { gamma1: f64, gamma2: f64 },
    /// Eigenvalues `i^{-α}`; target alignment with the i-th eigenvector decays as `i^{-γ}`.
    PowerLaw { alpha: f64, gamma: f64 },
    /// Explicit symmetric PSD matrix.
    Explicit { matrix: Mat },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub d: usize,
    #[serde(flatten)]
    pub kind: CovarianceKind,
}

impl CovarianceSpec {
    pub fn isotropic(d: usize) -> Self {
        Self { d, kind: CovarianceKind::Isotropic }
    }

    pub fn spiked(d: usize, gamma1: f64, gamma2: f64) -> Self {
        Self { d, kind: CovarianceKind::Spiked { gamma1, gamma2 } }
    }

    pub fn power_law(d: usize, alpha: f64, gamma: f64) -> Self {
        Self { d, kind: CovarianceKind::PowerLaw { alpha, gamma } }
    }

    pub fn explicit(matrix: Mat) -> Self {
        Self { d: matrix.rows, kind: CovarianceKind::Explicit { matrix } }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d", "ambient dimension must be positive"));
        }
        match &self.kind {
            CovarianceKind::Isotropic => {}
            CovarianceKind::Spiked { gamma1, gamma2 } => {
                if !(0.0..=0.5).contains(gamma1) {
                    return Err(invalid("gamma1", format!("{gamma1} not in [0, 1/2]")));
                }
                if !(0.0..=1.0).contains(gamma2) {
                    return Err(invalid("gamma2", format!("{gamma2} not in [0, 1]")));
                }
            }
            CovarianceKind::PowerLaw { alpha, gamma } => {
                if !(alpha.is_finite() && *alpha >= 0.0) {
                    return Err(invalid("alpha", format!("{alpha} must be nonnegative")));
                }
                if !(gamma.is_finite() && *gamma >= 0.0) {
                    return Err(invalid("gamma", format!("{gamma} must be nonnegative")));
                }
            }
            CovarianceKind::Explicit { matrix } => {
                if matrix.rows != self.d || matrix.cols != self.d {
                    return Err(Error::DimensionMismatch { expected: self.d, found: matrix.rows });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Structure {
    Isotropic,
    Spiked { alpha: f64, theta: Vec<f64> },
    /// Diagonal in the coordinate basis, variances in coordinate order.
    Diagonal { variances: Vec<f64> },
    Dense { matrix: Mat, sqrt: Mat, eigenvectors: Mat },
}

/// A normalized covariance with its spectral summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    d: usize,
    structure: Structure,
    eigenvalues: Vec<f64>,
    trace: f64,
    op_norm: f64,
    scale: f64,
}

/// `Σ = I + α θθᵀ` factor applied in place: `out = a·z + b·⟨θ,z⟩θ`.
fn rank_one_update(theta: &[f64], z: &[f64], a: f64, b: f64, out: &mut [f64]) {
    let t = dot(theta, z);
    for ((o, zi), th) in out.iter_mut().zip(z).zip(theta) {
        *o = a * zi + b * t * th;
    }
}

impl CovarianceModel {
    pub fn build(spec: &CovarianceSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.d;
        match &spec.kind {
            CovarianceKind::Isotropic => Ok(Self {
                d,
                structure: Structure::Isotropic,
                eigenvalues: vec![1.0; d],
                trace: d as f64,
                op_norm: 1.0,
                scale: 1.0,
            }),
            CovarianceKind::Spiked { gamma2, .. } => {
                let alpha = powf(d as f64, *gamma2);
                let mut theta = vec![0.0; d];
                theta[0] = 1.0;
                Ok(Self::spiked_with(d, alpha, theta))
            }
            CovarianceKind::PowerLaw { alpha, .. } => {
                let variances: Vec<f64> = (1..=d).map(|i| powf(i as f64, -alpha)).collect();
                let trace = variances.iter().sum();
                Ok(Self {
                    d,
                    eigenvalues: variances.clone(),
                    structure: Structure::Diagonal { variances },
                    trace,
                    op_norm: 1.0,
                    scale: 1.0,
                })
            }
            CovarianceKind::Explicit { matrix } => Self::from_dense(matrix),
        }
    }

    fn spiked_with(d: usize, alpha: f64, theta: Vec<f64>) -> Self {
        let mut eigenvalues = vec![1.0 / (1.0 + alpha); d];
        eigenvalues[0] = 1.0;
        Self {
            d,
            structure: Structure::Spiked { alpha, theta },
            eigenvalues,
            trace: (d as f64 + alpha) / (1.0 + alpha),
            op_norm: 1.0,
            scale: 1.0,
        }
    }

    fn from_dense(matrix: &Mat) -> Result<Self> {
        let d = matrix.rows;
        let magnitude = matrix.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..d {
            for j in 0..i {
                asym = asym.max((matrix.get(i, j) - matrix.get(j, i)).abs());
            }
        }
        if asym > SYMMETRY_TOL * magnitude {
            return Err(Error::NotSymmetric { max_asymmetry: asym });
        }
        let mut sym = matrix.clone();
        for i in 0..d {
            for j in 0..i {
                let avg = 0.5 * (matrix.get(i, j) + matrix.get(j, i));
                sym.data[i * d + j] = avg;
                sym.data[j * d + i] = avg;
            }
        }
        let (mut values, vectors) = symmetric_eigen(&sym);
        let min = values.last().copied().unwrap_or(0.0);
        if min < -PSD_TOL * magnitude {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        let top = values[0];
        if top <= 0.0 {
            return Err(invalid("matrix", "covariance is identically zero"));
        }
        for v in values.iter_mut() {
            *v = v.max(0.0) / top;
        }
        for v in sym.data.iter_mut() {
            *v /= top;
        }
        let mut root = Mat::zeros(d, d);
        for (r, &lam) in values.iter().enumerate() {
            let s = sqrt(lam);
            let q = vectors.row(r);
            for i in 0..d {
                let qi = s * q[i];
                for j in 0..d {
                    root.data[i * d + j] += qi * q[j];
                }
            }
        }
        let trace = values.iter().sum();
        Ok(Self {
            d,
            structure: Structure::Dense { matrix: sym, sqrt: root, eigenvectors: vectors },
            eigenvalues: values,
            trace,
            op_norm: 1.0,
            scale: top,
        })
    }

    /// Replaces the spike direction of a spiked model.
    pub fn with_spike_direction(&self, theta: &[f64]) -> Result<Self> {
        match &self.structure {
            Structure::Spiked { alpha, .. } => {
                if theta.len() != self.d {
                    return Err(Error::DimensionMismatch { expected: self.d, found: theta.len() });
                }
                let n = norm(theta);
                if (n - 1.0).abs() > 1e-10 {
                    return Err(Error::NotUnit { norm: n });
                }
                Ok(Self::spiked_with(self.d, *alpha, theta.to_vec()))
            }
            _ => Err(Error::UnsupportedSpec("spike direction on a non-spiked model")),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Nonincreasing eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    /// `c_x = tr(Σ)^{1/2}`; use [`Self::trace`] where `c_x²` is needed.
    pub fn c_x(&self) -> f64 {
        sqrt(self.trace)
    }

    /// Factor the original matrix was divided by (1 for structured kinds).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self.structure, Structure::Isotropic)
    }

    pub fn spike(&self) -> Option<(f64, &[f64])> {
        match &self.structure {
            Structure::Spiked { alpha, theta } => Some((*alpha, theta)),
            _ => None,
        }
    }

    /// Variances in coordinate order when the model is diagonal in the standard basis.
    pub fn diagonal(&self) -> Option<&[f64]> {
        match &self.structure {
            Structure::Diagonal { variances } => Some(variances),
            _ => None,
        }
    }

    /// Rows are eigenvectors matching [`Self::eigenvalues`], for explicit models.
    pub fn dense_eigenvectors(&self) -> Option<&Mat> {
        match &self.structure {
            Structure::Dense { eigenvectors, .. } => Some(eigenvectors),
            _ => None,
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: len });
        }
        Ok(())
    }

    /// `out = Σ v`
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(v.len())?;
        self.check_dim(out.len())?;
        match &self.structure {
            Structure::Isotropic => out.copy_from_slice(v),
            Structure::Spiked { alpha, theta } => {
                let a = 1.0 / (1.0 + alpha);
                rank_one_update(theta, v, a, alpha * a, out);
            }
            Structure::Diagonal { variances } => {
                for ((o, vi), s) in out.iter_mut().zip(v).zip(variances) {
                    *o = s * vi;
                }
            }
            Structure::Dense { matrix, .. } => matrix.mul_vec(v, out),
        }
        Ok(())
    }

    /// `out = Σ^{1/2} z`
    pub fn apply_sqrt_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(z.len())?;
        self.check_dim(out.len())?;
        match &self.structure {
            Structure::Isotropic => out.copy_from_slice(z),
            Structure::Spiked { alpha, theta } => {
                let s = sqrt(1.0 + alpha);
                rank_one_update(theta, z, 1.0 / s, (s - 1.0) / s, out);
            }
            Structure::Diagonal { variances } => {
                for ((o, zi), s) in out.iter_mut().zip(z).zip(variances) {
                    *o = sqrt(*s) * zi;
                }
            }
            Structure::Dense { sqrt, .. } => sqrt.mul_vec(z, out),
        }
        Ok(())
    }

    pub fn apply_sqrt(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d];
        self.apply_sqrt_into(z, &mut out)?;
        Ok(out)
    }

    /// `vᵀ Σ v`
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v.len())?;
        Ok(match &self.structure {
            Structure::Isotropic => dot(v, v),
            Structure::Spiked { alpha, theta } => {
                let t = dot(theta, v);
                (dot(v, v) + alpha * t * t) / (1.0 + alpha)
            }
            Structure::Diagonal { variances } => {
                v.iter().zip(variances).map(|(x, s)| s * x * x).sum()
            }
            Structure::Dense { matrix, .. } => {
                let mut tmp = vec![0.0; self.d];
                matrix.mul_vec(v, &mut tmp);
                dot(v, &tmp)
            }
        })
    }

    /// Materializes `Σ` (for small `d`).
    pub fn dense(&self) -> Mat {
        let d = self.d;
        let mut out = Mat::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.apply_into(&e, &mut col).expect("dimension checked");
            for i in 0..d {
                out.data[i * d + j] = col[i];
            }
        }
        out
    }

    fn check_directions(&self, u: &Mat) -> Result<()> {
        self.check_dim(u.cols)?;
        if u.rows == 0 {
            return Err(invalid("U", "at least one direction is required"));
        }
        let f = u.frobenius_sq();
        if (f - 1.0).abs() > UNIT_FROBENIUS_TOL {
            return Err(invalid("U", format!("rows must be u_i/sqrt(k) with ||U||_F^2 = 1, got {f}")));
        }
        Ok(())
    }

    /// `r_x² = ‖Σ^{1/2} Uᵀ‖_F² = Σ_rows u Σ uᵀ`
    pub fn r_x_sq(&self, u: &Mat) -> Result<f64> {
        self.check_directions(u)?;
        let mut total = 0.0;
        for i in 0..u.rows {
            total += self.quad_form(u.row(i))?;
        }
        Ok(total)
    }

    /// `d_eff = tr(Σ) / ‖Σ^{1/2} Uᵀ‖_F²`
    pub fn effective_dimension(&self, u: &Mat) -> Result<f64> {
        let r = self.r_x_sq(u)?;
        if !(r > DEGENERATE_R_X_SQ) {
            return Err(Error::DegenerateDirections { r_x_sq: r });
        }
        Ok(self.trace / r)
    }

    /// Scale-invariant translation of the k-parity effective dimension:
    /// `k · tr(Σ) · Σ_i ‖Σ^{1/2} u_i‖^{-2}` with unit `u_i`.
    pub fn nosw_effective_dimension(&self, u: &Mat) -> Result<f64> {
        self.check_directions(u)?;
        let k = u.rows as f64;
        let mut inv_sum = 0.0;
        for i in 0..u.rows {
            // rows carry the 1/sqrt(k) factor
            let q = k * self.quad_form(u.row(i))?;
            if !(q > DEGENERATE_R_X_SQ) {
                return Err(Error::RankDeficient { index: i });
            }
            inv_sum += 1.0 / q;
        }
        Ok(k * self.trace * inv_sum)
    }
}

/// Predicted exponent `e` in `d_eff ≍ d^e` for the structured families.
pub fn predict_deff_exponent(kind: &CovarianceKind) -> Result<f64> {
    match *kind {
        CovarianceKind::Isotropic => Ok(1.0),
        CovarianceKind::Spiked { gamma1, gamma2 } => Ok(1.0 - (gamma2 - 2.0 * gamma1).max(0.0)),
        CovarianceKind::PowerLaw { alpha, gamma } => Ok(if alpha < 1.0 {
            if gamma < 1.0 {
                (2.0 - alpha - gamma).min(1.0)
            } else {
                1.0 - alpha
            }
        } else {
            (1.0 - gamma).max(0.0)
        }),
        CovarianceKind::Explicit { .. } => Err(Error::UnsupportedSpec("explicit")),
    }
}

//! Theory-shaped hyperparameter planning from the covariance/task geometry.
//!
//! Constants hidden by the asymptotic notation are set to one. The computed
//! step size and iteration budget that follow from the worst-case LSI bound
//! are reported in log space; they are far too small/large to drive a run.

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::diagnostics::{lsi_bound_euclidean, LsiBound};
use crate::error::{invalid, Result};
use crate::linalg::Mat;
use crate::math::{exp, ln, sqrt};

/// `r̃_x = r_x (1 + σ_u √(2(q+1) ln n))`
pub fn tail_radius(r_x: f64, sigma_u: f64, q: f64, n: f64) -> f64 {
    let log_n = ln(n).max(0.0);
    r_x * (1.0 + sigma_u * sqrt(2.0 * (q + 1.0) * log_n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanInput {
    /// Training sample count.
    pub n: f64,
    pub lambda_tilde: f64,
    pub epsilon: f64,
    pub q: f64,
    pub kappa: f64,
    /// Practical step size; defaults to `0.1 / (κ r̄_x²)`.
    pub eta_practical: Option<f64>,
    pub m: usize,
    pub iterations: usize,
    pub sigma_u: f64,
    /// Lipschitz constant of the loss.
    pub loss_lipschitz: f64,
}

impl PlanInput {
    pub fn new(n: f64) -> Self {
        Self {
            n,
            lambda_tilde: 0.1,
            epsilon: 0.5,
            q: 1.0,
            kappa: 4.0,
            eta_practical: None,
            m: 1024,
            iterations: 1000,
            sigma_u: 1.0,
            loss_lipschitz: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda: f64,
    pub lambda_tilde: f64,
    pub beta: f64,
    pub eta_theoretical: f64,
    pub ln_eta_theoretical: f64,
    pub eta_practical: f64,
    pub kappa: f64,
    pub iota: f64,
    pub m: usize,
    pub iterations: usize,
    pub epsilon: f64,
    pub q: f64,
    pub r_x: f64,
    pub r_x_tilde: f64,
    pub r_x_bar: f64,
    pub c_x: f64,
    pub d_eff: f64,
    /// `ln` of the worst-case LSI constant at the planned (β, λ, ι).
    pub ln_c_lsi: f64,
    /// `ln` of the iteration count `C_LSI β / η_theoretical`.
    pub ln_iterations_theoretical: f64,
    /// `ln` of the width `C_LSI r̄⁴ κ² /(βλ) · (d/β + r̄²/λ)`.
    pub ln_width_theoretical: f64,
}

/// `β = (d_eff + r̃_x²/r_x²) / (ε² λ̃)`
pub fn inverse_temperature(d_eff: f64, tail_ratio: f64, epsilon: f64, lambda_tilde: f64) -> f64 {
    (d_eff + tail_ratio) / (epsilon * epsilon * lambda_tilde)
}

pub fn plan_hyperparameters(
    model: &CovarianceModel,
    u: &Mat,
    input: &PlanInput,
) -> Result<HyperParams> {
    if !(input.n >= 2.0) {
        return Err(invalid("n", "at least two samples are required"));
    }
    if !(input.lambda_tilde > 0.0 && input.lambda_tilde <= 1.0) {
        return Err(invalid("lambda_tilde", "must lie in (0, 1]"));
    }
    if !(input.epsilon > 0.0 && input.epsilon <= 1.0) {
        return Err(invalid("epsilon", "must lie in (0, 1]"));
    }
    if !(input.kappa > 1.0) {
        return Err(invalid("kappa", "must exceed 1"));
    }
    let d = model.dim() as f64;
    let r_x_sq = model.r_x_sq(u)?;
    let d_eff = model.effective_dimension(u)?;
    let r_x = sqrt(r_x_sq);
    let r_x_tilde = tail_radius(r_x, input.sigma_u, input.q, input.n);
    let r_x_bar = sqrt(model.op_norm()).max(r_x_tilde);
    let tail_ratio = (r_x_tilde * r_x_tilde) / r_x_sq;
    let lambda = input.lambda_tilde * r_x_sq;
    let beta = inverse_temperature(d_eff, tail_ratio, input.epsilon, input.lambda_tilde);
    let iota = tail_ratio / input.lambda_tilde;
    let ln_c_lsi = match lsi_bound_euclidean(beta, lambda, iota, input.loss_lipschitz) {
        LsiBound::Finite { ln_value, .. } | LsiBound::Overflow { ln_value } => ln_value,
        LsiBound::Infeasible => f64::INFINITY,
    };
    let rb2 = r_x_bar * r_x_bar;
    let ln_eta =
        -(ln_c_lsi + 2.0 * ln(input.kappa) + 2.0 * ln(rb2) + ln(d + rb2 / lambda));
    let ln_width = ln_c_lsi + 2.0 * ln(rb2) + 2.0 * ln(input.kappa) - ln(beta * lambda)
        + ln(d / beta + rb2 / lambda);
    let eta_practical = input.eta_practical.unwrap_or(0.1 / (input.kappa * rb2));
    Ok(HyperParams {
        lambda,
        lambda_tilde: input.lambda_tilde,
        beta,
        eta_theoretical: exp(ln_eta),
        ln_eta_theoretical: ln_eta,
        eta_practical,
        kappa: input.kappa,
        iota,
        m: input.m,
        iterations: input.iterations,
        epsilon: input.epsilon,
        q: input.q,
        r_x,
        r_x_tilde,
        r_x_bar,
        c_x: model.c_x(),
        d_eff,
        ln_c_lsi,
        ln_iterations_theoretical: ln_c_lsi + ln(beta) - ln_eta,
        ln_width_theoretical: ln_width,
    })
}

//! Losses `ℓ(ŷ, y) = ρ(ŷ - y)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Loss {
    /// `t²/2`
    Squared,
    /// `δ²(√(1 + (t/δ)²) − 1)`
    PseudoHuber { delta: f64 },
}

impl Default for Loss {
    fn default() -> Self {
        Loss::PseudoHuber { delta: 1.0 }
    }
}

impl Loss {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::PseudoHuber { delta } if !(delta > 0.0 && delta.is_finite()) => {
                Err(invalid("delta", "must be positive and finite"))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Loss::Squared => 0.5 * t * t,
            Loss::PseudoHuber { delta } => {
                let r = t / delta;
                delta * delta * (sqrt(1.0 + r * r) - 1.0)
            }
        }
    }

    /// `ρ'(t)`
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Loss::Squared => t,
            Loss::PseudoHuber { delta } => {
                let r = t / delta;
                t / sqrt(1.0 + r * r)
            }
        }
    }

    /// `ρ''(t)`
    #[inline]
    pub fn second_derivative(&self, t: f64) -> f64 {
        match *self {
            Loss::Squared => 1.0,
            Loss::PseudoHuber { delta } => {
                let r = t / delta;
                let s = 1.0 + r * r;
                1.0 / (s * sqrt(s))
            }
        }
    }

    /// `C_ρ`, the Lipschitz constant of `ρ` (`∞` for the squared loss).
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Loss::Squared => f64::INFINITY,
            Loss::PseudoHuber { delta } => delta,
        }
    }

    /// `C'_ρ`, the Lipschitz constant of `ρ'`.
    pub fn derivative_lipschitz(&self) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_huber_bounds() {
        let l = Loss::PseudoHuber { delta: 0.7 };
        assert_eq!(l.value(0.0), 0.0);
        for i in -200..=200 {
            let t = i as f64 * 0.25;
            assert!(l.derivative(t).abs() <= 0.7 + 1e-15);
            let s = l.second_derivative(t);
            assert!(s > 0.0 && s <= 1.0);
            let h = 1e-6;
            let fd = (l.value(t + h) - l.value(t - h)) / (2.0 * h);
            assert!((fd - l.derivative(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn squared_constants() {
        assert_eq!(Loss::Squared.value(-1.0), 0.5);
        assert!(Loss::Squared.lipschitz().is_infinite());
        assert_eq!(Loss::Squared.derivative_lipschitz(), 1.0);
    }
}

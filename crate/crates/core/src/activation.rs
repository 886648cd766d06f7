//! Scalar activations: the capped smooth ReLU used by the Euclidean network
//! and the bounded-derivative activations used on the sphere.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{exp, ln_1p, sqrt, tanh};

const JUNCTION_TOL: f64 = 1e-8;
const CHECK_GRID: usize = 10_000;

/// `κ⁻¹ ln(1 + e^{κz})` up to `ι/2`, a quintic Hermite blend to the cap `ι`,
/// then constant. `C²` everywhere with `0 ≤ φ ≤ ι`, `0 ≤ φ' ≤ 1`, `|φ''| ≤ κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothRelu {
    kappa: f64,
    iota: f64,
    knee: f64,
    sat: f64,
    width: f64,
    /// Blend polynomial in `s = (z - knee)/width`, ascending powers.
    coeffs: [f64; 6],
}

#[inline(always)]
fn softplus(kappa: f64, z: f64) -> (f64, f64, f64) {
    let kz = kappa * z;
    let t = exp(-kz.abs());
    let value = (kz.max(0.0) + ln_1p(t)) / kappa;
    let inv = 1.0 / (1.0 + t);
    let slope = if kz >= 0.0 { inv } else { t * inv };
    let curv = kappa * t * inv * inv;
    (value, slope, curv)
}

impl SmoothRelu {
    pub fn new(kappa: f64, iota: f64) -> Result<Self> {
        if !(kappa > 1.0 && kappa.is_finite()) {
            return Err(invalid("kappa", "sharpness must be finite and exceed 1"));
        }
        if !(iota > 1.0 && iota.is_finite()) {
            return Err(invalid("iota", "cap must be finite and exceed 1"));
        }
        let knee = 0.5 * iota;
        let (p0, p1, p2) = softplus(kappa, knee);
        let gap = iota - p0;
        if !(gap > 0.0) {
            return Err(Error::ActivationConstraint { constraint: "phi(iota/2) < iota", observed: p0 });
        }
        let width = 2.0 * gap / p1.max(0.25);
        let v1 = p1 * width;
        let v2 = p2 * width * width;
        let coeffs = [
            p0,
            v1,
            0.5 * v2,
            10.0 * gap - 6.0 * v1 - 1.5 * v2,
            -15.0 * gap + 8.0 * v1 + 1.5 * v2,
            6.0 * gap - 3.0 * v1 - 0.5 * v2,
        ];
        let act = Self { kappa, iota, knee, sat: knee + width, width, coeffs };
        act.verify()?;
        Ok(act)
    }

    fn blend(&self, z: f64) -> (f64, f64, f64) {
        let s = (z - self.knee) / self.width;
        let c = &self.coeffs;
        let v = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
        let d1 = c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])));
        let d2 = 2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]));
        (v, d1 / self.width, d2 / (self.width * self.width))
    }

    fn verify(&self) -> Result<()> {
        let close = |a: (f64, f64, f64), b: (f64, f64, f64)| {
            (a.0 - b.0).abs().max((a.1 - b.1).abs()).max((a.2 - b.2).abs())
        };
        let knee_gap = close(softplus(self.kappa, self.knee), self.blend(self.knee));
        if knee_gap > JUNCTION_TOL {
            return Err(Error::ActivationConstraint { constraint: "C2 at iota/2", observed: knee_gap });
        }
        let sat_gap = close((self.iota, 0.0, 0.0), self.blend(self.sat));
        if sat_gap > JUNCTION_TOL {
            return Err(Error::ActivationConstraint { constraint: "C2 at saturation", observed: sat_gap });
        }
        let lo = -10.0 * self.iota;
        let hi = 10.0 * self.iota;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=CHECK_GRID {
            let z = lo + (hi - lo) * i as f64 / CHECK_GRID as f64;
            let (v, d1, d2) = self.eval(z);
            if !(v >= 0.0 && v <= self.iota * (1.0 + 1e-12)) {
                return Err(Error::ActivationConstraint { constraint: "0 <= phi <= iota", observed: v });
            }
            if !(-1e-12..=1.0 + 1e-12).contains(&d1) {
                return Err(Error::ActivationConstraint { constraint: "0 <= phi' <= 1", observed: d1 });
            }
            if d2.abs() > self.kappa * (1.0 + 1e-12) {
                return Err(Error::ActivationConstraint { constraint: "|phi''| <= kappa", observed: d2 });
            }
            if v < prev - 1e-12 {
                return Err(Error::ActivationConstraint { constraint: "monotone", observed: v - prev });
            }
            prev = v;
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    /// Abscissa beyond which the activation is constant at `ι`.
    pub fn saturation(&self) -> f64 {
        self.sat
    }

    /// `(φ, φ', φ'')`
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        if z <= self.knee {
            softplus(self.kappa, z)
        } else if z < self.sat {
            self.blend(z)
        } else {
            (self.iota, 0.0, 0.0)
        }
    }

    /// `(φ, φ')`, the hot path of prediction and gradient kernels.
    #[inline(always)]
    pub fn value_slope(&self, z: f64) -> (f64, f64) {
        if z <= self.knee {
            let kz = self.kappa * z;
            let t = exp(-kz.abs());
            let inv = 1.0 / (1.0 + t);
            ((kz.max(0.0) + ln_1p(t)) / self.kappa, if kz >= 0.0 { inv } else { t * inv })
        } else if z < self.sat {
            let (v, d1, _) = self.blend(z);
            (v, d1)
        } else {
            (self.iota, 0.0)
        }
    }
}

/// Activation `φ` for sphere particles, `Ψ(x; w) = φ(⟨w, x⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SphereActivation {
    #[default]
    Tanh,
    Linear,
}

impl SphereActivation {
    /// `(φ, φ', φ'')`
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        match self {
            SphereActivation::Tanh => {
                let t = tanh(z);
                let s = 1.0 - t * t;
                (t, s, -2.0 * t * s)
            }
            SphereActivation::Linear => (z, 1.0, 0.0),
        }
    }

    /// `sup |φ'|`
    pub fn slope_sup(&self) -> f64 {
        1.0
    }

    /// `sup |φ''|`
    pub fn curvature_sup(&self) -> f64 {
        match self {
            SphereActivation::Tanh => 4.0 / (3.0 * sqrt(3.0)),
            SphereActivation::Linear => 0.0,
        }
    }

    /// Confirms `|φ'|, |φ''| ≤ 1` on a grid.
    pub fn verify(&self) -> Result<()> {
        for i in 0..=CHECK_GRID {
            let z = -20.0 + 40.0 * i as f64 / CHECK_GRID as f64;
            let (_, d1, d2) = self.eval(z);
            if d1.abs() > 1.0 + 1e-12 {
                return Err(Error::ActivationConstraint { constraint: "|phi'| <= 1", observed: d1 });
            }
            if d2.abs() > 1.0 + 1e-12 {
                return Err(Error::ActivationConstraint { constraint: "|phi''| <= 1", observed: d2 });
            }
        }
        Ok(())
    }
}

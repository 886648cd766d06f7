//! Scalar transcendental functions that work with and without `std`.
//!
//! With `std` these forward to the inherent `f64` methods (platform libm);
//! without it they forward to the pure-Rust `libm` crate.

macro_rules! unary {
    ($($name:ident => $std:ident, $libm:ident;)*) => {
        $(
            #[inline(always)]
            pub fn $name(x: f64) -> f64 {
                #[cfg(feature = "std")]
                {
                    x.$std()
                }
                #[cfg(not(feature = "std"))]
                {
                    libm::$libm(x)
                }
            }
        )*
    };
}

unary! {
    sqrt => sqrt, sqrt;
    exp => exp, exp;
    ln => ln, log;
    ln_1p => ln_1p, log1p;
    tanh => tanh, tanh;
    sin => sin, sin;
    cos => cos, cos;
    ceil => ceil, ceil;
    round => round, round;
    asinh => asinh, asinh;
}

#[inline(always)]
pub fn powf(x: f64, y: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.powf(y)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::pow(x, y)
    }
}

/// `ln(n!)` by direct summation; only used for small Hermite degrees.
pub fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| ln(k as f64)).sum()
}

use std::f64::consts::PI;

use crate::error::{Error, Result};

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// Γ(x) for real `x` away from the poles at 0, −1, −2, …
pub fn gamma(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("gamma of NaN".into()));
    }
    if is_pole(x) {
        return Err(Error::Domain(format!("gamma has a pole at {x}")));
    }
    Ok(libm::tgamma(x))
}

/// ln|Γ(x)| for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// 1/Γ(x), an entire function: zero at the poles of Γ, finite (possibly
/// underflowing) for large positive `x`.
pub fn rgamma(x: f64) -> f64 {
    if is_pole(x) {
        return 0.0;
    }
    if x > 170.0 {
        return (-libm::lgamma(x)).exp();
    }
    if x < -170.0 {
        // Reflection: 1/Γ(x) = Γ(1−x) sin(πx) / π
        let s = (PI * x).sin();
        let mag = (libm::lgamma(1.0 - x) + (s.abs() / PI).ln()).exp();
        return mag.copysign(s);
    }
    1.0 / libm::tgamma(x)
}

//! Complete elliptic integrals K(m), E(m) and T(m) = E(m) - (1-m)K(m).
//!
//! Parameter convention: `m` is the parameter (k^2), so
//! K(m) = int_0^{pi/2} (1 - m sin^2 t)^{-1/2} dt.
//! Values for m < 0 go through the imaginary-modulus transform.

use crate::error::{finite, Error, Result};
use std::f64::consts::FRAC_PI_2;

const MAX_ITER: usize = 40;
const EPSILON: f64 = 1e-15;
/// Distance from m = 1 inside which E returns 1 and K refuses.
const NEAR_ONE: f64 = 1e-12;

/// AGM of (1, sqrt(1-m)) with the tail sum_{n>=1} 2^{n-1} c_n^2.
///
/// c_n is advanced as c_{n+1} = c_n^2 / (2 (a_n + b_n)), which avoids the
/// cancellation in (a - b) / 2, so E and T stay accurate for small m.
fn agm(m: f64) -> (f64, f64) {
    let mut a = 1.0;
    let mut b = (1.0 - m).sqrt();
    let mut c = 0.5 * m / (1.0 + b);
    let mut tail = 0.0;
    let mut pow = 0.5;
    for _ in 0..MAX_ITER {
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
        pow *= 2.0;
        tail += pow * c * c;
        if c <= EPSILON * a {
            break;
        }
        c = c * c / (2.0 * (a + b));
    }
    (a, tail)
}

/// Complete elliptic integral of the first kind.
pub fn elliptic_k(m: f64) -> Result<f64> {
    finite(m, "elliptic_k argument")?;
    if m >= 1.0 - NEAR_ONE {
        return Err(Error::Domain(format!("K(m) requires m < 1, got {m}")));
    }
    if m < 0.0 {
        let q = -m / (1.0 - m);
        return Ok(elliptic_k(q)? / (1.0 - m).sqrt());
    }
    let (a, _) = agm(m);
    Ok(FRAC_PI_2 / a)
}

/// Complete elliptic integral of the second kind. E(1) = 1.
pub fn elliptic_e(m: f64) -> Result<f64> {
    finite(m, "elliptic_e argument")?;
    if m > 1.0 {
        return Err(Error::Domain(format!("E(m) requires m <= 1, got {m}")));
    }
    if m >= 1.0 - NEAR_ONE {
        return Ok(1.0);
    }
    if m < 0.0 {
        let q = -m / (1.0 - m);
        return Ok((1.0 - m).sqrt() * elliptic_e(q)?);
    }
    let (a, tail) = agm(m);
    Ok(FRAC_PI_2 / a * (1.0 - 0.5 * m - tail))
}

/// Both integrals from a single AGM pass, for 0 <= m < 1.
pub fn elliptic_ke(m: f64) -> Result<(f64, f64)> {
    finite(m, "elliptic_ke argument")?;
    if !(0.0..1.0 - NEAR_ONE).contains(&m) {
        return Ok((elliptic_k(m)?, elliptic_e(m)?));
    }
    let (a, tail) = agm(m);
    let k = FRAC_PI_2 / a;
    Ok((k, k * (1.0 - 0.5 * m - tail)))
}

/// T(m) = E(m) - (1-m) K(m).
///
/// Within `NEAR_ONE` of 1 the leading logarithmic asymptote
/// 1 - (m1/2)(ln(4/sqrt(m1)) + 1/2), m1 = 1 - m, is used; T(1) = 1.
pub fn elliptic_t(m: f64) -> Result<f64> {
    finite(m, "elliptic_t argument")?;
    if m > 1.0 {
        return Err(Error::Domain(format!("T(m) requires m <= 1, got {m}")));
    }
    if m >= 1.0 - NEAR_ONE {
        let m1 = 1.0 - m;
        if m1 == 0.0 {
            return Ok(1.0);
        }
        return Ok(1.0 - 0.5 * m1 * ((4.0 / m1.sqrt()).ln() + 0.5));
    }
    if m < 0.0 {
        let (k, e) = elliptic_ke(m)?;
        return Ok(e - (1.0 - m) * k);
    }
    let (a, tail) = agm(m);
    Ok(FRAC_PI_2 / a * (0.5 * m - tail))
}

/// Derivatives (K', E', T') with respect to m on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticDerivatives {
    pub dk: f64,
    pub de: f64,
    pub dt: f64,
}

pub fn elliptic_derivatives(m: f64) -> Result<EllipticDerivatives> {
    finite(m, "elliptic_derivatives argument")?;
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::Domain(format!("derivatives need 0 < m < 1, got {m}")));
    }
    let (k, e) = elliptic_ke(m)?;
    Ok(EllipticDerivatives {
        dk: (e - (1.0 - m) * k) / (2.0 * m * (1.0 - m)),
        de: (e - k) / (2.0 * m),
        dt: 0.5 * k,
    })
}

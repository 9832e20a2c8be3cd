//! The output function g(p, y) and estimates of its divergence.

use super::linalg::Scalar;
use crate::elliptic::{elliptic_e, elliptic_t};
use crate::error::{Error, Result};
use crate::se_dynamics::bisect;
use crate::se_maps::Field;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

/// Floor on |p| in the unsmoothed complex divergence.
pub const P_FLOOR: f64 = 1e-12;
const SOLVE_TOL: f64 = 1e-14;

/// g(p, y) = y p / |p| - p, or y p / sqrt(|p|^2 + eps) - p when `eps > 0`.
///
/// At p = 0 with `eps = 0` the direction is taken to be 1.
pub fn g_amp<T: Scalar>(p: &[T], y: &[f64], eps: f64) -> Result<Vec<T>> {
    check_len(p.len(), y.len())?;
    Ok(p.iter().zip(y).map(|(&p, &y)| g_scalar(p, y, eps)).collect())
}

#[inline]
pub(crate) fn g_scalar<T: Scalar>(p: T, y: f64, eps: f64) -> T {
    let dir = if eps > 0.0 {
        p.scale(1.0 / (p.norm_sqr() + eps).sqrt())
    } else {
        p.direction()
    };
    dir.scale(y) - p
}

/// How the divergence term is estimated from (p, y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DivergenceMethod {
    /// Average of the pointwise derivative of g.
    Empirical,
    /// Fit the Gaussian model (Z, P) to the moments of (y, |p|) and return the
    /// model's divergence in closed form.
    #[default]
    GaussianPlugIn,
}

/// Empirical divergence (1/m) sum dg/dp.
///
/// Complex: dg/dp = y (|p|^2/2 + eps) / (|p|^2 + eps)^{3/2} - 1, which is
/// y / (2 |p|) - 1 at eps = 0 (|p| floored at [`P_FLOOR`]).
/// Real: y eps / (p^2 + eps)^{3/2} - 1. The real derivative at eps = 0 has a
/// point mass at p = 0, so eps = 0 is rejected.
pub fn divergence_p<T: Scalar>(p: &[T], y: &[f64], eps: f64) -> Result<f64> {
    check_len(p.len(), y.len())?;
    if p.is_empty() {
        return Err(Error::Dimension("empty p".into()));
    }
    let sum: f64 = match T::FIELD {
        Field::Complex if eps == 0.0 => p
            .iter()
            .zip(y)
            .map(|(p, &y)| y / (2.0 * p.modulus().max(P_FLOOR)))
            .sum(),
        Field::Complex => p
            .iter()
            .zip(y)
            .map(|(p, &y)| {
                let r2 = p.norm_sqr();
                y * (0.5 * r2 + eps) / (r2 + eps).powf(1.5)
            })
            .sum(),
        Field::Real if eps == 0.0 => {
            return Err(Error::Domain(
                "the real divergence needs eps > 0 or the Gaussian plug-in".into(),
            ))
        }
        Field::Real => p
            .iter()
            .zip(y)
            .map(|(p, &y)| y * eps / (p.norm_sqr() + eps).powf(1.5))
            .sum(),
    };
    Ok(sum / p.len() as f64 - 1.0)
}

/// Divergence of the unsmoothed g under a Gaussian fit of (Z, P).
///
/// Writes P = c Z + d U with U independent of Z and matches E[Y^2], E[|P|^2]
/// and E[|P| Y]; the fitted correlation then gives E[dg/dp] in closed form.
/// Complex: with m = |corr|^2, E[|P| Y] / sqrt(E|P|^2 E Y^2) = (T(m) + E(m)) / 2
/// and the divergence is E(m) sqrt(E Y^2 / E|P|^2) / 2 - 1.
/// Real: with r = |corr|, the moment ratio is (2/pi)(sqrt(1-r^2) + r asin r)
/// and the divergence is (2/pi) sqrt((1-r^2) E Y^2 / E P^2) - 1.
/// The moment ratio is clamped into the attainable range.
pub fn divergence_plugin<T: Scalar>(p: &[T], y: &[f64]) -> Result<f64> {
    check_len(p.len(), y.len())?;
    let k = p.len() as f64;
    if p.is_empty() {
        return Err(Error::Dimension("empty p".into()));
    }
    let vy = y.iter().map(|y| y * y).sum::<f64>() / k;
    let vp = p.iter().map(|p| p.norm_sqr()).sum::<f64>() / k;
    let cross = p.iter().zip(y).map(|(p, &y)| p.modulus() * y).sum::<f64>() / k;
    if !(vy > 0.0 && vp > 0.0) {
        return Err(Error::Domain("plug-in divergence needs nonzero p and y".into()));
    }
    let ratio = cross / (vy * vp).sqrt();
    match T::FIELD {
        Field::Complex => {
            let c = ratio.clamp(FRAC_PI_4, 1.0);
            let m = solve_increasing(|m| Ok(0.5 * (elliptic_t(m)? + elliptic_e(m)?)), c, "complex plug-in")?;
            Ok(0.5 * elliptic_e(m)? * (vy / vp).sqrt() - 1.0)
        }
        Field::Real => {
            let c = (ratio / (2.0 / std::f64::consts::PI)).clamp(1.0, FRAC_PI_2);
            let r = solve_increasing(|r| Ok((1.0 - r * r).sqrt() + r * r.asin()), c, "real plug-in")?;
            Ok((2.0 / std::f64::consts::PI) * ((1.0 - r * r) * vy / vp).sqrt() - 1.0)
        }
    }
}

/// Solve f(x) = c on [0, 1] for f increasing with c in [f(0), f(1)].
fn solve_increasing<F: Fn(f64) -> Result<f64>>(f: F, c: f64, what: &'static str) -> Result<f64> {
    if c <= f(0.0)? {
        return Ok(0.0);
    }
    if c >= f(1.0)? {
        return Ok(1.0);
    }
    bisect(|x| Ok(f(x)? - c), 0.0, 1.0, SOLVE_TOL, what)
}

/// Divergence by the chosen method.
pub fn divergence<T: Scalar>(p: &[T], y: &[f64], eps: f64, method: DivergenceMethod) -> Result<f64> {
    match method {
        DivergenceMethod::Empirical => divergence_p(p, y, eps),
        DivergenceMethod::GaussianPlugIn => divergence_plugin(p, y),
    }
}

fn check_len(p: usize, y: usize) -> Result<()> {
    if p != y {
        return Err(Error::Dimension(format!("p has {p} entries, y has {y}")));
    }
    Ok(())
}

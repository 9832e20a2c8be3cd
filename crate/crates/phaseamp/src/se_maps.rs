//! State-evolution maps psi1 and psi2 for the complex and real models.
//!
//! Complex states are stored phase-aligned: `alpha` is a signed real number
//! standing for |alpha| e^{i theta} with theta in {0, pi}. The maps are
//! phase-equivariant, so nothing is lost; [`psi1_phase`] and [`psi2_phase`]
//! accept a general complex alpha.
//!
//! Two evaluation paths exist for the complex maps: the elliptic closed form
//! (default) and direct adaptive quadrature of the defining integrals
//! ([`psi_quadrature`]). A Monte-Carlo oracle ([`psi_mc_oracle`]) estimates the
//! defining expectations from samples.

use crate::elliptic::{elliptic_e, elliptic_t};
use crate::error::{finite, Error, Result};
use crate::quad::simpson;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Real,
    Complex,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Real => "real",
            Field::Complex => "complex",
        })
    }
}

impl FromStr for Field {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Field::Real),
            "complex" => Ok(Field::Complex),
            other => Err(Error::Domain(format!("unknown field '{other}'"))),
        }
    }
}

/// Oversampling ratio, noise variance and field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub delta: f64,
    pub sigma_w2: f64,
    pub field: Field,
}

impl ModelParams {
    pub fn new(field: Field, delta: f64, sigma_w2: f64) -> Result<Self> {
        let p = ModelParams { delta, sigma_w2, field };
        p.validate()?;
        Ok(p)
    }

    pub fn noiseless(field: Field, delta: f64) -> Self {
        ModelParams { delta, sigma_w2: 0.0, field }
    }

    pub fn validate(&self) -> Result<()> {
        finite(self.delta, "delta")?;
        finite(self.sigma_w2, "sigma_w2")?;
        if self.delta <= 0.0 {
            return Err(Error::Domain(format!("delta must be positive, got {}", self.delta)));
        }
        if self.sigma_w2 < 0.0 {
            return Err(Error::Domain(format!("sigma_w2 must be >= 0, got {}", self.sigma_w2)));
        }
        Ok(())
    }
}

/// A point (alpha, sigma^2) of the SE recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SEState {
    pub alpha: f64,
    pub sigma2: f64,
}

impl SEState {
    pub fn new(alpha: f64, sigma2: f64) -> Self {
        SEState { alpha, sigma2 }
    }

    fn check(&self) -> Result<f64> {
        finite(self.alpha, "alpha")?;
        finite(self.sigma2, "sigma2")?;
        if self.sigma2 < 0.0 {
            return Err(Error::Domain(format!("sigma2 must be >= 0, got {}", self.sigma2)));
        }
        if self.alpha == 0.0 && self.sigma2 == 0.0 {
            return Err(Error::OriginState);
        }
        Ok(self.sigma2.sqrt())
    }
}

fn check_s(s: f64) -> Result<()> {
    finite(s, "s")?;
    if s < 0.0 {
        return Err(Error::Domain(format!("s must be >= 0, got {s}")));
    }
    Ok(())
}

/// phi1(s) = int_0^{pi/2} sin^2 t / (sin^2 t + s^2)^{1/2} dt = sqrt(1+s^2) T(1/(1+s^2)).
pub fn phi1(s: f64) -> Result<f64> {
    check_s(s)?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let s2 = s * s;
    let r = (1.0 + s2).sqrt();
    Ok(f64::min(1.0, r * elliptic_t(1.0 / (1.0 + s2))?))
}

/// phi3(s) = sqrt(1+s^2) E(1/(1+s^2)) = int_0^{pi/2} (sin^2 t + s^2)^{1/2} dt.
pub fn phi3(s: f64) -> Result<f64> {
    check_s(s)?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let r = (1.0 + s * s).sqrt();
    Ok(r * elliptic_e(1.0 / (1.0 + s * s))?)
}

/// phi2 = phi1 + phi3.
pub fn phi2(s: f64) -> Result<f64> {
    Ok(phi1(s)? + phi3(s)?)
}

/// phi1 by adaptive quadrature of its defining integral.
pub fn phi1_quadrature(s: f64) -> Result<f64> {
    check_s(s)?;
    let s2 = s * s;
    Ok(simpson(
        |t| {
            let q = t.sin().powi(2);
            if q + s2 == 0.0 {
                0.0
            } else {
                q / (q + s2).sqrt()
            }
        },
        0.0,
        FRAC_PI_2,
        1e-13,
    ))
}

/// phi3 by adaptive quadrature of its defining integral.
pub fn phi3_quadrature(s: f64) -> Result<f64> {
    check_s(s)?;
    let s2 = s * s;
    Ok(simpson(|t| (t.sin().powi(2) + s2).sqrt(), 0.0, FRAC_PI_2, 1e-13))
}

/// psi1 for the state's field. Independent of delta and the noise level.
pub fn psi1(state: SEState, params: &ModelParams) -> Result<f64> {
    let sigma = state.check()?;
    let a = state.alpha;
    match params.field {
        Field::Complex => {
            if a == 0.0 {
                return Ok(0.0);
            }
            Ok(a.signum() * phi1(sigma / a.abs())?)
        }
        Field::Real => Ok(a.atan2(sigma) / FRAC_PI_2),
    }
}

/// psi2 for the state's field.
pub fn psi2(state: SEState, params: &ModelParams) -> Result<f64> {
    let sigma = state.check()?;
    let a = state.alpha;
    let d = params.delta;
    let w = params.sigma_w2;
    match params.field {
        Field::Complex => {
            let a = a.abs();
            let inner = if a == 0.0 {
                state.sigma2 + 1.0 - FRAC_PI_2 * sigma
            } else {
                a * a + state.sigma2 + 1.0 - a * phi2(sigma / a)?
            };
            Ok(4.0 / d * inner + 4.0 * w)
        }
        Field::Real => {
            let inner =
                a * a + state.sigma2 + 1.0 - 4.0 * sigma / PI - 4.0 * a / PI * a.atan2(sigma);
            Ok(inner / d + w)
        }
    }
}

/// Both maps at once: the next SE state.
pub fn psi(state: SEState, params: &ModelParams) -> Result<SEState> {
    Ok(SEState { alpha: psi1(state, params)?, sigma2: psi2(state, params)? })
}

/// Complex psi1 at a general complex alpha.
pub fn psi1_phase(alpha: Complex64, sigma2: f64) -> Result<Complex64> {
    let r = alpha.norm();
    let v = psi1(SEState::new(r, sigma2), &ModelParams::noiseless(Field::Complex, 1.0))?;
    if r == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(alpha / r * v)
}

/// Complex psi2 at a general complex alpha.
pub fn psi2_phase(alpha: Complex64, sigma2: f64, params: &ModelParams) -> Result<f64> {
    let p = ModelParams { field: Field::Complex, ..*params };
    psi2(SEState::new(alpha.norm(), sigma2), &p)
}

/// Complex (psi1, psi2) by direct quadrature of the defining integrals.
pub fn psi_quadrature(state: SEState, params: &ModelParams) -> Result<(f64, f64)> {
    state.check()?;
    let a = state.alpha.abs();
    let a2 = a * a;
    let s2 = state.sigma2;
    let root = |t: f64| (a2 * t.sin().powi(2) + s2).sqrt();
    let i1 = simpson(
        |t| {
            let r = root(t);
            if r == 0.0 {
                0.0
            } else {
                a * t.sin().powi(2) / r
            }
        },
        0.0,
        FRAC_PI_2,
        1e-13,
    );
    let i2 = simpson(
        |t| {
            let r = root(t);
            if r == 0.0 {
                0.0
            } else {
                (2.0 * a2 * t.sin().powi(2) + s2) / r
            }
        },
        0.0,
        FRAC_PI_2,
        1e-13,
    );
    let p1 = if state.alpha < 0.0 { -i1 } else { i1 };
    let p2 = 4.0 / params.delta * (a2 + s2 + 1.0 - i2) + 4.0 * params.sigma_w2;
    Ok((p1, p2))
}

/// Partial derivative of psi2 with respect to sigma^2.
///
/// Complex: (4/(delta a)) (a - f(s)) with f(s) = E(1/(1+s^2)) / (2 sqrt(1+s^2)),
/// s = sigma/a; its limit at (1, 0) is 2/delta. Real: (1/delta)(1 - (2/pi) sigma/(a^2+sigma^2)),
/// with the sigma -> 0 limit 1/delta.
pub fn dpsi2_dsigma2(state: SEState, params: &ModelParams) -> Result<f64> {
    let sigma = state.check()?;
    let d = params.delta;
    let a = state.alpha.abs();
    match params.field {
        Field::Complex => {
            if sigma == 0.0 {
                if a == 1.0 {
                    return Ok(2.0 / d);
                }
                return Err(Error::Domain(format!(
                    "complex dpsi2/dsigma2 at sigma2 = 0 is only defined at |alpha| = 1, got {a}"
                )));
            }
            if a == 0.0 {
                return Ok(4.0 / d * (1.0 - PI / (4.0 * sigma)));
            }
            let s = sigma / a;
            let r = (1.0 + s * s).sqrt();
            let f = elliptic_e(1.0 / (1.0 + s * s))? / (2.0 * r);
            Ok(4.0 / (d * a) * (a - f))
        }
        Field::Real => {
            if sigma == 0.0 {
                return Ok(1.0 / d);
            }
            Ok((1.0 - 2.0 / PI * sigma / (a * a + state.sigma2)) / d)
        }
    }
}

/// Sample means of the SE expectations with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub psi1_hat: Complex64,
    pub psi2_hat: f64,
    pub stderr1: f64,
    pub stderr2: f64,
    pub n_samples: usize,
}

/// Draws a field-Gaussian of variance `var` (complex: independent parts of variance var/2).
pub(crate) fn field_gaussian<R: Rng>(rng: &mut R, field: Field, var: f64) -> Complex64 {
    match field {
        Field::Real => {
            let x: f64 = rng.sample(StandardNormal);
            Complex64::new(var.sqrt() * x, 0.0)
        }
        Field::Complex => {
            let sd = (0.5 * var).sqrt();
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            Complex64::new(sd * x, sd * y)
        }
    }
}

/// Monte-Carlo estimate of psi1, psi2 from their defining expectations.
///
/// Z, B are field-Gaussian with variance 1/delta, W is real Gaussian with variance
/// sigma_w2, P = alpha Z + sigma B and Y = |Z| + W.
pub fn psi_mc_oracle(
    state: SEState,
    params: &ModelParams,
    n_samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    let sigma = state.check()?;
    params.validate()?;
    if n_samples < 1000 {
        return Err(Error::Domain(format!("n_samples must be >= 1000, got {n_samples}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = 1.0 / params.delta;
    let sw = params.sigma_w2.sqrt();
    let (mut s1, mut q1) = (Complex64::new(0.0, 0.0), 0.0);
    let (mut s2, mut q2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let z = field_gaussian(&mut rng, params.field, v);
        let b = field_gaussian(&mut rng, params.field, v);
        let wn: f64 = rng.sample(StandardNormal);
        let w = sw * wn;
        let p = z * state.alpha + b * sigma;
        let (x1, x2) = match params.field {
            Field::Complex => {
                let d = z.norm() * p.norm();
                let x1 = if d == 0.0 { Complex64::new(0.0, 0.0) } else { z.conj() * p / d };
                let e = p.norm() - z.norm() - w;
                (x1, 4.0 * e * e)
            }
            Field::Real => {
                let sgn = if z.re * p.re >= 0.0 { 1.0 } else { -1.0 };
                let e = z.re.abs() - p.re.abs() + w;
                (Complex64::new(sgn, 0.0), e * e)
            }
        };
        s1 += x1;
        q1 += x1.norm_sqr();
        s2 += x2;
        q2 += x2 * x2;
    }
    let n = n_samples as f64;
    let m1 = s1 / n;
    let m2 = s2 / n;
    let var1 = (q1 / n - m1.norm_sqr()).max(0.0) * n / (n - 1.0);
    let var2 = (q2 / n - m2 * m2).max(0.0) * n / (n - 1.0);
    Ok(MCEstimate {
        psi1_hat: m1,
        psi2_hat: m2,
        stderr1: (var1 / n).sqrt(),
        stderr2: (var2 / n).sqrt(),
        n_samples,
    })
}

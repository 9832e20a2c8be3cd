//! Decoupled spectral initialization for the complex model.
//!
//! x^0 = rho v with v the leading eigenvector of D = A^H diag(T(y)) A and
//! rho = ||y|| / sqrt(n). The first AMP input is p^0 = (1 - 2 tau T(y)) o A x^0
//! rather than A x^0, which keeps the SE description valid from t = 0; the
//! initial overlap is then predicted by
//! |alpha_0|^2 = (1 - delta phi2) / (1 + delta phi3), sigma_0^2 = 1 - |alpha_0|^2.
//!
//! With u = delta |Z|^2 and w = 2 tau T / (1 - 2 tau T):
//! phi1 = E[(u - 1) w], phi2 = E[w^2], phi3 = E[(u - 1) w^2].

use crate::amp::{norm_sqr, stream, MeasurementInstance, Scalar, SensingOperator};
use crate::error::{finite, Error, Result};
use crate::quad::simpson_panels;
use crate::se_dynamics::bisect;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Upper end of the tau bracket; the pole of w sits at tau = 1/2.
pub const TAU_MAX: f64 = 0.5 * (1.0 - 1e-9);
/// Power steps used to estimate lambda_max(A^H A) for the shift.
const GRAM_STEPS: usize = 20;
/// Relative safety factor on the estimated lambda_max(A^H A).
const SHIFT_MARGIN: f64 = 0.1;
const QUAD_UPPER: f64 = 60.0;
const QUAD_PIECES: usize = 60;
const QUAD_TOL: f64 = 1e-13;
const TAU_TOL: f64 = 1e-14;
const START_STREAM: u64 = 7;

/// How the phi expectations are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expectation {
    /// One-dimensional quadrature over u ~ Exp(1); noiseless only.
    Quadrature,
    /// Seeded Monte Carlo over (Z, W).
    MonteCarlo { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConfig {
    pub delta: f64,
    pub sigma_w2: f64,
    /// Stop when successive Rayleigh quotients differ by less than this and the
    /// eigen-residual is below ten times this.
    pub power_tol: f64,
    pub power_max_iters: usize,
    pub expectation: Expectation,
}

impl SpectralConfig {
    /// Quadrature when noiseless, 10^6-sample Monte Carlo otherwise.
    pub fn new(delta: f64, sigma_w2: f64) -> Self {
        let expectation = if sigma_w2 == 0.0 {
            Expectation::Quadrature
        } else {
            Expectation::MonteCarlo { n_samples: 1_000_000, seed: 0 }
        };
        SpectralConfig { delta, sigma_w2, power_tol: 1e-5, power_max_iters: 5000, expectation }
    }

    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        finite(self.sigma_w2, "sigma_w2")?;
        if self.sigma_w2 < 0.0 {
            return Err(Error::Domain(format!("sigma_w2 must be >= 0, got {}", self.sigma_w2)));
        }
        if !(self.power_tol > 0.0 && self.power_tol.is_finite()) {
            return Err(Error::Domain(format!("power_tol must be positive, got {}", self.power_tol)));
        }
        if self.power_max_iters == 0 {
            return Err(Error::Domain("power_max_iters must be positive".into()));
        }
        check_method(self.sigma_w2, self.expectation)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    finite(delta, "delta")?;
    if delta <= 2.0 {
        return Err(Error::Domain(format!("spectral initialization needs delta > 2, got {delta}")));
    }
    Ok(())
}

fn check_method(sigma_w2: f64, method: Expectation) -> Result<()> {
    match method {
        Expectation::Quadrature if sigma_w2 > 0.0 => {
            Err(Error::Domain("quadrature expectations are noiseless only".into()))
        }
        Expectation::MonteCarlo { n_samples, .. } if n_samples < 1000 => {
            Err(Error::Domain(format!("need at least 1000 samples, got {n_samples}")))
        }
        _ => Ok(()),
    }
}

/// T(y) = (delta y^2 - 1) / (delta y^2 + sqrt(delta) - 1).
pub fn preprocess_t(y: f64, delta: f64) -> Result<f64> {
    finite(y, "y")?;
    finite(delta, "delta")?;
    if delta <= 1.0 {
        return Err(Error::Domain(format!("T(y) needs delta > 1, got {delta}")));
    }
    let dy2 = delta * y * y;
    Ok((dy2 - 1.0) / (dy2 + delta.sqrt() - 1.0))
}

/// out = A^H (t o (A v)) without forming D.
pub fn apply_d<A: SensingOperator<Complex64>>(
    a: &A,
    t_vals: &[f64],
    v: &[Complex64],
    out: &mut [Complex64],
) -> Result<()> {
    if t_vals.len() != a.rows() || v.len() != a.cols() || out.len() != a.cols() {
        return Err(Error::Dimension(format!(
            "operator {}x{}, t has {}, v has {}, out has {}",
            a.rows(),
            a.cols(),
            t_vals.len(),
            v.len(),
            out.len()
        )));
    }
    a.apply_map_adjoint(v, &mut |i, z| z * t_vals[i], out);
    Ok(())
}

/// Leading eigenpair of D from shifted power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// ||v||^2 = n, first coordinate real and nonnegative.
    pub v: Vec<Complex64>,
    pub eigenvalue: f64,
    /// ||D v - lambda v|| / ||v||
    pub residual: f64,
    pub iterations: usize,
    pub shift: f64,
}

/// Eigenvector of the largest signed eigenvalue of D.
///
/// D + sI with s = max(0, -min T) lambda_max(A^H A) (1 + margin) is positive
/// semidefinite, so its dominant eigenvector is the one wanted.
pub fn top_eigvec<A: SensingOperator<Complex64>>(
    a: &A,
    t_vals: &[f64],
    cfg: &SpectralConfig,
) -> Result<EigenResult> {
    cfg.validate()?;
    let n = a.cols();
    if t_vals.len() != a.rows() {
        return Err(Error::Dimension(format!("t has {}, m = {}", t_vals.len(), a.rows())));
    }
    let min_t = t_vals.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min_t < 0.0 {
        let ones = vec![1.0; a.rows()];
        let gram = power_estimate(a, &ones, GRAM_STEPS);
        -min_t * gram * (1.0 + SHIFT_MARGIN)
    } else {
        0.0
    };

    let mut v = start_vector(n);
    let mut dv = vec![Complex64::zero(); n];
    let mut prev = f64::NAN;
    for iter in 1..=cfg.power_max_iters {
        apply_d(a, t_vals, &v, &mut dv)?;
        let vv = norm_sqr(&v);
        let lambda = inner_re(&v, &dv) / vv;
        let residual = dv
            .iter()
            .zip(&v)
            .map(|(d, x)| (d - x * lambda).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / vv.sqrt();
        finite(lambda, "Rayleigh quotient")?;
        if (lambda - prev).abs() < cfg.power_tol && residual <= 10.0 * cfg.power_tol {
            fix_phase(&mut v);
            return Ok(EigenResult { v, eigenvalue: lambda, residual, iterations: iter, shift });
        }
        prev = lambda;
        let scale = 1.0 / (norm_sqr(&dv) + 2.0 * shift * inner_re(&v, &dv) + shift * shift * vv).sqrt();
        for (x, d) in v.iter_mut().zip(&dv) {
            *x = (d + *x * shift) * scale;
        }
    }
    Err(Error::NoConvergence { what: "shifted power iteration", iters: cfg.power_max_iters })
}

/// Rayleigh quotient of A^H diag(t) A after `steps` plain power steps.
fn power_estimate<A: SensingOperator<Complex64>>(a: &A, t: &[f64], steps: usize) -> f64 {
    let mut v = start_vector(a.cols());
    let mut dv = vec![Complex64::zero(); a.cols()];
    let mut lambda = 0.0;
    for _ in 0..steps {
        a.apply_map_adjoint(&v, &mut |i, z| z * t[i], &mut dv);
        lambda = inner_re(&v, &dv) / norm_sqr(&v);
        let s = 1.0 / norm_sqr(&dv).sqrt();
        for (x, d) in v.iter_mut().zip(&dv) {
            *x = d * s;
        }
    }
    lambda
}

fn start_vector(n: usize) -> Vec<Complex64> {
    let mut rng: ChaCha8Rng = stream(0, START_STREAM);
    let v: Vec<Complex64> = (0..n).map(|_| Complex64::gaussian(&mut rng, 1.0)).collect();
    let s = 1.0 / norm_sqr(&v).sqrt();
    v.into_iter().map(|x| x * s).collect()
}

fn inner_re(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u.conj() * v).re).sum()
}

/// Scale to ||v||^2 = n and rotate so that <v, e_1> is real and nonnegative.
fn fix_phase(v: &mut [Complex64]) {
    let n = v.len() as f64;
    let rot = v[0].direction().conj() * (n / norm_sqr(v)).sqrt();
    v.iter_mut().for_each(|x| *x *= rot);
    v[0] = Complex64::new(v[0].norm(), 0.0);
}

/// An expectation with its Monte-Carlo standard error (0 for quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    pub stderr: f64,
}

/// Prepared law of (u - 1, T(Y)); reusing one sample set keeps the tau
/// solvers deterministic and monotone.
enum PhiModel {
    Quadrature { delta: f64 },
    Samples { s: Vec<f64>, t: Vec<f64> },
}

impl PhiModel {
    fn new(delta: f64, sigma_w2: f64, method: Expectation) -> Result<Self> {
        check_delta(delta)?;
        finite(sigma_w2, "sigma_w2")?;
        if sigma_w2 < 0.0 {
            return Err(Error::Domain(format!("sigma_w2 must be >= 0, got {sigma_w2}")));
        }
        check_method(sigma_w2, method)?;
        match method {
            Expectation::Quadrature => Ok(PhiModel::Quadrature { delta }),
            Expectation::MonteCarlo { n_samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = Vec::with_capacity(n_samples);
                let mut t = Vec::with_capacity(n_samples);
                for _ in 0..n_samples {
                    let z = Complex64::gaussian(&mut rng, 1.0 / delta);
                    let w = f64::gaussian(&mut rng, sigma_w2);
                    s.push(delta * z.norm_sqr() - 1.0);
                    t.push(preprocess_t(z.norm() + w, delta)?);
                }
                Ok(PhiModel::Samples { s, t })
            }
        }
    }

    fn phi(&self, k: u8, tau: f64) -> Result<PhiValue> {
        finite(tau, "tau")?;
        if !(0.0..0.5).contains(&tau) {
            return Err(Error::Pole(format!("tau = {tau} is outside [0, 1/2)")));
        }
        let term = move |s: f64, t: f64| -> Result<f64> {
            let denom = 1.0 - 2.0 * tau * t;
            if !(denom > 0.0) {
                return Err(Error::Pole(format!("1 - 2 tau T = {denom} at tau = {tau}")));
            }
            let w = 2.0 * tau * t / denom;
            Ok(match k {
                1 => s * w,
                2 => w * w,
                3 => s * w * w,
                _ => unreachable!(),
            })
        };
        match self {
            PhiModel::Quadrature { delta } => {
                let sd = delta.sqrt();
                let f = |u: f64| {
                    let t = (u - 1.0) / (u + sd - 1.0);
                    term(u - 1.0, t).map_or(f64::NAN, |v| v * (-u).exp())
                };
                let value = simpson_panels(f, 0.0, QUAD_UPPER, QUAD_PIECES, QUAD_TOL);
                if !value.is_finite() {
                    return Err(Error::Pole(format!("phi{k} integrand is not finite at tau = {tau}")));
                }
                Ok(PhiValue { value, stderr: 0.0 })
            }
            PhiModel::Samples { s, t } => {
                let n = s.len() as f64;
                let (mut sum, mut sq) = (0.0, 0.0);
                for (&s, &t) in s.iter().zip(t) {
                    let v = term(s, t)?;
                    sum += v;
                    sq += v * v;
                }
                let mean = sum / n;
                let var = (sq / n - mean * mean).max(0.0) * n / (n - 1.0);
                Ok(PhiValue { value: mean, stderr: (var / n).sqrt() })
            }
        }
    }
}

/// phi_k(delta, tau) for k in {1, 2, 3}.
pub fn varphi(k: u8, delta: f64, tau: f64, sigma_w2: f64, method: Expectation) -> Result<PhiValue> {
    if !(1..=3).contains(&k) {
        return Err(Error::Domain(format!("phi index must be 1, 2 or 3, got {k}")));
    }
    PhiModel::new(delta, sigma_w2, method)?.phi(k, tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSolution {
    /// Root of phi1 = 1/delta on (0, tau_star).
    pub tau: f64,
    /// Root of phi2 = 1/delta, or [`TAU_MAX`] if phi2 stays below 1/delta.
    pub tau_star: f64,
    /// tau_star is the bracket end rather than an interior root.
    pub tau_star_at_pole: bool,
}

/// Solve for tau_star, then tau.
///
/// Noiseless, phi2(delta, 1/2) = E[(u - 1)^2] / delta = 1/delta exactly, so
/// phi2 - 1/delta stays negative on the open bracket and tau_star is the
/// bracket end.
pub fn solve_tau(delta: f64, sigma_w2: f64, method: Expectation) -> Result<TauSolution> {
    let model = PhiModel::new(delta, sigma_w2, method)?;
    solve_tau_with(&model, delta)
}

fn solve_tau_with(model: &PhiModel, delta: f64) -> Result<TauSolution> {
    let target = 1.0 / delta;
    let f2 = |tau: f64| Ok(model.phi(2, tau)?.value - target);
    let (tau_star, at_pole) = if f2(TAU_MAX)? <= 0.0 {
        (TAU_MAX, true)
    } else {
        (bisect(f2, 0.0, TAU_MAX, TAU_TOL, "tau_star: phi2 = 1/delta")?, false)
    };
    let tau = bisect(|tau| Ok(model.phi(1, tau)?.value - target), 0.0, tau_star, TAU_TOL, "tau: phi1 = 1/delta")?;
    Ok(TauSolution { tau, tau_star, tau_star_at_pole: at_pole })
}

/// p^0 = (1 - 2 tau T(y)) o A x^0.
pub fn corrected_p0<A: SensingOperator<Complex64>>(
    a: &A,
    x0: &[Complex64],
    t_vals: &[f64],
    tau: f64,
) -> Result<Vec<Complex64>> {
    if x0.len() != a.cols() || t_vals.len() != a.rows() {
        return Err(Error::Dimension(format!(
            "operator {}x{}, x0 has {}, t has {}",
            a.rows(),
            a.cols(),
            x0.len(),
            t_vals.len()
        )));
    }
    let mut p = vec![Complex64::zero(); a.rows()];
    a.apply(x0, &mut p);
    for (p, &t) in p.iter_mut().zip(t_vals) {
        let k = 1.0 - 2.0 * tau * t;
        if !(k > 0.0) {
            return Err(Error::Pole(format!("multiplier 1 - 2 tau T = {k}")));
        }
        *p *= k;
    }
    Ok(p)
}

/// (|alpha_0|^2, sigma_0^2) from the phi expectations at tau.
pub fn predict_init_overlap(delta: f64, tau: f64, sigma_w2: f64, method: Expectation) -> Result<(f64, f64)> {
    let model = PhiModel::new(delta, sigma_w2, method)?;
    overlap_with(&model, delta, tau)
}

fn overlap_with(model: &PhiModel, delta: f64, tau: f64) -> Result<(f64, f64)> {
    let phi2 = model.phi(2, tau)?.value;
    let phi3 = model.phi(3, tau)?.value;
    let a2 = (1.0 - delta * phi2) / (1.0 + delta * phi3);
    if !(0.0..=1.0).contains(&a2) {
        return Err(Error::Domain(format!("predicted |alpha0|^2 = {a2} is outside [0, 1]")));
    }
    Ok((a2, 1.0 - a2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    /// rho v
    pub x0: Vec<Complex64>,
    /// (1 - 2 tau T(y)) o A x^0
    pub p0: Vec<Complex64>,
    pub rho: f64,
    pub tau: TauSolution,
    pub predicted_alpha0_sq: f64,
    pub predicted_sigma0_sq: f64,
    pub eigen: EigenResult,
}

/// Full pipeline on one instance; hand `x0` and `p0` to AMP.
pub fn spectral_initialize<A: SensingOperator<Complex64>>(
    inst: &MeasurementInstance<Complex64, A>,
    cfg: &SpectralConfig,
) -> Result<SpectralResult> {
    cfg.validate()?;
    if (inst.delta() - cfg.delta).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "config delta {} differs from instance delta {}",
            cfg.delta,
            inst.delta()
        )));
    }
    let t_vals = inst
        .y
        .iter()
        .map(|&y| preprocess_t(y, cfg.delta))
        .collect::<Result<Vec<f64>>>()?;
    let eigen = top_eigvec(&inst.a, &t_vals, cfg)?;
    let rho = (inst.y.iter().map(|y| y * y).sum::<f64>() / inst.n() as f64).sqrt();
    let x0: Vec<Complex64> = eigen.v.iter().map(|v| v * rho).collect();
    let model = PhiModel::new(cfg.delta, cfg.sigma_w2, cfg.expectation)?;
    let tau = solve_tau_with(&model, cfg.delta)?;
    let p0 = corrected_p0(&inst.a, &x0, &t_vals, tau.tau)?;
    let (a2, s2) = overlap_with(&model, cfg.delta, tau.tau)?;
    Ok(SpectralResult { x0, p0, rho, tau, predicted_alpha0_sq: a2, predicted_sigma0_sq: s2, eigen })
}

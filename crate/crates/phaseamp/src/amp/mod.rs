//! Finite-n AMP.A for real and complex Gaussian sensing.
//!
//! Complex iteration:
//!   p^t     = A x^t - (2/delta) g(p^{t-1}, y)
//!   x^{t+1} = 2 [ -div_t x^t + A^H g(p^t, y) ]
//! Real iteration uses coefficients 1/delta and 1 with A^T.
//! g(p^{-1}, y) = 0, so p^0 = A x^0 unless a p^0 is supplied.

mod denoiser;
mod instance;
mod linalg;

pub use denoiser::{divergence, divergence_p, divergence_plugin, g_amp, DivergenceMethod, P_FLOOR};
use denoiser::g_scalar;
pub use instance::{generate_instance, MeasurementInstance, ModelConfig, NoiseConvention, SignalPrior};
pub use linalg::{DenseMatrix, Scalar, SensingOperator};

use crate::error::{Error, Result};
use crate::se_maps::Field;
use num_complex::Complex64;

pub(crate) use instance::stream;
pub(crate) use linalg::{inner, norm_sqr};

/// Step options shared by all iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpOptions {
    /// Smoothing of g; 0 uses the exact p/|p|.
    pub epsilon: f64,
    pub divergence: DivergenceMethod,
    /// Stop [`run_amp`] early once the AMSE falls below this.
    pub stop_amse: Option<f64>,
}

impl Default for AmpOptions {
    /// Unsmoothed g with the Gaussian plug-in divergence.
    ///
    /// The complex empirical average of y / (2|p|) has infinite variance, and
    /// the real pointwise derivative does not exist, so both fields default to
    /// the plug-in estimate.
    fn default() -> Self {
        AmpOptions { epsilon: 0.0, divergence: DivergenceMethod::GaussianPlugIn, stop_amse: None }
    }
}

impl AmpOptions {
    /// Unsmoothed g with the empirical complex divergence (|p| floored).
    pub fn empirical() -> Self {
        AmpOptions { epsilon: 0.0, divergence: DivergenceMethod::Empirical, stop_amse: None }
    }

    /// Smoothed g with the matching empirical divergence.
    pub fn smoothed(epsilon: f64) -> Self {
        AmpOptions { epsilon, divergence: DivergenceMethod::Empirical, stop_amse: None }
    }

    fn validate(&self, field: Field) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if field == Field::Real && self.divergence == DivergenceMethod::Empirical && self.epsilon == 0.0 {
            return Err(Error::Domain("real empirical divergence needs epsilon > 0".into()));
        }
        Ok(())
    }
}

/// Iterate x^t with the memory needed for the next step.
#[derive(Debug, Clone, PartialEq)]
pub struct AMPState<T> {
    pub t: usize,
    pub x: Vec<T>,
    /// p^{t-1}; empty before the first step.
    pub p: Vec<T>,
    /// g(p^{t-1}, y); zero at t = 0.
    pub g_prev: Vec<T>,
    /// Divergence used to form x^t.
    pub divergence: Option<f64>,
    /// Replaces A x^0 at t = 0 when set.
    pub p0: Option<Vec<T>>,
    /// tau_{t-1} of the regularized iteration.
    pub tau: f64,
    /// lambda_{t-1} of the regularized iteration.
    pub lambda_prev: f64,
}

impl<T: Scalar> AMPState<T> {
    pub fn new(x0: Vec<T>, m: usize) -> Self {
        AMPState {
            t: 0,
            x: x0,
            p: Vec::new(),
            g_prev: vec![T::zero(); m],
            divergence: None,
            p0: None,
            tau: 0.0,
            lambda_prev: 1.0,
        }
    }

    pub fn with_p0(mut self, p0: Vec<T>) -> Self {
        self.p0 = Some(p0);
        self
    }

    fn check<A: SensingOperator<T>>(&self, inst: &MeasurementInstance<T, A>) -> Result<()> {
        let (m, n) = (inst.m(), inst.n());
        if self.x.len() != n || self.g_prev.len() != m {
            return Err(Error::Dimension(format!(
                "state has x {} / g {}, instance is {m}x{n}",
                self.x.len(),
                self.g_prev.len()
            )));
        }
        if let Some(p0) = &self.p0 {
            if p0.len() != m {
                return Err(Error::Dimension(format!("p0 has {} entries, m = {m}", p0.len())));
            }
        }
        Ok(())
    }
}

/// Onsager coefficient and x scale for the field: (2/delta, 2) or (1/delta, 1).
fn coefficients(field: Field, delta: f64) -> (f64, f64) {
    match field {
        Field::Complex => (2.0 / delta, 2.0),
        Field::Real => (1.0 / delta, 1.0),
    }
}

/// One pass over A: p^t, g(p^t, y) and A^H g(p^t, y).
fn sweep<T: Scalar, A: SensingOperator<T>>(
    state: &AMPState<T>,
    inst: &MeasurementInstance<T, A>,
    onsager: f64,
    eps: f64,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let m = inst.m();
    let mut p = vec![T::zero(); m];
    let mut g = vec![T::zero(); m];
    let mut ahg = vec![T::zero(); inst.n()];
    let p0 = if state.t == 0 { state.p0.as_deref() } else { None };
    let y = &inst.y;
    let g_prev = &state.g_prev;
    let mut f = |i: usize, ax: T| {
        let pi = match p0 {
            Some(p0) => p0[i],
            None => ax - g_prev[i].scale(onsager),
        };
        let gi = g_scalar(pi, y[i], eps);
        p[i] = pi;
        g[i] = gi;
        gi
    };
    inst.a.apply_map_adjoint(&state.x, &mut f, &mut ahg);
    (p, g, ahg)
}

/// One AMP.A step.
pub fn amp_step<T: Scalar, A: SensingOperator<T>>(
    state: &AMPState<T>,
    inst: &MeasurementInstance<T, A>,
    opts: &AmpOptions,
) -> Result<AMPState<T>> {
    state.check(inst)?;
    opts.validate(T::FIELD)?;
    let (onsager, scale) = coefficients(T::FIELD, inst.delta());
    let (p, g, ahg) = sweep(state, inst, onsager, opts.epsilon);
    let div = divergence(&p, &inst.y, opts.epsilon, opts.divergence)?;
    let x = state
        .x
        .iter()
        .zip(&ahg)
        .map(|(&x, &v)| (x.scale(-div) + v).scale(scale))
        .collect();
    Ok(AMPState {
        t: state.t + 1,
        x,
        p,
        g_prev: g,
        divergence: Some(div),
        p0: None,
        tau: state.tau,
        lambda_prev: state.lambda_prev,
    })
}

/// Regularization weight of the real mu-iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuSchedule {
    Fixed(f64),
    /// mu_t = (2 + 2 div_t) / (1 + 2 tau_t), which makes lambda_t = -div_t and
    /// reproduces [`amp_step`].
    Continuation,
}

/// One step of the real mu-regularized iteration:
///
///   p^t     = A x^t - (lambda_{t-1} / delta) g_{t-1} / (-div_{t-1})
///   tau_t   = (1/delta) (tau_{t-1} + 1/2) lambda_{t-1} / (-div_{t-1})
///   lambda_t = -div_t / (-div_t + mu_t (tau_t + 1/2))
///   x^{t+1} = lambda_t (x^t + A^T g_t / (-div_t))
///
/// Start values are tau_{-1} = 0, lambda_{-1} = 1 and -div_{-1} = -div_0.
pub fn amp_step_general<A: SensingOperator<f64>>(
    state: &AMPState<f64>,
    inst: &MeasurementInstance<f64, A>,
    mu: MuSchedule,
    opts: &AmpOptions,
) -> Result<AMPState<f64>> {
    state.check(inst)?;
    opts.validate(Field::Real)?;
    if let MuSchedule::Fixed(mu) = mu {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("mu must be finite and >= 0, got {mu}")));
        }
    }
    let delta = inst.delta();
    let prev_nd = state.divergence.map(|d| -d);
    let onsager = match prev_nd {
        Some(nd) => state.lambda_prev / (delta * nd),
        None => 0.0,
    };
    let (p, g, atg) = sweep(state, inst, onsager, opts.epsilon);
    let div = divergence(&p, &inst.y, opts.epsilon, opts.divergence)?;
    let nd = -div;
    if !(nd > 0.0) {
        return Err(Error::DivergenceBreakdown(nd));
    }
    let tau = (state.tau + 0.5) * state.lambda_prev / (delta * prev_nd.unwrap_or(nd));
    let mu = match mu {
        MuSchedule::Fixed(mu) => mu,
        MuSchedule::Continuation => (2.0 - 2.0 * nd) / (1.0 + 2.0 * tau),
    };
    let lambda = nd / (nd + mu * (tau + 0.5));
    let x = state
        .x
        .iter()
        .zip(&atg)
        .map(|(&x, &v)| lambda * (x + v / nd))
        .collect();
    Ok(AMPState {
        t: state.t + 1,
        x,
        p,
        g_prev: g,
        divergence: Some(div),
        p0: None,
        tau,
        lambda_prev: lambda,
    })
}

/// Overlap, residual variance and phase-aligned error of an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// <x*, x> / ||x*||^2
    pub alpha: Complex64,
    /// ||x - alpha x*||^2 / ||x*||^2
    pub sigma2: f64,
    /// ||x - e^{i theta} x*||^2 / n with theta the phase of <x*, x>
    pub amse: f64,
}

pub fn measure<T: Scalar>(x: &[T], x_star: &[T]) -> Result<Measurement> {
    if x.len() != x_star.len() {
        return Err(Error::Dimension(format!("x has {}, x* has {}", x.len(), x_star.len())));
    }
    let ns = norm_sqr(x_star);
    if ns == 0.0 {
        return Err(Error::Domain("x* is zero".into()));
    }
    let ip = inner(x_star, x);
    let alpha = ip.scale(1.0 / ns);
    let dir = ip.direction();
    let (mut res, mut err) = (0.0, 0.0);
    for (&x, &s) in x.iter().zip(x_star) {
        res += (x - alpha * s).norm_sqr();
        err += (x - dir * s).norm_sqr();
    }
    Ok(Measurement {
        alpha: alpha.to_complex(),
        sigma2: res / ns,
        amse: err / x.len() as f64,
    })
}

/// x^0 = alpha0 x* + sigma0 h with h i.i.d. unit-variance field-Gaussian drawn
/// from `seed`, independent of A.
pub fn make_informative_init<T: Scalar, A>(
    inst: &MeasurementInstance<T, A>,
    alpha0: T,
    sigma0_sq: f64,
    seed: u64,
) -> Result<Vec<T>> {
    if !(sigma0_sq >= 0.0 && sigma0_sq.is_finite()) {
        return Err(Error::Domain(format!("sigma0^2 must be finite and >= 0, got {sigma0_sq}")));
    }
    if alpha0.norm_sqr() + sigma0_sq == 0.0 {
        return Err(Error::OriginState);
    }
    let mut rng = stream(seed, INIT_STREAM);
    let sd = sigma0_sq.sqrt();
    Ok(inst
        .x_star
        .iter()
        .map(|&s| alpha0 * s + T::gaussian(&mut rng, 1.0).scale(sd))
        .collect())
}

const INIT_STREAM: u64 = 3;

/// Measured quantities at iteration t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AMPRecord {
    pub t: usize,
    pub alpha: Complex64,
    pub sigma2: f64,
    pub amse: f64,
    /// Divergence that produced x^t; `None` at t = 0.
    pub divergence: Option<f64>,
}

impl AMPRecord {
    pub fn alpha_abs(&self) -> f64 {
        self.alpha.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AMPTrace<T> {
    /// Records for t = 0, 1, ...
    pub records: Vec<AMPRecord>,
    /// A non-finite iterate ended the run.
    pub failed: bool,
    pub final_state: AMPState<T>,
}

impl<T> AMPTrace<T> {
    pub fn last(&self) -> &AMPRecord {
        self.records.last().expect("trace holds at least t = 0")
    }
}

/// Run `iters` steps of [`amp_step`] from x^0, measuring every iterate.
pub fn run_amp<T: Scalar, A: SensingOperator<T>>(
    inst: &MeasurementInstance<T, A>,
    x0: Vec<T>,
    iters: usize,
    opts: &AmpOptions,
) -> Result<AMPTrace<T>> {
    run_amp_from(inst, AMPState::new(x0, inst.m()), iters, opts)
}

/// As [`run_amp`] from a prepared state (e.g. with a supplied p^0).
pub fn run_amp_from<T: Scalar, A: SensingOperator<T>>(
    inst: &MeasurementInstance<T, A>,
    state: AMPState<T>,
    iters: usize,
    opts: &AmpOptions,
) -> Result<AMPTrace<T>> {
    drive(inst, state, iters, opts, |s| amp_step(s, inst, opts))
}

/// Run the real mu-regularized iteration.
pub fn run_amp_general<A: SensingOperator<f64>>(
    inst: &MeasurementInstance<f64, A>,
    x0: Vec<f64>,
    iters: usize,
    mu: MuSchedule,
    opts: &AmpOptions,
) -> Result<AMPTrace<f64>> {
    let state = AMPState::new(x0, inst.m());
    drive(inst, state, iters, opts, |s| amp_step_general(s, inst, mu, opts))
}

fn drive<T: Scalar, A: SensingOperator<T>, F>(
    inst: &MeasurementInstance<T, A>,
    mut state: AMPState<T>,
    iters: usize,
    opts: &AmpOptions,
    mut step: F,
) -> Result<AMPTrace<T>>
where
    F: FnMut(&AMPState<T>) -> Result<AMPState<T>>,
{
    if iters == 0 {
        return Err(Error::Domain("iters must be >= 1".into()));
    }
    state.check(inst)?;
    let record = |s: &AMPState<T>| -> Result<AMPRecord> {
        let m = measure(&s.x, &inst.x_star)?;
        Ok(AMPRecord { t: s.t, alpha: m.alpha, sigma2: m.sigma2, amse: m.amse, divergence: s.divergence })
    };
    let mut records = vec![record(&state)?];
    let mut failed = false;
    for _ in 0..iters {
        if opts.stop_amse.is_some_and(|tol| records.last().unwrap().amse < tol) {
            break;
        }
        let next = match step(&state) {
            Ok(next) => next,
            Err(Error::NonFinite(_)) => {
                failed = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let finite = next.x.iter().all(|v| v.norm_sqr().is_finite())
            && next.divergence.is_none_or(f64::is_finite);
        if !finite {
            failed = true;
            break;
        }
        state = next;
        records.push(record(&state)?);
    }
    Ok(AMPTrace { records, failed, final_state: state })
}

/// Phase-aligned magnitude and variance of a trace, for comparison with SE.
pub fn trace_pairs(trace: &[AMPRecord]) -> Vec<(f64, f64)> {
    trace.iter().map(|r| (r.alpha_abs(), r.sigma2)).collect()
}

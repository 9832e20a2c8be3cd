//! The SE recursion as a two-dimensional dynamical system.
//!
//! Nullclines F1 (fixed points of psi1 in alpha) and F2 (fixed points of psi2 in
//! sigma^2), the lower boundary L, region labels, trajectories with verdicts,
//! basin grids, threshold scans, noisy fixed points and noise sensitivity.
//! All root finding is bracket-verified bisection.

use crate::error::{finite, Error, Result};
use crate::se_maps::{phi1, phi2, psi, Field, ModelParams, SEState};
use rayon::prelude::*;
use std::f64::consts::PI;

const ROOT_TOL: f64 = 1e-12;
const MAX_BISECT: usize = 400;
/// Largest noise variance for which the noisy fixed-point machinery is offered.
pub const NOISE_GUARD: f64 = 1e-2;
/// Successive SE states closer than this count as stationary.
const STATIONARY: f64 = 1e-14;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Returns an endpoint directly if `f` vanishes there.
pub fn bisect<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    what: &'static str,
) -> Result<f64> {
    let flo = f(lo)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    let fhi = f(hi)?;
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoBracket { what, lo, hi });
    }
    let lo_positive = flo > 0.0;
    for _ in 0..MAX_BISECT {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    R0,
    R1,
    R2a,
    R2b,
    OutOfDomain,
}

impl RegionLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionLabel::R0 => "R0",
            RegionLabel::R1 => "R1",
            RegionLabel::R2a => "R2a",
            RegionLabel::R2b => "R2b",
            RegionLabel::OutOfDomain => "out-of-domain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub delta_amp: f64,
    pub delta_global: f64,
    pub field: Field,
}

pub fn thresholds(field: Field) -> Thresholds {
    match field {
        Field::Complex => Thresholds { delta_amp: 64.0 / (PI * PI) - 4.0, delta_global: 2.0, field },
        Field::Real => Thresholds {
            delta_amp: PI * PI / 4.0 - 1.0,
            delta_global: 1.0 + 4.0 / (PI * PI),
            field,
        },
    }
}

/// Value of sigma^2 above which psi1 drives alpha to zero (R0 floor).
pub fn extinction_sigma2(field: Field) -> f64 {
    match field {
        Field::Complex => PI * PI / 16.0,
        Field::Real => 4.0 / (PI * PI),
    }
}

/// Upper sigma^2 of the bounded complex domain, max{1, 4/delta}.
pub fn sigma2_max(delta: f64) -> f64 {
    f64::max(1.0, 4.0 / delta)
}

/// s >= 0 with phi1(s) = target, for target in (0, 1].
pub fn phi1_inverse(target: f64) -> Result<f64> {
    finite(target, "phi1_inverse target")?;
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Domain(format!("phi1 inverse needs target in (0,1], got {target}")));
    }
    if target == 1.0 {
        return Ok(0.0);
    }
    let mut hi = 16.0;
    while phi1(hi)? >= target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoBracket { what: "phi1 inverse", lo: 0.0, hi });
        }
    }
    bisect(|s| Ok(phi1(s)? - target), 0.0, hi, ROOT_TOL, "phi1 inverse")
}

fn check_alpha(alpha: f64, allow_zero: bool) -> Result<()> {
    finite(alpha, "alpha")?;
    let ok = if allow_zero { (0.0..=1.0).contains(&alpha) } else { alpha > 0.0 && alpha <= 1.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0,1], got {alpha}")))
    }
}

/// The alpha-nullcline as a function of alpha: sigma^2 with psi1(alpha, sigma^2) = alpha.
///
/// Accepts alpha = 0 as the continuous extension (pi^2/16 complex, 4/pi^2 real).
pub fn f1_inverse(alpha: f64, field: Field) -> Result<f64> {
    check_alpha(alpha, true)?;
    if alpha == 0.0 {
        return Ok(extinction_sigma2(field));
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    match field {
        Field::Complex => {
            let s = phi1_inverse(alpha)?;
            Ok(alpha * alpha * s * s)
        }
        Field::Real => {
            let c = 1.0 / (0.5 * PI * alpha).tan();
            Ok(alpha * alpha * c * c)
        }
    }
}

/// Positive fixed point of alpha -> psi1(alpha, sigma^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Root {
    pub alpha: f64,
    /// Set when sigma^2 is at or beyond the extinction level; `alpha` is then 0.
    pub extinct: bool,
}

pub fn f1(sigma2: f64, field: Field) -> Result<F1Root> {
    finite(sigma2, "sigma2")?;
    if sigma2 < 0.0 {
        return Err(Error::Domain(format!("sigma2 must be >= 0, got {sigma2}")));
    }
    if sigma2 >= extinction_sigma2(field) {
        return Ok(F1Root { alpha: 0.0, extinct: true });
    }
    if sigma2 == 0.0 {
        return Ok(F1Root { alpha: 1.0, extinct: false });
    }
    let p = ModelParams::noiseless(field, 1.0);
    let h = |a: f64| -> Result<f64> {
        if a == 0.0 {
            // psi1(a) - a is positive just above zero below extinction
            return Ok(1.0);
        }
        Ok(crate::se_maps::psi1(SEState::new(a, sigma2), &p)? - a)
    };
    let alpha = bisect(h, 0.0, 1.0, ROOT_TOL, "F1")?;
    Ok(F1Root { alpha, extinct: false })
}

/// The sigma^2-nullcline: the attracting root of sigma^2 = psi2(alpha, sigma^2).
pub fn f2(alpha: f64, params: &ModelParams) -> Result<f64> {
    check_alpha(alpha, true)?;
    params.validate()?;
    let g = |s2: f64| -> Result<f64> {
        if alpha == 0.0 && s2 == 0.0 {
            // continuous extension of psi2(0, sigma^2) at sigma^2 = 0
            let w = match params.field {
                Field::Complex => 4.0 / params.delta + 4.0 * params.sigma_w2,
                Field::Real => 1.0 / params.delta + params.sigma_w2,
            };
            return Ok(w);
        }
        Ok(crate::se_maps::psi2(SEState::new(alpha, s2), params)? - s2)
    };
    match params.field {
        Field::Complex => {
            let hi = sigma2_max(params.delta) + 4.0 * params.sigma_w2;
            bisect(g, 0.0, hi, ROOT_TOL, "F2 (complex)")
        }
        Field::Real => {
            let mut hi = 1.0;
            while g(hi)? >= 0.0 {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::NoBracket { what: "F2 (real)", lo: 0.0, hi });
                }
            }
            bisect(g, 0.0, hi, ROOT_TOL, "F2 (real)")
        }
    }
}

/// Lower boundary L(alpha; delta) below which no post-first-step state can fall.
pub fn l_boundary(alpha: f64, delta: f64, field: Field) -> Result<f64> {
    check_alpha(alpha, true)?;
    finite(delta, "delta")?;
    if delta <= 0.0 {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    match field {
        Field::Complex => {
            if alpha == 0.0 {
                return Ok(4.0 / delta * (1.0 - PI * PI / 16.0));
            }
            let s = phi1_inverse(alpha)?;
            let p2 = phi2(s)?;
            Ok(4.0 / delta * (1.0 - p2 * p2 / (4.0 * (1.0 + s * s))))
        }
        Field::Real => {
            let h = 0.5 * PI * alpha;
            let b = 2.0 / PI * h.cos() + alpha * h.sin();
            Ok((1.0 - b * b) / delta)
        }
    }
}

/// Region of (alpha, sigma^2) for the given delta and field.
///
/// R0: sigma^2 above the extinction level; R1: between F1^{-1}(alpha) and it;
/// R2a: L <= sigma^2 <= F1^{-1}(alpha); R2b: sigma^2 < L. Complex states above
/// max{1, 4/delta} are out of the analysed domain.
pub fn classify_region(state: SEState, delta: f64, field: Field) -> Result<RegionLabel> {
    check_alpha(state.alpha, false)?;
    finite(state.sigma2, "sigma2")?;
    if state.sigma2 < 0.0 {
        return Err(Error::Domain(format!("sigma2 must be >= 0, got {}", state.sigma2)));
    }
    let s2 = state.sigma2;
    if field == Field::Complex && s2 > sigma2_max(delta) {
        return Ok(RegionLabel::OutOfDomain);
    }
    if s2 > extinction_sigma2(field) {
        return Ok(RegionLabel::R0);
    }
    if s2 > f1_inverse(state.alpha, field)? {
        return Ok(RegionLabel::R1);
    }
    if s2 >= l_boundary(state.alpha, delta, field)? {
        return Ok(RegionLabel::R2a);
    }
    Ok(RegionLabel::R2b)
}

/// One SE step.
pub fn se_step(state: SEState, params: &ModelParams) -> Result<SEState> {
    psi(state, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    ConvergedSuccess,
    ConvergedNoisyFP { alpha: f64, sigma2: f64 },
    Stalled,
    MaxIters,
}

impl Verdict {
    pub fn is_success(&self) -> bool {
        matches!(self, Verdict::ConvergedSuccess)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConvergedSuccess => "converged-success",
            Verdict::ConvergedNoisyFP { .. } => "converged-noisy-fp",
            Verdict::Stalled => "stalled",
            Verdict::MaxIters => "max-iters",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SEState>,
    pub verdict: Verdict,
    pub iterations_used: usize,
}

fn is_success(s: SEState, tol: f64) -> bool {
    (1.0 - s.alpha.abs()).abs() < tol && s.sigma2 < tol * tol
}

/// Iterates the SE from `init` until success, stationarity or `max_iters`.
pub fn se_trajectory(
    init: SEState,
    params: &ModelParams,
    max_iters: usize,
    tol: f64,
) -> Result<Trajectory> {
    if max_iters == 0 {
        return Err(Error::Domain("max_iters must be >= 1".into()));
    }
    let mut states = vec![init];
    let mut cur = init;
    if params.sigma_w2 == 0.0 && is_success(cur, tol) {
        return Ok(Trajectory { states, verdict: Verdict::ConvergedSuccess, iterations_used: 0 });
    }
    for it in 1..=max_iters {
        let next = se_step(cur, params)?;
        states.push(next);
        if params.sigma_w2 == 0.0 && is_success(next, tol) {
            return Ok(Trajectory { states, verdict: Verdict::ConvergedSuccess, iterations_used: it });
        }
        let moved = f64::max((next.alpha - cur.alpha).abs(), (next.sigma2 - cur.sigma2).abs());
        if moved < STATIONARY {
            let verdict = if params.sigma_w2 > 0.0 {
                Verdict::ConvergedNoisyFP { alpha: next.alpha, sigma2: next.sigma2 }
            } else {
                Verdict::Stalled
            };
            return Ok(Trajectory { states, verdict, iterations_used: it });
        }
        cur = next;
    }
    Ok(Trajectory { states, verdict: Verdict::MaxIters, iterations_used: max_iters })
}

/// Success mask of SE trajectories over an equispaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinGrid {
    pub grid_n: usize,
    /// alpha_0 values i/grid_n, i = 1..=grid_n.
    pub alphas: Vec<f64>,
    /// sigma_0^2 values j/(grid_n-1), j = 0..grid_n.
    pub sigma2s: Vec<f64>,
    /// Row-major over (alpha index, sigma^2 index).
    pub success: Vec<bool>,
}

impl BasinGrid {
    pub fn get(&self, i_alpha: usize, j_sigma2: usize) -> bool {
        self.success[i_alpha * self.grid_n + j_sigma2]
    }

    pub fn success_fraction(&self) -> f64 {
        self.success.iter().filter(|&&b| b).count() as f64 / self.success.len() as f64
    }
}

pub fn se_basin_grid(
    params: &ModelParams,
    grid_n: usize,
    max_iters: usize,
    tol: f64,
) -> Result<BasinGrid> {
    if grid_n < 2 {
        return Err(Error::Domain(format!("grid_n must be >= 2, got {grid_n}")));
    }
    let alphas: Vec<f64> = (1..=grid_n).map(|i| i as f64 / grid_n as f64).collect();
    let sigma2s: Vec<f64> = (0..grid_n).map(|j| j as f64 / (grid_n - 1) as f64).collect();
    let cells: Vec<(f64, f64)> =
        alphas.iter().flat_map(|&a| sigma2s.iter().map(move |&s| (a, s))).collect();
    let success = cells
        .par_iter()
        .map(|&(a, s)| {
            se_trajectory(SEState::new(a, s), params, max_iters, tol)
                .map(|t| t.verdict.is_success())
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(BasinGrid { grid_n, alphas, sigma2s, success })
}

/// Default SE success settings used by scans and basin grids.
pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-6;

fn succeeds(field: Field, delta: f64, init: SEState, max_iters: usize, tol: f64) -> Result<bool> {
    let p = ModelParams::noiseless(field, delta);
    Ok(se_trajectory(init, &p, max_iters, tol)?.verdict.is_success())
}

/// Outcome of a threshold bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanResult {
    /// Largest delta seen failing.
    pub delta_fail: f64,
    /// Smallest delta seen succeeding.
    pub delta_success: f64,
    pub estimate: f64,
}

/// Bisects on the SE success verdict to locate the threshold in `[delta_lo, delta_hi]`.
pub fn phase_transition_scan(
    field: Field,
    delta_lo: f64,
    delta_hi: f64,
    steps: usize,
    init: SEState,
) -> Result<ScanResult> {
    phase_transition_scan_with(field, delta_lo, delta_hi, steps, init, DEFAULT_MAX_ITERS, DEFAULT_TOL)
}

pub fn phase_transition_scan_with(
    field: Field,
    delta_lo: f64,
    delta_hi: f64,
    steps: usize,
    init: SEState,
    max_iters: usize,
    tol: f64,
) -> Result<ScanResult> {
    if !(delta_lo > 0.0 && delta_hi > delta_lo) {
        return Err(Error::Domain(format!("bad delta range [{delta_lo}, {delta_hi}]")));
    }
    let lo_ok = succeeds(field, delta_lo, init, max_iters, tol)?;
    let hi_ok = succeeds(field, delta_hi, init, max_iters, tol)?;
    if lo_ok || !hi_ok {
        return Err(Error::NoFlip { lo: delta_lo, hi: delta_hi });
    }
    let (mut lo, mut hi) = (delta_lo, delta_hi);
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if succeeds(field, mid, init, max_iters, tol)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ScanResult { delta_fail: lo, delta_success: hi, estimate: 0.5 * (lo + hi) })
}

fn check_noisy(params: &ModelParams) -> Result<()> {
    params.validate()?;
    let th = thresholds(params.field);
    if params.delta <= th.delta_amp {
        return Err(Error::Domain(format!(
            "delta = {} must exceed delta_AMP = {}",
            params.delta, th.delta_amp
        )));
    }
    if params.sigma_w2 > NOISE_GUARD {
        return Err(Error::Domain(format!(
            "sigma_w2 = {} exceeds the small-noise guard {NOISE_GUARD}",
            params.sigma_w2
        )));
    }
    Ok(())
}

/// Nonzero SE fixed point for small noise: F1^{-1}(alpha) = F2(alpha).
pub fn noisy_fixed_point(params: &ModelParams) -> Result<SEState> {
    check_noisy(params)?;
    if params.sigma_w2 == 0.0 {
        return Ok(SEState::new(1.0, 0.0));
    }
    let field = params.field;
    let h = |a: f64| -> Result<f64> { Ok(f1_inverse(a, field)? - f2(a, params)?) };
    let alpha = bisect(h, 0.0, 1.0, ROOT_TOL * 1e-3, "noisy fixed point")?;
    Ok(SEState::new(alpha, f1_inverse(alpha, field)?))
}

/// (1 - |alpha|)^2 + sigma^2.
pub fn se_predicted_amse(state: SEState) -> f64 {
    let d = 1.0 - state.alpha.abs();
    d * d + state.sigma2
}

/// Closed-form high-SNR slope of AMSE / sigma_w^2.
///
/// Dividing by delta gives the slope per unit of the per-measurement-normalized
/// noise level sigma_w^2 delta; that normalized value is close to 8 near delta_AMP.
pub fn noise_sensitivity_closed_form(delta: f64, field: Field) -> f64 {
    match field {
        Field::Complex => 4.0 / (1.0 - 2.0 / delta),
        Field::Real => 1.0 / (1.0 / (1.0 + 4.0 / (PI * PI)) - 1.0 / delta),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSensitivity {
    /// (sigma_w^2, AMSE / sigma_w^2) at each probe level.
    pub ratios: Vec<(f64, f64)>,
    /// Linear extrapolation of the ratios to sigma_w^2 = 0.
    pub numeric: f64,
    pub closed_form: f64,
}

pub const NOISE_PROBES: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// Numeric slope from noisy fixed points next to the closed form.
pub fn noise_sensitivity(delta: f64, field: Field) -> Result<NoiseSensitivity> {
    let th = thresholds(field);
    if delta <= th.delta_amp {
        return Err(Error::Domain(format!("delta = {delta} must exceed delta_AMP = {}", th.delta_amp)));
    }
    let mut ratios = Vec::with_capacity(NOISE_PROBES.len());
    for &w in &NOISE_PROBES {
        let fp = noisy_fixed_point(&ModelParams::new(field, delta, w)?)?;
        ratios.push((w, se_predicted_amse(fp) / w));
    }
    // least-squares line through (w, ratio), evaluated at w = 0
    let n = ratios.len() as f64;
    let mx = ratios.iter().map(|r| r.0).sum::<f64>() / n;
    let my = ratios.iter().map(|r| r.1).sum::<f64>() / n;
    let sxy: f64 = ratios.iter().map(|r| (r.0 - mx) * (r.1 - my)).sum();
    let sxx: f64 = ratios.iter().map(|r| (r.0 - mx) * (r.0 - mx)).sum();
    let numeric = my - sxy / sxx * mx;
    Ok(NoiseSensitivity { ratios, numeric, closed_form: noise_sensitivity_closed_form(delta, field) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se_maps::{psi1, psi2};
    use proptest::prelude::*;

    const FIELDS: [Field; 2] = [Field::Complex, Field::Real];

    #[test]
    fn threshold_constants() {
        let c = thresholds(Field::Complex);
        assert!((c.delta_amp - 2.484_555_5).abs() < 1e-6);
        assert_eq!(c.delta_global, 2.0);
        let r = thresholds(Field::Real);
        assert!((r.delta_amp - 1.467_401_1).abs() < 1e-6);
        assert!((r.delta_global - 1.405_284_7).abs() < 1e-6);
    }

    #[test]
    fn f1_inverse_examples() {
        assert!((f1_inverse(0.5, Field::Real).unwrap() - 0.25).abs() < 1e-15);
        assert!((f1_inverse(1.0 / PI, Field::Real).unwrap() - 0.339).abs() < 1e-3);
        assert!((f1_inverse(0.5274, Field::Complex).unwrap() - 0.415).abs() < 1e-3);
        assert_eq!(f1_inverse(1.0, Field::Complex).unwrap(), 0.0);
        assert!((f1_inverse(0.0, Field::Complex).unwrap() - PI * PI / 16.0).abs() < 1e-15);
        assert!((f1_inverse(1e-6, Field::Complex).unwrap() - PI * PI / 16.0).abs() < 1e-6);
        assert!((f1_inverse(1e-6, Field::Real).unwrap() - 4.0 / (PI * PI)).abs() < 1e-6);
        assert!(f1_inverse(1.2, Field::Real).is_err());
        assert!(f1_inverse(-0.1, Field::Complex).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(0.0, Field::Complex).unwrap().alpha, 1.0);
        let edge = f1(PI * PI / 16.0 - 1e-9, Field::Complex).unwrap();
        assert!(!edge.extinct && edge.alpha < 1e-3);
        assert!(f1(0.7, Field::Complex).unwrap().extinct);
        let r = f1(0.25, Field::Real).unwrap();
        let fixed = 2.0 / PI * (r.alpha / 0.5).atan();
        assert!((r.alpha - fixed).abs() < 1e-10);
        assert!((r.alpha - 0.5).abs() < 1e-10);
        for field in FIELDS {
            for &a in &[0.1, 0.4, 0.8] {
                let s2 = f1_inverse(a, field).unwrap();
                assert!((f1(s2, field).unwrap().alpha - a).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn f2_examples() {
        let c = |d: f64| ModelParams::noiseless(Field::Complex, d);
        assert_eq!(f2(1.0, &c(3.0)).unwrap(), 0.0);
        assert!((f2(0.0, &c(4.0)).unwrap() - 4.0 / (PI * PI)).abs() < 1e-11);
        for &d in &[3.0, 6.0] {
            let closed = ((-PI + (PI * PI + 4.0 * (d - 4.0)).sqrt()) / (d - 4.0)).powi(2);
            assert!((f2(0.0, &c(d)).unwrap() - closed).abs() < 1e-11);
        }
        let r = f2(0.0, &ModelParams::noiseless(Field::Real, 3.0)).unwrap();
        let closed = ((-2.0 / PI + (4.0 / (PI * PI) + 2.0).sqrt()) / 2.0).powi(2);
        assert!((r - closed).abs() < 1e-11);
        for field in FIELDS {
            let p = ModelParams::new(field, 3.0, 1e-3).unwrap();
            for &a in &[0.0, 0.3, 0.9] {
                let s2 = f2(a, &p).unwrap();
                let res = psi2(SEState::new(a, s2), &p).unwrap() - s2;
                assert!(res.abs() < 1e-10, "{field} {a}: {res}");
            }
        }
    }

    #[test]
    fn l_boundary_examples() {
        let l0 = l_boundary(1e-9, 3.0, Field::Complex).unwrap();
        assert!((l0 - 4.0 / 3.0 * (1.0 - PI * PI / 16.0)).abs() < 1e-6);
        assert!(l_boundary(1.0, 3.0, Field::Real).unwrap().abs() < 1e-15);
        assert!(l_boundary(1.0, 3.0, Field::Complex).unwrap().abs() < 1e-15);
        let r0 = l_boundary(0.0, 2.0, Field::Real).unwrap();
        assert!((r0 - 0.5 * (1.0 - 4.0 / (PI * PI))).abs() < 1e-15);
    }

    #[test]
    fn l_strictly_decreasing() {
        for field in FIELDS {
            let mut prev = l_boundary(0.0, 3.0, field).unwrap();
            for i in 1..=100 {
                let v = l_boundary(i as f64 / 100.0, 3.0, field).unwrap();
                assert!(v < prev, "{field} at {i}");
                prev = v;
            }
        }
    }

    #[test]
    fn region_examples() {
        let c = classify_region(SEState::new(0.5, 0.7), 3.0, Field::Complex).unwrap();
        assert_eq!(c, RegionLabel::R0);
        let r = classify_region(SEState::new(1.0, 0.0), 2.0, Field::Real).unwrap();
        assert_eq!(r, RegionLabel::R2a);
        let l = l_boundary(0.9, 3.0, Field::Complex).unwrap();
        let expect = if 0.01 >= l { RegionLabel::R2a } else { RegionLabel::R2b };
        let got = classify_region(SEState::new(0.9, 0.01), 3.0, Field::Complex).unwrap();
        assert_eq!(got, expect);
        assert_eq!(
            classify_region(SEState::new(0.5, 5.0), 3.0, Field::Complex).unwrap(),
            RegionLabel::OutOfDomain
        );
        assert_eq!(classify_region(SEState::new(0.5, 5.0), 3.0, Field::Real).unwrap(), RegionLabel::R0);
        // ties go to the region whose inequality is non-strict
        let ceiling = extinction_sigma2(Field::Complex);
        assert_eq!(
            classify_region(SEState::new(0.5, ceiling), 3.0, Field::Complex).unwrap(),
            RegionLabel::R1
        );
        let on_f1 = f1_inverse(0.5, Field::Real).unwrap();
        assert_eq!(classify_region(SEState::new(0.5, on_f1), 3.0, Field::Real).unwrap(), RegionLabel::R2a);
        assert!(classify_region(SEState::new(0.0, 0.1), 3.0, Field::Real).is_err());
        assert!(classify_region(SEState::new(1.1, 0.1), 3.0, Field::Real).is_err());
    }

    #[test]
    fn step_examples() {
        for field in FIELDS {
            let p = ModelParams::noiseless(field, 3.0);
            assert_eq!(se_step(SEState::new(1.0, 0.0), &p).unwrap(), SEState::new(1.0, 0.0));
            assert_eq!(se_step(SEState::new(0.0, 0.4), &p).unwrap().alpha, 0.0);
        }
        // one complex step from (0.5, 0.5) at delta = 2.6, frozen from an independent evaluation
        let p = ModelParams::noiseless(Field::Complex, 2.6);
        let next = se_step(SEState::new(0.5, 0.5), &p).unwrap();
        let (q1, q2) = crate::se_maps::psi_quadrature(SEState::new(0.5, 0.5), &p).unwrap();
        assert!((next.alpha - q1).abs() < 1e-10 && (next.sigma2 - q2).abs() < 1e-10);
        assert!((next.alpha - 0.475_223_935_351_017).abs() < 1e-12);
        assert!((next.sigma2 - 0.421_074_898_758_271_6).abs() < 1e-12);
    }

    #[test]
    fn trajectory_examples() {
        let c = ModelParams::noiseless(Field::Complex, 2.6);
        let t = se_trajectory(SEState::new(0.5, 0.5), &c, DEFAULT_MAX_ITERS, 1e-6).unwrap();
        assert_eq!(t.verdict, Verdict::ConvergedSuccess);
        for w in t.states.windows(2) {
            assert_eq!(w[1], se_step(w[0], &c).unwrap());
        }
        let r = ModelParams::noiseless(Field::Real, 1.5);
        let t = se_trajectory(SEState::new(0.01, 10.0), &r, DEFAULT_MAX_ITERS, 1e-6).unwrap();
        assert_eq!(t.verdict, Verdict::ConvergedSuccess);
        let bad = ModelParams::noiseless(Field::Complex, 1.9);
        let t = se_trajectory(SEState::new(0.999, 1e-4), &bad, DEFAULT_MAX_ITERS, 1e-6).unwrap();
        assert!(!t.verdict.is_success());
        assert!(t.states[1].sigma2 > t.states[0].sigma2);
        assert!(se_trajectory(SEState::new(0.5, 0.5), &c, 0, 1e-6).is_err());
    }

    #[test]
    fn noisy_trajectory_reaches_fixed_point() {
        let p = ModelParams::new(Field::Real, 3.0, 1e-4).unwrap();
        let fp = noisy_fixed_point(&p).unwrap();
        let next = se_step(fp, &p).unwrap();
        assert!((next.alpha - fp.alpha).abs() < 1e-10 && (next.sigma2 - fp.sigma2).abs() < 1e-10);
        let t = se_trajectory(SEState::new(0.5, 0.5), &p, DEFAULT_MAX_ITERS, 1e-6).unwrap();
        match t.verdict {
            Verdict::ConvergedNoisyFP { alpha, sigma2 } => {
                assert!((alpha - fp.alpha).abs() < 1e-6 && (sigma2 - fp.sigma2).abs() < 1e-6);
            }
            v => panic!("unexpected verdict {v:?}"),
        }
        let c = ModelParams::new(Field::Complex, 3.0, 1e-4).unwrap();
        let fp = noisy_fixed_point(&c).unwrap();
        let next = se_step(fp, &c).unwrap();
        assert!((next.alpha - fp.alpha).abs() < 1e-10 && (next.sigma2 - fp.sigma2).abs() < 1e-10);
        assert_eq!(
            noisy_fixed_point(&ModelParams::noiseless(Field::Complex, 3.0)).unwrap(),
            SEState::new(1.0, 0.0)
        );
        assert!(noisy_fixed_point(&ModelParams::new(Field::Complex, 3.0, 0.1).unwrap()).is_err());
        assert!(noisy_fixed_point(&ModelParams::new(Field::Complex, 2.2, 1e-4).unwrap()).is_err());
    }

    #[test]
    fn noise_sensitivity_examples() {
        assert_eq!(noise_sensitivity_closed_form(4.0, Field::Complex), 8.0);
        let d_amp = thresholds(Field::Complex).delta_amp;
        let near = noise_sensitivity_closed_form(d_amp, Field::Complex) / d_amp;
        assert!((near - 8.0).abs() < 0.5);
        let far = noise_sensitivity_closed_form(1e12, Field::Real);
        assert!((far - (1.0 + 4.0 / (PI * PI))).abs() < 1e-9);
        assert!(noise_sensitivity(2.0, Field::Complex).is_err());
    }

    #[test]
    fn amse_examples() {
        assert_eq!(se_predicted_amse(SEState::new(1.0, 0.0)), 0.0);
        assert_eq!(se_predicted_amse(SEState::new(0.0, 1.0)), 2.0);
    }

    #[test]
    fn basin_small_grid() {
        let p = ModelParams::noiseless(Field::Complex, 2.6);
        let g = se_basin_grid(&p, 6, DEFAULT_MAX_ITERS, 1e-6).unwrap();
        assert!(g.success.iter().all(|&b| b));
        assert!(se_basin_grid(&p, 1, 10, 1e-6).is_err());
    }

    #[test]
    fn scan_rejects_range_without_flip() {
        let r = phase_transition_scan(Field::Complex, 3.0, 4.0, 10, SEState::new(0.5, 0.5));
        assert!(matches!(r, Err(Error::NoFlip { .. })));
    }

    #[test]
    fn bisect_requires_bracket() {
        assert!(bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, "t").is_err());
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14, "t").unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn l_lower_bounds(a in 0.001f64..1.0, d in 0.5f64..8.0) {
            let c = l_boundary(a, d, Field::Complex).unwrap();
            prop_assert!(c > 4.0 / d * (1.0 - PI * PI / 16.0 - a * a / 2.0));
            let r = l_boundary(a, d, Field::Real).unwrap();
            prop_assert!(r >= (1.0 - 4.0 / (PI * PI) - a * a) / d - 1e-15);
        }

        #[test]
        fn one_step_image_above_l(a in 0.0f64..1.0, s2 in 1e-4f64..2.0, d in 1.0f64..6.0) {
            for field in FIELDS {
                let p = ModelParams::noiseless(field, d);
                let next = se_step(SEState::new(a, s2), &p).unwrap();
                if next.alpha > 0.0 && next.alpha <= 1.0 {
                    let l = l_boundary(next.alpha, d, field).unwrap();
                    prop_assert!(next.sigma2 >= l - 1e-12, "{} {:?}", field, next);
                }
            }
        }

        #[test]
        fn psi2_dominates_l_of_psi1(a in 0.0f64..1.0, s2 in 1e-4f64..2.0, d in 1.0f64..6.0) {
            let p = ModelParams::noiseless(Field::Complex, d);
            let st = SEState::new(a, s2);
            let a1 = psi1(st, &p).unwrap();
            if a1 > 0.0 {
                prop_assert!(psi2(st, &p).unwrap() >= l_boundary(a1, d, Field::Complex).unwrap() - 1e-12);
            }
        }

        #[test]
        fn complex_iterates_stay_bounded(a in 0.01f64..1.0, s2 in 0.0f64..1.0, d in 2.5f64..6.0) {
            let p = ModelParams::noiseless(Field::Complex, d);
            let cap = sigma2_max(d);
            let mut st = SEState::new(a, s2);
            for _ in 0..50 {
                st = se_step(st, &p).unwrap();
                prop_assert!(st.alpha >= 0.0 && st.alpha <= 1.0);
                prop_assert!(st.sigma2 <= cap + 1e-12);
            }
        }

        #[test]
        fn monotone_shrinkage_in_r1_r2a(a in 0.05f64..1.0, frac in 0.0f64..1.0, d in 2.6f64..6.0) {
            for field in FIELDS {
                let d = if field == Field::Real { d - 1.0 } else { d };
                let hi = extinction_sigma2(field);
                let lo = l_boundary(a, d, field).unwrap();
                let s2 = lo + frac * (hi - lo);
                let st = SEState::new(a, s2);
                let region = classify_region(st, d, field).unwrap();
                if matches!(region, RegionLabel::R1 | RegionLabel::R2a) {
                    let p = ModelParams::noiseless(field, d);
                    let next = se_step(st, &p).unwrap();
                    let f1a = f1(s2, field).unwrap().alpha;
                    prop_assert!(next.alpha >= f64::min(a, f1a) - 1e-12);
                    let f1i = f1_inverse(a, field).unwrap();
                    prop_assert!(next.sigma2 <= f64::max(s2, f1i) + 1e-12);
                }
            }
        }

        #[test]
        fn nullcline_fixed_point_residuals(a in 0.02f64..0.98) {
            for field in FIELDS {
                let p = ModelParams::noiseless(field, 1.0);
                let s2 = f1_inverse(a, field).unwrap();
                prop_assert!((psi1(SEState::new(a, s2), &p).unwrap() - a).abs() < 1e-10);
            }
        }
    }
}

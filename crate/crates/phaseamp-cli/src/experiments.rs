//! Dispatch from an [`ExperimentSpec`] to the library, one table per run.

use crate::config::*;
use crate::table::{Cell, Table};
use anyhow::{Context, Result};
use num_complex::Complex64;
use phaseamp::amp::{
    generate_instance, make_informative_init, measure, run_amp, run_amp_from, AMPRecord, AMPState,
    AmpOptions, DivergenceMethod, ModelConfig, NoiseConvention, Scalar,
};
use phaseamp::se_dynamics::{
    classify_region, f1_inverse, f2, l_boundary, noise_sensitivity, phase_transition_scan_with,
    se_basin_grid, se_step, se_trajectory,
};
use phaseamp::spectral::{spectral_initialize, SpectralConfig};
use phaseamp::{Field, ModelParams, SEState};
use rayon::prelude::*;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub kind: Kind,
    pub metrics: Vec<(&'static str, f64)>,
    pub note: String,
    /// (measured value, passed) when the spec carries an assertion block.
    pub assertion: Option<(AssertSection, f64, bool)>,
}

impl Summary {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| *k == name).map(|m| m.1)
    }

    pub fn passed(&self) -> bool {
        self.assertion.as_ref().is_none_or(|a| a.2)
    }

    /// The one-line summary printed after a run.
    pub fn line(&self) -> String {
        let mut s = format!("{}:", self.kind);
        for (k, v) in &self.metrics {
            let _ = write!(s, " {k}={}", short(*v));
        }
        if !self.note.is_empty() {
            let _ = write!(s, " ({})", self.note);
        }
        if let Some((a, v, ok)) = &self.assertion {
            let verdict = if *ok { "PASS" } else { "FAIL" };
            let _ = write!(s, " [{} = {} in [{}, {}]: {verdict}]", a.metric, short(*v), a.lo, a.hi);
        }
        s
    }
}

fn short(x: f64) -> String {
    if x == 0.0 || (1e-3..1e4).contains(&x.abs()) {
        format!("{x:.6}")
    } else {
        format!("{x:.4e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub summary: Summary,
}

/// Runs `spec` on a pool of `threads` workers (`None`: one per core).
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<Outcome> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .context("building the worker pool")?;
    let (mut table, metrics, note) = pool.install(|| dispatch(spec))?;
    table.sort();
    let assertion = spec.assert.as_ref().map(|a| {
        let v = metrics.iter().find(|(k, _)| *k == a.metric).map_or(f64::NAN, |m| m.1);
        (a.clone(), v, a.lo <= v && v <= a.hi)
    });
    Ok(Outcome { table, summary: Summary { kind: spec.kind, metrics, note, assertion } })
}

type Run = (Table, Vec<(&'static str, f64)>, String);

fn dispatch(spec: &ExperimentSpec) -> Result<Run> {
    let m = &spec.model;
    let field: Field = m.field.into();
    let params = ModelParams::new(field, m.delta, m.sigma_w2)?;
    match &spec.params {
        Params::SeTrajectory(p) => se_trajectory_run(&params, p),
        Params::SeBasin(p) => se_basin_run(&params, p),
        Params::SePhaseScan(p) => phase_scan_run(&params, p),
        Params::AmpVsSe(p) => amp_vs_se_run(&params, p),
        Params::NoiseSensitivity(_) => noise_run(&params),
        Params::SpectralDemo(p) => spectral_run(&params, p),
        Params::Nullclines(p) => nullcline_run(&params, p),
    }
}

fn se_trajectory_run(params: &ModelParams, p: &SeTrajectoryParams) -> Result<Run> {
    let tr = se_trajectory(SEState::new(p.alpha0, p.sigma0_sq), params, p.max_iters, p.tol)?;
    let mut table = Table::new(&["t", "alpha", "sigma2", "region"], 1);
    for (t, s) in tr.states.iter().enumerate() {
        let region = classify_region(*s, params.delta, params.field).map_or("undefined", |r| r.as_str());
        table.push(vec![t.into(), s.alpha.into(), s.sigma2.into(), region.into()]);
    }
    let last = tr.states.last().expect("trajectory holds the start");
    let metrics = vec![
        ("iterations", tr.iterations_used as f64),
        ("final_alpha", last.alpha),
        ("final_sigma2", last.sigma2),
        ("success", tr.verdict.is_success() as u8 as f64),
    ];
    Ok((table, metrics, tr.verdict.as_str().into()))
}

fn se_basin_run(params: &ModelParams, p: &SeBasinParams) -> Result<Run> {
    let grid = se_basin_grid(params, p.grid_n, p.max_iters, p.tol)?;
    let mut table = Table::new(&["alpha0", "sigma0_sq", "success"], 2);
    for (i, &a) in grid.alphas.iter().enumerate() {
        for (j, &s) in grid.sigma2s.iter().enumerate() {
            table.push(vec![a.into(), s.into(), grid.get(i, j).into()]);
        }
    }
    let metrics = vec![("success_fraction", grid.success_fraction()), ("cells", grid.success.len() as f64)];
    Ok((table, metrics, String::new()))
}

fn phase_scan_run(params: &ModelParams, p: &PhaseScanParams) -> Result<Run> {
    let (lo, hi) = (params.delta - p.half_width, params.delta + p.half_width);
    let init = SEState::new(p.alpha0, p.sigma0_sq);
    let r = phase_transition_scan_with(params.field, lo, hi, p.steps, init, p.max_iters, p.tol)?;
    let mut table = Table::new(&["delta_fail", "delta_success", "threshold"], 0);
    table.push(vec![r.delta_fail.into(), r.delta_success.into(), r.estimate.into()]);
    let metrics =
        vec![("threshold", r.estimate), ("delta_fail", r.delta_fail), ("delta_success", r.delta_success)];
    Ok((table, metrics, format!("scanned [{lo}, {hi}]")))
}

/// SE states t = 0..=iters from `init`, without early stopping.
fn se_track(init: SEState, params: &ModelParams, iters: usize) -> Result<Vec<SEState>> {
    let mut states = vec![init];
    for _ in 0..iters {
        let next = se_step(*states.last().unwrap(), params)?;
        states.push(next);
    }
    Ok(states)
}

fn deviation(r: &AMPRecord, se: &SEState) -> f64 {
    f64::max((r.alpha_abs() - se.alpha.abs()).abs(), (r.sigma2 - se.sigma2).abs())
}

fn max_deviation(records: &[AMPRecord], se: &[SEState], upto: usize) -> f64 {
    records.iter().filter(|r| r.t <= upto).map(|r| deviation(r, &se[r.t])).fold(0.0, f64::max)
}

fn t0_record<T: Scalar>(x: &[T], x_star: &[T]) -> Result<Vec<AMPRecord>> {
    let m = measure(x, x_star)?;
    Ok(vec![AMPRecord { t: 0, alpha: m.alpha, sigma2: m.sigma2, amse: m.amse, divergence: None }])
}

fn amp_options(p: &AmpVsSeParams) -> AmpOptions {
    AmpOptions {
        epsilon: p.epsilon,
        divergence: match p.divergence {
            DivergenceName::PlugIn => DivergenceMethod::GaussianPlugIn,
            DivergenceName::Empirical => DivergenceMethod::Empirical,
        },
        stop_amse: (p.stop_amse > 0.0).then_some(p.stop_amse),
    }
}

struct TrialResult {
    n: usize,
    seed: u64,
    records: Vec<AMPRecord>,
    failed: bool,
}

fn amp_trial<T: Scalar>(params: &ModelParams, p: &AmpVsSeParams, n: usize, seed: u64) -> Result<TrialResult> {
    let mut cfg = ModelConfig::new(params.field, n, params.delta, params.sigma_w2, seed);
    cfg.noise = match p.noise {
        NoiseName::RealAdditive => NoiseConvention::RealAdditive,
        NoiseName::InsideModulus => NoiseConvention::InsideModulus,
    };
    let inst = generate_instance::<T>(&cfg)?;
    let x0 = make_informative_init(&inst, T::from_re(p.alpha0), p.sigma0_sq, seed)?;
    let (records, failed) = if p.iters == 0 {
        (t0_record(&x0, &inst.x_star)?, false)
    } else {
        let trace = run_amp(&inst, x0, p.iters, &amp_options(p))?;
        (trace.records, trace.failed)
    };
    Ok(TrialResult { n, seed, records, failed })
}

fn amp_vs_se_run(params: &ModelParams, p: &AmpVsSeParams) -> Result<Run> {
    let se = se_track(SEState::new(p.alpha0, p.sigma0_sq), params, p.iters)?;
    let trials: Vec<(usize, u64)> = p
        .sizes
        .iter()
        .flat_map(|&n| (0..p.trials as u64).map(move |k| (n, p.seed.wrapping_add(k))))
        .collect();
    let results = trials
        .par_iter()
        .map(|&(n, seed)| match params.field {
            Field::Complex => amp_trial::<Complex64>(params, p, n, seed),
            Field::Real => amp_trial::<f64>(params, p, n, seed),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new(
        &["n", "seed", "t", "alpha_hat", "sigma2_hat", "amse", "se_alpha", "se_sigma2"],
        3,
    );
    let mut max_seed_dev: f64 = 0.0;
    let mut final_amse: f64 = 0.0;
    let mut failed = 0usize;
    for r in &results {
        for rec in &r.records {
            let s = se[rec.t];
            table.push(vec![
                r.n.into(),
                r.seed.into(),
                rec.t.into(),
                rec.alpha_abs().into(),
                rec.sigma2.into(),
                rec.amse.into(),
                s.alpha.into(),
                s.sigma2.into(),
            ]);
        }
        max_seed_dev = max_seed_dev.max(max_deviation(&r.records, &se, p.compare_iters));
        final_amse = final_amse.max(r.records.last().expect("t = 0 is recorded").amse);
        failed += r.failed as usize;
    }

    // seed-averaged trajectory per size, over the iterations every trial reached
    let mut mean_dev: f64 = 0.0;
    for &n in &p.sizes {
        let group: Vec<&TrialResult> = results.iter().filter(|r| r.n == n).collect();
        let common = group.iter().map(|r| r.records.len()).min().unwrap_or(0);
        for (t, target) in se.iter().enumerate().take(common.min(p.compare_iters + 1)) {
            let k = group.len() as f64;
            let a = group.iter().map(|r| r.records[t].alpha_abs()).sum::<f64>() / k;
            let s2 = group.iter().map(|r| r.records[t].sigma2).sum::<f64>() / k;
            let dev = f64::max((a - target.alpha.abs()).abs(), (s2 - target.sigma2).abs());
            mean_dev = mean_dev.max(dev);
        }
    }
    let metrics = vec![
        ("mean_deviation", mean_dev),
        ("max_seed_deviation", max_seed_dev),
        ("final_amse_max", final_amse),
        ("failed_trials", failed as f64),
    ];
    Ok((table, metrics, format!("{} trial(s)", results.len())))
}

fn noise_run(params: &ModelParams) -> Result<Run> {
    let ns = noise_sensitivity(params.delta, params.field)?;
    let mut table = Table::new(&["sigma_w2", "ratio", "normalized"], 1);
    for &(w, ratio) in &ns.ratios {
        table.push(vec![w.into(), ratio.into(), (ratio / params.delta).into()]);
    }
    let metrics = vec![
        ("numeric", ns.numeric),
        ("closed_form", ns.closed_form),
        ("normalized", ns.numeric / params.delta),
        ("rel_err", (ns.numeric - ns.closed_form).abs() / ns.closed_form),
    ];
    Ok((table, metrics, String::new()))
}

struct SpectralTrial {
    seed: u64,
    predicted: (f64, f64),
    decoupled: Vec<AMPRecord>,
    blind: Vec<AMPRecord>,
}

fn spectral_trial(params: &ModelParams, p: &SpectralDemoParams, seed: u64) -> Result<SpectralTrial> {
    let cfg = ModelConfig::new(Field::Complex, p.n, params.delta, params.sigma_w2, seed);
    let inst = generate_instance::<Complex64>(&cfg)?;
    let mut sc = SpectralConfig::new(params.delta, params.sigma_w2);
    sc.power_tol = p.power_tol;
    sc.power_max_iters = p.power_max_iters;
    let res = spectral_initialize(&inst, &sc)?;
    let opts = AmpOptions::default();
    let (decoupled, blind) = if p.iters == 0 {
        let r = t0_record(&res.x0, &inst.x_star)?;
        (r.clone(), r)
    } else {
        let state = AMPState::new(res.x0.clone(), inst.m()).with_p0(res.p0.clone());
        let d = run_amp_from(&inst, state, p.iters, &opts)?;
        let b = run_amp(&inst, res.x0, p.iters, &opts)?;
        (d.records, b.records)
    };
    Ok(SpectralTrial {
        seed,
        predicted: (res.predicted_alpha0_sq, res.predicted_sigma0_sq),
        decoupled,
        blind,
    })
}

fn spectral_run(params: &ModelParams, p: &SpectralDemoParams) -> Result<Run> {
    let seeds: Vec<u64> = (0..p.trials as u64).map(|k| p.seed.wrapping_add(k)).collect();
    let trials = seeds.par_iter().map(|&s| spectral_trial(params, p, s)).collect::<Result<Vec<_>>>()?;
    let (a2, s2) = trials[0].predicted;
    let se = se_track(SEState::new(a2.sqrt(), s2), params, p.iters)?;

    let mut table = Table::new(
        &["seed", "pipeline", "t", "alpha_hat", "sigma2_hat", "amse", "se_alpha", "se_sigma2"],
        3,
    );
    let (mut overlap_sum, mut overlap_err, mut dec_max) = (0.0, 0.0f64, 0.0f64);
    let (mut blind_min, mut blind_sum) = (f64::INFINITY, 0.0);
    for tr in &trials {
        for (name, recs) in [("decoupled", &tr.decoupled), ("blind", &tr.blind)] {
            for rec in recs {
                let s = se[rec.t];
                table.push(vec![
                    tr.seed.into(),
                    name.into(),
                    rec.t.into(),
                    rec.alpha_abs().into(),
                    rec.sigma2.into(),
                    rec.amse.into(),
                    s.alpha.into(),
                    s.sigma2.into(),
                ]);
            }
        }
        let o = tr.decoupled[0].alpha_abs().powi(2);
        overlap_sum += o;
        overlap_err = overlap_err.max((o - a2).abs());
        dec_max = dec_max.max(max_deviation(&tr.decoupled, &se, p.iters));
        let b = max_deviation(&tr.blind, &se, p.iters);
        blind_min = blind_min.min(b);
        blind_sum += b;
    }
    let k = trials.len() as f64;
    let metrics = vec![
        ("predicted_alpha0_sq", a2),
        ("mean_alpha0_sq", overlap_sum / k),
        ("max_overlap_error", overlap_err),
        ("decoupled_max_dev", dec_max),
        ("blind_min_dev", blind_min),
        ("blind_mean_dev", blind_sum / k),
    ];
    Ok((table, metrics, format!("{} trial(s)", trials.len())))
}

fn nullcline_run(params: &ModelParams, p: &NullclineParams) -> Result<Run> {
    let alphas: Vec<f64> = if p.points == 1 {
        vec![p.alpha_lo]
    } else {
        let h = (p.alpha_hi - p.alpha_lo) / (p.points - 1) as f64;
        (0..p.points).map(|i| p.alpha_lo + i as f64 * h).collect()
    };
    let rows = alphas
        .par_iter()
        .map(|&a| -> Result<[f64; 4]> {
            Ok([
                a,
                f1_inverse(a, params.field)?,
                f2(a, params)?,
                l_boundary(a, params.delta, params.field)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["alpha", "f1_inv", "f2", "l"], 1);
    let (mut violations, mut gap_f2, mut gap_l) = (0usize, f64::INFINITY, f64::INFINITY);
    for r in &rows {
        table.push(r.iter().map(|&v| Cell::Float(v)).collect());
        gap_f2 = gap_f2.min(r[1] - r[2]);
        gap_l = gap_l.min(r[1] - r[3]);
        violations += !(r[1] > r[2] && r[1] > r[3]) as usize;
    }
    let metrics = vec![("violations", violations as f64), ("min_gap_f2", gap_f2), ("min_gap_l", gap_l)];
    Ok((table, metrics, String::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: Kind) -> ExperimentSpec {
        ExperimentSpec::default_for(kind)
    }

    #[test]
    fn every_metric_is_declared() {
        for kind in [Kind::SeTrajectory, Kind::NoiseSensitivity, Kind::Nullclines, Kind::SePhaseScan] {
            let out = run_experiment(&spec(kind), Some(1)).unwrap();
            let names: Vec<&str> = out.summary.metrics.iter().map(|m| m.0).collect();
            assert_eq!(names, kind.metrics(), "{kind}");
        }
    }

    #[test]
    fn trajectory_rows_follow_the_se() {
        let out = run_experiment(&spec(Kind::SeTrajectory), Some(1)).unwrap();
        assert_eq!(out.summary.metric("success"), Some(1.0));
        let alphas = out.table.column("alpha").unwrap();
        assert_eq!(alphas[0].as_f64(), Some(0.5));
        let iters = out.summary.metric("iterations").unwrap() as usize;
        assert_eq!(out.table.rows.len(), iters + 1);
    }

    #[test]
    fn zero_iterations_give_t0_rows_only() {
        let mut s = spec(Kind::AmpVsSe);
        if let Params::AmpVsSe(p) = &mut s.params {
            p.sizes = vec![64, 32];
            p.iters = 0;
            p.compare_iters = 0;
        }
        let out = run_experiment(&s, Some(1)).unwrap();
        assert_eq!(out.table.rows.len(), 4);
        assert!(out.table.column("t").unwrap().iter().all(|c| c.as_f64() == Some(0.0)));
        let ns: Vec<f64> = out.table.column("n").unwrap().iter().map(|c| c.as_f64().unwrap()).collect();
        assert_eq!(ns, [32.0, 32.0, 64.0, 64.0]);
    }

    #[test]
    fn assertion_is_evaluated() {
        let mut s = spec(Kind::Nullclines);
        s.assert = Some(AssertSection { metric: "violations".into(), lo: 0.0, hi: 0.0 });
        let out = run_experiment(&s, Some(1)).unwrap();
        assert!(out.summary.passed());
        assert!(out.summary.line().ends_with("PASS]"), "{}", out.summary.line());
        s.assert = Some(AssertSection { metric: "violations".into(), lo: 1.0, hi: 2.0 });
        let out = run_experiment(&s, Some(1)).unwrap();
        assert!(!out.summary.passed());
        assert!(out.summary.line().ends_with("FAIL]"));
    }

    #[test]
    fn serial_and_parallel_agree() {
        let mut s = spec(Kind::AmpVsSe);
        if let Params::AmpVsSe(p) = &mut s.params {
            p.sizes = vec![64, 48];
            p.trials = 3;
            p.iters = 5;
            p.compare_iters = 5;
        }
        let a = run_experiment(&s, Some(1)).unwrap();
        let b = run_experiment(&s, Some(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_spec_is_refused() {
        let mut s = spec(Kind::SeBasin);
        s.model.delta = 0.0;
        assert!(run_experiment(&s, Some(1)).is_err());
    }
}

//! Experiment specs: TOML parsing, field-level validation, serialization.

use phaseamp::se_dynamics::thresholds;
use phaseamp::Field;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SeTrajectory,
    SeBasin,
    SePhaseScan,
    AmpVsSe,
    NoiseSensitivity,
    SpectralDemo,
    Nullclines,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::SeTrajectory,
        Kind::SeBasin,
        Kind::SePhaseScan,
        Kind::AmpVsSe,
        Kind::NoiseSensitivity,
        Kind::SpectralDemo,
        Kind::Nullclines,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::SeTrajectory => "se-trajectory",
            Kind::SeBasin => "se-basin",
            Kind::SePhaseScan => "se-phase-scan",
            Kind::AmpVsSe => "amp-vs-se",
            Kind::NoiseSensitivity => "noise-sensitivity",
            Kind::SpectralDemo => "spectral-demo",
            Kind::Nullclines => "nullclines",
        }
    }

    /// Summary metrics an assertion block may refer to.
    pub fn metrics(&self) -> &'static [&'static str] {
        match self {
            Kind::SeTrajectory => &["iterations", "final_alpha", "final_sigma2", "success"],
            Kind::SeBasin => &["success_fraction", "cells"],
            Kind::SePhaseScan => &["threshold", "delta_fail", "delta_success"],
            Kind::AmpVsSe => &[
                "mean_deviation",
                "max_seed_deviation",
                "final_amse_max",
                "failed_trials",
            ],
            Kind::NoiseSensitivity => &["numeric", "closed_form", "normalized", "rel_err"],
            Kind::SpectralDemo => &[
                "predicted_alpha0_sq",
                "mean_alpha0_sq",
                "max_overlap_error",
                "decoupled_max_dev",
                "blind_min_dev",
                "blind_mean_dev",
            ],
            Kind::Nullclines => &["violations", "min_gap_f2", "min_gap_l"],
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldName {
    Real,
    Complex,
}

impl From<FieldName> for Field {
    fn from(f: FieldName) -> Field {
        match f {
            FieldName::Real => Field::Real,
            FieldName::Complex => Field::Complex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceName {
    PlugIn,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseName {
    RealAdditive,
    InsideModulus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub field: FieldName,
    pub delta: f64,
    pub sigma_w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: Format,
    /// "-" writes to stdout.
    pub path: String,
}

/// Passes when `lo <= metric <= hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertSection {
    pub metric: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeTrajectoryParams {
    pub alpha0: f64,
    pub sigma0_sq: f64,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeBasinParams {
    pub grid_n: usize,
    pub max_iters: usize,
    pub tol: f64,
}

/// Bisection over [model.delta - half_width, model.delta + half_width].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseScanParams {
    pub half_width: f64,
    pub steps: usize,
    pub alpha0: f64,
    pub sigma0_sq: f64,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmpVsSeParams {
    pub sizes: Vec<usize>,
    /// Trial k of each size uses instance seed `seed + k`.
    pub seed: u64,
    pub trials: usize,
    pub iters: usize,
    /// Deviation from SE is scored on t <= compare_iters.
    pub compare_iters: usize,
    pub alpha0: f64,
    pub sigma0_sq: f64,
    pub epsilon: f64,
    pub divergence: DivergenceName,
    pub noise: NoiseName,
    /// 0 disables early stopping.
    pub stop_amse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSensitivityParams {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralDemoParams {
    pub n: usize,
    pub seed: u64,
    pub trials: usize,
    pub iters: usize,
    pub power_tol: f64,
    pub power_max_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NullclineParams {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    SeTrajectory(SeTrajectoryParams),
    SeBasin(SeBasinParams),
    SePhaseScan(PhaseScanParams),
    AmpVsSe(AmpVsSeParams),
    NoiseSensitivity(NoiseSensitivityParams),
    SpectralDemo(SpectralDemoParams),
    Nullclines(NullclineParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub model: ModelSection,
    pub params: Params,
    pub output: OutputSection,
    pub assert: Option<AssertSection>,
}

/// Every violation found, one `path: message` per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid experiment spec ({} error(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const SECTIONS: [&str; 5] = ["kind", "model", "params", "output", "assert"];

fn section<T: DeserializeOwned>(table: &Table, key: &str, errs: &mut Vec<String>) -> Option<T> {
    match table.get(key) {
        None => {
            errs.push(format!("{key}: missing"));
            None
        }
        Some(v) => match v.clone().try_into::<T>() {
            Ok(t) => Some(t),
            Err(e) => {
                errs.push(format!("{key}: {}", e.message().trim()));
                None
            }
        },
    }
}

/// Strict parse plus numeric validation.
pub fn validate_config(text: &str) -> Result<ExperimentSpec, ConfigErrors> {
    if text.trim().is_empty() {
        return Err(ConfigErrors(vec!["config is empty".into()]));
    }
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![format!("parse error: {}", e.message().trim())]))?;
    let mut errs = Vec::new();
    for key in table.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            errs.push(format!("{key}: unknown key"));
        }
    }
    let kind: Option<Kind> = section(&table, "kind", &mut errs);
    let model: Option<ModelSection> = section(&table, "model", &mut errs);
    let output: Option<OutputSection> = section(&table, "output", &mut errs);
    let assert: Option<AssertSection> = match table.get("assert") {
        None => None,
        Some(_) => section(&table, "assert", &mut errs),
    };
    let params = kind.and_then(|k| {
        let e = &mut errs;
        match k {
            Kind::SeTrajectory => section(&table, "params", e).map(Params::SeTrajectory),
            Kind::SeBasin => section(&table, "params", e).map(Params::SeBasin),
            Kind::SePhaseScan => section(&table, "params", e).map(Params::SePhaseScan),
            Kind::AmpVsSe => section(&table, "params", e).map(Params::AmpVsSe),
            Kind::NoiseSensitivity => section(&table, "params", e).map(Params::NoiseSensitivity),
            Kind::SpectralDemo => section(&table, "params", e).map(Params::SpectralDemo),
            Kind::Nullclines => section(&table, "params", e).map(Params::Nullclines),
        }
    });
    match (kind, model, params, output) {
        (Some(kind), Some(model), Some(params), Some(output)) if errs.is_empty() => {
            let spec = ExperimentSpec { kind, model, params, output, assert };
            spec.validate()?;
            Ok(spec)
        }
        _ => Err(ConfigErrors(errs)),
    }
}

struct Checker(Vec<String>);

impl Checker {
    fn check(&mut self, ok: bool, path: &str, msg: impl fmt::Display) {
        if !ok {
            self.0.push(format!("{path}: {msg}"));
        }
    }

    fn positive(&mut self, x: f64, path: &str) {
        self.check(x.is_finite() && x > 0.0, path, format_args!("must be finite and > 0, got {x}"));
    }

    fn nonneg(&mut self, x: f64, path: &str) {
        self.check(x.is_finite() && x >= 0.0, path, format_args!("must be finite and >= 0, got {x}"));
    }

    fn at_least(&mut self, x: usize, min: usize, path: &str) {
        self.check(x >= min, path, format_args!("must be >= {min}, got {x}"));
    }

    fn start(&mut self, alpha0: f64, sigma0_sq: f64) {
        self.check(
            alpha0.is_finite() && alpha0.abs() <= 1.0,
            "params.alpha0",
            format_args!("must lie in [-1, 1], got {alpha0}"),
        );
        self.nonneg(sigma0_sq, "params.sigma0_sq");
        self.check(
            alpha0 != 0.0 || sigma0_sq != 0.0,
            "params",
            "alpha0 and sigma0_sq cannot both be 0",
        );
    }

    fn noiseless(&mut self, model: &ModelSection, kind: Kind) {
        self.check(
            model.sigma_w2 == 0.0,
            "model.sigma_w2",
            format_args!("{kind} runs noiseless SE; set sigma_w2 = 0"),
        );
    }
}

impl ExperimentSpec {
    /// Numeric bounds of every field; all violations are reported together.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut c = Checker(Vec::new());
        let m = &self.model;
        c.positive(m.delta, "model.delta");
        c.nonneg(m.sigma_w2, "model.sigma_w2");
        c.check(!self.output.path.is_empty(), "output.path", "must not be empty");
        if let Some(a) = &self.assert {
            c.check(
                self.kind.metrics().contains(&a.metric.as_str()),
                "assert.metric",
                format_args!("'{}' is not one of {:?}", a.metric, self.kind.metrics()),
            );
            c.check(
                !a.lo.is_nan() && !a.hi.is_nan() && a.lo <= a.hi,
                "assert",
                format_args!("need lo <= hi, got [{}, {}]", a.lo, a.hi),
            );
        }
        let kind_ok = matches!(
            (self.kind, &self.params),
            (Kind::SeTrajectory, Params::SeTrajectory(_))
                | (Kind::SeBasin, Params::SeBasin(_))
                | (Kind::SePhaseScan, Params::SePhaseScan(_))
                | (Kind::AmpVsSe, Params::AmpVsSe(_))
                | (Kind::NoiseSensitivity, Params::NoiseSensitivity(_))
                | (Kind::SpectralDemo, Params::SpectralDemo(_))
                | (Kind::Nullclines, Params::Nullclines(_))
        );
        c.check(kind_ok, "params", format_args!("do not belong to kind {}", self.kind));
        match &self.params {
            Params::SeTrajectory(p) => {
                c.start(p.alpha0, p.sigma0_sq);
                c.at_least(p.max_iters, 1, "params.max_iters");
                c.positive(p.tol, "params.tol");
            }
            Params::SeBasin(p) => {
                c.at_least(p.grid_n, 2, "params.grid_n");
                c.at_least(p.max_iters, 1, "params.max_iters");
                c.positive(p.tol, "params.tol");
                c.noiseless(m, self.kind);
            }
            Params::SePhaseScan(p) => {
                c.positive(p.half_width, "params.half_width");
                c.check(
                    p.half_width < m.delta,
                    "params.half_width",
                    format_args!("must be < model.delta so the scan stays at delta > 0, got {}", p.half_width),
                );
                c.check(
                    (1..=60).contains(&p.steps),
                    "params.steps",
                    format_args!("must lie in 1..=60, got {}", p.steps),
                );
                c.start(p.alpha0, p.sigma0_sq);
                c.at_least(p.max_iters, 1, "params.max_iters");
                c.positive(p.tol, "params.tol");
                c.noiseless(m, self.kind);
            }
            Params::AmpVsSe(p) => {
                c.check(!p.sizes.is_empty(), "params.sizes", "must not be empty");
                for (i, &n) in p.sizes.iter().enumerate() {
                    c.at_least(n, 16, &format!("params.sizes[{i}]"));
                }
                c.at_least(p.trials, 1, "params.trials");
                c.check(
                    p.compare_iters <= p.iters,
                    "params.compare_iters",
                    format_args!("must be <= params.iters = {}, got {}", p.iters, p.compare_iters),
                );
                c.start(p.alpha0, p.sigma0_sq);
                c.check(
                    p.alpha0 >= 0.0,
                    "params.alpha0",
                    format_args!("must be >= 0 (the SE state is phase aligned), got {}", p.alpha0),
                );
                c.check(p.sigma0_sq <= 1.0, "params.sigma0_sq", format_args!("must be <= 1, got {}", p.sigma0_sq));
                c.nonneg(p.epsilon, "params.epsilon");
                c.nonneg(p.stop_amse, "params.stop_amse");
                c.check(
                    !(m.field == FieldName::Real && p.divergence == DivergenceName::Empirical && p.epsilon == 0.0),
                    "params.epsilon",
                    "the real empirical divergence needs epsilon > 0",
                );
            }
            Params::NoiseSensitivity(_) => {
                let th = thresholds(m.field.into()).delta_amp;
                c.check(
                    m.delta > th,
                    "model.delta",
                    format_args!("must exceed the AMP threshold {th}, got {}", m.delta),
                );
                c.noiseless(m, self.kind);
            }
            Params::SpectralDemo(p) => {
                c.check(m.field == FieldName::Complex, "model.field", "spectral-demo is complex only");
                c.check(m.delta > 2.0, "model.delta", format_args!("must be > 2, got {}", m.delta));
                c.at_least(p.n, 16, "params.n");
                c.at_least(p.trials, 1, "params.trials");
                c.positive(p.power_tol, "params.power_tol");
                c.at_least(p.power_max_iters, 1, "params.power_max_iters");
            }
            Params::Nullclines(p) => {
                let ok = 0.0 < p.alpha_lo && p.alpha_lo <= p.alpha_hi && p.alpha_hi < 1.0;
                c.check(
                    ok,
                    "params",
                    format_args!("need 0 < alpha_lo <= alpha_hi < 1, got [{}, {}]", p.alpha_lo, p.alpha_hi),
                );
                c.at_least(p.points, 1, "params.points");
                c.check(
                    p.points >= 2 || p.alpha_lo == p.alpha_hi,
                    "params.points",
                    "a range with alpha_lo < alpha_hi needs at least 2 points",
                );
            }
        }
        if c.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(c.0))
        }
    }

    pub fn to_toml(&self) -> String {
        fn value<T: Serialize>(v: &T) -> Value {
            Value::try_from(v).expect("spec sections serialize to TOML")
        }
        let mut t = Table::new();
        t.insert("kind".into(), Value::String(self.kind.as_str().into()));
        t.insert("model".into(), value(&self.model));
        let params = match &self.params {
            Params::SeTrajectory(p) => value(p),
            Params::SeBasin(p) => value(p),
            Params::SePhaseScan(p) => value(p),
            Params::AmpVsSe(p) => value(p),
            Params::NoiseSensitivity(p) => value(p),
            Params::SpectralDemo(p) => value(p),
            Params::Nullclines(p) => value(p),
        };
        t.insert("params".into(), params);
        t.insert("output".into(), value(&self.output));
        if let Some(a) = &self.assert {
            t.insert("assert".into(), value(a));
        }
        toml::to_string(&t).expect("table serializes")
    }

    /// Replace the master seed of seeded kinds; other kinds are deterministic and ignore it.
    pub fn override_seed(&mut self, seed: u64) {
        match &mut self.params {
            Params::AmpVsSe(p) => p.seed = seed,
            Params::SpectralDemo(p) => p.seed = seed,
            _ => {}
        }
    }

    /// Built-in spec of each kind; `phaseamp <kind> --print-config` shows it.
    pub fn default_for(kind: Kind) -> ExperimentSpec {
        let complex = |delta| ModelSection { field: FieldName::Complex, delta, sigma_w2: 0.0 };
        let (model, params) = match kind {
            Kind::SeTrajectory => (
                complex(3.0),
                Params::SeTrajectory(SeTrajectoryParams { alpha0: 0.5, sigma0_sq: 0.5, max_iters: 10_000, tol: 1e-6 }),
            ),
            Kind::SeBasin => (
                complex(2.45),
                Params::SeBasin(SeBasinParams { grid_n: 50, max_iters: 10_000, tol: 1e-6 }),
            ),
            Kind::SePhaseScan => (
                complex(64.0 / (std::f64::consts::PI * std::f64::consts::PI) - 4.0),
                Params::SePhaseScan(PhaseScanParams {
                    half_width: 0.5,
                    steps: 30,
                    alpha0: 0.5,
                    sigma0_sq: 0.5,
                    max_iters: 10_000,
                    tol: 1e-6,
                }),
            ),
            Kind::AmpVsSe => (
                complex(3.0),
                Params::AmpVsSe(AmpVsSeParams {
                    sizes: vec![500],
                    seed: 1,
                    trials: 2,
                    iters: 20,
                    compare_iters: 20,
                    alpha0: 0.5,
                    sigma0_sq: 0.5,
                    epsilon: 0.0,
                    divergence: DivergenceName::PlugIn,
                    noise: NoiseName::RealAdditive,
                    stop_amse: 0.0,
                }),
            ),
            Kind::NoiseSensitivity => (complex(4.0), Params::NoiseSensitivity(NoiseSensitivityParams {})),
            Kind::SpectralDemo => (
                complex(4.0),
                Params::SpectralDemo(SpectralDemoParams {
                    n: 500,
                    seed: 1,
                    trials: 2,
                    iters: 10,
                    power_tol: 1e-5,
                    power_max_iters: 5000,
                }),
            ),
            Kind::Nullclines => (
                complex(3.0),
                Params::Nullclines(NullclineParams { alpha_lo: 0.05, alpha_hi: 0.95, points: 19 }),
            ),
        };
        ExperimentSpec {
            kind,
            model,
            params,
            output: OutputSection { format: Format::Csv, path: "-".into() },
            assert: None,
        }
    }
}

//! Random measurement instances y = |A x*| + w.

use super::linalg::{norm_sqr, DenseMatrix, Scalar, SensingOperator};
use crate::error::{Error, Result};
use crate::se_maps::{Field, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STREAM_SIGNAL: u64 = 1;
const STREAM_NOISE: u64 = 2;
/// Row i of A is drawn from stream `STREAM_ROWS + i`.
const STREAM_ROWS: u64 = 1 << 32;

/// Distribution of the ground-truth signal before rescaling to ||x*||^2 = n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignalPrior {
    /// i.i.d. unit-variance field-Gaussian.
    #[default]
    Gaussian,
    /// i.i.d. Uniform[0, 1]; real field only.
    NonnegUniform,
}

/// Where the measurement noise enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseConvention {
    /// y = |A x*| + w with w real N(0, sigma_w^2). Matches the SE maps.
    #[default]
    RealAdditive,
    /// y = |A x* + w| with w field-Gaussian of variance sigma_w^2.
    InsideModulus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub n: usize,
    pub params: ModelParams,
    pub signal: SignalPrior,
    pub noise: NoiseConvention,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(field: Field, n: usize, delta: f64, sigma_w2: f64, seed: u64) -> Self {
        ModelConfig {
            n,
            params: ModelParams { delta, sigma_w2, field },
            signal: SignalPrior::Gaussian,
            noise: NoiseConvention::RealAdditive,
            seed,
        }
    }

    /// m = round(delta n).
    pub fn m(&self) -> usize {
        (self.params.delta * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n < 16 {
            return Err(Error::Dimension(format!("n must be >= 16, got {}", self.n)));
        }
        if self.m() == 0 {
            return Err(Error::Dimension("m = round(delta n) is zero".into()));
        }
        if self.signal == SignalPrior::NonnegUniform && self.params.field == Field::Complex {
            return Err(Error::Domain("nonnegative-uniform signal is real-field only".into()));
        }
        Ok(())
    }
}

/// A, x* and y for one draw of the model. `T` fixes the field.
#[derive(Debug, Clone)]
pub struct MeasurementInstance<T: Scalar, A = DenseMatrix<T>> {
    pub a: A,
    pub x_star: Vec<T>,
    pub y: Vec<f64>,
    pub params: ModelParams,
}

impl<T: Scalar, A: SensingOperator<T>> MeasurementInstance<T, A> {
    /// Assemble an instance around a user-supplied operator (e.g. matrix-free).
    pub fn from_parts(a: A, x_star: Vec<T>, y: Vec<f64>, params: ModelParams) -> Result<Self> {
        params.validate()?;
        if params.field != T::FIELD {
            return Err(Error::Domain(format!(
                "params are {} but scalars are {}",
                params.field,
                T::FIELD
            )));
        }
        if x_star.len() != a.cols() || y.len() != a.rows() {
            return Err(Error::Dimension(format!(
                "operator is {}x{}, x* has {}, y has {}",
                a.rows(),
                a.cols(),
                x_star.len(),
                y.len()
            )));
        }
        Ok(MeasurementInstance { a, x_star, y, params })
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn delta(&self) -> f64 {
        self.params.delta
    }
}

/// Draw an instance. Every random quantity comes from its own ChaCha8 stream
/// of `config.seed`, so the result is a pure function of the config.
pub fn generate_instance<T: Scalar>(config: &ModelConfig) -> Result<MeasurementInstance<T>> {
    config.validate()?;
    if config.params.field != T::FIELD {
        return Err(Error::Domain(format!(
            "config is {} but scalars are {}",
            config.params.field,
            T::FIELD
        )));
    }
    let n = config.n;
    let m = config.m();
    let var = 1.0 / m as f64;

    let mut data = Vec::with_capacity(m * n);
    for i in 0..m {
        let mut rng = stream(config.seed, STREAM_ROWS + i as u64);
        data.extend((0..n).map(|_| T::gaussian(&mut rng, var)));
    }
    let a = DenseMatrix::from_vec(m, n, data)?;

    let mut rng = stream(config.seed, STREAM_SIGNAL);
    let mut x_star: Vec<T> = match config.signal {
        SignalPrior::Gaussian => (0..n).map(|_| T::gaussian(&mut rng, 1.0)).collect(),
        SignalPrior::NonnegUniform => (0..n).map(|_| T::from_re(rng.random::<f64>())).collect(),
    };
    let scale = (n as f64 / norm_sqr(&x_star)).sqrt();
    x_star.iter_mut().for_each(|v| *v = v.scale(scale));

    let mut z = vec![T::zero(); m];
    a.apply(&x_star, &mut z);
    let sw2 = config.params.sigma_w2;
    let mut rng = stream(config.seed, STREAM_NOISE);
    let y = match config.noise {
        _ if sw2 == 0.0 => z.iter().map(|v| v.modulus()).collect(),
        NoiseConvention::RealAdditive => z
            .iter()
            .map(|v| v.modulus() + f64::gaussian(&mut rng, sw2))
            .collect(),
        NoiseConvention::InsideModulus => z
            .iter()
            .map(|&v| (v + T::gaussian(&mut rng, sw2)).modulus())
            .collect(),
    };
    Ok(MeasurementInstance { a, x_star, y, params: config.params })
}

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn dimensions_and_normalization() {
        let cfg = ModelConfig::new(Field::Complex, 64, 3.0, 0.0, 7);
        let inst = generate_instance::<Complex64>(&cfg).unwrap();
        assert_eq!(inst.m(), 192);
        assert_eq!(inst.n(), 64);
        assert!((norm_sqr(&inst.x_star) - 64.0).abs() < 1e-10);
    }

    #[test]
    fn noiseless_y_is_modulus() {
        let cfg = ModelConfig::new(Field::Real, 32, 2.0, 0.0, 1);
        let inst = generate_instance::<f64>(&cfg).unwrap();
        let mut z = vec![0.0; inst.m()];
        inst.a.apply(&inst.x_star, &mut z);
        for (y, z) in inst.y.iter().zip(&z) {
            assert_eq!(*y, z.abs());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = ModelConfig::new(Field::Complex, 32, 2.5, 0.1, 11);
        let a = generate_instance::<Complex64>(&cfg).unwrap();
        let b = generate_instance::<Complex64>(&cfg).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.x_star, b.x_star);
        assert_eq!(a.y, b.y);
        let c = generate_instance::<Complex64>(&ModelConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn entry_variance_is_one_over_m() {
        let cfg = ModelConfig::new(Field::Complex, 100, 4.0, 0.0, 3);
        let inst = generate_instance::<Complex64>(&cfg).unwrap();
        let mean_sq = norm_sqr(inst.a.data()) / inst.a.data().len() as f64;
        assert!((mean_sq * 400.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn noise_conventions_differ() {
        let mut cfg = ModelConfig::new(Field::Complex, 32, 2.0, 0.5, 4);
        let additive = generate_instance::<Complex64>(&cfg).unwrap();
        assert!(additive.y.iter().any(|&y| y < 0.0));
        cfg.noise = NoiseConvention::InsideModulus;
        let inside = generate_instance::<Complex64>(&cfg).unwrap();
        assert!(inside.y.iter().all(|&y| y >= 0.0));
    }

    #[test]
    fn nonneg_signal() {
        let mut cfg = ModelConfig::new(Field::Real, 64, 2.0, 0.0, 5);
        cfg.signal = SignalPrior::NonnegUniform;
        let inst = generate_instance::<f64>(&cfg).unwrap();
        assert!(inst.x_star.iter().all(|&v| v >= 0.0));
        assert!((norm_sqr(&inst.x_star) - 64.0).abs() < 1e-10);
        cfg.params.field = Field::Complex;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_instance::<f64>(&ModelConfig::new(Field::Real, 8, 2.0, 0.0, 0)).is_err());
        assert!(generate_instance::<f64>(&ModelConfig::new(Field::Real, 32, -1.0, 0.0, 0)).is_err());
        assert!(generate_instance::<f64>(&ModelConfig::new(Field::Complex, 32, 2.0, 0.0, 0)).is_err());
    }
}

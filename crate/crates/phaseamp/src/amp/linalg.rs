//! Field scalars and the dense sensing operator.

use crate::error::{Error, Result};
use crate::se_maps::Field;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::ops::{Add, AddAssign, Mul, Sub};

/// Entry type of vectors and matrices: `f64` for the real model, `Complex64` for the complex one.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + AddAssign
    + 'static
{
    const FIELD: Field;
    fn zero() -> Self;
    fn from_re(x: f64) -> Self;
    fn conj(self) -> Self;
    fn modulus(self) -> f64;
    fn norm_sqr(self) -> f64;
    fn scale(self, k: f64) -> Self;
    fn re(self) -> f64;
    fn to_complex(self) -> Complex64;
    /// Unit-modulus scalar with the phase of `self`; 1 at zero.
    fn direction(self) -> Self;
    /// Field-Gaussian with variance `var`.
    fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Self;
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;
    fn zero() -> Self {
        0.0
    }
    fn from_re(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn re(self) -> f64 {
        self
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn direction(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
    fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Self {
        let x: f64 = rng.sample(StandardNormal);
        var.sqrt() * x
    }
}

impl Scalar for Complex64 {
    const FIELD: Field = Field::Complex;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_re(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn re(self) -> f64 {
        self.re
    }
    fn to_complex(self) -> Complex64 {
        self
    }
    fn direction(self) -> Self {
        let r = self.norm();
        if r == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            self / r
        }
    }
    fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Self {
        let sd = (0.5 * var).sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        Complex64::new(sd * a, sd * b)
    }
}

/// Linear map x -> A x with its adjoint. Implement this for matrix-free operators.
pub trait SensingOperator<T: Scalar>: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// out = A x
    fn apply(&self, x: &[T], out: &mut [T]);
    /// out = A^H g
    fn apply_adjoint(&self, g: &[T], out: &mut [T]);

    /// out = A^H h with h_i = f(i, (A x)_i).
    fn apply_map_adjoint(&self, x: &[T], f: &mut dyn FnMut(usize, T) -> T, out: &mut [T]) {
        let mut ax = vec![T::zero(); self.rows()];
        self.apply(x, &mut ax);
        for (i, v) in ax.iter_mut().enumerate() {
            *v = f(i, *v);
        }
        self.apply_adjoint(&ax, out);
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

impl<T: Scalar> SensingOperator<T> for DenseMatrix<T> {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[T], out: &mut [T]) {
        assert_eq!(x.len(), self.cols, "apply: x has wrong length");
        assert_eq!(out.len(), self.rows, "apply: out has wrong length");
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    fn apply_adjoint(&self, g: &[T], out: &mut [T]) {
        assert_eq!(g.len(), self.rows, "apply_adjoint: g has wrong length");
        assert_eq!(out.len(), self.cols, "apply_adjoint: out has wrong length");
        out.iter_mut().for_each(|o| *o = T::zero());
        for (&gi, row) in g.iter().zip(self.data.chunks_exact(self.cols)) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a.conj() * gi;
            }
        }
    }

    /// Single pass over the rows, so A is streamed from memory once.
    fn apply_map_adjoint(&self, x: &[T], f: &mut dyn FnMut(usize, T) -> T, out: &mut [T]) {
        assert_eq!(x.len(), self.cols, "apply_map_adjoint: x has wrong length");
        assert_eq!(out.len(), self.cols, "apply_map_adjoint: out has wrong length");
        out.iter_mut().for_each(|o| *o = T::zero());
        for (i, row) in self.data.chunks_exact(self.cols).enumerate() {
            let h = f(i, dot(row, x));
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a.conj() * h;
            }
        }
    }
}

/// sum_j a_j x_j with four independent accumulators.
#[inline]
fn dot<T: Scalar>(a: &[T], x: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (a4, x4) = (a.chunks_exact(4), x.chunks_exact(4));
    let (ar, xr) = (a4.remainder(), x4.remainder());
    for (a, x) in a4.zip(x4) {
        for k in 0..4 {
            acc[k] += a[k] * x[k];
        }
    }
    let mut tail = T::zero();
    for (&a, &x) in ar.iter().zip(xr) {
        tail += a * x;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn inner<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&u, &v) in a.iter().zip(b) {
        acc += u.conj() * v;
    }
    acc
}

pub(crate) fn norm_sqr<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| Complex64::gaussian(&mut rng, 1.0)).collect();
        DenseMatrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn adjoint_identity() {
        let a = random_matrix(7, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Complex64> = (0..5).map(|_| Complex64::gaussian(&mut rng, 1.0)).collect();
        let g: Vec<Complex64> = (0..7).map(|_| Complex64::gaussian(&mut rng, 1.0)).collect();
        let mut ax = vec![Complex64::zero(); 7];
        let mut ahg = vec![Complex64::zero(); 5];
        a.apply(&x, &mut ax);
        a.apply_adjoint(&g, &mut ahg);
        let lhs = inner(&g, &ax);
        let rhs = inner(&ahg, &x);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn apply_matches_entries() {
        let a = random_matrix(3, 4, 3);
        let e2: Vec<Complex64> = (0..4).map(|j| Complex64::from_re(if j == 2 { 1.0 } else { 0.0 })).collect();
        let mut out = vec![Complex64::zero(); 3];
        a.apply(&e2, &mut out);
        for (i, o) in out.iter().enumerate() {
            assert_eq!(*o, a.get(i, 2));
        }
    }

    #[test]
    fn fused_pass_matches_two_passes() {
        let a = random_matrix(9, 6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Complex64> = (0..6).map(|_| Complex64::gaussian(&mut rng, 1.0)).collect();
        let mut f = |i: usize, v: Complex64| v * (i as f64 - 3.0) + Complex64::new(0.5, -0.25);
        let mut fused = vec![Complex64::zero(); 6];
        a.apply_map_adjoint(&x, &mut f, &mut fused);
        let mut ax = vec![Complex64::zero(); 9];
        a.apply(&x, &mut ax);
        let h: Vec<Complex64> = ax.iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        let mut two = vec![Complex64::zero(); 6];
        a.apply_adjoint(&h, &mut two);
        for (u, v) in fused.iter().zip(&two) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn direction_conventions() {
        assert_eq!(0.0f64.direction(), 1.0);
        assert_eq!((-2.0f64).direction(), -1.0);
        assert_eq!(Complex64::zero().direction(), Complex64::new(1.0, 0.0));
        let d = Complex64::new(3.0, 4.0).direction();
        assert!((d - Complex64::new(0.6, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn gaussian_variance_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let (mut re2, mut im2) = (0.0, 0.0);
        for _ in 0..n {
            let z = Complex64::gaussian(&mut rng, 2.0);
            re2 += z.re * z.re;
            im2 += z.im * z.im;
        }
        assert!((re2 / n as f64 - 1.0).abs() < 0.02);
        assert!((im2 / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn dimension_checked() {
        assert!(DenseMatrix::<f64>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}

//! Dense kernels, the seeded random stream, and small numerical helpers.
//!
//! Every reduction here walks its input front to back with a single running
//! accumulator, so results are bit-identical across runs and thread counts.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(invalid(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    /// New matrix holding the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column means, accumulated row by row.
    pub fn column_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for r in self.iter_rows() {
            axpy(1.0, r, &mut acc);
        }
        let n = self.rows as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Euclidean norm. Errors on non-finite input.
pub fn l2_norm(v: &[f64]) -> Result<f64> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("l2_norm input".into()));
    }
    Ok(norm(v))
}

/// Euclidean norm without the finiteness check, for hot loops over
/// already-validated data.
#[inline]
pub fn norm(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x * x;
    }
    s.sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `‖a − b‖₂`
#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s.sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Index of the largest entry; ties go to the lowest index. NaN entries are
/// never selected unless every entry is NaN.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            None if !x.is_nan() => best = Some((i, x)),
            Some((_, b)) if x > b => best = Some((i, x)),
            _ => {}
        }
    }
    best.map(|(i, _)| i).or(if v.is_empty() { None } else { Some(0) })
}

/// Numerically stable softmax written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// `log Σ exp(z)`, shifted by the max.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for &z in logits {
        s += (z - max).exp();
    }
    max + s.ln()
}

/// Mean and sample standard deviation (divide by `n − 1`; zero for `n < 2`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mut s = 0.0;
    for v in values {
        s += v;
    }
    let mean = s / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    (mean, (ss / (n - 1.0)).sqrt())
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for `(seed, stream)`: `seed ⊕ splitmix64(stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ splitmix64(stream)
}

/// Seeded xoshiro256++ stream.
///
/// The 256-bit state is expanded from the 64-bit seed with SplitMix64, and
/// each draw applies the xoshiro256++ update. OS entropy is never used.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl Rng {
    pub const ALGORITHM: &'static str = "xoshiro256++/splitmix64";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// A stream independent of `Rng::new(seed)` for each distinct `stream`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Self::new(derive_seed(seed, stream))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

/// Uniform draw from the `dim`-ball of the given radius: Gaussian direction,
/// radius scaled by `u^(1/dim)`.
pub fn sample_sphere(rng: &mut Rng, dim: usize, radius: f64) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(invalid("sample_sphere: dim must be positive"));
    }
    if !radius.is_finite() || radius <= 0.0 {
        return Err(invalid(format!(
            "sample_sphere: radius must be positive and finite, got {radius}"
        )));
    }
    loop {
        let mut v = rng.normal_vec(dim);
        let n = norm(&v);
        if n == 0.0 {
            continue;
        }
        let r = radius * rng.uniform().powf(1.0 / dim as f64);
        let scale = r / n;
        v.iter_mut().for_each(|x| *x *= scale);
        // rounding can push the norm a hair past the radius
        let got = norm(&v);
        if got > radius {
            let fix = radius / got;
            v.iter_mut().for_each(|x| *x *= fix);
        }
        return Ok(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_trivial_cases() {
        assert_eq!(l2_norm(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(l2_norm(&[3.0, 4.0]).unwrap(), 5.0);
        assert!(l2_norm(&[1.0, f64::NAN]).is_err());
        assert!(l2_norm(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn norm_matches_naive_sum() {
        let mut rng = Rng::new(11);
        let v = rng.normal_vec(100);
        // naive oracle: explicit powi and separate accumulation
        let mut acc = 0.0f64;
        for x in &v {
            acc += x.powi(2);
        }
        let expected = acc.sqrt();
        let got = l2_norm(&v).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn sphere_respects_radius_and_seed() {
        for dim in [1, 2, 7, 50] {
            let mut rng = Rng::new(3);
            for _ in 0..200 {
                let v = sample_sphere(&mut rng, dim, 0.1).unwrap();
                assert!(norm(&v) <= 0.1);
            }
        }
        let a = sample_sphere(&mut Rng::new(9), 5, 1.0).unwrap();
        let b = sample_sphere(&mut Rng::new(9), 5, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(sample_sphere(&mut Rng::new(0), 0, 1.0).is_err());
        assert!(sample_sphere(&mut Rng::new(0), 3, 0.0).is_err());
    }

    #[test]
    fn sphere_mean_is_centered() {
        let radius = 0.5;
        let dim = 4;
        let mut rng = Rng::new(2024);
        let mut mean = vec![0.0; dim];
        let n = 10_000;
        for _ in 0..n {
            let v = sample_sphere(&mut rng, dim, radius).unwrap();
            axpy(1.0 / n as f64, &v, &mut mean);
        }
        for m in mean {
            assert!(m.abs() < 0.01 * radius, "coordinate mean {m}");
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(&[2.0, 2.0]), Some(0));
        assert_eq!(argmax(&[]), None);
        assert_eq!(argmax(&[f64::NAN, 1.0]), Some(1));
    }

    #[test]
    fn derived_streams_differ() {
        let a = Rng::derive(5, 0).next_u64();
        let b = Rng::derive(5, 1).next_u64();
        assert_ne!(a, b);
        assert_eq!(Rng::derive(5, 1).next_u64(), b);
    }

    #[test]
    fn matrix_rejects_bad_data() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.column_means(), vec![2.0, 3.0]);
        assert_eq!(m.select_rows(&[1]).row(0), &[3.0, 4.0]);
    }
}

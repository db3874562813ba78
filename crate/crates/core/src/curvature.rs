//! Per-sample curvature profiles and the analytics built on them: Hessian
//! sub-dimension selection, gradient variance, the bias-gradient/MSE
//! identity, Monte-Carlo sharpness of the loss gap, and the first-order plus
//! diagonal-eigenvalue bound on that sharpness.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::model::{last_layer_gradient, last_layer_hessian_diag, ModelState};
use crate::numerics::{distance, log_sum_exp, sample_sphere, Matrix, Rng};

pub const LCP1_MAGIC: [u8; 4] = *b"LCP1";

/// Last-layer gradients `g_i` and Hessian diagonals `λ̂_i` for a list of
/// dataset rows. Row `r` of both matrices belongs to `sample_indices[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    pub gradients: Matrix,
    pub hess_diags: Matrix,
    pub sample_indices: Vec<usize>,
}

impl CurvatureProfile {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.gradients.cols()
    }

    /// Profile rows `rows` (positions in this profile, not dataset indices).
    pub fn restrict(&self, rows: &[usize]) -> CurvatureProfile {
        CurvatureProfile {
            gradients: self.gradients.select_rows(rows),
            hess_diags: self.hess_diags.select_rows(rows),
            sample_indices: rows.iter().map(|&r| self.sample_indices[r]).collect(),
        }
    }

    /// `ḡ`, the mean gradient.
    pub fn mean_gradient(&self) -> Vec<f64> {
        self.gradients.column_means()
    }

    /// `λ̄_k`, the mean per-sample Hessian diagonal.
    pub fn mean_hess_diag(&self) -> Vec<f64> {
        self.hess_diags.column_means()
    }

    /// `"LCP1" | u32 m | u32 p | m u32 sample indices | m*p f64 gradients | m*p f64 Hessian diagonals`
    pub fn to_lcp1_bytes(&self) -> Vec<u8> {
        let (m, p) = (self.len(), self.dim());
        let mut out = Vec::with_capacity(12 + 4 * m + 16 * m * p);
        out.extend_from_slice(&LCP1_MAGIC);
        out.extend_from_slice(&(m as u32).to_le_bytes());
        out.extend_from_slice(&(p as u32).to_le_bytes());
        for &i in &self.sample_indices {
            out.extend_from_slice(&(i as u32).to_le_bytes());
        }
        for v in self.gradients.as_slice().iter().chain(self.hess_diags.as_slice()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_lcp1_bytes(bytes: &[u8]) -> Result<Self> {
        let mut found = [0u8; 4];
        let head = bytes.len().min(4);
        found[..head].copy_from_slice(&bytes[..head]);
        if found != LCP1_MAGIC {
            return Err(Error::BadMagic {
                expected: LCP1_MAGIC,
                found,
            });
        }
        if bytes.len() < 12 {
            return Err(Error::Truncated("LCP1 header".into()));
        }
        let u = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        let (m, p) = (u(4), u(8));
        let need = 12 + 4 * m + 16 * m * p;
        if bytes.len() != need {
            return Err(Error::Truncated(format!("LCP1 payload needs {need} bytes, found {}", bytes.len())));
        }
        let sample_indices = (0..m).map(|r| u(12 + 4 * r)).collect();
        let base = 12 + 4 * m;
        let read = |k: usize| f64::from_le_bytes(bytes[base + 8 * k..base + 8 * k + 8].try_into().unwrap());
        let gradients = Matrix::from_vec(m, p, (0..m * p).map(read).collect())?;
        let hess_diags = Matrix::from_vec(m, p, (m * p..2 * m * p).map(read).collect())?;
        Ok(Self {
            gradients,
            hess_diags,
            sample_indices,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_lcp1_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_lcp1_bytes(&fs::read(path)?)
    }
}

/// Gradients and Hessian diagonals for `indices` (in that order).
pub fn build_profile(m: &ModelState, ds: &Dataset, indices: &[usize]) -> Result<CurvatureProfile> {
    if ds.dim() != m.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset vs model input",
            expected: m.input_dim(),
            got: ds.dim(),
        });
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
        return Err(invalid(format!("row {bad} out of range for {} rows", ds.len())));
    }
    if ds.class_count() != m.classes() {
        return Err(invalid("dataset and model disagree on class count"));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = indices
        .par_iter()
        .map(|&i| {
            let fw = m.forward_unchecked(ds.x(i));
            (last_layer_gradient(&fw, ds.y(i)), last_layer_hessian_diag(&fw))
        })
        .collect();
    let p = m.last_layer_dim();
    let mut g = Vec::with_capacity(rows.len() * p);
    let mut h = Vec::with_capacity(rows.len() * p);
    for (gi, hi) in rows {
        g.extend(gi);
        h.extend(hi);
    }
    Ok(CurvatureProfile {
        gradients: Matrix::from_vec(indices.len(), p, g)?,
        hess_diags: Matrix::from_vec(indices.len(), p, h)?,
        sample_indices: indices.to_vec(),
    })
}

/// The sub-dimension set `𝒦`: sorted, distinct parameter indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubdimSet {
    pub indices: Vec<usize>,
}

impl SubdimSet {
    pub fn all(p: usize) -> Self {
        Self {
            indices: (0..p).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Per-column sample variance (divide by `m − 1`; zeros when `m < 2`).
fn column_variances(x: &Matrix) -> Vec<f64> {
    let m = x.rows();
    let mean = x.column_means();
    let mut var = vec![0.0; x.cols()];
    if m < 2 {
        return var;
    }
    for row in x.iter_rows() {
        for ((v, xi), mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = xi - mu;
            *v += d * d;
        }
    }
    let denom = (m - 1) as f64;
    var.iter_mut().for_each(|v| *v /= denom);
    var
}

/// The `K` dimensions whose Hessian-diagonal column has the largest sample
/// variance, ties toward the lower index, returned sorted.
pub fn select_subdims(profile: &CurvatureProfile, k: usize) -> Result<SubdimSet> {
    if k == 0 {
        return Err(invalid("number of sub-dimensions K must be positive"));
    }
    if profile.is_empty() {
        return Err(Error::Empty("select_subdims on empty profile".into()));
    }
    let var = column_variances(&profile.hess_diags);
    let mut order: Vec<usize> = (0..var.len()).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    order.truncate(k.min(var.len()));
    order.sort_unstable();
    Ok(SubdimSet { indices: order })
}

/// `Var(G)_k = 1/(m−1) Σ_i (g_ik − ḡ_k)²`
pub fn gradient_variance(gradients: &Matrix) -> Result<Vec<f64>> {
    if gradients.rows() < 2 {
        return Err(invalid(format!(
            "gradient variance needs at least 2 rows, got {}",
            gradients.rows()
        )));
    }
    Ok(column_variances(gradients))
}

/// Returns `(variance_term, mse_term)`.
///
/// `variance_term` is the divide-by-`m` second moment of the bias block of the
/// per-sample gradients, summed over classes. `mse_term` is the mean squared
/// distance between softmax output and one-hot label, computed separately
/// from the forward pass. The bias gradient is exactly `p − onehot`, so the
/// two coincide.
pub fn bias_variance_mse_check(m: &ModelState, ds: &Dataset) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::Empty("bias_variance_mse_check on empty dataset".into()));
    }
    let c = m.classes();
    let bias = m.feat_dim() * c;
    let mut second_moment = vec![0.0; c];
    let mut mse = 0.0;
    for i in 0..ds.len() {
        let g = m.per_sample_gradient(ds.x(i), ds.y(i))?;
        for (acc, gb) in second_moment.iter_mut().zip(&g[bias..]) {
            *acc += gb * gb;
        }
        let probs = m.forward(ds.x(i))?.probs;
        let mut sq = 0.0;
        for (t, pt) in probs.iter().enumerate() {
            let target = if t == ds.y(i) { 1.0 } else { 0.0 };
            sq += (pt - target) * (pt - target);
        }
        mse += sq;
    }
    let n = ds.len() as f64;
    let mut variance_term = 0.0;
    for v in second_moment {
        variance_term += v;
    }
    Ok((variance_term / n, mse / n))
}

/// Penultimate features and labels, cached so last-layer perturbations only
/// redo the classifier.
struct LastLayerProblem {
    feats: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl LastLayerProblem {
    fn new(m: &ModelState, ds: &Dataset) -> Self {
        Self {
            feats: (0..ds.len()).map(|i| m.features_of(ds.x(i))).collect(),
            labels: ds.labels().to_vec(),
        }
    }

    /// Mean cross-entropy with classifier parameters `base + delta`.
    fn mean_loss(&self, base: &[f64], delta: Option<&[f64]>, c: usize) -> f64 {
        let mut total = 0.0;
        let mut z = vec![0.0; c];
        let w = |k: usize| base[k] + delta.map_or(0.0, |d| d[k]);
        for (feat, &y) in self.feats.iter().zip(&self.labels) {
            let f = feat.len();
            for (t, zt) in z.iter_mut().enumerate() {
                *zt = w(f * c + t);
            }
            for (j, &fj) in feat.iter().enumerate() {
                for (t, zt) in z.iter_mut().enumerate() {
                    *zt += fj * w(j * c + t);
                }
            }
            total += log_sum_exp(&z) - z[y];
        }
        total / self.labels.len() as f64
    }
}

/// `L_abs(T, S; θ) = |L(T; θ) − L(S; θ)|`
pub fn loss_gap(m: &ModelState, t: &Dataset, s: &Dataset) -> Result<f64> {
    Ok((m.mean_loss(t)? - m.mean_loss(s)?).abs())
}

fn check_pair(m: &ModelState, t: &Dataset, s: &Dataset) -> Result<()> {
    if t.is_empty() || s.is_empty() {
        return Err(Error::Empty("sharpness needs non-empty T and S".into()));
    }
    for ds in [t, s] {
        if ds.dim() != m.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "dataset vs model input",
                expected: m.input_dim(),
                got: ds.dim(),
            });
        }
    }
    Ok(())
}

/// Sharpness of the loss gap over explicit last-layer directions:
/// `max_ε [L_abs(θ+ε) − L_abs(θ)] / rho`. Returns one value per prefix
/// length, so entry `i` is the maximum over `directions[..=i]`.
pub fn sharpness_prefix_maxima(
    m: &ModelState,
    t: &Dataset,
    s: &Dataset,
    rho: f64,
    directions: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if rho.is_nan() || rho <= 0.0 {
        return Err(invalid("rho must be positive"));
    }
    check_pair(m, t, s)?;
    let p = m.last_layer_dim();
    if let Some(d) = directions.iter().find(|d| d.len() != p) {
        return Err(Error::DimensionMismatch {
            context: "perturbation direction",
            expected: p,
            got: d.len(),
        });
    }
    let c = m.classes();
    let base = m.last_layer();
    let pt = LastLayerProblem::new(m, t);
    let ps = LastLayerProblem::new(m, s);
    let gap0 = (pt.mean_loss(base, None, c) - ps.mean_loss(base, None, c)).abs();
    let values: Vec<f64> = directions
        .par_iter()
        .map(|eps| {
            let gap = (pt.mean_loss(base, Some(eps), c) - ps.mean_loss(base, Some(eps), c)).abs();
            (gap - gap0) / rho
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    Ok(values
        .into_iter()
        .map(|v| {
            if v > best {
                best = v;
            }
            best
        })
        .collect())
}

/// Monte-Carlo lower bound on the sharpness of `L_abs(T, S; θ)`: the best of
/// `n_dirs` last-layer perturbations drawn uniformly from the `rho`-ball.
pub fn sharpness_estimate(
    m: &ModelState,
    t: &Dataset,
    s: &Dataset,
    rho: f64,
    n_dirs: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if n_dirs == 0 {
        return Err(invalid("n_dirs must be at least 1"));
    }
    if rho.is_nan() || rho <= 0.0 {
        return Err(invalid("rho must be positive"));
    }
    let p = m.last_layer_dim();
    let dirs = (0..n_dirs)
        .map(|_| sample_sphere(rng, p, rho))
        .collect::<Result<Vec<_>>>()?;
    Ok(*sharpness_prefix_maxima(m, t, s, rho, &dirs)?.last().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessBound {
    /// `‖ḡᵀ − ḡˢ‖₂`
    pub grad_term: f64,
    /// `(rho/2) · max_k |λ̄ᵀ_k − λ̄ˢ_k|`
    pub eig_term: f64,
    pub total: f64,
}

/// Tractable upper bound on the loss-gap sharpness with the Hessian replaced
/// by its diagonal and higher-order terms dropped.
pub fn sharpness_upper_bound(t: &CurvatureProfile, s: &CurvatureProfile, rho: f64) -> Result<SharpnessBound> {
    if rho.is_nan() || rho <= 0.0 {
        return Err(invalid("rho must be positive"));
    }
    if t.is_empty() || s.is_empty() {
        return Err(Error::Empty("sharpness_upper_bound needs non-empty profiles".into()));
    }
    if t.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            context: "profile dimensions",
            expected: t.dim(),
            got: s.dim(),
        });
    }
    let grad_term = distance(&t.mean_gradient(), &s.mean_gradient());
    let lt = t.mean_hess_diag();
    let ls = s.mean_hess_diag();
    let mut max_gap = 0.0f64;
    for (a, b) in lt.iter().zip(&ls) {
        max_gap = max_gap.max((a - b).abs());
    }
    let eig_term = 0.5 * rho * max_gap;
    Ok(SharpnessBound {
        grad_term,
        eig_term,
        total: grad_term + eig_term,
    })
}

//! Brute-force and numerical reference implementations.
//!
//! Nothing here calls the fast paths it checks: the network forward pass,
//! facility value and covariance are re-derived with plain loops. Only the
//! primitives in [`crate::numerics`] are shared.

#![allow(clippy::needless_range_loop)]

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{
    bias_variance_mse_check, build_profile, gradient_variance, sharpness_upper_bound, select_subdims, sharpness_estimate,
};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::model::{Architecture, ModelState};
use crate::numerics::{log_sum_exp, Matrix, Rng};
use crate::selection::{facility_bound_check, facility_greedy, CostMatrix};

/// Step for first-order central differences.
pub const FD_GRAD_STEP: f64 = 1e-5;
/// Step for second-order central differences.
pub const FD_HESS_STEP: f64 = 1e-3;

pub const EXHAUSTIVE_MAX_N: usize = 14;
pub const EXHAUSTIVE_MAX_M: usize = 5;

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("finite-difference step must be positive, got {step}")))
    }
}

/// Central differences `(f(x + h e_k) − f(x − h e_k)) / 2h` per coordinate.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, point: &[f64], step: f64) -> Result<Vec<f64>> {
    check_step(step)?;
    let mut x = point.to_vec();
    Ok((0..point.len())
        .map(|k| {
            x[k] = point[k] + step;
            let up = f(&x);
            x[k] = point[k] - step;
            let down = f(&x);
            x[k] = point[k];
            (up - down) / (2.0 * step)
        })
        .collect())
}

/// `(f(x + h e_k) − 2 f(x) + f(x − h e_k)) / h²` per coordinate.
pub fn fd_hessian_diag(f: impl Fn(&[f64]) -> f64, point: &[f64], step: f64) -> Result<Vec<f64>> {
    check_step(step)?;
    let mut x = point.to_vec();
    let center = f(point);
    Ok((0..point.len())
        .map(|k| {
            x[k] = point[k] + step;
            let up = f(&x);
            x[k] = point[k] - step;
            let down = f(&x);
            x[k] = point[k];
            (up - 2.0 * center + down) / (step * step)
        })
        .collect())
}

/// `max_k |a_k − b_k| / max(‖a‖∞, ‖b‖∞, 1e-8)`
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let mut diff = 0.0f64;
    let mut scale = 1e-8f64;
    for (x, y) in a.iter().zip(b) {
        diff = diff.max((x - y).abs());
        scale = scale.max(x.abs()).max(y.abs());
    }
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    diff / scale
}

/// A second, loop-only reading of the flat parameter layout
/// `[W (f×c), b (c), W1 (d×h), b1 (h)]`.
#[derive(Debug, Clone)]
pub struct NaiveNet {
    hidden: Option<usize>,
    input_dim: usize,
    classes: usize,
    params: Vec<f64>,
}

impl NaiveNet {
    pub fn from_model(m: &ModelState) -> Self {
        Self {
            hidden: match m.arch() {
                Architecture::LinearProbe => None,
                Architecture::Mlp { hidden } => Some(hidden),
            },
            input_dim: m.input_dim(),
            classes: m.classes(),
            params: m.params().to_vec(),
        }
    }

    fn feat_dim(&self) -> usize {
        self.hidden.unwrap_or(self.input_dim)
    }

    pub fn last_layer_len(&self) -> usize {
        (self.feat_dim() + 1) * self.classes
    }

    pub fn last_layer(&self) -> &[f64] {
        &self.params[..self.last_layer_len()]
    }

    fn features(&self, x: &[f64]) -> Vec<f64> {
        match self.hidden {
            None => x.to_vec(),
            Some(h) => {
                let w1 = self.last_layer_len();
                let b1 = w1 + self.input_dim * h;
                let mut out = Vec::with_capacity(h);
                for a in 0..h {
                    let mut s = self.params[b1 + a];
                    for i in 0..self.input_dim {
                        s += x[i] * self.params[w1 + i * h + a];
                    }
                    out.push(s.tanh());
                }
                out
            }
        }
    }

    /// Cross-entropy of one sample with the classifier block replaced by `w`.
    pub fn loss_with_last_layer(&self, w: &[f64], x: &[f64], y: usize) -> f64 {
        let feat = self.features(x);
        let f = feat.len();
        let c = self.classes;
        let mut z = vec![0.0; c];
        for t in 0..c {
            let mut s = w[f * c + t];
            for j in 0..f {
                s += feat[j] * w[j * c + t];
            }
            z[t] = s;
        }
        log_sum_exp(&z) - z[y]
    }
}

/// Relative errors of the analytic last-layer gradient and Hessian diagonal
/// against finite differences for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdErrors {
    pub gradient: f64,
    pub hessian_diag: f64,
}

/// Deliberate corruption of an analytic quantity, for exercising failure paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    HessianDiag,
}

pub fn fd_check_sample(m: &ModelState, x: &[f64], y: usize, fault: Option<Fault>) -> Result<FdErrors> {
    let net = NaiveNet::from_model(m);
    let w0 = net.last_layer().to_vec();
    let f = |w: &[f64]| net.loss_with_last_layer(w, x, y);
    let g_fd = fd_gradient(f, &w0, FD_GRAD_STEP)?;
    let h_fd = fd_hessian_diag(f, &w0, FD_HESS_STEP)?;
    let g = m.per_sample_gradient(x, y)?;
    let mut h = m.per_sample_hessian_diag(x, y)?;
    if fault == Some(Fault::HessianDiag) {
        // inflate every other entry
        for (k, v) in h.iter_mut().enumerate() {
            if k % 2 == 0 {
                *v *= 1.5;
            }
        }
    }
    Ok(FdErrors {
        gradient: max_relative_error(&g, &g_fd),
        hessian_diag: max_relative_error(&h, &h_fd),
    })
}

/// A random model and sample small enough for exhaustive FD checks. Logit
/// scales stay moderate so softmax does not saturate.
pub fn random_fd_instance(rng: &mut Rng, arch: Architecture) -> Result<(ModelState, Vec<f64>, usize)> {
    let input_dim = 2 + (rng.next_u64() % 5) as usize;
    let classes = 2 + (rng.next_u64() % 4) as usize;
    let arch = match arch {
        Architecture::LinearProbe => Architecture::LinearProbe,
        Architecture::Mlp { .. } => Architecture::Mlp {
            hidden: 2 + (rng.next_u64() % 5) as usize,
        },
    };
    let mut m = ModelState::zeros(arch, input_dim, classes)?;
    let n = m.param_count();
    let params: Vec<f64> = rng.normal_vec(n).into_iter().map(|v| 0.7 * v).collect();
    m.params_mut().copy_from_slice(&params);
    let x = rng.normal_vec(input_dim);
    let y = (rng.next_u64() % classes as u64) as usize;
    Ok((m, x, y))
}

/// Diagonal of `(1/(m−1)) Σ_i (g_i − ḡ)(g_i − ḡ)ᵀ`, built from the full
/// outer-product matrix.
pub fn covariance_diag_oracle(gradients: &Matrix) -> Result<Vec<f64>> {
    let m = gradients.rows();
    let p = gradients.cols();
    if m < 2 {
        return Err(invalid("covariance needs at least two rows"));
    }
    let mut mean = vec![0.0; p];
    for i in 0..m {
        for k in 0..p {
            mean[k] += gradients.get(i, k);
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let mut cov = vec![vec![0.0; p]; p];
    for i in 0..m {
        for a in 0..p {
            let da = gradients.get(i, a) - mean[a];
            for b in 0..p {
                cov[a][b] += da * (gradients.get(i, b) - mean[b]);
            }
        }
    }
    Ok((0..p).map(|k| cov[k][k] / (m - 1) as f64).collect())
}

fn facility_value_naive(costs: &CostMatrix, set: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..costs.len() {
        let mut best = f64::NEG_INFINITY;
        for &j in set {
            let s = costs.aux - costs.costs.get(i, j);
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

/// Enumerates every `m`-subset in lexicographic order and keeps the first
/// one attaining the maximal `F`.
pub fn exhaustive_facility_opt(costs: &CostMatrix, m: usize) -> Result<(Vec<usize>, f64)> {
    let n = costs.len();
    if n > EXHAUSTIVE_MAX_N || m > EXHAUSTIVE_MAX_M {
        return Err(invalid(format!(
            "exhaustive search limited to n ≤ {EXHAUSTIVE_MAX_N}, m ≤ {EXHAUSTIVE_MAX_M} (got n = {n}, m = {m})"
        )));
    }
    if m == 0 || m > n {
        return Err(invalid(format!("subset size {m} invalid for {n} elements")));
    }
    let mut combo: Vec<usize> = (0..m).collect();
    let mut best = (combo.clone(), facility_value_naive(costs, &combo));
    loop {
        // advance to the next combination
        let mut i = m;
        while i > 0 && combo[i - 1] == n - m + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..m {
            combo[j] = combo[j - 1] + 1;
        }
        let v = facility_value_naive(costs, &combo);
        if v > best.1 {
            best = (combo.clone(), v);
        }
    }
    Ok(best)
}

/// Random symmetric zero-diagonal costs from points in the plane.
pub fn random_costs(rng: &mut Rng, n: usize) -> Result<CostMatrix> {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.normal(), rng.normal())).collect();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
            m.set(i, j, d);
            m.set(j, i, d);
        }
    }
    CostMatrix::from_costs(m)
}

/// Shape of the random (model, T, S) instances used by the sharpness check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSize {
    pub input_dim: usize,
    pub classes: usize,
    pub full_size: usize,
    pub subset_size: usize,
    /// Use S = T in every trial.
    pub subset_is_full: bool,
}

impl Default for ProblemSize {
    fn default() -> Self {
        Self {
            input_dim: 4,
            classes: 3,
            full_size: 60,
            subset_size: 6,
            subset_is_full: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessTrial {
    pub sharpness: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub pass_rate: f64,
    pub trials: Vec<SharpnessTrial>,
}

fn random_pair(seed: u64, size: &ProblemSize) -> Result<(ModelState, Dataset, Dataset)> {
    let mut rng = Rng::new(seed);
    let m = ModelState::init(Architecture::LinearProbe, size.input_dim, size.classes, rng.next_u64())?;
    let n = size.full_size;
    let x = Matrix::from_vec(n, size.input_dim, rng.normal_vec(n * size.input_dim))?;
    let labels: Vec<usize> = (0..n).map(|_| (rng.next_u64() % size.classes as u64) as usize).collect();
    let t = Dataset::new("oracle-t", x, labels, size.classes)?;
    let s = if size.subset_is_full {
        t.clone()
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        order.truncate(size.subset_size);
        order.sort_unstable();
        t.subset(&order)
    };
    Ok((m, t, s))
}

/// Fraction of random instances where the Monte-Carlo sharpness of the loss
/// gap stays below the diagonal second-order bound.
pub fn mc_sharpness_vs_bound(
    rng: &mut Rng,
    trials: usize,
    size: &ProblemSize,
    rho: f64,
    n_dirs: usize,
) -> Result<SharpnessReport> {
    if rho.is_nan() || rho <= 0.0 {
        return Err(invalid("rho must be positive"));
    }
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    if size.classes < 2 || size.input_dim == 0 || size.full_size == 0 {
        return Err(invalid("degenerate problem size"));
    }
    if !size.subset_is_full && (size.subset_size == 0 || size.subset_size > size.full_size) {
        return Err(invalid("subset size must lie in 1..=full size"));
    }
    let seeds: Vec<u64> = (0..trials).map(|_| rng.next_u64()).collect();
    let results = seeds
        .par_iter()
        .map(|&seed| -> Result<SharpnessTrial> {
            let (m, t, s) = random_pair(seed, size)?;
            let all_t: Vec<usize> = (0..t.len()).collect();
            let all_s: Vec<usize> = (0..s.len()).collect();
            let bound = sharpness_upper_bound(&build_profile(&m, &t, &all_t)?, &build_profile(&m, &s, &all_s)?, rho)?;
            let mut dir_rng = Rng::derive(seed, 1);
            let sharpness = sharpness_estimate(&m, &t, &s, rho, n_dirs, &mut dir_rng)?;
            Ok(SharpnessTrial {
                sharpness,
                bound: bound.total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = results.iter().filter(|r| r.sharpness <= r.bound).count();
    Ok(SharpnessReport {
        pass_rate: passed as f64 / trials as f64,
        trials: results,
    })
}

/// A random labeled dataset with every class present at least twice, for
/// identity checks.
pub fn random_dataset(rng: &mut Rng, n: usize, dim: usize, classes: usize) -> Result<Dataset> {
    if n < 2 * classes {
        return Err(invalid("need at least two rows per class"));
    }
    let x = Matrix::from_vec(n, dim, rng.normal_vec(n * dim).into_iter().map(|v| 1.5 * v).collect())?;
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    rng.shuffle(&mut labels);
    Dataset::new("oracle-random", x, labels, classes)
}

/// Settings for the full battery behind `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub fd_instances: usize,
    pub identity_instances: usize,
    pub bound_instances: usize,
    pub greedy_instances: usize,
    pub trials: usize,
    pub rho: f64,
    pub n_dirs: usize,
    #[serde(skip)]
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fd_instances: 100,
            identity_instances: 100,
            bound_instances: 100,
            greedy_instances: 50,
            trials: 100,
            rho: 0.05,
            n_dirs: 4096,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the check's metric.
    pub metric: f64,
    pub threshold: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn check(name: &str, metric: f64, threshold: f64, instances: usize, at_most: bool) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: if at_most { metric <= threshold } else { metric >= threshold },
        metric,
        threshold,
        instances,
    }
}

/// Worst FD errors over `count` random instances of one architecture.
pub fn fd_battery(seed: u64, count: usize, arch: Architecture, fault: Option<Fault>) -> Result<FdErrors> {
    let errs = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::derive(seed, i as u64);
            let (m, x, y) = random_fd_instance(&mut rng, arch)?;
            fd_check_sample(&m, &x, y, fault)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FdErrors {
        gradient: max_of(errs.iter().map(|e| e.gradient)),
        hessian_diag: max_of(errs.iter().map(|e| e.hessian_diag)),
    })
}

fn random_model(rng: &mut Rng, dim: usize, classes: usize) -> Result<ModelState> {
    let arch = if rng.next_u64().is_multiple_of(2) {
        Architecture::LinearProbe
    } else {
        Architecture::Mlp { hidden: 5 }
    };
    ModelState::init(arch, dim, classes, rng.next_u64())
}

/// Worst `|variance − mse| / max(1, |mse|)` over random instances.
pub fn bias_identity_battery(seed: u64, count: usize) -> Result<f64> {
    let errs = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::derive(seed, 10_000 + i as u64);
            let ds = random_dataset(&mut rng, 24, 3, 4)?;
            let m = random_model(&mut rng, 3, 4)?;
            let (v, mse) = bias_variance_mse_check(&m, &ds)?;
            Ok((v - mse).abs() / mse.abs().max(1.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(max_of(errs))
}

/// Worst relative gap between `gradient_variance` and the covariance oracle.
pub fn covariance_battery(seed: u64, count: usize) -> Result<f64> {
    let errs = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::derive(seed, 20_000 + i as u64);
            let rows = 2 + (rng.next_u64() % 30) as usize;
            let cols = 1 + (rng.next_u64() % 12) as usize;
            let g = Matrix::from_vec(rows, cols, rng.normal_vec(rows * cols))?;
            Ok(max_relative_error(&gradient_variance(&g)?, &covariance_diag_oracle(&g)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(max_of(errs))
}

/// Number of (dataset, selection) pairs where the facility-location bound
/// fails. The selection is a random subset of a random class profile.
pub fn facility_bound_battery(seed: u64, count: usize) -> Result<usize> {
    let violations = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::derive(seed, 30_000 + i as u64);
            let ds = random_dataset(&mut rng, 30, 3, 3)?;
            let m = random_model(&mut rng, 3, 3)?;
            let rows = ds.class_indices((rng.next_u64() % 3) as usize);
            let profile = build_profile(&m, &ds, &rows)?;
            let k = 1 + (rng.next_u64() % profile.dim() as u64) as usize;
            let subdims = select_subdims(&profile, k)?;
            let rho = [0.0, 0.01, 0.1, 1.0, 10.0][(rng.next_u64() % 5) as usize];
            let mut picks: Vec<usize> = (0..profile.len()).collect();
            rng.shuffle(&mut picks);
            picks.truncate(1 + (rng.next_u64() % profile.len() as u64) as usize);
            picks.sort_unstable();
            Ok(!facility_bound_check(&profile, &subdims, rho, &picks)?.holds)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(violations.into_iter().filter(|&v| v).count())
}

/// Smallest greedy/optimum ratio over random instances with n ≤ 12, m ≤ 4.
pub fn greedy_battery(seed: u64, count: usize) -> Result<f64> {
    let ratios = (0..count)
        .map(|i| {
            let mut rng = Rng::derive(seed, 40_000 + i as u64);
            let n = 5 + (rng.next_u64() % 8) as usize;
            let m = 1 + (rng.next_u64() % 4) as usize;
            let costs = random_costs(&mut rng, n)?;
            let (picks, _) = facility_greedy(&costs, m)?;
            let (_, best) = exhaustive_facility_opt(&costs, m)?;
            Ok(facility_value_naive(&costs, &picks) / best)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(f64::INFINITY, f64::min))
}

/// Runs every check and reports pass/fail per check.
pub fn run_battery(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.fd_instances == 0 || cfg.trials == 0 || cfg.n_dirs == 0 {
        return Err(invalid("verify sizes must be positive"));
    }
    let mut checks = Vec::new();
    for (arch, tag) in [
        (Architecture::LinearProbe, "linear"),
        (Architecture::Mlp { hidden: 4 }, "mlp"),
    ] {
        let e = fd_battery(cfg.seed, cfg.fd_instances, arch, cfg.fault)?;
        checks.push(check(&format!("fd_gradient_{tag}"), e.gradient, 1e-6, cfg.fd_instances, true));
        checks.push(check(&format!("fd_hessian_diag_{tag}"), e.hessian_diag, 1e-4, cfg.fd_instances, true));
    }
    checks.push(check(
        "bias_variance_mse",
        bias_identity_battery(cfg.seed, cfg.identity_instances)?,
        1e-12,
        cfg.identity_instances,
        true,
    ));
    checks.push(check(
        "gradient_variance_covariance",
        covariance_battery(cfg.seed, cfg.identity_instances)?,
        1e-12,
        cfg.identity_instances,
        true,
    ));
    checks.push(check(
        "facility_bound_violations",
        facility_bound_battery(cfg.seed, cfg.bound_instances)? as f64,
        0.0,
        cfg.bound_instances,
        true,
    ));
    checks.push(check(
        "greedy_ratio",
        greedy_battery(cfg.seed, cfg.greedy_instances)?,
        1.0 - (-1.0f64).exp(),
        cfg.greedy_instances,
        false,
    ));
    let report = mc_sharpness_vs_bound(
        &mut Rng::derive(cfg.seed, 50_000),
        cfg.trials,
        &ProblemSize::default(),
        cfg.rho,
        cfg.n_dirs,
    )?;
    let required = if cfg.rho <= 1e-4 { 1.0 } else { 0.95 };
    checks.push(check("sharpness_bound_pass_rate", report.pass_rate, required, cfg.trials, false));
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_known_functions() {
        let g = fd_gradient(|x| x[0] * x[0] + x[1] * x[1], &[1.0, 2.0], FD_GRAD_STEP).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        assert_eq!(fd_gradient(|_| 3.0, &[1.0, 2.0], 1e-5).unwrap(), vec![0.0, 0.0]);
        let h = fd_hessian_diag(|x| x[0] * x[0], &[0.3], FD_HESS_STEP).unwrap();
        assert!((h[0] - 2.0).abs() < 1e-6);
        let h = fd_hessian_diag(|x| 3.0 * x[0] - x[1], &[0.3, 7.0], FD_HESS_STEP).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-6));
        assert!(fd_gradient(|_| 0.0, &[1.0], 0.0).is_err());
        assert!(fd_hessian_diag(|_| 0.0, &[1.0], -1.0).is_err());
    }

    #[test]
    fn naive_net_agrees_with_model_loss() {
        let mut rng = Rng::new(5);
        for arch in [Architecture::LinearProbe, Architecture::Mlp { hidden: 3 }] {
            let (m, x, y) = random_fd_instance(&mut rng, arch).unwrap();
            let net = NaiveNet::from_model(&m);
            let a = net.loss_with_last_layer(net.last_layer(), &x, y);
            assert!((a - m.sample_loss(&x, y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_trivial_cases() {
        let mut rng = Rng::new(1);
        let costs = random_costs(&mut rng, 6).unwrap();
        let (all, _) = exhaustive_facility_opt(&costs, 5).unwrap();
        assert_eq!(all.len(), 5);
        let small = random_costs(&mut rng, 4).unwrap();
        assert_eq!(exhaustive_facility_opt(&small, 4).unwrap().0, vec![0, 1, 2, 3]);
        // m = 1 is the medoid
        let (one, _) = exhaustive_facility_opt(&costs, 1).unwrap();
        let totals: Vec<f64> = (0..6).map(|j| (0..6).map(|i| costs.costs.get(i, j)).sum()).collect();
        let medoid = (0..6).min_by(|&a, &b| totals[a].total_cmp(&totals[b])).unwrap();
        assert_eq!(one, vec![medoid]);
        assert!(exhaustive_facility_opt(&random_costs(&mut rng, 15).unwrap(), 2).is_err());
        assert!(exhaustive_facility_opt(&costs, 6).is_err());
    }

    #[test]
    fn exhaustive_prefers_lexicographic_ties() {
        // two identical clusters: {0,1} and {2,3} are interchangeable
        let mut m = Matrix::zeros(4, 4);
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            m.set(i, j, 1.0);
            m.set(j, i, 1.0);
        }
        let costs = CostMatrix::from_costs(m).unwrap();
        assert_eq!(exhaustive_facility_opt(&costs, 2).unwrap().0, vec![0, 2]);
    }

    #[test]
    fn sharpness_with_full_subset_always_passes() {
        let size = ProblemSize {
            subset_is_full: true,
            ..ProblemSize::default()
        };
        let r = mc_sharpness_vs_bound(&mut Rng::new(3), 4, &size, 0.05, 64).unwrap();
        assert_eq!(r.pass_rate, 1.0);
        assert!(r.trials.iter().all(|t| t.sharpness == 0.0 && t.bound == 0.0));
    }
}

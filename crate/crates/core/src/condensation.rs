//! LCMat-C: learns a small synthetic set whose class-wise mean last-layer
//! gradients and last-layer gradient variance match the training set, at
//! parameters drawn from a trajectory trained on the full data.
//!
//! ```text
//! objective(S) = Σ_c D(ḡᵀ_c, ḡˢ_c) + (rho/2) Σ_k |Var(Gᵀ)_k − Var(Gˢ)_k|
//! ```

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::model::{last_layer_gradient, Architecture, ModelState};
use crate::numerics::{derive_seed, dot, norm, Matrix, Rng};

/// Floor on `‖a‖‖b‖` in the cosine distance.
const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// `‖a − b‖²`
    #[default]
    SquaredL2,
    /// `1 − a·b / (‖a‖‖b‖)`
    PerClassCosine,
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::SquaredL2 => "squared_l2",
            DistanceKind::PerClassCosine => "per_class_cosine",
        })
    }
}

impl FromStr for DistanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_l2" => Ok(DistanceKind::SquaredL2),
            "per_class_cosine" => Ok(DistanceKind::PerClassCosine),
            other => Err(invalid(format!("unknown distance kind {other:?}"))),
        }
    }
}

/// Learnable features with fixed, class-blocked labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    features: Matrix,
    labels: Vec<usize>,
    per_class: usize,
    classes: usize,
}

impl SyntheticSet {
    /// Wraps existing features; row `r` gets label `r / per_class`.
    pub fn new(features: Matrix, per_class: usize, classes: usize) -> Result<Self> {
        if per_class == 0 || classes < 2 {
            return Err(invalid("synthetic set needs per_class >= 1 and classes >= 2"));
        }
        if features.rows() != per_class * classes {
            return Err(Error::DimensionMismatch {
                context: "synthetic rows",
                expected: per_class * classes,
                got: features.rows(),
            });
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("synthetic features".into()));
        }
        Ok(Self {
            labels: (0..features.rows()).map(|r| r / per_class).collect(),
            features,
            per_class,
            classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn to_dataset(&self, name: impl Into<String>) -> Result<Dataset> {
        Dataset::new(name, self.features.clone(), self.labels.clone(), self.classes)
    }
}

/// Noise initialization: `scale × N(0, 1)` features, labels in class blocks.
pub fn init_synthetic(rng: &mut Rng, d: usize, c: usize, per_class: usize, scale: f64) -> Result<SyntheticSet> {
    if d == 0 {
        return Err(invalid("synthetic dimension must be positive"));
    }
    if !scale.is_finite() || scale < 0.0 {
        return Err(invalid("init scale must be finite and non-negative"));
    }
    let n = per_class * c;
    let data = rng.normal_vec(n * d).into_iter().map(|v| scale * v).collect();
    SyntheticSet::new(Matrix::from_vec(n, d, data)?, per_class, c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CondenseConfig {
    pub per_class: usize,
    pub rho: f64,
    /// Number of θ re-initializations.
    pub outer_loops: usize,
    /// Steps along each θ trajectory.
    pub inner_steps: usize,
    pub data_lr: f64,
    pub model_lr: f64,
    pub distance: DistanceKind,
    pub arch: Architecture,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for CondenseConfig {
    fn default() -> Self {
        Self {
            per_class: 5,
            rho: 0.1,
            outer_loops: 10,
            inner_steps: 20,
            data_lr: 1.0,
            model_lr: 0.1,
            distance: DistanceKind::SquaredL2,
            arch: Architecture::LinearProbe,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl CondenseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_class == 0 {
            return Err(invalid("per_class must be at least 1"));
        }
        if self.inner_steps == 0 {
            return Err(invalid("inner_steps must be at least 1"));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(invalid("rho must be finite and non-negative"));
        }
        for (name, v) in [("data_lr", self.data_lr), ("model_lr", self.model_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(invalid("init_scale must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub grad_term: f64,
    pub var_term: f64,
    pub total: f64,
}

/// Class-wise mean gradients and whole-set gradient variance of T at one θ.
#[derive(Debug, Clone)]
pub struct TargetStats {
    class_means: Vec<Vec<f64>>,
    variance: Vec<f64>,
}

impl TargetStats {
    pub fn new(m: &ModelState, t: &Dataset) -> Result<Self> {
        if t.len() < 2 {
            return Err(invalid("target set needs at least two rows"));
        }
        if t.dim() != m.input_dim() || t.class_count() != m.classes() {
            return Err(invalid("target set shape does not match the model"));
        }
        t.require_all_classes()?;
        let grads: Vec<Vec<f64>> = (0..t.len())
            .into_par_iter()
            .map(|i| last_layer_gradient(&m.forward_unchecked(t.x(i)), t.y(i)))
            .collect();
        let (class_means, variance) = moments(&grads, t.labels(), m.classes());
        Ok(Self { class_means, variance })
    }
}

/// Class means and the `1/(n−1)` column variance over all rows.
fn moments(grads: &[Vec<f64>], labels: &[usize], c: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = grads[0].len();
    let n = grads.len();
    let mut class_means = vec![vec![0.0; p]; c];
    let mut counts = vec![0usize; c];
    let mut mean = vec![0.0; p];
    for (g, &y) in grads.iter().zip(labels) {
        counts[y] += 1;
        for k in 0..p {
            class_means[y][k] += g[k];
            mean[k] += g[k];
        }
    }
    for (cm, &cnt) in class_means.iter_mut().zip(&counts) {
        cm.iter_mut().for_each(|v| *v /= cnt.max(1) as f64);
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut variance = vec![0.0; p];
    for g in grads {
        for k in 0..p {
            let d = g[k] - mean[k];
            variance[k] += d * d;
        }
    }
    variance.iter_mut().for_each(|v| *v /= (n - 1) as f64);
    (class_means, variance)
}

fn class_distance(kind: DistanceKind, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        DistanceKind::SquaredL2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        DistanceKind::PerClassCosine => 1.0 - dot(a, b) / (norm(a) * norm(b)).max(COSINE_EPS),
    }
}

/// `∂D(a, b)/∂b`
fn class_distance_grad(kind: DistanceKind, a: &[f64], b: &[f64]) -> Vec<f64> {
    match kind {
        DistanceKind::SquaredL2 => a.iter().zip(b).map(|(x, y)| -2.0 * (x - y)).collect(),
        DistanceKind::PerClassCosine => {
            let na = norm(a);
            let nb = norm(b);
            let denom = na * nb;
            if denom <= COSINE_EPS {
                return a.iter().map(|x| -x / COSINE_EPS).collect();
            }
            let ab = dot(a, b);
            a.iter()
                .zip(b)
                .map(|(x, y)| -(x / denom - ab * y / (denom * nb * nb)))
                .collect()
        }
    }
}

struct SyntheticPass {
    grads: Vec<Vec<f64>>,
    class_means: Vec<Vec<f64>>,
    variance: Vec<f64>,
}

fn check_synthetic(m: &ModelState, s: &SyntheticSet) -> Result<()> {
    if s.len() < 2 {
        return Err(invalid("synthetic set needs at least two rows for a variance"));
    }
    if s.dim() != m.input_dim() || s.classes() != m.classes() {
        return Err(invalid("synthetic set shape does not match the model"));
    }
    Ok(())
}

fn synthetic_pass(m: &ModelState, s: &SyntheticSet) -> SyntheticPass {
    let grads: Vec<Vec<f64>> = (0..s.len())
        .into_par_iter()
        .map(|j| last_layer_gradient(&m.forward_unchecked(s.features.row(j)), s.labels[j]))
        .collect();
    let (class_means, variance) = moments(&grads, &s.labels, s.classes);
    SyntheticPass {
        grads,
        class_means,
        variance,
    }
}

fn objective_from(target: &TargetStats, pass: &SyntheticPass, rho: f64, kind: DistanceKind) -> ObjectiveValue {
    let grad_term: f64 = target
        .class_means
        .iter()
        .zip(&pass.class_means)
        .map(|(a, b)| class_distance(kind, a, b))
        .sum();
    let var_term: f64 = target
        .variance
        .iter()
        .zip(&pass.variance)
        .map(|(a, b)| (a - b).abs())
        .sum();
    ObjectiveValue {
        grad_term,
        var_term,
        total: grad_term + 0.5 * rho * var_term,
    }
}

pub fn condense_objective_with(
    m: &ModelState,
    target: &TargetStats,
    s: &SyntheticSet,
    rho: f64,
    kind: DistanceKind,
) -> Result<ObjectiveValue> {
    check_synthetic(m, s)?;
    Ok(objective_from(target, &synthetic_pass(m, s), rho, kind))
}

pub fn condense_objective(
    m: &ModelState,
    t: &Dataset,
    s: &SyntheticSet,
    rho: f64,
    kind: DistanceKind,
) -> Result<ObjectiveValue> {
    condense_objective_with(m, &TargetStats::new(m, t)?, s, rho, kind)
}

/// Pulls an upstream vector `G` on the last-layer gradient `g(x, y)` back to
/// the input: returns `∂(G·g)/∂x`.
fn input_vjp(m: &ModelState, x: &[f64], y: usize, upstream: &[f64]) -> Vec<f64> {
    let c = m.classes();
    let fw = m.forward_unchecked(x);
    let f = fw.features.len();
    let w = m.params();
    let mut r = fw.probs.clone();
    r[y] -= 1.0;
    // u_t = Σ_a G_W[a,t] f_a + G_b[t]
    let mut u = upstream[f * c..(f + 1) * c].to_vec();
    for (a, &fa) in fw.features.iter().enumerate() {
        for t in 0..c {
            u[t] += upstream[a * c + t] * fa;
        }
    }
    let ubar = dot(&u, &fw.probs);
    let dz: Vec<f64> = fw.probs.iter().zip(&u).map(|(p, ut)| p * (ut - ubar)).collect();
    let df: Vec<f64> = (0..f)
        .map(|a| {
            let mut s = 0.0;
            for t in 0..c {
                s += upstream[a * c + t] * r[t] + w[a * c + t] * dz[t];
            }
            s
        })
        .collect();
    match m.arch() {
        Architecture::LinearProbe => df,
        Architecture::Mlp { hidden } => {
            let base = m.last_layer_dim();
            let dh: Vec<f64> = df
                .iter()
                .zip(&fw.features)
                .map(|(d, fa)| d * (1.0 - fa * fa))
                .collect();
            (0..m.input_dim())
                .map(|i| dot(&w[base + i * hidden..base + (i + 1) * hidden], &dh))
                .collect()
        }
    }
}

fn gradient_from(
    m: &ModelState,
    target: &TargetStats,
    s: &SyntheticSet,
    pass: &SyntheticPass,
    rho: f64,
    kind: DistanceKind,
) -> Result<Matrix> {
    let n = s.len();
    let p = m.last_layer_dim();
    let class_grads: Vec<Vec<f64>> = target
        .class_means
        .iter()
        .zip(&pass.class_means)
        .map(|(a, b)| class_distance_grad(kind, a, b))
        .collect();
    // sign(V_T − V_S) with sign(0) = 0
    let signs: Vec<f64> = target
        .variance
        .iter()
        .zip(&pass.variance)
        .map(|(a, b)| if a > b { 1.0 } else if a < b { -1.0 } else { 0.0 })
        .collect();
    let mut mean = vec![0.0; p];
    for g in &pass.grads {
        for (mk, gk) in mean.iter_mut().zip(g) {
            *mk += gk;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let var_scale = 0.5 * rho * 2.0 / (n - 1) as f64;
    let inv_pc = 1.0 / s.per_class as f64;

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let y = s.labels[j];
            let g = &pass.grads[j];
            let upstream: Vec<f64> = (0..p)
                .map(|k| class_grads[y][k] * inv_pc - var_scale * signs[k] * (g[k] - mean[k]))
                .collect();
            input_vjp(m, s.features.row(j), y, &upstream)
        })
        .collect();
    let out = Matrix::from_rows(&rows)?;
    Ok(out)
}

/// Exact gradient of the objective total with respect to every synthetic
/// feature entry.
pub fn objective_grad_wrt_features(
    m: &ModelState,
    t: &Dataset,
    s: &SyntheticSet,
    rho: f64,
    kind: DistanceKind,
) -> Result<Matrix> {
    check_synthetic(m, s)?;
    let target = TargetStats::new(m, t)?;
    let pass = synthetic_pass(m, s);
    gradient_from(m, &target, s, &pass, rho, kind)
}

/// Stepwise driver of the condensation loop. Each step updates S at the
/// current θ, then moves θ along the full-data gradient.
#[derive(Debug, Clone)]
pub struct Condenser<'a> {
    t: &'a Dataset,
    cfg: CondenseConfig,
    synthetic: SyntheticSet,
    model: ModelState,
    outer: usize,
    inner: usize,
    trace: Vec<f64>,
}

const SYNTHETIC_STREAM: u64 = 0;
const THETA_STREAM_BASE: u64 = 1_000;

impl<'a> Condenser<'a> {
    pub fn new(t: &'a Dataset, cfg: &CondenseConfig) -> Result<Self> {
        cfg.validate()?;
        if t.is_empty() {
            return Err(Error::Empty("condensation needs a non-empty training set".into()));
        }
        t.require_all_classes()?;
        let mut rng = Rng::derive(cfg.seed, SYNTHETIC_STREAM);
        let synthetic = init_synthetic(&mut rng, t.dim(), t.class_count(), cfg.per_class, cfg.init_scale)?;
        let model = Self::theta0(t, cfg, 0)?;
        Ok(Self {
            t,
            cfg: cfg.clone(),
            synthetic,
            model,
            outer: 0,
            inner: 0,
            trace: Vec::with_capacity(cfg.outer_loops * cfg.inner_steps),
        })
    }

    fn theta0(t: &Dataset, cfg: &CondenseConfig, outer: usize) -> Result<ModelState> {
        ModelState::init(
            cfg.arch,
            t.dim(),
            t.class_count(),
            derive_seed(cfg.seed, THETA_STREAM_BASE + outer as u64),
        )
    }

    pub fn is_done(&self) -> bool {
        self.outer >= self.cfg.outer_loops
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn synthetic(&self) -> &SyntheticSet {
        &self.synthetic
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// Swaps in another synthetic set of the same shape.
    pub fn replace_synthetic(&mut self, s: SyntheticSet) -> Result<()> {
        if s.len() != self.synthetic.len() || s.dim() != self.synthetic.dim() || s.classes() != self.synthetic.classes() {
            return Err(invalid("replacement synthetic set has a different shape"));
        }
        self.synthetic = s;
        Ok(())
    }

    /// One inner step. Returns the objective at (θ_t, S_t), or `None` once
    /// every loop has run.
    pub fn step(&mut self) -> Result<Option<f64>> {
        if self.is_done() {
            return Ok(None);
        }
        let diverged = || Error::CondenseDiverged {
            outer: self.outer,
            step: self.inner,
        };
        let target = TargetStats::new(&self.model, self.t)?;
        let pass = synthetic_pass(&self.model, &self.synthetic);
        let value = objective_from(&target, &pass, self.cfg.rho, self.cfg.distance).total;
        if !value.is_finite() {
            return Err(diverged());
        }
        let grad = gradient_from(&self.model, &target, &self.synthetic, &pass, self.cfg.rho, self.cfg.distance)?;
        let feats = self.synthetic.features.as_mut_slice();
        for (x, g) in feats.iter_mut().zip(grad.as_slice()) {
            *x -= self.cfg.data_lr * g;
        }
        if !self.synthetic.features.is_finite() {
            return Err(diverged());
        }
        let g_theta = self.model.mean_full_gradient(self.t)?;
        for (w, g) in self.model.params_mut().iter_mut().zip(&g_theta) {
            *w -= self.cfg.model_lr * g;
        }
        if self.model.params().iter().any(|w| !w.is_finite()) {
            return Err(diverged());
        }
        self.trace.push(value);
        self.inner += 1;
        if self.inner == self.cfg.inner_steps {
            self.inner = 0;
            self.outer += 1;
            if !self.is_done() {
                self.model = Self::theta0(self.t, &self.cfg, self.outer)?;
            }
        }
        Ok(Some(value))
    }

    pub fn finish(self) -> (SyntheticSet, Vec<f64>) {
        (self.synthetic, self.trace)
    }
}

/// Runs every outer loop and inner step; returns the final synthetic set and
/// the objective trace (`outer_loops × inner_steps` entries).
pub fn lcmat_c_condense(t: &Dataset, cfg: &CondenseConfig) -> Result<(SyntheticSet, Vec<f64>)> {
    let mut run = Condenser::new(t, cfg)?;
    while run.step()?.is_some() {}
    Ok(run.finish())
}

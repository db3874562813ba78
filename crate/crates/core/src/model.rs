//! Softmax classifiers (linear probe and one-hidden-layer tanh MLP), SGD
//! training, and closed-form last-layer curvature.
//!
//! Parameters live in one flat vector. The classifier block comes first and
//! uses the last-layer layout shared by gradients and Hessian diagonals:
//!
//! ```text
//! k = j*c + t        W[j, t]   (j < feat_dim, t < c)
//! k = feat_dim*c + t b[t]
//! ```
//!
//! so the last-layer dimension is `p = (feat_dim + 1) * c`. For the MLP the
//! hidden weights `W1[i, a]` (at `p + i*hidden + a`) and biases `b1[a]`
//! follow.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::numerics::{argmax, log_sum_exp, softmax_into, Rng};

pub const LCM1_MAGIC: [u8; 4] = *b"LCM1";
const LCM1_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    LinearProbe,
    Mlp { hidden: usize },
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Architecture::LinearProbe => write!(f, "linear"),
            Architecture::Mlp { hidden } => write!(f, "mlp:{hidden}"),
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear_probe" => Ok(Architecture::LinearProbe),
            _ => {
                let hidden = s
                    .strip_prefix("mlp:")
                    .and_then(|h| h.parse::<usize>().ok())
                    .filter(|&h| h > 0)
                    .ok_or_else(|| invalid(format!("unknown architecture {s:?} (use linear or mlp:<hidden>)")))?;
                Ok(Architecture::Mlp { hidden })
            }
        }
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub probs: Vec<f64>,
    /// Penultimate features; the input itself for the linear probe.
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    arch: Architecture,
    input_dim: usize,
    classes: usize,
    params: Vec<f64>,
}

impl ModelState {
    /// Seeded initialization: weights `N(0, 1/fan_in)`, biases zero.
    pub fn init(arch: Architecture, input_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(arch, input_dim, classes)?;
        let mut rng = Rng::new(seed);
        let f = m.feat_dim();
        let p = m.last_layer_dim();
        let scale = 1.0 / (f as f64).sqrt();
        for k in 0..f * classes {
            m.params[k] = rng.normal() * scale;
        }
        if let Architecture::Mlp { hidden } = arch {
            let scale = 1.0 / (input_dim as f64).sqrt();
            for k in 0..input_dim * hidden {
                m.params[p + k] = rng.normal() * scale;
            }
        }
        Ok(m)
    }

    pub fn zeros(arch: Architecture, input_dim: usize, classes: usize) -> Result<Self> {
        if input_dim == 0 || classes < 2 {
            return Err(invalid(format!(
                "model needs input_dim >= 1 and classes >= 2, got {input_dim} and {classes}"
            )));
        }
        if let Architecture::Mlp { hidden: 0 } = arch {
            return Err(invalid("MLP hidden width must be positive"));
        }
        let mut m = Self {
            arch,
            input_dim,
            classes,
            params: Vec::new(),
        };
        m.params = vec![0.0; m.param_count()];
        Ok(m)
    }

    /// Builds a model from a full flat parameter vector (layout in the module docs).
    pub fn from_params(arch: Architecture, input_dim: usize, classes: usize, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(arch, input_dim, classes)?;
        if params.len() != m.params.len() {
            return Err(Error::DimensionMismatch {
                context: "model parameters",
                expected: m.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        m.params = params;
        Ok(m)
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feat_dim(&self) -> usize {
        match self.arch {
            Architecture::LinearProbe => self.input_dim,
            Architecture::Mlp { hidden } => hidden,
        }
    }

    /// `p = (feat_dim + 1) * c`
    pub fn last_layer_dim(&self) -> usize {
        (self.feat_dim() + 1) * self.classes
    }

    pub fn param_count(&self) -> usize {
        let p = self.last_layer_dim();
        match self.arch {
            Architecture::LinearProbe => p,
            Architecture::Mlp { hidden } => p + self.input_dim * hidden + hidden,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn last_layer(&self) -> &[f64] {
        &self.params[..self.last_layer_dim()]
    }

    /// Copy with `delta` added to the classifier block.
    pub fn perturb_last_layer(&self, delta: &[f64]) -> Result<ModelState> {
        let p = self.last_layer_dim();
        if delta.len() != p {
            return Err(Error::DimensionMismatch {
                context: "last-layer perturbation",
                expected: p,
                got: delta.len(),
            });
        }
        let mut out = self.clone();
        for (w, d) in out.params[..p].iter_mut().zip(delta) {
            *w += d;
        }
        Ok(out)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "model input",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.classes {
            return Err(invalid(format!("label {y} out of range for {} classes", self.classes)));
        }
        Ok(())
    }

    /// Penultimate features (unchecked input length).
    pub(crate) fn features_of(&self, x: &[f64]) -> Vec<f64> {
        match self.arch {
            Architecture::LinearProbe => x.to_vec(),
            Architecture::Mlp { hidden } => {
                let base = self.last_layer_dim();
                let w1 = &self.params[base..base + self.input_dim * hidden];
                let b1 = &self.params[base + self.input_dim * hidden..];
                let mut h = b1.to_vec();
                for (i, &xi) in x.iter().enumerate() {
                    let row = &w1[i * hidden..(i + 1) * hidden];
                    for (ha, w) in h.iter_mut().zip(row) {
                        *ha += xi * w;
                    }
                }
                h.iter_mut().for_each(|v| *v = v.tanh());
                h
            }
        }
    }

    pub(crate) fn logits_of_features(&self, feat: &[f64]) -> Vec<f64> {
        let c = self.classes;
        let f = feat.len();
        let mut z = self.params[f * c..(f + 1) * c].to_vec();
        for (j, &fj) in feat.iter().enumerate() {
            let row = &self.params[j * c..(j + 1) * c];
            for (zt, w) in z.iter_mut().zip(row) {
                *zt += fj * w;
            }
        }
        z
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Forward {
        let features = self.features_of(x);
        let z = self.logits_of_features(&features);
        let mut probs = vec![0.0; self.classes];
        softmax_into(&z, &mut probs);
        Forward { probs, features }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.logits_of_features(&self.features_of(x)))
    }

    /// Predicted class; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let z = self.logits(x)?;
        Ok(argmax(&z).unwrap_or(0))
    }

    pub fn sample_loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        let z = self.logits(x)?;
        Ok(log_sum_exp(&z) - z[y])
    }

    /// Mean cross-entropy over the dataset.
    pub fn mean_loss(&self, ds: &Dataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::Empty("mean_loss on empty dataset".into()));
        }
        let mut total = 0.0;
        for i in 0..ds.len() {
            total += self.sample_loss(ds.x(i), ds.y(i))?;
        }
        Ok(total / ds.len() as f64)
    }

    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::Empty("accuracy on empty dataset".into()));
        }
        let mut hits = 0usize;
        for i in 0..ds.len() {
            if self.predict(ds.x(i))? == ds.y(i) {
                hits += 1;
            }
        }
        Ok(hits as f64 / ds.len() as f64)
    }

    /// Last-layer gradient of the cross-entropy of one sample:
    /// `W[j,t] = feat_j (p_t − 1{t=y})`, `b[t] = p_t − 1{t=y}`.
    pub fn per_sample_gradient(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_label(y)?;
        let fw = self.forward_unchecked(x);
        Ok(last_layer_gradient(&fw, y))
    }

    /// Diagonal of the last-layer Hessian of one sample:
    /// `W[j,t] = feat_j² p_t (1 − p_t)`, `b[t] = p_t (1 − p_t)`.
    pub fn per_sample_hessian_diag(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_label(y)?;
        let fw = self.forward_unchecked(x);
        Ok(last_layer_hessian_diag(&fw))
    }

    /// Adds `weight × ∇ℓ(x, y)` over all parameters into `grad` and returns
    /// the sample loss.
    pub(crate) fn accumulate_full_gradient(&self, x: &[f64], y: usize, weight: f64, grad: &mut [f64]) -> f64 {
        let c = self.classes;
        let feat = self.features_of(x);
        let z = self.logits_of_features(&feat);
        let loss = log_sum_exp(&z) - z[y];
        let mut r = vec![0.0; c];
        softmax_into(&z, &mut r);
        r[y] -= 1.0;
        let f = feat.len();
        for (j, &fj) in feat.iter().enumerate() {
            let row = &mut grad[j * c..(j + 1) * c];
            for (g, rt) in row.iter_mut().zip(&r) {
                *g += weight * fj * rt;
            }
        }
        for (g, rt) in grad[f * c..(f + 1) * c].iter_mut().zip(&r) {
            *g += weight * rt;
        }
        if let Architecture::Mlp { hidden } = self.arch {
            // dL/dh_a = (Σ_t W[a,t] r_t) (1 − feat_a²)
            let mut dh = vec![0.0; hidden];
            for (a, d) in dh.iter_mut().enumerate() {
                let row = &self.params[a * c..(a + 1) * c];
                let mut s = 0.0;
                for (w, rt) in row.iter().zip(&r) {
                    s += w * rt;
                }
                *d = s * (1.0 - feat[a] * feat[a]);
            }
            let base = self.last_layer_dim();
            for (i, &xi) in x.iter().enumerate() {
                let row = &mut grad[base + i * hidden..base + (i + 1) * hidden];
                for (g, d) in row.iter_mut().zip(&dh) {
                    *g += weight * xi * d;
                }
            }
            let bb = base + self.input_dim * hidden;
            for (g, d) in grad[bb..bb + hidden].iter_mut().zip(&dh) {
                *g += weight * d;
            }
        }
        loss
    }

    /// Gradient of the mean loss over all parameters.
    pub fn mean_full_gradient(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.is_empty() {
            return Err(Error::Empty("gradient of empty dataset".into()));
        }
        if ds.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "dataset vs model input",
                expected: self.input_dim,
                got: ds.dim(),
            });
        }
        let mut g = vec![0.0; self.params.len()];
        let w = 1.0 / ds.len() as f64;
        for i in 0..ds.len() {
            self.accumulate_full_gradient(ds.x(i), ds.y(i), w, &mut g);
        }
        Ok(g)
    }

    pub fn to_lcm1_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.params.len());
        out.extend_from_slice(&LCM1_MAGIC);
        out.extend_from_slice(&LCM1_VERSION.to_le_bytes());
        let (tag, hidden) = match self.arch {
            Architecture::LinearProbe => (0u32, 0u32),
            Architecture::Mlp { hidden } => (1, hidden as u32),
        };
        for v in [tag, self.input_dim as u32, hidden, self.classes as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_lcm1_bytes(bytes: &[u8]) -> Result<Self> {
        let mut found = [0u8; 4];
        let head = bytes.len().min(4);
        found[..head].copy_from_slice(&bytes[..head]);
        if found != LCM1_MAGIC {
            return Err(Error::BadMagic {
                expected: LCM1_MAGIC,
                found,
            });
        }
        if bytes.len() < 24 {
            return Err(Error::Truncated("LCM1 header".into()));
        }
        let u = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if u(4) != LCM1_VERSION {
            return Err(Error::UnsupportedVersion(u(4)));
        }
        let arch = match u(8) {
            0 => Architecture::LinearProbe,
            1 => Architecture::Mlp { hidden: u(16) as usize },
            t => return Err(invalid(format!("unknown LCM1 architecture tag {t}"))),
        };
        let mut m = Self::zeros(arch, u(12) as usize, u(20) as usize)?;
        let need = 24 + 8 * m.params.len();
        if bytes.len() != need {
            return Err(Error::Truncated(format!(
                "LCM1 payload needs {need} bytes, found {}",
                bytes.len()
            )));
        }
        for (k, p) in m.params.iter_mut().enumerate() {
            let off = 24 + 8 * k;
            *p = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        }
        if m.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LCM1 parameters".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_lcm1_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_lcm1_bytes(&fs::read(path)?)
    }
}

pub(crate) fn last_layer_gradient(fw: &Forward, y: usize) -> Vec<f64> {
    let c = fw.probs.len();
    let f = fw.features.len();
    let mut r = fw.probs.clone();
    r[y] -= 1.0;
    let mut g = vec![0.0; (f + 1) * c];
    for (j, &fj) in fw.features.iter().enumerate() {
        for t in 0..c {
            g[j * c + t] = fj * r[t];
        }
    }
    g[f * c..].copy_from_slice(&r);
    g
}

pub(crate) fn last_layer_hessian_diag(fw: &Forward) -> Vec<f64> {
    let c = fw.probs.len();
    let f = fw.features.len();
    let s: Vec<f64> = fw.probs.iter().map(|p| p * (1.0 - p)).collect();
    let mut h = vec![0.0; (f + 1) * c];
    for (j, &fj) in fw.features.iter().enumerate() {
        for t in 0..c {
            h[j * c + t] = fj * fj * s[t];
        }
    }
    h[f * c..].copy_from_slice(&s);
    debug_assert!(h.iter().all(|&v| v >= 0.0), "negative Hessian diagonal entry");
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelState,
    /// Weighted mean training loss per epoch, measured on each minibatch
    /// before its update.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch SGD with momentum and L2 weight decay. Optional per-sample
/// weights scale each sample's loss inside its batch.
pub fn train(m: &ModelState, ds: &Dataset, cfg: &TrainConfig, weights: Option<&[f64]>) -> Result<Trained> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    if ds.dim() != m.input_dim || ds.class_count() != m.classes {
        return Err(invalid(format!(
            "dataset shape (d={}, c={}) does not match model (d={}, c={})",
            ds.dim(),
            ds.class_count(),
            m.input_dim,
            m.classes
        )));
    }
    if let Some(w) = weights {
        if w.len() != ds.len() {
            return Err(Error::DimensionMismatch {
                context: "sample weights",
                expected: ds.len(),
                got: w.len(),
            });
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("sample weights must be finite and non-negative"));
        }
    }
    let mut model = m.clone();
    let mut velocity = vec![0.0; model.params.len()];
    let mut grad = vec![0.0; model.params.len()];
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng = Rng::derive(cfg.seed, SHUFFLE_STREAM);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let bw: f64 = batch.iter().map(|&i| weights.map_or(1.0, |w| w[i])).sum();
            if bw <= 0.0 {
                continue;
            }
            for &i in batch {
                let wi = weights.map_or(1.0, |w| w[i]);
                if wi == 0.0 {
                    continue;
                }
                let l = model.accumulate_full_gradient(ds.x(i), ds.y(i), wi / bw, &mut grad);
                loss_sum += wi * l;
            }
            weight_sum += bw;
            for ((p, v), g) in model.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g + cfg.weight_decay * *p;
                *p -= cfg.learning_rate * *v;
            }
        }
        let mean = loss_sum / weight_sum;
        if !mean.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        epoch_losses.push(mean);
    }
    Ok(Trained { model, epoch_losses })
}

/// Stream id for minibatch shuffling, kept apart from initialization draws.
const SHUFFLE_STREAM: u64 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussian_mixture;
    use crate::numerics::Matrix;

    #[test]
    fn zero_weights_give_uniform_probs() {
        let m = ModelState::zeros(Architecture::LinearProbe, 3, 4).unwrap();
        let fw = m.forward(&[1.0, -2.0, 0.5]).unwrap();
        for p in fw.probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert_eq!(fw.features, vec![1.0, -2.0, 0.5]);
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn bias_shift_leaves_probs_unchanged() {
        let m = ModelState::init(Architecture::Mlp { hidden: 4 }, 3, 3, 5).unwrap();
        let x = [0.3, -0.7, 1.1];
        let a = m.forward(&x).unwrap().probs;
        let mut shifted = m.clone();
        let f = m.feat_dim();
        for t in 0..3 {
            shifted.params_mut()[f * 3 + t] += 17.5;
        }
        let b = shifted.forward(&x).unwrap().probs;
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn saturated_sample_has_zero_curvature() {
        let mut m = ModelState::zeros(Architecture::LinearProbe, 1, 2).unwrap();
        // b = (1000, 0): p = one-hot on class 0 in f64
        m.params_mut()[2] = 1000.0;
        let g = m.per_sample_gradient(&[0.5], 0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let h = m.per_sample_hessian_diag(&[0.5], 0).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_kills_weight_block() {
        let m = ModelState::init(Architecture::LinearProbe, 3, 3, 1).unwrap();
        let g = m.per_sample_gradient(&[0.0, 0.0, 0.0], 2).unwrap();
        assert!(g[..9].iter().all(|&v| v == 0.0));
        let p = m.forward(&[0.0; 3]).unwrap().probs;
        assert!((g[9] - p[0]).abs() < 1e-15);
        assert!((g[11] - (p[2] - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn uniform_probs_hessian_closed_form() {
        let m = ModelState::zeros(Architecture::LinearProbe, 2, 4).unwrap();
        let h = m.per_sample_hessian_diag(&[1.0, 1.0], 1).unwrap();
        for v in h {
            assert!((v - 0.25 * 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_predictor_loss_is_ln_c() {
        let m = ModelState::zeros(Architecture::LinearProbe, 2, 5).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.0]]).unwrap();
        let ds = Dataset::new("u", x, vec![0, 4], 5).unwrap();
        assert!((m.mean_loss(&ds).unwrap() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let ds = synth_gaussian_mixture(&mut Rng::new(0), 2, 5, 3, 4.0).unwrap();
        let m = ModelState::init(Architecture::LinearProbe, 3, 2, 9).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let t = train(&m, &ds, &cfg, None).unwrap();
        assert_eq!(t.model, m);
        assert!(t.epoch_losses.is_empty());
    }

    #[test]
    fn divergence_names_epoch() {
        let ds = synth_gaussian_mixture(&mut Rng::new(0), 2, 20, 3, 50.0).unwrap();
        let m = ModelState::init(Architecture::LinearProbe, 3, 2, 9).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            momentum: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&m, &ds, &cfg, None), Err(Error::Diverged { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        for arch in [Architecture::LinearProbe, Architecture::Mlp { hidden: 3 }] {
            let m = ModelState::init(arch, 4, 3, 2).unwrap();
            let back = ModelState::from_lcm1_bytes(&m.to_lcm1_bytes()).unwrap();
            assert_eq!(back, m);
        }
        let mut bytes = ModelState::init(Architecture::LinearProbe, 2, 2, 0).unwrap().to_lcm1_bytes();
        bytes.pop();
        assert!(matches!(ModelState::from_lcm1_bytes(&bytes), Err(Error::Truncated(_))));
        assert!(matches!(ModelState::from_lcm1_bytes(b"LCD1xxxx"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn parses_architectures() {
        assert_eq!("linear".parse::<Architecture>().unwrap(), Architecture::LinearProbe);
        assert_eq!("mlp:16".parse::<Architecture>().unwrap(), Architecture::Mlp { hidden: 16 });
        assert!("mlp:0".parse::<Architecture>().is_err());
        assert!("conv".parse::<Architecture>().is_err());
    }
}

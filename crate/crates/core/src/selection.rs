//! Coreset selection: curvature-aware facility location (LCMat-S) and the
//! baseline selectors it is compared against.
//!
//! Costs between two samples of the same class combine gradient distance and
//! Hessian-diagonal disagreement on the sub-dimensions `𝒦`:
//!
//! ```text
//! cost(i, j) = ‖g_i − g_j‖₂ + (rho/2) Σ_{k∈𝒦} |λ̂_ik − λ̂_jk|
//! ```
//!
//! A virtual facility `e` with cost `aux ≥ max cost` turns coverage-cost
//! minimization into maximizing `F(S) = Σ_i max_{j∈S} (aux − cost(i, j))`,
//! which is monotone submodular and solved greedily per class.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{build_profile, select_subdims, CurvatureProfile, SubdimSet};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::model::ModelState;
use crate::numerics::{argmax, axpy, distance, norm, Matrix, Rng};

/// Relative margin of the auxiliary cost over the largest pairwise cost.
pub const AUX_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Uniform,
    Herding,
    Kcenter,
    LeastConfidence,
    Entropy,
    Margin,
    Craig,
    LcmatS,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Uniform,
        Method::Herding,
        Method::Kcenter,
        Method::LeastConfidence,
        Method::Entropy,
        Method::Margin,
        Method::Craig,
        Method::LcmatS,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::Herding => "herding",
            Method::Kcenter => "kcenter",
            Method::LeastConfidence => "least_confidence",
            Method::Entropy => "entropy",
            Method::Margin => "margin",
            Method::Craig => "craig",
            Method::LcmatS => "lcmat_s",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| invalid(format!("unknown selection method {s:?}")))
    }
}

/// Knobs shared by every selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectConfig {
    pub fraction: f64,
    pub rho: f64,
    pub subdims: usize,
    pub weighted: bool,
    pub seed: u64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            fraction: 0.05,
            rho: 0.1,
            subdims: 100,
            weighted: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Sorted dataset rows.
    pub indices: Vec<usize>,
    /// `γ_j` aligned with `indices`, when computed.
    pub weights: Option<Vec<f64>>,
    pub method: Method,
    /// `F(S)` after each greedy step, one list per class (empty for
    /// selectors without a facility objective).
    pub objective_trace: Vec<Vec<f64>>,
    pub config: SelectConfig,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Splits `round(fraction × n)` across classes in proportion to their sizes:
/// floors first, then the remaining slots go to the largest fractional
/// remainders (ties: larger class, then lower class id).
pub fn class_budgets(class_sizes: &[usize], fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let n: usize = class_sizes.iter().sum();
    if n == 0 {
        return Err(Error::Empty("no examples to select from".into()));
    }
    let total = ((fraction * n as f64).round() as usize).min(n);
    let quotas: Vec<f64> = class_sizes
        .iter()
        .map(|&s| total as f64 * s as f64 / n as f64)
        .collect();
    let mut budgets: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = budgets.iter().sum();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
            .then(class_sizes[b].cmp(&class_sizes[a]))
            .then(a.cmp(&b))
    });
    for &c in order.iter().take(total - assigned) {
        budgets[c] += 1;
    }
    if let Some(class) = budgets
        .iter()
        .zip(class_sizes)
        .position(|(&b, &s)| b == 0 && s > 0)
    {
        let smallest = class_sizes.iter().copied().filter(|&s| s > 0).min().unwrap();
        return Err(Error::ZeroBudget {
            class,
            min_fraction: 1.0 / smallest as f64,
        });
    }
    Ok(budgets)
}

/// `‖g_i − g_j‖₂ + (rho/2) Σ_{k∈𝒦} |λ̂_ik − λ̂_jk|` for profile rows `i`, `j`.
pub fn pairwise_cost(profile: &CurvatureProfile, subdims: &SubdimSet, rho: f64, i: usize, j: usize) -> f64 {
    let grad = distance(profile.gradients.row(i), profile.gradients.row(j));
    let hi = profile.hess_diags.row(i);
    let hj = profile.hess_diags.row(j);
    let mut curv = 0.0;
    for &k in &subdims.indices {
        curv += (hi[k] - hj[k]).abs();
    }
    grad + 0.5 * rho * curv
}

/// Dense symmetric cost matrix over one class plus the auxiliary cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub costs: Matrix,
    pub aux: f64,
}

impl CostMatrix {
    /// Wraps a symmetric, zero-diagonal, non-negative matrix and sets
    /// `aux = max entry × (1 + AUX_MARGIN)`.
    pub fn from_costs(costs: Matrix) -> Result<Self> {
        let n = costs.rows();
        if costs.cols() != n {
            return Err(invalid("cost matrix must be square"));
        }
        let mut max = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v = costs.get(i, j);
                if v < 0.0 || (i == j && v != 0.0) || v != costs.get(j, i) {
                    return Err(invalid(format!("cost entry ({i}, {j}) = {v} breaks symmetry or non-negativity")));
                }
                max = max.max(v);
            }
        }
        Ok(Self {
            costs,
            aux: max * (1.0 + AUX_MARGIN),
        })
    }

    pub fn len(&self) -> usize {
        self.costs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.rows() == 0
    }

    #[inline]
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.aux - self.costs.get(i, j)
    }

    /// `F(S) = Σ_i max_{j∈S} (aux − cost(i, j))`, zero for the empty set.
    pub fn facility_value(&self, set: &[usize]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..self.len() {
            let mut best = f64::NEG_INFINITY;
            for &j in set {
                best = best.max(self.similarity(i, j));
            }
            total += best;
        }
        total
    }

    /// `Σ_i min_{j∈S} cost(i, j)`
    pub fn coverage_cost(&self, set: &[usize]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.len() {
            let mut best = f64::INFINITY;
            for &j in set {
                best = best.min(self.costs.get(i, j));
            }
            total += best;
        }
        total
    }
}

fn symmetric_matrix(n: usize, cost: impl Fn(usize, usize) -> f64 + Sync) -> Matrix {
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| cost(i, j)).collect())
        .collect();
    let mut m = Matrix::zeros(n, n);
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// Pairwise curvature costs among `class_rows` (profile rows).
pub fn build_cost_matrix(
    profile: &CurvatureProfile,
    subdims: &SubdimSet,
    rho: f64,
    class_rows: &[usize],
) -> Result<CostMatrix> {
    if class_rows.is_empty() {
        return Err(Error::Empty("cost matrix over an empty class".into()));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid("rho must be finite and non-negative"));
    }
    let m = symmetric_matrix(class_rows.len(), |a, b| {
        pairwise_cost(profile, subdims, rho, class_rows[a], class_rows[b])
    });
    CostMatrix::from_costs(m)
}

/// Gradient-only costs `‖g_i − g_j‖₂`, the gradient-matching metric.
pub fn gradient_cost_matrix(profile: &CurvatureProfile, class_rows: &[usize]) -> Result<CostMatrix> {
    if class_rows.is_empty() {
        return Err(Error::Empty("cost matrix over an empty class".into()));
    }
    let m = symmetric_matrix(class_rows.len(), |a, b| {
        distance(profile.gradients.row(class_rows[a]), profile.gradients.row(class_rows[b]))
    });
    CostMatrix::from_costs(m)
}

fn check_budget(costs: &CostMatrix, m: usize) -> Result<()> {
    if m == 0 {
        return Err(invalid("greedy budget must be at least 1"));
    }
    if m > costs.len() {
        return Err(invalid(format!("budget {m} exceeds class size {}", costs.len())));
    }
    Ok(())
}

fn marginal_gain(costs: &CostMatrix, cover: &[f64], e: usize) -> f64 {
    let mut gain = 0.0;
    for (i, &c) in cover.iter().enumerate() {
        let s = costs.similarity(i, e);
        if s > c {
            gain += s - c;
        }
    }
    gain
}

/// Plain greedy maximization of `F`. Returns picks in selection order and
/// `F(S)` after each pick. Ties go to the lowest index.
pub fn facility_greedy(costs: &CostMatrix, m: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    check_budget(costs, m)?;
    let n = costs.len();
    // best similarity so far per point; F(∅) = 0 so coverage starts at 0
    let mut cover = vec![0.0; n];
    let mut chosen = vec![false; n];
    let mut picks = Vec::with_capacity(m);
    let mut trace = Vec::with_capacity(m);
    let mut value = 0.0;
    for _ in 0..m {
        let gains: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|e| {
                if chosen[e] {
                    f64::NEG_INFINITY
                } else {
                    marginal_gain(costs, &cover, e)
                }
            })
            .collect();
        let e = argmax(&gains).expect("non-empty class");
        value += gains[e];
        chosen[e] = true;
        for (i, c) in cover.iter_mut().enumerate() {
            *c = c.max(costs.similarity(i, e));
        }
        picks.push(e);
        trace.push(value);
    }
    Ok((picks, trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    bound: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy greedy with a max-heap of stale gains. Produces the same picks as
/// [`facility_greedy`]: gains only shrink as coverage grows, and the heap
/// orders equal bounds by lowest index.
pub fn facility_lazy_greedy(costs: &CostMatrix, m: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    check_budget(costs, m)?;
    let n = costs.len();
    let mut cover = vec![0.0; n];
    let mut heap: BinaryHeap<Candidate> = (0..n)
        .map(|e| Candidate {
            bound: marginal_gain(costs, &cover, e),
            index: e,
        })
        .collect();
    let mut picks = Vec::with_capacity(m);
    let mut trace = Vec::with_capacity(m);
    let mut value = 0.0;
    while picks.len() < m {
        let top = heap.pop().expect("heap holds every unpicked element");
        let fresh = Candidate {
            bound: marginal_gain(costs, &cover, top.index),
            index: top.index,
        };
        if heap.peek().is_none_or(|next| fresh >= *next) {
            value += fresh.bound;
            for (i, c) in cover.iter_mut().enumerate() {
                *c = c.max(costs.similarity(i, fresh.index));
            }
            picks.push(fresh.index);
            trace.push(value);
        } else {
            heap.push(fresh);
        }
    }
    Ok((picks, trace))
}

/// Nearest selected element (by cost, ties to the earlier entry of
/// `selected`) for every class member.
pub fn nearest_assignment(costs: &CostMatrix, selected: &[usize]) -> Vec<usize> {
    (0..costs.len())
        .map(|i| {
            let mut best = 0;
            for (pos, &j) in selected.iter().enumerate() {
                if costs.costs.get(i, j) < costs.costs.get(i, selected[best]) {
                    best = pos;
                }
            }
            best
        })
        .collect()
}

/// `γ_j`: how many class members have `selected[j]` as their nearest element.
pub fn assignment_weights(costs: &CostMatrix, selected: &[usize]) -> Vec<f64> {
    let mut gamma = vec![0.0; selected.len()];
    for pos in nearest_assignment(costs, selected) {
        gamma[pos] += 1.0;
    }
    gamma
}

/// Both sides of the facility-location upper bound for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacilityBoundCheck {
    /// `‖Σ_i g_i − Σ_j γ_j g_j‖ + (rho/2) Σ_{k∈𝒦} |Σ_i λ̂_ik − Σ_j γ_j λ̂_jk|`
    pub lhs: f64,
    /// `Σ_i min_{j∈S} cost(i, j)`
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates the bound for a class profile and selected profile rows, with
/// `γ` from the nearest-element mapping.
pub fn facility_bound_check(
    profile: &CurvatureProfile,
    subdims: &SubdimSet,
    rho: f64,
    selected: &[usize],
) -> Result<FacilityBoundCheck> {
    if selected.is_empty() {
        return Err(Error::Empty("bound check needs a non-empty selection".into()));
    }
    if let Some(&bad) = selected.iter().find(|&&j| j >= profile.len()) {
        return Err(invalid(format!("selected row {bad} outside profile of {}", profile.len())));
    }
    let all: Vec<usize> = (0..profile.len()).collect();
    let costs = build_cost_matrix(profile, subdims, rho, &all)?;
    // Σ_j γ_j g_j = Σ_i g_σ(i), so the residual is accumulated as
    // Σ_i (g_i − g_σ(i)) without cancelling two large sums
    let p = profile.dim();
    let mut g_res = vec![0.0; p];
    let mut h_res = vec![0.0; p];
    for (i, pos) in nearest_assignment(&costs, selected).into_iter().enumerate() {
        let j = selected[pos];
        if i == j {
            continue;
        }
        for (r, (a, b)) in g_res.iter_mut().zip(profile.gradients.row(i).iter().zip(profile.gradients.row(j))) {
            *r += a - b;
        }
        for (r, (a, b)) in h_res.iter_mut().zip(profile.hess_diags.row(i).iter().zip(profile.hess_diags.row(j))) {
            *r += a - b;
        }
    }
    let mut curv = 0.0;
    for &k in &subdims.indices {
        curv += h_res[k].abs();
    }
    let lhs = norm(&g_res) + 0.5 * rho * curv;
    let rhs = costs.coverage_cost(selected);
    Ok(FacilityBoundCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
    })
}

/// Everything LCMat-S computed along the way, for reporting.
#[derive(Debug, Clone)]
pub struct LcmatSRun {
    pub selection: Selection,
    /// Profile over all dataset rows, in row order.
    pub profile: CurvatureProfile,
    /// Per class: dataset rows, sub-dimensions, and chosen positions within
    /// the class (sorted).
    pub classes: Vec<ClassRun>,
}

#[derive(Debug, Clone)]
pub struct ClassRun {
    pub rows: Vec<usize>,
    pub subdims: SubdimSet,
    pub picks: Vec<usize>,
    pub trace: Vec<f64>,
}

fn check_model_data(m: &ModelState, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Empty("selection over an empty dataset".into()));
    }
    if ds.dim() != m.input_dim() || ds.class_count() != m.classes() {
        return Err(invalid("dataset shape does not match the model"));
    }
    Ok(())
}

/// Per class: chosen positions, greedy trace, optional weights.
type ClassPicks = (Vec<usize>, Vec<f64>, Option<Vec<f64>>);

fn assemble(
    method: Method,
    cfg: &SelectConfig,
    parts: &[Vec<usize>],
    picks: Vec<ClassPicks>,
) -> Selection {
    let mut rows: Vec<(usize, Option<f64>)> = Vec::new();
    let mut traces = Vec::with_capacity(picks.len());
    let weighted = picks.iter().any(|(_, _, w)| w.is_some());
    for (class_rows, (local, trace, weights)) in parts.iter().zip(picks) {
        for (pos, &l) in local.iter().enumerate() {
            rows.push((class_rows[l], weights.as_ref().map(|w| w[pos])));
        }
        traces.push(trace);
    }
    rows.sort_by_key(|r| r.0);
    Selection {
        indices: rows.iter().map(|r| r.0).collect(),
        weights: weighted.then(|| rows.iter().map(|r| r.1.unwrap_or(0.0)).collect()),
        method,
        objective_trace: traces,
        config: cfg.clone(),
    }
}

/// LCMat-S: per-class profile, sub-dimension choice, cost matrix, and greedy
/// facility location. With `weighted`, `γ` counts nearest class members.
pub fn lcmat_s_run(m: &ModelState, ds: &Dataset, cfg: &SelectConfig) -> Result<LcmatSRun> {
    check_model_data(m, ds)?;
    if !(cfg.rho >= 0.0 && cfg.rho.is_finite()) {
        return Err(invalid("rho must be finite and non-negative"));
    }
    let parts = ds.class_partition();
    let budgets = class_budgets(&ds.class_sizes(), cfg.fraction)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let profile = build_profile(m, ds, &all)?;

    let classes: Vec<(ClassRun, Option<Vec<f64>>)> = parts
        .par_iter()
        .zip(&budgets)
        .filter(|(rows, _)| !rows.is_empty())
        .map(|(rows, &budget)| {
            let class_profile = profile.restrict(rows);
            let subdims = select_subdims(&class_profile, cfg.subdims)?;
            let local: Vec<usize> = (0..rows.len()).collect();
            let costs = build_cost_matrix(&class_profile, &subdims, cfg.rho, &local)?;
            let (mut picks, trace) = facility_greedy(&costs, budget)?;
            picks.sort_unstable();
            let weights = cfg.weighted.then(|| assignment_weights(&costs, &picks));
            Ok((
                ClassRun {
                    rows: rows.clone(),
                    subdims,
                    picks,
                    trace,
                },
                weights,
            ))
        })
        .collect::<Result<_>>()?;

    let nonempty: Vec<Vec<usize>> = parts.into_iter().filter(|r| !r.is_empty()).collect();
    let picks = classes
        .iter()
        .map(|(c, w)| (c.picks.clone(), c.trace.clone(), w.clone()))
        .collect();
    let selection = assemble(Method::LcmatS, cfg, &nonempty, picks);
    Ok(LcmatSRun {
        selection,
        profile,
        classes: classes.into_iter().map(|(c, _)| c).collect(),
    })
}

pub fn lcmat_s_select(m: &ModelState, ds: &Dataset, cfg: &SelectConfig) -> Result<Selection> {
    Ok(lcmat_s_run(m, ds, cfg)?.selection)
}

/// Uncertainty score of one softmax output; higher means less confident.
pub fn uncertainty_score(method: Method, probs: &[f64]) -> Result<f64> {
    match method {
        Method::LeastConfidence => Ok(1.0 - probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        Method::Entropy => {
            let mut h = 0.0;
            for &p in probs {
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            Ok(h)
        }
        Method::Margin => {
            let top = argmax(probs).unwrap_or(0);
            let mut runner_up = f64::NEG_INFINITY;
            for (t, &p) in probs.iter().enumerate() {
                if t != top {
                    runner_up = runner_up.max(p);
                }
            }
            Ok(1.0 - (probs[top] - runner_up))
        }
        other => Err(invalid(format!("{other} is not an uncertainty score"))),
    }
}

fn herding_picks(feats: &[Vec<f64>], budget: usize) -> Vec<usize> {
    let n = feats.len();
    let d = feats[0].len();
    let mut center = vec![0.0; d];
    for f in feats {
        axpy(1.0 / n as f64, f, &mut center);
    }
    let mut sum = vec![0.0; d];
    let mut chosen = vec![false; n];
    let mut picks = Vec::with_capacity(budget);
    for k in 0..budget {
        let inv = 1.0 / (k + 1) as f64;
        let mut best: Option<(usize, f64)> = None;
        for (e, f) in feats.iter().enumerate() {
            if chosen[e] {
                continue;
            }
            let mut dist = 0.0;
            for ((c, s), x) in center.iter().zip(&sum).zip(f) {
                let diff = c - (s + x) * inv;
                dist += diff * diff;
            }
            if best.is_none_or(|(_, b)| dist < b) {
                best = Some((e, dist));
            }
        }
        let (e, _) = best.unwrap();
        chosen[e] = true;
        axpy(1.0, &feats[e], &mut sum);
        picks.push(e);
    }
    picks
}

fn kcenter_picks(feats: &[Vec<f64>], budget: usize) -> Vec<usize> {
    let n = feats.len();
    let mut chosen = vec![false; n];
    let mut mindist = vec![f64::INFINITY; n];
    let mut picks = Vec::with_capacity(budget);
    let mut next = 0;
    for _ in 0..budget {
        chosen[next] = true;
        picks.push(next);
        for (i, md) in mindist.iter_mut().enumerate() {
            *md = md.min(distance(&feats[i], &feats[next]));
        }
        let masked: Vec<f64> = mindist
            .iter()
            .zip(&chosen)
            .map(|(&d, &c)| if c { f64::NEG_INFINITY } else { d })
            .collect();
        next = argmax(&masked).unwrap_or(0);
    }
    picks
}

/// Baseline selectors, all class-balanced with the same budgets as LCMat-S.
///
/// * `uniform`: seeded random rows per class.
/// * `herding`: greedily keeps the selected feature mean close to the class mean.
/// * `kcenter`: farthest-point traversal from the lowest-index class member.
/// * `least_confidence`, `entropy`, `margin`: highest uncertainty first.
/// * `craig`: facility location on gradient distances alone.
///
/// Features are the model's penultimate activations.
pub fn baseline_select(method: Method, m: &ModelState, ds: &Dataset, cfg: &SelectConfig) -> Result<Selection> {
    if method == Method::LcmatS {
        return lcmat_s_select(m, ds, cfg);
    }
    check_model_data(m, ds)?;
    let parts: Vec<Vec<usize>> = ds.class_partition().into_iter().filter(|r| !r.is_empty()).collect();
    let budgets: Vec<usize> = class_budgets(&ds.class_sizes(), cfg.fraction)?
        .into_iter()
        .filter(|&b| b > 0)
        .collect();

    let profile = if method == Method::Craig {
        let all: Vec<usize> = (0..ds.len()).collect();
        Some(build_profile(m, ds, &all)?)
    } else {
        None
    };

    let picks = parts
        .par_iter()
        .zip(&budgets)
        .enumerate()
        .map(|(class_pos, (rows, &budget))| -> Result<ClassPicks> {
            let mut trace = Vec::new();
            let mut local = match method {
                Method::Uniform => {
                    let mut order: Vec<usize> = (0..rows.len()).collect();
                    Rng::derive(cfg.seed, class_pos as u64).shuffle(&mut order);
                    order.truncate(budget);
                    order
                }
                Method::Herding | Method::Kcenter => {
                    let feats: Vec<Vec<f64>> = rows.iter().map(|&i| m.features_of(ds.x(i))).collect();
                    if method == Method::Herding {
                        herding_picks(&feats, budget)
                    } else {
                        kcenter_picks(&feats, budget)
                    }
                }
                Method::LeastConfidence | Method::Entropy | Method::Margin => {
                    let scores = rows
                        .iter()
                        .map(|&i| uncertainty_score(method, &m.forward_unchecked(ds.x(i)).probs))
                        .collect::<Result<Vec<f64>>>()?;
                    let mut order: Vec<usize> = (0..rows.len()).collect();
                    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                    order.truncate(budget);
                    order
                }
                Method::Craig => {
                    let costs = gradient_cost_matrix(profile.as_ref().unwrap(), rows)?;
                    let (picks, t) = facility_greedy(&costs, budget)?;
                    trace = t;
                    picks
                }
                Method::LcmatS => unreachable!(),
            };
            local.sort_unstable();
            Ok((local, trace, None))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(method, cfg, &parts, picks))
}

/// `per_class` seeded random rows from every class, sorted.
pub fn uniform_per_class(ds: &Dataset, per_class: usize, seed: u64) -> Result<Vec<usize>> {
    if per_class == 0 {
        return Err(invalid("per_class must be at least 1"));
    }
    let mut out = Vec::with_capacity(per_class * ds.class_count());
    for (class, mut rows) in ds.class_partition().into_iter().enumerate() {
        if rows.len() < per_class {
            return Err(invalid(format!(
                "class {class} has {} rows, fewer than per_class = {per_class}",
                rows.len()
            )));
        }
        Rng::derive(seed, class as u64).shuffle(&mut rows);
        out.extend_from_slice(&rows[..per_class]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Dispatches to LCMat-S or a baseline.
pub fn select(method: Method, m: &ModelState, ds: &Dataset, cfg: &SelectConfig) -> Result<Selection> {
    baseline_select(method, m, ds, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_costs(points: &[f64]) -> CostMatrix {
        let n = points.len();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, (points[i] - points[j]).abs());
            }
        }
        CostMatrix::from_costs(m).unwrap()
    }

    #[test]
    fn budgets_are_proportional() {
        assert_eq!(class_budgets(&[50, 50], 0.2).unwrap(), vec![10, 10]);
        assert_eq!(class_budgets(&[10, 10, 10], 0.1).unwrap(), vec![1, 1, 1]);
        // total 4 over (5, 3, 2): quotas 2.0, 1.2, 0.8 → floors 2,1,0; remainder to class 2
        assert_eq!(class_budgets(&[5, 3, 2], 0.4).unwrap(), vec![2, 1, 1]);
        // equal remainders: lowest class id wins
        assert_eq!(class_budgets(&[3, 3, 3, 3], 0.5).unwrap(), vec![2, 2, 1, 1]);
        assert!(matches!(class_budgets(&[100, 2], 0.01), Err(Error::ZeroBudget { class: 1, .. })));
        assert!(class_budgets(&[4, 4], 0.0).is_err());
        assert_eq!(class_budgets(&[4, 7], 1.0).unwrap(), vec![4, 7]);
    }

    #[test]
    fn one_element_and_duplicates() {
        let c = line_costs(&[3.0]);
        assert_eq!(c.costs.get(0, 0), 0.0);
        let c = line_costs(&[1.0, 1.0, 5.0]);
        assert_eq!(c.costs.get(0, 1), 0.0);
    }

    #[test]
    fn greedy_full_budget_covers_everything() {
        let c = line_costs(&[0.0, 1.0, 4.0, 9.0]);
        let (mut picks, trace) = facility_greedy(&c, 4).unwrap();
        picks.sort_unstable();
        assert_eq!(picks, vec![0, 1, 2, 3]);
        assert_eq!(c.coverage_cost(&picks), 0.0);
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(facility_greedy(&c, 5).is_err());
        assert!(facility_greedy(&c, 0).is_err());
    }

    #[test]
    fn greedy_single_pick_is_medoid() {
        let c = line_costs(&[2.0, 2.0, 10.0]);
        assert_eq!(facility_greedy(&c, 1).unwrap().0, vec![0]);
    }

    #[test]
    fn lazy_matches_plain_on_ties() {
        // many exact ties: evenly spaced points and duplicates
        let c = line_costs(&[0.0, 1.0, 2.0, 3.0, 4.0, 4.0, 8.0, 8.0]);
        for m in 1..=8 {
            assert_eq!(facility_greedy(&c, m).unwrap(), facility_lazy_greedy(&c, m).unwrap());
        }
    }

    #[test]
    fn gamma_counts_nearest_members() {
        let c = line_costs(&[0.0, 0.5, 1.0, 10.0, 11.0]);
        let g = assignment_weights(&c, &[1, 3]);
        assert_eq!(g, vec![3.0, 2.0]);
    }

    #[test]
    fn uncertainty_scores() {
        let u = [0.25; 4];
        assert!((uncertainty_score(Method::Entropy, &u).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(uncertainty_score(Method::LeastConfidence, &[0.7, 0.2, 0.1]).unwrap(), 1.0 - 0.7);
        let m = uncertainty_score(Method::Margin, &[0.5, 0.3, 0.2]).unwrap();
        assert!((m - 0.8).abs() < 1e-15);
        assert!(uncertainty_score(Method::Craig, &u).is_err());
    }

    #[test]
    fn kcenter_picks_extremes() {
        let feats = vec![vec![0.0], vec![1.0], vec![10.0]];
        assert_eq!(kcenter_picks(&feats, 2), vec![0, 2]);
        let feats = vec![vec![5.0], vec![0.0], vec![10.0]];
        // first pick is the lowest index; the next is the farthest
        assert_eq!(kcenter_picks(&feats, 2), vec![0, 1]);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("gradmatch".parse::<Method>().is_err());
    }
}

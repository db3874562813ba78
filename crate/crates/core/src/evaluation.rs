//! Retrain-and-test harness: train a fresh model on a reduced set and report
//! test accuracy per seed.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condensation::{lcmat_c_condense, CondenseConfig};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::model::{train, Architecture, ModelState, TrainConfig};
use crate::numerics::{derive_seed, mean_std};
use crate::selection::{select, uniform_per_class, Method, SelectConfig};

const PRETRAIN_STREAM: u64 = 11;
const RETRAIN_STREAM: u64 = 12;

/// Size of a reduced set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Fraction(f64),
    PerClass(usize),
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Fraction(x) => write!(f, "{x}"),
            Budget::PerClass(k) => write!(f, "{k}/class"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub budget: Budget,
    pub seeds: Vec<u64>,
    /// Test accuracy per seed; `None` where that seed failed.
    pub accuracies: Vec<Option<f64>>,
    pub failures: Vec<SeedFailure>,
    /// Over the seeds that succeeded.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub train_config: TrainConfig,
}

impl EvalReport {
    fn from_outcomes(
        method: impl Into<String>,
        budget: Budget,
        seeds: &[u64],
        outcomes: Vec<Result<f64>>,
        train_config: TrainConfig,
    ) -> Self {
        let mut accuracies = Vec::with_capacity(seeds.len());
        let mut failures = Vec::new();
        for (&seed, outcome) in seeds.iter().zip(outcomes) {
            match outcome {
                Ok(a) => accuracies.push(Some(a)),
                Err(e) => {
                    accuracies.push(None);
                    failures.push(SeedFailure {
                        seed,
                        error: e.to_string(),
                    });
                }
            }
        }
        let ok: Vec<f64> = accuracies.iter().flatten().copied().collect();
        let (mean, std) = if ok.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&ok);
            (Some(m), Some(s))
        };
        Self {
            method: method.into(),
            budget,
            seeds: seeds.to_vec(),
            accuracies,
            failures,
            mean,
            std,
            train_config,
        }
    }
}

/// Epochs for a reduced set: `clamp(round(epochs / fraction), epochs, 20·epochs)`,
/// keeping the number of gradient steps roughly fixed.
pub fn scaled_epochs(epochs: usize, fraction: f64) -> usize {
    if fraction.is_nan() || fraction <= 0.0 {
        return epochs * 20;
    }
    ((epochs as f64 / fraction).round() as usize).clamp(epochs, 20 * epochs)
}

/// Shared settings of the evaluation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub arch: Architecture,
    /// Training of the model whose curvature drives selection.
    pub pretrain: TrainConfig,
    /// Training of the fresh model on the reduced set (epochs before scaling).
    pub train: TrainConfig,
    pub select: SelectConfig,
    pub scale_epochs: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::LinearProbe,
            // brief pretraining keeps per-sample gradients informative
            pretrain: TrainConfig {
                epochs: 2,
                learning_rate: 0.002,
                ..TrainConfig::default()
            },
            train: TrainConfig::default(),
            select: SelectConfig::default(),
            scale_epochs: true,
        }
    }
}

fn check_pair(train_ds: &Dataset, test_ds: &Dataset) -> Result<()> {
    if test_ds.is_empty() {
        return Err(Error::Empty("test set is empty".into()));
    }
    if train_ds.dim() != test_ds.dim() || train_ds.class_count() != test_ds.class_count() {
        return Err(invalid("train and test sets have different shapes"));
    }
    Ok(())
}

/// Trains a fresh model (initialized from `seed`) and returns its test accuracy.
pub fn retrain_accuracy(
    reduced: &Dataset,
    weights: Option<&[f64]>,
    test_ds: &Dataset,
    arch: Architecture,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let m = ModelState::init(arch, reduced.dim(), reduced.class_count(), derive_seed(seed, RETRAIN_STREAM))?;
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let trained = train(&m, reduced, &cfg, weights)?;
    trained.model.accuracy(test_ds)
}

/// Evaluates a fixed reduced set across seeds; only the retraining varies.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_reduction(
    label: &str,
    budget: Budget,
    reduced: &Dataset,
    weights: Option<&[f64]>,
    test_ds: &Dataset,
    arch: Architecture,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<EvalReport> {
    if reduced.is_empty() {
        return Err(Error::Empty("reduced set is empty".into()));
    }
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    check_pair(reduced, test_ds)?;
    cfg.validate()?;
    let outcomes = seeds
        .par_iter()
        .map(|&s| retrain_accuracy(reduced, weights, test_ds, arch, cfg, s))
        .collect();
    Ok(EvalReport::from_outcomes(label, budget, seeds, outcomes, cfg.clone()))
}

/// Model pretrained on the full training set for one seed.
pub fn pretrain(train_ds: &Dataset, cfg: &EvalConfig, seed: u64) -> Result<ModelState> {
    let m = ModelState::init(
        cfg.arch,
        train_ds.dim(),
        train_ds.class_count(),
        derive_seed(seed, PRETRAIN_STREAM),
    )?;
    let pcfg = TrainConfig {
        seed,
        ..cfg.pretrain.clone()
    };
    Ok(train(&m, train_ds, &pcfg, None)?.model)
}

fn selection_accuracy(
    method: Method,
    fraction: f64,
    pretrained: &Result<ModelState>,
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<f64> {
    let model = pretrained.as_ref().map_err(|e| Error::InvalidArgument(format!("pretraining failed: {e}")))?;
    let scfg = SelectConfig {
        fraction,
        seed,
        ..cfg.select.clone()
    };
    let sel = select(method, model, train_ds, &scfg)?;
    let reduced = train_ds.subset(&sel.indices);
    let weights = if cfg.select.weighted { sel.weights.as_deref() } else { None };
    let tcfg = TrainConfig {
        epochs: if cfg.scale_epochs {
            scaled_epochs(cfg.train.epochs, fraction)
        } else {
            cfg.train.epochs
        },
        ..cfg.train.clone()
    };
    retrain_accuracy(&reduced, weights, test_ds, cfg.arch, &tcfg, seed)
}

/// Cell marker in a comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Best,
    SecondBest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub report: EvalReport,
    pub mark: Option<Mark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub methods: Vec<Method>,
    pub fractions: Vec<f64>,
    /// Row-major: `cells[i * fractions.len() + j]` is method `i` at fraction `j`.
    pub cells: Vec<Cell>,
}

impl ComparisonTable {
    pub fn cell(&self, method: usize, fraction: usize) -> &Cell {
        &self.cells[method * self.fractions.len() + fraction]
    }
}

/// Marks the best and second-best mean in each fraction column. Equal means
/// go to the earlier method.
fn mark_columns(cells: &mut [Cell], methods: usize, fractions: usize) {
    for j in 0..fractions {
        let mut order: Vec<usize> = (0..methods).filter(|&i| cells[i * fractions + j].report.mean.is_some()).collect();
        order.sort_by(|&a, &b| {
            let ma = cells[a * fractions + j].report.mean.unwrap();
            let mb = cells[b * fractions + j].report.mean.unwrap();
            mb.total_cmp(&ma).then(a.cmp(&b))
        });
        for (rank, &i) in order.iter().take(2).enumerate() {
            cells[i * fractions + j].mark = Some(if rank == 0 { Mark::Best } else { Mark::SecondBest });
        }
    }
}

/// Full protocol per seed: pretrain on the training set, select, retrain a
/// fresh model on the selection, measure test accuracy. Pretrained models are
/// shared across methods and fractions for the same seed.
pub fn compare_methods(
    methods: &[Method],
    fractions: &[f64],
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &EvalConfig,
    seeds: &[u64],
) -> Result<ComparisonTable> {
    if methods.is_empty() || fractions.is_empty() || seeds.is_empty() {
        return Err(invalid("need at least one method, fraction and seed"));
    }
    check_pair(train_ds, test_ds)?;
    cfg.pretrain.validate()?;
    cfg.train.validate()?;
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(invalid(format!("fraction must lie in (0, 1], got {f}")));
        }
    }
    let pretrained: Vec<Result<ModelState>> = seeds.par_iter().map(|&s| pretrain(train_ds, cfg, s)).collect();

    let jobs: Vec<(usize, usize, usize)> = (0..methods.len())
        .flat_map(|i| (0..fractions.len()).flat_map(move |j| (0..seeds.len()).map(move |k| (i, j, k))))
        .collect();
    let mut outcomes: Vec<Option<Result<f64>>> = jobs
        .par_iter()
        .map(|&(i, j, k)| {
            Some(selection_accuracy(
                methods[i],
                fractions[j],
                &pretrained[k],
                train_ds,
                test_ds,
                cfg,
                seeds[k],
            ))
        })
        .collect();

    let mut cells = Vec::with_capacity(methods.len() * fractions.len());
    for (i, &method) in methods.iter().enumerate() {
        for (j, &fraction) in fractions.iter().enumerate() {
            let base = (i * fractions.len() + j) * seeds.len();
            let per_seed: Vec<Result<f64>> = outcomes[base..base + seeds.len()]
                .iter_mut()
                .map(|o| o.take().unwrap())
                .collect();
            let tcfg = TrainConfig {
                epochs: if cfg.scale_epochs {
                    scaled_epochs(cfg.train.epochs, fraction)
                } else {
                    cfg.train.epochs
                },
                ..cfg.train.clone()
            };
            cells.push(Cell {
                report: EvalReport::from_outcomes(method.tag(), Budget::Fraction(fraction), seeds, per_seed, tcfg),
                mark: None,
            });
        }
    }
    mark_columns(&mut cells, methods.len(), fractions.len());
    Ok(ComparisonTable {
        methods: methods.to_vec(),
        fractions: fractions.to_vec(),
        cells,
    })
}

/// Condenses with each seed, then retrains on the synthetic set with the
/// same seed.
pub fn evaluate_condensation(
    train_ds: &Dataset,
    test_ds: &Dataset,
    condense: &CondenseConfig,
    arch: Architecture,
    train_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    check_pair(train_ds, test_ds)?;
    condense.validate()?;
    train_cfg.validate()?;
    let outcomes = seeds
        .par_iter()
        .map(|&seed| {
            let ccfg = CondenseConfig {
                seed,
                ..condense.clone()
            };
            let (s, _) = lcmat_c_condense(train_ds, &ccfg)?;
            retrain_accuracy(&s.to_dataset("condensed")?, None, test_ds, arch, train_cfg, seed)
        })
        .collect();
    Ok(EvalReport::from_outcomes(
        "lcmat_c",
        Budget::PerClass(condense.per_class),
        seeds,
        outcomes,
        train_cfg.clone(),
    ))
}

/// Seeded random subsets with `per_class` rows per class, one per seed.
pub fn evaluate_random_subset(
    train_ds: &Dataset,
    test_ds: &Dataset,
    per_class: usize,
    arch: Architecture,
    train_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    check_pair(train_ds, test_ds)?;
    train_cfg.validate()?;
    let outcomes = seeds
        .par_iter()
        .map(|&seed| {
            let rows = uniform_per_class(train_ds, per_class, seed)?;
            retrain_accuracy(&train_ds.subset(&rows), None, test_ds, arch, train_cfg, seed)
        })
        .collect();
    Ok(EvalReport::from_outcomes(
        "uniform",
        Budget::PerClass(per_class),
        seeds,
        outcomes,
        train_cfg.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_scaling_clamps() {
        assert_eq!(scaled_epochs(10, 1.0), 10);
        assert_eq!(scaled_epochs(10, 0.5), 20);
        assert_eq!(scaled_epochs(10, 0.01), 200);
        assert_eq!(scaled_epochs(10, 0.3), 33);
    }

    #[test]
    fn report_stats_skip_failures() {
        let r = EvalReport::from_outcomes(
            "x",
            Budget::Fraction(0.1),
            &[1, 2, 3],
            vec![Ok(0.5), Err(Error::Diverged { epoch: 3 }), Ok(0.7)],
            TrainConfig::default(),
        );
        assert_eq!(r.accuracies, vec![Some(0.5), None, Some(0.7)]);
        assert_eq!(r.failures.len(), 1);
        assert!((r.mean.unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn marks_best_two() {
        let mk = |m: f64| Cell {
            report: EvalReport::from_outcomes("x", Budget::Fraction(0.1), &[0], vec![Ok(m)], TrainConfig::default()),
            mark: None,
        };
        let mut cells = vec![mk(0.2), mk(0.9), mk(0.5)];
        mark_columns(&mut cells, 3, 1);
        let marks: Vec<_> = cells.iter().map(|c| c.mark).collect();
        assert_eq!(marks, vec![None, Some(Mark::Best), Some(Mark::SecondBest)]);
    }
}

//! Effective run configurations. Each subcommand reads optional TOML from
//! `--config`, then lets explicit flags override individual keys. The resolved
//! struct is echoed verbatim in the report.

use std::fs;
use std::path::{Path, PathBuf};

use lcmat_core::condensation::{CondenseConfig, DistanceKind};
use lcmat_core::data::LabelColumn;
use lcmat_core::evaluation::EvalConfig;
use lcmat_core::model::{Architecture, TrainConfig};
use lcmat_core::oracle::{Fault, VerifyConfig};
use lcmat_core::selection::{Method, SelectConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Architecture as its short string form (`linear`, `mlp:<hidden>`).
mod arch_str {
    use lcmat_core::model::Architecture;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Architecture, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(a)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Architecture, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn default_label_column() -> LabelColumn {
    LabelColumn::Name("label".into())
}

fn pretrain_default() -> TrainConfig {
    EvalConfig::default().pretrain
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenRun {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
    /// Dataset file; `.csv` writes CSV, anything else LCD1.
    pub output: PathBuf,
    pub out: PathBuf,
}

impl Default for GenRun {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 250,
            dim: 32,
            separation: 3.0,
            seed: 7,
            output: "gaussian.lcd".into(),
            out: "gen_report.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectRun {
    pub data: Option<PathBuf>,
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub standardize: bool,
    pub method: Method,
    pub fraction: f64,
    pub rho: f64,
    pub subdims: usize,
    pub weighted: bool,
    pub seed: u64,
    #[serde(with = "arch_str")]
    pub arch: Architecture,
    pub pretrain: TrainConfig,
    /// Pretrained LCM1 model; skips pretraining when set.
    pub model: Option<PathBuf>,
    pub save_model: Option<PathBuf>,
    pub profile_out: Option<PathBuf>,
    pub subset_out: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for SelectRun {
    fn default() -> Self {
        let s = SelectConfig::default();
        Self {
            data: None,
            label_column: default_label_column(),
            has_header: true,
            standardize: true,
            method: Method::LcmatS,
            fraction: s.fraction,
            rho: s.rho,
            subdims: s.subdims,
            weighted: s.weighted,
            seed: s.seed,
            arch: Architecture::LinearProbe,
            pretrain: pretrain_default(),
            model: None,
            save_model: None,
            profile_out: None,
            subset_out: None,
            out: "select_report.json".into(),
        }
    }
}

impl SelectRun {
    pub fn select_config(&self) -> SelectConfig {
        SelectConfig {
            fraction: self.fraction,
            rho: self.rho,
            subdims: self.subdims,
            weighted: self.weighted,
            seed: self.seed,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            arch: self.arch,
            pretrain: self.pretrain.clone(),
            select: self.select_config(),
            ..EvalConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CondenseRun {
    pub data: Option<PathBuf>,
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub standardize: bool,
    pub per_class: usize,
    pub rho: f64,
    pub outer_loops: usize,
    pub inner_steps: usize,
    pub data_lr: f64,
    pub model_lr: f64,
    pub distance: DistanceKind,
    #[serde(with = "arch_str")]
    pub arch: Architecture,
    pub init_scale: f64,
    pub seed: u64,
    /// Synthetic set in the raw input space; `.csv` writes CSV, else LCD1.
    pub output: PathBuf,
    pub out: PathBuf,
}

impl Default for CondenseRun {
    fn default() -> Self {
        let c = CondenseConfig::default();
        Self {
            data: None,
            label_column: default_label_column(),
            has_header: true,
            standardize: true,
            per_class: c.per_class,
            rho: c.rho,
            outer_loops: c.outer_loops,
            inner_steps: c.inner_steps,
            data_lr: c.data_lr,
            model_lr: c.model_lr,
            distance: c.distance,
            arch: c.arch,
            init_scale: c.init_scale,
            seed: c.seed,
            output: "condensed.lcd".into(),
            out: "condense_report.json".into(),
        }
    }
}

impl CondenseRun {
    pub fn condense_config(&self) -> CondenseConfig {
        CondenseConfig {
            per_class: self.per_class,
            rho: self.rho,
            outer_loops: self.outer_loops,
            inner_steps: self.inner_steps,
            data_lr: self.data_lr,
            model_lr: self.model_lr,
            distance: self.distance,
            arch: self.arch,
            init_scale: self.init_scale,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateRun {
    pub data: Option<PathBuf>,
    /// Separate test file; otherwise `data` is split.
    pub test: Option<PathBuf>,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub standardize: bool,
    pub methods: Vec<Method>,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub rho: f64,
    pub subdims: usize,
    pub weighted: bool,
    #[serde(with = "arch_str")]
    pub arch: Architecture,
    pub pretrain: TrainConfig,
    pub train: TrainConfig,
    pub scale_epochs: bool,
    /// Also retrain on the whole training set per seed.
    pub reference: bool,
    pub out: PathBuf,
}

impl Default for EvaluateRun {
    fn default() -> Self {
        let s = SelectConfig::default();
        Self {
            data: None,
            test: None,
            test_fraction: 0.2,
            split_seed: 0,
            label_column: default_label_column(),
            has_header: true,
            standardize: true,
            methods: vec![Method::Uniform, Method::LcmatS],
            fractions: vec![0.01, 0.05],
            seeds: (0..5).collect(),
            rho: s.rho,
            subdims: s.subdims,
            weighted: s.weighted,
            arch: Architecture::LinearProbe,
            pretrain: pretrain_default(),
            train: TrainConfig::default(),
            scale_epochs: true,
            reference: true,
            out: "evaluate_report.json".into(),
        }
    }
}

impl EvaluateRun {
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            arch: self.arch,
            pretrain: self.pretrain.clone(),
            train: self.train.clone(),
            select: SelectConfig {
                rho: self.rho,
                subdims: self.subdims,
                weighted: self.weighted,
                ..SelectConfig::default()
            },
            scale_epochs: self.scale_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyRun {
    pub seed: u64,
    pub fd_instances: usize,
    pub identity_instances: usize,
    pub bound_instances: usize,
    pub greedy_instances: usize,
    pub trials: usize,
    pub rho: f64,
    pub n_dirs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault_injection: Option<Fault>,
    pub out: PathBuf,
}

impl Default for VerifyRun {
    fn default() -> Self {
        let v = VerifyConfig::default();
        Self {
            seed: v.seed,
            fd_instances: v.fd_instances,
            identity_instances: v.identity_instances,
            bound_instances: v.bound_instances,
            greedy_instances: v.greedy_instances,
            trials: v.trials,
            rho: v.rho,
            n_dirs: v.n_dirs,
            fault_injection: None,
            out: "verify_report.json".into(),
        }
    }
}

impl VerifyRun {
    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            seed: self.seed,
            fd_instances: self.fd_instances,
            identity_instances: self.identity_instances,
            bound_instances: self.bound_instances,
            greedy_instances: self.greedy_instances,
            trials: self.trials,
            rho: self.rho,
            n_dirs: self.n_dirs,
            fault: self.fault_injection,
        }
    }
}

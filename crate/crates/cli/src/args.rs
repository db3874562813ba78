use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lcmat_core::condensation::DistanceKind;
use lcmat_core::data::LabelColumn;
use lcmat_core::model::Architecture;
use lcmat_core::oracle::Fault;
use lcmat_core::selection::Method;

use crate::config::{CondenseRun, EvaluateRun, GenRun, SelectRun, VerifyRun};

#[derive(Debug, Parser)]
#[command(name = "lcmat", version, about = "Curvature-matched coreset selection and dataset condensation")]
pub struct Cli {
    /// TOML file with the subcommand's settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Also write a flattened CSV table next to the JSON report.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Directory for relative output paths.
    #[arg(long, global = true, env = "LCMAT_OUTPUT_DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select a class-balanced coreset.
    Select(SelectArgs),
    /// Learn a synthetic set by gradient and gradient-variance matching.
    Condense(CondenseArgs),
    /// Compare selectors by retraining on their subsets.
    Evaluate(EvaluateArgs),
    /// Run the numerical oracle battery.
    Verify(VerifyArgs),
    /// Write a seeded Gaussian-mixture dataset.
    Gen(GenArgs),
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: lcmat_core::Error| e.to_string())
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|e: lcmat_core::Error| e.to_string())
}

fn parse_distance(s: &str) -> Result<DistanceKind, String> {
    s.parse().map_err(|e: lcmat_core::Error| e.to_string())
}

fn parse_label_column(s: &str) -> Result<LabelColumn, String> {
    Ok(s.parse().unwrap_or_else(|never| match never {}))
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    match s {
        "hessian-diag" => Ok(Fault::HessianDiag),
        _ => Err(format!("unknown fault {s:?}")),
    }
}

/// Copies every flag that was given onto the config field of the same name.
macro_rules! override_fields {
    ($args:expr, $cfg:expr, $($field:ident),* $(,)?) => {
        $(
            if let Some(v) = $args.$field.clone() {
                $cfg.$field = v;
            }
        )*
    };
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset file (LCD1, or CSV by extension).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CSV label column, by index or header name.
    #[arg(long, value_parser = parse_label_column)]
    pub label_column: Option<LabelColumn>,
    /// CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Skip per-dimension standardization.
    #[arg(long)]
    pub no_standardize: bool,
}

macro_rules! apply_data_args {
    ($d:expr, $cfg:expr) => {
        if let Some(p) = $d.data.clone() {
            $cfg.data = Some(p);
        }
        if let Some(l) = $d.label_column.clone() {
            $cfg.label_column = l;
        }
        if $d.no_header {
            $cfg.has_header = false;
        }
        if $d.no_standardize {
            $cfg.standardize = false;
        }
    };
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Number of curvature sub-dimensions.
    #[arg(long)]
    pub subdims: Option<usize>,
    /// Compute assignment weights γ.
    #[arg(long)]
    pub weighted: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `linear` or `mlp:<hidden>`.
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<Architecture>,
    #[command(flatten)]
    pub pretrain: PretrainArgs,
    /// Use this LCM1 model instead of pretraining.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    /// Write the per-sample curvature profile (LCP1).
    #[arg(long)]
    pub profile_out: Option<PathBuf>,
    /// Write the selected rows as a dataset.
    #[arg(long)]
    pub subset_out: Option<PathBuf>,
    /// Report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SelectArgs {
    pub fn apply(&self, cfg: &mut SelectRun) {
        apply_data_args!(self.data, cfg);
        override_fields!(self, cfg, method, fraction, rho, subdims, seed, arch, out);
        if self.weighted {
            cfg.weighted = true;
        }
        if let Some(e) = self.pretrain.pretrain_epochs {
            cfg.pretrain.epochs = e;
        }
        if let Some(lr) = self.pretrain.pretrain_lr {
            cfg.pretrain.learning_rate = lr;
        }
        for (flag, field) in [
            (&self.model, &mut cfg.model),
            (&self.save_model, &mut cfg.save_model),
            (&self.profile_out, &mut cfg.profile_out),
            (&self.subset_out, &mut cfg.subset_out),
        ] {
            if flag.is_some() {
                field.clone_from(flag);
            }
        }
        // pretraining follows the run seed, as in the evaluation protocol
        cfg.pretrain.seed = cfg.seed;
    }
}

#[derive(Debug, Args)]
pub struct CondenseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Outer loops (θ re-initializations).
    #[arg(long = "outer")]
    pub outer_loops: Option<usize>,
    /// Inner steps per outer loop.
    #[arg(long = "inner")]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub data_lr: Option<f64>,
    #[arg(long)]
    pub model_lr: Option<f64>,
    /// `squared_l2` or `per_class_cosine`.
    #[arg(long, value_parser = parse_distance)]
    pub distance: Option<DistanceKind>,
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<Architecture>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic dataset path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CondenseArgs {
    pub fn apply(&self, cfg: &mut CondenseRun) {
        apply_data_args!(self.data, cfg);
        override_fields!(
            self,
            cfg,
            per_class,
            rho,
            outer_loops,
            inner_steps,
            data_lr,
            model_lr,
            distance,
            arch,
            init_scale,
            seed,
            output,
            out,
        );
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Test set file; without it `--data` is split.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub subdims: Option<usize>,
    #[arg(long)]
    pub weighted: bool,
    #[arg(long, value_parser = parse_arch)]
    pub arch: Option<Architecture>,
    #[command(flatten)]
    pub pretrain: PretrainArgs,
    /// Retraining epochs before scaling by 1/fraction.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Keep the same epoch count at every fraction.
    #[arg(long)]
    pub no_scale_epochs: bool,
    /// Skip the full-data reference row.
    #[arg(long)]
    pub no_reference: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvaluateArgs {
    pub fn apply(&self, cfg: &mut EvaluateRun) {
        apply_data_args!(self.data, cfg);
        override_fields!(self, cfg, test_fraction, split_seed, methods, fractions, seeds, rho, subdims, arch, out);
        if self.test.is_some() {
            cfg.test.clone_from(&self.test);
        }
        if self.weighted {
            cfg.weighted = true;
        }
        if let Some(e) = self.pretrain.pretrain_epochs {
            cfg.pretrain.epochs = e;
        }
        if let Some(lr) = self.pretrain.pretrain_lr {
            cfg.pretrain.learning_rate = lr;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.train.learning_rate = lr;
        }
        if self.no_scale_epochs {
            cfg.scale_epochs = false;
        }
        if self.no_reference {
            cfg.reference = false;
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fd_instances: Option<usize>,
    #[arg(long)]
    pub identity_instances: Option<usize>,
    #[arg(long)]
    pub bound_instances: Option<usize>,
    #[arg(long)]
    pub greedy_instances: Option<usize>,
    /// Sharpness-bound trials.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Random directions per sharpness trial.
    #[arg(long)]
    pub n_dirs: Option<usize>,
    #[arg(long, hide = true, value_parser = parse_fault)]
    pub fault_injection: Option<Fault>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl VerifyArgs {
    pub fn apply(&self, cfg: &mut VerifyRun) {
        override_fields!(
            self,
            cfg,
            seed,
            fd_instances,
            identity_instances,
            bound_instances,
            greedy_instances,
            trials,
            rho,
            n_dirs,
            out,
        );
        if self.fault_injection.is_some() {
            cfg.fault_injection = self.fault_injection;
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl GenArgs {
    pub fn apply(&self, cfg: &mut GenRun) {
        override_fields!(self, cfg, classes, per_class, dim, separation, seed, output, out);
    }
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use lcmat_core::condensation::lcmat_c_condense;
use lcmat_core::curvature::{build_profile, loss_gap};
use lcmat_core::data::{
    load_binary, load_csv, save_binary, stratified_split, synth_gaussian_mixture, write_csv, Dataset, LabelColumn,
    SplitSpec, Standardizer,
};
use lcmat_core::evaluation::{compare_methods, evaluate_reduction, pretrain, Budget, ComparisonTable, EvalReport, Mark};
use lcmat_core::model::ModelState;
use lcmat_core::numerics::Rng;
use lcmat_core::oracle::{run_battery, VerifyReport};
use lcmat_core::selection::{class_budgets, facility_bound_check, lcmat_s_run, select, Method};
use serde::Serialize;

use crate::args::Format;
use crate::config::{CondenseRun, EvaluateRun, GenRun, SelectRun, VerifyRun};
use crate::error::{CliError, CliResult};
use crate::report::{cell, resolve, write_json, write_table, Report, Table};

/// Where and how reports are written.
pub struct Output {
    pub dir: Option<PathBuf>,
    pub format: Format,
}

impl Output {
    fn path(&self, p: &Path) -> PathBuf {
        resolve(self.dir.as_deref(), p)
    }

    fn emit<C: Serialize, R: Serialize>(
        &self,
        command: &str,
        config: &C,
        result: &R,
        out: &Path,
        started: Instant,
        table: impl FnOnce() -> Table,
    ) -> CliResult<()> {
        let path = self.path(out);
        let report = Report::new(command, config, result, started.elapsed().as_secs_f64());
        write_json(&path, &report)?;
        if self.format == Format::Csv {
            write_table(&path.with_extension("csv"), &table())?;
        }
        Ok(())
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn load_dataset(path: Option<&Path>, label: &LabelColumn, header: bool) -> CliResult<Dataset> {
    let path = path.ok_or_else(|| CliError::Config("no dataset given (use --data)".into()))?;
    std::fs::metadata(path).map_err(crate::error::io_context(format!("reading {}", path.display())))?;
    Ok(if is_csv(path) {
        load_csv(path, label, header)?
    } else {
        load_binary(path)?
    })
}

fn save_dataset(ds: &Dataset, path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(crate::error::io_context(format!("creating {}", parent.display())))?;
    }
    if is_csv(path) {
        write_csv(ds, path, true)?;
    } else {
        save_binary(ds, path)?;
    }
    Ok(())
}

fn standardizer(ds: &Dataset, enabled: bool) -> CliResult<Standardizer> {
    Ok(if enabled {
        Standardizer::fit(ds)?
    } else {
        Standardizer::identity(ds.dim())
    })
}

#[derive(Debug, Serialize)]
struct DataSummary {
    rows: usize,
    dim: usize,
    classes: usize,
    class_sizes: Vec<usize>,
}

impl DataSummary {
    fn of(ds: &Dataset) -> Self {
        Self {
            rows: ds.len(),
            dim: ds.dim(),
            classes: ds.class_count(),
            class_sizes: ds.class_sizes(),
        }
    }
}

#[derive(Debug, Serialize)]
struct GenResult {
    dataset: DataSummary,
}

pub fn gen(cfg: &GenRun, out: &Output) -> CliResult<()> {
    let started = Instant::now();
    let ds = synth_gaussian_mixture(&mut Rng::new(cfg.seed), cfg.classes, cfg.per_class, cfg.dim, cfg.separation)?;
    save_dataset(&ds, &out.path(&cfg.output))?;
    let result = GenResult {
        dataset: DataSummary::of(&ds),
    };
    out.emit("gen", cfg, &result, &cfg.out, started, || Table {
        header: vec!["class", "rows"],
        rows: ds
            .class_sizes()
            .iter()
            .enumerate()
            .map(|(c, n)| vec![c.to_string(), n.to_string()])
            .collect(),
    })
}

#[derive(Debug, Serialize)]
struct BoundRow {
    class: usize,
    lhs: f64,
    rhs: f64,
    holds: bool,
}

#[derive(Debug, Serialize)]
struct SelectResult {
    dataset: DataSummary,
    method: Method,
    budgets: Vec<usize>,
    indices: Vec<usize>,
    /// Assignment weights γ, aligned with `indices`.
    weights: Option<Vec<f64>>,
    /// Facility objective after each greedy pick, per class.
    objective_trace: Vec<Vec<f64>>,
    /// Gradient and curvature matching bound per class (curvature selector only).
    bound_checks: Vec<BoundRow>,
    /// |L(T) − L(S)| at the selection model.
    loss_gap: f64,
}

pub fn select_cmd(cfg: &SelectRun, out: &Output) -> CliResult<()> {
    let started = Instant::now();
    let raw = load_dataset(cfg.data.as_deref(), &cfg.label_column, cfg.has_header)?;
    let ds = standardizer(&raw, cfg.standardize)?.apply(&raw)?;
    let scfg = cfg.select_config();
    let budgets = class_budgets(&ds.class_sizes(), scfg.fraction)?;
    let model = match &cfg.model {
        Some(p) => ModelState::load(p)?,
        None => pretrain(&ds, &cfg.eval_config(), cfg.seed)?,
    };
    if let Some(p) = &cfg.save_model {
        model.save(out.path(p))?;
    }

    let mut bound_checks = Vec::new();
    let (selection, profile) = if cfg.method == Method::LcmatS {
        let run = lcmat_s_run(&model, &ds, &scfg)?;
        for class in &run.classes {
            let chk = facility_bound_check(&run.profile.restrict(&class.rows), &class.subdims, scfg.rho, &class.picks)?;
            bound_checks.push(BoundRow {
                class: ds.y(class.rows[0]),
                lhs: chk.lhs,
                rhs: chk.rhs,
                holds: chk.holds,
            });
        }
        (run.selection, Some(run.profile))
    } else {
        (select(cfg.method, &model, &ds, &scfg)?, None)
    };
    if let Some(p) = &cfg.profile_out {
        let profile = match profile {
            Some(pr) => pr,
            None => build_profile(&model, &ds, &(0..ds.len()).collect::<Vec<_>>())?,
        };
        profile.save(out.path(p))?;
    }
    if let Some(p) = &cfg.subset_out {
        save_dataset(&raw.subset(&selection.indices), &out.path(p))?;
    }

    let result = SelectResult {
        dataset: DataSummary::of(&ds),
        method: cfg.method,
        budgets,
        loss_gap: loss_gap(&model, &ds, &ds.subset(&selection.indices))?,
        indices: selection.indices,
        weights: selection.weights,
        objective_trace: selection.objective_trace,
        bound_checks,
    };
    out.emit("select", cfg, &result, &cfg.out, started, || Table {
        header: vec!["index", "class", "weight"],
        rows: result
            .indices
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                vec![
                    i.to_string(),
                    ds.y(i).to_string(),
                    cell(result.weights.as_ref().map(|w| w[k])),
                ]
            })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
struct CondenseResult {
    dataset: DataSummary,
    synthetic_rows: usize,
    /// Objective at every inner step, outer loops concatenated.
    loss_trace: Vec<f64>,
}

pub fn condense_cmd(cfg: &CondenseRun, out: &Output) -> CliResult<()> {
    let started = Instant::now();
    let raw = load_dataset(cfg.data.as_deref(), &cfg.label_column, cfg.has_header)?;
    let st = standardizer(&raw, cfg.standardize)?;
    let ds = st.apply(&raw)?;
    let ccfg = cfg.condense_config();
    let (synthetic, trace) = lcmat_c_condense(&ds, &ccfg)?;
    let back = st.invert(&synthetic.to_dataset("condensed")?)?;
    save_dataset(&back, &out.path(&cfg.output))?;
    let result = CondenseResult {
        dataset: DataSummary::of(&ds),
        synthetic_rows: synthetic.len(),
        loss_trace: trace,
    };
    let inner = cfg.inner_steps.max(1);
    out.emit("condense", cfg, &result, &cfg.out, started, || Table {
        header: vec!["step", "outer", "inner", "objective"],
        rows: result
            .loss_trace
            .iter()
            .enumerate()
            .map(|(k, v)| vec![k.to_string(), (k / inner).to_string(), (k % inner).to_string(), v.to_string()])
            .collect(),
    })
}

#[derive(Debug, Serialize)]
struct EvaluateResult {
    train: DataSummary,
    test: DataSummary,
    table: ComparisonTable,
    /// Retraining on the whole training set, per seed.
    reference: Option<EvalReport>,
}

fn mark_str(m: Option<Mark>) -> &'static str {
    match m {
        Some(Mark::Best) => "best",
        Some(Mark::SecondBest) => "second",
        None => "",
    }
}

pub fn evaluate_cmd(cfg: &EvaluateRun, out: &Output) -> CliResult<()> {
    let started = Instant::now();
    let full = load_dataset(cfg.data.as_deref(), &cfg.label_column, cfg.has_header)?;
    let (train_raw, test_raw) = match &cfg.test {
        Some(p) => (full, load_dataset(Some(p), &cfg.label_column, cfg.has_header)?),
        None => stratified_split(
            &full,
            &SplitSpec {
                test_fraction: cfg.test_fraction,
                seed: cfg.split_seed,
                stratified: true,
            },
        )?,
    };
    let st = standardizer(&train_raw, cfg.standardize)?;
    let (train_ds, test_ds) = (st.apply(&train_raw)?, st.apply(&test_raw)?);
    let ecfg = cfg.eval_config();
    let table = compare_methods(&cfg.methods, &cfg.fractions, &train_ds, &test_ds, &ecfg, &cfg.seeds)?;
    let reference = if cfg.reference {
        Some(evaluate_reduction(
            "full",
            Budget::Fraction(1.0),
            &train_ds,
            None,
            &test_ds,
            cfg.arch,
            &cfg.train,
            &cfg.seeds,
        )?)
    } else {
        None
    };
    let result = EvaluateResult {
        train: DataSummary::of(&train_ds),
        test: DataSummary::of(&test_ds),
        table,
        reference,
    };
    out.emit("evaluate", cfg, &result, &cfg.out, started, || {
        let mut rows = Vec::new();
        let mut push = |r: &EvalReport, mark: Option<Mark>| {
            for (seed, acc) in r.seeds.iter().zip(&r.accuracies) {
                rows.push(vec![
                    r.method.clone(),
                    r.budget.to_string(),
                    seed.to_string(),
                    cell(*acc),
                    cell(r.mean),
                    cell(r.std),
                    mark_str(mark).to_string(),
                ]);
            }
        };
        for c in &result.table.cells {
            push(&c.report, c.mark);
        }
        if let Some(r) = &result.reference {
            push(r, None);
        }
        Table {
            header: vec!["method", "budget", "seed", "accuracy", "mean", "std", "mark"],
            rows,
        }
    })
}

pub fn verify_cmd(cfg: &VerifyRun, out: &Output) -> CliResult<()> {
    let started = Instant::now();
    let report: VerifyReport = run_battery(&cfg.verify_config())?;
    out.emit("verify", cfg, &report, &cfg.out, started, || Table {
        header: vec!["check", "passed", "metric", "threshold", "instances"],
        rows: report
            .checks
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    c.passed.to_string(),
                    c.metric.to_string(),
                    c.threshold.to_string(),
                    c.instances.to_string(),
                ]
            })
            .collect(),
    })?;
    for c in &report.checks {
        eprintln!("{:<32} {} metric={:.3e} threshold={:.3e}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.metric, c.threshold);
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(CliError::VerifyFailed(failed.join(", ")))
    }
}

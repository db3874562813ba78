//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use lcmat_core::condensation::CondenseConfig;
use lcmat_core::data::{stratified_split, synth_gaussian_mixture, Dataset, SplitSpec, Standardizer};
use lcmat_core::evaluation::{
    compare_methods, evaluate_condensation, evaluate_random_subset, pretrain, scaled_epochs, EvalConfig, EvalReport,
};
use lcmat_core::model::{Architecture, TrainConfig};
use lcmat_core::numerics::Rng;
use lcmat_core::oracle::{
    bias_identity_battery, covariance_battery, facility_bound_battery, fd_battery, greedy_battery, mc_sharpness_vs_bound,
    random_costs, ProblemSize,
};
use lcmat_core::selection::{lcmat_s_select, select, Method, SelectConfig};
use serde_json::Value;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn pass_if(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn analytic_derivatives() -> Check {
    let start = Instant::now();
    let mut worst_g: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    for arch in [Architecture::LinearProbe, Architecture::Mlp { hidden: 4 }] {
        let e = fd_battery(1, 120, arch, None).map_err(|e| e.to_string())?;
        worst_g = worst_g.max(e.gradient);
        worst_h = worst_h.max(e.hessian_diag);
    }
    let t = start.elapsed();
    pass_if(
        worst_g <= 1e-6 && worst_h <= 1e-4 && within(t, 10.0),
        format!("120 instances/arch, gradient {worst_g:.2e} (≤1e-6), hessian diag {worst_h:.2e} (≤1e-4), {:.2}s (<10s)", t.as_secs_f64()),
    )
}

fn bias_identity() -> Check {
    let gap = bias_identity_battery(2, 120).map_err(|e| e.to_string())?;
    pass_if(gap <= 1e-12, format!("120 instances, worst gap {gap:.2e} (≤1e-12)"))
}

fn variance_identity() -> Check {
    let gap = covariance_battery(3, 120).map_err(|e| e.to_string())?;
    pass_if(gap <= 1e-12, format!("120 instances, worst gap {gap:.2e} (≤1e-12)"))
}

fn facility_bound() -> Check {
    let violations = facility_bound_battery(4, 100).map_err(|e| e.to_string())?;
    pass_if(violations == 0, format!("100 pairs, {violations} violations (=0)"))
}

fn sharpness_bound() -> Check {
    let start = Instant::now();
    let size = ProblemSize::default();
    let wide = mc_sharpness_vs_bound(&mut Rng::new(5), 100, &size, 0.05, 4096).map_err(|e| e.to_string())?;
    let narrow = mc_sharpness_vs_bound(&mut Rng::new(6), 100, &size, 1e-4, 4096).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    pass_if(
        wide.pass_rate >= 0.95 && narrow.pass_rate == 1.0 && within(t, 120.0),
        format!(
            "pass rate {:.2} at rho 0.05 (≥0.95), {:.2} at rho 1e-4 (=1), 4096 dirs x 100 trials, {:.1}s (<120s)",
            wide.pass_rate,
            narrow.pass_rate,
            t.as_secs_f64()
        ),
    )
}

fn greedy_guarantee() -> Check {
    let ratio = greedy_battery(7, 50).map_err(|e| e.to_string())?;
    let bound = 1.0 - (-1.0f64).exp();
    // diminishing returns on nested sets
    let mut bad = 0;
    for i in 0..500u64 {
        let mut rng = Rng::new(1000 + i);
        let n = 3 + (i % 8) as usize;
        let costs = random_costs(&mut rng, n).map_err(|e| e.to_string())?;
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let small = (rng.next_u64() % (n as u64 - 1)) as usize;
        let big = small + (rng.next_u64() % (n - 1 - small) as u64) as usize;
        let gain = |set: &[usize]| {
            let mut with = set.to_vec();
            with.push(order[0]);
            costs.facility_value(&with) - costs.facility_value(set)
        };
        if gain(&order[1..1 + small]) < gain(&order[1..1 + big]) - 1e-12 {
            bad += 1;
        }
    }
    pass_if(
        ratio >= bound && bad == 0,
        format!("min greedy/optimum {ratio:.4} over 50 instances (≥{bound:.4}), {bad}/500 submodularity violations"),
    )
}

fn craig_reduction() -> Check {
    let mut mismatched = Vec::new();
    for seed in 0..20u64 {
        let ds = synth_gaussian_mixture(&mut Rng::new(100 + seed), 5, 40, 8, 3.0).map_err(|e| e.to_string())?;
        let model = pretrain(&ds, &EvalConfig::default(), seed).map_err(|e| e.to_string())?;
        let cfg = SelectConfig {
            fraction: 0.1,
            rho: 0.0,
            seed,
            ..SelectConfig::default()
        };
        let a = lcmat_s_select(&model, &ds, &cfg).map_err(|e| e.to_string())?;
        let b = select(Method::Craig, &model, &ds, &cfg).map_err(|e| e.to_string())?;
        if a.indices != b.indices {
            mismatched.push(seed);
        }
    }
    pass_if(mismatched.is_empty(), format!("20 seeded runs, mismatched seeds {mismatched:?}"))
}

/// 10 classes x 250, d = 32, separation 3, stratified 80/20, standardized on train.
fn benchmark() -> (Dataset, Dataset) {
    let ds = synth_gaussian_mixture(&mut Rng::new(7), 10, 250, 32, 3.0).unwrap();
    let spec = SplitSpec {
        test_fraction: 0.2,
        seed: 7,
        stratified: true,
    };
    let (tr, te) = stratified_split(&ds, &spec).unwrap();
    let st = Standardizer::fit(&tr).unwrap();
    (st.apply(&tr).unwrap(), st.apply(&te).unwrap())
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn accs(r: &EvalReport) -> Result<Vec<f64>, String> {
    r.accuracies
        .iter()
        .map(|a| a.ok_or_else(|| format!("{}: seed failed: {:?}", r.method, r.failures)))
        .collect()
}

fn selection_quality() -> Check {
    let start = Instant::now();
    let (tr, te) = benchmark();
    let fractions = [0.01, 0.05];
    let table = compare_methods(&[Method::Uniform, Method::LcmatS], &fractions, &tr, &te, &EvalConfig::default(), &SEEDS)
        .map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (j, f) in fractions.iter().enumerate() {
        let u = accs(&table.cell(0, j).report)?;
        let l = accs(&table.cell(1, j).report)?;
        let (mu, ml) = (table.cell(0, j).report.mean.unwrap(), table.cell(1, j).report.mean.unwrap());
        let worst = u.iter().zip(&l).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
        ok &= ml >= mu && worst >= -0.005;
        parts.push(format!(
            "f={f}: lcmat_s {:.1}% vs uniform {:.1}%, worst paired seed {:+.1} pts",
            100.0 * ml,
            100.0 * mu,
            100.0 * worst
        ));
    }
    let t = start.elapsed();
    ok &= within(t, 180.0);
    pass_if(ok, format!("{}; {:.1}s (<180s)", parts.join("; "), t.as_secs_f64()))
}

fn condensation_quality() -> Check {
    let start = Instant::now();
    let (tr, te) = benchmark();
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [2usize, 5] {
        let tcfg = TrainConfig {
            epochs: scaled_epochs(30, (k * tr.class_count()) as f64 / tr.len() as f64),
            ..TrainConfig::default()
        };
        let random = evaluate_random_subset(&tr, &te, k, Architecture::LinearProbe, &tcfg, &SEEDS)
            .map_err(|e| e.to_string())?;
        let mut means = Vec::new();
        for rho in [0.0, 0.01, 0.1] {
            let ccfg = CondenseConfig {
                per_class: k,
                rho,
                ..CondenseConfig::default()
            };
            let r = evaluate_condensation(&tr, &te, &ccfg, Architecture::LinearProbe, &tcfg, &SEEDS)
                .map_err(|e| e.to_string())?;
            accs(&r)?;
            means.push(r.mean.unwrap());
        }
        let rnd = random.mean.ok_or("random baseline failed")?;
        let best_pos = means[1].max(means[2]);
        ok &= means[2] >= rnd && means[0] <= best_pos + 0.01;
        parts.push(format!(
            "k={k}: rho 0.1 {:.1}% vs random {:.1}%, rho 0 {:.1}% vs best rho>0 {:.1}%",
            100.0 * means[2],
            100.0 * rnd,
            100.0 * means[0],
            100.0 * best_pos
        ));
    }
    let t = start.elapsed();
    ok &= within(t, 300.0);
    pass_if(ok, format!("{}; {:.1}s (<300s)", parts.join("; "), t.as_secs_f64()))
}

fn run_cli(dir: &Path, threads: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lcmat"))
        .current_dir(dir)
        .env_remove("LCMAT_OUTPUT_DIR")
        .args(["--threads", threads])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

/// Report text with the trailing `timing` member removed.
fn without_timing(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if v.get("timing").is_none() {
        return Err(format!("{}: no timing field", path.display()));
    }
    let cut = text.rfind(",\n  \"timing\"").ok_or("timing is not the last member")?;
    Ok(text[..cut].to_string())
}

fn determinism() -> Check {
    let commands: [(&str, Vec<&str>); 5] = [
        ("gen", vec!["gen", "--classes", "4", "--per-class", "60", "--dim", "8", "--output", "d.lcd"]),
        ("select", vec!["select", "--data", "d.lcd", "--fraction", "0.1", "--weighted", "--profile-out", "p.lcp"]),
        ("condense", vec!["condense", "--data", "d.lcd", "--per-class", "2", "--outer", "3", "--inner", "5"]),
        (
            "evaluate",
            vec!["evaluate", "--data", "d.lcd", "--methods", "uniform,kcenter,craig,lcmat_s", "--fractions", "0.05,0.2", "--seeds", "0,1,2"],
        ),
        ("verify", vec!["verify", "--fd-instances", "20", "--identity-instances", "20", "--trials", "8", "--n-dirs", "256"]),
    ];
    let mut runs = Vec::new();
    for threads in ["1", "4", "4"] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        for (_, args) in &commands {
            run_cli(dir.path(), threads, args)?;
        }
        runs.push(dir);
    }
    let mut differing = Vec::new();
    for (name, _) in &commands {
        let report = format!("{name}_report.json");
        let first = without_timing(&runs[0].path().join(&report))?;
        for r in &runs[1..] {
            if without_timing(&r.path().join(&report))? != first {
                differing.push(report.clone());
            }
        }
    }
    for artifact in ["d.lcd", "p.lcp", "condensed.lcd"] {
        let first = std::fs::read(runs[0].path().join(artifact)).map_err(|e| e.to_string())?;
        for r in &runs[1..] {
            if std::fs::read(r.path().join(artifact)).map_err(|e| e.to_string())? != first {
                differing.push(artifact.to_string());
            }
        }
    }
    pass_if(
        differing.is_empty(),
        format!("5 commands x threads {{1, 4, 4}}, differing outputs {differing:?}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("analytic derivatives vs finite differences", analytic_derivatives),
        ("bias-block variance equals softmax MSE", bias_identity),
        ("gradient variance equals covariance diagonal", variance_identity),
        ("facility-location matching bound", facility_bound),
        ("sharpness bound pass rate", sharpness_bound),
        ("greedy approximation guarantee", greedy_guarantee),
        ("rho = 0 reduces to craig", craig_reduction),
        ("selection beats uniform on the benchmark", selection_quality),
        ("condensation beats random subsets", condensation_quality),
        ("CLI reports are deterministic", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("acceptance {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

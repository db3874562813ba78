use lcmat_core::data::{stratified_split, synth_gaussian_mixture, Dataset, SplitSpec};
use lcmat_core::evaluation::{
    compare_methods, evaluate_random_subset, retrain_accuracy, scaled_epochs, Budget, EvalConfig, Mark,
};
use lcmat_core::model::{Architecture, TrainConfig};
use lcmat_core::numerics::{mean_std, Rng};
use lcmat_core::selection::Method;

fn split() -> (Dataset, Dataset) {
    let ds = synth_gaussian_mixture(&mut Rng::new(3), 4, 40, 6, 2.5).unwrap();
    let spec = SplitSpec {
        test_fraction: 0.25,
        seed: 3,
        stratified: true,
    };
    stratified_split(&ds, &spec).unwrap()
}

fn quick_cfg() -> EvalConfig {
    EvalConfig {
        train: TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        },
        ..EvalConfig::default()
    }
}

#[test]
fn full_fraction_equals_training_on_everything() {
    let (tr, te) = split();
    let cfg = quick_cfg();
    let seeds = [0, 1, 2];
    let table = compare_methods(&[Method::Uniform, Method::LcmatS], &[1.0], &tr, &te, &cfg, &seeds).unwrap();
    for (k, &seed) in seeds.iter().enumerate() {
        let reference = retrain_accuracy(&tr, None, &te, cfg.arch, &cfg.train, seed).unwrap();
        for i in 0..2 {
            let got = table.cell(i, 0).report.accuracies[k].unwrap();
            assert_eq!(got.to_bits(), reference.to_bits());
        }
    }
}

#[test]
fn grid_is_complete_and_summaries_recompute() {
    let (tr, te) = split();
    let methods = [Method::Uniform, Method::Herding, Method::LcmatS];
    let fractions = [0.1, 0.25];
    let seeds = [0, 1, 2, 3, 4];
    let table = compare_methods(&methods, &fractions, &tr, &te, &quick_cfg(), &seeds).unwrap();
    assert_eq!(table.cells.len(), 6);
    for (i, m) in methods.iter().enumerate() {
        for (j, &f) in fractions.iter().enumerate() {
            let r = &table.cell(i, j).report;
            assert_eq!(r.method, m.tag());
            assert_eq!(r.budget, Budget::Fraction(f));
            assert_eq!(r.accuracies.len(), 5);
            assert!(r.failures.is_empty());
            assert_eq!(r.train_config.epochs, scaled_epochs(4, f));
            let accs: Vec<f64> = r.accuracies.iter().map(|a| a.unwrap()).collect();
            let (mean, std) = mean_std(&accs);
            assert_eq!(r.mean, Some(mean));
            assert_eq!(r.std, Some(std));
        }
    }
    for j in 0..2 {
        let marks: Vec<Option<Mark>> = (0..3).map(|i| table.cell(i, j).mark).collect();
        assert_eq!(marks.iter().filter(|m| **m == Some(Mark::Best)).count(), 1);
        assert_eq!(marks.iter().filter(|m| **m == Some(Mark::SecondBest)).count(), 1);
        let best = marks.iter().position(|m| *m == Some(Mark::Best)).unwrap();
        for i in 0..3 {
            assert!(table.cell(best, j).report.mean >= table.cell(i, j).report.mean);
        }
    }
    let again = compare_methods(&methods, &fractions, &tr, &te, &quick_cfg(), &seeds).unwrap();
    assert_eq!(table, again);
}

#[test]
fn duplicate_methods_give_identical_columns() {
    let (tr, te) = split();
    let table = compare_methods(&[Method::Craig, Method::Craig], &[0.1], &tr, &te, &quick_cfg(), &[0, 1]).unwrap();
    assert_eq!(table.cell(0, 0).report, table.cell(1, 0).report);
    assert_eq!(table.cell(0, 0).mark, Some(Mark::Best));
    assert_eq!(table.cell(1, 0).mark, Some(Mark::SecondBest));
}

#[test]
fn seeds_that_fail_are_reported_not_dropped() {
    let (tr, te) = split();
    // 1% of 120 rows leaves some class with nothing
    let table = compare_methods(&[Method::Uniform], &[0.01], &tr, &te, &quick_cfg(), &[0, 1]).unwrap();
    let r = &table.cell(0, 0).report;
    assert_eq!(r.accuracies, vec![None, None]);
    assert_eq!(r.failures.iter().map(|f| f.seed).collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!((r.mean, r.std), (None, None));
    assert_eq!(table.cell(0, 0).mark, None);
}

#[test]
fn random_subsets_vary_with_seed() {
    let (tr, te) = split();
    let cfg = TrainConfig::default();
    let r = evaluate_random_subset(&tr, &te, 2, Architecture::LinearProbe, &cfg, &[0, 1, 2, 3]).unwrap();
    assert_eq!(r.budget, Budget::PerClass(2));
    assert!(r.accuracies.iter().all(|a| a.is_some_and(|v| (0.0..=1.0).contains(&v))));
    let again = evaluate_random_subset(&tr, &te, 2, Architecture::LinearProbe, &cfg, &[0, 1, 2, 3]).unwrap();
    assert_eq!(r, again);
}

#[test]
fn invalid_grids_are_rejected() {
    let (tr, te) = split();
    let cfg = quick_cfg();
    assert!(compare_methods(&[], &[0.1], &tr, &te, &cfg, &[0]).is_err());
    assert!(compare_methods(&[Method::Uniform], &[1.5], &tr, &te, &cfg, &[0]).is_err());
    assert!(compare_methods(&[Method::Uniform], &[0.1], &tr, &te, &cfg, &[]).is_err());
}

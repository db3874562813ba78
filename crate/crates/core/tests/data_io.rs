use lcmat_core::data::{
    load_binary, load_csv, parse_csv, save_binary, stratified_split, synth_gaussian_mixture, write_csv, Dataset,
    LabelColumn, SplitSpec, Standardizer,
};
use lcmat_core::numerics::{Matrix, Rng};
use lcmat_core::{Error, ErrorKind};
use proptest::prelude::*;

/// Features are stored as f32 on disk.
fn as_f32(m: &Matrix) -> Matrix {
    let v = m.as_slice().iter().map(|&x| x as f32 as f64).collect();
    Matrix::from_vec(m.rows(), m.cols(), v).unwrap()
}

fn small(seed: u64) -> Dataset {
    synth_gaussian_mixture(&mut Rng::new(seed), 10, 13, 3, 2.0).unwrap()
}

#[test]
fn class_indices_select_exactly_that_label() {
    let ds = small(1);
    for c in 0..ds.class_count() {
        let rows = ds.class_indices(c);
        assert!(rows.iter().all(|&i| ds.y(i) == c));
        assert_eq!(rows.len(), (0..ds.len()).filter(|&i| ds.y(i) == c).count());
    }
}

#[test]
fn stratified_split_counts_per_class() {
    let ds = small(2);
    let spec = SplitSpec {
        test_fraction: 0.2,
        seed: 5,
        stratified: true,
    };
    let (tr, te) = stratified_split(&ds, &spec).unwrap();
    assert_eq!(tr.len() + te.len(), ds.len());
    for c in 0..10 {
        let want = 13.0 * 0.2;
        let got = te.class_indices(c).len() as f64;
        assert!((got - want).abs() <= 1.0, "class {c}: {got}");
    }
    // every original row lands in exactly one half
    let mut rows: Vec<Vec<u64>> = tr
        .features()
        .iter_rows()
        .chain(te.features().iter_rows())
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    let mut orig: Vec<Vec<u64>> = ds.features().iter_rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    rows.sort();
    orig.sort();
    assert_eq!(rows, orig);
    assert_eq!(stratified_split(&ds, &spec).unwrap().1, te);
}

#[test]
fn binary_and_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(3);
    let bin = dir.path().join("d.lcd");
    save_binary(&ds, &bin).unwrap();
    let back = load_binary(&bin).unwrap();
    assert_eq!(back.features(), &as_f32(ds.features()));
    assert_eq!(back.labels(), ds.labels());

    // CSV keeps full precision
    let csv = dir.path().join("d.csv");
    write_csv(&ds, &csv, true).unwrap();
    let back = load_csv(&csv, &LabelColumn::Index(3), true).unwrap();
    assert_eq!(back.features(), ds.features());
    assert_eq!(back.labels(), ds.labels());
}

#[test]
fn malformed_inputs_are_data_errors() {
    let ragged = "1,2,0\n3,1\n";
    let e = parse_csv("r", ragged, &LabelColumn::Index(2), false).unwrap_err();
    assert_eq!(e.kind(), ErrorKind::Data);
    let text = "1,2,0\n3,x,1\n";
    match parse_csv("t", text, &LabelColumn::Index(2), false).unwrap_err() {
        Error::Parse { row, col, .. } => assert_eq!((row, col), (2, 2)),
        other => panic!("unexpected {other}"),
    }
    let good = small(4).to_lcd1_bytes();
    let mut long = good.clone();
    long.push(0);
    assert!(matches!(Dataset::from_lcd1_bytes("t", &long), Err(Error::TrailingBytes(1))));
    let e = Dataset::from_lcd1_bytes("b", b"NOPE\x01\x00\x00\x00").unwrap_err();
    assert!(matches!(e, Error::BadMagic { .. }));
    let e = Dataset::from_lcd1_bytes("t", &good[..good.len() - 3]).unwrap_err();
    assert_eq!(e.kind(), ErrorKind::Data);
}

#[test]
fn string_labels_map_in_sorted_order() {
    let text = "a,b,label\n1,2,dog\n3,4,cat\n5,6,dog\n";
    let ds = parse_csv("s", text, &LabelColumn::Name("label".into()), true).unwrap();
    assert_eq!(ds.labels(), &[1, 0, 1]);
    assert_eq!(ds.label_names().unwrap(), &["cat".to_string(), "dog".to_string()]);
}

#[test]
fn standardizer_round_trips_and_centres() {
    let ds = small(5);
    let st = Standardizer::fit(&ds).unwrap();
    let z = st.apply(&ds).unwrap();
    for m in z.features().column_means() {
        assert!(m.abs() < 1e-12);
    }
    let back = st.invert(&z).unwrap();
    for (a, b) in back.features().as_slice().iter().zip(ds.features().as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lcd1_round_trip_is_bitwise(rows in 1usize..20, cols in 1usize..6, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let x = Matrix::from_vec(rows, cols, rng.normal_vec(rows * cols)).unwrap();
        let labels: Vec<usize> = (0..rows).map(|i| i % 3).collect();
        let ds = Dataset::new("p", x, labels, 3).unwrap();
        let back = Dataset::from_lcd1_bytes("p", &ds.to_lcd1_bytes()).unwrap();
        prop_assert_eq!(back.features(), &as_f32(ds.features()));
        prop_assert_eq!(back.labels(), ds.labels());
        // a second trip is exact
        prop_assert_eq!(Dataset::from_lcd1_bytes("p", &back.to_lcd1_bytes()).unwrap(), back);
    }

    #[test]
    fn stratified_split_keeps_every_class(sizes in proptest::collection::vec(2usize..30, 2..8), frac in 0.05f64..0.95, seed in any::<u64>()) {
        let mut labels = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat_n(c, s));
        }
        let n = labels.len();
        let x = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let ds = Dataset::new("s", x, labels, sizes.len()).unwrap();
        let (tr, te) = stratified_split(&ds, &SplitSpec { test_fraction: frac, seed, stratified: true }).unwrap();
        for (c, &s) in sizes.iter().enumerate() {
            let k = te.class_indices(c).len();
            prop_assert!(k >= 1 && k < s);
            prop_assert!((k as f64 - s as f64 * frac).abs() <= 1.0);
            prop_assert_eq!(tr.class_indices(c).len() + k, s);
        }
    }
}

//! Datasets, their on-disk formats, splitting, and the synthetic benchmark.
//!
//! The canonical interchange format is LCD1 (all integers little-endian):
//!
//! ```text
//! "LCD1" | u32 n | u32 d | u32 c | n*d f32 features (row-major) | n u32 labels
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{Matrix, Rng};

pub const LCD1_MAGIC: [u8; 4] = *b"LCD1";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    label_names: Option<Vec<String>>,
}

impl Dataset {
    /// Validates label range and feature finiteness. Whether every class is
    /// populated is checked separately by [`Dataset::require_all_classes`],
    /// since test splits may legitimately miss a class.
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                context: "labels vs feature rows",
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if class_count == 0 {
            return Err(invalid("class count must be positive"));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(Error::LabelRange {
                row,
                label: label as u64,
                classes: class_count,
            });
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            class_count,
            label_names: None,
        })
    }

    pub fn with_label_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.class_count {
            return Err(invalid(format!(
                "{} label names for {} classes",
                names.len(),
                self.class_count
            )));
        }
        self.label_names = Some(names);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
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

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Strictly increasing row indices whose label equals `class`.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// `class_indices` for every class, in class order.
    pub fn class_partition(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            parts[l].push(i);
        }
        parts
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn require_all_classes(&self) -> Result<()> {
        match self.class_sizes().iter().position(|&s| s == 0) {
            Some(class) => Err(Error::EmptyClass { class }),
            None => Ok(()),
        }
    }

    /// Rows in the given order; class count and label names are kept.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            label_names: self.label_names.clone(),
        }
    }

    pub fn to_lcd1_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let d = self.dim();
        let mut out = Vec::with_capacity(16 + n * d * 4 + n * 4);
        out.extend_from_slice(&LCD1_MAGIC);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(self.class_count as u32).to_le_bytes());
        for &v in self.features.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        out
    }

    pub fn from_lcd1_bytes(name: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let mut found = [0u8; 4];
        let head = bytes.len().min(4);
        found[..head].copy_from_slice(&bytes[..head]);
        if found != LCD1_MAGIC {
            return Err(Error::BadMagic {
                expected: LCD1_MAGIC,
                found,
            });
        }
        if bytes.len() < 16 {
            return Err(Error::Truncated(format!(
                "LCD1 header needs 16 bytes, file has {}",
                bytes.len()
            )));
        }
        let read_u32 = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let n = read_u32(4) as usize;
        let d = read_u32(8) as usize;
        let c = read_u32(12) as usize;
        let expected = 16 + n * d * 4 + n * 4;
        if bytes.len() < expected {
            return Err(Error::Truncated(format!(
                "LCD1 payload for n={n}, d={d} needs {expected} bytes, file has {}",
                bytes.len()
            )));
        }
        if bytes.len() > expected {
            return Err(Error::TrailingBytes(bytes.len() - expected));
        }
        let mut features = Vec::with_capacity(n * d);
        for k in 0..n * d {
            let off = 16 + 4 * k;
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            features.push(v as f64);
        }
        let base = 16 + n * d * 4;
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let l = read_u32(base + 4 * i) as usize;
            if l >= c {
                return Err(Error::LabelRange {
                    row: i,
                    label: l as u64,
                    classes: c,
                });
            }
            labels.push(l);
        }
        Dataset::new(name, Matrix::from_vec(n, d, features)?, labels, c)
    }
}

pub fn save_binary(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ds.to_lcd1_bytes())?;
    Ok(())
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    Dataset::from_lcd1_bytes(file_stem(path), &bytes)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Reads a rectangular numeric CSV. Label strings are mapped to a dense
/// `[0, c)` range in sorted order (numerically when every label parses as an
/// integer); the mapping is kept as the dataset's label names.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_csv(&file_stem(path), &text, label_column, has_header)
}

pub fn parse_csv(
    name: &str,
    text: &str,
    label_column: &LabelColumn,
    has_header: bool,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let label_idx = match label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(n) => {
            if !has_header {
                return Err(invalid(format!(
                    "label column {n:?} given by name but the CSV has no header"
                )));
            }
            let headers = reader.headers().map_err(csv_err)?;
            headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| invalid(format!("no column named {n:?}")))?
        }
    };

    let mut width = None;
    let mut raw_labels = Vec::new();
    let mut features = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        // 1-based row numbers counting the header line
        let row = r + 1 + usize::from(has_header);
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                row,
                col: rec.len().min(w) + 1,
                msg: format!("ragged row: {} fields, expected {w}", rec.len()),
            });
        }
        if label_idx >= w {
            return Err(invalid(format!(
                "label column {label_idx} out of range for {w} columns"
            )));
        }
        for (c, cell) in rec.iter().enumerate() {
            if c == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col: c + 1,
                msg: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    col: c + 1,
                    msg: "non-finite value".into(),
                });
            }
            features.push(v);
        }
    }
    let n = raw_labels.len();
    if n == 0 {
        return Err(Error::Empty("CSV has no data rows".into()));
    }
    let d = width.unwrap() - 1;

    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    let mut names: Vec<String> = distinct.into_iter().map(str::to_string).collect();
    if names.iter().all(|s| s.parse::<i64>().is_ok()) {
        names.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    let labels = raw_labels
        .iter()
        .map(|l| names.iter().position(|n| n == l).unwrap())
        .collect();
    let c = names.len();
    Dataset::new(name, Matrix::from_vec(n, d, features)?, labels, c)?.with_label_names(names)
}

fn csv_err(e: csv::Error) -> Error {
    let (row, col) = e
        .position()
        .map(|p| (p.line() as usize, 0))
        .unwrap_or((0, 0));
    Error::Parse {
        row,
        col,
        msg: e.to_string(),
    }
}

/// Writes features followed by the integer label as the last column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, header: bool) -> Result<()> {
    let mut f = fs::File::create(path)?;
    if header {
        let mut cols: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
        cols.push("label".into());
        writeln!(f, "{}", cols.join(","))?;
    }
    for i in 0..ds.len() {
        let mut line: Vec<String> = ds.x(i).iter().map(|v| format!("{v}")).collect();
        line.push(ds.y(i).to_string());
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

/// Seeded train/test split. In stratified mode each class contributes
/// `round(size × test_fraction)` test rows, clamped to `[1, size − 1]`.
/// Both halves keep the original row order.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(invalid(format!(
            "test_fraction must lie in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let mut rng = Rng::new(spec.seed);
    let mut is_test = vec![false; ds.len()];
    if spec.stratified {
        for (class, mut rows) in ds.class_partition().into_iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            if rows.len() < 2 {
                return Err(invalid(format!(
                    "class {class} has a single example; stratified split needs at least 2"
                )));
            }
            let k = ((rows.len() as f64 * spec.test_fraction).round() as usize).clamp(1, rows.len() - 1);
            rng.shuffle(&mut rows);
            for &i in &rows[..k] {
                is_test[i] = true;
            }
        }
    } else {
        let mut rows: Vec<usize> = (0..ds.len()).collect();
        let k = (ds.len() as f64 * spec.test_fraction).round() as usize;
        rng.shuffle(&mut rows);
        for &i in &rows[..k] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| is_test[i]);
    let mut tr = ds.subset(&train);
    let mut te = ds.subset(&test);
    tr.set_name(format!("{}-train", ds.name()));
    te.set_name(format!("{}-test", ds.name()));
    Ok((tr, te))
}

/// Isotropic Gaussian blobs: class means at `separation` × a random unit
/// direction, unit-variance noise. Rows are grouped by class.
pub fn synth_gaussian_mixture(
    rng: &mut Rng,
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(invalid("gaussian mixture needs at least 2 classes"));
    }
    if per_class == 0 || dim == 0 {
        return Err(invalid("per_class and dim must be positive"));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(invalid("separation must be finite and non-negative"));
    }
    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        let dir = loop {
            let v = rng.normal_vec(dim);
            let n = crate::numerics::norm(&v);
            if n > 0.0 {
                break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        means.push(dir.into_iter().map(|x| x * separation).collect::<Vec<_>>());
    }
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in mean {
                data.push(mu + rng.normal());
            }
            labels.push(c);
        }
    }
    Dataset::new(
        "gaussian-mixture",
        Matrix::from_vec(classes * per_class, dim, data)?,
        labels,
        classes,
    )
}

/// Per-dimension affine map to zero mean and unit variance, fitted on one
/// dataset and applied to others. Constant dimensions keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Empty("cannot fit standardizer on an empty dataset".into()));
        }
        let mean = ds.features().column_means();
        let n = ds.len() as f64;
        let mut var = vec![0.0; ds.dim()];
        for row in ds.features().iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        self.map(ds, |x, m, s| (x - m) / s)
    }

    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        self.map(ds, |x, m, s| x * s + m)
    }

    fn map(&self, ds: &Dataset, f: impl Fn(f64, f64, f64) -> f64) -> Result<Dataset> {
        if ds.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                context: "standardizer",
                expected: self.mean.len(),
                got: ds.dim(),
            });
        }
        let mut features = ds.features().clone();
        for i in 0..features.rows() {
            for (j, x) in features.row_mut(i).iter_mut().enumerate() {
                *x = f(*x, self.mean[j], self.std[j]);
            }
        }
        let mut out = Dataset::new(ds.name(), features, ds.labels().to_vec(), ds.class_count())?;
        out.label_names = ds.label_names.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let x = Matrix::from_rows(&[
            vec![0.5, -1.0],
            vec![2.0, 3.25],
            vec![-0.125, 0.0],
            vec![7.0, 1.5],
        ])
        .unwrap();
        Dataset::new("small", x, vec![0, 1, 0, 1], 2).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.lcd");
        save_binary(&small(), &p).unwrap();
        let back = load_binary(&p).unwrap();
        assert_eq!((back.len(), back.dim(), back.class_count()), (4, 2, 2));
        assert_eq!(back.features(), small().features());
        assert_eq!(back.labels(), small().labels());
    }

    #[test]
    fn binary_random_round_trip_is_f32_exact() {
        let mut rng = Rng::new(1);
        let ds = synth_gaussian_mixture(&mut rng, 3, 7, 5, 2.0).unwrap();
        let back = Dataset::from_lcd1_bytes("x", &ds.to_lcd1_bytes()).unwrap();
        for (a, b) in ds.features().as_slice().iter().zip(back.features().as_slice()) {
            assert_eq!((*a as f32).to_bits(), (*b as f32).to_bits());
        }
        // a second trip is exact in f64 too
        let again = Dataset::from_lcd1_bytes("x", &back.to_lcd1_bytes()).unwrap();
        assert_eq!(again.features(), back.features());
    }

    #[test]
    fn binary_diagnostics_are_distinct() {
        let mut bytes = small().to_lcd1_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Dataset::from_lcd1_bytes("x", &bad), Err(Error::BadMagic { .. })));
        assert!(matches!(
            Dataset::from_lcd1_bytes("x", &bytes[..bytes.len() - 2]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(Dataset::from_lcd1_bytes("x", &bytes[..10]), Err(Error::Truncated(_))));
        // label 5 with c = 3
        let len = bytes.len();
        bytes[12..16].copy_from_slice(&3u32.to_le_bytes());
        bytes[len - 4..].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(
            Dataset::from_lcd1_bytes("x", &bytes),
            Err(Error::LabelRange { label: 5, classes: 3, .. })
        ));
    }

    #[test]
    fn csv_dense_remap() {
        let ds = parse_csv("t", "1.0,a\n2.0,b\n3.0,a\n", &LabelColumn::Index(1), false).unwrap();
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.label_names().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn csv_named_column_and_numeric_labels() {
        let text = "label,f0,f1\n10,1,2\n2,3,4\n10,5,6\n";
        let ds = parse_csv("t", text, &LabelColumn::Name("label".into()), true).unwrap();
        assert_eq!(ds.labels(), &[1, 0, 1]);
        assert_eq!(ds.x(1), &[3.0, 4.0]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_csv("t", "", &LabelColumn::Index(0), false), Err(Error::Empty(_))));
        let err = parse_csv("t", "1,2,a\n1,a\n", &LabelColumn::Index(2), false).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");
        let err = parse_csv("t", "1,2,a\n1,zz,b\n", &LabelColumn::Index(2), false).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, col: 2, .. }), "{err}");
    }

    #[test]
    fn csv_matches_binary() {
        let mut rng = Rng::new(4);
        let ds = synth_gaussian_mixture(&mut rng, 4, 5, 3, 1.0).unwrap();
        let ds = Dataset::from_lcd1_bytes("g", &ds.to_lcd1_bytes()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        write_csv(&ds, &p, true).unwrap();
        let back = load_csv(&p, &LabelColumn::Name("label".into()), true).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn split_balanced_and_deterministic() {
        let mut rng = Rng::new(0);
        let ds = synth_gaussian_mixture(&mut rng, 2, 50, 3, 1.0).unwrap();
        let spec = SplitSpec {
            test_fraction: 0.2,
            seed: 7,
            stratified: true,
        };
        let (tr, te) = stratified_split(&ds, &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        assert_eq!(te.class_sizes(), vec![10, 10]);
        let (tr2, te2) = stratified_split(&ds, &spec).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
    }

    #[test]
    fn split_rejects_singleton_class() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let ds = Dataset::new("s", x, vec![0, 0, 1], 2).unwrap();
        let spec = SplitSpec {
            test_fraction: 0.5,
            seed: 0,
            stratified: true,
        };
        assert!(stratified_split(&ds, &spec).is_err());
    }

    #[test]
    fn gaussian_mixture_shapes() {
        let ds = synth_gaussian_mixture(&mut Rng::new(3), 4, 1, 6, 3.0).unwrap();
        assert_eq!(ds.len(), 4);
        let a = synth_gaussian_mixture(&mut Rng::new(3), 3, 4, 2, 1.0).unwrap();
        let b = synth_gaussian_mixture(&mut Rng::new(3), 3, 4, 2, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(synth_gaussian_mixture(&mut Rng::new(3), 1, 4, 2, 1.0).is_err());
    }

    #[test]
    fn standardizer_round_trip() {
        let ds = small();
        let s = Standardizer::fit(&ds).unwrap();
        let z = s.apply(&ds).unwrap();
        for m in z.features().column_means() {
            assert!(m.abs() < 1e-12);
        }
        let back = s.invert(&z).unwrap();
        for (a, b) in back.features().as_slice().iter().zip(ds.features().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

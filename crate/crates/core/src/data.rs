//! Labeled datasets: ingestion, synthetic generation, splits and
//! standardization.
//!
//! Two text formats are supported:
//!
//! * sparse lines `label idx:val idx:val …` with 1-based, strictly
//!   ascending indices; absent indices are zero and the dimension is the
//!   largest index seen;
//! * numeric CSV with a header row, where one named column holds labels
//!   and the remaining columns are features in header order.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::family::ExpFamily;

/// Inputs (N×D) with one real label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub inputs: DMatrix<f64>,
    pub labels: DVector<f64>,
}

impl LabeledData {
    pub fn new(inputs: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        check_dim("labeled data rows", inputs.nrows(), labels.len())?;
        Ok(Self { inputs, labels })
    }

    pub fn empty(input_dim: usize) -> Self {
        Self {
            inputs: DMatrix::zeros(0, input_dim),
            labels: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    pub fn validate(&self, family: ExpFamily) -> Result<()> {
        for (i, y) in self.labels.iter().enumerate() {
            family.check_label(i, *y)?;
        }
        Ok(())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "row index {i} out of range for {} rows",
                    self.len()
                )));
            }
        }
        Ok(Self {
            inputs: self.inputs.select_rows(indices),
            labels: self.labels.select_rows(indices),
        })
    }

    /// All rows except `indices`, preserving order.
    pub fn without(&self, indices: &[usize]) -> Result<Self> {
        let mut drop = vec![false; self.len()];
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!("row index {i} out of range")));
            }
            drop[i] = true;
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&i| !drop[i]).collect();
        self.select(&keep)
    }

    /// Row-wise concatenation.
    pub fn concat(&self, other: &LabeledData) -> Result<Self> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        check_dim("concat", self.input_dim(), other.input_dim())?;
        let n = self.len() + other.len();
        let d = self.input_dim();
        let inputs = DMatrix::from_fn(n, d, |i, j| {
            if i < self.len() {
                self.inputs[(i, j)]
            } else {
                other.inputs[(i - self.len(), j)]
            }
        });
        let labels = DVector::from_fn(n, |i, _| {
            if i < self.len() {
                self.labels[i]
            } else {
                other.labels[i - self.len()]
            }
        });
        Ok(Self { inputs, labels })
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads the sparse `label idx:val …` format.
pub fn load_sparse(path: impl AsRef<Path>) -> Result<LabeledData> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut dim = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label: f64 = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(path, lineno, "missing or non-numeric label"))?;
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(path, lineno, format!("expected idx:val, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad index `{idx}`")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad value `{val}`")))?;
            if idx == 0 {
                return Err(parse_err(path, lineno, "indices are 1-based"));
            }
            if idx <= last {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("indices must be strictly ascending ({idx} after {last})"),
                ));
            }
            last = idx;
            dim = dim.max(idx);
            entries.push((idx - 1, val));
        }
        labels.push(label);
        rows.push(entries);
    }
    let mut inputs = DMatrix::zeros(rows.len(), dim);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            inputs[(i, j)] = v;
        }
    }
    LabeledData::new(inputs, DVector::from_vec(labels))
}

/// Writes the sparse format; zero entries are omitted.
pub fn save_sparse(data: &LabeledData, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for i in 0..data.len() {
        write!(out, "{}", data.labels[i]).ok();
        for j in 0..data.input_dim() {
            let v = data.inputs[(i, j)];
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v).ok();
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a numeric CSV with a header; `label_column` names the label.
pub fn load_dense_csv(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledData> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| parse_err(path, 1, format!("missing label column `{label_column}`")))?;
    let d = headers.len() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let lineno = r + 2;
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} columns, got {}", headers.len(), record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    path,
                    lineno,
                    format!("non-numeric cell `{cell}` in column `{}`", &headers[c]),
                )
            })?;
            if c == label_idx {
                labels.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n = labels.len();
    LabeledData::new(DMatrix::from_row_slice(n, d, &values), DVector::from_vec(labels))
}

/// Two interleaved half circles with isotropic Gaussian noise.
///
/// Class 0 lies on `(cos t, sin t)` and class 1 on `(1 − cos t, 0.5 − sin t)`
/// for `t` evenly spaced in `[0, π]`, `n/2` points each. Noise is drawn from
/// a ChaCha8 generator seeded with `seed`.
pub fn make_moons(n: usize, noise: f64, seed: u64) -> Result<LabeledData> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("make_moons needs an even n, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument("noise must be a finite nonnegative number".into()));
    }
    let half = n / 2;
    let mut inputs = DMatrix::zeros(n, 2);
    let mut labels = DVector::zeros(n);
    let step = if half > 1 {
        std::f64::consts::PI / (half - 1) as f64
    } else {
        0.0
    };
    for k in 0..half {
        let t = k as f64 * step;
        inputs[(k, 0)] = t.cos();
        inputs[(k, 1)] = t.sin();
        inputs[(half + k, 0)] = 1.0 - t.cos();
        inputs[(half + k, 1)] = 0.5 - t.sin();
        labels[half + k] = 1.0;
    }
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise).expect("valid std");
        for v in inputs.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    LabeledData::new(inputs, labels)
}

/// Sorts rows by their first coordinate and cuts them into `k` contiguous
/// splits of equal size; returns row indices per split.
pub fn ordered_splits(data: &LabeledData, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || !data.len().is_multiple_of(k) {
        return Err(Error::InvalidArgument(format!(
            "cannot cut {} rows into {k} equal splits",
            data.len()
        )));
    }
    if data.input_dim() == 0 {
        return Err(Error::InvalidArgument("ordered splits need at least one column".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        data.inputs[(a, 0)]
            .total_cmp(&data.inputs[(b, 0)])
            .then(a.cmp(&b))
    });
    let size = data.len() / k;
    Ok(order.chunks(size).map(|c| c.to_vec()).collect())
}

/// How to draw a random train/held-out split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of rows in the first part, in `(0, 1]`.
    pub fraction: f64,
    pub seed: u64,
    /// Split each label value separately so label proportions are preserved.
    pub stratify: bool,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fraction > 0.0 && self.fraction <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "split fraction {} outside (0, 1]",
                self.fraction
            )))
        }
    }
}

/// Shuffles rows with a seeded ChaCha8 generator and returns
/// `(first, rest)` row indices, each sorted ascending.
pub fn random_split(data: &LabeledData, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups: Vec<Vec<usize>> = if spec.stratify {
        let mut keys: Vec<f64> = data.labels.iter().copied().collect();
        keys.sort_by(f64::total_cmp);
        keys.dedup();
        keys.iter()
            .map(|k| (0..data.len()).filter(|&i| data.labels[i] == *k).collect())
            .collect()
    } else {
        vec![(0..data.len()).collect()]
    };
    let mut first = Vec::new();
    let mut rest = Vec::new();
    for mut g in groups {
        g.shuffle(&mut rng);
        let take = ((g.len() as f64) * spec.fraction).round() as usize;
        let take = take.min(g.len());
        first.extend_from_slice(&g[..take]);
        rest.extend_from_slice(&g[take..]);
    }
    first.sort_unstable();
    rest.sort_unstable();
    Ok((first, rest))
}

/// Per-column affine transform fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: DVector<f64>,
    /// Population standard deviation; zero marks a pass-through column.
    pub std: DVector<f64>,
}

impl Standardizer {
    pub fn fit(train: &LabeledData) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("cannot standardize an empty set".into()));
        }
        let n = train.len() as f64;
        let d = train.input_dim();
        let mut mean = DVector::zeros(d);
        let mut std = DVector::zeros(d);
        for j in 0..d {
            let col = train.inputs.column(j);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[j] = m;
            std[j] = var.sqrt();
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, data: &LabeledData) -> Result<LabeledData> {
        check_dim("standardize", self.mean.len(), data.input_dim())?;
        let mut out = data.clone();
        for j in 0..data.input_dim() {
            if self.std[j] == 0.0 {
                continue;
            }
            for i in 0..data.len() {
                out.inputs[(i, j)] = (data.inputs[(i, j)] - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }
}

/// Standardizes `train` and every set in `others` with training statistics.
pub fn standardize(
    train: &LabeledData,
    others: &[&LabeledData],
) -> Result<(LabeledData, Vec<LabeledData>, Standardizer)> {
    let st = Standardizer::fit(train)?;
    let train_t = st.apply(train)?;
    let others_t = others.iter().map(|o| st.apply(o)).collect::<Result<Vec<_>>>()?;
    Ok((train_t, others_t, st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn sparse_line() {
        let f = write_tmp("1 1:2.0 3:1.5\n");
        let d = load_sparse(f.path()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.row(0), vec![2.0, 0.0, 1.5]);
        assert_eq!(d.labels[0], 1.0);
    }

    #[test]
    fn sparse_empty_file() {
        let f = write_tmp("");
        assert_eq!(load_sparse(f.path()).unwrap().len(), 0);
    }

    #[test]
    fn sparse_order_error_has_line_number() {
        let f = write_tmp("0 1:1\n1 3:1 2:1\n");
        match load_sparse(f.path()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("ascending"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("1 2-3\n");
        assert!(matches!(load_sparse(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_basic() {
        let f = write_tmp("a,y,b\n1.0,0,2.0\n3.0,1,4.0\n");
        let d = load_dense_csv(f.path(), "y").unwrap();
        assert_eq!(d.inputs, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(d.labels.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn csv_errors() {
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(load_dense_csv(f.path(), "y"), Err(Error::Parse { .. })));
        let f = write_tmp("a,y\n1,2\nx,1\n");
        match load_dense_csv(f.path(), "y") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("`a`"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("a,y\n");
        let d = load_dense_csv(f.path(), "y").unwrap();
        assert_eq!((d.len(), d.input_dim()), (0, 1));
    }

    #[test]
    fn moons_on_arcs_without_noise() {
        let d = make_moons(40, 0.0, 1).unwrap();
        for i in 0..d.len() {
            let (x, y) = (d.inputs[(i, 0)], d.inputs[(i, 1)]);
            let r = if d.labels[i] == 0.0 {
                (x * x + y * y).sqrt()
            } else {
                ((x - 1.0).powi(2) + (y - 0.5).powi(2)).sqrt()
            };
            assert!((r - 1.0).abs() <= 1e-12);
        }
        assert!(make_moons(7, 0.1, 0).is_err());
    }

    #[test]
    fn moons_balanced_and_seeded() {
        let a = make_moons(500, 0.1, 3).unwrap();
        let b = make_moons(500, 0.1, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels.iter().filter(|&&y| y == 1.0).count(), 250);
        assert_ne!(a, make_moons(500, 0.1, 4).unwrap());
    }

    #[test]
    fn ordered_moons_splits() {
        let d = make_moons(500, 0.1, 0).unwrap();
        let splits = ordered_splits(&d, 5).unwrap();
        assert!(splits.iter().all(|s| s.len() == 100));
        for w in splits.windows(2) {
            let max_prev = w[0].iter().map(|&i| d.inputs[(i, 0)]).fold(f64::MIN, f64::max);
            let min_next = w[1].iter().map(|&i| d.inputs[(i, 0)]).fold(f64::MAX, f64::min);
            assert!(max_prev <= min_next);
        }
    }

    #[test]
    fn standardize_examples() {
        let train = LabeledData::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 3.0, 5.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        let test = LabeledData::new(
            DMatrix::from_row_slice(1, 2, &[4.0, 7.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let (tr, others, st) = standardize(&train, &[&test]).unwrap();
        // column 0: mean 2, population std 1 → [-1, 1], test 4 → 2
        assert_eq!(st.mean.as_slice(), &[2.0, 5.0]);
        assert_eq!(st.std.as_slice(), &[1.0, 0.0]);
        assert_eq!(tr.inputs.column(0).as_slice(), &[-1.0, 1.0]);
        // constant column passes through
        assert_eq!(tr.inputs.column(1).as_slice(), &[5.0, 5.0]);
        assert_eq!(others[0].inputs[(0, 0)], 2.0);
        assert_eq!(others[0].inputs[(0, 1)], 7.0);
        let empty = LabeledData::empty(2);
        assert!(standardize(&empty, &[]).is_err());
    }

    #[test]
    fn standardized_train_has_zero_means() {
        let d = make_moons(100, 0.3, 9).unwrap();
        let (tr, _, _) = standardize(&d, &[]).unwrap();
        for j in 0..2 {
            assert!(tr.inputs.column(j).mean().abs() <= 1e-12);
        }
    }

    #[test]
    fn split_fraction_and_stratify() {
        let d = make_moons(100, 0.1, 0).unwrap();
        let spec = SplitSpec {
            fraction: 0.2,
            seed: 5,
            stratify: true,
        };
        let (a, b) = random_split(&d, &spec).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(b.len(), 80);
        assert_eq!(a.iter().filter(|&&i| d.labels[i] == 1.0).count(), 10);
        assert_eq!(random_split(&d, &spec).unwrap(), (a, b));
        let bad = SplitSpec { fraction: 0.0, ..spec };
        assert!(random_split(&d, &bad).is_err());
    }

    #[test]
    fn select_without_concat() {
        let d = make_moons(10, 0.0, 0).unwrap();
        let a = d.select(&[0, 1, 2]).unwrap();
        let b = d.without(&[0, 1, 2]).unwrap();
        assert_eq!(a.concat(&b).unwrap(), d);
        assert!(d.select(&[10]).is_err());
    }
}

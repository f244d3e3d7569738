//! Tabular data ingestion: CSV loading, one-hot / z-score encoding,
//! seeded train/test splits, sensitive-group partitions and masking
//! baselines.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{GesdError, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// How to turn a CSV file into a [`TabularDataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub label_column: String,
    pub group_column: String,
    /// Kind of every feature column. The group column may be omitted, in
    /// which case it is encoded as categorical when included.
    pub schema: BTreeMap<String, ColumnKind>,
    pub include_sensitive: bool,
}

/// Z-score parameters for the numeric columns of an encoded matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<usize>,
    pub means: Vec<f64>,
    /// Population standard deviations; zero marks a constant column.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &TabularDataset) -> Self {
        let n = ds.n_rows() as f64;
        let columns: Vec<usize> = (0..ds.n_features())
            .filter(|&j| ds.numeric_columns[j])
            .collect();
        let mut means = Vec::with_capacity(columns.len());
        let mut stds = Vec::with_capacity(columns.len());
        for &j in &columns {
            let col: Vec<f64> = ds.rows().map(|r| r[j]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = col.iter().sum::<f64>() / n;
            if hi == lo {
                means.push(lo);
                stds.push(0.0);
            } else {
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                means.push(mean);
                stds.push(var.sqrt());
            }
        }
        Standardizer {
            columns,
            means,
            stds,
        }
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((&j, &m), &s) in self.columns.iter().zip(&self.means).zip(&self.stds) {
            row[j] = if s == 0.0 { 0.0 } else { (row[j] - m) / s };
        }
    }

    /// Inverse of [`Standardizer::apply_row`]. Constant columns come back as
    /// their training value.
    pub fn invert_row(&self, row: &mut [f64]) {
        for ((&j, &m), &s) in self.columns.iter().zip(&self.means).zip(&self.stds) {
            row[j] = if s == 0.0 { m } else { row[j] * s + m };
        }
    }
}

/// Encoded feature matrix with binary labels and sensitive-group indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<u8>,
    groups: Vec<usize>,
    feature_names: Vec<String>,
    group_attribute_name: String,
    /// Original value of each group index, sorted.
    group_values: Vec<String>,
    numeric_columns: Vec<bool>,
    /// Row position in the file this dataset was loaded from.
    row_ids: Vec<usize>,
    standardizer: Option<Standardizer>,
}

impl TabularDataset {
    /// Builds a dataset from row-major features and checks every invariant:
    /// consistent lengths, `n >= 2`, `d >= 1`, finite features and every
    /// group in `0..group_values.len()` non-empty.
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
        groups: Vec<usize>,
        feature_names: Vec<String>,
        group_attribute_name: impl Into<String>,
        group_values: Vec<String>,
    ) -> Result<Self> {
        let n = features.len();
        let d = feature_names.len();
        if n < 2 {
            return Err(GesdError::InvalidDataset(format!("need at least 2 rows, got {n}")));
        }
        if d == 0 {
            return Err(GesdError::InvalidDataset("need at least one feature".into()));
        }
        if labels.len() != n || groups.len() != n {
            return Err(GesdError::InvalidDataset(format!(
                "row count disagreement: features {n}, labels {}, groups {}",
                labels.len(),
                groups.len()
            )));
        }
        let mut flat = Vec::with_capacity(n * d);
        for (i, row) in features.iter().enumerate() {
            if row.len() != d {
                return Err(GesdError::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(GesdError::UnparseableCell {
                    row: i + 1,
                    column: feature_names[j].clone(),
                    value: row[j].to_string(),
                });
            }
            flat.extend_from_slice(row);
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(GesdError::NonBinaryLabel {
                row: i + 1,
                value: labels[i].to_string(),
            });
        }
        let k = group_values.len();
        if k < 2 {
            return Err(GesdError::SingleGroup {
                column: group_attribute_name.into(),
            });
        }
        let ds = TabularDataset {
            features: flat,
            n_features: d,
            labels,
            groups,
            numeric_columns: vec![true; d],
            feature_names,
            group_attribute_name: group_attribute_name.into(),
            group_values,
            row_ids: (0..n).collect(),
            standardizer: None,
        };
        ds.check_groups()?;
        Ok(ds)
    }

    fn check_groups(&self) -> Result<()> {
        let k = self.n_groups();
        let mut counts = vec![0usize; k];
        for &g in &self.groups {
            if g >= k {
                return Err(GesdError::InvalidDataset(format!(
                    "group index {g} out of range for K={k}"
                )));
            }
            counts[g] += 1;
        }
        if let Some(g) = counts.iter().position(|&c| c == 0) {
            return Err(GesdError::InvalidDataset(format!("group {g} is empty")));
        }
        Ok(())
    }

    /// Marks which columns are numeric (standardizable); the rest are
    /// treated as one-hot indicators.
    pub fn with_numeric_columns(mut self, numeric: Vec<bool>) -> Result<Self> {
        if numeric.len() != self.n_features {
            return Err(GesdError::DimensionMismatch {
                expected: self.n_features,
                got: numeric.len(),
            });
        }
        self.numeric_columns = numeric;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_groups(&self) -> usize {
        self.group_values.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    /// Row-major feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn group_attribute_name(&self) -> &str {
        &self.group_attribute_name
    }

    pub fn group_values(&self) -> &[String] {
        &self.group_values
    }

    pub fn numeric_columns(&self) -> &[bool] {
        &self.numeric_columns
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    /// Rows `idx` in the given order; group invariants are not re-checked
    /// because a test partition may legitimately miss a group.
    pub fn subset(&self, idx: &[usize]) -> TabularDataset {
        let d = self.n_features;
        let mut features = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        TabularDataset {
            features,
            n_features: d,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
            feature_names: self.feature_names.clone(),
            group_attribute_name: self.group_attribute_name.clone(),
            group_values: self.group_values.clone(),
            numeric_columns: self.numeric_columns.clone(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            standardizer: self.standardizer.clone(),
        }
    }

    pub fn standardized_with(&self, st: &Standardizer) -> TabularDataset {
        let mut out = self.clone();
        for row in out.features.chunks_exact_mut(self.n_features) {
            st.apply_row(row);
        }
        out.standardizer = Some(st.clone());
        out
    }
}

fn parse_label(raw: &str, row: usize) -> Result<u8> {
    let err = || GesdError::NonBinaryLabel {
        row,
        value: raw.to_string(),
    };
    let v: f64 = raw.trim().parse().map_err(|_| err())?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(err())
    }
}

enum Encoder {
    Numeric { src: usize },
    OneHot { src: usize, categories: Vec<String> },
}

/// Reads a header-ed, comma-separated UTF-8 file.
///
/// Feature columns keep input order; each categorical column expands into
/// one indicator per distinct value, in sorted category order. Numeric
/// columns are kept raw here; [`split`] standardizes them with training
/// statistics.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<TabularDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| GesdError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let csv_err = |source| GesdError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GesdError::MissingColumn {
                column: name.to_string(),
            })
    };
    let label_idx = position(&opts.label_column)?;
    let group_idx = position(&opts.group_column)?;
    for name in opts.schema.keys() {
        if name == &opts.label_column {
            return Err(GesdError::InvalidConfig(format!(
                "label column `{name}` cannot also be a feature"
            )));
        }
        position(name)?;
    }

    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;

    let mut feature_cols: Vec<(usize, ColumnKind)> = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if c == label_idx {
            continue;
        }
        if c == group_idx {
            if opts.include_sensitive {
                let kind = opts
                    .schema
                    .get(name)
                    .copied()
                    .unwrap_or(ColumnKind::Categorical);
                feature_cols.push((c, kind));
            }
            continue;
        }
        match opts.schema.get(name) {
            Some(&kind) => feature_cols.push((c, kind)),
            None => {
                return Err(GesdError::UndeclaredColumn {
                    column: name.clone(),
                })
            }
        }
    }

    let cell = |rec: &csv::StringRecord, row: usize, c: usize| -> Result<String> {
        let v = rec.get(c).map(str::trim).unwrap_or("");
        if v.is_empty() {
            return Err(GesdError::UnparseableCell {
                row,
                column: header[c].clone(),
                value: String::new(),
            });
        }
        Ok(v.to_string())
    };

    let mut encoders = Vec::new();
    let mut feature_names = Vec::new();
    let mut numeric_columns = Vec::new();
    for &(c, kind) in &feature_cols {
        match kind {
            ColumnKind::Numeric => {
                encoders.push(Encoder::Numeric { src: c });
                feature_names.push(header[c].clone());
                numeric_columns.push(true);
            }
            ColumnKind::Categorical => {
                let mut cats = BTreeSet::new();
                for (i, rec) in records.iter().enumerate() {
                    cats.insert(cell(rec, i + 1, c)?);
                }
                let categories: Vec<String> = cats.into_iter().collect();
                for cat in &categories {
                    feature_names.push(format!("{}={}", header[c], cat));
                    numeric_columns.push(false);
                }
                encoders.push(Encoder::OneHot { src: c, categories });
            }
        }
    }

    let mut group_set = BTreeSet::new();
    for (i, rec) in records.iter().enumerate() {
        group_set.insert(cell(rec, i + 1, group_idx)?);
    }
    let group_values: Vec<String> = group_set.into_iter().collect();
    if group_values.len() < 2 {
        return Err(GesdError::SingleGroup {
            column: opts.group_column.clone(),
        });
    }

    let mut features = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut groups = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let row_no = i + 1;
        labels.push(parse_label(&cell(rec, row_no, label_idx)?, row_no)?);
        let g = cell(rec, row_no, group_idx)?;
        groups.push(group_values.binary_search(&g).expect("group value collected above"));
        let mut row = Vec::with_capacity(feature_names.len());
        for enc in &encoders {
            match enc {
                Encoder::Numeric { src } => {
                    let raw = cell(rec, row_no, *src)?;
                    let v: f64 = raw.parse().map_err(|_| GesdError::UnparseableCell {
                        row: row_no,
                        column: header[*src].clone(),
                        value: raw.clone(),
                    })?;
                    if !v.is_finite() {
                        return Err(GesdError::UnparseableCell {
                            row: row_no,
                            column: header[*src].clone(),
                            value: raw,
                        });
                    }
                    row.push(v);
                }
                Encoder::OneHot { src, categories } => {
                    let v = cell(rec, row_no, *src)?;
                    row.extend(categories.iter().map(|c| if *c == v { 1.0 } else { 0.0 }));
                }
            }
        }
        features.push(row);
    }

    TabularDataset::new(
        features,
        labels,
        groups,
        feature_names,
        opts.group_column.clone(),
        group_values,
    )?
    .with_numeric_columns(numeric_columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratify_on_label: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.3,
            seed: 0,
            stratify_on_label: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(GesdError::InvalidConfig(format!(
                "test_fraction must lie in (0,1), got {}",
                self.test_fraction
            )));
        }
        if n < 2 {
            return Err(GesdError::InvalidConfig(
                "a split needs at least two rows".into(),
            ));
        }
        Ok(())
    }
}

/// Row indices of the test partition, sorted.
fn test_indices(ds: &TabularDataset, spec: &SplitSpec) -> Vec<usize> {
    let n = ds.n_rows();
    let mut rng = seed::rng(spec.seed);
    let strata: Vec<Vec<usize>> = if spec.stratify_on_label {
        (0..2u8)
            .map(|y| (0..n).filter(|&i| ds.labels[i] == y).collect())
            .collect()
    } else {
        vec![(0..n).collect()]
    };
    let mut picked: Vec<Vec<usize>> = Vec::new();
    let mut rest: Vec<Vec<usize>> = Vec::new();
    for mut s in strata {
        s.shuffle(&mut rng);
        let k = (spec.test_fraction * s.len() as f64).round() as usize;
        let tail = s.split_off(k.min(s.len()));
        picked.push(s);
        rest.push(tail);
    }
    // keep at least one row on each side
    let total: usize = picked.iter().map(Vec::len).sum();
    if total == 0 {
        let largest = (0..rest.len()).max_by_key(|&i| rest[i].len()).unwrap();
        let row = rest[largest].pop().unwrap();
        picked[largest].push(row);
    } else if total == n {
        let largest = (0..picked.len()).max_by_key(|&i| picked[i].len()).unwrap();
        picked[largest].pop();
    }
    let mut out: Vec<usize> = picked.into_iter().flatten().collect();
    out.sort_unstable();
    out
}

/// Seeded train/test split. Standardization statistics come from the
/// training rows only and are applied to both partitions.
pub fn split(ds: &TabularDataset, spec: &SplitSpec) -> Result<(TabularDataset, TabularDataset)> {
    spec.validate(ds.n_rows())?;
    let test_idx = test_indices(ds, spec);
    let mut in_test = vec![false; ds.n_rows()];
    for &i in &test_idx {
        in_test[i] = true;
    }
    let train_idx: Vec<usize> = (0..ds.n_rows()).filter(|&i| !in_test[i]).collect();

    let raw_train = ds.subset(&train_idx);
    let mut present = vec![false; ds.n_groups()];
    for &g in raw_train.groups() {
        present[g] = true;
    }
    if let Some(g) = present.iter().position(|p| !p) {
        return Err(GesdError::EmptyGroupInTrain { group: g });
    }
    let st = Standardizer::fit(&raw_train);
    let train = raw_train.standardized_with(&st);
    let test = ds.subset(&test_idx).standardized_with(&st);
    Ok((train, test))
}

/// Row indices of each group, ordered by group index.
pub fn group_partition(ds: &TabularDataset) -> Vec<Vec<usize>> {
    let mut parts = vec![Vec::new(); ds.n_groups()];
    for (i, &g) in ds.groups().iter().enumerate() {
        parts[g].push(i);
    }
    parts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    #[default]
    Mean,
    Zero,
}

/// Replacement values for masked features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineVector {
    pub values: Vec<f64>,
    pub kind: BaselineKind,
}

pub fn baseline_vector(train: &TabularDataset, kind: BaselineKind) -> BaselineVector {
    let d = train.n_features();
    let values = match kind {
        BaselineKind::Zero => vec![0.0; d],
        BaselineKind::Mean => {
            let n = train.n_rows() as f64;
            let mut sums = vec![0.0; d];
            for row in train.rows() {
                for (s, v) in sums.iter_mut().zip(row) {
                    *s += v;
                }
            }
            sums.into_iter().map(|s| s / n).collect()
        }
    };
    BaselineVector { values, kind }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn opts(schema: &[(&str, ColumnKind)]) -> LoadOptions {
        LoadOptions {
            label_column: "y".into(),
            group_column: "g".into(),
            schema: schema.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            include_sensitive: false,
        }
    }

    fn toy(n: usize, labels: &[u8], groups: &[usize]) -> TabularDataset {
        let features = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
        TabularDataset::new(
            features,
            labels.to_vec(),
            groups.to_vec(),
            vec!["a".into(), "b".into()],
            "g",
            vec!["g0".into(), "g1".into()],
        )
        .unwrap()
    }

    #[test]
    fn loads_four_row_csv() {
        let f = write_csv("x,g,y\n1.0,a,0\n2.0,b,1\n3.0,a,1\n4.0,b,0\n");
        let ds = load_csv(f.path(), &opts(&[("x", ColumnKind::Numeric)])).unwrap();
        assert_eq!(ds.n_rows(), 4);
        assert_eq!(ds.n_groups(), 2);
        assert_eq!(ds.groups(), &[0, 1, 0, 1]);
        assert_eq!(ds.labels(), &[0, 1, 1, 0]);
    }

    #[test]
    fn rejects_non_binary_label() {
        let f = write_csv("x,g,y\n1.0,a,0\n2.0,b,2\n");
        let err = load_csv(f.path(), &opts(&[("x", ColumnKind::Numeric)])).unwrap_err();
        assert!(matches!(err, GesdError::NonBinaryLabel { row: 2, .. }), "{err}");
        assert!(err.to_string().contains("non-binary label"));
    }

    #[test]
    fn one_hot_uses_sorted_categories() {
        let f = write_csv("color,g,y\nred,a,0\nblue,b,1\nred,a,1\n");
        let ds = load_csv(f.path(), &opts(&[("color", ColumnKind::Categorical)])).unwrap();
        assert_eq!(ds.feature_names(), &["color=blue", "color=red"]);
        let rows: Vec<&[f64]> = ds.rows().collect();
        assert_eq!(rows, vec![&[0.0, 1.0][..], &[1.0, 0.0], &[0.0, 1.0]]);
    }

    #[test]
    fn rejects_single_group() {
        let f = write_csv("x,g,y\n1,a,0\n2,a,1\n");
        let err = load_csv(f.path(), &opts(&[("x", ColumnKind::Numeric)])).unwrap_err();
        assert!(matches!(err, GesdError::SingleGroup { .. }));
    }

    #[test]
    fn reports_unparseable_cell_position() {
        let f = write_csv("x,g,y\n1,a,0\nNaN,b,1\n");
        let err = load_csv(f.path(), &opts(&[("x", ColumnKind::Numeric)])).unwrap_err();
        match err {
            GesdError::UnparseableCell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "x");
            }
            other => panic!("unexpected {other}"),
        }
        let f = write_csv("x,g,y\n1,a,0\n,b,1\n");
        assert!(matches!(
            load_csv(f.path(), &opts(&[("x", ColumnKind::Numeric)])),
            Err(GesdError::UnparseableCell { row: 2, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv("/nonexistent/data.csv", &opts(&[])).unwrap_err();
        assert!(matches!(err, GesdError::Io { .. }));
    }

    #[test]
    fn undeclared_column_rejected() {
        let f = write_csv("x,z,g,y\n1,2,a,0\n2,3,b,1\n");
        let err = load_csv(f.path(), &opts(&[("x", ColumnKind::Numeric)])).unwrap_err();
        assert!(matches!(err, GesdError::UndeclaredColumn { .. }));
    }

    #[test]
    fn sensitive_column_included_on_request() {
        let f = write_csv("x,g,y\n1,a,0\n2,b,1\n");
        let mut o = opts(&[("x", ColumnKind::Numeric)]);
        o.include_sensitive = true;
        let ds = load_csv(f.path(), &o).unwrap();
        assert_eq!(ds.feature_names(), &["x", "g=a", "g=b"]);
    }

    #[test]
    fn split_partitions_rows() {
        let ds = toy(10, &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1], &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let spec = SplitSpec {
            test_fraction: 0.3,
            seed: 1,
            stratify_on_label: false,
        };
        let (train, test) = split(&ds, &spec).unwrap();
        assert_eq!(train.n_rows(), 7);
        assert_eq!(test.n_rows(), 3);
        let mut all: Vec<usize> = train.row_ids().iter().chain(test.row_ids()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let (train2, test2) = split(&ds, &spec).unwrap();
        assert_eq!(serde_json::to_vec(&train).unwrap(), serde_json::to_vec(&train2).unwrap());
        assert_eq!(serde_json::to_vec(&test).unwrap(), serde_json::to_vec(&test2).unwrap());
    }

    #[test]
    fn stratified_split_keeps_label_ratio() {
        let labels = [1, 1, 1, 1, 1, 1, 0, 0, 0, 0];
        let ds = toy(10, &labels, &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        for seed in 0..20 {
            let spec = SplitSpec {
                test_fraction: 0.5,
                seed,
                stratify_on_label: true,
            };
            let (_, test) = split(&ds, &spec).unwrap();
            // oracle: round(0.5 * 6) positives and round(0.5 * 4) negatives
            let pos = test.labels().iter().filter(|&&y| y == 1).count();
            assert_eq!((pos, test.n_rows() - pos), (3, 2));
        }
    }

    #[test]
    fn split_refuses_to_empty_train_group() {
        let ds = toy(4, &[0, 1, 0, 1], &[0, 0, 0, 1]);
        let found = (0..200).any(|seed| {
            let spec = SplitSpec {
                test_fraction: 0.25,
                seed,
                stratify_on_label: false,
            };
            matches!(split(&ds, &spec), Err(GesdError::EmptyGroupInTrain { group: 1 }))
        });
        assert!(found);
    }

    #[test]
    fn train_columns_are_standardized() {
        let ds = toy(10, &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1], &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let (train, _) = split(&ds, &SplitSpec::default()).unwrap();
        let n = train.n_rows() as f64;
        for j in 0..train.n_features() {
            let mean = train.rows().map(|r| r[j]).sum::<f64>() / n;
            let var = train.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_standardizes_to_zero() {
        let features = (0..6).map(|i| vec![5.0, i as f64]).collect();
        let ds = TabularDataset::new(
            features,
            vec![0, 1, 0, 1, 0, 1],
            vec![0, 1, 0, 1, 0, 1],
            vec!["c".into(), "v".into()],
            "g",
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let (train, test) = split(&ds, &SplitSpec::default()).unwrap();
        assert!(train.rows().chain(test.rows()).all(|r| r[0] == 0.0));
    }

    #[test]
    fn partition_examples() {
        let ds = TabularDataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0, 1, 0],
            vec![0, 1, 0],
            vec!["x".into()],
            "g",
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(group_partition(&ds), vec![vec![0, 2], vec![1]]);

        let ds = TabularDataset::new(
            (0..6).map(|i| vec![i as f64]).collect(),
            vec![0, 1, 0, 1, 0, 1],
            vec![0, 1, 1, 0, 1, 2],
            vec!["x".into()],
            "g",
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let sizes: Vec<usize> = group_partition(&ds).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 3, 1]);
    }

    #[test]
    fn baseline_examples() {
        let ds = TabularDataset::new(
            vec![vec![1.0, 3.0], vec![3.0, 5.0]],
            vec![0, 1],
            vec![0, 1],
            vec!["a".into(), "b".into()],
            "g",
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(baseline_vector(&ds, BaselineKind::Mean).values, vec![2.0, 4.0]);
        assert_eq!(baseline_vector(&ds, BaselineKind::Zero).values, vec![0.0, 0.0]);
        let single = ds.subset(&[1]);
        assert_eq!(baseline_vector(&single, BaselineKind::Mean).values, vec![3.0, 5.0]);
    }

    #[test]
    fn zero_baseline_matches_dimension() {
        let ds = TabularDataset::new(
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            vec![0, 1],
            vec![0, 1],
            vec!["a".into(), "b".into(), "c".into()],
            "g",
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(baseline_vector(&ds, BaselineKind::Zero).values, vec![0.0; 3]);
    }
}

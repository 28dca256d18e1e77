//! Discrete classification data: CSV ingestion, 1-D K-means discretization,
//! stratified orderings and half splits.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng, STREAM_COLUMN};

/// Label of the reserved category that missing cells are mapped to.
pub const MISSING_LABEL: &str = "<missing>";

/// Default number of K-means bins for continuous columns.
pub const DEFAULT_BINS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarKind {
    Discrete,
    /// Discretized from real values; `centroids[i]` is the center of bin `i`.
    Continuous {
        centroids: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(flatten)]
    pub kind: VarKind,
    pub categories: Vec<String>,
}

impl Variable {
    pub fn discrete(name: impl Into<String>, categories: Vec<String>) -> Self {
        Variable {
            name: name.into(),
            kind: VarKind::Discrete,
            categories,
        }
    }

    pub fn cardinality(&self) -> usize {
        self.categories.len()
    }
}

/// Column layout of a dataset. Feature `j` is the `j`-th column that is not
/// the class column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    variables: Vec<Variable>,
    class_index: usize,
}

impl Schema {
    pub fn new(variables: Vec<Variable>, class_index: usize) -> Result<Self> {
        if class_index >= variables.len() {
            return Err(Error::InvalidDataset(format!(
                "class index {class_index} out of range for {} columns",
                variables.len()
            )));
        }
        if !matches!(variables[class_index].kind, VarKind::Discrete) {
            return Err(Error::InvalidDataset(
                "class variable must be discrete".into(),
            ));
        }
        for v in &variables {
            if v.categories.is_empty() {
                return Err(Error::InvalidDataset(format!(
                    "variable {} has no categories",
                    v.name
                )));
            }
            let mut seen = std::collections::HashSet::new();
            for c in &v.categories {
                if !seen.insert(c.as_str()) {
                    return Err(Error::InvalidDataset(format!(
                        "duplicate category {c:?} in variable {}",
                        v.name
                    )));
                }
            }
        }
        Ok(Schema {
            variables,
            class_index,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn class_variable(&self) -> &Variable {
        &self.variables[self.class_index]
    }

    pub fn n_classes(&self) -> usize {
        self.class_variable().cardinality()
    }

    pub fn n_features(&self) -> usize {
        self.variables.len() - 1
    }

    /// Column index of feature `j`.
    pub fn feature_column(&self, j: usize) -> usize {
        if j < self.class_index {
            j
        } else {
            j + 1
        }
    }

    pub fn feature(&self, j: usize) -> &Variable {
        &self.variables[self.feature_column(j)]
    }

    pub fn features(&self) -> impl Iterator<Item = &Variable> + '_ {
        (0..self.n_features()).map(move |j| self.feature(j))
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features().map(|v| v.name.clone()).collect()
    }

    pub fn feature_cardinalities(&self) -> Vec<usize> {
        self.features().map(Variable::cardinality).collect()
    }
}

/// One data row split into its class value and its feature values.
#[derive(Debug, Clone, Copy)]
pub struct RowRef<'a> {
    pub class: u32,
    pub features: &'a [u32],
}

/// Immutable matrix of category indices. Rows are stored as a class column
/// plus a row-major feature block.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    classes: Vec<u32>,
    features: Vec<u32>,
}

impl Dataset {
    /// Build from full rows in schema column order.
    pub fn new(schema: Schema, rows: &[Vec<u32>]) -> Result<Self> {
        let n_cols = schema.variables.len();
        let nf = schema.n_features();
        let mut classes = Vec::with_capacity(rows.len());
        let mut features = Vec::with_capacity(rows.len() * nf);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} cells, expected {n_cols}",
                    row.len()
                )));
            }
            for (col, (&value, var)) in row.iter().zip(&schema.variables).enumerate() {
                if value as usize >= var.cardinality() {
                    return Err(Error::ValueOutOfRange {
                        variable: col,
                        value,
                        cardinality: var.cardinality(),
                    });
                }
            }
            classes.push(row[schema.class_index]);
            features.extend(
                row.iter()
                    .enumerate()
                    .filter(|&(col, _)| col != schema.class_index)
                    .map(|(_, &v)| v),
            );
        }
        Ok(Dataset {
            schema: Arc::new(schema),
            classes,
            features,
        })
    }

    /// Build a dataset with generated names from rows of the form
    /// `[feature_0, .., feature_{n-1}, class]`.
    pub fn from_codes(
        feature_cards: &[usize],
        n_classes: usize,
        rows: &[Vec<u32>],
    ) -> Result<Self> {
        let label = |r: usize| (0..r).map(|v| v.to_string()).collect::<Vec<_>>();
        let mut variables: Vec<Variable> = feature_cards
            .iter()
            .enumerate()
            .map(|(j, &r)| Variable::discrete(format!("x{j}"), label(r)))
            .collect();
        variables.push(Variable::discrete("class", label(n_classes)));
        let class_index = feature_cards.len();
        Dataset::new(Schema::new(variables, class_index)?, rows)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    pub fn row(&self, i: usize) -> RowRef<'_> {
        let nf = self.n_features();
        RowRef {
            class: self.classes[i],
            features: &self.features[i * nf..(i + 1) * nf],
        }
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = RowRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn class_values(&self) -> &[u32] {
        &self.classes
    }

    /// Number of distinct class values that actually occur.
    pub fn observed_classes(&self) -> usize {
        let mut seen = vec![false; self.n_classes()];
        for &c in &self.classes {
            seen[c as usize] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    /// Value at (`row`, schema column `col`).
    pub fn cell(&self, row: usize, col: usize) -> u32 {
        let ci = self.schema.class_index;
        if col == ci {
            self.classes[row]
        } else {
            let j = if col < ci { col } else { col - 1 };
            self.features[row * self.n_features() + j]
        }
    }

    /// Rows `indices` in the given order, sharing this dataset's schema.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let nf = self.n_features();
        let mut features = Vec::with_capacity(indices.len() * nf);
        for &i in indices {
            features.extend_from_slice(&self.features[i * nf..(i + 1) * nf]);
        }
        Dataset {
            schema: Arc::clone(&self.schema),
            classes: indices.iter().map(|&i| self.classes[i]).collect(),
            features,
        }
    }

    pub fn reorder(&self, ord: &Ordering) -> Result<Dataset> {
        if ord.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "ordering of length {} for {} rows",
                ord.len(),
                self.len()
            )));
        }
        Ok(self.select(ord.as_slice()))
    }

    /// Same feature columns with the class column replaced.
    pub fn with_classes(&self, classes: Vec<u32>) -> Result<Dataset> {
        if classes.len() != self.len() {
            return Err(Error::InvalidArgument(
                "class column length mismatch".into(),
            ));
        }
        let k = self.n_classes();
        if let Some(&bad) = classes.iter().find(|&&c| c as usize >= k) {
            return Err(Error::ValueOutOfRange {
                variable: self.schema.class_index,
                value: bad,
                cardinality: k,
            });
        }
        Ok(Dataset {
            schema: Arc::clone(&self.schema),
            classes,
            features: self.features.clone(),
        })
    }

    /// Same rows with the values of feature `j` replaced.
    pub fn with_feature(&self, j: usize, values: &[u32]) -> Result<Dataset> {
        if values.len() != self.len() || j >= self.n_features() {
            return Err(Error::InvalidArgument(
                "feature column shape mismatch".into(),
            ));
        }
        let r = self.schema.feature(j).cardinality();
        let nf = self.n_features();
        let mut features = self.features.clone();
        for (i, &v) in values.iter().enumerate() {
            if v as usize >= r {
                return Err(Error::ValueOutOfRange {
                    variable: self.schema.feature_column(j),
                    value: v,
                    cardinality: r,
                });
            }
            features[i * nf + j] = v;
        }
        Ok(Dataset {
            schema: Arc::clone(&self.schema),
            classes: self.classes.clone(),
            features,
        })
    }

    /// Write the dataset back out as CSV with category labels.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.variables.iter().map(|v| v.name.as_str()))?;
        let n_cols = self.schema.variables.len();
        for i in 0..self.len() {
            w.write_record((0..n_cols).map(|col| {
                self.schema.variables[col].categories[self.cell(i, col) as usize].as_str()
            }))?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// A permutation of row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering(Vec<usize>);

impl Ordering {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &i in &perm {
            if i >= perm.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(
                    "ordering is not a permutation".into(),
                ));
            }
        }
        Ok(Ordering(perm))
    }

    pub fn identity(n: usize) -> Self {
        Ordering((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

/// How the class column is identified in a CSV header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassColumn {
    Name(String),
    Index(usize),
}

impl ClassColumn {
    /// A header name wins over an index interpretation of the same text.
    fn resolve(&self, header: &[String]) -> Result<usize> {
        match self {
            ClassColumn::Index(i) if *i < header.len() => Ok(*i),
            ClassColumn::Index(i) => Err(Error::ClassColumnAbsent(i.to_string())),
            ClassColumn::Name(name) => {
                if let Some(i) = header.iter().position(|h| h == name) {
                    Ok(i)
                } else if let Ok(i) = name.parse::<usize>() {
                    ClassColumn::Index(i)
                        .resolve(header)
                        .map_err(|_| Error::ClassColumnAbsent(name.clone()))
                } else {
                    Err(Error::ClassColumnAbsent(name.clone()))
                }
            }
        }
    }
}

impl FromStr for ClassColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(ClassColumn::Name(s.to_string()))
    }
}

impl fmt::Display for ClassColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassColumn::Name(n) => f.write_str(n),
            ClassColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Cell values treated as missing.
    pub missing: Vec<String>,
    /// K-means bins for numeric feature columns; 0 keeps numbers as plain categories.
    pub bins: usize,
    pub seed: u64,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            missing: vec!["?".into(), String::new()],
            bins: DEFAULT_BINS,
            seed: 0,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, class: &ClassColumn, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, class, opts)
}

/// Parse CSV text. Discrete categories are indexed in order of first
/// appearance; missing cells map to [`MISSING_LABEL`], appended last.
pub fn read_csv<R: Read>(reader: R, class: &ClassColumn, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let class_index = class.resolve(&header)?;

    let n_cols = header.len();
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); n_cols];
    for record in rdr.records() {
        let record = record?;
        if record.len() != n_cols {
            return Err(Error::RaggedRow {
                line: record.position().map_or(0, |p| p.line() as usize),
                expected: n_cols,
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            columns[col].push(cell.to_string());
        }
    }
    let n_rows = columns[0].len();
    if n_rows == 0 {
        return Err(Error::NoRows);
    }

    let is_missing = |s: &str| opts.missing.iter().any(|m| m == s);
    let mut variables = Vec::with_capacity(n_cols);
    let mut codes: Vec<Vec<u32>> = Vec::with_capacity(n_cols);
    for (col, cells) in columns.iter().enumerate() {
        let numeric = if col != class_index && opts.bins > 0 {
            parse_numeric(cells, &is_missing)
        } else {
            None
        };
        let (var, col_codes) = match numeric {
            Some(values) => {
                let seed = derive_seed(opts.seed, STREAM_COLUMN, col as u64);
                encode_continuous(&header[col], &values, opts.bins, seed)?
            }
            None => encode_discrete(&header[col], cells, &is_missing),
        };
        variables.push(var);
        codes.push(col_codes);
    }

    let rows: Vec<Vec<u32>> = (0..n_rows)
        .map(|i| codes.iter().map(|c| c[i]).collect())
        .collect();
    Dataset::new(Schema::new(variables, class_index)?, &rows)
}

/// `Some` when every non-missing cell parses as a finite number and at least
/// one does; missing cells become `None`.
fn parse_numeric(cells: &[String], is_missing: &impl Fn(&str) -> bool) -> Option<Vec<Option<f64>>> {
    let mut any = false;
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        if is_missing(cell) {
            out.push(None);
            continue;
        }
        let v: f64 = cell.parse().ok()?;
        if !v.is_finite() {
            return None;
        }
        any = true;
        out.push(Some(v));
    }
    any.then_some(out)
}

fn encode_discrete(
    name: &str,
    cells: &[String],
    is_missing: &impl Fn(&str) -> bool,
) -> (Variable, Vec<u32>) {
    let mut categories: Vec<String> = Vec::new();
    let mut index: HashMap<&str, u32> = HashMap::new();
    let mut has_missing = false;
    let mut codes: Vec<Option<u32>> = Vec::with_capacity(cells.len());
    for cell in cells {
        if is_missing(cell) {
            has_missing = true;
            codes.push(None);
            continue;
        }
        let next = categories.len() as u32;
        let code = *index.entry(cell.as_str()).or_insert_with(|| {
            categories.push(cell.clone());
            next
        });
        codes.push(Some(code));
    }
    let missing_code = categories.len() as u32;
    if has_missing {
        categories.push(MISSING_LABEL.to_string());
    }
    let codes = codes
        .into_iter()
        .map(|c| c.unwrap_or(missing_code))
        .collect();
    (Variable::discrete(name, categories), codes)
}

fn encode_continuous(
    name: &str,
    values: &[Option<f64>],
    bins: usize,
    seed: u64,
) -> Result<(Variable, Vec<u32>)> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let disc = discretize_column(&present, bins, seed)?;
    let mut categories: Vec<String> = disc
        .centroids
        .iter()
        .enumerate()
        .map(|(i, c)| format!("b{i}={c}"))
        .collect();
    let missing_code = categories.len() as u32;
    if present.len() < values.len() {
        categories.push(MISSING_LABEL.to_string());
    }
    let mut labels = disc.labels.iter();
    let codes = values
        .iter()
        .map(|v| match v {
            Some(_) => *labels.next().expect("one label per present value") as u32,
            None => missing_code,
        })
        .collect();
    let var = Variable {
        name: name.to_string(),
        kind: VarKind::Continuous {
            centroids: disc.centroids,
        },
        categories,
    };
    Ok((var, codes))
}

/// Result of one-dimensional K-means: one bin label per input value and the
/// ascending bin centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub labels: Vec<usize>,
    pub centroids: Vec<f64>,
}

const KMEANS_MAX_ITER: usize = 500;

/// One-dimensional K-means (Lloyd iterations) started from `k` evenly spaced
/// quantiles. Labels are order preserving. With fewer than `k` distinct
/// values every distinct value gets its own bin.
pub fn discretize_column(values: &[f64], k: usize, seed: u64) -> Result<Discretization> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "bin count must be at least 1".into(),
        ));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("nothing to discretize".into()));
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { value: bad });
    }

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // distinct values with multiplicities
    let mut distinct: Vec<f64> = Vec::new();
    let mut weight: Vec<f64> = Vec::new();
    for &v in &sorted {
        if distinct.last() == Some(&v) {
            *weight.last_mut().unwrap() += 1.0;
        } else {
            distinct.push(v);
            weight.push(1.0);
        }
    }
    let d = distinct.len();

    let centroids = if d <= k {
        distinct.clone()
    } else {
        lloyd(&sorted, &distinct, &weight, k, seed)
    };
    let labels = values.iter().map(|&v| nearest(&centroids, v)).collect();
    Ok(Discretization { labels, centroids })
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(centroids: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &c) in centroids.iter().enumerate() {
        let dist = (v - c).abs();
        if dist < best_dist {
            best = i;
            best_dist = dist;
        }
    }
    best
}

fn lloyd(sorted: &[f64], distinct: &[f64], weight: &[f64], k: usize, seed: u64) -> Vec<f64> {
    let n = sorted.len();
    let d = distinct.len();
    let mut centroids: Vec<f64> = (0..k)
        .map(|i| sorted[((2 * i + 1) * n) / (2 * k)])
        .collect();
    centroids.dedup();
    if centroids.len() < k {
        centroids = (0..k)
            .map(|i| distinct[((2 * i + 1) * d) / (2 * k)])
            .collect();
    }

    let mut rng = rng(seed);
    let mut assign = vec![usize::MAX; d];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (a, &v) in assign.iter_mut().zip(distinct) {
            let b = nearest(&centroids, v);
            if *a != b {
                *a = b;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sum = vec![0.0; k];
        let mut mass = vec![0.0; k];
        for ((&a, &v), &w) in assign.iter().zip(distinct).zip(weight) {
            sum[a] += v * w;
            mass[a] += w;
        }
        for c in 0..k {
            if mass[c] > 0.0 {
                centroids[c] = sum[c] / mass[c];
            } else {
                // Empty cluster: restart it at a value farthest from its
                // current center, choosing among equally far values at random.
                let far = |i: usize| (distinct[i] - centroids[assign[i]]).abs();
                let max = (0..d).map(far).fold(0.0, f64::max);
                let candidates: Vec<usize> = (0..d).filter(|&i| far(i) == max).collect();
                centroids[c] = distinct[candidates[rng.gen_range(0..candidates.len())]];
            }
        }
        centroids.sort_by(f64::total_cmp);
        centroids.dedup();
        if centroids.len() < k {
            // Colliding centers: keep the distinct ones and stop splitting.
            return finish(distinct, weight, &centroids);
        }
    }
    finish(distinct, weight, &centroids)
}

/// Drop centroids that own no value and recompute the rest as exact means.
fn finish(distinct: &[f64], weight: &[f64], centroids: &[f64]) -> Vec<f64> {
    let k = centroids.len();
    let mut sum = vec![0.0; k];
    let mut mass = vec![0.0; k];
    for (&v, &w) in distinct.iter().zip(weight) {
        let a = nearest(centroids, v);
        sum[a] += v * w;
        mass[a] += w;
    }
    sum.iter()
        .zip(&mass)
        .filter(|&(_, &m)| m > 0.0)
        .map(|(&s, &m)| s / m)
        .collect()
}

/// Row permutation that keeps every prefix's class counts within one of the
/// global class proportions. Rows of each class are shuffled, then classes
/// are interleaved by largest deficit; ties among classes follow a seeded
/// class priority.
pub fn stratified_order(data: &Dataset, seed: u64) -> Ordering {
    let k = data.n_classes();
    let n = data.len();
    let mut rng = rng(seed);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in data.class_values().iter().enumerate() {
        groups[c as usize].push(i);
    }
    for g in &mut groups {
        g.shuffle(&mut rng);
    }
    let mut priority: Vec<usize> = (0..k).collect();
    priority.shuffle(&mut rng);

    let mut taken = vec![0usize; k];
    let mut perm = Vec::with_capacity(n);
    for m in 1..=n {
        // deficit scaled by n: m * n_c - taken_c * n
        let pick = (0..k)
            .filter(|&c| taken[c] < groups[c].len())
            .max_by(|&a, &b| {
                let da = (m * groups[a].len()) as i128 - (taken[a] * n) as i128;
                let db = (m * groups[b].len()) as i128 - (taken[b] * n) as i128;
                da.cmp(&db).then(priority[b].cmp(&priority[a]))
            })
            .expect("rows remain while m <= n");
        perm.push(groups[pick][taken[pick]]);
        taken[pick] += 1;
    }
    Ordering(perm)
}

/// First `ceil(N/2)` rows of the ordering become training data, the rest test
/// data. Both halves keep the full category universe.
pub fn split_half(data: &Dataset, ord: &Ordering) -> Result<(Dataset, Dataset)> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} rows into two halves",
            data.len()
        )));
    }
    if ord.len() != data.len() {
        return Err(Error::InvalidArgument("ordering length mismatch".into()));
    }
    let cut = data.len().div_ceil(2);
    let perm = ord.as_slice();
    Ok((data.select(&perm[..cut]), data.select(&perm[cut..])))
}

/// Stratified subsample of `size` rows, or all rows when `size >= N`.
pub fn subsample(data: &Dataset, size: usize, seed: u64) -> Dataset {
    if size >= data.len() {
        return data.clone();
    }
    let ord = stratified_order(data, seed);
    data.select(&ord.as_slice()[..size])
}

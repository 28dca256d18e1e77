//! Pruned Naive Bayes models: the class is the only parent, and each feature
//! either hangs off the class or stands alone. All parameters carry uniform
//! Dirichlet priors (every hyperparameter is 1), so predictive distributions
//! are Laplace-smoothed frequencies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RowRef};
use crate::error::{Error, Result};

/// The subset of features that have an arc from the class node. Bit `j` of
/// the mask marks feature `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Structure {
    n_features: usize,
    mask: u64,
}

impl Structure {
    pub const MAX_FEATURES: usize = 64;

    pub fn empty(n_features: usize) -> Self {
        assert!(n_features <= Self::MAX_FEATURES);
        Structure {
            n_features,
            mask: 0,
        }
    }

    /// Standard Naive Bayes: every feature selected.
    pub fn full(n_features: usize) -> Self {
        assert!(n_features <= Self::MAX_FEATURES);
        let mask = if n_features == 64 {
            u64::MAX
        } else {
            (1u64 << n_features) - 1
        };
        Structure { n_features, mask }
    }

    pub fn from_mask(n_features: usize, mask: u64) -> Result<Self> {
        if n_features > Self::MAX_FEATURES {
            return Err(Error::InvalidArgument(format!(
                "at most {} features supported",
                Self::MAX_FEATURES
            )));
        }
        if mask & !Structure::full(n_features).mask != 0 {
            return Err(Error::StructureMismatch(format!(
                "mask {mask} selects features beyond {n_features}"
            )));
        }
        Ok(Structure { n_features, mask })
    }

    pub fn from_indices(n_features: usize, selected: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        for &j in selected {
            if j >= n_features {
                return Err(Error::StructureMismatch(format!(
                    "feature {j} out of range for {n_features} features"
                )));
            }
            mask |= 1 << j;
        }
        Structure::from_mask(n_features, mask)
    }

    /// Parse either a canonical integer mask or comma-separated feature
    /// names. An empty string is the empty structure.
    pub fn parse(text: &str, feature_names: &[String]) -> Result<Self> {
        let n = feature_names.len();
        let text = text.trim();
        if let Ok(mask) = text.parse::<u64>() {
            return Structure::from_mask(n, mask);
        }
        let mut idx = Vec::new();
        for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let j = feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::StructureMismatch(format!("unknown feature {name:?}")))?;
            idx.push(j);
        }
        Structure::from_indices(n, &idx)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn contains(&self, j: usize) -> bool {
        j < self.n_features && self.mask >> j & 1 == 1
    }

    /// Number of selected features.
    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_features).filter(move |&j| self.contains(j))
    }

    pub fn names(&self, feature_names: &[String]) -> Vec<String> {
        self.selected().map(|j| feature_names[j].clone()).collect()
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ZeroOne,
    Log,
}

impl LossKind {
    pub const ALL: [LossKind; 2] = [LossKind::ZeroOne, LossKind::Log];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::ZeroOne => "zero_one",
            LossKind::Log => "log",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_one" | "zero-one" | "01" | "0/1" => Ok(LossKind::ZeroOne),
            "log" => Ok(LossKind::Log),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss {other:?} (expected zero_one or log)"
            ))),
        }
    }
}

/// A distribution over class values, kept in both linear and log form.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn uniform(k: usize) -> Self {
        let lp = -(k as f64).ln();
        ClassDistribution {
            probs: vec![1.0 / k as f64; k],
            log_probs: vec![lp; k],
        }
    }

    /// Normalize unnormalized log scores. At least one score must be finite.
    pub fn from_log_scores(scores: &[f64]) -> Self {
        let norm = log_sum_exp(scores);
        let log_probs: Vec<f64> = scores.iter().map(|s| s - norm).collect();
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        ClassDistribution { probs, log_probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &lp) in self.log_probs.iter().enumerate() {
            if lp > self.log_probs[best] {
                best = c;
            }
        }
        best
    }

    /// Loss of this prediction when the true class is `truth`. Log loss is
    /// in nats.
    pub fn loss(&self, truth: u32, kind: LossKind) -> f64 {
        match kind {
            LossKind::Log => -self.log_probs[truth as usize],
            LossKind::ZeroOne => f64::from(u8::from(self.argmax() != truth as usize)),
        }
    }
}

/// `ln Σ exp(x)`, stable for large magnitudes; `-inf` when every entry is.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Add,
    Remove,
}

/// Count tables summarizing a training set for one structure.
///
/// `cond[j]` is a flat `K × r_j` table (class-major) for selected features and
/// empty otherwise; `marg[j]` is kept for every feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffStats {
    structure: Structure,
    cards: Vec<usize>,
    class_counts: Vec<u32>,
    cond: Vec<Vec<u32>>,
    marg: Vec<Vec<u32>>,
    total: u32,
}

impl SuffStats {
    pub fn empty(n_classes: usize, feature_cards: &[usize], structure: Structure) -> Result<Self> {
        if structure.n_features() != feature_cards.len() {
            return Err(Error::StructureMismatch(format!(
                "structure over {} features, data has {}",
                structure.n_features(),
                feature_cards.len()
            )));
        }
        let cond = feature_cards
            .iter()
            .enumerate()
            .map(|(j, &r)| {
                if structure.contains(j) {
                    vec![0; n_classes * r]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Ok(SuffStats {
            structure,
            cards: feature_cards.to_vec(),
            class_counts: vec![0; n_classes],
            cond,
            marg: feature_cards.iter().map(|&r| vec![0; r]).collect(),
            total: 0,
        })
    }

    /// Empty statistics shaped for `data`'s schema.
    pub fn for_schema(data: &Dataset, structure: Structure) -> Result<Self> {
        SuffStats::empty(
            data.n_classes(),
            &data.schema().feature_cardinalities(),
            structure,
        )
    }

    pub fn collect(train: &Dataset, structure: Structure) -> Result<Self> {
        let mut stats = SuffStats::for_schema(train, structure)?;
        for row in train.rows() {
            stats.add(row);
        }
        Ok(stats)
    }

    pub fn update(&mut self, row: RowRef<'_>, direction: Direction) -> Result<()> {
        self.check_row(row)?;
        match direction {
            Direction::Add => {
                self.add(row);
                Ok(())
            }
            Direction::Remove => self.remove(row),
        }
    }

    /// Tally a row known to fit this schema.
    pub(crate) fn add(&mut self, row: RowRef<'_>) {
        let c = row.class as usize;
        self.class_counts[c] += 1;
        self.total += 1;
        for (j, &v) in row.features.iter().enumerate() {
            let v = v as usize;
            self.marg[j][v] += 1;
            if !self.cond[j].is_empty() {
                self.cond[j][c * self.cards[j] + v] += 1;
            }
        }
    }

    /// Un-tally a row; fails without modifying anything if any affected
    /// count is zero.
    pub(crate) fn remove(&mut self, row: RowRef<'_>) -> Result<()> {
        let c = row.class as usize;
        let ok = self.class_counts[c] > 0
            && row.features.iter().enumerate().all(|(j, &v)| {
                let v = v as usize;
                self.marg[j][v] > 0
                    && (self.cond[j].is_empty() || self.cond[j][c * self.cards[j] + v] > 0)
            });
        if !ok {
            return Err(Error::NegativeCount);
        }
        self.class_counts[c] -= 1;
        self.total -= 1;
        for (j, &v) in row.features.iter().enumerate() {
            let v = v as usize;
            self.marg[j][v] -= 1;
            if !self.cond[j].is_empty() {
                self.cond[j][c * self.cards[j] + v] -= 1;
            }
        }
        Ok(())
    }

    fn check_features(&self, features: &[u32]) -> Result<()> {
        if features.len() != self.cards.len() {
            return Err(Error::StructureMismatch(format!(
                "expected {} feature values, got {}",
                self.cards.len(),
                features.len()
            )));
        }
        for (j, (&v, &r)) in features.iter().zip(&self.cards).enumerate() {
            if v as usize >= r {
                return Err(Error::ValueOutOfRange {
                    variable: j,
                    value: v,
                    cardinality: r,
                });
            }
        }
        Ok(())
    }

    fn check_row(&self, row: RowRef<'_>) -> Result<()> {
        if row.class as usize >= self.n_classes() {
            return Err(Error::ValueOutOfRange {
                variable: usize::MAX,
                value: row.class,
                cardinality: self.n_classes(),
            });
        }
        self.check_features(row.features)
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn class_counts(&self) -> &[u32] {
        &self.class_counts
    }

    /// `K × r_j` table for a selected feature, class-major.
    pub fn cond_counts(&self, j: usize) -> Option<&[u32]> {
        self.structure.contains(j).then(|| self.cond[j].as_slice())
    }

    pub fn marg_counts(&self, j: usize) -> &[u32] {
        &self.marg[j]
    }

    /// Unnormalized class log scores
    /// `ln P(c) + Σ_{j selected} ln P(u_j | c)` with smoothed parameters.
    /// Their log-sum-exp is the predictive log probability of the selected
    /// feature values.
    pub(crate) fn class_log_scores(&self, features: &[u32], out: &mut Vec<f64>) {
        let k = self.n_classes();
        let denom = f64::from(self.total) + k as f64;
        out.clear();
        for c in 0..k {
            let nc = self.class_counts[c];
            let mut s = ((f64::from(nc) + 1.0) / denom).ln();
            for j in self.structure.selected() {
                let r = self.cards[j];
                let n = self.cond[j][c * r + features[j] as usize];
                s += ((f64::from(n) + 1.0) / (f64::from(nc) + r as f64)).ln();
            }
            out.push(s);
        }
    }

    /// Smoothed `ln P(u_j)` summed over unselected features.
    pub(crate) fn unselected_log_predictive(&self, features: &[u32]) -> f64 {
        let denom_base = f64::from(self.total);
        (0..self.cards.len())
            .filter(|&j| !self.structure.contains(j))
            .map(|j| {
                let n = self.marg[j][features[j] as usize];
                ((f64::from(n) + 1.0) / (denom_base + self.cards[j] as f64)).ln()
            })
            .sum()
    }

    /// Bayesian predictive `P(c | u)` with the parameters integrated out.
    /// Unselected features do not enter.
    pub fn class_predictive(&self, features: &[u32]) -> Result<ClassDistribution> {
        self.check_features(features)?;
        let mut scores = Vec::with_capacity(self.n_classes());
        self.class_log_scores(features, &mut scores);
        Ok(ClassDistribution::from_log_scores(&scores))
    }

    /// `ln P(row | data so far)`: class term, selected conditionals and
    /// unselected marginals, each smoothed.
    pub fn row_log_marginal_predictive(&self, row: RowRef<'_>) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.row_log_predictive_unchecked(row))
    }

    pub(crate) fn row_log_predictive_unchecked(&self, row: RowRef<'_>) -> f64 {
        let k = self.n_classes();
        let c = row.class as usize;
        let nc = f64::from(self.class_counts[c]);
        let mut s = ((nc + 1.0) / (f64::from(self.total) + k as f64)).ln();
        for j in self.structure.selected() {
            let r = self.cards[j];
            let n = self.cond[j][c * r + row.features[j] as usize];
            s += ((f64::from(n) + 1.0) / (nc + r as f64)).ln();
        }
        s + self.unselected_log_predictive(row.features)
    }

    /// `ln P(u | data so far)` with the class summed out.
    pub fn feature_log_predictive(&self, features: &[u32]) -> Result<f64> {
        self.check_features(features)?;
        let mut scores = Vec::with_capacity(self.n_classes());
        self.class_log_scores(features, &mut scores);
        Ok(log_sum_exp(&scores) + self.unselected_log_predictive(features))
    }

    /// Posterior-mode parameters. Under uniform priors these are the
    /// empirical frequencies; rows with no data fall back to uniform.
    pub fn plugin_params(&self) -> PluginParameters {
        let freq = |counts: &[u32]| -> Vec<f64> {
            let sum: u32 = counts.iter().sum();
            if sum == 0 {
                vec![1.0 / counts.len() as f64; counts.len()]
            } else {
                counts
                    .iter()
                    .map(|&n| f64::from(n) / f64::from(sum))
                    .collect()
            }
        };
        let k = self.n_classes();
        let mut cond = Vec::with_capacity(self.cards.len());
        let mut marg = Vec::with_capacity(self.cards.len());
        for (j, &r) in self.cards.iter().enumerate() {
            if self.structure.contains(j) {
                let table = (0..k)
                    .flat_map(|c| freq(&self.cond[j][c * r..(c + 1) * r]))
                    .collect();
                cond.push(Some(table));
                marg.push(None);
            } else {
                cond.push(None);
                marg.push(Some(freq(&self.marg[j])));
            }
        }
        PluginParameters {
            structure: self.structure,
            cards: self.cards.clone(),
            class_probs: freq(&self.class_counts),
            cond_probs: cond,
            marg_probs: marg,
        }
    }
}

/// Point-estimate parameter tables. `cond_probs[j]` is `Some` (flat
/// `K × r_j`) exactly for selected features, `marg_probs[j]` exactly for the
/// others.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginParameters {
    structure: Structure,
    cards: Vec<usize>,
    pub class_probs: Vec<f64>,
    pub cond_probs: Vec<Option<Vec<f64>>>,
    pub marg_probs: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PluginPrediction {
    pub dist: ClassDistribution,
    /// Every class had zero plug-in probability; `dist` is uniform.
    pub degenerate: bool,
}

impl PluginParameters {
    pub fn structure(&self) -> Structure {
        self.structure
    }

    /// `P(c | u) ∝ θ_c Π_{j selected} θ_{j,c,u_j}`.
    pub fn class_predictive(&self, features: &[u32]) -> Result<PluginPrediction> {
        if features.len() != self.cards.len() {
            return Err(Error::StructureMismatch(format!(
                "expected {} feature values, got {}",
                self.cards.len(),
                features.len()
            )));
        }
        for (j, (&v, &r)) in features.iter().zip(&self.cards).enumerate() {
            if v as usize >= r {
                return Err(Error::ValueOutOfRange {
                    variable: j,
                    value: v,
                    cardinality: r,
                });
            }
        }
        Ok(self.class_predictive_unchecked(features))
    }

    pub(crate) fn class_predictive_unchecked(&self, features: &[u32]) -> PluginPrediction {
        let k = self.class_probs.len();
        let scores: Vec<f64> = (0..k)
            .map(|c| {
                let mut s = self.class_probs[c].ln();
                for j in self.structure.selected() {
                    let r = self.cards[j];
                    let table = self.cond_probs[j].as_ref().expect("selected feature");
                    s += table[c * r + features[j] as usize].ln();
                }
                s
            })
            .collect();
        if scores.iter().all(|&s| s == f64::NEG_INFINITY) {
            PluginPrediction {
                dist: ClassDistribution::uniform(k),
                degenerate: true,
            }
        } else {
            PluginPrediction {
                dist: ClassDistribution::from_log_scores(&scores),
                degenerate: false,
            }
        }
    }
}

//! Model-selection scores for pruned Naive Bayes structures.
//!
//! Every score is on a natural-log scale and larger is better. Loss-based
//! criteria (leave-one-out, k-fold, training loss) report the negated mean
//! per-row loss, so scores are comparable across sample sizes.
//!
//! Scores that are defined as sums over rows add their terms in sorted order,
//! which makes them bit-identical under any permutation of the rows.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_order, Dataset, Ordering};
use crate::error::{Error, Result};
use crate::nbmodel::{log_sum_exp, LossKind, Structure, SuffStats};
use crate::seed::{derive_seed, STREAM_ORDERING};

/// Largest number of class-column configurations the exact supervised
/// score enumerates by default.
pub const DEFAULT_EXACT_BUDGET: u64 = 1 << 20;

pub const DEFAULT_FOLDS: usize = 10;

/// Names accepted by [`CriterionSpec::from_name`].
pub const CRITERION_NAMES: [&str; 10] = [
    "uevi",
    "sevi-approx",
    "sevi-exact",
    "preq",
    "preq10",
    "loocv",
    "fcv",
    "fcv10",
    "trloss",
    "bic",
];

/// A log-scale score; `-inf` ranks below everything.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Score(pub f64);

impl Score {
    pub const NEG_INFINITY: Score = Score(f64::NEG_INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Finite value, or `None` for `-inf`.
    pub fn finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    /// Total order treating `-0.0 == 0.0`.
    pub fn cmp_value(self, other: Score) -> std::cmp::Ordering {
        self.0.partial_cmp(&other.0).expect("scores are never NaN")
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    /// Marginal likelihood of the full data.
    Uevi,
    /// Plug-in supervised likelihood at the posterior-mode parameters.
    SeviApprox,
    /// Supervised marginal likelihood by enumerating class columns.
    SeviExact,
    /// Prequential class-conditional log score.
    Preq,
    LooCv,
    KFold,
    /// Loss on the training data itself under plug-in parameters.
    TrLoss,
    Bic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    /// Used by `LooCv`, `KFold` and `TrLoss`.
    pub loss: LossKind,
    /// Used by `KFold`.
    pub folds: usize,
    /// Used by `Preq` and `KFold`. With 1 the rows are taken in their given
    /// order; with more, scores are averaged over seeded stratified
    /// reorderings.
    pub orderings: usize,
    pub seed: u64,
    /// Used by `SeviExact`.
    pub exact_budget: u64,
}

impl CriterionSpec {
    pub fn new(kind: CriterionKind) -> Self {
        CriterionSpec {
            kind,
            loss: LossKind::Log,
            folds: DEFAULT_FOLDS,
            orderings: 1,
            seed: 0,
            exact_budget: DEFAULT_EXACT_BUDGET,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        use CriterionKind::*;
        let (kind, orderings) = match name {
            "uevi" => (Uevi, 1),
            "sevi-approx" => (SeviApprox, 1),
            "sevi-exact" => (SeviExact, 1),
            "preq" => (Preq, 1),
            "preq10" => (Preq, 10),
            "loocv" => (LooCv, 1),
            "fcv" => (KFold, 1),
            "fcv10" => (KFold, 10),
            "trloss" => (TrLoss, 1),
            "bic" => (Bic, 1),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown criterion {other:?}; valid: {}",
                    CRITERION_NAMES.join(", ")
                )))
            }
        };
        Ok(CriterionSpec {
            orderings,
            ..CriterionSpec::new(kind)
        })
    }

    /// The command-line name of this criterion.
    pub fn name(&self) -> String {
        use CriterionKind::*;
        let base = match self.kind {
            Uevi => "uevi",
            SeviApprox => "sevi-approx",
            SeviExact => "sevi-exact",
            Preq => "preq",
            LooCv => "loocv",
            KFold => "fcv",
            TrLoss => "trloss",
            Bic => "bic",
        };
        match self.kind {
            Preq | KFold if self.orderings > 1 => format!("{base}{}", self.orderings),
            _ => base.to_string(),
        }
    }

    pub fn uses_loss(&self) -> bool {
        matches!(
            self.kind,
            CriterionKind::LooCv | CriterionKind::KFold | CriterionKind::TrLoss
        )
    }

    pub fn with_loss(self, loss: LossKind) -> Self {
        CriterionSpec { loss, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        CriterionSpec { seed, ..self }
    }

    pub fn validate(&self, n_rows: usize) -> Result<()> {
        if self.orderings == 0 {
            return Err(Error::InvalidArgument(
                "orderings must be at least 1".into(),
            ));
        }
        match self.kind {
            CriterionKind::KFold if self.folds < 2 || self.folds > n_rows => Err(
                Error::InvalidArgument(format!("{} folds invalid for {n_rows} rows", self.folds)),
            ),
            CriterionKind::LooCv if n_rows < 2 => Err(Error::InvalidArgument(
                "leave-one-out needs at least 2 rows".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn score(&self, train: &Dataset, m: Structure) -> Result<Score> {
        use CriterionKind::*;
        self.validate(train.len())?;
        match self.kind {
            Uevi => score_uevi(train, m),
            SeviApprox => score_sevi_approx(train, m),
            SeviExact => score_sevi_exact(train, m, self.exact_budget),
            Preq if self.orderings == 1 => score_preq(train, m, &Ordering::identity(train.len())),
            Preq => score_preq_avg(train, m, self.orderings, self.seed),
            LooCv => score_loocv(train, m, self.loss),
            KFold if self.orderings == 1 => {
                let ord = Ordering::identity(train.len());
                Ok(Score(-kfold_mean_loss(
                    train, m, self.folds, self.loss, &ord,
                )?))
            }
            KFold => score_kfold(train, m, self.folds, self.loss, self.orderings, self.seed),
            TrLoss => score_trloss(train, m, self.loss),
            Bic => score_bic(train, m),
        }
    }
}

impl FromStr for CriterionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CriterionSpec::from_name(s)
    }
}

impl fmt::Display for CriterionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// `ln k!` for `k = 0..=n`.
pub(crate) struct LnFactorial(Vec<f64>);

impl LnFactorial {
    pub(crate) fn up_to(n: usize) -> Self {
        let mut t = Vec::with_capacity(n + 1);
        t.push(0.0);
        let mut acc = 0.0;
        for k in 1..=n {
            acc += (k as f64).ln();
            t.push(acc);
        }
        LnFactorial(t)
    }

    /// `ln Γ(m)` for a positive integer `m`.
    #[inline]
    pub(crate) fn ln_gamma(&self, m: usize) -> f64 {
        self.0[m - 1]
    }
}

/// `ln [Γ(r) / Γ(n + r)] + Σ_v ln Γ(n_v + 1)` for one Dirichlet-multinomial
/// block with `r` cells summing to `n`.
fn dm_block(lf: &LnFactorial, counts: &[u32], n: u32) -> f64 {
    let r = counts.len();
    let mut s = lf.ln_gamma(r) - lf.ln_gamma(n as usize + r);
    for &c in counts {
        s += lf.ln_gamma(c as usize + 1);
    }
    s
}

fn ln_factorial_for(stats: &SuffStats) -> LnFactorial {
    let max_r = stats
        .cardinalities()
        .iter()
        .copied()
        .chain(std::iter::once(stats.n_classes()))
        .max()
        .unwrap_or(1);
    LnFactorial::up_to(stats.total() as usize + max_r)
}

/// Class node plus selected conditionals: the part of the log evidence that
/// depends on the class column.
fn class_dependent_log_evidence(stats: &SuffStats, lf: &LnFactorial) -> f64 {
    let mut s = dm_block(lf, stats.class_counts(), stats.total());
    for j in stats.structure().selected() {
        let r = stats.cardinalities()[j];
        let table = stats.cond_counts(j).expect("selected");
        for (c, &nc) in stats.class_counts().iter().enumerate() {
            s += dm_block(lf, &table[c * r..(c + 1) * r], nc);
        }
    }
    s
}

/// Closed-form log marginal likelihood `ln P(D | M)` with all Dirichlet
/// hyperparameters equal to 1.
pub fn log_evidence(stats: &SuffStats) -> f64 {
    let lf = ln_factorial_for(stats);
    let mut s = class_dependent_log_evidence(stats, &lf);
    for j in 0..stats.cardinalities().len() {
        if !stats.structure().contains(j) {
            s += dm_block(&lf, stats.marg_counts(j), stats.total());
        }
    }
    s
}

pub fn score_uevi(train: &Dataset, m: Structure) -> Result<Score> {
    Ok(Score(log_evidence(&SuffStats::collect(train, m)?)))
}

fn check_ordering(train: &Dataset, ord: &Ordering) -> Result<()> {
    if ord.len() != train.len() {
        return Err(Error::InvalidArgument(format!(
            "ordering of length {} for {} rows",
            ord.len(),
            train.len()
        )));
    }
    Ok(())
}

/// Walk rows in `ord`, calling `step` with the statistics of all earlier
/// rows before adding the current one.
fn sequential<F>(train: &Dataset, m: Structure, ord: &Ordering, mut step: F) -> Result<()>
where
    F: FnMut(&SuffStats, crate::dataset::RowRef<'_>),
{
    check_ordering(train, ord)?;
    let mut stats = SuffStats::for_schema(train, m)?;
    for &i in ord.as_slice() {
        let row = train.row(i);
        step(&stats, row);
        stats.add(row);
    }
    Ok(())
}

/// `Σ_i ln P(x_i | x_1..x_{i-1})` along `ord`; equals the log evidence for
/// every ordering.
pub fn sequential_log_evidence(train: &Dataset, m: Structure, ord: &Ordering) -> Result<f64> {
    let mut total = 0.0;
    sequential(train, m, ord, |stats, row| {
        total += stats.row_log_predictive_unchecked(row);
    })?;
    Ok(total)
}

/// Prequential class log score `Σ_i ln P(v_i | v^{i-1}, u^i)`.
pub fn score_preq(train: &Dataset, m: Structure, ord: &Ordering) -> Result<Score> {
    let mut total = 0.0;
    let mut scores = Vec::with_capacity(train.n_classes());
    sequential(train, m, ord, |stats, row| {
        stats.class_log_scores(row.features, &mut scores);
        total += scores[row.class as usize] - log_sum_exp(&scores);
    })?;
    Ok(Score(total))
}

/// Mean prequential score over `orderings` seeded stratified orderings.
pub fn score_preq_avg(train: &Dataset, m: Structure, orderings: usize, seed: u64) -> Result<Score> {
    if orderings == 0 {
        return Err(Error::InvalidArgument(
            "orderings must be at least 1".into(),
        ));
    }
    let mut sum = 0.0;
    for r in 0..orderings {
        let ord = stratified_order(train, derive_seed(seed, STREAM_ORDERING, r as u64));
        sum += score_preq(train, m, &ord)?.0;
    }
    Ok(Score(sum / orderings as f64))
}

/// The complementary factor `Σ_i ln P(u_i | v^{i-1}, u^{i-1})`, class summed
/// out at each step.
pub fn feature_prequential(train: &Dataset, m: Structure, ord: &Ordering) -> Result<Score> {
    let mut total = 0.0;
    let mut scores = Vec::with_capacity(train.n_classes());
    sequential(train, m, ord, |stats, row| {
        // with no arcs the class sums out to exactly 1
        if !m.is_empty() {
            stats.class_log_scores(row.features, &mut scores);
            total += log_sum_exp(&scores);
        }
        total += stats.unselected_log_predictive(row.features);
    })?;
    Ok(Score(total))
}

/// Sum in ascending order so the result does not depend on input order.
fn order_free_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// Per-row held-out losses: each row is predicted from all other rows.
fn leave_one_out_losses(train: &Dataset, m: Structure, loss: LossKind) -> Result<Vec<f64>> {
    let mut stats = SuffStats::collect(train, m)?;
    let mut scores = Vec::with_capacity(train.n_classes());
    let mut out = Vec::with_capacity(train.len());
    for row in train.rows() {
        stats.remove(row)?;
        stats.class_log_scores(row.features, &mut scores);
        out.push(loss_from_scores(&scores, row.class, loss));
        stats.add(row);
    }
    Ok(out)
}

fn loss_from_scores(scores: &[f64], truth: u32, loss: LossKind) -> f64 {
    match loss {
        LossKind::Log => log_sum_exp(scores) - scores[truth as usize],
        LossKind::ZeroOne => {
            let mut best = 0;
            for (c, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = c;
                }
            }
            f64::from(u8::from(best != truth as usize))
        }
    }
}

/// Negated mean leave-one-out loss.
pub fn score_loocv(train: &Dataset, m: Structure, loss: LossKind) -> Result<Score> {
    if train.len() < 2 {
        return Err(Error::InvalidArgument(
            "leave-one-out needs at least 2 rows".into(),
        ));
    }
    let losses = leave_one_out_losses(train, m, loss)?;
    Ok(Score(-order_free_sum(losses) / train.len() as f64))
}

/// Mean held-out loss over `k` contiguous folds of `ord`. The first
/// `N mod k` folds hold one extra row.
pub fn kfold_mean_loss(
    train: &Dataset,
    m: Structure,
    k: usize,
    loss: LossKind,
    ord: &Ordering,
) -> Result<f64> {
    let n = train.len();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "{k} folds invalid for {n} rows"
        )));
    }
    check_ordering(train, ord)?;
    let mut stats = SuffStats::collect(train, m)?;
    let mut scores = Vec::with_capacity(train.n_classes());
    let mut losses = Vec::with_capacity(n);
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    for f in 0..k {
        let fold = &ord.as_slice()[start..start + base + usize::from(f < extra)];
        start += fold.len();
        for &i in fold {
            stats.remove(train.row(i))?;
        }
        for &i in fold {
            let row = train.row(i);
            stats.class_log_scores(row.features, &mut scores);
            losses.push(loss_from_scores(&scores, row.class, loss));
        }
        for &i in fold {
            stats.add(train.row(i));
        }
    }
    Ok(order_free_sum(losses) / n as f64)
}

/// Negated k-fold loss averaged over `orderings` seeded stratified
/// orderings.
pub fn score_kfold(
    train: &Dataset,
    m: Structure,
    k: usize,
    loss: LossKind,
    orderings: usize,
    seed: u64,
) -> Result<Score> {
    if orderings == 0 {
        return Err(Error::InvalidArgument(
            "orderings must be at least 1".into(),
        ));
    }
    let mut sum = 0.0;
    for r in 0..orderings {
        let ord = stratified_order(train, derive_seed(seed, STREAM_ORDERING, r as u64));
        sum += kfold_mean_loss(train, m, k, loss, &ord)?;
    }
    Ok(Score(-sum / orderings as f64))
}

/// `ln P(v_i | u_i, θ̂)` for every training row, ascending.
fn plugin_log_terms(train: &Dataset, m: Structure) -> Result<Vec<f64>> {
    let params = SuffStats::collect(train, m)?.plugin_params();
    let mut terms: Vec<f64> = train
        .rows()
        .map(|row| {
            let pred = params.class_predictive_unchecked(row.features);
            pred.dist.log_probs()[row.class as usize]
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms)
}

/// Supervised log-likelihood of the class column at the posterior-mode
/// parameters of the full training data.
pub fn score_sevi_approx(train: &Dataset, m: Structure) -> Result<Score> {
    Ok(Score(plugin_log_terms(train, m)?.into_iter().sum()))
}

/// Negated mean training-set loss under plug-in parameters. With log loss
/// this is the plug-in supervised log-likelihood divided by `N`.
pub fn score_trloss(train: &Dataset, m: Structure, loss: LossKind) -> Result<Score> {
    if train.is_empty() {
        SuffStats::for_schema(train, m)?;
        return Ok(Score(0.0));
    }
    let n = train.len() as f64;
    match loss {
        LossKind::Log => {
            let sum: f64 = plugin_log_terms(train, m)?.into_iter().sum();
            Ok(Score(sum / n))
        }
        LossKind::ZeroOne => {
            let params = SuffStats::collect(train, m)?.plugin_params();
            let wrong = train
                .rows()
                .filter(|row| {
                    params
                        .class_predictive_unchecked(row.features)
                        .dist
                        .argmax()
                        != row.class as usize
                })
                .count();
            Ok(Score(-(wrong as f64) / n))
        }
    }
}

/// Exact supervised log marginal likelihood
/// `ln P(v^N, u^N) - ln Σ_{v'} P(v', u^N)` by enumerating every class
/// column. Unselected-feature factors cancel between numerator and
/// denominator and are left out of both.
pub fn score_sevi_exact(train: &Dataset, m: Structure, budget: u64) -> Result<Score> {
    let k = train.n_classes();
    let n = train.len();
    let configs = u32::try_from(n)
        .ok()
        .and_then(|n| (k as u64).checked_pow(n))
        .filter(|&c| c <= budget)
        .ok_or_else(|| Error::BudgetExceeded {
            needed: format!("{k}^{n}"),
            budget,
        })?;

    let stats = SuffStats::collect(train, m)?;
    let lf = ln_factorial_for(&stats);
    let numerator = class_dependent_log_evidence(&stats, &lf);

    let empty = SuffStats::for_schema(train, m)?;
    let mut terms = Vec::with_capacity(configs as usize);
    let mut classes = vec![0u32; n];
    loop {
        let mut s = empty.clone();
        for (i, &c) in classes.iter().enumerate() {
            s.add(crate::dataset::RowRef {
                class: c,
                features: train.row(i).features,
            });
        }
        terms.push(class_dependent_log_evidence(&s, &lf));
        // next configuration, last position fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                terms.sort_by(f64::total_cmp);
                return Ok(Score(numerator - log_sum_exp(&terms)));
            }
            pos -= 1;
            classes[pos] += 1;
            if (classes[pos] as usize) < k {
                break;
            }
            classes[pos] = 0;
        }
    }
}

/// Free parameter count of a structure:
/// `(K-1) + Σ_{selected} K(r_j-1) + Σ_{unselected} (r_j-1)`.
pub fn bic_dimension(n_classes: usize, cards: &[usize], m: Structure) -> usize {
    let mut d = n_classes - 1;
    for (j, &r) in cards.iter().enumerate() {
        d += if m.contains(j) {
            n_classes * (r - 1)
        } else {
            r - 1
        };
    }
    d
}

/// `Σ n ln(n / total)` over a count block, with `0 ln 0 = 0`.
fn ml_block(counts: &[u32], total: u32) -> f64 {
    let t = f64::from(total);
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| f64::from(c) * (f64::from(c) / t).ln())
        .sum()
}

/// Schwarz criterion on the joint likelihood: maximized joint
/// log-likelihood minus `(d/2) ln N`.
pub fn score_bic(train: &Dataset, m: Structure) -> Result<Score> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("BIC needs at least one row".into()));
    }
    let stats = SuffStats::collect(train, m)?;
    let cards = stats.cardinalities();
    let mut ll = ml_block(stats.class_counts(), stats.total());
    for (j, &r) in cards.iter().enumerate() {
        if m.contains(j) {
            let table = stats.cond_counts(j).expect("selected");
            for (c, &nc) in stats.class_counts().iter().enumerate() {
                ll += ml_block(&table[c * r..(c + 1) * r], nc);
            }
        } else {
            ll += ml_block(stats.marg_counts(j), stats.total());
        }
    }
    let d = bic_dimension(stats.n_classes(), cards, m) as f64;
    Ok(Score(ll - 0.5 * d * f64::from(stats.total()).ln()))
}

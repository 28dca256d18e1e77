//! Repeated train/test protocol comparing selection criteria against the
//! full Naive Bayes model.
//!
//! Each repetition draws a stratified ordering, splits it in half, selects a
//! structure on the first half with every criterion, and measures 0/1 and
//! log loss of the Bayesian predictive on the second half. Gains are
//! relative to the full structure; the oracle row is the best structure in
//! hindsight.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::CriterionSpec;
use crate::dataset::{split_half, stratified_order, subsample, Dataset};
use crate::error::{Error, Result};
use crate::nbmodel::{LossKind, Structure, SuffStats};
use crate::search::{enumerate_structures, select_best, SearchOptions, DEFAULT_FEATURE_CAP};
use crate::seed::{derive_seed, STREAM_CRITERION, STREAM_REPETITION, STREAM_SAMPLE};

pub const BASELINE: &str = "baseline";
pub const ORACLE: &str = "oracle";

/// Mean test loss of the Bayesian predictive trained on `train`.
pub fn evaluate_loss(m: Structure, train: &Dataset, test: &Dataset, loss: LossKind) -> Result<f64> {
    let pair = evaluate_losses(m, train, test)?;
    Ok(pair.get(loss))
}

/// Both mean test losses in one pass.
pub fn evaluate_losses(m: Structure, train: &Dataset, test: &Dataset) -> Result<LossPair> {
    if train.schema() != test.schema() {
        return Err(Error::InvalidArgument(
            "train and test schemas differ".into(),
        ));
    }
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let stats = SuffStats::collect(train, m)?;
    let (mut zo, mut lg) = (0.0, 0.0);
    for row in test.rows() {
        let dist = stats.class_predictive(row.features)?;
        zo += dist.loss(row.class, LossKind::ZeroOne);
        lg += dist.loss(row.class, LossKind::Log);
    }
    let n = test.len() as f64;
    Ok(LossPair {
        zero_one: zo / n,
        log: lg / n,
    })
}

/// Percentage by which `method_loss` undercuts `baseline_loss`; `None` when
/// the baseline loss is not positive.
pub fn relative_prediction_gain(method_loss: f64, baseline_loss: f64) -> Option<f64> {
    (baseline_loss > 0.0).then(|| 100.0 * (baseline_loss - method_loss) / baseline_loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPair {
    pub zero_one: f64,
    pub log: f64,
}

impl LossPair {
    pub fn get(&self, loss: LossKind) -> f64 {
        match loss {
            LossKind::ZeroOne => self.zero_one,
            LossKind::Log => self.log,
        }
    }
}

/// Which loss loss-parameterized criteria optimize during selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionLoss {
    /// The loss the result is evaluated with.
    Match,
    ZeroOne,
    Log,
}

impl SelectionLoss {
    fn for_eval(self, eval: LossKind) -> LossKind {
        match self {
            SelectionLoss::Match => eval,
            SelectionLoss::ZeroOne => LossKind::ZeroOne,
            SelectionLoss::Log => LossKind::Log,
        }
    }
}

impl std::str::FromStr for SelectionLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "match" => Ok(SelectionLoss::Match),
            other => match other.parse::<LossKind>()? {
                LossKind::ZeroOne => Ok(SelectionLoss::ZeroOne),
                LossKind::Log => Ok(SelectionLoss::Log),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub criteria: Vec<CriterionSpec>,
    pub repetitions: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// Draw a fresh subsample for every repetition instead of once.
    pub redraw_sample: bool,
    pub selection_loss: SelectionLoss,
    pub feature_cap: usize,
    /// K-means bins used when the data was prepared; echoed only.
    pub bins: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            criteria: Vec::new(),
            repetitions: 50,
            sample_size: 500,
            seed: 0,
            redraw_sample: false,
            selection_loss: SelectionLoss::Match,
            feature_cap: DEFAULT_FEATURE_CAP,
            bins: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub sampled_rows: usize,
    pub class: String,
    pub classes: usize,
    pub features: Vec<String>,
}

/// A structure chosen for one loss column, with its test loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub structure: u64,
    pub features: Vec<String>,
    /// Selection score on the training half; `None` for rows not chosen by
    /// a score, or when the score is `-inf`.
    pub train_score: Option<f64>,
    pub test_loss: f64,
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickPair {
    pub zero_one: Pick,
    pub log: Pick,
}

impl PickPair {
    pub fn get(&self, loss: LossKind) -> &Pick {
        match loss {
            LossKind::ZeroOne => &self.zero_one,
            LossKind::Log => &self.log,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: String,
    #[serde(flatten)]
    pub picks: PickPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub index: usize,
    pub seed: u64,
    pub baseline: PickPair,
    pub oracle: PickPair,
    /// Worst single structure on the test half.
    pub worst: PickPair,
    pub criteria: Vec<CriterionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub gain_01: Option<f64>,
    pub gain_log: Option<f64>,
    pub mean_loss_01: f64,
    pub mean_loss_log: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub repetitions: Vec<RepetitionResult>,
    pub aggregates: BTreeMap<String, Aggregate>,
    /// Front-end settings (data path, class column, ...) echoed by callers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invocation: Option<serde_json::Value>,
}

fn validate(data: &Dataset, config: &ExperimentConfig) -> Result<()> {
    if config.repetitions == 0 {
        return Err(Error::InvalidArgument(
            "repetitions must be at least 1".into(),
        ));
    }
    if config.criteria.is_empty() {
        return Err(Error::InvalidArgument("no criteria given".into()));
    }
    let mut names: Vec<String> = config.criteria.iter().map(CriterionSpec::name).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!(
            "criterion {} listed twice",
            w[0]
        )));
    }
    let observed = data.observed_classes();
    if observed < 2 {
        return Err(Error::TooFewClasses(observed));
    }
    if config.sample_size.min(data.len()) < 2 {
        return Err(Error::InvalidArgument(
            "sample too small to split into train and test".into(),
        ));
    }
    Ok(())
}

/// Run the full protocol. Results do not depend on `workers`.
pub fn run_experiment(
    data: &Dataset,
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<ExperimentReport> {
    validate(data, config)?;
    let run = || -> Result<ExperimentReport> {
        let fixed_sample = subsample(
            data,
            config.sample_size,
            derive_seed(config.seed, STREAM_SAMPLE, 0),
        );
        let repetitions = (0..config.repetitions)
            .into_par_iter()
            .map(|r| {
                let sample = if config.redraw_sample {
                    subsample(
                        data,
                        config.sample_size,
                        derive_seed(config.seed, STREAM_SAMPLE, r as u64),
                    )
                } else {
                    fixed_sample.clone()
                };
                run_repetition(&sample, config, r)
            })
            .collect::<Result<Vec<_>>>()?;
        let schema = data.schema();
        Ok(ExperimentReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            dataset: DatasetSummary {
                rows: data.len(),
                sampled_rows: fixed_sample.len(),
                class: schema.class_variable().name.clone(),
                classes: data.n_classes(),
                features: schema.feature_names(),
            },
            aggregates: aggregate(config, &repetitions),
            repetitions,
            invocation: None,
        })
    };
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

fn run_repetition(
    sample: &Dataset,
    config: &ExperimentConfig,
    r: usize,
) -> Result<RepetitionResult> {
    let seed = derive_seed(config.seed, STREAM_REPETITION, r as u64);
    let ord = stratified_order(sample, seed);
    let (train, test) = split_half(sample, &ord)?;
    let names = sample.schema().feature_names();
    let n = sample.n_features();

    // Test losses of every structure, indexed by mask.
    let structures = enumerate_structures(n, config.feature_cap)?;
    let losses: Vec<LossPair> = structures
        .par_iter()
        .map(|&m| evaluate_losses(m, &train, &test))
        .collect::<Result<_>>()?;
    let baseline = losses[Structure::full(n).mask() as usize];

    let pick = |m: Structure, train_score: Option<f64>, loss: LossKind| Pick {
        structure: m.mask(),
        features: m.names(&names),
        train_score,
        test_loss: losses[m.mask() as usize].get(loss),
        gain: relative_prediction_gain(losses[m.mask() as usize].get(loss), baseline.get(loss)),
        degenerate: false,
    };
    let extreme = |loss: LossKind, worst: bool| {
        let best = structures
            .iter()
            .min_by(|a, b| {
                let (la, lb) = (
                    losses[a.mask() as usize].get(loss),
                    losses[b.mask() as usize].get(loss),
                );
                let by_loss = if worst {
                    lb.total_cmp(&la)
                } else {
                    la.total_cmp(&lb)
                };
                by_loss
                    .then(a.len().cmp(&b.len()))
                    .then(a.mask().cmp(&b.mask()))
            })
            .expect("non-empty enumeration");
        pick(*best, None, loss)
    };
    let pair = |f: &dyn Fn(LossKind) -> Pick| PickPair {
        zero_one: f(LossKind::ZeroOne),
        log: f(LossKind::Log),
    };

    let mut criteria = Vec::with_capacity(config.criteria.len());
    let opts = SearchOptions {
        feature_cap: config.feature_cap,
        workers: None,
    };
    for (idx, spec) in config.criteria.iter().enumerate() {
        let spec = spec.with_seed(derive_seed(seed, STREAM_CRITERION, idx as u64));
        let mut cache: Vec<(CriterionSpec, crate::search::Selection)> = Vec::new();
        let mut choose = |eval: LossKind| -> Result<Pick> {
            let sel_spec = if spec.uses_loss() {
                spec.with_loss(config.selection_loss.for_eval(eval))
            } else {
                spec
            };
            if !cache.iter().any(|(s, _)| *s == sel_spec) {
                let sel = select_best(&train, &sel_spec, &opts)?;
                cache.push((sel_spec, sel));
            }
            let sel = &cache
                .iter()
                .find(|(s, _)| *s == sel_spec)
                .expect("cached")
                .1;
            let mut p = pick(sel.best, sel.score.finite(), eval);
            p.degenerate = sel.degenerate;
            Ok(p)
        };
        let zero_one = choose(LossKind::ZeroOne)?;
        let log = choose(LossKind::Log)?;
        criteria.push(CriterionResult {
            criterion: spec.name(),
            picks: PickPair { zero_one, log },
        });
    }

    let full = Structure::full(n);
    let mut baseline_pair = pair(&|loss| pick(full, None, loss));
    baseline_pair.zero_one.gain = Some(0.0);
    baseline_pair.log.gain = Some(0.0);
    Ok(RepetitionResult {
        index: r,
        seed,
        baseline: baseline_pair,
        oracle: pair(&|loss| extreme(loss, false)),
        worst: pair(&|loss| extreme(loss, true)),
        criteria,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn aggregate_picks<'a>(picks: impl Iterator<Item = &'a PickPair> + Clone) -> Aggregate {
    let col = |loss: LossKind| picks.clone().map(move |p| p.get(loss));
    Aggregate {
        gain_01: mean(col(LossKind::ZeroOne).filter_map(|p| p.gain)),
        gain_log: mean(col(LossKind::Log).filter_map(|p| p.gain)),
        mean_loss_01: mean(col(LossKind::ZeroOne).map(|p| p.test_loss)).unwrap_or(f64::NAN),
        mean_loss_log: mean(col(LossKind::Log).map(|p| p.test_loss)).unwrap_or(f64::NAN),
    }
}

fn aggregate(config: &ExperimentConfig, reps: &[RepetitionResult]) -> BTreeMap<String, Aggregate> {
    let mut out = BTreeMap::new();
    out.insert(
        BASELINE.to_string(),
        aggregate_picks(reps.iter().map(|r| &r.baseline)),
    );
    out.insert(
        ORACLE.to_string(),
        aggregate_picks(reps.iter().map(|r| &r.oracle)),
    );
    for (idx, spec) in config.criteria.iter().enumerate() {
        out.insert(
            spec.name(),
            aggregate_picks(reps.iter().map(move |r| &r.criteria[idx].picks)),
        );
    }
    out
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Flat `criterion,loss,gain` rows for plotting.
    pub fn write_gain_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["criterion", "loss", "gain"])?;
        for (name, agg) in &self.aggregates {
            for (loss, gain) in [
                (LossKind::ZeroOne, agg.gain_01),
                (LossKind::Log, agg.gain_log),
            ] {
                w.write_record([
                    name.as_str(),
                    loss.name(),
                    &gain.map_or_else(String::new, |g| g.to_string()),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<gain csv>", e))?;
        Ok(())
    }

    /// Human-readable gain table, criteria in configuration order.
    pub fn summary_table(&self) -> String {
        let mut rows: Vec<&str> = vec![BASELINE];
        let names: Vec<String> = self
            .config
            .criteria
            .iter()
            .map(CriterionSpec::name)
            .collect();
        rows.extend(names.iter().map(String::as_str));
        rows.push(ORACLE);
        let fmt_gain =
            |g: Option<f64>| g.map_or_else(|| "n/a".to_string(), |g| format!("{g:+.2}%"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12} {:>10} {:>10} {:>10} {:>10}",
            "criterion", "gain 0/1", "gain log", "loss 0/1", "loss log"
        );
        for name in rows {
            if let Some(a) = self.aggregates.get(name) {
                let _ = writeln!(
                    s,
                    "{:<12} {:>10} {:>10} {:>10.4} {:>10.4}",
                    name,
                    fmt_gain(a.gain_01),
                    fmt_gain(a.gain_log),
                    a.mean_loss_01,
                    a.mean_loss_log
                );
            }
        }
        s
    }
}

/// Cross-dataset averages of per-dataset gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub datasets: usize,
    pub criteria: BTreeMap<String, ComparedGain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparedGain {
    pub gain_01: Option<f64>,
    pub gain_log: Option<f64>,
    /// Reports contributing to each mean.
    pub n_01: usize,
    pub n_log: usize,
}

pub fn compare_reports(reports: &[ExperimentReport]) -> Comparison {
    let mut acc: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for report in reports {
        for (name, agg) in &report.aggregates {
            let e = acc.entry(name.clone()).or_default();
            e.0.extend(agg.gain_01);
            e.1.extend(agg.gain_log);
        }
    }
    Comparison {
        datasets: reports.len(),
        criteria: acc
            .into_iter()
            .map(|(name, (g01, glog))| {
                let row = ComparedGain {
                    gain_01: mean(g01.iter().copied()),
                    gain_log: mean(glog.iter().copied()),
                    n_01: g01.len(),
                    n_log: glog.len(),
                };
                (name, row)
            })
            .collect(),
    }
}

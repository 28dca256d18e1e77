//! Exhaustive scoring of every feature subset.

use std::io::Write;

use rayon::prelude::*;

use crate::criteria::{CriterionSpec, Score};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nbmodel::Structure;

/// Default cap on the number of features enumerated.
pub const DEFAULT_FEATURE_CAP: usize = 14;

/// No override may enumerate more than `2^20` structures.
pub const MAX_FEATURE_CAP: usize = 20;

/// All `2^n` structures in ascending mask order.
pub fn enumerate_structures(n_features: usize, cap: usize) -> Result<Vec<Structure>> {
    let cap = cap.min(MAX_FEATURE_CAP);
    if n_features > cap {
        return Err(Error::TooManyFeatures { n_features, cap });
    }
    (0..1u64 << n_features)
        .map(|mask| Structure::from_mask(n_features, mask))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub feature_cap: usize,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub workers: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            feature_cap: DEFAULT_FEATURE_CAP,
            workers: None,
        }
    }
}

/// Every enumerated structure with its score, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub criterion: CriterionSpec,
    pub entries: Vec<(Structure, Score)>,
}

/// Higher score first, then fewer features, then smaller mask.
pub fn rank(a: &(Structure, Score), b: &(Structure, Score)) -> std::cmp::Ordering {
    b.1.cmp_value(a.1)
        .then(a.0.len().cmp(&b.0.len()))
        .then(a.0.mask().cmp(&b.0.mask()))
}

impl ScoreTable {
    /// The `k` best entries under the selection order.
    pub fn top(&self, k: usize) -> Vec<(Structure, Score)> {
        let mut sorted = self.entries.clone();
        sorted.sort_by(rank);
        sorted.truncate(k);
        sorted
    }

    pub fn score_of(&self, m: Structure) -> Option<Score> {
        self.entries
            .iter()
            .find(|(s, _)| *s == m)
            .map(|&(_, score)| score)
    }

    /// CSV with columns `structure_mask,structure_names,score`; names are
    /// `|`-separated and `-inf` is written literally.
    pub fn write_csv<W: Write>(&self, out: W, feature_names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["structure_mask", "structure_names", "score"])?;
        for (s, score) in &self.entries {
            w.write_record([
                s.mask().to_string(),
                s.names(feature_names).join("|"),
                score.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<score table>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: Structure,
    pub score: Score,
    /// Every structure scored `-inf`; `best` is the empty structure.
    pub degenerate: bool,
    pub table: ScoreTable,
}

/// Score all structures over `structures` in parallel, preserving order.
pub(crate) fn score_all<F>(
    structures: &[Structure],
    workers: Option<usize>,
    f: F,
) -> Result<Vec<Score>>
where
    F: Fn(Structure) -> Result<Score> + Sync,
{
    let run = || {
        let threads = rayon::current_num_threads().max(1);
        let chunk = structures.len().div_ceil(threads).max(1);
        structures
            .par_chunks(chunk)
            .map(|part| part.iter().map(|&m| f(m)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
            .map(|parts| parts.into_iter().flatten().collect())
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

/// Score every structure and pick the best one.
pub fn select_best(
    train: &Dataset,
    spec: &CriterionSpec,
    opts: &SearchOptions,
) -> Result<Selection> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("cannot select on empty data".into()));
    }
    spec.validate(train.len())?;
    let structures = enumerate_structures(train.n_features(), opts.feature_cap)?;
    let scores = score_all(&structures, opts.workers, |m| spec.score(train, m))?;
    let entries: Vec<(Structure, Score)> = structures.into_iter().zip(scores).collect();

    let (best, score) = *entries
        .iter()
        .min_by(|a, b| rank(a, b))
        .expect("at least the empty structure");
    let degenerate = score == Score::NEG_INFINITY;
    let (best, score) = if degenerate {
        (Structure::empty(train.n_features()), Score::NEG_INFINITY)
    } else {
        (best, score)
    };
    Ok(Selection {
        best,
        score,
        degenerate,
        table: ScoreTable {
            criterion: *spec,
            entries,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::CriterionKind;

    #[test]
    fn enumeration_order_and_size() {
        assert_eq!(
            enumerate_structures(0, 14).unwrap(),
            vec![Structure::empty(0)]
        );
        let two: Vec<u64> = enumerate_structures(2, 14)
            .unwrap()
            .iter()
            .map(|s| s.mask())
            .collect();
        assert_eq!(two, vec![0, 1, 2, 3]);
        assert_eq!(enumerate_structures(14, 14).unwrap().len(), 16384);
        assert!(matches!(
            enumerate_structures(15, 14),
            Err(Error::TooManyFeatures { .. })
        ));
        assert_eq!(enumerate_structures(15, 15).unwrap().len(), 1 << 15);
        assert!(enumerate_structures(21, 64).is_err());
    }

    #[test]
    fn uevi_prefers_the_arc() {
        let d = Dataset::from_codes(&[2], 2, &[vec![0, 0], vec![1, 1]]).unwrap();
        let sel = select_best(
            &d,
            &CriterionSpec::new(CriterionKind::Uevi),
            &SearchOptions::default(),
        )
        .unwrap();
        assert_eq!(sel.best, Structure::full(1));
        assert!((sel.score.0 - (1.0f64 / 24.0).ln()).abs() < 1e-12);
        assert_eq!(sel.table.entries.len(), 2);
        assert!(!sel.degenerate);
    }

    #[test]
    fn ties_go_to_sparser_then_smaller_mask() {
        let s = |mask| Structure::from_mask(3, mask).unwrap();
        let mut entries = [(s(3), Score(1.0)), (s(4), Score(1.0)), (s(1), Score(1.0))];
        entries.sort_by(rank);
        assert_eq!(entries[0].0, s(1));
        assert_eq!(entries[1].0, s(4));
        let mut e = [(s(1), Score(-0.0)), (s(0), Score(0.0))];
        e.sort_by(rank);
        assert_eq!(e[0].0, s(0));
    }

    #[test]
    fn no_features_single_candidate() {
        let d = Dataset::from_codes(&[], 2, &[vec![0], vec![1], vec![0]]).unwrap();
        let sel = select_best(
            &d,
            &CriterionSpec::new(CriterionKind::Uevi),
            &SearchOptions::default(),
        )
        .unwrap();
        assert_eq!(sel.best, Structure::empty(0));
        assert!((sel.score.0 - (1.0f64 / 12.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn csv_export() {
        let d = Dataset::from_codes(&[2, 2], 2, &[vec![0, 1, 0], vec![1, 1, 1]]).unwrap();
        let sel = select_best(
            &d,
            &CriterionSpec::new(CriterionKind::Uevi),
            &SearchOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        sel.table
            .write_csv(&mut buf, &d.schema().feature_names())
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "structure_mask,structure_names,score");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("3,x0|x1,"));
        assert!(lines[1].starts_with("0,,"));
    }

    #[test]
    fn empty_training_data_is_rejected() {
        let d = Dataset::from_codes(&[2], 2, &[]).unwrap();
        assert!(select_best(
            &d,
            &CriterionSpec::new(CriterionKind::Uevi),
            &SearchOptions::default()
        )
        .is_err());
    }
}

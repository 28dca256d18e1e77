//! Seeded synthetic classification data with known relevant features.

use rand::Rng;

use crate::dataset::{Dataset, Schema, Variable};
use crate::seed::rng;

/// Binary-class data where the first `informative` features copy a class
/// signal with probability `strength` (otherwise uniform noise) and the
/// remaining `noise` features are independent of the class.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub informative: usize,
    pub noise: usize,
    pub cardinality: usize,
    pub strength: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            rows: 400,
            informative: 3,
            noise: 3,
            cardinality: 3,
            strength: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn n_features(&self) -> usize {
        self.informative + self.noise
    }

    /// Feature indices that carry no class signal.
    pub fn noise_features(&self) -> std::ops::Range<usize> {
        self.informative..self.n_features()
    }

    pub fn generate(&self) -> Dataset {
        assert!(self.cardinality >= 2, "features need at least two values");
        let mut rng = rng(self.seed);
        let r = self.cardinality as u32;
        let label = |n: usize| (0..n).map(|v| v.to_string()).collect::<Vec<_>>();
        let mut variables: Vec<Variable> = (0..self.informative)
            .map(|j| Variable::discrete(format!("inf{j}"), label(self.cardinality)))
            .chain(
                (0..self.noise)
                    .map(|j| Variable::discrete(format!("noise{j}"), label(self.cardinality))),
            )
            .collect();
        variables.push(Variable::discrete("class", label(2)));
        let schema = Schema::new(variables, self.n_features()).expect("valid schema");

        let rows: Vec<Vec<u32>> = (0..self.rows)
            .map(|_| {
                let class: u32 = rng.gen_range(0..2);
                let mut row: Vec<u32> = (0..self.informative)
                    .map(|_| {
                        if rng.gen_bool(self.strength) {
                            if class == 0 {
                                0
                            } else {
                                r - 1
                            }
                        } else {
                            rng.gen_range(0..r)
                        }
                    })
                    .collect();
                row.extend((0..self.noise).map(|_| rng.gen_range(0..r)));
                row.push(class);
                row
            })
            .collect();
        Dataset::new(schema, &rows).expect("generated cells are in range")
    }
}

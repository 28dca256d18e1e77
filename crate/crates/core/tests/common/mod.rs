//! Test-only instance generators and brute-force oracles. Nothing here calls
//! the library's scoring code.

#![allow(dead_code)]

use nbselect::{Dataset, Ordering, Structure};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random small instance: data, a structure over its features, and a
/// random ordering.
pub struct Instance {
    pub data: Dataset,
    pub structure: Structure,
    pub ordering: Ordering,
}

pub fn random_instance(
    seed: u64,
    max_rows: usize,
    max_features: usize,
    max_card: usize,
    n_classes: Option<usize>,
) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..=max_rows);
    let nf = rng.gen_range(0..=max_features);
    let k = n_classes.unwrap_or_else(|| rng.gen_range(2..=max_card.max(2)));
    let cards: Vec<usize> = (0..nf)
        .map(|_| rng.gen_range(2..=max_card.max(2)))
        .collect();
    let rows: Vec<Vec<u32>> = (0..n)
        .map(|_| {
            let mut row: Vec<u32> = cards.iter().map(|&r| rng.gen_range(0..r as u32)).collect();
            row.push(rng.gen_range(0..k as u32));
            row
        })
        .collect();
    let data = Dataset::from_codes(&cards, k, &rows).unwrap();
    let mask = rng.gen_range(0..1u64 << nf);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    Instance {
        data,
        structure: Structure::from_mask(nf, mask).unwrap(),
        ordering: Ordering::new(perm).unwrap(),
    }
}

/// Joint log probability of rows `(features, class)` under uniform
/// Dirichlet priors, computed as a product of Pólya-urn draws with its own
/// count tables.
pub fn brute_joint_log(
    rows: &[(Vec<u32>, u32)],
    cards: &[usize],
    k: usize,
    structure: Structure,
) -> f64 {
    let nf = cards.len();
    let mut class_n = vec![0f64; k];
    let mut cond: Vec<Vec<Vec<f64>>> = cards.iter().map(|&r| vec![vec![0.0; r]; k]).collect();
    let mut marg: Vec<Vec<f64>> = cards.iter().map(|&r| vec![0.0; r]).collect();
    let mut seen = 0f64;
    let mut total = 0.0;
    for (u, v) in rows {
        let c = *v as usize;
        let mut p = (class_n[c] + 1.0) / (seen + k as f64);
        for j in 0..nf {
            let x = u[j] as usize;
            let r = cards[j] as f64;
            if structure.contains(j) {
                p *= (cond[j][c][x] + 1.0) / (class_n[c] + r);
            } else {
                p *= (marg[j][x] + 1.0) / (seen + r);
            }
        }
        total += p.ln();
        for j in 0..nf {
            cond[j][c][u[j] as usize] += 1.0;
            marg[j][u[j] as usize] += 1.0;
        }
        class_n[c] += 1.0;
        seen += 1.0;
    }
    total
}

pub fn rows_of(data: &Dataset) -> Vec<(Vec<u32>, u32)> {
    data.rows()
        .map(|r| (r.features.to_vec(), r.class))
        .collect()
}

fn all_columns(k: usize, len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k as u32).map(move |c| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    out
}

/// `Σ_i ln P(v_i | v_1..v_{i-1}, u^N)`, each factor obtained by summing the
/// joint over every completion of the later class values.
pub fn supervised_chain_oracle(data: &Dataset, structure: Structure) -> f64 {
    let rows = rows_of(data);
    let n = rows.len();
    let k = data.n_classes();
    let cards = data.schema().feature_cardinalities();
    let joint = |classes: &[u32]| -> f64 {
        let r: Vec<(Vec<u32>, u32)> = rows
            .iter()
            .zip(classes)
            .map(|((u, _), &c)| (u.clone(), c))
            .collect();
        brute_joint_log(&r, &cards, k, structure).exp()
    };
    let truth: Vec<u32> = rows.iter().map(|r| r.1).collect();
    let mut total = 0.0;
    for i in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for tail in all_columns(k, n - i) {
            let mut cls = truth[..i].to_vec();
            cls.extend_from_slice(&tail);
            let p = joint(&cls);
            den += p;
            if tail[0] == truth[i] {
                num += p;
            }
        }
        total += (num / den).ln();
    }
    total
}

/// Every class column of length `n`, for normalization checks.
pub fn class_columns(k: usize, n: usize) -> Vec<Vec<u32>> {
    all_columns(k, n)
}

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spl_core::feature_store::{gen_synth, SynthPair, SynthParams};
use spl_core::FeatureSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn synth(
    seed: u64,
    classes: usize,
    dim: usize,
    per_class: usize,
    shift: f64,
    rotation: f64,
) -> SynthPair {
    gen_synth(&SynthParams {
        seed,
        n_per_class: per_class,
        num_classes: classes,
        dim,
        shift,
        rotation,
    })
    .expect("valid synthetic parameters")
}

/// The seed-42 shifted fixture.
pub fn shifted_fixture() -> SynthPair {
    synth(42, 5, 64, 50, 2.0, 0.5)
}

/// The seed-7 identical-domain fixture.
pub fn zero_shift_fixture() -> SynthPair {
    synth(7, 3, 16, 50, 0.0, 0.0)
}

pub fn labelled_target(pair: &SynthPair) -> FeatureSet {
    pair.target
        .clone()
        .with_labels(pair.target_labels.clone())
        .unwrap()
}

/// Heap's algorithm over `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, p, out);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            p.swap(j, k - 1);
        }
    }
    let mut out = Vec::new();
    heap(n, &mut (0..n).collect(), &mut out);
    out
}

pub fn assignment_cost(cost: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}

/// Exhaustive minimum over all row-to-column permutations.
pub fn brute_force_min(cost: &DMatrix<f64>) -> f64 {
    permutations(cost.nrows())
        .iter()
        .map(|p| assignment_cost(cost, p))
        .fold(f64::INFINITY, f64::min)
}

/// `ceil(t * pool / total)` as the smallest `m` with `m * total >= t * pool`.
pub fn ramp_oracle(t: usize, total: usize, pool: usize) -> usize {
    (0..=pool).find(|m| m * total >= t * pool).unwrap()
}

/// Dense `X' M X` for the binary same-class graph, built from explicit
/// `n x n` matrices; `laplacian` picks `L = D - W` over `D`.
pub fn dense_graph_form(x: &DMatrix<f64>, labels: &[usize], laplacian: bool) -> DMatrix<f64> {
    let n = labels.len();
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i != j && labels[i] == labels[j] {
            1.0
        } else {
            0.0
        }
    });
    let d = DMatrix::from_diagonal(&w.column_sum());
    let m = if laplacian { &d - &w } else { d };
    x.transpose() * m * x
}

pub fn unit_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

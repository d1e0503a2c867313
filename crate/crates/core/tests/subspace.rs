mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use spl_core::subspace::{fit_lpp, transform, DEFAULT_RHO};
use spl_core::{Domain, FeatureSet, LabelVector};

fn labelled(x: &DMatrix<f64>, labels: Vec<usize>) -> FeatureSet {
    FeatureSet::new(x.map(|v| v as f32), Domain::Source)
        .unwrap()
        .with_labels(LabelVector::new(labels))
        .unwrap()
}

/// Largest principal angle between the column spaces of `a` and `b`.
fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let s = (qa.transpose() * qb).singular_values();
    s.iter()
        .fold(1.0f64, |m, &v| m.min(v))
        .clamp(-1.0, 1.0)
        .acos()
}

#[test]
fn fit_is_bit_identical_across_calls() {
    let mut rng = common::rng(30);
    let x = common::gaussian(&mut rng, 40, 12);
    let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
    let fs = labelled(&x, labels);
    let a = fit_lpp(&fs, 4, DEFAULT_RHO).unwrap();
    let b = fit_lpp(&fs, 4, DEFAULT_RHO).unwrap();
    assert_eq!(a, b);
}

#[test]
fn transformed_rows_are_unit_norm() {
    let pair = common::synth(31, 3, 8, 10, 1.0, 0.2);
    let p = fit_lpp(&pair.source, 3, DEFAULT_RHO).unwrap();
    let z = transform(&p, &pair.target).unwrap();
    assert_eq!(z.cols(), 3);
    for row in z.to_f64().row_iter() {
        assert!((row.norm() - 1.0).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn permuting_samples_preserves_eigenvalues_and_subspace(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (n, d, c, k) = (30, 8, 3, 3);
        let x = common::gaussian(&mut rng, n, d);
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let xp = x.select_rows(&order);
        let lp: Vec<usize> = order.iter().map(|&i| labels[i]).collect();

        let a = fit_lpp(&labelled(&x, labels), k, DEFAULT_RHO).unwrap();
        let b = fit_lpp(&labelled(&xp, lp), k, DEFAULT_RHO).unwrap();
        for (ea, eb) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            prop_assert!((ea - eb).abs() <= 1e-8, "{} vs {}", ea, eb);
        }
        let all = fit_lpp(&labelled(&x, (0..n).map(|i| i % c).collect()), d, DEFAULT_RHO).unwrap();
        let gap = all.eigenvalues()[k] - all.eigenvalues()[k - 1];
        if gap > 1e-8 {
            let angle = max_principal_angle(a.basis(), b.basis());
            prop_assert!(angle <= 1e-6, "angle {}", angle);
        }
    }

    #[test]
    fn eigenvalues_ascending_and_nonnegative(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let x = common::gaussian(&mut rng, 25, 6);
        let labels: Vec<usize> = (0..25).map(|_| rng.random_range(0..3)).collect();
        if let Ok(p) = fit_lpp(&labelled(&x, labels), 6, DEFAULT_RHO) {
            let ev = p.eigenvalues();
            prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(ev.iter().all(|&v| v >= -1e-9));
        }
    }
}

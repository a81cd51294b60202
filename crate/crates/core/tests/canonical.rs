//! Canonical-form invariants observed after every training sweep.

mod common;

use common::*;
use gtnc::oracle::{dense_labeled, dense_mps};
use gtnc::{
    train_discriminative_states, train_generative_observed, Direction, LabeledMps, Mps, TrainConfig,
};

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        chi: 3,
        alpha: 0.1,
        max_sweeps: 6,
        convergence_tol: 1e-12,
        seed,
        ..TrainConfig::default()
    }
}

/// Moving the center anywhere must leave the represented vector unchanged.
fn assert_gauge_invariant(m: &Mps) {
    let psi = dense_mps(m);
    let scale = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
    for c in 0..m.len() {
        let moved = m.canonicalize(c).unwrap();
        assert!(moved.orthonormality_residual() < 1e-10);
        let diff = max_abs_diff(&dense_mps(&moved), &psi);
        assert!(diff <= 1e-8 * scale.max(1.0), "center {c}: {diff:e}");
    }
}

#[test]
fn generative_sweeps_keep_canonical_form() {
    let mut r = rng(21);
    for seed in 0..4 {
        let samples = states(&mut r, 5, 7);
        let mut seen = 0;
        let (m, report) = train_generative_observed(&samples, &small_config(seed), |e| {
            seen += 1;
            assert!(e.model.center().is_some());
            let res = e.model.orthonormality_residual();
            assert!(res < 1e-10, "sweep {}: residual {res:e}", e.sweep);
            assert_gauge_invariant(e.model);
        })
        .unwrap();
        assert_eq!(seen, report.sweeps_run);
        assert!(m.max_bond_dim() <= 3);
        let best = report.best_costs();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn discriminative_sweeps_keep_canonical_form() {
    let mut r = rng(22);
    for seed in 0..3 {
        let samples = states(&mut r, 6, 6);
        let labels = vec![0, 1, 2, 0, 1, 2];
        train_discriminative_states(&samples, &labels, 3, &small_config(seed), |e| {
            let m = e.model;
            assert_eq!(m.center(), Some(m.label_site()));
            let res = m.orthonormality_residual();
            assert!(res < 1e-10, "sweep {}: residual {res:e}", e.sweep);
            assert!(m.max_bond_dim() <= 3);
            // Label moves without truncation keep the K vectors.
            let before = dense_labeled(m);
            let mut moved = m.clone();
            let dir = if m.label_site() == 0 {
                Direction::Right
            } else {
                Direction::Left
            };
            moved.shift_label(dir).unwrap();
            assert!(moved.orthonormality_residual() < 1e-10);
            for (a, b) in dense_labeled(&moved).iter().zip(&before) {
                assert!(max_abs_diff(a, b) <= 1e-8);
            }
        })
        .unwrap();
    }
}

#[test]
fn random_models_are_canonical() {
    for (len, chi) in [(2, 1), (5, 2), (9, 4), (200, 8)] {
        let m = Mps::random(len, 2, chi, 3).unwrap();
        assert_eq!(m.center(), Some(len - 1));
        assert!(m.orthonormality_residual() < 1e-10);
        assert!((m.norm() - 1.0).abs() < 1e-10);
        let lm = LabeledMps::random(len, 2, 3, chi, 4).unwrap();
        assert!(lm.orthonormality_residual() < 1e-10);
    }
    assert_gauge_invariant(&Mps::random(8, 2, 4, 9).unwrap());
}

#![allow(clippy::needless_range_loop)]

//! Property tests: cost floor, distance identities, entropy bound, data invariants.

mod common;

use common::*;
use gtnc::oracle::{dense_lazy_state, dense_product_state, dot};
use gtnc::{
    argmax, fidelity_matrix, hilbert_distance_matrix, load_idx, map_image, nll_cost,
    raw_distance_matrix, train_generative, write_idx, Dataset, Mps, ProductState, Tensor,
    TrainConfig,
};
use proptest::prelude::*;

/// `Σ_j v_j` as an MPS of bond dimension `J` (block-diagonal sites).
fn superposition(states: &[ProductState]) -> Mps {
    let (j, len, d) = (states.len(), states[0].len(), states[0].local_dim());
    let sites = (0..len)
        .map(|l| {
            let (chl, chr) = (if l == 0 { 1 } else { j }, if l + 1 == len { 1 } else { j });
            Tensor::from_fn(vec![chl, d, chr], |i| {
                let k = if l == 0 { i[2] } else { i[0] };
                let matches = (l == 0 || i[0] == k) && (l + 1 == len || i[2] == k);
                if matches {
                    states[k].site(l)[i[1]]
                } else {
                    0.0
                }
            })
        })
        .collect();
    Mps::from_sites(sites).unwrap()
}

fn binary_states(seed: u64, count: usize, len: usize) -> Vec<ProductState> {
    distinct_binary_images(&mut rng(seed), count, len)
        .iter()
        .map(|x| map_image(x).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn nll_is_nonnegative_on_distinct_basis_samples(
        len in 2usize..9, chi in 1usize..5, count in 1usize..12, seed in any::<u64>(),
    ) {
        let count = count.min(1 << len);
        let m = Mps::random(len, 2, chi, seed).unwrap();
        let samples = binary_states(seed ^ 1, count, len);
        let cost = nll_cost(&m, &samples).unwrap();
        prop_assert!(cost >= -1e-10, "cost {cost}");
    }

    #[test]
    fn uniform_superposition_reaches_zero_cost(len in 2usize..9, count in 1usize..10, seed in any::<u64>()) {
        let count = count.min(1 << len);
        let samples = binary_states(seed, count, len);
        let m = superposition(&samples).canonicalize(0).unwrap();
        let cost = nll_cost(&m, &samples).unwrap();
        prop_assert!(cost.abs() <= 1e-6, "cost {cost}");
    }

    #[test]
    fn hilbert_distance_matches_dense(len in 1usize..9, a in 1usize..4, b in 1usize..4, c in 1usize..4, seed in any::<u64>()) {
        let d = toy_dataset(&mut rng(seed), &[a, b, c], len);
        let f = fidelity_matrix(&d).unwrap();
        let h = hilbert_distance_matrix(&f).unwrap();
        let psi: Vec<Vec<f64>> = d
            .split_by_class()
            .iter()
            .map(|p| dense_lazy_state(&p.product_states().unwrap()))
            .collect();
        for i in 0..3 {
            prop_assert!((h.norms[i] - dot(&psi[i], &psi[i]).sqrt()).abs() <= 1e-10);
            for k in 0..3 {
                let diff: Vec<f64> = psi[i].iter().zip(&psi[k]).map(|(x, y)| x - y).collect();
                let want = dot(&diff, &diff);
                prop_assert!((h.exact.get(i, k) - want).abs() <= 1e-10, "({i},{k})");
                prop_assert!(h.exact.get(i, k) >= -1e-10);
                prop_assert!((f.get(i, k) - f.get(k, i)).abs() <= 1e-10);
                if i != k {
                    prop_assert!((h.approx.get(i, k) - (2.0 - 2.0 * f.get(i, k))).abs() <= 1e-12);
                }
            }
            prop_assert_eq!(h.exact.get(i, i), 0.0);
        }
    }

    #[test]
    fn raw_distance_matches_double_loop(len in 1usize..6, a in 1usize..4, b in 1usize..4, seed in any::<u64>()) {
        let d = toy_dataset(&mut rng(seed), &[a, b], len);
        let m = raw_distance_matrix(&d).unwrap();
        let parts = d.split_by_class();
        for i in 0..2 {
            for k in 0..2 {
                let (p, q) = (&parts[i], &parts[k]);
                let mut sum = 0.0;
                for x in p.images() {
                    for y in q.images() {
                        sum += x.iter().zip(y).map(|(s, t)| (s - t) * (s - t)).sum::<f64>().sqrt();
                    }
                }
                let want = sum / (p.len() * q.len()) as f64;
                prop_assert!((m.get(i, k) - want).abs() <= 1e-12);
                prop_assert!(m.get(i, k) >= 0.0);
            }
        }
    }

    #[test]
    fn renyi2_entropy_is_bounded(len in 2usize..10, chi in 1usize..6, seed in any::<u64>()) {
        let m = Mps::random(len, 2, chi, seed).unwrap();
        let bonds = m.bond_dims();
        for b in 1..len {
            let h = m.renyi2_entropy(b).unwrap();
            prop_assert!(h >= -1e-12);
            prop_assert!(h <= (bonds[b] as f64).ln() + 1e-10);
        }
    }

    #[test]
    fn idx_round_trip_is_bit_exact(rows in 1usize..5, cols in 1usize..5, n in 0usize..6, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = rng(seed);
        let images: Vec<Vec<u8>> = (0..n).map(|_| (0..rows * cols).map(|_| r.random()).collect()).collect();
        let labels: Vec<u8> = (0..n).map(|_| r.random_range(0..10)).collect();
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ip, &lp, rows, cols, &images, &labels).unwrap();
        let d = load_idx(&ip, &lp).unwrap();
        prop_assert_eq!(d.len(), n);
        for (img, raw) in d.images().iter().zip(&images) {
            for (&x, &b) in img.iter().zip(raw) {
                prop_assert_eq!(x.to_bits(), (f64::from(b) / 255.0).to_bits());
            }
        }
        prop_assert_eq!(d.labels().to_vec(), labels.iter().map(|&l| usize::from(l)).collect::<Vec<_>>());
    }

    #[test]
    fn downsampling_composes_on_constant_images(a in 1usize..4, b in 1usize..4, k in 1usize..3, x in 0.0f64..=1.0) {
        let side = a * b * k;
        let d = Dataset::new(vec![vec![x; side * side]; 2], vec![0, 1], side, side, None).unwrap();
        let twice = d.downsample(a).unwrap().downsample(b).unwrap();
        let once = d.downsample(a * b).unwrap();
        for (p, q) in twice.images().iter().zip(once.images()) {
            prop_assert!(max_abs_diff(p, q) <= 1e-13);
        }
        prop_assert_eq!(once.height(), k);
    }

    #[test]
    fn split_by_class_is_a_partition(labels in proptest::collection::vec(0usize..4, 0..30)) {
        let images = labels.iter().enumerate().map(|(i, _)| vec![(i % 3) as f64 / 2.0]).collect();
        let d = Dataset::new(images, labels.clone(), 1, 1, Some(4)).unwrap();
        let parts = d.split_by_class();
        prop_assert_eq!(parts.len(), 4);
        prop_assert_eq!(parts.iter().map(Dataset::len).sum::<usize>(), labels.len());
        for (c, p) in parts.iter().enumerate() {
            prop_assert!(p.labels().iter().all(|&l| l == c));
        }
    }

    #[test]
    fn subsample_is_deterministic(seed in any::<u64>(), per in 1usize..5) {
        let d = toy_dataset(&mut rng(seed), &[3, 6, 2], 4);
        let a = d.subsample(per, seed);
        prop_assert_eq!(&a, &d.subsample(per, seed));
        for (c, n) in a.class_counts().iter().enumerate() {
            prop_assert_eq!(*n, per.min(d.class_counts()[c]));
        }
    }

    #[test]
    fn argmax_picks_lowest_of_ties(xs in proptest::collection::vec(-3i32..3, 1..8)) {
        let v: Vec<f64> = xs.iter().map(|&x| f64::from(x)).collect();
        let best = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(argmax(&v), v.iter().position(|&x| x == best).unwrap());
    }
}

#[test]
fn trained_models_respect_entropy_bound() {
    let mut r = rng(31);
    for chi in [1, 2, 4] {
        let samples = states(&mut r, 12, 8);
        let cfg = TrainConfig {
            chi,
            alpha: 0.1,
            max_sweeps: 6,
            ..TrainConfig::default()
        };
        let (m, _) = train_generative(&samples, &cfg).unwrap();
        let bonds = m.bond_dims();
        for b in 1..m.len() {
            let h = m.renyi2_entropy(b).unwrap();
            assert!(h <= (bonds[b] as f64).ln() + 1e-10 && (bonds[b] as f64) <= chi as f64);
            if chi == 1 {
                assert!(h.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fidelity_of_identical_and_orthogonal_classes() {
    let d = Dataset::new(vec![vec![0.2, 0.7], vec![0.4, 0.1]], vec![0, 1], 1, 2, None).unwrap();
    let f = fidelity_matrix(&d).unwrap();
    assert!((f.get(0, 1) - 0.5590169943749476).abs() < 1e-12);
    let v = map_image(&[0.3, 0.6]).unwrap();
    assert!((dot(&dense_product_state(&v), &dense_product_state(&v)) - 1.0).abs() < 1e-12);
    let d = Dataset::new(vec![vec![0.0; 3], vec![1.0; 3]], vec![0, 1], 1, 3, None).unwrap();
    assert!(fidelity_matrix(&d).unwrap().get(0, 1).abs() < 1e-12);
}

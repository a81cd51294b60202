#![allow(dead_code)]

use gtnc::{map_image, Dataset, ProductState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn image(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.0..=1.0)).collect()
}

pub fn state(rng: &mut ChaCha8Rng, len: usize) -> ProductState {
    map_image(&image(rng, len)).unwrap()
}

pub fn states(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<ProductState> {
    (0..count).map(|_| state(rng, len)).collect()
}

/// `count` distinct 0/1 images of `len` pixels; they map to orthonormal basis states.
pub fn distinct_binary_images(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<f64>> {
    assert!(count <= 1 << len);
    let mut codes: Vec<u64> = Vec::new();
    while codes.len() < count {
        let c = rng.random_range(0..1u64 << len);
        if !codes.contains(&c) {
            codes.push(c);
        }
    }
    codes
        .iter()
        .map(|c| (0..len).map(|i| ((c >> i) & 1) as f64).collect())
        .collect()
}

/// Random images, `per_class[c]` of class `c`, as single-row images.
pub fn toy_dataset(rng: &mut ChaCha8Rng, per_class: &[usize], len: usize) -> Dataset {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (c, &n) in per_class.iter().enumerate() {
        for _ in 0..n {
            images.push(image(rng, len));
            labels.push(c);
        }
    }
    Dataset::new(images, labels, 1, len, Some(per_class.len())).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

//! Brute-force dense references for tests: every state is expanded into its
//! full `d^L` vector (site 0 is the most significant index).

use crate::discriminative::LabeledMps;
use crate::feature::ProductState;
use crate::mps::Mps;
use crate::tensor::Tensor;

/// Kronecker product of the local vectors.
pub fn dense_product_state(v: &ProductState) -> Vec<f64> {
    let mut out = vec![1.0];
    for s in v.sites() {
        out = out
            .iter()
            .flat_map(|&x| s.iter().map(move |&y| x * y))
            .collect();
    }
    out
}

/// Dense vector of a chain of `(χl, d, χr)` tensors.
pub fn dense_chain(sites: &[Tensor]) -> Vec<f64> {
    // state[p * chi + a]: prefix index p, open bond a.
    let mut state = vec![1.0];
    let mut chi = 1;
    for t in sites {
        let s = t.shape();
        let (chl, d, chr) = (s[0], s[1], s[2]);
        assert_eq!(chl, chi);
        let prefixes = state.len() / chi;
        let mut next = vec![0.0; prefixes * d * chr];
        for p in 0..prefixes {
            for a in 0..chl {
                let x = state[p * chi + a];
                for sv in 0..d {
                    for b in 0..chr {
                        next[(p * d + sv) * chr + b] += x * t.get(&[a, sv, b]);
                    }
                }
            }
        }
        state = next;
        chi = chr;
    }
    state
}

pub fn dense_mps(m: &Mps) -> Vec<f64> {
    dense_chain(m.sites())
}

/// One dense vector per label value.
pub fn dense_labeled(m: &LabeledMps) -> Vec<Vec<f64>> {
    let ls = m.label_site();
    (0..m.num_classes())
        .map(|k| {
            let sites: Vec<Tensor> = m
                .sites()
                .iter()
                .enumerate()
                .map(|(l, t)| {
                    if l == ls {
                        let s = t.shape();
                        Tensor::from_fn(vec![s[0], s[1], s[3]], |i| t.get(&[i[0], i[1], k, i[2]]))
                    } else {
                        t.clone()
                    }
                })
                .collect();
            dense_chain(&sites)
        })
        .collect()
}

/// `Σ_u u / √N` over the dense sample vectors.
pub fn dense_lazy_state(samples: &[ProductState]) -> Vec<f64> {
    let mut out = vec![0.0; dense_product_state(&samples[0]).len()];
    for u in samples {
        for (o, x) in out.iter_mut().zip(dense_product_state(u)) {
            *o += x;
        }
    }
    let n = (samples.len() as f64).sqrt();
    out.iter_mut().for_each(|x| *x /= n);
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Γ` from dense amplitudes.
pub fn dense_nll(psi: &[f64], samples: &[ProductState]) -> f64 {
    let z = dot(psi, psi);
    let j = samples.len() as f64;
    let s: f64 = samples
        .iter()
        .map(|v| {
            let a = dot(psi, &dense_product_state(v));
            (a * a / z).ln()
        })
        .sum();
    -s / j - j.ln()
}

/// Central differences `(f(t + h e_i) − f(t − h e_i)) / 2h` for every entry.
pub fn central_difference(t: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut g = t.clone();
    let mut probe = t.clone();
    for i in 0..t.len() {
        let x = t.data()[i];
        probe.data_mut()[i] = x + h;
        let up = f(&probe);
        probe.data_mut()[i] = x - h;
        let down = f(&probe);
        probe.data_mut()[i] = x;
        g.data_mut()[i] = (up - down) / (2.0 * h);
    }
    g
}

/// `‖a − b‖_∞ / ‖b‖_∞`.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    diff / b.max_abs().max(f64::MIN_POSITIVE)
}

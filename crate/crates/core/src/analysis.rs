//! Class-to-class distance and fidelity matrices, in pixel space and in the
//! feature-mapped Hilbert space.

use rayon::prelude::*;

use crate::classifier::{log_abs_sum_overlaps, log_add_exp, signed_log_difference};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::feature::ProductState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    /// Mean Euclidean distance between raw images.
    EuclideanRaw,
    /// `Ψ̃_aᵀΨ̃_b` of the class superposition states.
    FidelityHilbert,
    /// `‖Ψ̃_a − Ψ̃_b‖²`.
    DistanceHilbert,
    /// `2 − 2F`.
    DistanceHilbertApprox,
    /// Exact minus approximate Hilbert distance.
    DistanceHilbertResidual,
}

impl MatrixKind {
    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::EuclideanRaw => "euclidean_raw",
            MatrixKind::FidelityHilbert => "fidelity_hilbert",
            MatrixKind::DistanceHilbert => "distance_hilbert",
            MatrixKind::DistanceHilbertApprox => "distance_hilbert_approx",
            MatrixKind::DistanceHilbertResidual => "distance_hilbert_residual",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassPairMatrix {
    pub kind: MatrixKind,
    /// Class labels of the rows and columns.
    pub classes: Vec<usize>,
    /// Samples per class used.
    pub counts: Vec<usize>,
    /// Row-major `K × K`.
    pub values: Vec<Vec<f64>>,
}

impl ClassPairMatrix {
    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a][b]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let k = self.size();
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in 0..a {
                worst = worst.max((self.values[a][b] - self.values[b][a]).abs());
            }
        }
        worst
    }

    fn map(&self, kind: MatrixKind, f: impl Fn(usize, usize) -> f64) -> ClassPairMatrix {
        let k = self.size();
        ClassPairMatrix {
            kind,
            classes: self.classes.clone(),
            counts: self.counts.clone(),
            values: (0..k).map(|a| (0..k).map(|b| f(a, b)).collect()).collect(),
        }
    }
}

/// Classes present in the dataset with their sample indices.
fn groups(dataset: &Dataset) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    let (classes, idx): (Vec<usize>, Vec<Vec<usize>>) = dataset
        .class_indices()
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .unzip();
    if classes.is_empty() {
        return Err(Error::arg("dataset is empty"));
    }
    Ok((classes, idx))
}

/// Evaluates `f` on every unordered class pair in parallel and fills a
/// symmetric matrix.
fn symmetric(k: usize, f: impl Fn(usize, usize) -> Result<f64> + Sync) -> Result<Vec<Vec<f64>>> {
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
    let vals = pairs
        .par_iter()
        .map(|&(a, b)| f(a, b))
        .collect::<Result<Vec<_>>>()?;
    let mut m = vec![vec![0.0; k]; k];
    for (&(a, b), v) in pairs.iter().zip(vals) {
        m[a][b] = v;
        m[b][a] = v;
    }
    Ok(m)
}

/// `D_ab = (1 / N_a N_b) Σ_{x∈a} Σ_{y∈b} ‖x − y‖`, including same-sample
/// pairs on the diagonal.
pub fn raw_distance_matrix(dataset: &Dataset) -> Result<ClassPairMatrix> {
    let (classes, idx) = groups(dataset)?;
    let values = symmetric(classes.len(), |a, b| {
        let mut total = 0.0;
        for &i in &idx[a] {
            let x = dataset.image(i);
            for &j in &idx[b] {
                let y = dataset.image(j);
                total += x
                    .iter()
                    .zip(y)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
            }
        }
        Ok(total / (idx[a].len() * idx[b].len()) as f64)
    })?;
    Ok(ClassPairMatrix {
        kind: MatrixKind::EuclideanRaw,
        counts: idx.iter().map(Vec::len).collect(),
        classes,
        values,
    })
}

/// `F_ab = Σ_{u∈a} Σ_{v∈b} uᵀv / √(N_a N_b)` from factorized overlaps,
/// summed in the log domain. The diagonal is `‖Ψ̃_a‖²`.
pub fn fidelity_matrix(dataset: &Dataset) -> Result<ClassPairMatrix> {
    let (classes, idx) = groups(dataset)?;
    let states = dataset.product_states()?;
    let grouped: Vec<Vec<&ProductState>> = idx
        .iter()
        .map(|g| g.iter().map(|&i| &states[i]).collect())
        .collect();
    let values = symmetric(classes.len(), |a, b| {
        let (mut pos, mut neg) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for u in &grouped[a] {
            let (sign, log) = log_abs_sum_overlaps(u, grouped[b].iter().copied())?;
            if sign > 0.0 {
                pos = log_add_exp(pos, log);
            } else if sign < 0.0 {
                neg = log_add_exp(neg, log);
            }
        }
        let (sign, log) = signed_log_difference(pos, neg);
        let norm = 0.5 * ((grouped[a].len() * grouped[b].len()) as f64).ln();
        Ok(if sign == 0.0 {
            0.0
        } else {
            sign * (log - norm).exp()
        })
    })?;
    Ok(ClassPairMatrix {
        kind: MatrixKind::FidelityHilbert,
        counts: idx.iter().map(Vec::len).collect(),
        classes,
        values,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HilbertDistances {
    /// `F_aa + F_bb − 2 F_ab`, zero on the diagonal.
    pub exact: ClassPairMatrix,
    /// `2 − 2 F_ab` off the diagonal, valid when every `‖Ψ̃‖ ≈ 1`.
    pub approx: ClassPairMatrix,
    pub residual: ClassPairMatrix,
    /// `‖Ψ̃_a‖ = √F_aa`, the diagonal under the norm (not squared-norm) convention.
    pub norms: Vec<f64>,
}

/// Hilbert-space distances `‖Ψ̃_a − Ψ̃_b‖²` from a fidelity matrix whose
/// diagonal holds squared norms.
pub fn hilbert_distance_matrix(f: &ClassPairMatrix) -> Result<HilbertDistances> {
    if f.kind != MatrixKind::FidelityHilbert {
        return Err(Error::arg(format!(
            "expected a fidelity matrix, got {}",
            f.kind.name()
        )));
    }
    let exact = f.map(MatrixKind::DistanceHilbert, |a, b| {
        if a == b {
            0.0
        } else {
            f.get(a, a) + f.get(b, b) - 2.0 * f.get(a, b)
        }
    });
    let approx = f.map(MatrixKind::DistanceHilbertApprox, |a, b| {
        if a == b {
            0.0
        } else {
            2.0 - 2.0 * f.get(a, b)
        }
    });
    let residual = f.map(MatrixKind::DistanceHilbertResidual, |a, b| {
        exact.get(a, b) - approx.get(a, b)
    });
    let norms = (0..f.size()).map(|a| f.get(a, a).max(0.0).sqrt()).collect();
    Ok(HilbertDistances {
        exact,
        approx,
        residual,
        norms,
    })
}

/// Diagonal versus off-diagonal statistics of one matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PairStats {
    pub min_diag: f64,
    pub max_diag: f64,
    /// `-∞` / `+∞` when there is a single class.
    pub min_off: f64,
    pub max_off: f64,
    /// `min_diag / max_off`; `f64::MAX` when unbounded.
    pub ratio: f64,
    /// Largest over smallest entry; `f64::MAX` when the smallest is zero.
    pub spread: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den <= 0.0 || !den.is_finite() {
        f64::MAX
    } else {
        (num / den).min(f64::MAX)
    }
}

impl PairStats {
    pub fn of(m: &ClassPairMatrix) -> Self {
        let k = m.size();
        let mut s = PairStats {
            min_diag: f64::INFINITY,
            max_diag: f64::NEG_INFINITY,
            min_off: f64::INFINITY,
            max_off: f64::NEG_INFINITY,
            ratio: 0.0,
            spread: 0.0,
        };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for a in 0..k {
            for b in 0..k {
                let v = m.get(a, b);
                lo = lo.min(v);
                hi = hi.max(v);
                if a == b {
                    s.min_diag = s.min_diag.min(v);
                    s.max_diag = s.max_diag.max(v);
                } else {
                    s.min_off = s.min_off.min(v);
                    s.max_off = s.max_off.max(v);
                }
            }
        }
        s.ratio = ratio(s.min_diag, s.max_off);
        s.spread = ratio(hi, lo);
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringReport {
    pub raw: PairStats,
    pub fidelity: PairStats,
    /// Every diagonal fidelity exceeds every off-diagonal one.
    pub clustered: bool,
}

impl ClusteringReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = Vec::new();
        for (prefix, s) in [("raw", &self.raw), ("fidelity", &self.fidelity)] {
            for (name, v) in [
                ("min_diag", s.min_diag),
                ("max_diag", s.max_diag),
                ("min_off", s.min_off),
                ("max_off", s.max_off),
                ("diag_over_off", s.ratio),
                ("max_over_min", s.spread),
            ] {
                kv.push((format!("{prefix}.{name}"), format!("{v:e}")));
            }
        }
        kv.push(("clustered".into(), self.clustered.to_string()));
        kv
    }
}

pub fn clustering_report(raw: &ClassPairMatrix, f: &ClassPairMatrix) -> Result<ClusteringReport> {
    if raw.size() != f.size() {
        return Err(Error::dim(format!(
            "matrices have {} and {} classes",
            raw.size(),
            f.size()
        )));
    }
    let fidelity = PairStats::of(f);
    Ok(ClusteringReport {
        raw: PairStats::of(raw),
        clustered: fidelity.min_diag > fidelity.max_off,
        fidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(images: Vec<Vec<f64>>, labels: Vec<usize>) -> Dataset {
        let w = images[0].len();
        Dataset::new(images, labels, 1, w, None).unwrap()
    }

    #[test]
    fn single_pixel_distance() {
        let d = ds(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        let m = raw_distance_matrix(&d).unwrap();
        assert_eq!(m.values, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn fidelity_examples() {
        let d = ds(vec![vec![0.2, 0.7], vec![0.4, 0.1]], vec![0, 1]);
        let f = fidelity_matrix(&d).unwrap();
        assert!((f.get(0, 1) - 0.5590169943749476).abs() < 1e-15);
        assert!((f.get(0, 0) - 1.0).abs() < 1e-15);
        let d = ds(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0, 1]);
        let f = fidelity_matrix(&d).unwrap();
        assert!(f.get(0, 1).abs() < 1e-30);
    }

    #[test]
    fn identity_like_fidelity() {
        let f = ClassPairMatrix {
            kind: MatrixKind::FidelityHilbert,
            classes: vec![0, 1, 2],
            counts: vec![1, 1, 1],
            values: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        };
        let h = hilbert_distance_matrix(&f).unwrap();
        assert_eq!(h.exact.get(0, 1), 2.0);
        assert_eq!(h.exact.get(2, 2), 0.0);
        assert_eq!(h.residual.get(0, 2), 0.0);
        let rep = clustering_report(&f, &f).unwrap();
        assert_eq!(rep.fidelity.ratio, f64::MAX);
        assert!(rep.clustered);
        assert!(hilbert_distance_matrix(&h.exact).is_err());
    }

    #[test]
    fn single_class_sentinels() {
        let d = ds(vec![vec![0.3], vec![0.5]], vec![0, 0]);
        let f = fidelity_matrix(&d).unwrap();
        let r = raw_distance_matrix(&d).unwrap();
        let rep = clustering_report(&r, &f).unwrap();
        assert_eq!(rep.fidelity.ratio, f64::MAX);
        assert!(rep.clustered);
        assert_eq!(rep.key_values().len(), 13);
    }
}

//! Discriminative baseline: a single MPS with an extra K-dimensional label
//! index, fitted to one-hot targets with a quadratic cost by two-site
//! updates.
//!
//! The tensor carrying the label has shape `(χl, d, K, χr)`; every other site
//! is an ordinary `(χl, d, χr)` tensor. The label site doubles as the
//! canonical center. A sweep merges neighbouring pairs into a
//! `(χl, d, d, K, χr)` tensor, takes a norm-scaled gradient step, and splits
//! it again by truncated SVD, leaving the label on the site the sweep moves
//! towards.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::argmax;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::feature::ProductState;
use crate::generative::{batch_indices, Direction, SweepEvent, TrainConfig, TrainReport};
use crate::mps::{
    absorb_site, absorb_site_from_right, dims3, load_container, save_container, Container, Mps,
};
use crate::par::{chunked_sum, chunked_sum_scalar};
use crate::tensor::{
    column_orthonormality_residual, contract, row_orthonormality_residual, svd_split, Tensor,
};

/// Noise added to the identity initialization of the trainer.
pub const INIT_NOISE: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMps {
    sites: Vec<Tensor>,
    label_site: usize,
    classes: usize,
    center: Option<usize>,
}

/// Two neighbouring sites contracted together, label included.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedPair {
    /// Left site of the pair.
    pub site: usize,
    /// Shape `(χl, d, d, K, χr)`.
    pub tensor: Tensor,
}

impl LabeledMps {
    pub fn from_parts(
        sites: Vec<Tensor>,
        label_site: usize,
        classes: usize,
        center: Option<usize>,
    ) -> Result<Self> {
        if sites.len() < 2 {
            return Err(Error::arg("a labeled MPS needs at least two sites"));
        }
        if label_site >= sites.len() {
            return Err(Error::arg(format!("label site {label_site} out of range")));
        }
        if classes == 0 {
            return Err(Error::arg("label index needs at least one class"));
        }
        if let Some(c) = center {
            if c != label_site {
                return Err(Error::Consistency(format!(
                    "canonical center {c} is not the label site {label_site}"
                )));
            }
        }
        let d = sites[0].shape().get(1).copied().unwrap_or(0);
        let mut left = 1;
        for (l, t) in sites.iter().enumerate() {
            let s = t.shape();
            let want = if l == label_site { 4 } else { 3 };
            if s.len() != want || s[0] != left || s[1] != d || (l == label_site && s[2] != classes)
            {
                return Err(Error::dim(format!("site {l} has unexpected shape {s:?}")));
            }
            left = *s.last().unwrap();
        }
        if left != 1 {
            return Err(Error::dim("last bond must have extent 1"));
        }
        Ok(LabeledMps {
            sites,
            label_site,
            classes,
            center,
        })
    }

    /// Seeded random model with the label on site 0: a random generative
    /// chain in canonical form about site 0 whose first tensor is replaced by
    /// a random labeled one.
    pub fn random(
        len: usize,
        local_dim: usize,
        classes: usize,
        chi: usize,
        seed: u64,
    ) -> Result<Self> {
        if classes == 0 {
            return Err(Error::arg("label index needs at least one class"));
        }
        let base = Mps::random(len, local_dim, chi, seed)?.canonicalize(0)?;
        let mut sites = base.sites().to_vec();
        let chr = sites[0].shape()[2];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1abe_1000);
        sites[0] = Tensor::from_fn(vec![1, local_dim, classes, chr], |_| {
            rng.random_range(-0.5..0.5)
        });
        LabeledMps::from_parts(sites, 0, classes, Some(0))
    }

    /// Seeded near-identity model with the label on site 0: every site is
    /// `δ_ab` in each physical slice plus uniform noise of size `noise`, then
    /// brought into canonical form about site 0. Unlike a random chain, the
    /// contraction with a product state then has comparable magnitude for
    /// all samples.
    pub fn near_identity(
        len: usize,
        local_dim: usize,
        classes: usize,
        chi: usize,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if len < 2 || local_dim < 2 || chi < 1 || classes == 0 {
            return Err(Error::arg(format!(
                "labeled MPS needs L >= 2, d >= 2, chi >= 1, K >= 1 (got {len}, {local_dim}, {chi}, {classes})"
            )));
        }
        let bonds = crate::mps::capped_bond_dims(len, local_dim, chi);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sites: Vec<Tensor> = (0..len)
            .map(|l| {
                Tensor::from_fn(vec![bonds[l], local_dim, bonds[l + 1]], |i| {
                    let id = if i[0] == i[2] { 1.0 } else { 0.0 };
                    id + noise * rng.random_range(-1.0..1.0)
                })
            })
            .collect();
        let mut m = Mps::from_sites(sites.clone())?;
        m.canonicalize_in_place(0)?;
        sites = m.sites().to_vec();
        let t0 = &sites[0];
        let chr = t0.shape()[2];
        let label = Tensor::from_fn(vec![1, local_dim, classes, chr], |i| {
            t0.get(&[0, i[1], i[3]]) + noise * rng.random_range(-1.0..1.0)
        });
        sites[0] = label;
        LabeledMps::from_parts(sites, 0, classes, Some(0))
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn local_dim(&self) -> usize {
        self.sites[0].shape()[1]
    }

    pub fn sites(&self) -> &[Tensor] {
        &self.sites
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn label_site(&self) -> usize {
        self.label_site
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        std::iter::once(1)
            .chain(self.sites.iter().map(|t| *t.shape().last().unwrap()))
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Largest deviation from isometry among the sites left and right of the
    /// label site (0 without a center).
    pub fn orthonormality_residual(&self) -> f64 {
        if self.center.is_none() {
            return 0.0;
        }
        self.sites
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != self.label_site)
            .map(|(l, t)| {
                let (chl, d, chr) = dims3(t);
                if l < self.label_site {
                    column_orthonormality_residual(t.data(), chl * d, chr)
                } else {
                    row_orthonormality_residual(t.data(), chl, d * chr)
                }
            })
            .fold(0.0, f64::max)
    }

    fn check_state(&self, v: &ProductState) -> Result<()> {
        v.check_geometry(self.len(), self.local_dim())
    }

    /// The K-vector `L̃` obtained by contracting every physical index with `v`.
    pub fn predict_vector(&self, v: &ProductState) -> Result<Vec<f64>> {
        self.check_state(v)?;
        let ls = self.label_site;
        let mut left = vec![1.0];
        for l in 0..ls {
            left = absorb_site(&left, &self.sites[l], v.site(l));
        }
        let mut right = vec![1.0];
        for l in (ls + 1..self.len()).rev() {
            right = absorb_site_from_right(&right, &self.sites[l], v.site(l));
        }
        Ok(label_contraction(
            &self.sites[ls],
            &left,
            v.site(ls),
            &right,
        ))
    }

    /// Contracts sites `site` and `site + 1`; the label must sit on one of them.
    pub fn merge_pair(&self, site: usize) -> Result<MergedPair> {
        if site + 1 >= self.len() {
            return Err(Error::arg(format!("no pair starts at site {site}")));
        }
        let tensor = if self.label_site == site {
            // [a, s1, k, c] x [c, s2, b] -> [a, s1, k, s2, b]
            contract(&self.sites[site], &self.sites[site + 1], &[(3, 0)])?
                .permute(&[0, 1, 3, 2, 4])?
        } else if self.label_site == site + 1 {
            contract(&self.sites[site], &self.sites[site + 1], &[(2, 0)])?
        } else {
            return Err(Error::arg(format!(
                "label is on site {}, not in pair ({site}, {})",
                self.label_site,
                site + 1
            )));
        };
        Ok(MergedPair { site, tensor })
    }

    /// Splits a merged pair back into two sites, truncating to `max_rank`.
    /// The label goes to the right site for `Direction::Right` and to the
    /// left site otherwise; the label site becomes the canonical center.
    /// Returns the discarded weight.
    pub fn split_pair(
        &mut self,
        pair: &MergedPair,
        dir: Direction,
        max_rank: usize,
    ) -> Result<f64> {
        let l = pair.site;
        let s = pair.tensor.shape();
        if l + 1 >= self.len() || s.len() != 5 || s[3] != self.classes {
            return Err(Error::dim(format!(
                "merged tensor shape {s:?} does not fit"
            )));
        }
        let split = match dir {
            Direction::Right => {
                let split = svd_split(&pair.tensor, &[0, 1], max_rank)?;
                self.sites[l] = split.u.clone();
                self.sites[l + 1] = split.s_vt(); // [k, s2, K, b]
                self.label_site = l + 1;
                split
            }
            Direction::Left => {
                let t = pair.tensor.permute(&[0, 1, 3, 2, 4])?; // [a, s1, K, s2, b]
                let split = svd_split(&t, &[0, 1, 2], max_rank)?;
                self.sites[l] = split.u_s();
                self.sites[l + 1] = split.vt.clone();
                self.label_site = l;
                split
            }
        };
        self.center = Some(self.label_site);
        Ok(split.discarded_weight)
    }

    /// Moves the label (and center) one site in `dir` without truncation.
    pub fn shift_label(&mut self, dir: Direction) -> Result<()> {
        let site = match dir {
            Direction::Right => self.label_site,
            Direction::Left => self
                .label_site
                .checked_sub(1)
                .ok_or_else(|| Error::arg("label already on the first site"))?,
        };
        let pair = self.merge_pair(site)?;
        self.split_pair(&pair, dir, usize::MAX)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_container(path, &Container::Labeled(self.clone()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        match load_container(path)? {
            Container::Labeled(m) => Ok(m),
            Container::Plain(_) => Err(Error::format(
                "file holds a plain MPS, expected a labelled model",
            )),
        }
    }
}

/// `out[k] = Σ ℓ_a v_s T[a, s, k, b] r_b` for a labeled site tensor.
fn label_contraction(t: &Tensor, left: &[f64], v: &[f64], right: &[f64]) -> Vec<f64> {
    let s = t.shape();
    let (chl, d, k, chr) = (s[0], s[1], s[2], s[3]);
    let data = t.data();
    let mut out = vec![0.0; k];
    for a in 0..chl {
        for (sv, &vs) in v.iter().enumerate().take(d) {
            let w = left[a] * vs;
            if w == 0.0 {
                continue;
            }
            for (kk, o) in out.iter_mut().enumerate() {
                let off = ((a * d + sv) * k + kk) * chr;
                let dotp: f64 = data[off..off + chr]
                    .iter()
                    .zip(right)
                    .map(|(x, y)| x * y)
                    .sum();
                *o += w * dotp;
            }
        }
    }
    out
}

fn check_labels(labels: &[usize], count: usize, classes: usize) -> Result<()> {
    if labels.len() != count {
        return Err(Error::Consistency(format!(
            "{count} samples but {} labels",
            labels.len()
        )));
    }
    if let Some(&c) = labels.iter().find(|&&c| c >= classes) {
        return Err(Error::arg(format!(
            "label {c} out of range for {classes} classes"
        )));
    }
    Ok(())
}

fn sq_error(pred: &[f64], label: usize) -> f64 {
    pred.iter()
        .enumerate()
        .map(|(k, &p)| {
            let e = p - if k == label { 1.0 } else { 0.0 };
            e * e
        })
        .sum()
}

/// `Σ_j ‖L̃_j − onehot(c_j)‖²`.
pub fn quadratic_cost(m: &LabeledMps, samples: &[ProductState], labels: &[usize]) -> Result<f64> {
    let refs: Vec<&ProductState> = samples.iter().collect();
    check_labels(labels, samples.len(), m.num_classes())?;
    cost_refs(m, &refs, labels)
}

fn cost_refs(m: &LabeledMps, samples: &[&ProductState], labels: &[usize]) -> Result<f64> {
    chunked_sum_scalar(samples.len(), |r| {
        let mut acc = 0.0;
        for j in r {
            acc += sq_error(&m.predict_vector(samples[j])?, labels[j]);
        }
        Ok(acc)
    })
}

/// Argmax of the predicted vector; ties go to the lowest class.
pub fn classify_discriminative(m: &LabeledMps, v: &ProductState) -> Result<usize> {
    Ok(argmax(&m.predict_vector(v)?))
}

/// Per-sample environments, flat and sample-major. Not normalized: the cost
/// depends on the absolute scale of the outputs.
struct Envs {
    dim: usize,
    data: Vec<f64>,
}

impl Envs {
    fn ones(count: usize) -> Self {
        Envs {
            dim: 1,
            data: vec![1.0; count],
        }
    }

    fn get(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    fn advance(&self, count: usize, f: impl Fn(usize, &[f64]) -> Vec<f64>) -> Envs {
        let mut data = Vec::new();
        let mut dim = 0;
        for j in 0..count {
            let v = f(j, self.get(j));
            dim = v.len();
            data.extend(v);
        }
        Envs { dim, data }
    }
}

/// Predictions of a merged tensor (flat `data`, inner dims `(d, k, χr)`) for
/// one sample's outer environments; `y` is scratch of size `d·d·k·χr`.
#[allow(clippy::too_many_arguments)]
fn pair_predict(
    data: &[f64],
    (d, k, chr): (usize, usize, usize),
    l: &[f64],
    r: &[f64],
    v1: &[f64],
    v2: &[f64],
    y: &mut [f64],
    pred: &mut [f64],
) {
    let inner = d * d * k * chr;
    // y[s1, s2, k, b] = Σ_a ℓ_a B[a, s1, s2, k, b]
    y.iter_mut().for_each(|x| *x = 0.0);
    for (a, &la) in l.iter().enumerate() {
        if la == 0.0 {
            continue;
        }
        for (x, &bb) in y.iter_mut().zip(&data[a * inner..(a + 1) * inner]) {
            *x += la * bb;
        }
    }
    pred.iter_mut().for_each(|x| *x = 0.0);
    for s1 in 0..d {
        for s2 in 0..d {
            let w = v1[s1] * v2[s2];
            for (kk, p) in pred.iter_mut().enumerate() {
                let off = ((s1 * d + s2) * k + kk) * chr;
                let dotp: f64 = y[off..off + chr].iter().zip(r).map(|(x, z)| x * z).sum();
                *p += w * dotp;
            }
        }
    }
}

/// `Σ_j ‖L̃_j(b)‖²`: the curvature of the quadratic cost along `b`.
fn pair_output_energy(
    b: &Tensor,
    site: usize,
    lefts: &Envs,
    rights: &Envs,
    samples: &[&ProductState],
) -> Result<f64> {
    let s = b.shape();
    let (d, k, chr) = (s[1], s[3], s[4]);
    let data = b.data();
    chunked_sum_scalar(samples.len(), |range| {
        let mut y = vec![0.0; d * d * k * chr];
        let mut pred = vec![0.0; k];
        let mut total = 0.0;
        for j in range {
            let v = samples[j];
            pair_predict(
                data,
                (d, k, chr),
                lefts.get(j),
                rights.get(j),
                v.site(site),
                v.site(site + 1),
                &mut y,
                &mut pred,
            );
            total += pred.iter().map(|x| x * x).sum::<f64>();
        }
        Ok(total)
    })
}

/// Relative step `α‖B‖` along `-g`, capped at the exact minimizer of the
/// quadratic cost on that line, `‖g‖ / (2 Σ_j ‖L̃_j(ĝ)‖²)`.
fn capped_step(
    pair: &mut MergedPair,
    g: &Tensor,
    alpha: f64,
    lefts: &Envs,
    rights: &Envs,
    samples: &[&ProductState],
) -> Result<()> {
    let gn = g.frobenius_norm();
    if gn == 0.0 {
        return Ok(());
    }
    let mut dir = g.clone();
    dir.scale_in_place(1.0 / gn);
    let curv = pair_output_energy(&dir, pair.site, lefts, rights, samples)?;
    let mut step = alpha * pair.tensor.frobenius_norm();
    if curv > 0.0 {
        step = step.min(gn / (2.0 * curv));
    }
    pair.tensor.axpy(-step, &dir)
}

/// Gradient of the quadratic cost with respect to the merged tensor `b`,
/// given each sample's environments outside the pair.
fn pair_gradient_kernel(
    b: &Tensor,
    site: usize,
    lefts: &Envs,
    rights: &Envs,
    samples: &[&ProductState],
    labels: &[usize],
) -> Result<Tensor> {
    let s = b.shape();
    let (chl, d, k, chr) = (s[0], s[1], s[3], s[4]);
    let inner = d * d * k * chr;
    let data = b.data();
    let sum = chunked_sum(samples.len(), b.len(), |range, acc| {
        let mut y = vec![0.0; inner];
        let mut pred = vec![0.0; k];
        for j in range {
            let (l, r) = (lefts.get(j), rights.get(j));
            let (v1, v2) = (samples[j].site(site), samples[j].site(site + 1));
            pair_predict(data, (d, k, chr), l, r, v1, v2, &mut y, &mut pred);
            let coef: Vec<f64> = pred
                .iter()
                .enumerate()
                .map(|(kk, &p)| 2.0 * (p - if kk == labels[j] { 1.0 } else { 0.0 }))
                .collect();
            for (a, &la) in l.iter().enumerate() {
                if la == 0.0 {
                    continue;
                }
                for s1 in 0..d {
                    for s2 in 0..d {
                        let w = la * v1[s1] * v2[s2];
                        for (kk, &c) in coef.iter().enumerate() {
                            let wc = w * c;
                            let off = (((a * d + s1) * d + s2) * k + kk) * chr;
                            for (x, &rb) in acc[off..off + chr].iter_mut().zip(r) {
                                *x += wc * rb;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    })?;
    debug_assert_eq!(sum.len(), chl * inner);
    Ok(Tensor::from_parts(s.to_vec(), sum))
}

fn outer_envs(m: &LabeledMps, site: usize, samples: &[&ProductState]) -> (Envs, Envs) {
    let n = samples.len();
    let mut left = Envs::ones(n);
    for l in 0..site {
        left = left.advance(n, |j, e| absorb_site(e, &m.sites[l], samples[j].site(l)));
    }
    let mut right = Envs::ones(n);
    for l in (site + 2..m.len()).rev() {
        right = right.advance(n, |j, e| {
            absorb_site_from_right(e, &m.sites[l], samples[j].site(l))
        });
    }
    (left, right)
}

fn check_pair(m: &LabeledMps, pair: &MergedPair) -> Result<()> {
    let want = m.merge_pair(pair.site)?;
    if want.tensor.shape() != pair.tensor.shape() {
        return Err(Error::dim(format!(
            "merged tensor shape {:?}, expected {:?}",
            pair.tensor.shape(),
            want.tensor.shape()
        )));
    }
    Ok(())
}

/// Quadratic cost with the pair `(pair.site, pair.site + 1)` of `m` replaced
/// by `pair.tensor`.
pub fn pair_cost(
    m: &LabeledMps,
    pair: &MergedPair,
    samples: &[ProductState],
    labels: &[usize],
) -> Result<f64> {
    check_pair(m, pair)?;
    check_labels(labels, samples.len(), m.num_classes())?;
    for v in samples {
        m.check_state(v)?;
    }
    let refs: Vec<&ProductState> = samples.iter().collect();
    let (left, right) = outer_envs(m, pair.site, &refs);
    let s = pair.tensor.shape();
    let (d, k) = (s[1], s[3]);
    let mut total = 0.0;
    for (j, v) in samples.iter().enumerate() {
        // Fold the second physical index into the first to reuse the labeled contraction.
        let (v1, v2) = (v.site(pair.site), v.site(pair.site + 1));
        let t = pair.tensor.data();
        let mut folded = vec![0.0; s[0] * d * k * s[4]];
        let inner = k * s[4];
        for a in 0..s[0] {
            for s1 in 0..d {
                for s2 in 0..d {
                    let src =
                        &t[((a * d + s1) * d + s2) * inner..((a * d + s1) * d + s2 + 1) * inner];
                    let dst = &mut folded[(a * d + s1) * inner..(a * d + s1 + 1) * inner];
                    for (x, y) in dst.iter_mut().zip(src) {
                        *x += v2[s2] * y;
                    }
                }
            }
        }
        let ft = Tensor::from_parts(vec![s[0], d, k, s[4]], folded);
        let pred = label_contraction(&ft, left.get(j), v1, right.get(j));
        total += sq_error(&pred, labels[j]);
    }
    Ok(total)
}

/// Gradient of [`pair_cost`] with respect to `pair.tensor`.
pub fn pair_gradient(
    m: &LabeledMps,
    pair: &MergedPair,
    samples: &[ProductState],
    labels: &[usize],
) -> Result<Tensor> {
    check_pair(m, pair)?;
    check_labels(labels, samples.len(), m.num_classes())?;
    for v in samples {
        m.check_state(v)?;
    }
    let refs: Vec<&ProductState> = samples.iter().collect();
    let (left, right) = outer_envs(m, pair.site, &refs);
    pair_gradient_kernel(&pair.tensor, pair.site, &left, &right, &refs, labels)
}

/// Quadratic cost of the samples with the pair replaced by `b`.
fn pair_sq_error(
    b: &Tensor,
    site: usize,
    lefts: &Envs,
    rights: &Envs,
    samples: &[&ProductState],
    labels: &[usize],
) -> Result<f64> {
    let s = b.shape();
    let (d, k, chr) = (s[1], s[3], s[4]);
    let data = b.data();
    chunked_sum_scalar(samples.len(), |range| {
        let mut y = vec![0.0; d * d * k * chr];
        let mut pred = vec![0.0; k];
        let mut total = 0.0;
        for j in range {
            let v = samples[j];
            pair_predict(
                data,
                (d, k, chr),
                lefts.get(j),
                rights.get(j),
                v.site(site),
                v.site(site + 1),
                &mut y,
                &mut pred,
            );
            total += sq_error(&pred, labels[j]);
        }
        Ok(total)
    })
}

/// Gradient step on the pair at `site` followed by the truncated split.
/// Moving the label across a bond can raise the rank of the pair by up to a
/// factor `K`, so even the unchanged pair may not split exactly at `chi`;
/// whichever of the updated and the original pair truncates to the lower
/// pair cost is kept.
#[allow(clippy::too_many_arguments)]
fn update_pair(
    m: &mut LabeledMps,
    site: usize,
    lefts: &Envs,
    rights: &Envs,
    samples: &[&ProductState],
    labels: &[usize],
    alpha: f64,
    chi: usize,
    dir: Direction,
) -> Result<f64> {
    let original = m.merge_pair(site)?;
    let start = pair_sq_error(&original.tensor, site, lefts, rights, samples, labels)?;
    let g = pair_gradient_kernel(&original.tensor, site, lefts, rights, samples, labels)?;
    let mut pair = original.clone();
    capped_step(&mut pair, &g, alpha, lefts, rights, samples)?;
    let truncated_cost = |m: &LabeledMps| {
        pair_sq_error(
            &m.merge_pair(site)?.tensor,
            site,
            lefts,
            rights,
            samples,
            labels,
        )
    };
    let discarded = m.split_pair(&pair, dir, chi)?;
    let updated = truncated_cost(m)?;
    if updated <= start {
        return Ok(discarded);
    }
    let kept = m.split_pair(&original, dir, chi)?;
    if truncated_cost(m)? <= updated {
        return Ok(kept);
    }
    m.split_pair(&pair, dir, chi)
}

/// One two-site pass in `dir`; the label must start at the matching end.
/// Returns the largest discarded weight of the pass.
fn sweep(
    m: &mut LabeledMps,
    samples: &[&ProductState],
    labels: &[usize],
    alpha: f64,
    chi: usize,
    dir: Direction,
) -> Result<f64> {
    let len = m.len();
    let n = samples.len();
    let mut worst: f64 = 0.0;
    match dir {
        Direction::Right => {
            debug_assert_eq!(m.label_site, 0);
            // rights[l] covers sites l+1.. ; only label-free sites are absorbed.
            let mut rights = vec![Envs::ones(n)];
            for l in (2..len).rev() {
                let next = rights.last().unwrap().advance(n, |j, e| {
                    absorb_site_from_right(e, &m.sites[l], samples[j].site(l))
                });
                rights.push(next);
            }
            rights.reverse(); // rights[i] covers sites i+2..
            let mut left = Envs::ones(n);
            for l in 0..len - 1 {
                let w = update_pair(
                    m,
                    l,
                    &left,
                    &rights[l],
                    samples,
                    labels,
                    alpha,
                    chi,
                    Direction::Right,
                )?;
                worst = worst.max(w);
                left = left.advance(n, |j, e| absorb_site(e, &m.sites[l], samples[j].site(l)));
            }
        }
        Direction::Left => {
            debug_assert_eq!(m.label_site, len - 1);
            // lefts[l] covers sites ..l-1.
            let mut lefts = vec![Envs::ones(n)];
            for l in 0..len - 2 {
                let next = lefts
                    .last()
                    .unwrap()
                    .advance(n, |j, e| absorb_site(e, &m.sites[l], samples[j].site(l)));
                lefts.push(next);
            }
            let mut right = Envs::ones(n);
            for l in (0..len - 1).rev() {
                let w = update_pair(
                    m,
                    l,
                    &lefts[l],
                    &right,
                    samples,
                    labels,
                    alpha,
                    chi,
                    Direction::Left,
                )?;
                worst = worst.max(w);
                right = right.advance(n, |j, e| {
                    absorb_site_from_right(e, &m.sites[l + 1], samples[j].site(l + 1))
                });
            }
        }
    }
    Ok(worst)
}

/// Rescales the label tensor by the least-squares factor
/// `s = Σ_j ⟨L̃_j, y_j⟩ / Σ_j ‖L̃_j‖²`, so training starts from outputs of
/// the right magnitude instead of the vanishing overlaps of a long chain.
fn fit_scale(m: &mut LabeledMps, samples: &[ProductState], labels: &[usize]) -> Result<()> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (v, &c) in samples.iter().zip(labels) {
        let p = m.predict_vector(v)?;
        num += p[c];
        den += p.iter().map(|x| x * x).sum::<f64>();
    }
    if den == 0.0 || !den.is_finite() {
        return Err(Error::DegenerateState);
    }
    let mut s = num / den;
    if s == 0.0 {
        s = (samples.len() as f64 / den).sqrt();
    }
    m.sites[m.label_site].scale_in_place(s);
    Ok(())
}

/// Trains the labeled model on a dataset with at least two classes present.
pub fn train_discriminative(
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(LabeledMps, TrainReport)> {
    let present = dataset.class_counts().iter().filter(|&&n| n > 0).count();
    if present < 2 {
        return Err(Error::arg(
            "discriminative training needs at least two classes",
        ));
    }
    let states = dataset.product_states()?;
    train_discriminative_states(
        &states,
        dataset.labels(),
        dataset.num_classes(),
        config,
        |_| {},
    )
}

/// [`train_discriminative`] on mapped samples, with a per-sweep observer.
pub fn train_discriminative_states(
    samples: &[ProductState],
    labels: &[usize],
    classes: usize,
    config: &TrainConfig,
    mut observer: impl FnMut(&SweepEvent<'_, LabeledMps>),
) -> Result<(LabeledMps, TrainReport)> {
    config.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| Error::arg("training needs at least one sample"))?;
    let (len, d) = (first.len(), first.local_dim());
    for v in samples {
        v.check_geometry(len, d)?;
    }
    check_labels(labels, samples.len(), classes)?;
    let started = Instant::now();
    let mut m = LabeledMps::near_identity(len, d, classes, config.chi, INIT_NOISE, config.seed)?;
    fit_scale(&mut m, samples, labels)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c);
    let mut alpha = config.alpha;
    let mut report = TrainReport::default();
    let full: Vec<&ProductState> = samples.iter().collect();
    let mut cost = cost_refs(&m, &full, labels)?;
    report.initial_cost = cost;

    for t in 0..config.max_sweeps {
        let tick = Instant::now();
        let idx = batch_indices(samples.len(), config.batch_size, &mut rng);
        let set: Vec<&ProductState> = idx.iter().map(|&i| &samples[i]).collect();
        let sub_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let before = if set.len() == samples.len() {
            cost
        } else {
            cost_refs(&m, &set, &sub_labels)?
        };
        let dir = if m.label_site == 0 {
            Direction::Right
        } else {
            Direction::Left
        };
        let mut trial = m.clone();
        sweep(&mut trial, &set, &sub_labels, alpha, config.chi, dir)?;
        let after = cost_refs(&trial, &set, &sub_labels)?;
        if !after.is_finite() {
            report.record(after, alpha, false, tick.elapsed().as_secs_f64());
            report.final_cost = cost;
            report.wall_time = started.elapsed();
            return Err(Error::Diverged {
                reason: format!("cost became {after} in sweep {t}"),
                report: Box::new(report),
            });
        }
        let accepted = after <= before;
        let used_alpha = alpha;
        let mut converged = false;
        if accepted {
            converged = before - after <= config.convergence_tol * before.abs();
            m = trial;
            cost = if set.len() == samples.len() {
                after
            } else {
                cost_refs(&m, &full, labels)?
            };
        } else {
            alpha /= config.beta;
        }
        report.record(after, used_alpha, accepted, tick.elapsed().as_secs_f64());
        observer(&SweepEvent {
            sweep: t,
            direction: dir,
            cost: after,
            alpha: used_alpha,
            accepted,
            model: &m,
        });
        if converged {
            report.converged = true;
            break;
        }
    }
    report.final_cost = cost;
    report.wall_time = started.elapsed();
    Ok((m, report))
}

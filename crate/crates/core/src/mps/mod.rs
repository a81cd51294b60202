//! Open-boundary matrix product states over real scalars.
//!
//! Site `l` holds a tensor of shape `(χ_l, d, χ_{l+1})` with `χ_0 = χ_L = 1`.
//! A state may carry a canonical center `c`: every site left of `c` is then
//! left-orthonormal and every site right of it right-orthonormal, so that the
//! squared norm of the whole state equals the squared Frobenius norm of site
//! `c` alone.

mod io;

pub use io::{load_container, model_paths, save_container, Container, FORMAT_VERSION, MAGIC};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feature::ProductState;
use crate::tensor::{
    column_orthonormality_residual, contract, qr_split, row_orthonormality_residual, svd_split,
    Tensor,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Mps {
    sites: Vec<Tensor>,
    center: Option<usize>,
}

/// Bond extents `min(χ, d^l, d^{L-l})` for `l = 0..=L`.
pub fn capped_bond_dims(len: usize, local_dim: usize, chi: usize) -> Vec<usize> {
    let cap = |l: usize| -> usize {
        let mut p: usize = 1;
        for _ in 0..l {
            p = p.saturating_mul(local_dim);
            if p >= chi {
                return chi;
            }
        }
        p.min(chi)
    };
    (0..=len).map(|l| cap(l).min(cap(len - l))).collect()
}

impl Mps {
    /// Wraps site tensors after checking that their shapes chain together.
    /// The result has no canonical center.
    pub fn from_sites(sites: Vec<Tensor>) -> Result<Self> {
        check_chain(&sites)?;
        Ok(Mps {
            sites,
            center: None,
        })
    }

    /// Seeded random state: entries uniform in `(-0.5, 0.5)`, bonds capped at
    /// `min(χ, d^l, d^{L-l})`, then brought into canonical form centered on
    /// the last site and normalized.
    pub fn random(len: usize, local_dim: usize, chi: usize, seed: u64) -> Result<Self> {
        if len < 2 || local_dim < 2 || chi < 1 {
            return Err(Error::arg(format!(
                "random MPS needs L >= 2, d >= 2, chi >= 1 (got {len}, {local_dim}, {chi})"
            )));
        }
        let bonds = capped_bond_dims(len, local_dim, chi);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sites = (0..len)
            .map(|l| {
                Tensor::from_fn(vec![bonds[l], local_dim, bonds[l + 1]], |_| {
                    rng.random_range(-0.5..0.5)
                })
            })
            .collect();
        let mut m = Mps {
            sites,
            center: None,
        };
        // Renormalizing after every step keeps long chains out of underflow.
        for l in 0..len - 1 {
            m.move_center_right(l)?;
            let n = m.sites[l + 1].frobenius_norm();
            if n == 0.0 {
                return Err(Error::DegenerateState);
            }
            m.sites[l + 1].scale_in_place(1.0 / n);
        }
        Ok(m)
    }

    /// Bond-dimension-one state whose sites are the local vectors of `v`.
    pub fn from_product_state(v: &ProductState) -> Self {
        let d = v.local_dim();
        let sites = v
            .sites()
            .map(|s| Tensor::from_parts(vec![1, d, 1], s.to_vec()))
            .collect();
        // Unit local vectors are already isometries on both sides.
        Mps {
            sites,
            center: Some(0),
        }
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

    pub fn site(&self, l: usize) -> &Tensor {
        &self.sites[l]
    }

    pub(crate) fn site_mut(&mut self, l: usize) -> &mut Tensor {
        &mut self.sites[l]
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// `[χ_0, χ_1, …, χ_L]`.
    pub fn bond_dims(&self) -> Vec<usize> {
        std::iter::once(1)
            .chain(self.sites.iter().map(|t| t.shape()[2]))
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn num_parameters(&self) -> usize {
        self.sites.iter().map(Tensor::len).sum()
    }

    /// Returns a copy in canonical form about `center`. The represented
    /// vector is unchanged.
    pub fn canonicalize(&self, center: usize) -> Result<Self> {
        let mut m = self.clone();
        m.canonicalize_in_place(center)?;
        Ok(m)
    }

    pub fn canonicalize_in_place(&mut self, center: usize) -> Result<()> {
        if center >= self.len() {
            return Err(Error::arg(format!(
                "center {center} out of range for {} sites",
                self.len()
            )));
        }
        match self.center {
            Some(c) => {
                for l in c..center {
                    self.move_center_right(l)?;
                }
                for l in (center + 1..=c).rev() {
                    self.move_center_left(l)?;
                }
            }
            None => {
                for l in 0..center {
                    self.move_center_right(l)?;
                }
                for l in (center + 1..self.len()).rev() {
                    self.move_center_left(l)?;
                }
            }
        }
        self.center = Some(center);
        Ok(())
    }

    /// QR on site `l`, pushing `R` into site `l + 1`.
    pub(crate) fn move_center_right(&mut self, l: usize) -> Result<()> {
        let (q, r) = qr_split(&self.sites[l], &[0, 1])?;
        let next = contract(&r, &self.sites[l + 1], &[(1, 0)])?;
        self.sites[l] = q;
        self.sites[l + 1] = next;
        self.center = Some(l + 1);
        Ok(())
    }

    /// QR on the transpose of site `l`, pushing the triangular factor into site `l - 1`.
    pub(crate) fn move_center_left(&mut self, l: usize) -> Result<()> {
        let (q, r) = qr_split(&self.sites[l], &[1, 2])?; // q: (d, χr, k), r: (k, χl)
        let prev = contract(&self.sites[l - 1], &r, &[(2, 1)])?;
        self.sites[l] = q.permute(&[2, 0, 1])?;
        self.sites[l - 1] = prev;
        self.center = Some(l - 1);
        Ok(())
    }

    /// `‖Ψ‖²`: read off the center tensor in canonical form, otherwise by a
    /// transfer-matrix sweep.
    pub fn norm_sqr(&self) -> f64 {
        if let Some(c) = self.center {
            return self.sites[c].norm_sqr();
        }
        // E[a, a'] accumulated left to right.
        let mut env = vec![1.0];
        let mut dim = 1;
        for t in &self.sites {
            let (chl, d, chr) = dims3(t);
            debug_assert_eq!(chl, dim);
            let data = t.data();
            // tmp[a', s, b] = Σ_a E[a, a'] T[a, s, b]
            let mut tmp = vec![0.0; chl * d * chr];
            for a in 0..chl {
                for ap in 0..chl {
                    let e = env[a * chl + ap];
                    if e == 0.0 {
                        continue;
                    }
                    let src = &data[a * d * chr..(a + 1) * d * chr];
                    let dst = &mut tmp[ap * d * chr..(ap + 1) * d * chr];
                    for (x, y) in dst.iter_mut().zip(src) {
                        *x += e * y;
                    }
                }
            }
            // E'[b, b'] = Σ_{a', s} tmp[a', s, b] T[a', s, b']
            let mut next = vec![0.0; chr * chr];
            for ap in 0..chl {
                for s in 0..d {
                    let off = (ap * d + s) * chr;
                    let row_t = &tmp[off..off + chr];
                    let row_d = &data[off..off + chr];
                    for b in 0..chr {
                        let x = row_t[b];
                        for bp in 0..chr {
                            next[b * chr + bp] += x * row_d[bp];
                        }
                    }
                }
            }
            env = next;
            dim = chr;
        }
        env[0]
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Scales to unit norm (on the center tensor when there is one).
    pub fn normalize_in_place(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateState);
        }
        let l = self.center.unwrap_or(0);
        self.sites[l].scale_in_place(1.0 / n);
        Ok(())
    }

    pub fn normalized(&self) -> Result<Self> {
        let mut m = self.clone();
        m.normalize_in_place()?;
        Ok(m)
    }

    fn check_state(&self, v: &ProductState) -> Result<()> {
        v.check_geometry(self.len(), self.local_dim())
    }

    /// `vᵀΨ`, contracted left to right in `O(L d χ²)`.
    pub fn overlap(&self, v: &ProductState) -> Result<f64> {
        let (sign, log) = self.log_overlap(v)?;
        Ok(if sign == 0.0 { 0.0 } else { sign * log.exp() })
    }

    /// `(sign, ln|vᵀΨ|)` with the running environment renormalized at every
    /// site, so long chains neither underflow nor overflow.
    pub fn log_overlap(&self, v: &ProductState) -> Result<(f64, f64)> {
        self.check_state(v)?;
        let mut env = vec![1.0];
        let mut log = 0.0;
        for (t, s) in self.sites.iter().zip(v.sites()) {
            env = absorb_site(&env, t, s);
            let n = env.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                return Ok((0.0, f64::NEG_INFINITY));
            }
            log += n.ln();
            env.iter_mut().for_each(|x| *x /= n);
        }
        Ok((env[0].signum(), log))
    }

    /// Normalized Schmidt coefficients across `bond`, which separates sites
    /// `0..bond` from `bond..L` (`1 <= bond <= L - 1`).
    pub fn schmidt_values(&self, bond: usize) -> Result<Vec<f64>> {
        if bond == 0 || bond >= self.len() {
            return Err(Error::arg(format!(
                "bond {bond} outside 1..={}",
                self.len() - 1
            )));
        }
        let m = self.canonicalize(bond - 1)?;
        let split = svd_split(&m.sites[bond - 1], &[0, 1], usize::MAX)?;
        let norm = split
            .singular_values
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateState);
        }
        Ok(split.singular_values.iter().map(|x| x / norm).collect())
    }

    /// Rényi-2 entanglement entropy `-ln Σ λ⁴` across `bond`.
    pub fn renyi2_entropy(&self, bond: usize) -> Result<f64> {
        let lambda = self.schmidt_values(bond)?;
        let purity: f64 = lambda.iter().map(|x| x.powi(4)).sum();
        Ok(-purity.ln())
    }

    /// Largest deviation from isometry among the non-center sites (0 without a center).
    pub fn orthonormality_residual(&self) -> f64 {
        let Some(c) = self.center else { return 0.0 };
        self.sites
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != c)
            .map(|(l, t)| {
                let (chl, d, chr) = dims3(t);
                if l < c {
                    column_orthonormality_residual(t.data(), chl * d, chr)
                } else {
                    row_orthonormality_residual(t.data(), chl, d * chr)
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_container(path, &Container::plain(self.clone()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        match load_container(path)? {
            Container::Plain(m) => Ok(m),
            Container::Labeled(_) => Err(Error::format(
                "file holds a labelled model, expected a plain MPS",
            )),
        }
    }
}

pub(crate) fn dims3(t: &Tensor) -> (usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2])
}

/// `out[b] = Σ_{a,s} env[a] T[a, s, b] v[s]`.
pub(crate) fn absorb_site(env: &[f64], t: &Tensor, v: &[f64]) -> Vec<f64> {
    let (chl, d, chr) = dims3(t);
    let data = t.data();
    let mut out = vec![0.0; chr];
    for a in 0..chl {
        let e = env[a];
        if e == 0.0 {
            continue;
        }
        for s in 0..d {
            let w = e * v[s];
            let row = &data[(a * d + s) * chr..(a * d + s + 1) * chr];
            for (o, x) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        }
    }
    out
}

/// `out[a] = Σ_{s,b} T[a, s, b] v[s] env[b]`.
pub(crate) fn absorb_site_from_right(env: &[f64], t: &Tensor, v: &[f64]) -> Vec<f64> {
    let (chl, d, chr) = dims3(t);
    let data = t.data();
    let mut out = vec![0.0; chl];
    for (a, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for s in 0..d {
            let row = &data[(a * d + s) * chr..(a * d + s + 1) * chr];
            let dotp: f64 = row.iter().zip(env).map(|(x, y)| x * y).sum();
            acc += v[s] * dotp;
        }
        *o = acc;
    }
    out
}

pub(crate) fn check_chain(sites: &[Tensor]) -> Result<()> {
    if sites.len() < 2 {
        return Err(Error::arg("an MPS needs at least two sites"));
    }
    let d = sites[0].shape().get(1).copied().unwrap_or(0);
    let mut left = 1;
    for (l, t) in sites.iter().enumerate() {
        let s = t.shape();
        if s.len() != 3 || s[0] != left || s[1] != d {
            return Err(Error::dim(format!(
                "site {l} has shape {s:?}; expected ({left}, {d}, _)"
            )));
        }
        left = s[2];
    }
    if left != 1 {
        return Err(Error::dim("last bond must have extent 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::map_image;

    #[test]
    fn bond_caps() {
        assert_eq!(capped_bond_dims(6, 2, 3), vec![1, 2, 3, 3, 3, 2, 1]);
        assert_eq!(capped_bond_dims(3, 2, 16), vec![1, 2, 2, 1]);
        assert_eq!(capped_bond_dims(200, 2, 16)[100], 16);
    }

    #[test]
    fn random_is_normalized_and_canonical() {
        let m = Mps::random(7, 2, 4, 3).unwrap();
        assert_eq!(m.center(), Some(6));
        assert!((m.norm() - 1.0).abs() < 1e-12);
        assert!(m.orthonormality_residual() < 1e-12);
        assert_eq!(m.bond_dims(), vec![1, 2, 4, 4, 4, 4, 2, 1]);
        let mut free = m.clone();
        free.center = None;
        assert!((free.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_is_deterministic() {
        assert_eq!(
            Mps::random(5, 2, 3, 9).unwrap(),
            Mps::random(5, 2, 3, 9).unwrap()
        );
        assert_ne!(
            Mps::random(5, 2, 3, 9).unwrap(),
            Mps::random(5, 2, 3, 10).unwrap()
        );
    }

    #[test]
    fn chi_one_is_product() {
        let m = Mps::random(6, 2, 1, 0).unwrap();
        assert!(m.bond_dims().iter().all(|&b| b == 1));
        assert!((m.norm() - 1.0).abs() < 1e-12);
        for l in 1..6 {
            assert!(m.renyi2_entropy(l).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(Mps::random(1, 2, 2, 0).is_err());
        assert!(Mps::random(4, 1, 2, 0).is_err());
        assert!(Mps::random(4, 2, 0, 0).is_err());
        let m = Mps::random(4, 2, 2, 0).unwrap();
        assert!(m.canonicalize(4).is_err());
        assert!(m.renyi2_entropy(0).is_err());
        assert!(m.renyi2_entropy(4).is_err());
    }

    #[test]
    fn canonicalize_moves_center_and_keeps_overlaps() {
        let m = Mps::random(8, 2, 4, 5).unwrap();
        let v = map_image(&[0.1, 0.5, 0.9, 0.3, 0.0, 1.0, 0.7, 0.2]).unwrap();
        let before = m.overlap(&v).unwrap();
        for c in [0, 3, 7, 2] {
            let mc = m.canonicalize(c).unwrap();
            assert_eq!(mc.center(), Some(c));
            assert!(mc.orthonormality_residual() < 1e-12);
            assert!((mc.norm_sqr() - 1.0).abs() < 1e-12);
            assert!((mc.overlap(&v).unwrap() - before).abs() < 1e-12 * before.abs().max(1e-3));
        }
    }

    #[test]
    fn recanonicalize_same_center_is_noop() {
        let m = Mps::random(5, 2, 3, 1).unwrap();
        assert_eq!(m.canonicalize(4).unwrap(), m);
    }

    #[test]
    fn product_state_overlaps() {
        let v = map_image(&[0.2, 0.8, 0.5]).unwrap();
        let m = Mps::from_product_state(&v);
        assert!((m.overlap(&v).unwrap() - 1.0).abs() < 1e-15);
        let mut sites: Vec<Vec<f64>> = v.sites().map(<[f64]>::to_vec).collect();
        sites[1] = vec![-sites[1][1], sites[1][0]]; // orthogonal at one site
        let orth = ProductState::from_local_vectors(&sites).unwrap();
        assert!(m.overlap(&orth).unwrap().abs() < 1e-16);
    }

    #[test]
    fn equal_schmidt_values_give_ln2() {
        // (|00> + |11>)/√2
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = Tensor::new(vec![1, 2, 2], vec![s, 0.0, 0.0, s]).unwrap();
        let b = Tensor::new(vec![2, 2, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = Mps::from_sites(vec![a, b]).unwrap();
        assert!((m.renyi2_entropy(1).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_bounded_by_bond() {
        let m = Mps::random(10, 2, 5, 11).unwrap();
        let bonds = m.bond_dims();
        for b in 1..10 {
            assert!(m.renyi2_entropy(b).unwrap() <= (bonds[b] as f64).ln() + 1e-10);
        }
    }

    #[test]
    fn zero_state_is_degenerate() {
        let z = Tensor::zeros(vec![1, 2, 1]);
        let m = Mps::from_sites(vec![z.clone(), z]).unwrap();
        assert!(matches!(m.renyi2_entropy(1), Err(Error::DegenerateState)));
        assert!(matches!(m.normalized(), Err(Error::DegenerateState)));
    }

    #[test]
    fn log_overlap_survives_long_chains() {
        let len = 3000;
        let m = Mps::random(len, 2, 2, 4).unwrap();
        let v = map_image(&vec![0.5; len]).unwrap();
        let (sign, log) = m.log_overlap(&v).unwrap();
        assert!(sign != 0.0 && log.is_finite());
        assert!(
            log < -700.0,
            "expected an amplitude below f64 range, got ln = {log}"
        );
    }

    #[test]
    fn from_sites_checks_chain() {
        let a = Tensor::zeros(vec![1, 2, 3]);
        let b = Tensor::zeros(vec![2, 2, 1]);
        assert!(Mps::from_sites(vec![a.clone(), b]).is_err());
        let c = Tensor::zeros(vec![3, 2, 2]);
        assert!(Mps::from_sites(vec![a, c]).is_err());
    }
}

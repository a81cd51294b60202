//! Dense real tensors and the handful of primitives the network code needs:
//! contraction over index pairs, permutation, and QR / SVD splits of a tensor
//! viewed as a matrix across a bipartition of its indices.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};

/// Row-major dense tensor of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if let Some(axis) = shape.iter().position(|&n| n == 0) {
            return Err(Error::dim(format!("axis {axis} has extent 0")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} holds {len} elements but {} were given",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("tensor data contains NaN or Inf".into()));
        }
        Ok(Tensor { shape, data })
    }

    /// Constructor for callers that already guarantee the invariants.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![x],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Tensor { shape, data }
    }

    /// The `n × n` identity matrix.
    pub fn eye(n: usize) -> Self {
        Tensor::from_fn(vec![n, n], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of range for extent {n}");
            acc * n + i
        })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.contains(&0) {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    /// Reorders the axes: axis `k` of the result is axis `axes[k]` of `self`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        check_permutation(axes, self.rank())?;
        if axes.iter().enumerate().all(|(k, &a)| k == a) {
            return Ok(self.clone());
        }
        let strides = strides(&self.shape);
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let new_strides: Vec<usize> = axes.iter().map(|&a| strides[a]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; new_shape.len()];
        for _ in 0..self.data.len() {
            let src: usize = idx.iter().zip(&new_strides).map(|(i, s)| i * s).sum();
            data.push(self.data[src]);
            increment(&mut idx, &new_shape);
        }
        Ok(Tensor {
            shape: new_shape,
            data,
        })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "axpy of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += alpha * y;
        }
        Ok(())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Full inner product of two equally shaped tensors.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "dot of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Splits the axes into `left` (in the given order) and the rest (in
    /// original order) and returns the data permuted to that layout together
    /// with the two extent lists.
    fn bipartition(&self, left: &[usize]) -> Result<(Tensor, Vec<usize>, Vec<usize>)> {
        if left.is_empty() || left.len() >= self.rank() {
            return Err(Error::arg(format!(
                "left index set {left:?} must be a nonempty proper subset of {} axes",
                self.rank()
            )));
        }
        let mut seen = vec![false; self.rank()];
        for &a in left {
            if a >= self.rank() {
                return Err(Error::arg(format!("axis {a} out of range")));
            }
            if std::mem::replace(&mut seen[a], true) {
                return Err(Error::arg(format!("axis {a} repeated")));
            }
        }
        let right: Vec<usize> = (0..self.rank()).filter(|a| !seen[*a]).collect();
        let axes: Vec<usize> = left.iter().chain(&right).copied().collect();
        let permuted = self.permute(&axes)?;
        let left_ext = left.iter().map(|&a| self.shape[a]).collect();
        let right_ext = right.iter().map(|&a| self.shape[a]).collect();
        Ok((permuted, left_ext, right_ext))
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

fn check_permutation(axes: &[usize], rank: usize) -> Result<()> {
    if axes.len() != rank {
        return Err(Error::arg(format!(
            "permutation {axes:?} has wrong length for rank {rank}"
        )));
    }
    let mut seen = vec![false; rank];
    for &a in axes {
        if a >= rank || std::mem::replace(&mut seen[a], true) {
            return Err(Error::arg(format!("{axes:?} is not a permutation")));
        }
    }
    Ok(())
}

/// Row-major `(m × k) · (k × n)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (cij, bpj) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cij += aip * bpj;
            }
        }
    }
    c
}

/// Contracts `a` and `b` over the listed `(axis of a, axis of b)` pairs.
///
/// The result carries the free axes of `a` in order, followed by the free
/// axes of `b`.
pub fn contract(a: &Tensor, b: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor> {
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(i, j) in pairs {
        if i >= a.rank() || j >= b.rank() {
            return Err(Error::arg(format!("pair ({i}, {j}) out of range")));
        }
        if std::mem::replace(&mut used_a[i], true) || std::mem::replace(&mut used_b[j], true) {
            return Err(Error::arg(format!("index repeated in pairs {pairs:?}")));
        }
        if a.shape[i] != b.shape[j] {
            return Err(Error::dim(format!(
                "contracting axis {i} (extent {}) with axis {j} (extent {})",
                a.shape[i], b.shape[j]
            )));
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&j| !used_b[j]).collect();

    let perm_a: Vec<usize> = free_a
        .iter()
        .copied()
        .chain(pairs.iter().map(|p| p.0))
        .collect();
    let perm_b: Vec<usize> = pairs
        .iter()
        .map(|p| p.1)
        .chain(free_b.iter().copied())
        .collect();
    let pa = a.permute(&perm_a)?;
    let pb = b.permute(&perm_b)?;

    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = pairs.iter().map(|p| a.shape[p.0]).product();
    let n: usize = free_b.iter().map(|&j| b.shape[j]).product();
    let data = matmul(&pa.data, &pb.data, m, k, n);
    let shape = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&j| b.shape[j]))
        .collect();
    Ok(Tensor::from_parts(shape, data))
}

/// QR factorization of `t` viewed as a (`left` × rest) matrix.
///
/// `Q` has shape `left extents ++ [k]` with orthonormal columns, `R` has shape
/// `[k] ++ remaining extents`, `k = min(rows, cols)`. The diagonal of `R` is
/// made non-negative so the factorization is unique for full-rank input.
pub fn qr_split(t: &Tensor, left: &[usize]) -> Result<(Tensor, Tensor)> {
    let (p, left_ext, right_ext) = t.bipartition(left)?;
    let rows: usize = left_ext.iter().product();
    let cols: usize = right_ext.iter().product();
    let k = rows.min(cols);

    let qr = DMatrix::from_row_slice(rows, cols, &p.data).qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..k {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }

    let q_shape = left_ext.iter().copied().chain([k]).collect();
    let r_shape = std::iter::once(k)
        .chain(right_ext.iter().copied())
        .collect();
    Ok((
        Tensor::from_parts(q_shape, row_major(&q)),
        Tensor::from_parts(r_shape, row_major(&r)),
    ))
}

/// Truncated singular value decomposition across a bipartition.
#[derive(Clone, Debug)]
pub struct SvdSplit {
    /// Shape `left extents ++ [k]`, orthonormal columns.
    pub u: Tensor,
    /// Descending, length `k`.
    pub singular_values: Vec<f64>,
    /// Shape `[k] ++ remaining extents`, orthonormal rows (the transpose of `V`).
    pub vt: Tensor,
    /// Sum of squares of the dropped singular values.
    pub discarded_weight: f64,
}

impl SvdSplit {
    /// `S · Vᵀ`, the factor that carries the norm when sweeping rightwards.
    pub fn s_vt(&self) -> Tensor {
        let mut out = self.vt.clone();
        let cols = out.len() / self.singular_values.len();
        for (row, s) in out.data.chunks_mut(cols).zip(&self.singular_values) {
            row.iter_mut().for_each(|x| *x *= s);
        }
        out
    }

    /// `U · S`, the factor that carries the norm when sweeping leftwards.
    pub fn u_s(&self) -> Tensor {
        let mut out = self.u.clone();
        let k = self.singular_values.len();
        for row in out.data.chunks_mut(k) {
            for (x, s) in row.iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        out
    }
}

/// SVD of `t` viewed as a (`left` × rest) matrix, keeping at most `max_rank`
/// singular values.
pub fn svd_split(t: &Tensor, left: &[usize], max_rank: usize) -> Result<SvdSplit> {
    if max_rank == 0 {
        return Err(Error::arg("max_rank must be at least 1"));
    }
    let (p, left_ext, right_ext) = t.bipartition(left)?;
    let rows: usize = left_ext.iter().product();
    let cols: usize = right_ext.iter().product();

    let m = DMatrix::from_row_slice(rows, cols, &p.data);
    let svd = SVD::try_new(m, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));
    let k = max_rank.min(order.len());
    let discarded_weight = order[k..].iter().map(|&i| sv[i] * sv[i]).sum();
    let kept = &order[..k];

    let mut u_data = Vec::with_capacity(rows * k);
    for r in 0..rows {
        u_data.extend(kept.iter().map(|&j| u[(r, j)]));
    }
    let mut vt_data = Vec::with_capacity(k * cols);
    for &i in kept {
        vt_data.extend((0..cols).map(|c| vt[(i, c)]));
    }
    Ok(SvdSplit {
        u: Tensor::from_parts(left_ext.iter().copied().chain([k]).collect(), u_data),
        singular_values: kept.iter().map(|&i| sv[i]).collect(),
        vt: Tensor::from_parts(std::iter::once(k).chain(right_ext).collect(), vt_data),
        discarded_weight,
    })
}

pub fn frobenius_norm(t: &Tensor) -> f64 {
    t.frobenius_norm()
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        out.extend((0..cols).map(|c| m[(r, c)]));
    }
    out
}

/// Max-abs deviation of `MᵀM` from the identity for a row-major `rows × cols`
/// matrix; zero when the columns are orthonormal.
pub fn column_orthonormality_residual(data: &[f64], rows: usize, cols: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..cols {
        for j in i..cols {
            let mut s = 0.0;
            for r in 0..rows {
                s += data[r * cols + i] * data[r * cols + j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
    }
    worst
}

/// Max-abs deviation of `MMᵀ` from the identity; zero when the rows are orthonormal.
pub fn row_orthonormality_residual(data: &[f64], rows: usize, cols: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..rows {
        let ri = &data[i * cols..(i + 1) * cols];
        for j in i..rows {
            let rj = &data[j * cols..(j + 1) * cols];
            let s: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b).unwrap();
        d.frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn identity_contraction() {
        let v = Tensor::new(vec![2], vec![0.3, -1.5]).unwrap();
        let out = contract(&Tensor::eye(2), &v, &[(1, 0)]).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn full_contraction_gives_scalar() {
        let u = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let out = contract(&u, &u, &[(0, 0)]).unwrap();
        assert!(out.shape().is_empty());
        assert_eq!(out.data(), &[1.0]);
    }

    #[test]
    fn contraction_matches_triple_loop() {
        let a = random(vec![3, 4], 1);
        let b = random(vec![4, 2], 2);
        let c = contract(&a, &b, &[(1, 0)]).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for p in 0..4 {
                    s += a.get(&[i, p]) * b.get(&[p, j]);
                }
                assert!((c.get(&[i, j]) - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn contraction_keeps_free_axis_order() {
        let a = random(vec![2, 3, 4], 3);
        let b = random(vec![5, 3], 4);
        let c = contract(&a, &b, &[(1, 1)]).unwrap();
        assert_eq!(c.shape(), &[2, 4, 5]);
        let mut s = 0.0;
        for p in 0..3 {
            s += a.get(&[1, p, 2]) * b.get(&[4, p]);
        }
        assert!((c.get(&[1, 2, 4]) - s).abs() < 1e-14);
    }

    #[test]
    fn contraction_errors() {
        let a = random(vec![2, 3], 5);
        let b = random(vec![2, 2], 6);
        assert!(matches!(
            contract(&a, &b, &[(1, 0)]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            contract(&a, &b, &[(0, 0), (0, 1)]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn qr_of_orthonormal_columns_is_trivial() {
        // columns of a rotation matrix
        let (c, s) = (0.6, 0.8);
        let t = Tensor::new(vec![2, 2], vec![c, -s, s, c]).unwrap();
        let (q, r) = qr_split(&t, &[0]).unwrap();
        assert!(rel_err(&q, &t) < 1e-14);
        assert!(rel_err(&r, &Tensor::eye(2)) < 1e-14);
    }

    #[test]
    fn qr_orthonormality_tall() {
        let t = random(vec![6, 4], 7);
        let (q, r) = qr_split(&t, &[0]).unwrap();
        assert_eq!(q.shape(), &[6, 4]);
        assert_eq!(r.shape(), &[4, 4]);
        assert!(column_orthonormality_residual(q.data(), 6, 4) < 1e-12);
        for i in 0..4 {
            assert!(r.get(&[i, i]) >= 0.0);
        }
    }

    #[test]
    fn qr_reconstructs_rank3() {
        let t = random(vec![2, 2, 3], 8);
        let (q, r) = qr_split(&t, &[0, 1]).unwrap();
        let back = contract(&q, &r, &[(2, 0)]).unwrap();
        assert!(rel_err(&back, &t) < 1e-12);
    }

    #[test]
    fn qr_with_permuted_left_group() {
        let t = random(vec![2, 3, 4], 9);
        let (q, r) = qr_split(&t, &[2, 0]).unwrap();
        assert_eq!(q.shape(), &[4, 2, 3]);
        assert_eq!(r.shape(), &[3, 3]);
        let back = contract(&q, &r, &[(2, 0)]).unwrap(); // (4, 2, 3)
        let expect = t.permute(&[2, 0, 1]).unwrap();
        assert!(rel_err(&back, &expect) < 1e-12);
    }

    #[test]
    fn split_requires_proper_subset() {
        let t = random(vec![2, 3], 10);
        assert!(qr_split(&t, &[]).is_err());
        assert!(qr_split(&t, &[0, 1]).is_err());
        assert!(svd_split(&t, &[0], 0).is_err());
    }

    #[test]
    fn svd_truncates_diagonal() {
        let t = Tensor::new(
            vec![3, 3],
            vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let s = svd_split(&t, &[0], 2).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((s.singular_values[1] - 2.0).abs() < 1e-12);
        assert_eq!(s.singular_values.len(), 2);
        assert!((s.discarded_weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_of_rank_one() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, 0.1, -0.7];
        let t = Tensor::from_fn(vec![4, 3], |i| u[i[0]] * v[i[1]]);
        let s = svd_split(&t, &[0], 5).unwrap();
        assert_eq!(s.singular_values.len(), 3);
        assert!(s.singular_values[0] > 1.0);
        assert!(s.singular_values[1..].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn svd_full_rank_reconstructs() {
        let t = random(vec![8, 8], 11);
        let s = svd_split(&t, &[0], 8).unwrap();
        let back = contract(&s.u_s(), &s.vt, &[(1, 0)]).unwrap();
        assert!(rel_err(&back, &t) < 1e-10);
        assert!(column_orthonormality_residual(s.u.data(), 8, 8) < 1e-12);
        assert!(row_orthonormality_residual(s.vt.data(), 8, 8) < 1e-12);
        assert!(s.discarded_weight < 1e-20);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_wide_matrix() {
        let t = random(vec![2, 3, 5], 12);
        let s = svd_split(&t, &[0], 10).unwrap();
        assert_eq!(s.u.shape(), &[2, 2]);
        assert_eq!(s.vt.shape(), &[2, 3, 5]);
        let back = contract(&s.u, &s.s_vt(), &[(1, 0)]).unwrap();
        assert!(rel_err(&back, &t) < 1e-12);
    }

    #[test]
    fn norms() {
        assert_eq!(frobenius_norm(&Tensor::zeros(vec![3, 2])), 0.0);
        assert_eq!(
            frobenius_norm(&Tensor::new(vec![3], vec![0.0, 1.0, 0.0]).unwrap()),
            1.0
        );
        assert_eq!(
            frobenius_norm(&Tensor::new(vec![2], vec![3.0, 4.0]).unwrap()),
            5.0
        );
    }

    fn arb_shape() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..6, 2..5)
            .prop_filter("size", |s| s.iter().product::<usize>() <= 10_000)
    }

    proptest! {
        #[test]
        fn contraction_is_bilinear(seed in any::<u64>(), alpha in -3.0f64..3.0) {
            let a = random(vec![3, 5], seed);
            let b = random(vec![5, 2], seed ^ 1);
            let lhs = contract(&a.scaled(alpha), &b, &[(1, 0)]).unwrap();
            let rhs = contract(&a, &b, &[(1, 0)]).unwrap().scaled(alpha);
            let mut d = lhs.clone();
            d.axpy(-1.0, &rhs).unwrap();
            prop_assert!(d.max_abs() <= 1e-12 * (1.0 + rhs.max_abs()));
        }

        #[test]
        fn qr_reconstructs_random(shape in arb_shape(), seed in any::<u64>(), cut in 1usize..4) {
            let t = random(shape.clone(), seed);
            let cut = cut.min(shape.len() - 1);
            let left: Vec<usize> = (0..cut).collect();
            let (q, r) = qr_split(&t, &left).unwrap();
            let back = contract(&q, &r, &[(cut, 0)]).unwrap();
            prop_assert!(rel_err(&back, &t) < 1e-12);
            prop_assert!(q.data().iter().chain(r.data()).all(|x| x.is_finite()));
        }

        #[test]
        fn svd_full_rank_reconstructs_random(shape in arb_shape(), seed in any::<u64>()) {
            let t = random(shape.clone(), seed);
            let s = svd_split(&t, &[0], usize::MAX).unwrap();
            let back = contract(&s.u_s(), &s.vt, &[(1, 0)]).unwrap();
            prop_assert!(rel_err(&back, &t) < 1e-10);
        }
    }
}

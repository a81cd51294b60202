//! Pixel-wise feature map into the many-body product space.
//!
//! An image of `L` pixels becomes `L` local unit vectors; the `d^L`-dimensional
//! tensor product of those vectors is never formed. Overlaps between two such
//! states factorize into a product of local dot products.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Tolerance on the unit norm of every local vector.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Maps one pixel in `[0, 1]` to `[cos(πx/2), sin(πx/2)]`.
pub fn map_pixel(x: f64) -> Result<[f64; 2]> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("pixel value {x} outside [0, 1]")));
    }
    let (s, c) = (FRAC_PI_2 * x).sin_cos();
    Ok([c, s])
}

/// `L` local unit vectors of dimension `d`, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductState {
    local_dim: usize,
    data: Vec<f64>,
}

impl ProductState {
    /// Builds a state from explicit local vectors of a common dimension,
    /// checking each has unit norm.
    pub fn from_local_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        let d = vectors
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::arg("product state needs at least one site"))?;
        if d == 0 {
            return Err(Error::arg("local dimension must be positive"));
        }
        let mut data = Vec::with_capacity(d * vectors.len());
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != d {
                return Err(Error::dim(format!(
                    "site {i} has dimension {} instead of {d}",
                    v.len()
                )));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Domain(format!("site {i} has norm {norm}")));
            }
            data.extend_from_slice(v);
        }
        Ok(ProductState { local_dim: d, data })
    }

    /// Number of sites `L`.
    pub fn len(&self) -> usize {
        self.data.len() / self.local_dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.data[i * self.local_dim..(i + 1) * self.local_dim]
    }

    pub fn sites(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.local_dim)
    }

    pub(crate) fn check_geometry(&self, sites: usize, local_dim: usize) -> Result<()> {
        if self.len() != sites || self.local_dim != local_dim {
            return Err(Error::dim(format!(
                "product state has {} sites of dimension {}, expected {sites} of dimension {local_dim}",
                self.len(),
                self.local_dim
            )));
        }
        Ok(())
    }
}

/// Which local map turns pixels into local vectors.
///
/// Only the two-component trigonometric map is defined; higher local
/// dimensions can be supplied directly through
/// [`ProductState::from_local_vectors`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureMap {
    #[default]
    Trigonometric,
}

impl FeatureMap {
    pub fn local_dim(self) -> usize {
        match self {
            FeatureMap::Trigonometric => 2,
        }
    }

    pub fn map_image(self, pixels: &[f64]) -> Result<ProductState> {
        match self {
            FeatureMap::Trigonometric => map_image(pixels),
        }
    }
}

/// Applies [`map_pixel`] to every pixel.
pub fn map_image(pixels: &[f64]) -> Result<ProductState> {
    if pixels.is_empty() {
        return Err(Error::arg("image has no pixels"));
    }
    let mut data = Vec::with_capacity(2 * pixels.len());
    for &x in pixels {
        data.extend_from_slice(&map_pixel(x)?);
    }
    Ok(ProductState { local_dim: 2, data })
}

/// Maps a batch of images, failing on the first invalid pixel.
pub fn map_images<'a>(images: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<ProductState>> {
    images.into_iter().map(map_image).collect()
}

/// `uᵀv = Π_i u_i · v_i`, computed site by site.
pub fn product_overlap(u: &ProductState, v: &ProductState) -> Result<f64> {
    v.check_geometry(u.len(), u.local_dim)?;
    Ok(u.sites().zip(v.sites()).map(|(a, b)| dot(a, b)).product())
}

/// `(sign, ln|uᵀv|)`, safe against underflow for long chains. A zero overlap
/// returns `(0.0, -inf)`.
pub fn log_product_overlap(u: &ProductState, v: &ProductState) -> Result<(f64, f64)> {
    v.check_geometry(u.len(), u.local_dim)?;
    let mut sign = 1.0;
    let mut log = 0.0;
    for (a, b) in u.sites().zip(v.sites()) {
        let x = dot(a, b);
        if x == 0.0 {
            return Ok((0.0, f64::NEG_INFINITY));
        }
        sign *= x.signum();
        log += x.abs().ln();
    }
    Ok((sign, log))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pixel_endpoints() {
        assert_eq!(map_pixel(0.0).unwrap(), [1.0, 0.0]);
        let one = map_pixel(1.0).unwrap();
        assert!(one[0].abs() < 1e-16 && one[1] == 1.0);
        let half = map_pixel(0.5).unwrap();
        assert!((half[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 2e-16);
        assert!((half[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 2e-16);
    }

    #[test]
    fn pixel_out_of_range() {
        assert!(matches!(map_pixel(-0.01), Err(Error::Domain(_))));
        assert!(matches!(map_pixel(1.5), Err(Error::Domain(_))));
        assert!(map_pixel(f64::NAN).is_err());
        assert!(map_image(&[0.2, 2.0]).is_err());
    }

    #[test]
    fn constant_images() {
        let zeros = map_image(&[0.0; 5]).unwrap();
        assert!(zeros.sites().all(|s| s == [1.0, 0.0]));
        let ones = map_image(&[1.0; 5]).unwrap();
        assert!(ones.sites().all(|s| s[0].abs() < 1e-16 && s[1] == 1.0));
        assert!(product_overlap(&zeros, &ones).unwrap().abs() < 1e-60);
    }

    #[test]
    fn local_vectors_unit_norm() {
        let v = map_image(&[0.13, 0.5, 0.77, 0.999]).unwrap();
        for s in v.sites() {
            assert!((dot(s, s).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn self_overlap_is_one() {
        let v = map_image(&[0.1, 0.9, 0.4]).unwrap();
        assert!((product_overlap(&v, &v).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_pixel_overlap() {
        // Expected value from the explicit 4-component Kronecker vectors.
        let u = map_image(&[0.2, 0.7]).unwrap();
        let v = map_image(&[0.4, 0.1]).unwrap();
        let got = product_overlap(&u, &v).unwrap();
        assert!((got - 0.5590169943749476).abs() < 1e-15);
    }

    #[test]
    fn geometry_mismatch() {
        let u = map_image(&[0.2, 0.7]).unwrap();
        let v = map_image(&[0.2]).unwrap();
        assert!(matches!(product_overlap(&u, &v), Err(Error::Dimension(_))));
    }

    #[test]
    fn explicit_local_vectors() {
        let s = 1.0 / 3f64.sqrt();
        let ps = ProductState::from_local_vectors(&[vec![s, s, s], vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(ps.local_dim(), 3);
        assert_eq!(ps.len(), 2);
        assert!(ProductState::from_local_vectors(&[vec![1.0, 1.0]]).is_err());
        assert!(ProductState::from_local_vectors(&[vec![1.0, 0.0], vec![1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn overlap_matches_cosine_identity(pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..40)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let u = map_image(&x).unwrap();
            let v = map_image(&y).unwrap();
            let want: f64 = x.iter().zip(&y).map(|(a, b)| (FRAC_PI_2 * (a - b)).cos()).product();
            let got = product_overlap(&u, &v).unwrap();
            prop_assert!((got - want).abs() < 1e-12);
            prop_assert!(got.abs() <= 1.0 + 1e-12);
            let (sign, log) = log_product_overlap(&u, &v).unwrap();
            if got != 0.0 {
                prop_assert!((sign * log.exp() - got).abs() <= 1e-12 * got.abs().max(1e-300));
            }
        }
    }
}

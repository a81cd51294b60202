//! Labelled grayscale image sets: IDX ingestion, average-pool downsampling,
//! seeded per-class subsampling and class partitioning.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feature::{map_image, ProductState};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Where a dataset came from and what was done to it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub images_path: Option<PathBuf>,
    pub labels_path: Option<PathBuf>,
    /// Number of samples in the source files.
    pub source_count: usize,
    /// Cumulative pooling factor applied to the source geometry.
    pub downsample: usize,
    /// `(per_class, seed)` of the last subsampling step.
    pub subsample: Option<(usize, u64)>,
}

impl Provenance {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("-".into(), |p| p.display().to_string());
        let mut kv = vec![
            ("images".to_string(), path(&self.images_path)),
            ("labels".to_string(), path(&self.labels_path)),
            ("source_count".to_string(), self.source_count.to_string()),
            ("downsample".to_string(), self.downsample.to_string()),
        ];
        match self.subsample {
            Some((n, seed)) => {
                kv.push(("per_class".into(), n.to_string()));
                kv.push(("subsample_seed".into(), seed.to_string()));
            }
            None => kv.push(("per_class".into(), "all".into())),
        }
        kv
    }
}

/// Images with pixels in `[0, 1]` and class labels in `[0, K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Vec<Vec<f64>>,
    labels: Vec<usize>,
    height: usize,
    width: usize,
    num_classes: usize,
    pub provenance: Provenance,
}

impl Dataset {
    /// Validates and wraps in-memory data. `num_classes` of `None` infers
    /// `K = max label + 1`.
    pub fn new(
        images: Vec<Vec<f64>>,
        labels: Vec<usize>,
        height: usize,
        width: usize,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::arg("image geometry must be nonzero"));
        }
        let pixels = height * width;
        for (i, img) in images.iter().enumerate() {
            if img.len() != pixels {
                return Err(Error::dim(format!(
                    "image {i} has {} pixels, expected {pixels}",
                    img.len()
                )));
            }
            if let Some(x) = img.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::Domain(format!(
                    "image {i} has pixel {x} outside [0, 1]"
                )));
            }
        }
        let inferred = labels.iter().max().map_or(0, |&m| m + 1);
        let num_classes = match num_classes {
            Some(k) if k < inferred => {
                return Err(Error::arg(format!(
                    "label {} exceeds class count {k}",
                    inferred - 1
                )))
            }
            Some(k) => k,
            None => inferred,
        };
        let source_count = labels.len();
        Ok(Dataset {
            images,
            labels,
            height,
            width,
            num_classes,
            provenance: Provenance {
                source_count,
                downsample: 1,
                ..Provenance::default()
            },
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Pixels per image, `L = height × width`.
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Feature-maps every image.
    pub fn product_states(&self) -> Result<Vec<ProductState>> {
        self.images.iter().map(|img| map_image(img)).collect()
    }

    fn derive(
        &self,
        images: Vec<Vec<f64>>,
        labels: Vec<usize>,
        height: usize,
        width: usize,
    ) -> Self {
        Dataset {
            images,
            labels,
            height,
            width,
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
        }
    }

    /// Non-overlapping `factor × factor` average pooling.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor)
        {
            return Err(Error::arg(format!(
                "downsample factor {factor} does not divide {}x{}",
                self.height, self.width
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let norm = 1.0 / (factor * factor) as f64;
        let images = self
            .images
            .iter()
            .map(|img| {
                let mut out = vec![0.0; h * w];
                for (r, row) in img.chunks_exact(self.width).enumerate() {
                    let base = (r / factor) * w;
                    for (c, &x) in row.iter().enumerate() {
                        out[base + c / factor] += x;
                    }
                }
                // Rounding can push an all-white block a hair above 1.
                out.iter_mut().for_each(|x| *x = (*x * norm).min(1.0));
                out
            })
            .collect();
        let mut d = self.derive(images, self.labels.clone(), h, w);
        d.provenance.downsample *= factor;
        Ok(d)
    }

    /// Keeps at most `per_class` samples of every class, chosen by a seeded
    /// shuffle of that class's indices. Retained samples keep their original
    /// relative order.
    pub fn subsample(&self, per_class: usize, seed: u64) -> Self {
        self.subsample_split(per_class, seed).0
    }

    /// Like [`Dataset::subsample`], also returning the samples left out.
    pub fn subsample_split(&self, per_class: usize, seed: u64) -> (Self, Self) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = vec![false; self.len()];
        for members in self.class_indices() {
            let mut members = members;
            if members.len() > per_class {
                members.shuffle(&mut rng);
                members.truncate(per_class);
            }
            for i in members {
                keep[i] = true;
            }
        }
        let part = |want: bool| -> Self {
            let (images, labels) = keep
                .iter()
                .enumerate()
                .filter(|(_, &k)| k == want)
                .map(|(i, _)| (self.images[i].clone(), self.labels[i]))
                .unzip();
            let mut d = self.derive(images, labels, self.height, self.width);
            d.provenance.subsample = Some((per_class, seed));
            d
        };
        (part(true), part(false))
    }

    /// Indices of the samples of every class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Partitions by label into `K` datasets (some possibly empty).
    pub fn split_by_class(&self) -> Vec<Dataset> {
        self.class_indices()
            .into_iter()
            .map(|idx| {
                let images = idx.iter().map(|&i| self.images[i].clone()).collect();
                let labels = idx.iter().map(|&i| self.labels[i]).collect();
                self.derive(images, labels, self.height, self.width)
            })
            .collect()
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        self.derive(
            self.images[..n].to_vec(),
            self.labels[..n].to_vec(),
            self.height,
            self.width,
        )
    }
}

/// Reads a file, transparently inflating gzip.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| truncated("header"))
}

fn truncated(what: &str) -> Error {
    Error::Io(std::io::Error::new(
        std::io::ErrorKind::UnexpectedEof,
        format!("IDX file truncated in {what}"),
    ))
}

/// Raw IDX image payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(format!(
            "image file magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let len = n * rows * cols;
    let pixels = bytes
        .get(16..16 + len)
        .ok_or_else(|| truncated("image data"))?;
    Ok(IdxImages {
        rows,
        cols,
        pixels: pixels.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(format!(
            "label file magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4)? as usize;
    bytes
        .get(8..8 + n)
        .map(<[u8]>::to_vec)
        .ok_or_else(|| truncated("label data"))
}

/// Loads an IDX image/label pair (optionally gzipped) and scales bytes by 1/255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let imgs = parse_idx_images(&read_maybe_gz(ip)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(lp)?)?;
    if imgs.count() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} images in {} but {} labels in {}",
            imgs.count(),
            ip.display(),
            labels.len(),
            lp.display()
        )));
    }
    let px = imgs.rows * imgs.cols;
    let images = imgs
        .pixels
        .chunks_exact(px.max(1))
        .map(|c| c.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    let labels = labels.into_iter().map(usize::from).collect();
    let mut d = Dataset::new(images, labels, imgs.rows, imgs.cols, None)?;
    d.provenance.images_path = Some(ip.to_path_buf());
    d.provenance.labels_path = Some(lp.to_path_buf());
    Ok(d)
}

/// Serializes images (as raw bytes) and labels in uncompressed IDX format.
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    images: &[Vec<u8>],
    labels: &[u8],
) -> Result<()> {
    if images.len() != labels.len() {
        return Err(Error::Consistency("image and label counts differ".into()));
    }
    let mut f = fs::File::create(images_path)?;
    f.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    for n in [images.len(), rows, cols] {
        f.write_all(&(n as u32).to_be_bytes())?;
    }
    for img in images {
        if img.len() != rows * cols {
            return Err(Error::dim("image size does not match rows × cols"));
        }
        f.write_all(img)?;
    }
    let mut f = fs::File::create(labels_path)?;
    f.write_all(&LABEL_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn toy(labels: Vec<usize>) -> Dataset {
        let images = labels
            .iter()
            .enumerate()
            .map(|(i, _)| vec![(i % 5) as f64 / 4.0; 4])
            .collect();
        Dataset::new(images, labels, 2, 2, None).unwrap()
    }

    #[test]
    fn loads_minimal_file() {
        let dir = tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ip, &lp, 2, 2, &[vec![0, 255, 0, 255]], &[9]).unwrap();
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.image(0), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(d.labels(), &[9]);
        assert_eq!(d.num_classes(), 10);
        assert_eq!((d.height(), d.width()), (2, 2));
    }

    #[test]
    fn loads_gzipped_file() {
        use flate2::write::GzEncoder;
        let dir = tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ip, &lp, 1, 3, &[vec![0, 51, 255]], &[1]).unwrap();
        let gz = dir.path().join("i.gz");
        let mut enc = GzEncoder::new(fs::File::create(&gz).unwrap(), Default::default());
        enc.write_all(&fs::read(&ip).unwrap()).unwrap();
        enc.finish().unwrap();
        let d = load_idx(&gz, &lp).unwrap();
        assert_eq!(d.image(0), &[0.0, 0.2, 1.0]);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ip, &lp, 1, 1, &[vec![1]], &[0]).unwrap();
        assert!(matches!(load_idx(&lp, &lp), Err(Error::Format(_))));
        assert!(matches!(load_idx(&ip, &ip), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_count_mismatch() {
        let dir = tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        let (ip2, lp2) = (dir.path().join("i2"), dir.path().join("l2"));
        write_idx(&ip, &lp, 1, 1, &[vec![1]], &[0]).unwrap();
        write_idx(&ip2, &lp2, 1, 1, &[vec![1], vec![2]], &[0, 1]).unwrap();
        assert!(matches!(load_idx(&ip, &lp2), Err(Error::Consistency(_))));
    }

    #[test]
    fn rejects_truncation() {
        let dir = tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ip, &lp, 2, 2, &[vec![1, 2, 3, 4]], &[0]).unwrap();
        let bytes = fs::read(&ip).unwrap();
        fs::write(&ip, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Io(_))));
        fs::write(&ip, &bytes[..6]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Io(_))));
    }

    #[test]
    fn downsample_identity_and_mean() {
        let d = Dataset::new(vec![vec![0.0, 1.0, 0.0, 1.0]], vec![0], 2, 2, None).unwrap();
        assert_eq!(d.downsample(1).unwrap(), d);
        let p = d.downsample(2).unwrap();
        assert_eq!(p.image(0), &[0.5]);
        assert_eq!((p.height(), p.width()), (1, 1));
        assert_eq!(p.provenance.downsample, 2);
        assert!(matches!(d.downsample(3), Err(Error::Argument(_))));
    }

    #[test]
    fn downsample_matches_loop_oracle() {
        let img: Vec<f64> = (0..36).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        let d = Dataset::new(vec![img.clone()], vec![0], 6, 6, None).unwrap();
        let p = d.downsample(3).unwrap();
        for br in 0..2 {
            for bc in 0..2 {
                let mut s = 0.0;
                for r in 0..3 {
                    for c in 0..3 {
                        s += img[(3 * br + r) * 6 + 3 * bc + c];
                    }
                }
                assert!((p.image(0)[br * 2 + bc] - s / 9.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn downsample_composes_on_constant_images() {
        let d = Dataset::new(vec![vec![0.3; 64]], vec![0], 8, 8, None).unwrap();
        let twice = d.downsample(2).unwrap().downsample(2).unwrap();
        let once = d.downsample(4).unwrap();
        for (a, b) in twice.image(0).iter().zip(once.image(0)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn subsample_is_deterministic_and_ordered() {
        let d = toy(vec![0, 1, 0, 0, 1, 2, 0, 1]);
        let a = d.subsample(2, 42);
        let b = d.subsample(2, 42);
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![2, 2, 1]);
        // Unchanged when the class is small enough.
        assert_eq!(d.subsample(10, 1).images(), d.images());
        assert_eq!(a.provenance.subsample, Some((2, 42)));
    }

    #[test]
    fn split_by_class_partitions() {
        let d = toy(vec![0, 1, 0]);
        let parts = d.split_by_class();
        assert_eq!(
            parts.iter().map(Dataset::len).collect::<Vec<_>>(),
            vec![2, 1]
        );
        let d = toy(vec![0, 2, 0]);
        let parts = d.split_by_class();
        assert_eq!(
            parts.iter().map(Dataset::len).collect::<Vec<_>>(),
            vec![2, 0, 1]
        );
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(Dataset::new(vec![vec![1.2]], vec![0], 1, 1, None).is_err());
        assert!(Dataset::new(vec![vec![0.2]], vec![0, 1], 1, 1, None).is_err());
    }
}

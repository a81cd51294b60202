//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "GTNCMPS\0"
//! version      u32
//! kind         u32      0 = plain MPS, 1 = MPS with a label index
//! L, d         u64, u64
//! center       i64      -1 when the state carries no canonical center
//! label_site   u64      } kind 1 only
//! classes      u64      }
//! bonds        (L + 1) × u64
//! per site     rank u32, rank × u64 extents, row-major f64 data
//! checksum     u32      CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::discriminative::LabeledMps;
use crate::error::{Error, Result};
use crate::mps::Mps;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 8] = *b"GTNCMPS\0";
pub const FORMAT_VERSION: u32 = 1;

const KIND_PLAIN: u32 = 0;
const KIND_LABELED: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Container {
    Plain(Mps),
    Labeled(LabeledMps),
}

impl Container {
    pub fn plain(m: Mps) -> Self {
        Container::Plain(m)
    }
}

/// `(model_class<k>.mps, model_class<k>.manifest)` inside `dir`.
pub fn model_paths(dir: impl AsRef<Path>, class: usize) -> (PathBuf, PathBuf) {
    let dir = dir.as_ref();
    (
        dir.join(format!("model_class{class}.mps")),
        dir.join(format!("model_class{class}.manifest")),
    )
}

pub fn save_container(path: impl AsRef<Path>, c: &Container) -> Result<()> {
    fs::write(path, encode(c))?;
    Ok(())
}

pub fn load_container(path: impl AsRef<Path>) -> Result<Container> {
    decode(&fs::read(path)?)
}

pub(crate) fn encode(c: &Container) -> Vec<u8> {
    let (kind, sites, center, label) = match c {
        Container::Plain(m) => (KIND_PLAIN, m.sites(), m.center(), None),
        Container::Labeled(m) => (
            KIND_LABELED,
            m.sites(),
            m.center(),
            Some((m.label_site(), m.num_classes())),
        ),
    };
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&(sites.len() as u64).to_le_bytes());
    out.extend_from_slice(&(sites[0].shape()[1] as u64).to_le_bytes());
    out.extend_from_slice(&center.map_or(-1i64, |c| c as i64).to_le_bytes());
    if let Some((site, classes)) = label {
        out.extend_from_slice(&(site as u64).to_le_bytes());
        out.extend_from_slice(&(classes as u64).to_le_bytes());
    }
    out.extend_from_slice(&1u64.to_le_bytes());
    for t in sites {
        out.extend_from_slice(&(*t.shape().last().unwrap() as u64).to_le_bytes());
    }
    for t in sites {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &n in t.shape() {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "model file truncated",
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::format("size field overflows"))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Container> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::format("not a model file (bad magic)"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported model format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let kind = r.u32()?;
    let len = r.usize()?;
    let local_dim = r.usize()?;
    let center = match i64::from_le_bytes(r.take(8)?.try_into().unwrap()) {
        -1 => None,
        c if c >= 0 && (c as usize) < len => Some(c as usize),
        c => return Err(Error::format(format!("center {c} out of range"))),
    };
    let label = match kind {
        KIND_PLAIN => None,
        KIND_LABELED => Some((r.usize()?, r.usize()?)),
        k => return Err(Error::format(format!("unknown model kind {k}"))),
    };
    // Cheap sanity bound before allocating from untrusted sizes.
    if len > bytes.len() {
        return Err(Error::format(format!("implausible site count {len}")));
    }
    let bonds = (0..=len).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let mut sites = Vec::with_capacity(len);
    for l in 0..len {
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::format(format!("site {l} has rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &x| acc.checked_mul(x))
            .filter(|&n| n <= bytes.len() / 8)
            .ok_or_else(|| Error::format(format!("site {l} has implausible shape {shape:?}")))?;
        let raw = r.take(8 * n)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if shape.first() != Some(&bonds[l]) || shape.last() != Some(&bonds[l + 1]) {
            return Err(Error::format(format!(
                "site {l} shape {shape:?} disagrees with bond list"
            )));
        }
        if shape.get(1) != Some(&local_dim) {
            return Err(Error::format(format!(
                "site {l} has wrong physical dimension"
            )));
        }
        sites.push(Tensor::new(shape, data)?);
    }
    let body_end = r.pos;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes after checksum"));
    }
    if crc32fast::hash(&bytes[..body_end]) != stored {
        return Err(Error::format("checksum mismatch"));
    }
    match label {
        None => {
            let mut m = Mps::from_sites(sites)?;
            m.center = center;
            Ok(Container::Plain(m))
        }
        Some((label_site, classes)) => Ok(Container::Labeled(LabeledMps::from_parts(
            sites, label_site, classes, center,
        )?)),
    }
}

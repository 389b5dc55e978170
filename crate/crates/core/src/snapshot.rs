//! Binary model snapshots.
//!
//! Layout (all little-endian):
//!
//! | field            | type            |
//! |------------------|-----------------|
//! | magic `PPSDFMDL` | 8 bytes         |
//! | version (= 1)    | u32             |
//! | K, S, D          | u32 × 3         |
//! | domain lo, hi    | f64 × 2 per axis|
//! | frame scale      | f64             |
//! | frame offset     | f64 × D         |
//! | N_w              | u64             |
//! | weights          | f64 × N_w       |
//! | covariance       | f64 × N_w², column-major |
//!
//! The frame is the raw-to-model [`DomainTransform`]. Round trips are
//! bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisConfig, Interval};
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::ingest::{with_suffix, DomainTransform};

pub const MAGIC: &[u8; 8] = b"PPSDFMDL";
pub const VERSION: u32 = 1;

/// A model with the coordinate frame it was trained in.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub model: FieldModel,
    pub frame: DomainTransform,
}

impl Snapshot {
    pub fn new(model: FieldModel, frame: DomainTransform) -> Result<Self> {
        if frame.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), actual: frame.dim() });
        }
        Ok(Self { model, frame })
    }

    pub fn encode(&self) -> Vec<u8> {
        let cfg = self.model.config();
        let n = self.model.param_count();
        let mut out = Vec::with_capacity(64 + 8 * (n + n * n));
        out.extend_from_slice(MAGIC);
        for v in [VERSION, cfg.degree() as u32, cfg.segments() as u32, cfg.dim() as u32] {
            out.extend(v.to_le_bytes());
        }
        for iv in cfg.domain() {
            out.extend(iv.lo.to_le_bytes());
            out.extend(iv.hi.to_le_bytes());
        }
        out.extend(self.frame.scale().to_le_bytes());
        for o in self.frame.offset() {
            out.extend(o.to_le_bytes());
        }
        out.extend((n as u64).to_le_bytes());
        for w in self.model.weights().iter() {
            out.extend(w.to_le_bytes());
        }
        for c in self.model.covariance().as_slice() {
            out.extend(c.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::UnsupportedFormat("not a model snapshot (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedFormat(format!("snapshot version {version} (expected {VERSION})")));
        }
        let (k, s, d) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        if d == 0 || d > 3 {
            return Err(Error::UnsupportedFormat(format!("snapshot dimension {d}")));
        }
        let domain = (0..d).map(|_| Interval::new(r.f64()?, r.f64()?)).collect::<Result<Vec<_>>>()?;
        let config = BasisConfig::new(k, s, domain)?;
        let scale = r.f64()?;
        let offset = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let frame = DomainTransform::new(scale, offset)?;
        let n = r.u64()? as usize;
        if n != config.param_count() {
            return Err(Error::UnsupportedFormat(format!(
                "snapshot stores {n} weights but the basis has {}",
                config.param_count()
            )));
        }
        let expected = r.pos + 8 * (n + n * n);
        if bytes.len() != expected {
            return Err(Error::UnsupportedFormat(format!(
                "snapshot has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let weights = DVector::from_iterator(n, (0..n).map(|_| r.f64().expect("length checked")));
        let cov = DMatrix::from_iterator(n, n, (0..n * n).map(|_| r.f64().expect("length checked")));
        let model = FieldModel::new(config, weights, cov)?;
        Self::new(model, frame)
    }

    /// Writes through a temporary sibling file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::UnsupportedFormat("truncated snapshot".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`. The temporary is removed on failure.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = with_suffix(path, ".tmp");
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

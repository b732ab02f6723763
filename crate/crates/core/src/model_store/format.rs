//! Little-endian binary formats for weight bundles and TT checkpoints.
//!
//! Bundle (`PTWT`):
//!
//! ```text
//! magic "PTWT" | version u32 = 1 | tensor count u32
//! per tensor: name len u32 | UTF-8 name | dtype u8 (0 = f32, 1 = f64)
//!             | mode count u32 | extents u64 × d | row-major data
//! descriptor len u32 | UTF-8 JSON descriptor
//! ```
//!
//! Checkpoint (`PTTT`):
//!
//! ```text
//! magic "PTTT" | version u32 = 1 | epsilon_used f64 | d u32
//! | mode sizes u64 × d | ranks u64 × (d + 1) | original rows u64 | original cols u64
//! | cores in order, f64 row-major
//! ```
//!
//! Readers consume the whole input before building anything, so a failed
//! read never yields a partial value. Missing or trailing bytes are
//! reported as [`Error::CorruptLength`].

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{BundleDescriptor, ModelBundle};
use crate::error::{Error, Result};
use crate::shaping::ShapePlan;
use crate::tensor_core::DenseTensor;
use crate::tt::TtCores;

pub const BUNDLE_MAGIC: [u8; 4] = *b"PTWT";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PTTT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::CorruptLength(format!(
                    "{what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?)
            .map_err(|_| Error::Malformed(format!("{what} does not fit in usize")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(checked_bytes(n, 8, what)?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(checked_bytes(n, 4, what)?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect())
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found = self.array::<4>("magic")?;
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CorruptLength(format!(
                "{} trailing bytes after offset {}",
                self.buf.len() - self.pos,
                self.pos
            )));
        }
        Ok(())
    }
}

fn checked_bytes(n: usize, width: usize, what: &str) -> Result<usize> {
    n.checked_mul(width)
        .ok_or_else(|| Error::CorruptLength(format!("{what}: element count {n} overflows")))
}

fn volume(extents: &[usize], what: &str) -> Result<usize> {
    extents
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::CorruptLength(format!("{what}: volume of {extents:?} overflows")))
}

fn len_u32(n: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(n)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::BadDimensions(format!("{what} length {n} exceeds u32")))
}

/// Serializes with every tensor stored as `dtype`.
pub fn write_bundle(bundle: &ModelBundle, dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&BUNDLE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&len_u32(bundle.len(), "tensor count")?);
    for (name, tensor) in bundle.iter() {
        out.extend_from_slice(&len_u32(name.len(), "name")?);
        out.extend_from_slice(name.as_bytes());
        out.push(dtype as u8);
        out.extend_from_slice(&len_u32(tensor.ndim(), "mode count")?);
        for &n in tensor.shape() {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        out.reserve(tensor.len() * dtype.width());
        match dtype {
            Dtype::F64 => tensor
                .data()
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Dtype::F32 => tensor
                .data()
                .iter()
                .for_each(|&x| out.extend_from_slice(&(x as f32).to_le_bytes())),
        }
    }
    let json = serde_json::to_string(bundle.descriptor())
        .map_err(|e| Error::Malformed(format!("descriptor: {e}")))?;
    out.extend_from_slice(&len_u32(json.len(), "descriptor")?);
    out.extend_from_slice(json.as_bytes());
    Ok(out)
}

pub fn read_bundle(bytes: &[u8]) -> Result<ModelBundle> {
    let mut cur = Cursor::new(bytes);
    cur.magic(BUNDLE_MAGIC)?;
    let count = cur.u32("tensor count")? as usize;
    let mut tensors = Vec::new();
    for i in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|e| Error::Malformed(format!("tensor {i} name: {e}")))?
            .to_string();
        let dtype = match cur.u8("dtype")? {
            0 => Dtype::F32,
            1 => Dtype::F64,
            other => {
                return Err(Error::Malformed(format!(
                    "tensor {name:?}: dtype code {other}"
                )))
            }
        };
        let d = cur.u32("mode count")? as usize;
        // each extent is 8 bytes; reject counts the file cannot hold before allocating
        if d.saturating_mul(8) > bytes.len() - cur.pos {
            return Err(Error::CorruptLength(format!(
                "tensor {name:?}: {d} extents"
            )));
        }
        let shape = (0..d)
            .map(|_| cur.usize("extent"))
            .collect::<Result<Vec<_>>>()?;
        let n = volume(&shape, &name)?;
        let data = match dtype {
            Dtype::F64 => cur.f64s(n, &name)?,
            Dtype::F32 => cur.f32s(n, &name)?,
        };
        let tensor = DenseTensor::new(shape, data)
            .map_err(|e| Error::Malformed(format!("tensor {name:?}: {e}")))?;
        tensors.push((name, tensor));
    }
    let json_len = cur.u32("descriptor length")? as usize;
    let json = cur.take(json_len, "descriptor")?;
    cur.finish()?;
    let descriptor: BundleDescriptor =
        serde_json::from_slice(json).map_err(|e| Error::Malformed(format!("descriptor: {e}")))?;
    let mut bundle = ModelBundle::new(descriptor);
    for (name, tensor) in tensors {
        bundle.push(name, tensor)?;
    }
    bundle
        .validate()
        .map_err(|e| Error::Malformed(format!("descriptor does not match tensors: {e}")))?;
    Ok(bundle)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Saves as float64, which round-trips bit for bit.
pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    save_bundle_as(bundle, path, Dtype::F64)
}

pub fn save_bundle_as(bundle: &ModelBundle, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    write_file(path.as_ref(), &write_bundle(bundle, dtype)?)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    read_bundle(&read_file(path.as_ref())?)
}

pub fn write_tt_checkpoint(cores: &TtCores<f64>, plan: &ShapePlan) -> Result<Vec<u8>> {
    if cores.mode_sizes() != plan.tensor_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: plan.tensor_shape.clone(),
            found: cores.mode_sizes().to_vec(),
        });
    }
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&cores.epsilon_used().to_le_bytes());
    out.extend_from_slice(&len_u32(cores.ndim(), "core count")?);
    for &n in cores.mode_sizes() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &r in cores.ranks() {
        out.extend_from_slice(&(r as u64).to_le_bytes());
    }
    out.extend_from_slice(&(plan.original_rows as u64).to_le_bytes());
    out.extend_from_slice(&(plan.original_cols as u64).to_le_bytes());
    for core in cores.cores() {
        for x in core.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_tt_checkpoint(bytes: &[u8]) -> Result<(TtCores<f64>, ShapePlan)> {
    let mut cur = Cursor::new(bytes);
    cur.magic(CHECKPOINT_MAGIC)?;
    let epsilon = cur.f64("epsilon_used")?;
    let d = cur.u32("core count")? as usize;
    if d == 0 || d.saturating_mul(16) > bytes.len() {
        return Err(Error::CorruptLength(format!("{d} cores")));
    }
    let modes = (0..d)
        .map(|_| cur.usize("mode size"))
        .collect::<Result<Vec<_>>>()?;
    let ranks = (0..=d)
        .map(|_| cur.usize("rank"))
        .collect::<Result<Vec<_>>>()?;
    let rows = cur.usize("original rows")?;
    let cols = cur.usize("original cols")?;
    let mut cores = Vec::with_capacity(d);
    for j in 0..d {
        let shape = vec![ranks[j], modes[j], ranks[j + 1]];
        let n = volume(&shape, "core")?;
        let data = cur.f64s(n, "core data")?;
        cores.push(
            DenseTensor::new(shape, data)
                .map_err(|e| Error::Malformed(format!("core {j}: {e}")))?,
        );
    }
    cur.finish()?;
    let cores = TtCores::from_cores(cores, epsilon)?;
    let plan = ShapePlan::new(rows, cols, modes)?;
    Ok((cores, plan))
}

pub fn save_tt_checkpoint(
    cores: &TtCores<f64>,
    plan: &ShapePlan,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(path.as_ref(), &write_tt_checkpoint(cores, plan)?)
}

pub fn load_tt_checkpoint(path: impl AsRef<Path>) -> Result<(TtCores<f64>, ShapePlan)> {
    read_tt_checkpoint(&read_file(path.as_ref())?)
}

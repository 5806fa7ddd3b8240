//! Model checkpoint: magic bytes, version, dimension and shape tables, a
//! little-endian float32 parameter payload, and a trailing CRC32 over
//! everything after the magic.

use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use super::model::{ModelDims, SyncModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ADGC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("truncated checkpoint: {0}")]
    Truncated(&'static str),
    #[error("shape table does not match the declared dimensions")]
    ShapeMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn save_model(path: &Path, model: &SyncModel) -> Result<(), CheckpointError> {
    let dims = model.dims();
    let mut body = Vec::new();
    body.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [dims.embed_dim, dims.hidden_dim, dims.layers, dims.classes, dims.partitions] {
        body.extend_from_slice(&(v as u32).to_le_bytes());
    }
    body.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        body.extend_from_slice(&(p.nrows() as u32).to_le_bytes());
        body.extend_from_slice(&(p.ncols() as u32).to_le_bytes());
    }
    for p in model.params() {
        for v in p.iter() {
            body.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&body);
    let mut out = Vec::with_capacity(4 + body.len() + 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&body);
    out.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self, what: &'static str) -> Result<f32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn load_model(path: &Path) -> Result<SyncModel, CheckpointError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let body = &bytes[4..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::CrcMismatch { stored, computed });
    }

    let mut r = Reader { bytes: body, pos: 0 };
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let embed = r.u32("embed dim")? as usize;
    let hidden = r.u32("hidden dim")? as usize;
    let layers = r.u32("layer count")? as usize;
    let classes = r.u32("class count")? as usize;
    let partitions = r.u32("partition count")? as usize;
    let dims = ModelDims { embed_dim: embed, hidden_dim: hidden, layers, classes, partitions };

    let count = r.u32("parameter count")? as usize;
    let expected = SyncModel::expected_shapes(&dims);
    if count != expected.len() {
        return Err(CheckpointError::ShapeMismatch);
    }
    let mut shapes = Vec::with_capacity(count);
    for &(er, ec) in &expected {
        let rows = r.u32("shape rows")? as usize;
        let cols = r.u32("shape cols")? as usize;
        if rows != er || cols != ec {
            return Err(CheckpointError::ShapeMismatch);
        }
        shapes.push((rows, cols));
    }
    let mut params = Vec::with_capacity(count);
    for (rows, cols) in shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f32("payload")? as f64);
        }
        params.push(Array2::from_shape_vec((rows, cols), data).expect("shape matches data"));
    }
    Ok(SyncModel::from_params(dims, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trips_to_float32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.adgc");
        let model = SyncModel::init(ModelDims::with_widths(5, 8, 8), 77);
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.dims(), model.dims());
        for (a, b) in loaded.params().iter().zip(model.params()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }

    #[test]
    fn corrupted_payload_fails_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.adgc");
        let model = SyncModel::init(ModelDims::with_widths(3, 4, 4), 1);
        save_model(&path, &model).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_model(&path).unwrap_err(), CheckpointError::CrcMismatch { .. }));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.adgc");
        std::fs::write(&path, b"NOPE12345678").unwrap();
        assert!(matches!(load_model(&path).unwrap_err(), CheckpointError::BadMagic));
    }
}

//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! magic `MVKT` · version u32 · kind u8 (0 random-init, 1 pretrained,
//! 2 full model) · config hash u64 · parameter count u32 · per parameter:
//! name length u32 + UTF-8 name, ndim u32, dims u32 each, values f64.

use crate::error::CheckpointError;
use crate::gcl::InitKind;
use crate::params::ParamStore;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

type Result<T> = std::result::Result<T, CheckpointError>;

const MAGIC: &[u8; 4] = b"MVKT";
const VERSION: u32 = 1;

/// What a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    /// Fresh random initialization (the no-pretraining ablation arm).
    RandomInit,
    /// Pretrained encoder (plus projection head) for one omics.
    Pretrained,
    /// Full fine-tuned model.
    Model,
}

impl CheckpointKind {
    fn to_byte(self) -> u8 {
        match self {
            CheckpointKind::RandomInit => 0,
            CheckpointKind::Pretrained => 1,
            CheckpointKind::Model => 2,
        }
    }

    fn from_byte(b: u8, file: &str) -> Result<Self> {
        match b {
            0 => Ok(CheckpointKind::RandomInit),
            1 => Ok(CheckpointKind::Pretrained),
            2 => Ok(CheckpointKind::Model),
            _ => Err(CheckpointError::Corrupt {
                file: file.to_string(),
                reason: format!("unknown kind byte {b}"),
            }),
        }
    }
}

impl From<InitKind> for CheckpointKind {
    fn from(kind: InitKind) -> Self {
        match kind {
            InitKind::Random => CheckpointKind::RandomInit,
            InitKind::Pretrained => CheckpointKind::Pretrained,
        }
    }
}

#[derive(Debug)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub config_hash: u64,
    pub params: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, kind: CheckpointKind, config_hash: u64) -> Self {
        Self {
            kind,
            config_hash,
            params: store
                .entries()
                .map(|(_, e)| (e.name.clone(), e.shape.clone(), e.values.clone()))
                .collect(),
        }
    }

    pub fn find(&self, name: &str) -> Option<&(String, Vec<usize>, Vec<f64>)> {
        self.params.iter().find(|(n, _, _)| n == name)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = path.display().to_string();
    let io = |e: std::io::Error| CheckpointError::Io {
        file: file.clone(),
        source: e,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&[ckpt.kind.to_byte()]).map_err(io)?;
    w.write_all(&ckpt.config_hash.to_le_bytes()).map_err(io)?;
    w.write_all(&(ckpt.params.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, shape, values) in &ckpt.params {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(bytes).map_err(io)?;
        w.write_all(&(shape.len() as u32).to_le_bytes()).map_err(io)?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
        }
        for v in values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = path.display().to_string();
    let io = |e: std::io::Error| CheckpointError::Io {
        file: file.clone(),
        source: e,
    };
    let mut r = BufReader::new(File::open(path).map_err(io)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic { file });
    }
    let version = read_u32(&mut r, &file)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion { file, version });
    }
    let mut kind_byte = [0u8; 1];
    r.read_exact(&mut kind_byte).map_err(io)?;
    let kind = CheckpointKind::from_byte(kind_byte[0], &file)?;
    let mut hash_bytes = [0u8; 8];
    r.read_exact(&mut hash_bytes).map_err(io)?;
    let config_hash = u64::from_le_bytes(hash_bytes);

    let count = read_u32(&mut r, &file)? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r, &file)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(io)?;
        let name = String::from_utf8(name_bytes).map_err(|_| CheckpointError::Corrupt {
            file: file.clone(),
            reason: "parameter name is not UTF-8".to_string(),
        })?;
        let ndim = read_u32(&mut r, &file)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r, &file)? as usize);
        }
        let count: usize = shape.iter().product();
        let mut values = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf).map_err(|_| CheckpointError::Corrupt {
                file: file.clone(),
                reason: format!("truncated values for {name}"),
            })?;
            values.push(f64::from_le_bytes(buf));
        }
        params.push((name, shape, values));
    }
    Ok(Checkpoint {
        kind,
        config_hash,
        params,
    })
}

fn read_u32(r: &mut impl Read, file: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| CheckpointError::Io {
        file: file.to_string(),
        source: e,
    })?;
    Ok(u32::from_le_bytes(buf))
}

/// Loads checkpoint values into a store by name; every checkpoint entry must
/// exist in the store with the same shape.
pub fn restore_into(
    store: &mut ParamStore,
    ckpt: &Checkpoint,
) -> std::result::Result<(), crate::error::ModelError> {
    for (name, shape, values) in &ckpt.params {
        let id = store
            .find(name)
            .ok_or_else(|| crate::error::ModelError::CheckpointMissing(name.clone()))?;
        if &store.entry(id).shape != shape {
            return Err(crate::error::ModelError::CheckpointShape {
                name: name.clone(),
                expected: store.entry(id).shape.clone(),
                found: shape.clone(),
            });
        }
        store.set_values(id, values.clone());
    }
    Ok(())
}

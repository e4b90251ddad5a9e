//! Versioned binary container for parameters and trainer state.
//!
//! Layout (little-endian): magic `XFNF`, `u32` version, `u32` block count,
//! then per block: `u32` name length, UTF-8 name, `u8` dtype tag, `u32` rank,
//! `u64` per dim, `u64` payload byte length, payload.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::autodiff::{DType, DenseArray, Real};
use crate::error::{Error, Result};
use crate::fields::{ArchConfig, FieldModel, ParamBlock};

pub const MAGIC: &[u8; 4] = b"XFNF";
pub const FORMAT_VERSION: u32 = 1;

const TAG_F32: u8 = 0;
const TAG_F64: u8 = 1;
const TAG_JSON: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    Json(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub dims: Vec<usize>,
    pub payload: Payload,
}

/// Ordered named blocks; names are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    blocks: Vec<Block>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    fn insert(&mut self, block: Block) {
        match self.blocks.iter_mut().find(|b| b.name == block.name) {
            Some(slot) => *slot = block,
            None => self.blocks.push(block),
        }
    }

    pub fn put_array<T: Real>(&mut self, name: impl Into<String>, a: &DenseArray<T>) {
        let payload = match T::DTYPE {
            DType::F32 => Payload::F32(a.data().iter().map(|v| v.to_f64_lossy() as f32).collect()),
            DType::F64 => Payload::F64(a.to_f64_vec()),
        };
        self.insert(Block {
            name: name.into(),
            dims: a.shape().to_vec(),
            payload,
        });
    }

    pub fn array<T: Real>(&self, name: &str) -> Result<DenseArray<T>> {
        let b = self.block(name).ok_or_else(|| Error::MissingBlock(name.to_string()))?;
        let values: Vec<T> = match (&b.payload, T::DTYPE) {
            (Payload::F32(v), DType::F32) => v.iter().map(|&x| T::from_f64_lossy(x as f64)).collect(),
            (Payload::F64(v), DType::F64) => v.iter().map(|&x| T::from_f64_lossy(x)).collect(),
            (Payload::Json(_), _) => return Err(Error::Format(format!("block `{name}` holds JSON, not an array"))),
            (_, want) => {
                return Err(Error::Format(format!("block `{name}` dtype differs from requested {want:?}")));
            }
        };
        DenseArray::new(b.dims.clone(), values)
    }

    pub fn put_json<S: Serialize>(&mut self, name: impl Into<String>, value: &S) -> Result<()> {
        let bytes = serde_json::to_vec(value)?;
        self.insert(Block {
            name: name.into(),
            dims: vec![bytes.len()],
            payload: Payload::Json(bytes),
        });
        Ok(())
    }

    pub fn json<D: DeserializeOwned>(&self, name: &str) -> Result<D> {
        match self.block(name).map(|b| &b.payload) {
            Some(Payload::Json(bytes)) => Ok(serde_json::from_slice(bytes)?),
            Some(_) => Err(Error::Format(format!("block `{name}` is not JSON"))),
            None => Err(Error::MissingBlock(name.to_string())),
        }
    }

    /// Store every array of `params` as `<prefix>/<name>`.
    pub fn put_params<T: Real>(&mut self, prefix: &str, params: &ParamBlock<T>) {
        for (n, a) in params.iter() {
            self.put_array(format!("{prefix}/{n}"), a);
        }
    }

    /// Read the arrays named like `template`, checking each shape.
    pub fn params_like<T: Real>(&self, prefix: &str, template: &ParamBlock<T>) -> Result<ParamBlock<T>> {
        let mut out = ParamBlock::new();
        for (n, a) in template.iter() {
            let key = format!("{prefix}/{n}");
            let loaded = self.array::<T>(&key)?;
            if loaded.shape() != a.shape() {
                return Err(Error::BlockShape {
                    block: key,
                    expected: a.shape().to_vec(),
                    found: loaded.shape().to_vec(),
                });
            }
            out.push(n, loaded);
        }
        Ok(out)
    }

    /// Whether any block name starts with `<prefix>/`.
    pub fn has_prefix(&self, prefix: &str) -> bool {
        let p = format!("{prefix}/");
        self.blocks.iter().any(|b| b.name.starts_with(&p))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            let (tag, payload): (u8, Vec<u8>) = match &b.payload {
                Payload::F32(v) => (TAG_F32, v.iter().flat_map(|x| x.to_le_bytes()).collect()),
                Payload::F64(v) => (TAG_F64, v.iter().flat_map(|x| x.to_le_bytes()).collect()),
                Payload::Json(v) => (TAG_JSON, v.clone()),
            };
            out.push(tag);
            out.extend_from_slice(&(b.dims.len() as u32).to_le_bytes());
            for &d in &b.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(&MAGIC[..]) {
            return Err(Error::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("block name is not UTF-8".into()))?;
            let tag = r.take(1)?[0];
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = r.u64()? as usize;
            let raw = r.take(len)?;
            let n: usize = dims.iter().product();
            let payload = match tag {
                TAG_F32 | TAG_F64 => {
                    let width = if tag == TAG_F32 { 4 } else { 8 };
                    if raw.len() != n * width {
                        return Err(Error::SizeMismatch {
                            expected: (n * width) as u64,
                            actual: raw.len() as u64,
                        });
                    }
                    if tag == TAG_F32 {
                        Payload::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
                    } else {
                        Payload::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
                    }
                }
                TAG_JSON => Payload::Json(raw.to_vec()),
                other => return Err(Error::UnknownDtype(format!("tag {other}"))),
            };
            blocks.push(Block { name, dims, payload });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { blocks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
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
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelMeta {
    pub config: ArchConfig,
    pub in_dim: usize,
    pub out_dim: usize,
}

pub const MODEL_META: &str = "model";
pub const ENCODER: &str = "encoder";
pub const DECODER: &str = "decoder";

impl Checkpoint {
    pub fn put_model<T: Real>(&mut self, model: &FieldModel<T>) -> Result<()> {
        self.put_json(
            MODEL_META,
            &ModelMeta {
                config: model.config.clone(),
                in_dim: model.in_dim,
                out_dim: model.out_dim,
            },
        )?;
        self.put_params(ENCODER, &model.encoder);
        self.put_params(DECODER, &model.decoder);
        Ok(())
    }

    pub fn model<T: Real>(&self) -> Result<FieldModel<T>> {
        let meta: ModelMeta = self.json(MODEL_META)?;
        let mut model = FieldModel::<T>::init(meta.config, meta.in_dim, meta.out_dim, 0)?;
        model.encoder = self.params_like(ENCODER, &model.encoder)?;
        model.decoder = self.params_like(DECODER, &model.decoder)?;
        Ok(model)
    }

    /// Copy the stored encoder into `model`, which keeps its own decoder.
    pub fn load_encoder_into<T: Real>(&self, model: &mut FieldModel<T>) -> Result<()> {
        let enc = self.params_like(ENCODER, &model.encoder)?;
        model.load_encoder(enc)
    }
}

pub fn save_model<T: Real>(model: &FieldModel<T>, path: &Path) -> Result<()> {
    let mut c = Checkpoint::new();
    c.put_model(model)?;
    c.save(path)
}

pub fn load_model<T: Real>(path: &Path) -> Result<FieldModel<T>> {
    Checkpoint::load(path)?.model()
}

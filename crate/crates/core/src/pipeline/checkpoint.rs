//! Model checkpoints: `MAGIC`, a little-endian `u32` version, a `u64`
//! header length, a JSON header, then every tensor as little-endian `f32`
//! in header order. Writes go to a temp file that is renamed into place.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codec::{CodecArch, CodecModel, TrainingState};
use crate::error::{Error, Result};
use crate::generator::{GeneratorArch, GeneratorModel};
use crate::nn::module::{content_hash, named_slices, Module};
use crate::nn::{Adam, AdamConfig};

pub const MAGIC: &[u8; 8] = b"HVSJNDCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Codec,
    Generator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptimizerEntry {
    config: AdamConfig,
    step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    arch: Value,
    state: Value,
    config: Value,
    step: u64,
    trace: Vec<Value>,
    /// Codec the generator was trained against.
    codec_hash: Option<String>,
    params_hash: String,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub arch: Value,
    pub state: Value,
    /// Snapshot of the training configuration.
    pub config: Value,
    pub step: u64,
    /// Loss trace rows recorded so far.
    pub trace: Vec<Value>,
    pub codec_hash: Option<String>,
    pub params_hash: String,
    params: Vec<(String, Vec<f32>)>,
    optimizer: Option<OptimizerBlobs>,
}

/// Optimizer header plus its first and second moment tensors.
type OptimizerBlobs = (OptimizerEntry, Vec<Vec<f32>>, Vec<Vec<f32>>);

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn params_of<M: Module>(m: &M) -> Vec<(String, Vec<f32>)> {
    named_slices(m).into_iter().map(|(n, s)| (n, s.to_vec())).collect()
}

fn to_values<T: Serialize>(rows: &[T]) -> Result<Vec<Value>> {
    rows.iter().map(|r| Ok(serde_json::to_value(r)?)).collect()
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    fn build<M: Module>(
        kind: ModelKind,
        model: &M,
        arch: Value,
        state: Value,
        config: Value,
        step: u64,
        trace: Vec<Value>,
        codec_hash: Option<String>,
        optimizer: Option<&Adam>,
    ) -> Self {
        Self {
            kind,
            arch,
            state,
            config,
            step,
            trace,
            codec_hash,
            params_hash: content_hash(model),
            params: params_of(model),
            optimizer: optimizer.map(|a| {
                (
                    OptimizerEntry {
                        config: a.config,
                        step: a.step,
                    },
                    a.m.clone(),
                    a.v.clone(),
                )
            }),
        }
    }

    pub fn from_codec<C: Serialize, T: Serialize>(
        model: &CodecModel,
        config: &C,
        trace: &[T],
        optimizer: Option<&Adam>,
    ) -> Result<Self> {
        Ok(Self::build(
            ModelKind::Codec,
            model,
            serde_json::to_value(model.arch)?,
            serde_json::to_value(&model.state)?,
            serde_json::to_value(config)?,
            model.state.steps,
            to_values(trace)?,
            None,
            optimizer,
        ))
    }

    pub fn from_generator<C: Serialize, T: Serialize>(
        model: &GeneratorModel,
        codec_hash: &str,
        config: &C,
        trace: &[T],
        optimizer: Option<&Adam>,
    ) -> Result<Self> {
        Ok(Self::build(
            ModelKind::Generator,
            model,
            serde_json::to_value(&model.arch)?,
            Value::Null,
            serde_json::to_value(config)?,
            optimizer.map_or(trace.len() as u64, |a| a.step),
            to_values(trace)?,
            Some(codec_hash.to_string()),
            optimizer,
        ))
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(ckpt_err(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        Ok(())
    }

    fn restore<M: Module>(&self, model: &mut M) -> Result<()> {
        let expected: Vec<(String, usize)> = named_slices(model).into_iter().map(|(n, s)| (n, s.len())).collect();
        let found: Vec<(String, usize)> = self.params.iter().map(|(n, v)| (n.clone(), v.len())).collect();
        if expected != found {
            return Err(ckpt_err("tensor layout does not match the architecture"));
        }
        let mut i = 0;
        model.visit_mut(&mut |_, s| {
            s.copy_from_slice(&self.params[i].1);
            i += 1;
        });
        if content_hash(model) != self.params_hash {
            return Err(ckpt_err("parameter hash mismatch (corrupt checkpoint)"));
        }
        Ok(())
    }

    pub fn codec(&self) -> Result<CodecModel> {
        self.expect_kind(ModelKind::Codec)?;
        let arch: CodecArch = serde_json::from_value(self.arch.clone())?;
        let mut m = CodecModel::new(arch, 0);
        self.restore(&mut m)?;
        m.state = serde_json::from_value::<TrainingState>(self.state.clone())?;
        Ok(m)
    }

    pub fn generator(&self) -> Result<GeneratorModel> {
        self.expect_kind(ModelKind::Generator)?;
        let arch: GeneratorArch = serde_json::from_value(self.arch.clone())?;
        let mut m = GeneratorModel::new(arch, 0);
        self.restore(&mut m)?;
        Ok(m)
    }

    pub fn config_as<T: DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn trace_as<T: DeserializeOwned>(&self) -> Result<Vec<T>> {
        self.trace.iter().map(|v| Ok(serde_json::from_value(v.clone())?)).collect()
    }

    /// Optimizer state for resuming, if it was saved.
    pub fn optimizer(&self) -> Option<Adam> {
        self.optimizer.as_ref().map(|(e, m, v)| Adam {
            config: e.config,
            step: e.step,
            m: m.clone(),
            v: v.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors: Vec<TensorEntry> = self
            .params
            .iter()
            .map(|(n, v)| TensorEntry {
                name: n.clone(),
                len: v.len(),
            })
            .collect();
        let mut blobs: Vec<&[f32]> = self.params.iter().map(|(_, v)| v.as_slice()).collect();
        if let Some((_, m, v)) = &self.optimizer {
            for (i, t) in m.iter().enumerate() {
                tensors.push(TensorEntry {
                    name: format!("adam.m.{i}"),
                    len: t.len(),
                });
                blobs.push(t);
            }
            for (i, t) in v.iter().enumerate() {
                tensors.push(TensorEntry {
                    name: format!("adam.v.{i}"),
                    len: t.len(),
                });
                blobs.push(t);
            }
        }
        let header = Header {
            kind: self.kind,
            arch: self.arch.clone(),
            state: self.state.clone(),
            config: self.config.clone(),
            step: self.step,
            trace: self.trace.clone(),
            codec_hash: self.codec_hash.clone(),
            params_hash: self.params_hash.clone(),
            tensors,
            optimizer: self.optimizer.as_ref().map(|o| o.0.clone()),
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(json.len() + 20 + blobs.iter().map(|b| b.len() * 4).sum::<usize>());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for b in blobs {
            for v in b {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        atomic_write(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::Load {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(ckpt_err("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ckpt_err(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| ckpt_err("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut off = 20 + hlen;
        let mut read = |len: usize| -> Result<Vec<f32>> {
            let end = off + len * 4;
            let raw = bytes.get(off..end).ok_or_else(|| ckpt_err("truncated tensor data"))?;
            off = end;
            Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
        };
        let mut params = Vec::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for t in &header.tensors {
            let data = read(t.len)?;
            if t.name.starts_with("adam.m.") {
                m.push(data);
            } else if t.name.starts_with("adam.v.") {
                v.push(data);
            } else {
                params.push((t.name.clone(), data));
            }
        }
        if off != bytes.len() {
            return Err(ckpt_err("trailing bytes after tensor data"));
        }
        Ok(Self {
            kind: header.kind,
            arch: header.arch,
            state: header.state,
            config: header.config,
            step: header.step,
            trace: header.trace,
            codec_hash: header.codec_hash,
            params_hash: header.params_hash,
            params,
            optimizer: header.optimizer.map(|o| (o, m, v)),
        })
    }
}

/// Writes `bytes` next to `path` and renames over it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::Write {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })
}

//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//! `magic[8] | version u32 | meta_len u32 | meta JSON | n_arrays u32 |
//! (name_len u32 | name | ndim u32 | dims u64* | f64*)* | crc32 u32`.
//! The CRC covers every byte before it.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::baselines::RetrievalIndex;
use crate::error::{Error, Result};
use crate::kb::{KbVocabulary, TransEModel};
use crate::model::{ModelConfig, QgModel};
use crate::nn::Tensor;
use crate::text::Vocabulary;

pub const MAGIC: &[u8; 8] = b"FQGCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, Tensor)>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Integrity(format!("{what} too large to store")))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        let meta = serde_json::to_vec(&self.meta)?;
        put_u32(&mut out, len_u32(meta.len(), "metadata")?);
        out.extend_from_slice(&meta);
        put_u32(&mut out, len_u32(self.arrays.len(), "array count")?);
        for (name, t) in &self.arrays {
            put_u32(&mut out, len_u32(name.len(), "array name")?);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, len_u32(t.shape().len(), "rank")?);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Integrity("not a checkpoint file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Integrity("checksum mismatch".into()));
        }
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let meta_len = r.u32()? as usize;
        let meta = serde_json::from_slice(r.take(meta_len)?)?;
        let n = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Integrity("array name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                let d = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                shape.push(
                    usize::try_from(d).map_err(|_| Error::Integrity("dimension overflow".into()))?,
                );
            }
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Integrity("array size overflow".into()))?;
            let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Integrity("array size overflow".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.push((name, Tensor::from_vec(&shape, data)?));
        }
        if r.pos != body.len() {
            return Err(Error::Integrity("trailing bytes before checksum".into()));
        }
        Ok(Checkpoint { meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn array(&self, name: &str) -> Result<&Tensor> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Integrity(format!("missing array {name}")))
    }

    fn kind(&self) -> Option<&str> {
        self.meta.get("kind").and_then(|k| k.as_str())
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        match self.kind() {
            Some(k) if k == kind => Ok(()),
            other => Err(Error::Integrity(format!(
                "expected a {kind} checkpoint, found {}",
                other.unwrap_or("unknown")
            ))),
        }
    }

    fn field<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Integrity(format!("missing metadata field {key}")))?;
        Ok(serde_json::from_value(v.clone())?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Integrity("truncated checkpoint".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelMeta<'a> {
    kind: &'a str,
    config: ModelConfig,
    vocab: Vocabulary,
    kb: KbVocabulary,
}

pub fn transe_checkpoint(model: &TransEModel) -> Result<Checkpoint> {
    Ok(Checkpoint {
        meta: serde_json::json!({ "kind": "transe", "vocab": model.vocab }),
        arrays: vec![("table".into(), model.table.clone())],
    })
}

pub fn transe_from_checkpoint(ck: &Checkpoint) -> Result<TransEModel> {
    ck.expect_kind("transe")?;
    TransEModel::from_parts(ck.field("vocab")?, ck.array("table")?.clone())
}

pub fn model_checkpoint(model: &QgModel) -> Result<Checkpoint> {
    let meta = ModelMeta {
        kind: "qg_model",
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        kb: model.kb.clone(),
    };
    Ok(Checkpoint {
        meta: serde_json::to_value(&meta)?,
        arrays: model
            .store
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect(),
    })
}

pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<QgModel> {
    ck.expect_kind("qg_model")?;
    let config: ModelConfig = ck.field("config")?;
    let vocab: Vocabulary = ck.field("vocab")?;
    let kb: KbVocabulary = ck.field("kb")?;
    let transe = TransEModel::from_parts(kb, ck.array("E_f")?.clone())?;
    let mut model = QgModel::new(config, vocab, &transe)?;
    model.load_params(ck.arrays.clone())?;
    Ok(model)
}

pub fn index_checkpoint(index: &RetrievalIndex) -> Result<Checkpoint> {
    Ok(Checkpoint {
        meta: serde_json::json!({ "kind": "retrieval_index", "index": index }),
        arrays: Vec::new(),
    })
}

pub fn index_from_checkpoint(ck: &Checkpoint) -> Result<RetrievalIndex> {
    ck.expect_kind("retrieval_index")?;
    ck.field("index")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            meta: serde_json::json!({"kind": "test", "x": [1, 2]}),
            arrays: vec![
                ("a".into(), Tensor::from_vec(&[2, 2], vec![0.1, -2.0, f64::MIN_POSITIVE, 1e300]).unwrap()),
                ("b".into(), Tensor::vector(vec![std::f64::consts::PI]).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back.meta, ck.meta);
        for ((n1, t1), (n2, t2)) in back.arrays.iter().zip(&ck.arrays) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t1), bits(t2));
        }
    }

    #[test]
    fn every_corrupted_byte_is_caught() {
        let bytes = sample().to_bytes().unwrap();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x40;
            assert!(
                matches!(Checkpoint::from_bytes(&bad), Err(Error::Integrity(_))),
                "byte {i}"
            );
        }
        for cut in [0, 5, 12, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Integrity(_))));
        }
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Version { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn missing_file() {
        let err = Checkpoint::load(Path::new("/nonexistent/x.ckpt")).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }
}

//! Versioned binary checkpoints holding config, vocabulary, tagset and every
//! named parameter tensor.
//!
//! Layout after the `JSEGCKPT` magic and version: model kind byte, config as
//! JSON, tagset, vocabulary, then `(name, rows, cols, f64 × rows·cols)` per
//! tensor. All integers and floats are little-endian.

use std::path::Path;

use rand::SeedableRng;

use crate::container::{Reader, Writer};
use crate::error::{Error, Result};
use crate::kfusion::{KfConfig, KfModel};
use crate::nn::{named_params, Matrix, Module, Rng};
use crate::semodel::{ModelConfig, SeModel};
use crate::tagset::TagSet;
use crate::vocab::Vocab;

const MAGIC: &[u8; 8] = b"JSEGCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Tagger,
    Fusion,
}

impl ModelKind {
    fn byte(self) -> u8 {
        match self {
            ModelKind::Tagger => 1,
            ModelKind::Fusion => 2,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(ModelKind::Tagger),
            2 => Ok(ModelKind::Fusion),
            _ => Err(Error::Format(format!("unknown model kind {b}"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            ModelKind::Tagger => "first-stage tagger",
            ModelKind::Fusion => "knowledge-fusion model",
        }
    }
}

fn write<M: Module>(kind: ModelKind, config: String, tagset: &TagSet, vocab: &Vocab, net: &M) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u8(kind.byte());
    w.str(&config);
    w.str(&tagset.to_file_string());
    w.str(&String::from(vocab.clone()));
    let params = named_params(net);
    w.len(params.len());
    for (name, m) in params {
        w.str(&name);
        w.len(m.nrows());
        w.len(m.ncols());
        w.f64s(m.iter().copied());
    }
    w.finish()
}

struct Parts<'a> {
    config: &'a str,
    tagset: TagSet,
    vocab: Vocab,
    reader: Reader<'a>,
}

fn read_header(bytes: &[u8], expected: ModelKind) -> Result<Parts<'_>> {
    let (mut r, version) = Reader::new(bytes, MAGIC)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let kind = ModelKind::from_byte(r.u8()?)?;
    if kind != expected {
        return Err(Error::Incompatible(format!(
            "checkpoint holds a {}, expected a {}",
            kind.name(),
            expected.name()
        )));
    }
    let config = r.str()?;
    let tagset = TagSet::parse(r.str()?).map_err(|e| Error::Format(format!("tagset: {e}")))?;
    let vocab = Vocab::from(r.str()?.to_owned());
    Ok(Parts {
        config,
        tagset,
        vocab,
        reader: r,
    })
}

/// Overwrites every parameter of `net` from the tensor section.
fn read_params<M: Module>(r: &mut Reader<'_>, net: &mut M) -> Result<()> {
    let count = r.len()?;
    let expected = named_params(net).len();
    if count != expected {
        return Err(Error::Format(format!("{count} tensors, model has {expected}")));
    }
    let mut tensors: Vec<(String, Matrix)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.str()?.to_owned();
        let rows = r.len()?;
        let cols = r.len()?;
        let data = r.f64s(rows.checked_mul(cols).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let m = Matrix::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))?;
        tensors.push((name, m));
    }
    r.expect_end()?;
    let mut i = 0;
    let mut failure = None;
    net.visit_mut("", &mut |name, p| {
        let (stored, m) = &tensors[i];
        i += 1;
        if failure.is_some() {
            return;
        }
        if *stored != name {
            failure = Some(format!("tensor `{stored}` where `{name}` was expected"));
        } else if m.dim() != p.dim() {
            failure = Some(format!("tensor `{name}` has shape {:?}, expected {:?}", m.dim(), p.dim()));
        } else {
            p.assign(m);
        }
    });
    match failure {
        Some(msg) => Err(Error::Incompatible(msg)),
        None => Ok(()),
    }
}

/// The kind of model stored in a checkpoint.
pub fn peek_kind(bytes: &[u8]) -> Result<ModelKind> {
    let (mut r, _) = Reader::new(bytes, MAGIC)?;
    ModelKind::from_byte(r.u8()?)
}

impl SeModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_string(&self.config).expect("config serializes");
        write(ModelKind::Tagger, config, &self.tagset, &self.vocab, &self.net)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut parts = read_header(bytes, ModelKind::Tagger)?;
        let config: ModelConfig =
            serde_json::from_str(parts.config).map_err(|e| Error::Config(format!("checkpoint config: {e}")))?;
        let mut model = SeModel::new(config, parts.vocab, parts.tagset, &mut Rng::seed_from_u64(0))?;
        read_params(&mut parts.reader, &mut model.net)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SeModel::from_bytes(&std::fs::read(path)?)
    }
}

impl KfModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_string(&self.config).expect("config serializes");
        write(ModelKind::Fusion, config, &self.tagset, &self.vocab, &self.net)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut parts = read_header(bytes, ModelKind::Fusion)?;
        let config: KfConfig =
            serde_json::from_str(parts.config).map_err(|e| Error::Config(format!("checkpoint config: {e}")))?;
        let mut model = KfModel::new(config, parts.vocab, parts.tagset, &mut Rng::seed_from_u64(0))?;
        read_params(&mut parts.reader, &mut model.net)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        KfModel::from_bytes(&std::fs::read(path)?)
    }
}

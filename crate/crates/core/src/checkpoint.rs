//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "HMRLCKPT"
//! version    u32       1
//! config     u64 length + UTF-8 TOML (the run configuration)
//! metadata   u64 length + UTF-8 TOML (method, iteration, network shapes)
//! slices     u64 count, then per slice:
//!              u32 name length + UTF-8 name
//!              u32 rank, rank × u64 dims
//!              product(dims) × f64
//! ```
//!
//! Slice names carry a module prefix: `policy/`, `potential/`,
//! `embedding/` or `inner_lr/`, followed by the layout name such as
//! `l0.weight`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{MlpSpec, ParamVector};
use crate::error::{Error, Result};
use crate::metaloop::{MetaModel, Method, RunConfig, ShapingModule};
use crate::metastate::{EmbeddingMode, EmbeddingSpec};
use crate::shaping::{PotentialNet, Shaping};

pub const MAGIC: &[u8; 8] = b"HMRLCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    method: Method,
    iteration: usize,
    policy: MlpSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    potential: Option<MlpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<EmbeddingMode>,
    meta_sgd: bool,
}

/// One named tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredSlice {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

fn slices_of(prefix: &str, p: &ParamVector, out: &mut Vec<StoredSlice>) {
    for s in p.layout().slices() {
        out.push(StoredSlice {
            name: format!("{prefix}/{}", s.name),
            shape: s.shape.clone(),
            values: p.values()[s.range()].to_vec(),
        });
    }
}

/// Every parameter slice of `model`, in file order.
pub fn model_slices(model: &MetaModel) -> Vec<StoredSlice> {
    let mut out = Vec::new();
    slices_of("policy", &model.theta, &mut out);
    if let Some(lr) = &model.inner_lr {
        slices_of("inner_lr", lr, &mut out);
    }
    if let Some(s) = model.shaping() {
        slices_of("potential", &s.potential.params, &mut out);
        slices_of("embedding", &s.embedding.params, &mut out);
    }
    out
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(bytes);
}

pub fn to_bytes(cfg: &RunConfig, model: &MetaModel) -> Vec<u8> {
    let meta = Metadata {
        method: model.method,
        iteration: model.iteration,
        policy: model.policy.clone(),
        potential: model.shaping().map(|s| s.potential.spec.clone()),
        embedding: model.shaping().map(|s| s.embedding.mode),
        meta_sgd: model.inner_lr.is_some(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_bytes(&mut out, cfg.to_toml().as_bytes());
    put_bytes(&mut out, toml::to_string(&meta).expect("metadata serializes").as_bytes());
    let slices = model_slices(model);
    out.extend_from_slice(&(slices.len() as u64).to_le_bytes());
    for s in slices {
        out.extend_from_slice(&(s.name.len() as u32).to_le_bytes());
        out.extend_from_slice(s.name.as_bytes());
        out.extend_from_slice(&(s.shape.len() as u32).to_le_bytes());
        for d in &s.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in &s.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated file at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }

    fn text(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?).map_err(|e| Error::Checkpoint(format!("invalid UTF-8: {e}")))
    }
}

/// Raw contents of a checkpoint file.
#[derive(Clone, Debug)]
pub struct Contents {
    pub config: RunConfig,
    pub slices: Vec<StoredSlice>,
}

pub fn read_contents(bytes: &[u8]) -> Result<(Contents, String)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let n = r.len()?;
    let config = RunConfig::from_toml(r.text(n)?)?;
    let n = r.len()?;
    let meta = r.text(n)?.to_string();
    let count = r.len()?;
    let mut slices = Vec::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = r.text(n)?.to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("slice `{name}` is too large")))?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("slice too large".into()))?)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        slices.push(StoredSlice { name, shape, values });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((Contents { config, slices }, meta))
}

fn assemble(prefix: &str, template: ParamVector, slices: &[StoredSlice]) -> Result<ParamVector> {
    let mut p = template;
    let layout = p.layout().clone();
    for s in layout.slices() {
        let name = format!("{prefix}/{}", s.name);
        let stored = slices
            .iter()
            .find(|x| x.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing slice `{name}`")))?;
        if stored.shape != s.shape {
            return Err(Error::Checkpoint(format!(
                "slice `{name}` has shape {:?}, expected {:?}",
                stored.shape, s.shape
            )));
        }
        p.values_mut()[s.range()].copy_from_slice(&stored.values);
    }
    p.check_finite()?;
    Ok(p)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(RunConfig, MetaModel)> {
    let (contents, meta) = read_contents(bytes)?;
    let meta: Metadata = toml::from_str(&meta).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let slices = &contents.slices;
    meta.policy.validate()?;
    let theta = assemble("policy", meta.policy.zeros(), slices)?;
    let inner_lr = if meta.meta_sgd {
        Some(assemble("inner_lr", ParamVector::zeros(theta.layout().clone()), slices)?)
    } else {
        None
    };
    let shaping = match (meta.potential, meta.embedding) {
        (Some(spec), Some(mode)) => {
            let params = assemble("potential", spec.zeros(), slices)?;
            let potential = PotentialNet::from_params(spec, params)?;
            let template = EmbeddingSpec::new(mode).params;
            let embedding = EmbeddingSpec::with_params(mode, assemble("embedding", template, slices)?)?;
            Some(ShapingModule::new(
                Shaping::new(embedding, potential),
                contents.config.networks.shaping_lr,
            ))
        }
        (None, None) => None,
        _ => return Err(Error::Checkpoint("potential and embedding must be stored together".into())),
    };
    let known = |n: &str| ["policy/", "inner_lr/", "potential/", "embedding/"].iter().any(|p| n.starts_with(p));
    if let Some(bad) = slices.iter().find(|s| !known(&s.name)) {
        return Err(Error::Checkpoint(format!("unexpected slice `{}`", bad.name)));
    }
    let model = MetaModel {
        method: meta.method,
        policy: meta.policy,
        theta,
        inner_lr,
        shaping,
        iteration: meta.iteration,
    };
    let expected = model_slices(&model).len();
    if expected != slices.len() {
        return Err(Error::Checkpoint(format!("{} slices stored, {expected} expected", slices.len())));
    }
    Ok((contents.config, model))
}

/// Writes to a temporary sibling and renames it into place.
pub fn save(path: &Path, cfg: &RunConfig, model: &MetaModel) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, to_bytes(cfg, model))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(RunConfig, MetaModel)> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

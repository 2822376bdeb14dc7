use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{StopReason, TrainConfig};
use crate::error::{Error, Result};
use crate::field::{Field, GridSpec};
use crate::model::{ModelConfig, Param, PercnnModel};
use crate::scalar::Real;
use crate::solver::PdeSystem;

const MAGIC: &[u8; 4] = b"PCNC";
const VERSION: u32 = 1;

/// Everything but the arrays; stored as a JSON block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub channels: usize,
    pub coarse: GridSpec,
    pub fine: GridSpec,
    pub train: TrainConfig,
    pub epoch: usize,
    pub adam_step: u64,
    pub best_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub since_best: usize,
    pub bad_streak: usize,
    /// Seed of the parameter initialisation; training itself draws no random numbers.
    pub seed: u64,
    pub stop: Option<StopReason>,
    /// History as CSV text, so non-finite losses survive.
    pub history: String,
    /// Euler steps spanned by all measured frames, validation included.
    pub window_steps: usize,
    /// Governing equations the data came from, when known.
    pub system: Option<PdeSystem>,
}

/// Resumable training state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<Param<f64>>,
    pub adam_m: Vec<Vec<f64>>,
    pub adam_v: Vec<Vec<f64>>,
    pub best_params: Option<Vec<Vec<f64>>>,
    /// First measured frame, on the coarse grid.
    pub initial: Vec<f64>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CorruptHeader(format!("checkpoint truncated at byte {}", self.pos)))?;
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

impl Checkpoint {
    fn arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = vec![("data/initial".to_string(), vec![self.initial.len()], self.initial.as_slice())];
        for (i, p) in self.params.iter().enumerate() {
            out.push((format!("param/{}", p.name), p.dims.clone(), p.value.as_slice()));
            out.push((format!("adam_m/{}", p.name), p.dims.clone(), self.adam_m[i].as_slice()));
            out.push((format!("adam_v/{}", p.name), p.dims.clone(), self.adam_v[i].as_slice()));
            if let Some(best) = &self.best_params {
                out.push((format!("best/{}", p.name), p.dims.clone(), best[i].as_slice()));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.meta).expect("checkpoint metadata serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let arrays = self.arrays();
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, dims, values) in arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(dims.len() as u8);
            for &d in &dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).map_err(|_| Error::CorruptHeader("checkpoint shorter than its magic".into()))?;
        if magic != MAGIC {
            return Err(Error::UnrecognizedFormat {
                expected: "PCNC".into(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let len = r.u64()? as usize;
        let meta: CheckpointMeta =
            serde_json::from_slice(r.take(len)?).map_err(|e| Error::CorruptHeader(format!("checkpoint metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut params = Vec::new();
        let (mut adam_m, mut adam_v, mut best) = (Vec::new(), Vec::new(), Vec::new());
        let mut initial = None;
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::CorruptHeader("array name is not UTF-8".into()))?
                .to_string();
            let ndim = r.take(1)?[0] as usize;
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l.checked_mul(8).is_some())
                .ok_or_else(|| Error::ShapeOverflow(format!("array {name} with dims {dims:?}")))?;
            let raw = r.take(len * 8)?;
            let value: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let (kind, pname) = name
                .split_once('/')
                .ok_or_else(|| Error::CorruptHeader(format!("array name {name:?} has no group")))?;
            match kind {
                "param" => params.push(Param { name: pname.to_string(), dims, value }),
                "adam_m" => adam_m.push(value),
                "adam_v" => adam_v.push(value),
                "best" => best.push(value),
                "data" if pname == "initial" => initial = Some(value),
                _ => return Err(Error::CorruptHeader(format!("unknown array group {kind:?}"))),
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptHeader("trailing bytes after checkpoint arrays".into()));
        }
        if adam_m.len() != params.len() || adam_v.len() != params.len() || !(best.is_empty() || best.len() == params.len()) {
            return Err(Error::CorruptHeader("checkpoint array groups differ in length".into()));
        }
        let best_params = (!best.is_empty()).then_some(best);
        let initial = initial.ok_or_else(|| Error::CorruptHeader("checkpoint lacks the initial measurement".into()))?;
        if initial.len() != meta.channels * meta.coarse.len() {
            return Err(Error::CorruptHeader("initial measurement does not match the coarse grid".into()));
        }
        Ok(Checkpoint { meta, params, adam_m, adam_v, best_params, initial })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    fn build<T: Real>(&self, values: Option<&Vec<Vec<f64>>>) -> Result<PercnnModel<T>> {
        let m = &self.meta;
        let params = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let v = values.map_or(&p.value, |b| &b[i]);
                Param { name: p.name.clone(), dims: p.dims.clone(), value: v.iter().map(|&x| T::of(x)).collect() }
            })
            .collect();
        PercnnModel::from_params(m.model.clone(), m.channels, m.coarse.clone(), m.fine.clone(), params)
    }

    /// First measured frame the model was trained on.
    pub fn initial_field<T: Real>(&self) -> Result<Field<T>> {
        let values = self.initial.iter().map(|&v| T::of(v)).collect();
        Field::new(self.meta.coarse.clone(), self.meta.channels, values)
    }

    /// Model at the latest parameters.
    pub fn model<T: Real>(&self) -> Result<PercnnModel<T>> {
        self.build(None)
    }

    /// Model at the best-validation parameters, or the latest if none were recorded.
    pub fn best_model<T: Real>(&self) -> Result<PercnnModel<T>> {
        self.build(self.best_params.as_ref())
    }
}

//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "FNRR"  u32 version  u8 stage  u64 iteration
//! u32 n_meta    { str key, str value }
//! u32 n_tensor  { u64 record_len, str name, u8 dtype, u32 rank, u64 dims[rank], payload }
//! u32 n_optim   { str name, u64 t, f64 lr, f64 beta1, f64 beta2, f64 eps,
//!                 u32 n, tensor record m[n], tensor record v[n] }
//! rng: [u8; 32] seed, u64 stream, u128 word_pos
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Stage;
use crate::error::{CheckpointError, Error, Result};
use crate::nn::{ArchProfile, MergeMode};
use crate::optim::{Adam, AdamConfig, AdamState};
use crate::params::{Param, ParamStore};
use crate::tensor::{DType, Scalar, Tensor};

pub const MAGIC: [u8; 4] = *b"FNRR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Little-endian element bytes.
    pub data: Vec<u8>,
}

impl TensorRecord {
    pub fn from_tensor<T: Scalar>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        let mut data = Vec::with_capacity(t.numel() * T::DTYPE.size());
        for &v in t.data() {
            v.write_le(&mut data);
        }
        TensorRecord {
            name: name.into(),
            dtype: T::DTYPE,
            shape: t.shape().to_vec(),
            data,
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        if self.dtype != T::DTYPE {
            return Err(CheckpointError::Mismatch(format!(
                "tensor {} is {:?}, the model runs in {:?}",
                self.name,
                self.dtype,
                T::DTYPE
            ))
            .into());
        }
        let data = self.data.chunks_exact(T::DTYPE.size()).map(T::read_le).collect();
        Tensor::new(self.shape.clone(), data)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimRecord {
    pub name: String,
    pub t: u64,
    pub config: AdamConfig,
    pub m: Vec<TensorRecord>,
    pub v: Vec<TensorRecord>,
}

impl OptimRecord {
    pub fn from_adam<T: Scalar>(name: &str, adam: &Adam<T>, store: &ParamStore<T>) -> Self {
        let names: Vec<&str> = store.iter().map(|p| p.name.as_str()).collect();
        let rec = |ts: &[Tensor<T>]| {
            ts.iter()
                .zip(&names)
                .map(|(t, n)| TensorRecord::from_tensor(*n, t))
                .collect()
        };
        OptimRecord {
            name: name.into(),
            t: adam.state.t,
            config: adam.config,
            m: rec(&adam.state.m),
            v: rec(&adam.state.v),
        }
    }

    /// Rebuilds the optimizer for `store`, matching moments by parameter name.
    pub fn to_adam<T: Scalar>(&self, store: &ParamStore<T>) -> Result<Adam<T>> {
        let pick = |recs: &[TensorRecord]| -> Result<Vec<Tensor<T>>> {
            if recs.len() != store.len() {
                return Err(mismatch(format!(
                    "optimizer group {} has {} moments for {} parameters",
                    self.name,
                    recs.len(),
                    store.len()
                )));
            }
            store
                .iter()
                .zip(recs)
                .map(|(p, r)| {
                    if r.name != p.name || r.shape != p.value.shape() {
                        return Err(mismatch(format!(
                            "optimizer moment {} does not match {}",
                            r.name, p.name
                        )));
                    }
                    r.to_tensor()
                })
                .collect()
        };
        Ok(Adam {
            config: self.config,
            state: AdamState {
                t: self.t,
                m: pick(&self.m)?,
                v: pick(&self.v)?,
            },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub stage: Stage,
    pub iteration: u64,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<TensorRecord>,
    pub optim: Vec<OptimRecord>,
    pub rng: RngState,
}

fn mismatch(msg: String) -> Error {
    CheckpointError::Mismatch(msg).into()
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing metadata `{key}`")).into())
    }

    pub fn dtype(&self) -> Option<DType> {
        self.tensors.first().map(|t| t.dtype)
    }

    pub fn expect_stage(&self, stage: Stage) -> Result<()> {
        if self.stage != stage {
            return Err(mismatch(format!(
                "expected a {stage} checkpoint, found a {} checkpoint",
                self.stage
            )));
        }
        Ok(())
    }

    pub fn push_params<T: Scalar>(&mut self, store: &ParamStore<T>) {
        self.tensors.extend(
            store
                .iter()
                .map(|p| TensorRecord::from_tensor(p.name.clone(), &p.value)),
        );
    }

    /// Fills `store` from the records whose names it declares. Every parameter
    /// must be present with the same shape and dtype.
    pub fn load_params<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let mut params = Vec::new();
        for r in &self.tensors {
            if store.id(&r.name).is_some() {
                params.push(Param {
                    name: r.name.clone(),
                    value: r.to_tensor()?,
                });
            }
        }
        store.load_from(&params).map_err(|e| mismatch(e.to_string()))
    }

    pub fn optim(&self, name: &str) -> Result<&OptimRecord> {
        self.optim
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| mismatch(format!("no optimizer group `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&MAGIC);
        w.u32(self.version);
        w.0.push(self.stage.tag());
        w.u64(self.iteration);
        w.u32(self.meta.len() as u32);
        for (k, v) in &self.meta {
            w.str(k);
            w.str(v);
        }
        w.u32(self.tensors.len() as u32);
        for t in &self.tensors {
            w.tensor(t);
        }
        w.u32(self.optim.len() as u32);
        for o in &self.optim {
            w.str(&o.name);
            w.u64(o.t);
            for x in [o.config.lr, o.config.beta1, o.config.beta2, o.config.eps] {
                w.0.extend_from_slice(&x.to_le_bytes());
            }
            w.u32(o.m.len() as u32);
            for t in o.m.iter().chain(&o.v) {
                w.tensor(t);
            }
        }
        w.0.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.0.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { b: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic).into());
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        let tag = r.u8("stage")?;
        let stage = Stage::from_tag(tag).ok_or_else(|| CheckpointError::Corrupt(format!("stage tag {tag}")))?;
        let iteration = r.u64("iteration")?;
        let n_meta = r.u32("metadata")?;
        let mut meta = Vec::new();
        for _ in 0..n_meta {
            meta.push((r.str("metadata")?, r.str("metadata")?));
        }
        let n = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..n {
            tensors.push(r.tensor()?);
        }
        let n_opt = r.u32("optimizer count")?;
        let mut optim = Vec::new();
        for _ in 0..n_opt {
            let name = r.str("optimizer")?;
            let t = r.u64("optimizer")?;
            let mut c = [0.0; 4];
            for x in c.iter_mut() {
                *x = f64::from_le_bytes(r.take(8, "optimizer")?.try_into().expect("8 bytes"));
            }
            let k = r.u32("optimizer")? as usize;
            let mut recs = Vec::new();
            for _ in 0..2 * k {
                recs.push(r.tensor()?);
            }
            let v = recs.split_off(k);
            optim.push(OptimRecord {
                name,
                t,
                config: AdamConfig {
                    lr: c[0],
                    beta1: c[1],
                    beta2: c[2],
                    eps: c[3],
                },
                m: recs,
                v,
            });
        }
        let seed: [u8; 32] = r.take(32, "rng state")?.try_into().expect("32 bytes");
        let stream = r.u64("rng state")?;
        let word_pos = u128::from_le_bytes(r.take(16, "rng state")?.try_into().expect("16 bytes"));
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)).into());
        }
        Ok(Checkpoint {
            version,
            stage,
            iteration,
            meta,
            tensors,
            optim,
            rng: RngState { seed, stream, word_pos },
        })
    }

    /// Writes through a temporary file and renames, so readers never see a
    /// partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    ck.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn tensor(&mut self, t: &TensorRecord) {
        let len = 4 + t.name.len() + 1 + 4 + 8 * t.shape.len() + t.data.len();
        self.u64(len as u64);
        self.str(&t.name);
        self.0.push(t.dtype as u8);
        self.u32(t.shape.len() as u32);
        for &d in &t.shape {
            self.u64(d as u64);
        }
        self.0.extend_from_slice(&t.data);
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.b.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what).into());
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self, what: &'static str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::Corrupt(format!("{what} is not UTF-8")).into())
    }

    fn tensor(&mut self) -> Result<TensorRecord> {
        const WHAT: &str = "tensor record";
        let len = self.u64(WHAT)? as usize;
        let start = self.pos;
        if self.b.len() - self.pos < len {
            return Err(CheckpointError::Truncated(WHAT).into());
        }
        let name = self.str(WHAT)?;
        let tag = self.u8(WHAT)?;
        let dtype =
            DType::from_tag(tag).ok_or_else(|| CheckpointError::Corrupt(format!("dtype tag {tag} in {name}")))?;
        let rank = self.u32(WHAT)? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(self.u64(WHAT)? as usize);
        }
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes = numel.and_then(|n| n.checked_mul(dtype.size()));
        let Some(bytes) = bytes.filter(|&b| start + len == self.pos + b) else {
            return Err(CheckpointError::Corrupt(format!("record {name} has inconsistent length")).into());
        };
        let data = self.take(bytes, WHAT)?.to_vec();
        Ok(TensorRecord {
            name,
            dtype,
            shape,
            data,
        })
    }
}

pub fn profile_meta(p: &ArchProfile) -> Vec<(String, String)> {
    let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    vec![
        ("profile".into(), p.name.clone()),
        ("profile.resolution".into(), p.resolution.to_string()),
        ("profile.widths".into(), list(&p.widths)),
        ("profile.fpn_widths".into(), list(&p.fpn_widths)),
        ("profile.fpn_dim".into(), p.fpn_dim.to_string()),
        (
            "profile.attention_resolution".into(),
            p.attention_resolution.to_string(),
        ),
        ("profile.attention_cap".into(), p.attention_cap.to_string()),
        (
            "profile.merge".into(),
            match p.merge {
                MergeMode::Sum => "sum".into(),
                MergeMode::Concat => "concat".into(),
            },
        ),
        ("profile.leaky_slope".into(), p.leaky_slope.to_string()),
        ("profile.demod_eps".into(), p.demod_eps.to_string()),
        ("profile.init_std".into(), p.init_std.to_string()),
    ]
}

pub fn profile_from_meta(ck: &Checkpoint) -> Result<ArchProfile> {
    fn num<V: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<V> {
        ck.require_meta(key)?
            .parse()
            .map_err(|_| CheckpointError::Corrupt(format!("bad metadata `{key}`")).into())
    }
    fn arr<const N: usize>(ck: &Checkpoint, key: &str) -> Result<[usize; N]> {
        let v: Vec<usize> = ck
            .require_meta(key)?
            .split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| CheckpointError::Corrupt(format!("bad metadata `{key}`")).into())
            })
            .collect::<Result<_>>()?;
        v.try_into()
            .map_err(|_| CheckpointError::Corrupt(format!("bad metadata `{key}`")).into())
    }
    let p = ArchProfile {
        name: ck.require_meta("profile")?.to_string(),
        resolution: num(ck, "profile.resolution")?,
        widths: arr(ck, "profile.widths")?,
        fpn_widths: arr(ck, "profile.fpn_widths")?,
        fpn_dim: num(ck, "profile.fpn_dim")?,
        attention_resolution: num(ck, "profile.attention_resolution")?,
        attention_cap: num(ck, "profile.attention_cap")?,
        merge: ck.require_meta("profile.merge")?.parse()?,
        leaky_slope: num(ck, "profile.leaky_slope")?,
        demod_eps: num(ck, "profile.demod_eps")?,
        init_std: num(ck, "profile.init_std")?,
    };
    p.validate()?;
    Ok(p)
}

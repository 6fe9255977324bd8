//! Training configuration and the plain-text `key = value` config file.
//!
//! ```text
//! # comments start with '#'
//! lr = 0.0001
//! lambda_dcp = 0.0001
//! profile = desk
//! ```
//!
//! Keys: `lr`, `iterations`, `batch_size`, `lambda_dcp`, `seed`, `profile`,
//! `checkpoint_every`, `adv_loss` (`hinge` | `non-saturating`), `precision`
//! (`f32` | `f64`), `merge` (`sum` | `concat`).

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{ConfigError, Error, Result};
use crate::losses::{AdvForm, DEFAULT_LAMBDA_DCP};
use crate::nn::{ArchProfile, MergeMode};

pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_SEED: u64 = 42;
pub const DESK_COARSE_ITERATIONS: u64 = 5000;
pub const DESK_REFINE_ITERATIONS: u64 = 4000;

const KEYS: [&str; 10] = [
    "lr",
    "iterations",
    "batch_size",
    "lambda_dcp",
    "seed",
    "profile",
    "checkpoint_every",
    "adv_loss",
    "precision",
    "merge",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Coarse,
    Refine,
}

impl Stage {
    pub fn tag(self) -> u8 {
        match self {
            Stage::Coarse => 0,
            Stage::Refine => 1,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Stage::Coarse),
            1 => Some(Stage::Refine),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Coarse => "coarse",
            Stage::Refine => "refine",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::Invalid(format!("unknown precision `{s}` (expected f32 or f64)"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub lr: f64,
    pub iterations: u64,
    pub batch_size: usize,
    pub lambda_dcp: f64,
    pub seed: u64,
    pub profile: String,
    /// 0 disables intermediate checkpoints.
    pub checkpoint_every: u64,
    pub adv_form: AdvForm,
    pub precision: Precision,
}

impl TrainConfig {
    pub fn new(stage: Stage) -> Self {
        TrainConfig {
            stage,
            lr: DEFAULT_LR,
            iterations: match stage {
                Stage::Coarse => DESK_COARSE_ITERATIONS,
                Stage::Refine => DESK_REFINE_ITERATIONS,
            },
            batch_size: 1,
            lambda_dcp: DEFAULT_LAMBDA_DCP,
            seed: DEFAULT_SEED,
            profile: "desk".into(),
            checkpoint_every: 1000,
            adv_form: AdvForm::Hinge,
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(ConfigError::Value {
                key: key.into(),
                msg: msg.into(),
            }
            .into())
        };
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.lambda_dcp >= 0.0 && self.lambda_dcp.is_finite()) {
            return bad("lambda_dcp", "must be non-negative");
        }
        Ok(())
    }
}

/// A parsed config file: training settings plus the architecture profile.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub train: TrainConfig,
    pub profile: ArchProfile,
}

fn parse_value<V: FromStr>(line: usize, text: &str, value: &str) -> Result<V>
where
    V::Err: fmt::Display,
{
    value.parse().map_err(|e: V::Err| {
        ConfigError::Parse {
            line,
            text: text.into(),
            msg: e.to_string(),
        }
        .into()
    })
}

pub fn parse_config(text: &str, stage: Stage) -> Result<LoadedConfig> {
    let mut cfg = TrainConfig::new(stage);
    let mut merge = None;
    let mut unknown = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                text: raw.into(),
                msg: "expected `key = value`".into(),
            }
            .into());
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            unknown.push((key.to_string(), line));
            continue;
        }
        match key {
            "lr" => cfg.lr = parse_value(line, raw, value)?,
            "iterations" => cfg.iterations = parse_value(line, raw, value)?,
            "batch_size" => cfg.batch_size = parse_value(line, raw, value)?,
            "lambda_dcp" => cfg.lambda_dcp = parse_value(line, raw, value)?,
            "seed" => cfg.seed = parse_value(line, raw, value)?,
            "profile" => cfg.profile = value.to_string(),
            "checkpoint_every" => cfg.checkpoint_every = parse_value(line, raw, value)?,
            "adv_loss" => cfg.adv_form = parse_value(line, raw, value)?,
            "precision" => cfg.precision = parse_value(line, raw, value)?,
            "merge" => merge = Some(parse_value::<MergeMode>(line, raw, value)?),
            _ => unreachable!(),
        }
    }
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown).into());
    }
    cfg.validate()?;
    let mut profile = ArchProfile::by_name(&cfg.profile)?;
    if let Some(m) = merge {
        profile.merge = m;
    }
    Ok(LoadedConfig { train: cfg, profile })
}

pub fn load_config(path: &Path, stage: Stage) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, stage)
}

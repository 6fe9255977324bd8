//! Dataset layout on disk:
//!
//! ```text
//! out/manifest.tsv            <image_path>\t<normal_path>\t<train|test>
//! out/train/<id>_image.png    RGB8 render
//! out/train/<id>_normal.png   RGBA8 normal map
//! out/test/...
//! ```
//!
//! Paths in the manifest are relative to `out`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::codec::{decode_normal_png, encode_normal_png, load_image_png, save_image_png};
use super::scene::{generate_scene, render_lambertian, SynthProfile};
use super::{Image, NormalMap};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub normals: NormalMap,
}

impl Sample {
    /// Renders scene `seed` and returns the 8-bit-quantized pair, i.e. what a
    /// round trip through the PNG files yields.
    pub fn generate(id: impl Into<String>, seed: u64, prof: &SynthProfile) -> Self {
        let scene = generate_scene(seed, prof);
        let normals = scene.normals();
        let image = render_lambertian(&scene, &normals).quantized();
        Sample {
            id: id.into(),
            image,
            normals,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub normal: PathBuf,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&format!("{}\t{}\t{}\n", e.image.display(), e.normal.display(), e.split));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let split = match cols.get(2) {
                Some(&"train") => Split::Train,
                Some(&"test") => Split::Test,
                _ => {
                    return Err(Error::Invalid(format!(
                        "manifest line {}: expected `<image>\\t<normal>\\t<train|test>`",
                        i + 1
                    )))
                }
            };
            if cols.len() != 3 {
                return Err(Error::Invalid(format!("manifest line {}: expected 3 columns", i + 1)));
            }
            entries.push(ManifestEntry {
                image: cols[0].into(),
                normal: cols[1].into(),
                split,
            });
        }
        Ok(Manifest { entries })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }
}

/// Seeded shuffle of `0..n`; the first `round(n * frac)` indices (clamped so
/// both sides are non-empty) are the training set. Both lists are sorted.
pub fn split_indices(n: usize, seed: u64, frac: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 scenes to split, got {n}")));
    }
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::Invalid(format!("split fraction must be in (0, 1), got {frac}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    idx.shuffle(&mut rng);
    let n_train = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per-scene seeds derived from the dataset seed.
pub fn scene_seeds(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

fn sample_id(i: usize) -> String {
    format!("{i:05}")
}

/// Generates `count` scenes, renders them and writes the dataset to `out`.
pub fn build_dataset(out: &Path, count: usize, seed: u64, frac: f64, prof: &SynthProfile) -> Result<Manifest> {
    let (train, _) = split_indices(count, seed, frac)?;
    let seeds = scene_seeds(count, seed);
    for split in [Split::Train, Split::Test] {
        let d = out.join(split.as_str());
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut manifest = Manifest::default();
    for (i, &s) in seeds.iter().enumerate() {
        let split = if train.binary_search(&i).is_ok() {
            Split::Train
        } else {
            Split::Test
        };
        let sample = Sample::generate(sample_id(i), s, prof);
        let image = PathBuf::from(split.as_str()).join(format!("{}_image.png", sample.id));
        let normal = PathBuf::from(split.as_str()).join(format!("{}_normal.png", sample.id));
        save_image_png(&sample.image, out.join(&image))?;
        encode_normal_png(&sample.normals, out.join(&normal))?;
        manifest.entries.push(ManifestEntry { image, normal, split });
    }
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads every pair of one partition listed in `dir/manifest.tsv`.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<Sample>> {
    let manifest = Manifest::load(dir)?;
    let mut out = Vec::new();
    for e in manifest.entries.iter().filter(|e| e.split == split) {
        let image = load_image_png(dir.join(&e.image))?;
        let normals = decode_normal_png(dir.join(&e.normal))?;
        if (image.width, image.height) != (normals.width, normals.height) {
            return Err(Error::Invalid(format!(
                "{} and {} differ in size",
                e.image.display(),
                e.normal.display()
            )));
        }
        let id = e
            .image
            .file_name()
            .and_then(|f| f.to_str())
            .and_then(|f| f.strip_suffix("_image.png"))
            .unwrap_or_default()
            .to_string();
        out.push(Sample { id, image, normals });
    }
    Ok(out)
}

//! Named parameter storage shared by the networks, the optimizer and checkpoints.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

static NEXT_STORE_UID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Ordered collection of named tensors. Insertion order is the canonical order
/// used by the optimizer and by checkpoint files.
#[derive(Debug)]
pub struct ParamStore<T> {
    uid: u64,
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        ParamStore {
            uid: NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
            index: self.index.clone(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            uid: NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    /// Registers a parameter. Names must be unique within a store.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param { name, value });
        ParamId(id)
    }

    pub fn normal(&mut self, name: impl Into<String>, shape: &[usize], std: f64, rng: &mut impl Rng) -> ParamId {
        let dist = Normal::new(0.0, std).expect("finite std");
        let t = Tensor::from_fn(shape, |_| T::c(dist.sample(rng)));
        self.add(name, t)
    }

    pub fn constant(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::full(shape, T::c(value)))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Overwrites every parameter from `other`, matched by name and shape.
    pub fn load_from(&mut self, other: &[Param<T>]) -> Result<()> {
        let mut seen = vec![false; self.params.len()];
        for p in other {
            let Some(&i) = self.index.get(&p.name) else {
                return Err(Error::Invalid(format!("unexpected parameter {}", p.name)));
            };
            if self.params[i].value.shape() != p.value.shape() {
                return Err(Error::Invalid(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    p.name,
                    p.value.shape(),
                    self.params[i].value.shape()
                )));
            }
            self.params[i].value = p.value.clone();
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!("missing parameter {}", self.params[i].name)));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.add(p.name.clone(), p.value.cast());
        }
        out
    }

    pub fn bitwise_eq(&self, other: &ParamStore<T>) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.value.shape() == b.value.shape()
                    && a.value
                        .data()
                        .iter()
                        .zip(b.value.data())
                        .all(|(x, y)| x.to_bits_u64() == y.to_bits_u64())
            })
    }
}

trait Bits {
    fn to_bits_u64(&self) -> u64;
}

impl<T: Scalar> Bits for T {
    fn to_bits_u64(&self) -> u64 {
        // Exact for both f32 and f64: the widening conversion is injective.
        self.f64().to_bits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_are_indexed_in_order() {
        let mut s = ParamStore::<f32>::new();
        let a = s.constant("a", &[2], 1.0);
        let b = s.constant("b", &[3], 0.0);
        assert_eq!(s.id("a"), Some(a));
        assert_eq!(s.id("b"), Some(b));
        assert_eq!(s.num_scalars(), 5);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let mk = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut s = ParamStore::<f64>::new();
            s.normal("w", &[4, 4], 0.02, &mut rng);
            s
        };
        assert!(mk().bitwise_eq(&mk()));
    }

    #[test]
    fn load_rejects_missing_and_misshaped() {
        let mut s = ParamStore::<f32>::new();
        s.constant("w", &[2], 0.0);
        s.constant("b", &[1], 0.0);
        let src = vec![Param {
            name: "w".into(),
            value: Tensor::full(&[2], 1.0),
        }];
        assert!(s.load_from(&src).is_err());
        let bad = vec![Param {
            name: "w".into(),
            value: Tensor::full(&[3], 1.0),
        }];
        assert!(s.load_from(&bad).is_err());
    }
}

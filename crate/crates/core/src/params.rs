//! Flat, named parameter storage.
//!
//! All trainable parameters live in one contiguous `Vec<f64>` with a layout
//! table mapping names to (offset, shape). A flat layout keeps optimizers,
//! checkpointing and finite-difference verification trivial: gradients are
//! plain vectors aligned with the parameter vector.

use std::collections::BTreeMap;

use ndarray::{ArrayD, ArrayViewD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph, Tid};

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// How a tensor is filled at registration time.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Gaussian with the given standard deviation.
    Normal(f64),
}

#[derive(Debug, Clone, Default)]
pub struct ParamVec {
    entries: Vec<ParamEntry>,
    index: BTreeMap<String, usize>,
    data: Vec<f64>,
}

impl ParamVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a named tensor, filling it from `init` using `rng`.
    pub fn register(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut impl Rng) {
        assert!(
            !self.index.contains_key(name),
            "parameter registered twice: {name}"
        );
        let len: usize = shape.iter().product();
        let offset = self.data.len();
        match init {
            Init::Zeros => self.data.extend(std::iter::repeat(0.0).take(len)),
            Init::Ones => self.data.extend(std::iter::repeat(1.0).take(len)),
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("valid std");
                self.data.extend((0..len).map(|_| dist.sample(rng)));
            }
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            len,
        });
    }

    /// Register a named tensor with explicit contents (checkpoint loading,
    /// parameter-set merging).
    pub fn register_array(&mut self, name: &str, value: &ArrayD<f64>) {
        assert!(
            !self.index.contains_key(name),
            "parameter registered twice: {name}"
        );
        let offset = self.data.len();
        self.data.extend(value.iter().copied());
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: value.shape().to_vec(),
            offset,
            len: value.len(),
        });
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    fn entry(&self, name: &str) -> Result<&ParamEntry> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| Error::config(format!("unknown parameter '{name}'")))
    }

    pub fn view(&self, name: &str) -> Result<ArrayViewD<'_, f64>> {
        let e = self.entry(name)?;
        Ok(ArrayViewD::from_shape(IxDyn(&e.shape), &self.data[e.offset..e.offset + e.len])
            .expect("layout is consistent"))
    }

    pub fn array(&self, name: &str) -> Result<ArrayD<f64>> {
        Ok(self.view(name)?.to_owned())
    }

    pub fn set(&mut self, name: &str, value: &ArrayD<f64>) -> Result<()> {
        let e = self.entry(name)?.clone();
        if e.shape != value.shape() {
            return Err(Error::config(format!(
                "parameter '{name}' has shape {:?}, got {:?}",
                e.shape,
                value.shape()
            )));
        }
        for (dst, src) in self.data[e.offset..e.offset + e.len].iter_mut().zip(value.iter()) {
            *dst = *src;
        }
        Ok(())
    }

    /// Slice of the flat vector backing one named tensor.
    pub fn slice(&self, name: &str) -> Result<&[f64]> {
        let e = self.entry(name)?;
        Ok(&self.data[e.offset..e.offset + e.len])
    }

    /// Create one graph input leaf per entry, in registration order.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let mut map = BTreeMap::new();
        let mut order = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let arr = ArrayViewD::from_shape(IxDyn(&e.shape), &self.data[e.offset..e.offset + e.len])
                .expect("layout is consistent")
                .to_owned();
            let tid = g.input(arr);
            map.insert(e.name.clone(), tid);
            order.push(tid);
        }
        Bound { map, order }
    }

    /// Collect gradients from a backward pass into a flat vector aligned
    /// with this parameter vector.
    pub fn flat_grad(&self, grads: &Gradients, bound: &Bound) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for (e, &tid) in self.entries.iter().zip(&bound.order) {
            if let Some(g) = grads.try_get(tid) {
                for (dst, src) in out[e.offset..e.offset + e.len].iter_mut().zip(g.iter()) {
                    *dst = *src;
                }
            }
        }
        out
    }

    /// True if any parameter whose name starts with `prefix` differs.
    pub fn prefix_equal(&self, other: &ParamVec, prefix: &str) -> bool {
        for e in &self.entries {
            if !e.name.starts_with(prefix) {
                continue;
            }
            match other.entry(&e.name) {
                Ok(oe) if oe.shape == e.shape => {
                    let a = &self.data[e.offset..e.offset + e.len];
                    let b = &other.data[oe.offset..oe.offset + oe.len];
                    if a.iter().zip(b).any(|(x, y)| x.to_bits() != y.to_bits()) {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }

    /// Copy every parameter under `prefix` from `src` into `self`.
    pub fn copy_prefix_from(&mut self, src: &ParamVec, prefix: &str) -> Result<()> {
        let names: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.name.starts_with(prefix))
            .map(|e| e.name.clone())
            .collect();
        for name in names {
            let value = src.array(&name)?;
            self.set(&name, &value)?;
        }
        Ok(())
    }
}

/// Graph leaves for every entry of a [`ParamVec`].
pub struct Bound {
    map: BTreeMap<String, Tid>,
    order: Vec<Tid>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Tid {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("parameter not bound: {name}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn register_and_read_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamVec::new();
        p.register("a.w", &[2, 3], Init::Normal(0.02), &mut rng);
        p.register("a.b", &[3], Init::Zeros, &mut rng);
        p.register("ln.g", &[3], Init::Ones, &mut rng);

        assert_eq!(p.len(), 6 + 3 + 3);
        assert_eq!(p.view("a.w").unwrap().shape(), &[2, 3]);
        assert!(p.slice("a.b").unwrap().iter().all(|&x| x == 0.0));
        assert!(p.slice("ln.g").unwrap().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn same_seed_same_init() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut p = ParamVec::new();
            p.register("w", &[4, 4], Init::Normal(0.1), &mut rng);
            p
        };
        assert_eq!(build().data(), build().data());
    }

    #[test]
    fn bind_and_flat_grad_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamVec::new();
        p.register("w", &[2, 2], Init::Normal(0.5), &mut rng);
        p.register("b", &[2], Init::Normal(0.5), &mut rng);

        let mut g = Graph::new();
        let bound = p.bind(&mut g);
        let x = g.input2(ndarray::arr2(&[[1.0, 2.0]]));
        let y = crate::graph::linear(&mut g, x, bound.get("w"), Some(bound.get("b")));
        let loss = g.sum_all(y);
        let grads = g.backward(loss);
        let flat = p.flat_grad(&grads, &bound);

        // d(sum(xW+b))/dW = x broadcast over columns; d/db = 1.
        assert_eq!(flat.len(), 6);
        assert_eq!(&flat[0..4], &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(&flat[4..6], &[1.0, 1.0]);
    }

    #[test]
    fn prefix_helpers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = ParamVec::new();
        a.register("enc.w", &[2], Init::Normal(1.0), &mut rng);
        a.register("dec.w", &[2], Init::Normal(1.0), &mut rng);
        let mut b = a.clone();
        assert!(a.prefix_equal(&b, "enc."));
        b.data_mut()[0] += 1.0;
        assert!(!a.prefix_equal(&b, "enc."));
        b.copy_prefix_from(&a, "enc.").unwrap();
        assert!(a.prefix_equal(&b, "enc."));
    }
}

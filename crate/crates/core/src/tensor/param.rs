use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Element, Tape, Tensor, Var};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"CCPC";
const CHECKPOINT_VERSION: u32 = 1;

/// A named trainable tensor with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Parameter<T: Element = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Element> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Ordered collection of parameters with unique names.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Element = f32> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Registers a parameter and returns its index.
    ///
    /// Panics on a duplicate name; parameter names are fixed by model
    /// construction code, so a duplicate is a programming error.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let idx = self.params.len();
        self.by_name.insert(name.clone(), idx);
        self.params.push(Parameter::new(name, value));
        idx
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Parameter<T> {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter<T> {
        &mut self.params[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Puts every parameter on `tape` as a leaf, in store order.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Vec<Var<'t, T>> {
        self.params.iter().map(|p| tape.var(p.value.clone())).collect()
    }

    /// Differentiates `loss` with respect to the bound parameters and adds
    /// the result into each gradient accumulator.
    pub fn accumulate_grad<'t>(
        &mut self,
        tape: &'t Tape<T>,
        loss: Var<'t, T>,
        bound: &[Var<'t, T>],
    ) -> Result<()> {
        if bound.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} bound variables for {} parameters",
                bound.len(),
                self.params.len()
            )));
        }
        let grads = tape.grad(loss, bound)?;
        self.accumulate_values(&grads)
    }

    /// Adds already computed gradients, one per parameter in store order.
    pub fn accumulate_values(&mut self, grads: &[Var<'_, T>]) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        for (p, g) in self.params.iter_mut().zip(grads) {
            p.grad = p.grad.add(&g.value())?;
        }
        Ok(())
    }

    /// Copies values from `other` for every parameter name both stores share.
    /// Returns the number of parameters copied.
    pub fn copy_matching(&mut self, other: &ParamStore<T>) -> Result<usize> {
        let mut copied = 0;
        for p in &mut self.params {
            if let Some(src) = other.index_of(&p.name).map(|i| &other.params[i]) {
                if src.value.shape() != p.value.shape() {
                    return Err(Error::Dimension {
                        op: "copy_matching",
                        lhs: p.value.shape().to_vec(),
                        rhs: src.value.shape().to_vec(),
                    });
                }
                p.value = src.value.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.add(p.name.clone(), p.value.cast());
        }
        out
    }
}

/// Writes parameters as `CCPC`, version, then one record per parameter:
/// name length, name bytes, rank, dims, little-endian `f32` values.
pub fn save_checkpoint<T: Element>(path: &Path, store: &ParamStore<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + store.num_scalars() * 4);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for p in store.iter() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in p.value.data() {
            buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Element>(path: &Path) -> Result<ParamStore<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::malformed(path, "bad magic"));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::malformed(path, format!("unsupported version {version}")));
    }
    let mut store = ParamStore::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::malformed(path, "parameter name is not utf-8"))?
            .to_string();
        let rank = cur.u32()? as usize;
        let shape = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = cur.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        if store.index_of(&name).is_some() {
            return Err(Error::malformed(path, format!("duplicate parameter {name}")));
        }
        store.add(name, Tensor::new(shape, data)?);
    }
    Ok(store)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::malformed(self.path, "truncated record"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ccpc");
        let mut store = ParamStore::<f32>::new();
        store.add("a.weight", Tensor::new([2, 3], vec![1., -2., 3.5, 0., 1e-7, 9.]).unwrap());
        store.add("a.bias", Tensor::new([3], vec![0.25, 0.5, 0.75]).unwrap());
        store.add("v", Tensor::scalar(-1.0));
        save_checkpoint(&path, &store).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"CCPC");
        let back: ParamStore<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in store.iter().zip(back.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn checkpoint_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ccpc");
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::ones([4]));
        save_checkpoint(&path, &store).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 2);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Malformed { .. })));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Malformed { .. })));
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_panic() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::ones([1]));
        store.add("w", Tensor::ones([1]));
    }
}

use std::collections::HashMap;
use std::fmt::Write as _;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Magic header of the parameter file format.
pub const PARAM_MAGIC: &str = "INCG1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

/// Owns every parameter of a model. Names are unique.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        self.insert(name.into(), tensor, true)
    }

    pub fn add_frozen(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        self.insert(name.into(), tensor, false)
    }

    fn insert(&mut self, name: String, tensor: Tensor, trainable: bool) -> Result<ParamId> {
        if self.by_name.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.params.len());
        let grad = vec![0.0; tensor.len()];
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            tensor,
            grad,
            trainable,
        });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
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

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Total number of scalar values across all parameters.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Copies values from `other` (same layout) into self.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.params {
            let src = other
                .id(&p.name)
                .map(|id| other.get(id))
                .ok_or_else(|| Error::Format(format!("missing parameter `{}`", p.name)))?;
            if src.tensor.shape() != p.tensor.shape() {
                return Err(Error::dim("load", p.tensor.shape(), src.tensor.shape()));
            }
            p.tensor = src.tensor.clone();
        }
        Ok(())
    }

    /// Text serialization: magic line, count line, then one
    /// `name<TAB>d0,d1,..<TAB>v0 v1 ..` record per parameter.
    /// Values use Rust's shortest round-trip float formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{PARAM_MAGIC}").unwrap();
        writeln!(out, "{}", self.params.len()).unwrap();
        for p in &self.params {
            let shape: Vec<String> = p.tensor.shape().iter().map(|d| d.to_string()).collect();
            out.push_str(&p.name);
            out.push('\t');
            out.push_str(&shape.join(","));
            out.push('\t');
            for (i, v) in p.tensor.data().iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text format. Every parameter is marked trainable.
    pub fn from_text(text: &str) -> Result<ParamStore> {
        let mut lines = text.lines();
        if lines.next() != Some(PARAM_MAGIC) {
            return Err(Error::Format(format!("missing `{PARAM_MAGIC}` header")));
        }
        let count: usize = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| Error::Format("bad parameter count".into()))?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format("truncated parameter file".into()))?;
            let mut fields = line.split('\t');
            let (name, shape, values) = match (fields.next(), fields.next(), fields.next()) {
                (Some(n), Some(s), Some(v)) => (n, s, v),
                _ => return Err(Error::Format(format!("bad record `{line}`"))),
            };
            let shape: Vec<usize> = shape
                .split(',')
                .map(|d| d.parse().map_err(|_| Error::Format(format!("bad shape `{shape}`"))))
                .collect::<Result<_>>()?;
            let values: Vec<f64> = values
                .split(' ')
                .map(|v| v.parse().map_err(|_| Error::Format(format!("bad value `{v}`"))))
                .collect::<Result<_>>()?;
            store.add(name, Tensor::new(shape, values)?)?;
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(1.0)).unwrap();
        assert!(s.add("w", Tensor::scalar(2.0)).is_err());
    }

    #[test]
    fn trainable_params_allocate_grad() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::zeros(&[3, 2])).unwrap();
        assert_eq!(s.get(id).grad.len(), 6);
    }

    #[test]
    fn rejects_missing_magic() {
        assert!(ParamStore::from_text("INCG0\n0\n").is_err());
    }

    proptest! {
        #[test]
        fn text_format_round_trips(values in proptest::collection::vec(-1e6f64..1e6, 1..20)) {
            let mut s = ParamStore::new();
            let n = values.len();
            s.add("layer.w", Tensor::new(vec![n], values.clone()).unwrap()).unwrap();
            s.add("b", Tensor::scalar(values[0] * 1e-9)).unwrap();
            let text = s.to_text();
            let back = ParamStore::from_text(&text).unwrap();
            prop_assert_eq!(back.to_text(), text);
            prop_assert_eq!(back.value(back.id("layer.w").unwrap()).data(), &values[..]);
        }
    }
}

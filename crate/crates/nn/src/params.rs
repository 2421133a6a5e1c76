use std::collections::BTreeMap;

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Param<F> {
    pub name: String,
    pub tensor: Tensor<F>,
    pub(crate) first_moment: Option<Vec<F>>,
    pub(crate) second_moment: Option<Vec<F>>,
}

/// All learnable weights of a model, addressed by path, plus optimizer state.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore<F> {
    params: Vec<Param<F>>,
    index: BTreeMap<String, usize>,
    pub(crate) step: u64,
}

/// Handle to a parameter inside a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl<F: Scalar> ParameterStore<F> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::Usage(format!("duplicate parameter {name}")));
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            tensor,
            first_moment: None,
            second_moment: None,
        });
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.id(name).map(|id| &self.params[id.0].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        let id = self.id(name)?;
        Some(&mut self.params[id.0].tensor)
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.params[id.0].tensor
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<F>> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Number of optimizer updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments_initialized(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.first_moment.is_some() && p.second_moment.is_some())
            && !self.params.is_empty()
    }

    /// First and second moment buffers of one parameter, when the optimizer has run.
    pub fn moments(&self, id: ParamId) -> Option<(&[F], &[F])> {
        let p = &self.params[id.0];
        Some((p.first_moment.as_deref()?, p.second_moment.as_deref()?))
    }

    /// Adds a backward pass's gradients into the stored gradient buffers.
    /// Parameters the loss does not reach end up with an all-zero gradient.
    pub fn accumulate(&mut self, grads: Gradients<F>) -> Result<()> {
        if grads.per_param.len() != self.params.len() {
            return Err(NnError::Usage(format!(
                "gradients for {} parameters applied to a store of {}",
                grads.per_param.len(),
                self.params.len()
            )));
        }
        for (param, grad) in self.params.iter_mut().zip(grads.per_param) {
            let numel = param.tensor.numel();
            match (param.tensor.grad_mut(), grad) {
                (Some(acc), Some(g)) => {
                    for (a, b) in acc.iter_mut().zip(g) {
                        *a += b;
                    }
                }
                (Some(_), None) => {}
                (None, Some(g)) => param.tensor.set_grad(g)?,
                (None, None) => param.tensor.set_grad(vec![F::zero(); numel])?,
            }
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.tensor.clear_grad();
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter_map(|p| p.tensor.grad())
            .flat_map(|g| g.iter())
            .map(|g| g.f64() * g.f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn cast<G: Scalar>(&self) -> ParameterStore<G> {
        let cast_buf = |b: &Option<Vec<F>>| {
            b.as_ref()
                .map(|v| v.iter().map(|x| G::of(x.f64())).collect())
        };
        ParameterStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                    first_moment: cast_buf(&p.first_moment),
                    second_moment: cast_buf(&p.second_moment),
                })
                .collect(),
            index: self.index.clone(),
            step: self.step,
        }
    }
}

/// Gradients produced by one backward pass, indexed like the store's parameters.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub(crate) per_param: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, id: ParamId) -> Option<&[F]> {
        self.per_param.get(id.0).and_then(|g| g.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_parameters_get_zero_gradient() {
        let mut store = ParameterStore::<f64>::new();
        store.insert("a", Tensor::zeros(vec![2])).unwrap();
        store.insert("b", Tensor::zeros(vec![3])).unwrap();
        let grads = Gradients {
            per_param: vec![Some(vec![1.0, 2.0]), None],
        };
        store.accumulate(grads).unwrap();
        assert_eq!(store.get("a").unwrap().grad().unwrap(), &[1.0, 2.0]);
        assert_eq!(store.get("b").unwrap().grad().unwrap(), &[0.0; 3]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParameterStore::<f32>::new();
        store.insert("w", Tensor::zeros(vec![1])).unwrap();
        assert!(store.insert("w", Tensor::zeros(vec![1])).is_err());
    }
}

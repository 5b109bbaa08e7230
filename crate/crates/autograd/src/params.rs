use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Named trainable tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParameterSet<T: Real = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Option<Tensor<T>>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParameterSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("parameter {name:?} registered twice")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        self.grads.push(None);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.position(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let i = self.position(name)?;
        Ok(&mut self.values[i])
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn grad(&self, name: &str) -> Result<Option<&Tensor<T>>> {
        self.position(name).map(|i| self.grads[i].as_ref())
    }

    pub fn has_grads(&self) -> bool {
        self.grads.iter().all(Option::is_some)
    }

    /// Stores one gradient per parameter, in registration order.
    pub fn set_grads(&mut self, grads: Vec<Tensor<T>>) -> Result<()> {
        if grads.len() != self.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != self.values[i].shape() {
                return Err(Error::Shape(format!(
                    "gradient {:?} for parameter {:?} of shape {:?}",
                    g.shape(),
                    self.names[i],
                    self.values[i].shape()
                )));
            }
        }
        self.grads = grads.into_iter().map(Some).collect();
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub(crate) fn take_grads(&mut self) -> Result<Vec<Tensor<T>>> {
        if !self.has_grads() {
            return Err(Error::Contract("optimizer step without gradients".into()));
        }
        Ok(self.grads.iter_mut().map(|g| g.take().expect("checked")).collect())
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if self.names != other.names
            || self.values.iter().zip(&other.values).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Contract("parameter sets have different layouts".into()));
        }
        Ok(())
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Self, tau: T) -> Result<()> {
        self.check_layout(source)?;
        for (dst, src) in self.values.iter_mut().zip(&source.values) {
            for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d = tau * s + (T::one() - tau) * *d;
            }
        }
        Ok(())
    }

    pub fn copy_from(&mut self, source: &Self) -> Result<()> {
        self.check_layout(source)?;
        self.values.clone_from(&source.values);
        Ok(())
    }

    /// Same names and values at another precision, without gradients.
    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        let mut out = ParameterSet::new();
        for (name, value) in self.iter() {
            out.insert(name, value.cast()).expect("names are unique");
        }
        out
    }

    /// Places every parameter on `tape` as a leaf.
    pub fn bind<'t, 'p>(&'p self, tape: &'t Tape<T>) -> Bound<'t, 'p, T> {
        Bound {
            set: self,
            vars: self.values.iter().map(|v| tape.leaf(v.clone())).collect(),
        }
    }
}

/// Parameters of one set as variables on one tape.
pub struct Bound<'t, 'p, T: Real> {
    set: &'p ParameterSet<T>,
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Real> Bound<'t, '_, T> {
    pub fn var(&self, name: &str) -> Result<Var<'t, T>> {
        self.set.position(name).map(|i| self.vars[i])
    }

    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }

    /// Gradients for every parameter in order, zero where unreachable.
    pub fn gradients(&self, grads: &Gradients<T>) -> Vec<Tensor<T>> {
        self.vars.iter().map(|&v| grads.get(v)).collect()
    }
}

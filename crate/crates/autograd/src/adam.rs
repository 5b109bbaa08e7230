use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const DEFAULT_LR: f64 = 2.5e-4;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T: Real = f32> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParameterSet<T>, lr: f64) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    /// Restores accumulators saved with [`Adam::moments`].
    pub fn restore(&mut self, step: u64, m: Vec<Tensor<T>>, v: Vec<Tensor<T>>) -> Result<()> {
        let fits = |a: &[Tensor<T>], b: &[Tensor<T>]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape())
        };
        if !fits(&m, &self.m) || !fits(&v, &self.v) {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// One update from the stored gradients, which are cleared afterwards.
    pub fn step(&mut self, params: &mut ParameterSet<T>) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Contract("optimizer built for another parameter set".into()));
        }
        let grads = params.take_grads()?;
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let p = params.values_mut()[i].data_mut();
            for j in 0..g.len() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (T::one() - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (T::one() - self.beta2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

use hiertag_tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Learning-rate group of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    Rest,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Rest => "rest",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Zeros,
    Ones,
    Normal(f64),
    Glorot { fan_in: usize, fan_out: usize },
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub tensor: Tensor,
    /// Whether a gradient reached this parameter since the last reset.
    pub touched: bool,
}

/// Named parameters in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub(crate) fn register(
        &mut self,
        name: String,
        shape: Vec<usize>,
        init: Init,
        rng: &mut impl Rng,
    ) -> usize {
        assert!(self.index_of(&name).is_none(), "parameter {name} registered twice");
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal(std) => {
                let d = Normal::new(0.0, std).expect("valid std");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Init::Glorot { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let d = Uniform::new_inclusive(-a, a).expect("valid range");
                (0..n).map(|_| d.sample(rng)).collect()
            }
        };
        let group = if name.starts_with("encoder.") {
            ParamGroup::Encoder
        } else {
            ParamGroup::Rest
        };
        let tensor = Tensor::new(shape, data).expect("shape matches data").with_grad();
        self.params.push(Param {
            name,
            group,
            tensor,
            touched: false,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn by_index(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn by_index_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Clears gradients and touched flags.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.tensor.zero_grad();
            p.touched = false;
        }
    }

    /// Adds `scale · grad` into parameter `i` and marks it touched.
    pub fn accumulate(&mut self, i: usize, grad: &[f64], scale: f64) -> Result<()> {
        let p = &mut self.params[i];
        let acc = p
            .tensor
            .grad_mut()
            .ok_or_else(|| Error::Contract(format!("{} does not track gradients", p.name)))?;
        if acc.len() != grad.len() {
            return Err(Error::Contract(format!("gradient size mismatch for {}", p.name)));
        }
        for (a, g) in acc.iter_mut().zip(grad) {
            *a += scale * g;
        }
        p.touched = true;
        Ok(())
    }

    /// L2 norm over every gradient.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter_map(|p| p.tensor.grad())
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

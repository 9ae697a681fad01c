//! Parameter storage, convolution layers and the Adam optimizer.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::autodiff::{Gradients, Graph, Tensor, Var};
use crate::math::sqrt;

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Places every tensor on the tape as a leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors.iter().map(|t| g.leaf(t.clone())).collect()
    }

    pub fn grads(&self, grads: &Gradients, vars: &[Var]) -> Vec<Tensor> {
        self.tensors.iter().zip(vars).map(|(t, &v)| grads.get_or_zeros(v, t)).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// A `k x k` convolution whose weights live in a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub weight: usize,
    pub bias: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    /// Registers weights drawn uniformly with variance `1 / fan_in` and zero bias.
    pub fn new<R: RngCore + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_ch * k * k) as f64;
        let bound = sqrt(3.0 / fan_in);
        let n = out_ch * in_ch * k * k;
        let w = Tensor::from_vec([out_ch, in_ch, k, k], (0..n).map(|_| rng.random_range(-bound..bound)).collect());
        let weight = params.push(alloc::format!("{name}.weight"), w);
        let bias = params.push(alloc::format!("{name}.bias"), Tensor::zeros([1, out_ch, 1, 1]));
        Self { weight, bias, stride, pad: k / 2 }
    }

    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Var {
        g.conv2d(x, vars[self.weight], vars[self.bias], self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam over a list of tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, like: &[Tensor]) -> Self {
        let zeros = || like.iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { config, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - crate::math::powf(beta1, self.t as f64);
        let bc2 = 1.0 - crate::math::powf(beta2, self.t as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                md[i] = beta1 * md[i] + (1.0 - beta1) * gd[i];
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gd[i] * gd[i];
                let mh = md[i] / bc1;
                let vh = vd[i] / bc2;
                pd[i] -= lr * mh / (sqrt(vh) + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = alloc::vec![Tensor::from_vec([1, 1, 1, 2], alloc::vec![3.0, -2.0])];
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() }, &p);
        for _ in 0..500 {
            let g = Tensor::from_vec([1, 1, 1, 2], p[0].data().iter().map(|x| 2.0 * (x - 1.0)).collect());
            opt.step(&mut p, &[g]);
        }
        for v in p[0].data() {
            assert!((v - 1.0).abs() < 1e-2, "{v}");
        }
    }

    #[test]
    fn conv_layer_shapes() {
        let mut ps = ParamSet::new();
        let c = Conv::new(&mut ps, "c", 3, 4, 3, 2, &mut seeded(0));
        assert_eq!(ps.num_scalars(), 4 * 3 * 9 + 4);
        let mut g = Graph::new();
        let vars = ps.bind(&mut g);
        let x = g.leaf(Tensor::zeros([2, 3, 8, 8]));
        let y = c.forward(&mut g, &vars, x);
        assert_eq!(g.value(y).shape(), [2, 4, 4, 4]);
    }
}

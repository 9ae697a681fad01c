use alloc::vec::Vec;

use rand::RngCore;

use crate::autodiff::{Activation, Graph, Tensor, Var};
use crate::nn::{Conv, ParamSet};
use crate::{Error, Result};

/// `alpha` is kept inside `(ALPHA_EPS, 1 - ALPHA_EPS)`.
pub const ALPHA_EPS: f64 = 1e-3;

/// Network shapes; a checkpoint only loads into a model with an identical config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchConfig {
    /// Number of 2x downsampling stages in the U-net.
    pub depth: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub disc_layers: usize,
    pub disc_channels: usize,
    pub activation: Activation,
    /// Add the head to the input's logit instead of replacing it. The head
    /// starts at zero, so an untrained generator is the identity map.
    pub residual: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            base_channels: 8,
            max_channels: 64,
            disc_layers: 3,
            disc_channels: 8,
            activation: Activation::LeakyRelu(0.2),
            residual: false,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 || self.disc_layers == 0 || self.disc_channels == 0 {
            return Err(Error::Config("gan depth, channels and layers must be positive".into()));
        }
        if self.max_channels < self.base_channels {
            return Err(Error::Config("gan.max_channels must be >= gan.base_channels".into()));
        }
        Ok(())
    }

    fn gen_channels(&self, level: usize) -> usize {
        (self.base_channels << level.min(16)).min(self.max_channels)
    }

    fn disc_channels_at(&self, layer: usize) -> usize {
        (self.disc_channels << layer.min(16)).min(self.max_channels)
    }
}

/// U-net encoder-decoder with skip connections and a sigmoid output.
///
/// Level 0 runs at full resolution; each of the `depth` encoder stages halves
/// the resolution with a stride-2 conv. Each decoder stage upsamples 2x,
/// concatenates the matching encoder activation and convolves.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub params: ParamSet,
    stem: Conv,
    down: Vec<Conv>,
    up: Vec<Conv>,
    head: Conv,
    activation: Activation,
    depth: usize,
    residual: bool,
}

/// Input values are clamped to `[RESIDUAL_EPS, 1 - RESIDUAL_EPS]` before the logit.
pub const RESIDUAL_EPS: f64 = 1e-3;

impl Generator {
    pub fn new<R: RngCore + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let stem = Conv::new(&mut params, "gen.stem", 3, arch.gen_channels(0), 3, 1, rng);
        let down = (1..=arch.depth)
            .map(|l| {
                Conv::new(
                    &mut params,
                    &alloc::format!("gen.down{l}"),
                    arch.gen_channels(l - 1),
                    arch.gen_channels(l),
                    3,
                    2,
                    rng,
                )
            })
            .collect();
        // up[l] produces level l from level l + 1 and the level-l skip.
        let up = (0..arch.depth)
            .map(|l| {
                Conv::new(
                    &mut params,
                    &alloc::format!("gen.up{l}"),
                    arch.gen_channels(l + 1) + arch.gen_channels(l),
                    arch.gen_channels(l),
                    3,
                    1,
                    rng,
                )
            })
            .collect();
        let head = Conv::new(&mut params, "gen.head", arch.gen_channels(0), 3, 1, 1, rng);
        if arch.residual {
            params.tensors[head.weight].data_mut().fill(0.0);
            params.tensors[head.bias].data_mut().fill(0.0);
        }
        Self { params, stem, down, up, head, activation: arch.activation, depth: arch.depth, residual: arch.residual }
    }

    pub fn check_input(&self, shape: [usize; 4]) -> Result<()> {
        let m = 1usize << self.depth;
        if shape[1] != 3 || !shape[2].is_multiple_of(m) || !shape[3].is_multiple_of(m) || shape[2] == 0 || shape[3] == 0
        {
            return Err(Error::DimensionMismatch(alloc::format!(
                "generator input {:?} must be 3-channel with sides divisible by {m}",
                shape
            )));
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Var {
        let act = self.activation;
        let h = self.stem.forward(g, vars, x);
        let mut skips = alloc::vec![g.act(h, act)];
        for conv in &self.down {
            let prev = *skips.last().unwrap();
            let h = conv.forward(g, vars, prev);
            skips.push(g.act(h, act));
        }
        let mut cur = skips.pop().unwrap();
        for l in (0..self.depth).rev() {
            let up = g.upsample2x(cur);
            let cat = g.concat_channels(up, skips[l]);
            let h = self.up[l].forward(g, vars, cat);
            cur = g.act(h, act);
        }
        let mut out = self.head.forward(g, vars, cur);
        if self.residual {
            let mut neg_logit = g.value(x).clone();
            for v in neg_logit.data_mut() {
                let p = v.clamp(RESIDUAL_EPS, 1.0 - RESIDUAL_EPS);
                *v = crate::math::ln((1.0 - p) / p);
            }
            out = g.sub_const(out, neg_logit);
        }
        g.act(out, Activation::Sigmoid)
    }

    /// Evaluates on a detached batch `[n, 3, h, w]` with values in `[0, 1]`.
    pub fn generate(&self, day: &Tensor) -> Result<Tensor> {
        self.check_input(day.shape())?;
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g);
        let x = g.leaf(day.clone());
        let y = self.forward(&mut g, &vars, x);
        Ok(g.value(y).clone())
    }

    /// Weight and bias of the output convolution.
    pub fn head_param_indices(&self) -> (usize, usize) {
        (self.head.weight, self.head.bias)
    }
}

/// Strided conv stack, global average pool, linear head, sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub params: ParamSet,
    layers: Vec<Conv>,
    head: Conv,
    activation: Activation,
}

impl Discriminator {
    pub fn new<R: RngCore + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let mut in_ch = 3;
        let layers = (0..arch.disc_layers)
            .map(|l| {
                let out = arch.disc_channels_at(l);
                let c = Conv::new(&mut params, &alloc::format!("disc.conv{l}"), in_ch, out, 3, 2, rng);
                in_ch = out;
                c
            })
            .collect();
        let head = Conv::new(&mut params, "disc.head", in_ch, 1, 1, 1, rng);
        Self { params, layers, head, activation: arch.activation }
    }

    /// Probability per batch item, shape `[n, 1, 1, 1]`.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Var {
        let mut h = x;
        for conv in &self.layers {
            let y = conv.forward(g, vars, h);
            h = g.act(y, self.activation);
        }
        let pooled = g.mean_spatial(h);
        let logit = self.head.forward(g, vars, pooled);
        g.act(logit, Activation::Sigmoid)
    }

    pub fn probabilities(&self, x: &Tensor) -> Vec<f64> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g);
        let xv = g.leaf(x.clone());
        let p = self.forward(&mut g, &vars, xv);
        g.value(p).data().to_vec()
    }
}

/// Generator, discriminator and the trainable blend weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub arch: ArchConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub alpha: f64,
}

impl GanModel {
    pub fn new<R: RngCore + ?Sized>(arch: ArchConfig, alpha: f64, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let generator = Generator::new(&arch, rng);
        let discriminator = Discriminator::new(&arch, rng);
        Ok(Self { arch, generator, discriminator, alpha: clamp_alpha(alpha) })
    }

    /// Replaces parameters after checking names and shapes against this architecture.
    pub fn load_params(&mut self, generator: ParamSet, discriminator: ParamSet, alpha: f64) -> Result<()> {
        fn check(have: &ParamSet, got: &ParamSet, which: &str) -> Result<()> {
            let same =
                have.names == got.names && have.tensors.iter().zip(&got.tensors).all(|(a, b)| a.shape() == b.shape());
            if !same || have.len() != got.len() {
                return Err(Error::DimensionMismatch(alloc::format!(
                    "{which} parameters do not match the architecture config"
                )));
            }
            Ok(())
        }
        check(&self.generator.params, &generator, "generator")?;
        check(&self.discriminator.params, &discriminator, "discriminator")?;
        self.generator.params = generator;
        self.discriminator.params = discriminator;
        self.alpha = clamp_alpha(alpha);
        Ok(())
    }
}

pub(crate) fn clamp_alpha(a: f64) -> f64 {
    a.clamp(ALPHA_EPS, 1.0 - ALPHA_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_image(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random::<f64>()).collect())
    }

    #[test]
    fn generator_preserves_shape_and_bounds() {
        let arch = ArchConfig { base_channels: 4, max_channels: 16, ..ArchConfig::default() };
        let model = GanModel::new(arch, 0.5, &mut seeded(1)).unwrap();
        let out = model.generator.generate(&random_image([2, 3, 32, 48], 2)).unwrap();
        assert_eq!(out.shape(), [2, 3, 32, 48]);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn generator_full_size_shape() {
        let arch = ArchConfig { base_channels: 2, max_channels: 4, ..ArchConfig::default() };
        let model = GanModel::new(arch, 0.5, &mut seeded(1)).unwrap();
        let out = model.generator.generate(&random_image([1, 3, 256, 256], 3)).unwrap();
        assert_eq!(out.shape(), [1, 3, 256, 256]);
    }

    #[test]
    fn generator_rejects_indivisible_input() {
        let model = GanModel::new(ArchConfig::default(), 0.5, &mut seeded(1)).unwrap();
        assert!(matches!(model.generator.generate(&random_image([1, 3, 24, 32], 0)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn zero_head_gives_constant_output() {
        let arch = ArchConfig { depth: 1, base_channels: 2, max_channels: 4, ..ArchConfig::default() };
        let mut model = GanModel::new(arch, 0.5, &mut seeded(4)).unwrap();
        let (w, b) = model.generator.head_param_indices();
        for i in [w, b] {
            model.generator.params.tensors[i].data_mut().fill(0.0);
        }
        let out = model.generator.generate(&random_image([1, 3, 8, 8], 5)).unwrap();
        // sigmoid(0) everywhere
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn residual_generator_starts_as_identity() {
        let arch = ArchConfig { depth: 2, base_channels: 2, max_channels: 4, residual: true, ..ArchConfig::default() };
        let model = GanModel::new(arch, 0.5, &mut seeded(4)).unwrap();
        let x = random_image([2, 3, 8, 8], 9);
        let y = model.generator.generate(&x).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            let a = a.clamp(RESIDUAL_EPS, 1.0 - RESIDUAL_EPS);
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn discriminator_outputs_probabilities() {
        let model = GanModel::new(ArchConfig::default(), 0.5, &mut seeded(6)).unwrap();
        let p = model.discriminator.probabilities(&random_image([3, 3, 32, 32], 7));
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn alpha_is_clamped_and_params_checked() {
        let mut model = GanModel::new(ArchConfig::default(), 1.0, &mut seeded(8)).unwrap();
        assert_eq!(model.alpha, 1.0 - ALPHA_EPS);
        let other = GanModel::new(ArchConfig { depth: 3, ..ArchConfig::default() }, 0.5, &mut seeded(8)).unwrap();
        assert!(model.load_params(other.generator.params.clone(), other.discriminator.params.clone(), 0.5).is_err());
    }
}

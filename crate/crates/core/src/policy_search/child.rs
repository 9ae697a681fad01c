use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::RewardRecord;
use crate::autodiff::{Activation, Graph, Tensor};
use crate::detect::{evaluate_with_resampling, Detector, EvalDomain, EvalOptions, ToyDetector};
use crate::gan::image_to_tensor;
use crate::image::{AnnotatedImage, BoundingBox, RgbImage};
use crate::nn::{Adam, AdamConfig, Conv, ParamSet};
use crate::rng::substream;
use crate::transforms::policy::{apply_subpolicy, Policy, SUBPOLICIES_PER_POLICY};
use crate::{Error, Result};

/// Trains a fresh child model under an augmentation policy and scores it.
pub trait ChildTrainer {
    fn reward(&self, policy: &Policy, train: &[AnnotatedImage], val: &[AnnotatedImage], seed: u64) -> Result<f64>;
}

/// Scores `policy` with a fresh child. A diverged child yields reward 0 with the flag set.
pub fn evaluate_policy<C: ChildTrainer + ?Sized>(
    policy: &Policy,
    child: &C,
    train: &[AnnotatedImage],
    val: &[AnnotatedImage],
    seed: u64,
    epoch: usize,
) -> Result<RewardRecord> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (reward, diverged) = match child.reward(policy, train, val, seed) {
        Ok(r) if r.is_finite() => (r, false),
        Ok(_) | Err(Error::Diverged { .. }) => (0.0, true),
        Err(e) => return Err(e),
    };
    Ok(RewardRecord { policy: *policy, reward, epoch, diverged })
}

/// The pixels of `b`, resized to `size x size`.
pub fn roi_crop(img: &RgbImage, b: &BoundingBox, size: u32) -> RgbImage {
    img.crop(b.x_min, b.y_min, b.width(), b.height()).resize_nearest(size, size)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierChildConfig {
    pub crop_size: u32,
    pub channels: [usize; 2],
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub activation: Activation,
}

impl Default for ClassifierChildConfig {
    fn default() -> Self {
        Self {
            crop_size: 16,
            channels: [8, 16],
            epochs: 5,
            batch_size: 16,
            lr: 3e-3,
            activation: Activation::LeakyRelu(0.1),
        }
    }
}

/// Small convolutional classifier over ROI crops; reward is validation accuracy.
///
/// Each epoch, every training image gets one uniformly chosen sub-policy
/// before its boxes are cropped. Initialisation, batch order and
/// augmentation draw from separate streams of the seed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassifierChild {
    pub config: ClassifierChildConfig,
}

struct ClassifierNet {
    convs: [Conv; 3],
    head: Conv,
}

impl ClassifierChild {
    pub fn new(config: ClassifierChildConfig) -> Self {
        Self { config }
    }

    /// Accuracy on `val` after training on `train`, optionally under `policy`.
    pub fn score(
        &self,
        policy: Option<&Policy>,
        train: &[AnnotatedImage],
        val: &[AnnotatedImage],
        seed: u64,
    ) -> Result<f64> {
        let cfg = self.config;
        if cfg.batch_size == 0 || cfg.crop_size == 0 || cfg.channels.contains(&0) {
            return Err(Error::Config("classifier child sizes must be positive".into()));
        }
        let classes: Vec<String> = train
            .iter()
            .chain(val)
            .flat_map(|d| d.boxes.iter().map(|b| b.class_label.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let label = |b: &BoundingBox| classes.iter().position(|c| *c == b.class_label).unwrap_or(0);
        let val_crops: Vec<(Tensor, usize)> = val
            .iter()
            .flat_map(|d| d.boxes.iter().map(|b| (image_to_tensor(&roi_crop(&d.image, b, cfg.crop_size)), label(b))))
            .collect();
        if val_crops.is_empty() || classes.is_empty() {
            return Err(Error::EmptyDataset);
        }

        let (net, mut params) = self.init(classes.len(), seed);
        let mut order_rng = substream(seed, 1);
        let mut aug_rng = substream(seed, 2);
        let pool: Vec<RgbImage> =
            if policy.is_some() { train.iter().map(|d| d.image.clone()).collect() } else { Vec::new() };
        let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &params.tensors);
        let mut step = 0;
        for _ in 0..cfg.epochs {
            let mut crops: Vec<(Tensor, usize)> = Vec::new();
            for d in train {
                let aug;
                let src = match policy {
                    Some(p) => {
                        let sp = &p.sub_policies[aug_rng.random_range(0..SUBPOLICIES_PER_POLICY)];
                        aug = apply_subpolicy(d, sp, &mut aug_rng, &pool)?;
                        &aug
                    }
                    None => d,
                };
                for b in &src.boxes {
                    crops.push((image_to_tensor(&roi_crop(&src.image, b, cfg.crop_size)), label(b)));
                }
            }
            crops.shuffle(&mut order_rng);
            for chunk in crops.chunks(cfg.batch_size) {
                let x = Tensor::stack(&chunk.iter().map(|c| &c.0).collect::<Vec<_>>());
                let labels = chunk.iter().map(|c| c.1).collect();
                let mut g = Graph::new();
                let vars = params.bind(&mut g);
                let xv = g.leaf(x);
                let logits = net.forward(&mut g, &vars, xv, cfg.activation);
                let loss = g.softmax_xent(logits, labels);
                if !g.value(loss).item().is_finite() {
                    return Err(Error::Diverged { step });
                }
                let grads = g.backward(loss);
                let gs = params.grads(&grads, &vars);
                adam.step(&mut params.tensors, &gs);
                step += 1;
            }
        }
        if !params.is_finite() {
            return Err(Error::Diverged { step });
        }

        let mut correct = 0;
        for chunk in val_crops.chunks(64) {
            let x = Tensor::stack(&chunk.iter().map(|c| &c.0).collect::<Vec<_>>());
            let mut g = Graph::new();
            let vars = params.bind(&mut g);
            let xv = g.leaf(x);
            let logits = net.forward(&mut g, &vars, xv, cfg.activation);
            let out = g.value(logits);
            let k = classes.len();
            for (i, c) in chunk.iter().enumerate() {
                let row = &out.data()[i * k..(i + 1) * k];
                let pred = (0..k).fold(0, |best, j| if row[j] > row[best] { j } else { best });
                correct += usize::from(pred == c.1);
            }
        }
        Ok(correct as f64 / val_crops.len() as f64)
    }

    fn init(&self, n_classes: usize, seed: u64) -> (ClassifierNet, ParamSet) {
        let mut rng = substream(seed, 0);
        let mut p = ParamSet::new();
        let [c0, c1] = self.config.channels;
        let convs = [
            Conv::new(&mut p, "conv1", 3, c0, 3, 1, &mut rng),
            Conv::new(&mut p, "conv2", c0, c1, 3, 2, &mut rng),
            Conv::new(&mut p, "conv3", c1, c1, 3, 2, &mut rng),
        ];
        let head = Conv::new(&mut p, "head", c1, n_classes, 1, 1, &mut rng);
        (ClassifierNet { convs, head }, p)
    }
}

impl ClassifierNet {
    fn forward(
        &self,
        g: &mut Graph,
        vars: &[crate::autodiff::Var],
        x: crate::autodiff::Var,
        act: Activation,
    ) -> crate::autodiff::Var {
        let mut h = x;
        for c in &self.convs {
            let z = c.forward(g, vars, h);
            h = g.act(z, act);
        }
        let pooled = g.mean_spatial(h);
        self.head.forward(g, vars, pooled)
    }
}

impl ChildTrainer for ClassifierChild {
    fn reward(&self, policy: &Policy, train: &[AnnotatedImage], val: &[AnnotatedImage], seed: u64) -> Result<f64> {
        self.score(Some(policy), train, val, seed)
    }
}

/// Trains the toy detector on the originals plus one policy-augmented copy
/// of each image; reward is the mean of validation precision and recall
/// (an undefined ratio counts as 0).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DetectionChild {
    pub detector: ToyDetector,
    pub eval: EvalOptions,
}

impl ChildTrainer for DetectionChild {
    fn reward(&self, policy: &Policy, train: &[AnnotatedImage], val: &[AnnotatedImage], seed: u64) -> Result<f64> {
        let mut aug_rng = substream(seed, 2);
        let pool: Vec<RgbImage> = train.iter().map(|d| d.image.clone()).collect();
        let mut data = train.to_vec();
        for d in train {
            let sp = &policy.sub_policies[aug_rng.random_range(0..SUBPOLICIES_PER_POLICY)];
            data.push(apply_subpolicy(d, sp, &mut aug_rng, &pool)?);
        }
        let params = self.detector.train(&data, seed)?;
        let opts = EvalOptions { runs: 1, ..self.eval };
        let r = evaluate_with_resampling(&self.detector, &params, val, EvalDomain::All, &opts, seed)?;
        let s = r.aggregate.stats;
        Ok((s.precision.unwrap_or(0.0) + s.recall.unwrap_or(0.0)) / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::synth::{day_corpus, SceneConfig};
    use crate::transforms::policy::{OpKind, PolicyOp, SubPolicy};

    fn corpus(seed: u64, n: usize) -> Vec<AnnotatedImage> {
        day_corpus(&mut seeded(seed), &SceneConfig::default(), n, "c")
    }

    fn small() -> ClassifierChild {
        ClassifierChild::new(ClassifierChildConfig { epochs: 4, ..ClassifierChildConfig::default() })
    }

    #[test]
    fn identity_policy_matches_unaugmented_training() {
        let (train, val) = (corpus(1, 40), corpus(2, 20));
        let child = small();
        let base = child.score(None, &train, &val, 9).unwrap();
        let ident = child.reward(&Policy::identity(), &train, &val, 9).unwrap();
        assert!(ident >= base - 0.02, "{ident} vs {base}");
        assert!(base > 0.6, "signs should be learnable: {base}");
    }

    #[test]
    fn blackout_policy_falls_to_class_prior() {
        let (train, val) = (corpus(3, 40), corpus(4, 30));
        let op = PolicyOp::new(OpKind::BoxOcclusion, 10, 9).unwrap();
        let black = Policy { sub_policies: [SubPolicy::new(op, op); SUBPOLICIES_PER_POLICY] };
        let r = small().reward(&black, &train, &val, 5).unwrap();
        let mut counts = alloc::collections::BTreeMap::<&str, usize>::new();
        let mut total = 0;
        for b in val.iter().flat_map(|d| &d.boxes) {
            *counts.entry(b.class_label.as_str()).or_default() += 1;
            total += 1;
        }
        let fracs: Vec<f64> = counts.values().map(|&c| c as f64 / total as f64).collect();
        assert!(fracs.iter().any(|f| (f - r).abs() < 1e-9), "reward {r} not a class prior {fracs:?}");
    }

    #[test]
    fn same_seed_same_reward() {
        let (train, val) = (corpus(5, 12), corpus(6, 6));
        let mut rng = seeded(1);
        let space = super::super::SearchSpace::extended();
        let p = super::super::sample_policy(&super::super::ControllerState::uniform(&space), &space, &mut rng).unwrap();
        let a = evaluate_policy(&p, &small(), &train, &val, 3, 0).unwrap();
        let b = evaluate_policy(&p, &small(), &train, &val, 3, 0).unwrap();
        assert_eq!(a, b);
    }

    struct Exploding;

    impl ChildTrainer for Exploding {
        fn reward(&self, _: &Policy, _: &[AnnotatedImage], _: &[AnnotatedImage], _: u64) -> Result<f64> {
            Err(Error::Diverged { step: 3 })
        }
    }

    #[test]
    fn divergence_is_flagged() {
        let d = corpus(7, 2);
        let r = evaluate_policy(&Policy::identity(), &Exploding, &d, &d, 0, 4).unwrap();
        assert!(r.diverged);
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.epoch, 4);
        assert!(evaluate_policy(&Policy::identity(), &Exploding, &[], &d, 0, 0).is_err());
    }
}

use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::gradcheck::{gradient_check, GradCheckReport};
use super::loss::{graph_bbgan_objective, graph_content_term, graph_fake_term, PROB_EPS};
use super::model::{clamp_alpha, ArchConfig, GanModel};
use crate::autodiff::{Graph, Tensor};
use crate::image::{roi_mask, AnnotatedImage, BoundingBox, RgbImage};
use crate::math::to_u8;
use crate::nn::{Adam, AdamConfig, ParamSet};
use crate::{rng, Error, Result};

/// `[1, 3, h, w]` with values in `[0, 1]`.
pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    let mut t = Tensor::zeros([1, 3, h, w]);
    let d = t.data_mut();
    for c in 0..3 {
        for p in 0..w * h {
            d[c * w * h + p] = raw[p * 3 + c] as f64 / 255.0;
        }
    }
    t
}

/// Batch item `n` of a `[_, 3, h, w]` tensor back to 8-bit RGB.
pub fn tensor_to_image(t: &Tensor, n: usize) -> RgbImage {
    let [_, _, h, w] = t.shape();
    let mut data = alloc::vec![0u8; w * h * 3];
    for c in 0..3 {
        for p in 0..w * h {
            data[p * 3 + c] = to_u8(t.at(n, c, p / w, p % w) * 255.0);
        }
    }
    RgbImage::from_raw(w as u32, h as u32, data).expect("consistent geometry")
}

/// 0/1 mask `[1, 3, h, w]` over the union of box interiors.
pub fn roi_mask_tensor(boxes: &[BoundingBox], width: u32, height: u32) -> Tensor {
    let m = roi_mask(boxes, width, height);
    let hw = m.len();
    let mut t = Tensor::zeros([1, 3, height as usize, width as usize]);
    let d = t.data_mut();
    for c in 0..3 {
        for (p, &on) in m.iter().enumerate() {
            if on {
                d[c * hw + p] = 1.0;
            }
        }
    }
    t
}

/// A day image with its ROI mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GanSample {
    pub image: Tensor,
    pub mask: Tensor,
}

impl GanSample {
    pub fn from_annotated(img: &AnnotatedImage) -> Self {
        Self { image: image_to_tensor(&img.image), mask: roi_mask_tensor(&img.boxes, img.width(), img.height()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub alpha_init: f64,
    pub train_alpha: bool,
    pub lr: f64,
    pub alpha_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Calls the checkpoint hook every this many steps; 0 disables.
    pub checkpoint_every: usize,
    /// Runs a finite-difference gradient check of the objective before the first step.
    pub debug_gradcheck: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 4,
            alpha_init: 0.5,
            train_alpha: true,
            lr: 2e-4,
            alpha_lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            checkpoint_every: 0,
            debug_gradcheck: false,
        }
    }
}

/// Per-step losses. `objective` is the full BBGAN objective at the start of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub objective: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub content: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GanModel,
    pub history: Vec<LossRecord>,
    pub gradcheck: Option<GradCheckReport>,
}

/// Parameter tensors of generator and discriminator are laid out first, `alpha` last.
impl GanModel {
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.generator.params.flatten();
        v.extend(self.discriminator.params.flatten());
        v.push(self.alpha);
        v
    }

    fn unflatten(&self, flat: &[f64]) -> (ParamSet, ParamSet, f64) {
        let fill = |ps: &ParamSet, off: &mut usize| {
            let mut out = ps.clone();
            for t in &mut out.tensors {
                let n = t.len();
                t.data_mut().copy_from_slice(&flat[*off..*off + n]);
                *off += n;
            }
            out
        };
        let mut off = 0;
        let g = fill(&self.generator.params, &mut off);
        let d = fill(&self.discriminator.params, &mut off);
        (g, d, flat[off])
    }

    /// The full objective on one batch and its gradient with respect to every
    /// parameter (generator, discriminator, then `alpha`), with nothing detached.
    pub fn objective_with_grad(&self, flat: &[f64], day: &Tensor, night: &Tensor, mask: &Tensor) -> (f64, Vec<f64>) {
        let (gp, dp, alpha) = self.unflatten(flat);
        let mut g = Graph::new();
        let gv = gp.bind(&mut g);
        let dv = dp.bind(&mut g);
        let av = g.leaf(Tensor::scalar(alpha));
        let z = g.leaf(day.clone());
        let x = g.leaf(night.clone());
        let fake = self.generator.forward(&mut g, &gv, z);
        let d_real = self.discriminator.forward(&mut g, &dv, x);
        let d_fake = self.discriminator.forward(&mut g, &dv, fake);
        let obj = graph_bbgan_objective(&mut g, d_real, d_fake, fake, day, mask, av);
        let grads = g.backward(obj);
        let mut out = Vec::with_capacity(flat.len());
        for t in gp.grads(&grads, &gv).into_iter().chain(dp.grads(&grads, &dv)) {
            out.extend_from_slice(t.data());
        }
        out.push(grads.get(av).map_or(0.0, Tensor::item));
        (g.value(obj).item(), out)
    }
}

fn pick<'a, T, R: RngCore + ?Sized>(items: &'a [T], n: usize, rng: &mut R) -> Vec<&'a T> {
    (0..n).map(|_| &items[rng.random_range(0..items.len())]).collect()
}

/// Alternating BBGAN training on unpaired day and night pools.
///
/// Each step the discriminator ascends the adversarial terms on real night
/// images versus detached generator outputs; then the generator (and
/// `alpha`, when trainable) descends the alpha-weighted fake term plus the
/// (1 - alpha)-weighted ROI content term. `on_checkpoint` fires every
/// `checkpoint_every` steps with the current model.
pub fn train_bbgan(
    day: &[GanSample],
    night: &[Tensor],
    arch: ArchConfig,
    config: &TrainConfig,
    seed: u64,
    mut on_checkpoint: impl FnMut(usize, &GanModel),
) -> Result<TrainOutcome> {
    if day.is_empty() || night.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(Error::Config("gan.batch_size must be positive".into()));
    }
    let shape = day[0].image.shape();
    if day.iter().any(|s| s.image.shape() != shape || s.mask.shape() != shape)
        || night.iter().any(|t| t.shape() != shape)
    {
        return Err(Error::DimensionMismatch("all GAN training images must share one size".into()));
    }
    let mut init_rng = rng::substream(seed, 0);
    let mut batch_rng = rng::substream(seed, 1);
    let mut model = GanModel::new(arch, config.alpha_init, &mut init_rng)?;
    model.generator.check_input(shape)?;

    let adam = |lr| AdamConfig { lr, beta1: config.beta1, beta2: config.beta2, eps: 1e-8 };
    let mut g_opt = Adam::new(adam(config.lr), &model.generator.params.tensors);
    let mut d_opt = Adam::new(adam(config.lr), &model.discriminator.params.tensors);
    let mut a_opt = Adam::new(adam(config.alpha_lr), &[Tensor::scalar(0.0)]);

    let gradcheck = if config.debug_gradcheck {
        let z = &day[0];
        let x = &night[0];
        let m = model.clone();
        Some(gradient_check(|p| m.objective_with_grad(p, &z.image, x, &z.mask), &model.flat_params(), 1e-3))
    } else {
        None
    };

    let mut history = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let zs = pick(day, config.batch_size, &mut batch_rng);
        let xs = pick(night, config.batch_size, &mut batch_rng);
        let z = Tensor::stack(&zs.iter().map(|s| &s.image).collect::<Vec<_>>());
        let mask = Tensor::stack(&zs.iter().map(|s| &s.mask).collect::<Vec<_>>());
        let x = Tensor::stack(&xs);
        let fake = model.generator.generate(&z)?;

        // Discriminator ascent on the adversarial terms.
        let mut g = Graph::new();
        let dv = model.discriminator.params.bind(&mut g);
        let xv = g.leaf(x);
        let fv = g.leaf(fake);
        let d_real = model.discriminator.forward(&mut g, &dv, xv);
        let d_fake = model.discriminator.forward(&mut g, &dv, fv);
        let lr_ = g.log_clamped(d_real, PROB_EPS);
        let real = g.mean(lr_);
        let fake_term = graph_fake_term(&mut g, d_fake);
        let weighted = g.scale(fake_term, model.alpha);
        let adv = g.add(real, weighted);
        let d_loss = g.scale(adv, -1.0);
        let grads = g.backward(d_loss);
        let d_grads = model.discriminator.params.grads(&grads, &dv);
        let adv_value = g.value(adv).item();
        let d_loss_value = g.value(d_loss).item();
        d_opt.step(&mut model.discriminator.params.tensors, &d_grads);

        // Generator (and alpha) descent.
        let mut g = Graph::new();
        let gv = model.generator.params.bind(&mut g);
        let dv = model.discriminator.params.bind(&mut g);
        let av = g.leaf(Tensor::scalar(model.alpha));
        let zv = g.leaf(z.clone());
        let out = model.generator.forward(&mut g, &gv, zv);
        let d_fake = model.discriminator.forward(&mut g, &dv, out);
        let fake_term = graph_fake_term(&mut g, d_fake);
        let content = graph_content_term(&mut g, out, &z, &mask);
        let wf = g.mul_scalar(fake_term, av);
        let om = g.one_minus(av);
        let wc = g.mul_scalar(content, om);
        let g_loss = g.add(wf, wc);
        let grads = g.backward(g_loss);
        let g_grads = model.generator.params.grads(&grads, &gv);
        let content_value = g.value(content).item();
        let g_loss_value = g.value(g_loss).item();
        let alpha_before = model.alpha;
        g_opt.step(&mut model.generator.params.tensors, &g_grads);
        if config.train_alpha {
            let mut a = [Tensor::scalar(model.alpha)];
            let ga = grads.get_or_zeros(av, &a[0]);
            a_opt.step(&mut a, &[ga]);
            model.alpha = clamp_alpha(a[0].item());
        }

        let rec = LossRecord {
            step,
            objective: adv_value + (1.0 - alpha_before) * content_value,
            d_loss: d_loss_value,
            g_loss: g_loss_value,
            content: content_value,
            alpha: model.alpha,
        };
        let finite = rec.objective.is_finite() && rec.d_loss.is_finite() && rec.g_loss.is_finite();
        if !finite || !model.generator.params.is_finite() || !model.discriminator.params.is_finite() {
            return Err(Error::Diverged { step });
        }
        history.push(rec);
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
            on_checkpoint(step + 1, &model);
        }
    }
    Ok(TrainOutcome { model, history, gradcheck })
}

/// Runs the generator over an 8-bit image; boxes and tags are carried over.
pub fn translate_image(model: &GanModel, img: &AnnotatedImage) -> Result<AnnotatedImage> {
    let out = model.generator.generate(&image_to_tensor(&img.image)).map_err(|e| match e {
        Error::DimensionMismatch(msg) => Error::DimensionMismatch(alloc::format!("image `{}`: {msg}", img.image_id)),
        other => other,
    })?;
    let mut res = img.with_image(tensor_to_image(&out, 0));
    res.domain = crate::image::Domain::Night;
    Ok(res)
}

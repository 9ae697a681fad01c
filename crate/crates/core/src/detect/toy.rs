use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Detection, Detector};
use crate::autodiff::{Activation, Graph, Tensor, Var};
use crate::gan::image_to_tensor;
use crate::image::{AnnotatedImage, BoundingBox, RgbImage};
use crate::math::{exp, ln, round, sigmoid};
use crate::nn::{Adam, AdamConfig, Conv, ParamSet};
use crate::rng::substream;
use crate::{Error, Result};

/// Pixels per grid cell.
pub const DETECTOR_STRIDE: u32 = 8;

const SINGLE_CLASS_LABEL: &str = "object";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyDetectorConfig {
    /// Widths of the stem and the three stride-2 stages.
    pub channels: [usize; 3],
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Reference box side in pixels; sizes are regressed as log ratios to it.
    pub anchor: f64,
    pub single_class: bool,
    pub nms_iou: f64,
    pub activation: Activation,
}

impl Default for ToyDetectorConfig {
    fn default() -> Self {
        Self {
            channels: [8, 16, 24],
            epochs: 30,
            batch_size: 8,
            lr: 3e-3,
            anchor: 10.0,
            single_class: false,
            nms_iou: 0.45,
            activation: Activation::LeakyRelu(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDetectorParams {
    pub config: ToyDetectorConfig,
    pub classes: Vec<String>,
    pub params: ParamSet,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

struct Net {
    body: [Conv; 5],
    obj: Conv,
    xy: Conv,
    wh: Conv,
    cls: Option<Conv>,
}

struct Heads {
    obj: Var,
    xy: Var,
    wh: Var,
    cls: Option<Var>,
}

impl Net {
    fn init<R: rand::RngCore + ?Sized>(cfg: &ToyDetectorConfig, n_classes: usize, rng: &mut R) -> (Self, ParamSet) {
        let mut p = ParamSet::new();
        let [c0, c1, c2] = cfg.channels;
        let body = [
            Conv::new(&mut p, "stem", 3, c0, 3, 1, rng),
            Conv::new(&mut p, "down1", c0, c1, 3, 2, rng),
            Conv::new(&mut p, "down2", c1, c2, 3, 2, rng),
            Conv::new(&mut p, "down3", c2, c2, 3, 2, rng),
            Conv::new(&mut p, "mix", c2, c2, 3, 1, rng),
        ];
        let obj = Conv::new(&mut p, "head.obj", c2, 1, 1, 1, rng);
        // start with a low objectness prior so early training is not flooded with positives
        p.tensors[obj.bias].data_mut()[0] = -2.0;
        let xy = Conv::new(&mut p, "head.xy", c2, 2, 1, 1, rng);
        let wh = Conv::new(&mut p, "head.wh", c2, 2, 1, 1, rng);
        let cls = (!cfg.single_class).then(|| Conv::new(&mut p, "head.cls", c2, n_classes, 1, 1, rng));
        (Self { body, obj, xy, wh, cls }, p)
    }

    fn forward(&self, g: &mut Graph, vars: &[Var], x: Var, act: Activation) -> Heads {
        let mut h = x;
        for c in &self.body {
            let z = c.forward(g, vars, h);
            h = g.act(z, act);
        }
        Heads {
            obj: self.obj.forward(g, vars, h),
            xy: self.xy.forward(g, vars, h),
            wh: self.wh.forward(g, vars, h),
            cls: self.cls.map(|c| c.forward(g, vars, h)),
        }
    }
}

/// Per-batch regression targets on the `[n, *, gh, gw]` grid.
struct Targets {
    obj: Tensor,
    xy: Tensor,
    xy_w: Tensor,
    wh: Tensor,
    wh_w: Tensor,
    cls: Tensor,
    cls_w: Tensor,
}

fn build_targets(batch: &[&AnnotatedImage], classes: &[String], cfg: &ToyDetectorConfig) -> Targets {
    let n = batch.len();
    let (gh, gw) = ((batch[0].height() / DETECTOR_STRIDE) as usize, (batch[0].width() / DETECTOR_STRIDE) as usize);
    let k = if cfg.single_class { 0 } else { classes.len() };
    let mut t = Targets {
        obj: Tensor::zeros([n, 1, gh, gw]),
        xy: Tensor::zeros([n, 2, gh, gw]),
        xy_w: Tensor::zeros([n, 2, gh, gw]),
        wh: Tensor::zeros([n, 2, gh, gw]),
        wh_w: Tensor::zeros([n, 2, gh, gw]),
        cls: Tensor::zeros([n, k.max(1), gh, gw]),
        cls_w: Tensor::zeros([n, k.max(1), gh, gw]),
    };
    let s = DETECTOR_STRIDE as f64;
    for (i, img) in batch.iter().enumerate() {
        // larger boxes claim a cell first
        let mut boxes: Vec<&BoundingBox> = img.boxes.iter().collect();
        boxes.sort_by_key(|b| core::cmp::Reverse(b.area()));
        for b in boxes {
            let cx = (b.x_min + b.x_max) as f64 / 2.0 / s;
            let cy = (b.y_min + b.y_max) as f64 / 2.0 / s;
            let (gx, gy) = ((cx as usize).min(gw - 1), (cy as usize).min(gh - 1));
            let oi = t.obj.index(i, 0, gy, gx);
            if t.obj.data()[oi] > 0.0 {
                continue;
            }
            t.obj.data_mut()[oi] = 1.0;
            let fx = (cx - gx as f64).clamp(0.0, 1.0);
            let fy = (cy - gy as f64).clamp(0.0, 1.0);
            let tw = ln(b.width() as f64 / cfg.anchor);
            let th = ln(b.height() as f64 / cfg.anchor);
            for (c, (pos, size)) in [(fx, tw), (fy, th)].into_iter().enumerate() {
                let j = t.xy.index(i, c, gy, gx);
                t.xy.data_mut()[j] = pos;
                t.xy_w.data_mut()[j] = 1.0;
                t.wh.data_mut()[j] = size;
                t.wh_w.data_mut()[j] = 1.0;
            }
            if k > 0 {
                let label = classes.iter().position(|c| *c == b.class_label).unwrap_or(0);
                for c in 0..k {
                    let j = t.cls.index(i, c, gy, gx);
                    t.cls.data_mut()[j] = if c == label { 1.0 } else { 0.0 };
                    t.cls_w.data_mut()[j] = 1.0;
                }
            }
        }
    }
    t
}

/// A single-scale grid detector: five 3x3 convolutions down to stride 8,
/// then 1x1 heads for objectness, centre offset, log size and class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ToyDetector {
    pub config: ToyDetectorConfig,
}

impl ToyDetector {
    pub fn new(config: ToyDetectorConfig) -> Self {
        Self { config }
    }

    fn class_list(&self, dataset: &[AnnotatedImage]) -> Result<Vec<String>> {
        let set: BTreeSet<&str> = dataset.iter().flat_map(|d| d.boxes.iter().map(|b| b.class_label.as_str())).collect();
        if self.config.single_class {
            let label =
                if set.len() == 1 { set.first().copied().unwrap_or(SINGLE_CLASS_LABEL) } else { SINGLE_CLASS_LABEL };
            return Ok(vec![label.to_string()]);
        }
        if set.len() < 2 {
            return Err(Error::Config(alloc::format!(
                "detector needs at least two classes (found {}); enable single-class mode",
                set.len()
            )));
        }
        Ok(set.into_iter().map(String::from).collect())
    }

    fn check_images(dataset: &[AnnotatedImage]) -> Result<(u32, u32)> {
        let first = dataset.first().ok_or(Error::EmptyDataset)?;
        let (w, h) = (first.width(), first.height());
        if w % DETECTOR_STRIDE != 0 || h % DETECTOR_STRIDE != 0 || w == 0 || h == 0 {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{}: {w}x{h} is not a positive multiple of {DETECTOR_STRIDE}",
                first.image_id
            )));
        }
        if let Some(bad) = dataset.iter().find(|d| d.width() != w || d.height() != h) {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{}: {}x{} differs from {w}x{h}",
                bad.image_id,
                bad.width(),
                bad.height()
            )));
        }
        Ok((w, h))
    }

    /// Rebuilds the layer layout for stored parameters, checking names and shapes.
    pub fn load(&self, classes: Vec<String>, params: ParamSet) -> Result<ToyDetectorParams> {
        let (_, fresh) = Net::init(&self.config, classes.len(), &mut substream(0, 0));
        if fresh.names != params.names
            || fresh.tensors.iter().zip(&params.tensors).any(|(a, b)| a.shape() != b.shape())
            || fresh.tensors.len() != params.tensors.len()
        {
            return Err(Error::Config("detector parameters do not match the configured architecture".into()));
        }
        Ok(ToyDetectorParams { config: self.config, classes, params, loss_history: Vec::new() })
    }
}

impl Detector for ToyDetector {
    type Params = ToyDetectorParams;

    fn train(&self, dataset: &[AnnotatedImage], seed: u64) -> Result<ToyDetectorParams> {
        let cfg = self.config;
        if cfg.batch_size == 0 || cfg.channels.contains(&0) {
            return Err(Error::Config("batch_size and channel widths must be positive".into()));
        }
        Self::check_images(dataset)?;
        let classes = self.class_list(dataset)?;
        let (net, mut params) = Net::init(&cfg, classes.len(), &mut substream(seed, 0));
        let mut order_rng = substream(seed, 1);
        let inputs: Vec<Tensor> = dataset.iter().map(|d| image_to_tensor(&d.image)).collect();
        let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &params.tensors);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        let mut step = 0;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut order_rng);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&AnnotatedImage> = chunk.iter().map(|&i| &dataset[i]).collect();
                let x = Tensor::stack(&chunk.iter().map(|&i| &inputs[i]).collect::<Vec<_>>());
                let t = build_targets(&batch, &classes, &cfg);
                let mut g = Graph::new();
                let vars = params.bind(&mut g);
                let xv = g.leaf(x);
                let heads = net.forward(&mut g, &vars, xv, cfg.activation);
                let ones = Tensor::full(t.obj.shape(), 1.0);
                let mut loss = g.bce_with_logits(heads.obj, t.obj, ones);
                let l_xy = g.bce_with_logits(heads.xy, t.xy, t.xy_w);
                let d_wh = g.sub_const(heads.wh, t.wh);
                let sq = g.square(d_wh);
                let masked = g.mul_const(sq, t.wh_w);
                let l_wh = g.sum(masked);
                loss = g.add(loss, l_xy);
                loss = g.add(loss, l_wh);
                if let Some(cls) = heads.cls {
                    let l_cls = g.bce_with_logits(cls, t.cls, t.cls_w);
                    loss = g.add(loss, l_cls);
                }
                let loss = g.scale(loss, 1.0 / chunk.len() as f64);
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::Diverged { step });
                }
                let grads = g.backward(loss);
                let gs = params.grads(&grads, &vars);
                adam.step(&mut params.tensors, &gs);
                total += value * chunk.len() as f64;
                step += 1;
            }
            history.push(total / dataset.len() as f64);
        }
        if !params.is_finite() {
            return Err(Error::Diverged { step });
        }
        Ok(ToyDetectorParams { config: cfg, classes, params, loss_history: history })
    }

    fn predict(
        &self,
        params: &ToyDetectorParams,
        image_id: &str,
        image: &RgbImage,
        confidence_threshold: f64,
    ) -> Vec<Detection> {
        let cfg = params.config;
        let (w, h) = (image.width(), image.height());
        if w < DETECTOR_STRIDE || h < DETECTOR_STRIDE {
            return Vec::new();
        }
        let (net, _) = Net::init(&cfg, params.classes.len(), &mut substream(0, 0));
        let mut g = Graph::new();
        let vars = params.params.bind(&mut g);
        let xv = g.leaf(image_to_tensor(image));
        let heads = net.forward(&mut g, &vars, xv, cfg.activation);
        let [_, _, gh, gw] = g.value(heads.obj).shape();
        let s = DETECTOR_STRIDE as f64;
        let mut found = Vec::new();
        for gy in 0..gh {
            for gx in 0..gw {
                let obj = sigmoid(g.value(heads.obj).at(0, 0, gy, gx));
                let (label, p) = match heads.cls {
                    None => (0, 1.0),
                    Some(c) => {
                        let t = g.value(c);
                        (0..params.classes.len())
                            .map(|k| (k, sigmoid(t.at(0, k, gy, gx))))
                            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
                    }
                };
                let conf = obj * p;
                if conf < confidence_threshold {
                    continue;
                }
                let (xy, wh) = (g.value(heads.xy), g.value(heads.wh));
                let cx = (gx as f64 + sigmoid(xy.at(0, 0, gy, gx))) * s;
                let cy = (gy as f64 + sigmoid(xy.at(0, 1, gy, gx))) * s;
                let bw = (cfg.anchor * exp(wh.at(0, 0, gy, gx).clamp(-6.0, 6.0))).clamp(1.0, w as f64);
                let bh = (cfg.anchor * exp(wh.at(0, 1, gy, gx).clamp(-6.0, 6.0))).clamp(1.0, h as f64);
                let edge = |c: f64, half: f64, lim: u32| {
                    let lo = (round(c - half).max(0.0) as u32).min(lim - 1);
                    let hi = (round(c + half).min(lim as f64) as u32).max(lo + 1);
                    (lo, hi)
                };
                let (x0, x1) = edge(cx, bw / 2.0, w);
                let (y0, y1) = edge(cy, bh / 2.0, h);
                let b = BoundingBox::new(params.classes[label].clone(), x0, y0, x1, y1);
                found.push(Detection::new(image_id, b, conf.clamp(0.0, 1.0)));
            }
        }
        non_max_suppression(found, cfg.nms_iou)
    }
}

/// Per-class suppression, most confident first; ties keep grid order.
fn non_max_suppression(mut dets: Vec<Detection>, iou: f64) -> Vec<Detection> {
    dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<Detection> = Vec::new();
    for d in dets {
        if kept.iter().all(|k| k.bbox.class_label != d.bbox.class_label || k.bbox.iou(&d.bbox) < iou) {
            kept.push(d);
        }
    }
    kept
}

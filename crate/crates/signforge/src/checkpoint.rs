//! Model files: a one-line format header followed by a JSON body.
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use signforge_core::autodiff::{Activation, Tensor};
use signforge_core::detect::{ToyDetector, ToyDetectorConfig, ToyDetectorParams};
use signforge_core::gan::{ArchConfig, GanModel};
use signforge_core::nn::ParamSet;
use signforge_core::rng::seeded;

use crate::error::{Error, Result};

pub const GAN_HEADER: &str = "signforge-gan v1";
pub const DETECTOR_HEADER: &str = "signforge-detector v1";

pub fn activation_name(a: Activation) -> String {
    match a {
        Activation::Relu => "relu".into(),
        Activation::LeakyRelu(s) => format!("leaky_relu:{s}"),
        Activation::Silu => "silu".into(),
        Activation::Sigmoid => "sigmoid".into(),
        Activation::Tanh => "tanh".into(),
    }
}

pub fn parse_activation(s: &str) -> Result<Activation> {
    let bad = || Error::Config(format!("unknown activation `{s}` (relu, leaky_relu:<slope>, silu, sigmoid, tanh)"));
    Ok(match s {
        "relu" => Activation::Relu,
        "silu" => Activation::Silu,
        "sigmoid" => Activation::Sigmoid,
        "tanh" => Activation::Tanh,
        other => {
            let slope = other.strip_prefix("leaky_relu:").ok_or_else(bad)?;
            Activation::LeakyRelu(slope.parse().map_err(|_| bad())?)
        }
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTensor {
    name: String,
    shape: [usize; 4],
    data: Vec<f64>,
}

fn params_to_wire(p: &ParamSet) -> Vec<WireTensor> {
    p.names
        .iter()
        .zip(&p.tensors)
        .map(|(n, t)| WireTensor { name: n.clone(), shape: t.shape(), data: t.data().to_vec() })
        .collect()
}

fn params_from_wire(w: Vec<WireTensor>, path: &Path) -> Result<ParamSet> {
    let mut p = ParamSet::new();
    for t in w {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::Config(format!(
                "{}: tensor `{}` has {} values for shape {:?}",
                path.display(),
                t.name,
                t.data.len(),
                t.shape
            )));
        }
        p.push(t.name, Tensor::from_vec(t.shape, t.data));
    }
    Ok(p)
}

#[derive(Serialize, Deserialize, Clone, PartialEq, Debug)]
#[serde(deny_unknown_fields)]
struct WireArch {
    depth: usize,
    base_channels: usize,
    max_channels: usize,
    disc_layers: usize,
    disc_channels: usize,
    activation: String,
    residual: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireGan {
    arch: WireArch,
    alpha: f64,
    generator: Vec<WireTensor>,
    discriminator: Vec<WireTensor>,
}

fn split_header<'a>(text: &'a str, header: &str, path: &Path) -> Result<&'a str> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end() != header {
        return Err(Error::Version {
            path: path.to_path_buf(),
            expected: header.into(),
            found: first.trim_end().into(),
        });
    }
    Ok(body)
}

fn json_err(path: &Path) -> impl Fn(serde_json::Error) -> Error + '_ {
    move |e| Error::parse(path, e.line() as u64 + 1, e.to_string())
}

pub fn gan_to_text(model: &GanModel) -> Result<String> {
    let a = model.arch;
    let wire = WireGan {
        arch: WireArch {
            depth: a.depth,
            base_channels: a.base_channels,
            max_channels: a.max_channels,
            disc_layers: a.disc_layers,
            disc_channels: a.disc_channels,
            activation: activation_name(a.activation),
            residual: a.residual,
        },
        alpha: model.alpha,
        generator: params_to_wire(&model.generator.params),
        discriminator: params_to_wire(&model.discriminator.params),
    };
    let body = serde_json::to_string(&wire).map_err(|e| Error::Config(e.to_string()))?;
    Ok(format!("{GAN_HEADER}\n{body}\n"))
}

/// Parses a checkpoint; if `expected` is given the stored architecture must equal it.
pub fn gan_from_text(text: &str, path: &Path, expected: Option<&ArchConfig>) -> Result<GanModel> {
    let body = split_header(text, GAN_HEADER, path)?;
    let w: WireGan = serde_json::from_str(body).map_err(json_err(path))?;
    let arch = ArchConfig {
        depth: w.arch.depth,
        base_channels: w.arch.base_channels,
        max_channels: w.arch.max_channels,
        disc_layers: w.arch.disc_layers,
        disc_channels: w.arch.disc_channels,
        activation: parse_activation(&w.arch.activation)?,
        residual: w.arch.residual,
    };
    if let Some(e) = expected {
        if *e != arch {
            return Err(Error::Config(format!(
                "{}: checkpoint architecture {arch:?} differs from the configured {e:?}",
                path.display()
            )));
        }
    }
    let mut model = GanModel::new(arch, w.alpha, &mut seeded(0))?;
    model.load_params(params_from_wire(w.generator, path)?, params_from_wire(w.discriminator, path)?, w.alpha)?;
    Ok(model)
}

pub fn save_gan(model: &GanModel, path: &Path) -> Result<()> {
    crate::write_text(path, &gan_to_text(model)?)
}

pub fn load_gan(path: &Path, expected: Option<&ArchConfig>) -> Result<GanModel> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    gan_from_text(&text, path, expected)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDetectorConfig {
    channels: [usize; 3],
    epochs: usize,
    batch_size: usize,
    lr: f64,
    anchor: f64,
    single_class: bool,
    nms_iou: f64,
    activation: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDetector {
    config: WireDetectorConfig,
    classes: Vec<String>,
    params: Vec<WireTensor>,
    loss_history: Vec<f64>,
}

pub fn detector_to_text(p: &ToyDetectorParams) -> Result<String> {
    let c = p.config;
    let wire = WireDetector {
        config: WireDetectorConfig {
            channels: c.channels,
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            anchor: c.anchor,
            single_class: c.single_class,
            nms_iou: c.nms_iou,
            activation: activation_name(c.activation),
        },
        classes: p.classes.clone(),
        params: params_to_wire(&p.params),
        loss_history: p.loss_history.clone(),
    };
    let body = serde_json::to_string(&wire).map_err(|e| Error::Config(e.to_string()))?;
    Ok(format!("{DETECTOR_HEADER}\n{body}\n"))
}

pub fn detector_from_text(text: &str, path: &Path) -> Result<ToyDetectorParams> {
    let body = split_header(text, DETECTOR_HEADER, path)?;
    let w: WireDetector = serde_json::from_str(body).map_err(json_err(path))?;
    let c = w.config;
    let config = ToyDetectorConfig {
        channels: c.channels,
        epochs: c.epochs,
        batch_size: c.batch_size,
        lr: c.lr,
        anchor: c.anchor,
        single_class: c.single_class,
        nms_iou: c.nms_iou,
        activation: parse_activation(&c.activation)?,
    };
    let mut p = ToyDetector::new(config).load(w.classes, params_from_wire(w.params, path)?)?;
    p.loss_history = w.loss_history;
    Ok(p)
}

pub fn save_detector(p: &ToyDetectorParams, path: &Path) -> Result<()> {
    crate::write_text(path, &detector_to_text(p)?)
}

pub fn load_detector(path: &Path) -> Result<ToyDetectorParams> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    detector_from_text(&text, path)
}

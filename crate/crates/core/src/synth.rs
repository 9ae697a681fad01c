//! Procedural day/night street scenes with sign-like ROIs.
//!
//! Day scenes have a bright sky-to-road gradient; night scenes are dark
//! with scattered light spots and dimly lit signs. Signs come in three
//! classes with distinct colour and pattern so a small detector can tell
//! them apart.

use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::image::{AnnotatedImage, BoundingBox, Domain, RgbImage};
use crate::math::to_u8;

pub const SIGN_CLASSES: [&str; 3] = ["stop", "yield", "speed"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub size: u32,
    pub min_sign: u32,
    pub max_sign: u32,
    pub max_signs: usize,
    /// Brightness multiplier applied to signs in night scenes.
    pub night_sign_gain: (f64, f64),
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { size: 32, min_sign: 8, max_sign: 12, max_signs: 2, night_sign_gain: (0.35, 0.6) }
    }
}

fn noisy<R: RngCore + ?Sized>(rng: &mut R, base: [f64; 3], amp: f64) -> [u8; 3] {
    base.map(|v| to_u8(v + rng.random_range(-amp..=amp)))
}

fn draw_sign(img: &mut RgbImage, b: &BoundingBox, class: usize, gain: f64) {
    let (w, h) = (b.width(), b.height());
    let scale = |c: [u8; 3]| c.map(|v| to_u8(v as f64 * gain));
    for y in 0..h {
        for x in 0..w {
            let border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            let (cx, cy) = (x as i64 * 2 - (w as i64 - 1), y as i64 * 2 - (h as i64 - 1));
            let c = match class {
                // red plate with a white bar
                0 => {
                    if cy.abs() <= 2 && x >= 2 && x + 2 < w {
                        [245, 245, 245]
                    } else {
                        [210, 30, 35]
                    }
                }
                // yellow plate with a dark frame
                1 => {
                    if border {
                        [30, 30, 30]
                    } else {
                        [235, 200, 40]
                    }
                }
                // white plate with a red ring and dark centre
                _ => {
                    let r2 = cx * cx + cy * cy;
                    let rmax = (w.min(h) as i64 - 1).pow(2);
                    if r2 * 4 <= rmax / 4 {
                        [25, 25, 25]
                    } else if border || r2 >= rmax * 3 / 4 {
                        [200, 40, 40]
                    } else {
                        [240, 240, 240]
                    }
                }
            };
            img.put(b.x_min + x, b.y_min + y, scale(c));
        }
    }
}

fn place_boxes<R: RngCore + ?Sized>(rng: &mut R, cfg: &SceneConfig) -> Vec<(BoundingBox, usize)> {
    let n = rng.random_range(1..=cfg.max_signs.max(1));
    let mut out: Vec<(BoundingBox, usize)> = Vec::new();
    let mut attempts = 0;
    while out.len() < n && attempts < 50 {
        attempts += 1;
        let side = rng.random_range(cfg.min_sign..=cfg.max_sign);
        let x0 = rng.random_range(0..=cfg.size - side);
        let y0 = rng.random_range(0..=cfg.size - side);
        let class = rng.random_range(0..SIGN_CLASSES.len());
        let b = BoundingBox::new(SIGN_CLASSES[class], x0, y0, x0 + side, y0 + side);
        let clear =
            out.iter().all(|(o, _)| b.x_max < o.x_min || o.x_max < b.x_min || b.y_max < o.y_min || o.y_max < b.y_min);
        if clear {
            out.push((b, class));
        }
    }
    out
}

/// Bright scene, sky gradient over a gray road.
pub fn day_scene<R: RngCore + ?Sized>(rng: &mut R, cfg: &SceneConfig, id: &str) -> AnnotatedImage {
    let s = cfg.size;
    let mut img = RgbImage::new(s, s);
    let tint = rng.random_range(-20.0..20.0);
    for y in 0..s {
        let t = y as f64 / s as f64;
        let base = if t < 0.55 {
            [140.0 + tint + 40.0 * t, 185.0 + tint, 235.0 + tint * 0.5]
        } else {
            [120.0 + tint, 118.0 + tint, 110.0 + tint]
        };
        for x in 0..s {
            img.put(x, y, noisy(rng, base, 12.0));
        }
    }
    let boxes = place_boxes(rng, cfg);
    for (b, c) in &boxes {
        draw_sign(&mut img, b, *c, 1.0);
    }
    let mut out = AnnotatedImage::new(id, img, boxes.into_iter().map(|(b, _)| b).collect());
    out.domain = Domain::Day;
    out
}

/// Dark scene with a few light spots and dimly lit signs.
pub fn night_scene<R: RngCore + ?Sized>(rng: &mut R, cfg: &SceneConfig, id: &str) -> AnnotatedImage {
    let s = cfg.size;
    let mut img = RgbImage::new(s, s);
    for y in 0..s {
        let t = y as f64 / s as f64;
        let base = [18.0 + 20.0 * t, 18.0 + 18.0 * t, 30.0 + 10.0 * t];
        for x in 0..s {
            img.put(x, y, noisy(rng, base, 8.0));
        }
    }
    for _ in 0..rng.random_range(1..=3) {
        let (lx, ly) = (rng.random_range(0..s - 1), rng.random_range(0..s - 1));
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            img.put(lx + dx, ly + dy, [250, 230, 160]);
        }
    }
    let boxes = place_boxes(rng, cfg);
    for (b, c) in &boxes {
        let gain = rng.random_range(cfg.night_sign_gain.0..=cfg.night_sign_gain.1);
        draw_sign(&mut img, b, *c, gain);
    }
    let mut out = AnnotatedImage::new(id, img, boxes.into_iter().map(|(b, _)| b).collect());
    out.domain = Domain::Night;
    out
}

/// One bright square on a black canvas, labelled `square`.
pub fn square_scene<R: RngCore + ?Sized>(rng: &mut R, size: u32, id: &str) -> AnnotatedImage {
    let side = rng.random_range(size / 4..=size * 3 / 8);
    let x0 = rng.random_range(0..=size - side);
    let y0 = rng.random_range(0..=size - side);
    let mut img = RgbImage::new(size, size);
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            img.put(x, y, [255, 255, 255]);
        }
    }
    AnnotatedImage::new(id, img, alloc::vec![BoundingBox::new("square", x0, y0, x0 + side, y0 + side)])
}

pub fn day_corpus<R: RngCore + ?Sized>(rng: &mut R, cfg: &SceneConfig, n: usize, prefix: &str) -> Vec<AnnotatedImage> {
    (0..n).map(|i| day_scene(rng, cfg, &alloc::format!("{prefix}{i:04}"))).collect()
}

pub fn night_corpus<R: RngCore + ?Sized>(
    rng: &mut R,
    cfg: &SceneConfig,
    n: usize,
    prefix: &str,
) -> Vec<AnnotatedImage> {
    (0..n).map(|i| night_scene(rng, cfg, &alloc::format!("{prefix}{i:04}"))).collect()
}

//! Affine warps with box propagation.
//!
//! Coordinates are continuous with pixel `(i, j)` covering `[i, i+1) x [j, j+1)`.
//! Warps sample the nearest source pixel of each destination pixel centre;
//! boxes are transformed by mapping their four corners and taking the
//! axis-aligned hull, rounded to the nearest integer and clipped to the image.

use alloc::vec::Vec;

use crate::image::{AnnotatedImage, BoundingBox, RgbImage};
use crate::math::{cos, floor, round, sin};

/// Fill value for pixels uncovered by a warp.
pub const FILL: [u8; 3] = [128, 128, 128];

/// A box is kept only if clipping leaves at least this fraction of its transformed area.
pub const MIN_RETAINED_AREA: f64 = 0.25;

/// `x' = a x + b y + c`, `y' = d x + e y + f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub m: [f64; 6],
}

impl Affine {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.m;
        (a * x + b * y + c, d * x + e * y + f)
    }

    pub fn inverse(&self) -> Affine {
        let [a, b, c, d, e, f] = self.m;
        let det = a * e - b * d;
        let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
        Affine { m: [ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)] }
    }

    /// Counter-clockwise (as displayed, y pointing down) rotation about the image centre.
    pub fn rotation(degrees: f64, width: u32, height: u32) -> Affine {
        let t = degrees.to_radians();
        let (s, c) = (sin(t), cos(t));
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        Affine { m: [c, s, cx - c * cx - s * cy, -s, c, cy + s * cx - c * cy] }
    }

    pub fn shear_x(factor: f64, height: u32) -> Affine {
        let cy = height as f64 / 2.0;
        Affine { m: [1.0, factor, -factor * cy, 0.0, 1.0, 0.0] }
    }

    pub fn shear_y(factor: f64, width: u32) -> Affine {
        let cx = width as f64 / 2.0;
        Affine { m: [1.0, 0.0, 0.0, factor, 1.0, -factor * cx] }
    }

    pub fn translation(dx: f64, dy: f64) -> Affine {
        Affine { m: [1.0, 0.0, dx, 0.0, 1.0, dy] }
    }
}

/// Nearest-neighbour warp of the pixels under the forward transform `t`.
pub fn warp_image(src: &RgbImage, t: &Affine) -> RgbImage {
    let (w, h) = (src.width(), src.height());
    let inv = t.inverse();
    let mut out = RgbImage::filled(w, h, FILL);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
            let (fx, fy) = (floor(sx), floor(sy));
            if fx >= 0.0 && fy >= 0.0 && fx < w as f64 && fy < h as f64 {
                out.put(x, y, src.get(fx as u32, fy as u32));
            }
        }
    }
    out
}

/// Transforms one box; `None` when it leaves the image or keeps under 25% of its area.
pub fn warp_box(b: &BoundingBox, t: &Affine, width: u32, height: u32) -> Option<BoundingBox> {
    let corners = [
        (b.x_min as f64, b.y_min as f64),
        (b.x_max as f64, b.y_min as f64),
        (b.x_min as f64, b.y_max as f64),
        (b.x_max as f64, b.y_max as f64),
    ];
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (cx, cy) in corners {
        let (px, py) = t.apply(cx, cy);
        x0 = x0.min(px);
        y0 = y0.min(py);
        x1 = x1.max(px);
        y1 = y1.max(py);
    }
    let (x0, y0, x1, y1) = (round(x0), round(y0), round(x1), round(y1));
    let full = (x1 - x0) * (y1 - y0);
    let cx0 = x0.clamp(0.0, width as f64);
    let cy0 = y0.clamp(0.0, height as f64);
    let cx1 = x1.clamp(0.0, width as f64);
    let cy1 = y1.clamp(0.0, height as f64);
    if cx1 <= cx0 || cy1 <= cy0 || full <= 0.0 {
        return None;
    }
    if (cx1 - cx0) * (cy1 - cy0) < MIN_RETAINED_AREA * full {
        return None;
    }
    Some(BoundingBox {
        class_label: b.class_label.clone(),
        x_min: cx0 as u32,
        y_min: cy0 as u32,
        x_max: cx1 as u32,
        y_max: cy1 as u32,
    })
}

/// Warps pixels and boxes together.
pub fn warp(img: &AnnotatedImage, t: &Affine) -> AnnotatedImage {
    let (w, h) = (img.width(), img.height());
    let boxes: Vec<_> = img.boxes.iter().filter_map(|b| warp_box(b, t, w, h)).collect();
    let mut out = img.with_image(warp_image(&img.image, t));
    out.boxes = boxes;
    out
}

pub fn rotate(img: &AnnotatedImage, degrees: f64) -> AnnotatedImage {
    warp(img, &Affine::rotation(degrees, img.width(), img.height()))
}

pub fn shear_x(img: &AnnotatedImage, factor: f64) -> AnnotatedImage {
    warp(img, &Affine::shear_x(factor, img.height()))
}

pub fn shear_y(img: &AnnotatedImage, factor: f64) -> AnnotatedImage {
    warp(img, &Affine::shear_y(factor, img.width()))
}

pub fn translate_x(img: &AnnotatedImage, pixels: f64) -> AnnotatedImage {
    warp(img, &Affine::translation(pixels, 0.0))
}

pub fn translate_y(img: &AnnotatedImage, pixels: f64) -> AnnotatedImage {
    warp(img, &Affine::translation(0.0, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn canvas(boxes: Vec<BoundingBox>, size: u32) -> AnnotatedImage {
        AnnotatedImage::new("g", RgbImage::filled(size, size, [10, 20, 30]), boxes)
    }

    /// Rasterizes the box as a mask, pushes every destination pixel centre
    /// through the inverse map, and returns the tight bounds of the hits.
    fn mask_oracle(b: &BoundingBox, t: &Affine, w: u32, h: u32) -> Option<(u32, u32, u32, u32)> {
        let inv = t.inverse();
        let mut hit: Option<(u32, u32, u32, u32)> = None;
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
                let (fx, fy) = (floor(sx), floor(sy));
                if fx >= b.x_min as f64 && fx < b.x_max as f64 && fy >= b.y_min as f64 && fy < b.y_max as f64 {
                    hit = Some(match hit {
                        None => (x, y, x + 1, y + 1),
                        Some((a, c, d, e)) => (a.min(x), c.min(y), d.max(x + 1), e.max(y + 1)),
                    });
                }
            }
        }
        hit
    }

    #[test]
    fn rotate_quarter_turn_matches_mask_oracle() {
        let b = BoundingBox::new("s", 10, 20, 30, 40);
        let t = Affine::rotation(90.0, 256, 256);
        assert_eq!(mask_oracle(&b, &t, 256, 256), Some((20, 226, 40, 246)));
        let out = rotate(&canvas(vec![b], 256), 90.0);
        assert_eq!(out.boxes, vec![BoundingBox::new("s", 20, 226, 40, 246)]);
    }

    #[test]
    fn translate_drops_box_pushed_out() {
        let out = translate_x(&canvas(vec![BoundingBox::new("s", 230, 10, 250, 30)], 256), 50.0);
        assert!(out.boxes.is_empty());
    }

    #[test]
    fn translate_keeps_or_drops_by_retained_area() {
        // shifted to [266, 286): fully outside
        // shifted by 20 -> [250, 270): 6 of 20 columns remain = 30% -> kept
        let b = BoundingBox::new("s", 230, 10, 250, 30);
        let kept = translate_x(&canvas(vec![b.clone()], 256), 20.0);
        assert_eq!(kept.boxes, vec![BoundingBox::new("s", 250, 10, 256, 30)]);
        // shifted by 22 -> [252, 272): 4 of 20 columns = 20% -> dropped
        let dropped = translate_x(&canvas(vec![b], 256), 22.0);
        assert!(dropped.boxes.is_empty());
    }

    #[test]
    fn inverse_round_trips() {
        let t = Affine::rotation(17.0, 64, 48);
        let (x, y) = t.inverse().apply(t.apply(3.0, 5.0).0, t.apply(3.0, 5.0).1);
        assert!((x - 3.0).abs() < 1e-9 && (y - 5.0).abs() < 1e-9);
    }

    #[test]
    fn warp_moves_pixels_with_box() {
        let mut img = canvas(vec![BoundingBox::new("s", 4, 4, 8, 8)], 32);
        for y in 4..8 {
            for x in 4..8 {
                img.image.put(x, y, [255, 0, 0]);
            }
        }
        let out = translate_y(&img, 5.0);
        assert_eq!(out.boxes[0], BoundingBox::new("s", 4, 9, 8, 13));
        for y in 9..13 {
            for x in 4..8 {
                assert_eq!(out.image.get(x, y), [255, 0, 0]);
            }
        }
        assert_eq!(out.image.get(0, 0), FILL);
    }
}

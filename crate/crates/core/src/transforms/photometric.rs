//! Pixel-value ops. None of these touch box coordinates.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::RgbImage;
use crate::math::{round, to_u8};

fn map_channels(img: &RgbImage, f: impl Fn(usize, u8) -> u8) -> RgbImage {
    let mut out = img.clone();
    for (i, v) in out.as_raw_mut().iter_mut().enumerate() {
        *v = f(i % 3, *v);
    }
    out
}

pub fn invert(img: &RgbImage) -> RgbImage {
    map_channels(img, |_, v| 255 - v)
}

/// Inverts every value at or above `threshold` (0..=256; 256 is a no-op).
pub fn solarize(img: &RgbImage, threshold: u16) -> RgbImage {
    map_channels(img, |_, v| if v as u16 >= threshold { 255 - v } else { v })
}

/// Keeps the top `bits` bits of each channel.
pub fn posterize(img: &RgbImage, bits: u8) -> RgbImage {
    let bits = bits.clamp(1, 8);
    let mask = (0xFFu16 << (8 - bits)) as u8;
    map_channels(img, |_, v| v & mask)
}

/// Per-channel linear stretch to the full 0..255 range.
pub fn autocontrast(img: &RgbImage) -> RgbImage {
    let mut lo = [255u8; 3];
    let mut hi = [0u8; 3];
    for px in img.as_raw().chunks_exact(3) {
        for c in 0..3 {
            lo[c] = lo[c].min(px[c]);
            hi[c] = hi[c].max(px[c]);
        }
    }
    map_channels(
        img,
        |c, v| {
            if hi[c] <= lo[c] {
                v
            } else {
                to_u8((v - lo[c]) as f64 * 255.0 / (hi[c] - lo[c]) as f64)
            }
        },
    )
}

/// Per-channel histogram equalization with the same integer lookup PIL uses.
pub fn equalize(img: &RgbImage) -> RgbImage {
    let mut luts = [[0u8; 256]; 3];
    for (c, lut) in luts.iter_mut().enumerate() {
        let mut hist = [0usize; 256];
        for px in img.as_raw().chunks_exact(3) {
            hist[px[c] as usize] += 1;
        }
        let last = hist.iter().rposition(|&n| n > 0).map_or(0, |i| hist[i]);
        let step = (hist.iter().sum::<usize>() - last) / 255;
        if step == 0 {
            for (i, l) in lut.iter_mut().enumerate() {
                *l = i as u8;
            }
            continue;
        }
        let mut n = step / 2;
        for (i, l) in lut.iter_mut().enumerate() {
            *l = (n / step).min(255) as u8;
            n += hist[i];
        }
    }
    map_channels(img, |c, v| luts[c][v as usize])
}

/// `other + factor * (img - other)`, saturated.
pub fn blend(img: &RgbImage, other: &RgbImage, factor: f64) -> RgbImage {
    let mut out = img.clone();
    for (o, (&a, &b)) in out.as_raw_mut().iter_mut().zip(img.as_raw().iter().zip(other.as_raw())) {
        *o = to_u8(b as f64 + factor * (a as f64 - b as f64));
    }
    out
}

fn luma(px: &[u8]) -> f64 {
    (299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32) as f64 / 1000.0
}

fn grayscale(img: &RgbImage) -> RgbImage {
    let mut out = img.clone();
    for px in out.as_raw_mut().chunks_exact_mut(3) {
        let l = to_u8(luma(px));
        px.fill(l);
    }
    out
}

/// Factor 0 gives a uniform mean-gray image, 1 the original.
pub fn contrast(img: &RgbImage, factor: f64) -> RgbImage {
    let n = (img.width() * img.height()).max(1) as f64;
    let mean = round(img.as_raw().chunks_exact(3).map(|p| round(luma(p))).sum::<f64>() / n);
    let gray = RgbImage::filled(img.width(), img.height(), [mean as u8; 3]);
    blend(img, &gray, factor)
}

/// Saturation: factor 0 is grayscale.
pub fn color(img: &RgbImage, factor: f64) -> RgbImage {
    blend(img, &grayscale(img), factor)
}

pub fn brightness(img: &RgbImage, factor: f64) -> RgbImage {
    blend(img, &RgbImage::new(img.width(), img.height()), factor)
}

/// Blends with a 3x3 smoothed copy (centre weight 5, border pixels untouched).
pub fn sharpness(img: &RgbImage, factor: f64) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let mut smooth = img.clone();
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let mut acc = [0u32; 3];
                for dy in 0..3 {
                    for dx in 0..3 {
                        let p = img.get(x + dx - 1, y + dy - 1);
                        let wgt = if dx == 1 && dy == 1 { 5 } else { 1 };
                        for c in 0..3 {
                            acc[c] += wgt * p[c] as u32;
                        }
                    }
                }
                smooth.put(x, y, acc.map(|a| to_u8(a as f64 / 13.0)));
            }
        }
    }
    blend(img, &smooth, factor)
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Separable box filter of width `2k + 1` with reflect padding.
pub fn box_blur(img: &RgbImage, k: u32) -> RgbImage {
    if k == 0 {
        return img.clone();
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = img.as_raw();
    let k = k as i64;
    let mut horiz = vec![0f64; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut s = 0.0;
                for d in -k..=k {
                    let xx = reflect(x as i64 + d, w as i64);
                    s += src[(y * w + xx) * 3 + c] as f64;
                }
                horiz[(y * w + x) * 3 + c] = s;
            }
        }
    }
    let norm = ((2 * k + 1) * (2 * k + 1)) as f64;
    let mut out: Vec<u8> = vec![0; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut s = 0.0;
                for d in -k..=k {
                    let yy = reflect(y as i64 + d, h as i64);
                    s += horiz[(yy * w + x) * 3 + c];
                }
                out[(y * w + x) * 3 + c] = to_u8(s / norm);
            }
        }
    }
    RgbImage::from_raw(img.width(), img.height(), out).expect("same geometry")
}

/// Fills the square of side `size` centred at `(cx, cy)`, clipped to the image.
pub fn cutout(img: &RgbImage, cx: u32, cy: u32, size: u32, fill: [u8; 3]) -> RgbImage {
    let mut out = img.clone();
    let half = size / 2;
    let x0 = cx.saturating_sub(half);
    let y0 = cy.saturating_sub(half);
    let x1 = (x0 + size).min(img.width());
    let y1 = (y0 + size).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            out.put(x, y, fill);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> RgbImage {
        let mut img = RgbImage::new(16, 4);
        for y in 0..4 {
            for x in 0..16 {
                img.put(x, y, [(x * 10 + 40) as u8, (y * 30 + 60) as u8, 200]);
            }
        }
        img
    }

    #[test]
    fn invert_is_involution() {
        let img = ramp();
        assert_eq!(invert(&invert(&img)), img);
    }

    #[test]
    fn solarize_threshold_256_is_identity() {
        assert_eq!(solarize(&ramp(), 256), ramp());
        assert_eq!(solarize(&ramp(), 0), invert(&ramp()));
    }

    #[test]
    fn posterize_masks_low_bits() {
        let img = RgbImage::filled(1, 1, [0b1011_0111, 255, 1]);
        assert_eq!(posterize(&img, 4).get(0, 0), [0b1011_0000, 0b1111_0000, 0]);
        assert_eq!(posterize(&img, 8), img);
    }

    #[test]
    fn autocontrast_stretches() {
        let out = autocontrast(&ramp());
        let r: Vec<u8> = (0..16).map(|x| out.get(x, 0)[0]).collect();
        assert_eq!(r[0], 0);
        assert_eq!(r[15], 255);
        // constant blue channel untouched
        assert_eq!(out.get(3, 2)[2], 200);
    }

    #[test]
    fn equalize_uniform_histogram_is_stable() {
        let mut img = RgbImage::new(16, 16);
        for i in 0..256u32 {
            img.put(i % 16, i / 16, [i as u8; 3]);
        }
        assert_eq!(equalize(&img), img);
    }

    #[test]
    fn enhance_factor_one_is_identity() {
        let img = ramp();
        assert_eq!(contrast(&img, 1.0), img);
        assert_eq!(color(&img, 1.0), img);
        assert_eq!(brightness(&img, 1.0), img);
        assert_eq!(sharpness(&img, 1.0), img);
        assert_eq!(brightness(&img, 0.0), RgbImage::new(16, 4));
    }

    #[test]
    fn blur_level_zero_and_constant_image() {
        assert_eq!(box_blur(&ramp(), 0), ramp());
        let flat = RgbImage::filled(9, 7, [33, 66, 99]);
        for k in 1..10 {
            assert_eq!(box_blur(&flat, k), flat);
        }
    }

    #[test]
    fn blur_spreads_single_pixel_by_direct_convolution() {
        let mut img = RgbImage::new(9, 9);
        img.put(4, 4, [255, 255, 255]);
        let out = box_blur(&img, 1);
        for y in 0..9 {
            for x in 0..9 {
                let near = (3..=5).contains(&x) && (3..=5).contains(&y);
                // 255 / 9 = 28.33
                let want = if near { 28 } else { 0 };
                assert_eq!(out.get(x, y), [want; 3], "({x},{y})");
            }
        }
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(12, 5), 4);
        assert_eq!(reflect(3, 1), 0);
    }

    #[test]
    fn cutout_clips_at_edges() {
        let out = cutout(&RgbImage::filled(8, 8, [1, 1, 1]), 0, 0, 4, [128; 3]);
        let filled = out.as_raw().chunks_exact(3).filter(|p| p[0] == 128).count();
        assert_eq!(filled, 16);
    }
}

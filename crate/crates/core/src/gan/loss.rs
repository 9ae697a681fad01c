use crate::autodiff::{Graph, Tensor, Var};
use crate::math::ln;

/// Probabilities are clamped into `(PROB_EPS, 1 - PROB_EPS)` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
fn log_clamped(p: f64) -> f64 {
    ln(p.clamp(PROB_EPS, 1.0 - PROB_EPS))
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    xs.sum::<f64>() / n as f64
}

fn adversarial_terms(d_real: &[f64], d_fake: &[f64]) -> (f64, f64) {
    let real = mean(d_real.iter().map(|&p| log_clamped(p)));
    let fake = mean(d_fake.iter().map(|&p| log_clamped(1.0 - p)));
    (real, fake)
}

/// `mean(ln D(x)) + mean(ln(1 - D(G(z))))`: the quantity the discriminator
/// maximizes and the generator minimizes.
pub fn gan_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    let (real, fake) = adversarial_terms(d_real, d_fake);
    real + fake
}

/// Mean squared difference over the elements where `mask` is set; 0 for an empty mask.
pub fn content_loss(generated: &[f64], input: &[f64], mask: &[bool]) -> f64 {
    assert_eq!(generated.len(), input.len(), "content_loss length mismatch");
    assert_eq!(generated.len(), mask.len(), "content_loss mask length mismatch");
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((g, x), &m) in generated.iter().zip(input).zip(mask) {
        if m {
            sum += (g - x) * (g - x);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// The BBGAN objective: the real term, the fake term weighted by `alpha`,
/// and the ROI content term weighted by `1 - alpha`.
pub fn bbgan_loss(
    d_real: &[f64],
    d_fake: &[f64],
    generated: &[f64],
    input_day: &[f64],
    roi_mask: &[bool],
    alpha: f64,
) -> f64 {
    let (real, fake) = adversarial_terms(d_real, d_fake);
    let content = content_loss(generated, input_day, roi_mask);
    real + alpha * fake + (1.0 - alpha) * content
}

/// Builds the same objective on the tape.
///
/// `mask` is 0/1 with the shape of `generated`; `input_day` is a constant.
pub fn graph_bbgan_objective(
    g: &mut Graph,
    d_real: Var,
    d_fake: Var,
    generated: Var,
    input_day: &Tensor,
    mask: &Tensor,
    alpha: Var,
) -> Var {
    let lr = g.log_clamped(d_real, PROB_EPS);
    let real = g.mean(lr);
    let fake = graph_fake_term(g, d_fake);
    let weighted_fake = g.mul_scalar(fake, alpha);
    let content = graph_content_term(g, generated, input_day, mask);
    let one_minus = g.one_minus(alpha);
    let weighted_content = g.mul_scalar(content, one_minus);
    let adv = g.add(real, weighted_fake);
    g.add(adv, weighted_content)
}

pub(crate) fn graph_fake_term(g: &mut Graph, d_fake: Var) -> Var {
    let om = g.one_minus(d_fake);
    let lf = g.log_clamped(om, PROB_EPS);
    g.mean(lf)
}

pub(crate) fn graph_content_term(g: &mut Graph, generated: Var, input_day: &Tensor, mask: &Tensor) -> Var {
    let count = mask.data().iter().filter(|&&m| m != 0.0).count();
    let diff = g.sub_const(generated, input_day.clone());
    let sq = g.square(diff);
    let masked = g.mul_const(sq, mask.clone());
    let s = g.sum(masked);
    g.scale(s, if count == 0 { 0.0 } else { 1.0 / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn half_probabilities_give_two_log_half() {
        let l = gan_loss(&[0.5; 4], &[0.5; 4]);
        assert!((l - 2.0 * ln(0.5)).abs() < 1e-12);
        assert!((l + 1.3863).abs() < 1e-4);
    }

    #[test]
    fn perfect_discriminator_is_near_zero() {
        let l = gan_loss(&[1.0, 1.0], &[0.0, 0.0]);
        assert!(l <= 0.0 && l > -1e-6, "{l}");
        assert!(l.is_finite());
        assert!(gan_loss(&[0.0], &[1.0]).is_finite());
    }

    #[test]
    fn alpha_one_collapses_to_gan_loss() {
        let (r, f) = ([0.7, 0.2, 0.9], [0.1, 0.4, 0.35]);
        let gen = [0.1, 0.5, 0.9, 0.3];
        let inp = [0.2, 0.5, 0.1, 0.3];
        let m = [true, false, true, true];
        assert_eq!(bbgan_loss(&r, &f, &gen, &inp, &m, 1.0).to_bits(), gan_loss(&r, &f).to_bits());
    }

    #[test]
    fn content_term_of_worked_example() {
        // 2x2 ROI with differences 0.1, -0.2, 0, 0.3
        let input = [0.5, 0.5, 0.5, 0.5, 0.9];
        let gen = [0.6, 0.3, 0.5, 0.8, 0.0];
        let mask = [true, true, true, true, false];
        let c = content_loss(&gen, &input, &mask);
        assert!((c - 0.035).abs() < 1e-12);
        let r = [0.6, 0.8];
        let f = [0.3, 0.1];
        let total = bbgan_loss(&r, &f, &gen, &input, &mask, 0.5);
        let want = (ln(0.6) + ln(0.8)) / 2.0 + 0.5 * (ln(0.7) + ln(0.9)) / 2.0 + 0.0175;
        assert!((total - want).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_has_zero_content() {
        assert_eq!(content_loss(&[0.1, 0.2], &[0.9, 0.0], &[false, false]), 0.0);
    }

    #[test]
    fn graph_objective_matches_scalar_version() {
        let mut g = Graph::new();
        let dr = g.leaf(Tensor::from_vec([2, 1, 1, 1], vec![0.6, 0.8]));
        let df = g.leaf(Tensor::from_vec([2, 1, 1, 1], vec![0.3, 0.1]));
        let gen = g.leaf(Tensor::from_vec([1, 1, 1, 5], vec![0.6, 0.3, 0.5, 0.8, 0.0]));
        let alpha = g.leaf(Tensor::scalar(0.5));
        let input = Tensor::from_vec([1, 1, 1, 5], vec![0.5, 0.5, 0.5, 0.5, 0.9]);
        let mask = Tensor::from_vec([1, 1, 1, 5], vec![1.0, 1.0, 1.0, 1.0, 0.0]);
        let l = graph_bbgan_objective(&mut g, dr, df, gen, &input, &mask, alpha);
        let want = bbgan_loss(
            &[0.6, 0.8],
            &[0.3, 0.1],
            &[0.6, 0.3, 0.5, 0.8, 0.0],
            input.data(),
            &[true, true, true, true, false],
            0.5,
        );
        assert!((g.value(l).item() - want).abs() < 1e-12);
    }
}

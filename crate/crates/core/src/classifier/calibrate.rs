use rayon::prelude::*;

use super::mlp::{masked_softmax, MlpModel};
use super::train::Example;

/// Mean negative log-likelihood of precomputed logits at temperature `t`.
pub fn mean_nll(logits: &[(Vec<f32>, &[bool], usize)], t: f32) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    let total: f64 = logits
        .iter()
        .map(|(l, mask, label)| -f64::from(masked_softmax(l, mask, t)[*label].max(1e-30)).ln())
        .sum();
    total / logits.len() as f64
}

/// Temperature minimizing validation NLL, searched by golden section over
/// `ln T` in `[ln 0.05, ln 20]`; `T = 1` is kept whenever it is at least as good.
pub fn calibrate(model: &MlpModel, validation: &[Example]) -> f32 {
    if validation.is_empty() {
        return 1.0;
    }
    let logits: Vec<(Vec<f32>, &[bool], usize)> = validation
        .par_iter()
        .map(|ex| (model.forward(&ex.input).expect("validated width"), ex.mask.as_slice(), ex.label))
        .collect();
    let f = |u: f64| mean_nll(&logits, u.exp() as f32);

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.05f64.ln(), 20f64.ln());
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let t = (0.5 * (a + b)).exp() as f32;
    if mean_nll(&logits, t) < mean_nll(&logits, 1.0) {
        t
    } else {
        1.0
    }
}

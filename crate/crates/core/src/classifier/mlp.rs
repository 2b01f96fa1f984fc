use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f32], out: &mut Vec<f32>) {
        out.clear();
        out.extend(self.bias.iter().zip(self.weights.chunks_exact(self.inputs)).map(|(b, row)| {
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>()
        }));
    }
}

/// ReLU multilayer perceptron; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    pub temperature: f32,
    pub fingerprint: u64,
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self { layers: model.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f32) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= s);
            l.bias.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn l2_norm(&self) -> f32 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|g| f64::from(*g) * f64::from(*g))
            .sum::<f64>()
            .sqrt() as f32
    }
}

impl MlpModel {
    /// Widths `[input, hidden.., output]`, He-uniform weights, zero biases.
    pub fn new(widths: &[usize], seed: u64) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let limit = (6.0 / w[0] as f32).sqrt();
                let mut layer = Dense::zeros(w[0], w[1]);
                layer.weights.iter_mut().for_each(|x| *x = rng.random_range(-limit..limit));
                layer
            })
            .collect();
        Self { layers, temperature: 1.0, fingerprint: 0 }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>> {
        if input.len() != self.input_width() {
            return Err(Error::Config(format!(
                "input width {} does not match model width {}",
                input.len(),
                self.input_width()
            )));
        }
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer's post-activation output.
    pub(crate) fn forward_trace(&self, input: &[f32]) -> Vec<Vec<f32>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(acts.last().expect("non-empty"), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Accumulates into `grads` the gradient of the loss whose derivative
    /// with respect to the logits is `dlogits`.
    pub(crate) fn backward(&self, acts: &[Vec<f32>], dlogits: &[f32], grads: &mut Gradients) {
        let mut delta = dlogits.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &acts[li];
            let g = &mut grads.layers[li];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(w, x)| *w += d * x);
            }
            if li == 0 {
                break;
            }
            let mut prev = vec![0.0f32; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            // ReLU derivative of the previous layer's output
            prev.iter_mut().zip(input).for_each(|(p, a)| {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            });
            delta = prev;
        }
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f32> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// Softmax of `logits / temperature` over unmasked entries; masked entries get 0.
pub fn masked_softmax(logits: &[f32], mask: &[bool], temperature: f32) -> Vec<f32> {
    let t = f64::from(temperature);
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| f64::from(*l) / t)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (f64::from(*l) / t - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / z) as f32).collect()
}

/// Index of the largest unmasked logit; ties resolve to the last slot
/// (New Vessel) first, then to the lowest index.
pub fn argmax_masked(logits: &[f32], mask: &[bool]) -> usize {
    let last = logits.len() - 1;
    let mut best = last;
    let mut best_v = logits[last];
    for (i, (l, m)) in logits.iter().zip(mask).enumerate().take(last) {
        if *m && *l > best_v {
            best = i;
            best_v = *l;
        }
    }
    if mask[last] || best != last {
        return best;
    }
    // New Vessel masked (not produced by the encoder, kept total for callers)
    (0..last).filter(|i| mask[*i]).max_by(|a, b| logits[*a].total_cmp(&logits[*b]).then(b.cmp(a))).unwrap_or(last)
}

//! Fully connected feed-forward network with hand-written backprop.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::adam::{AdamConfig, AdamState};
use super::dense::Dense;
use super::loss::bce_loss;
use super::rng::{label, stream};
use super::sigmoid;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation and its output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => out * (1.0 - out),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Dense,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    /// Inverted dropout applied to hidden-layer outputs in training mode.
    pub dropout: f64,
}

#[derive(Clone, Copy, Debug)]
pub enum ForwardMode {
    Inference,
    /// Dropout masks for sample `i` come from the stream `(seed, [i])`.
    Training { seed: u64 },
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    /// Input of each layer (after dropout for hidden layers).
    pub inputs: Vec<Dense>,
    pub pre: Vec<Dense>,
    /// Post-activation of each layer, before dropout.
    pub post: Vec<Dense>,
    /// Dropout multipliers applied to `post[l]` to form `inputs[l + 1]`.
    masks: Vec<Option<Dense>>,
}

impl Activations {
    pub fn output(&self) -> &Dense {
        self.post.last().expect("at least one layer")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Dense>,
    pub bias: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

impl Mlp {
    /// Xavier-uniform weights, zero biases. `sizes` includes the input width.
    pub fn new(sizes: &[usize], activations: &[Activation], dropout: f64, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layer sizes need {} activations, got {}",
                sizes.len(),
                sizes.len().saturating_sub(1),
                activations.len()
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::invalid(format!("dropout rate {dropout} outside [0, 1)")));
        }
        let mut rng = stream(seed, &[label("mlp-init")]);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..=limit))
                    .collect();
                Layer {
                    weights: Dense::from_vec(fan_out, fan_in, data).expect("finite init"),
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Ok(Mlp { layers, dropout })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn forward(&self, x: &Dense, mode: ForwardMode) -> Result<Activations> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let n = x.rows();
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut sample_rngs = match mode {
            ForwardMode::Training { seed } if self.dropout > 0.0 => {
                Some((0..n).map(|i| stream(seed, &[i as u64])).collect::<Vec<_>>())
            }
            _ => None,
        };
        for (li, layer) in self.layers.iter().enumerate() {
            let input = inputs.last().unwrap();
            let (out_dim, in_dim) = layer.weights.shape();
            let mut z = Dense::zeros(n, out_dim);
            for r in 0..n {
                let xr = input.row(r);
                let zr = z.row_mut(r);
                for o in 0..out_dim {
                    let w = &layer.weights.as_slice()[o * in_dim..(o + 1) * in_dim];
                    zr[o] = layer.bias[o] + super::dot(w, xr);
                }
            }
            let mut a = z.clone();
            a.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
            let hidden = li + 1 < self.layers.len();
            let mask = match (&mut sample_rngs, hidden) {
                (Some(rngs), true) => {
                    let keep = 1.0 - self.dropout;
                    let mut m = Dense::zeros(n, out_dim);
                    for (r, rng) in rngs.iter_mut().enumerate() {
                        for v in m.row_mut(r) {
                            *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
                        }
                    }
                    Some(m)
                }
                _ => None,
            };
            if hidden {
                let mut next = a.clone();
                if let Some(m) = &mask {
                    next.as_mut_slice()
                        .iter_mut()
                        .zip(m.as_slice())
                        .for_each(|(v, k)| *v *= k);
                }
                inputs.push(next);
            }
            masks.push(mask);
            pre.push(z);
            post.push(a);
        }
        Ok(Activations {
            inputs,
            pre,
            post,
            masks,
        })
    }

    /// Inference on one row.
    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let in_dim = layer.input_dim();
            cur = (0..layer.output_dim())
                .map(|o| {
                    let w = &layer.weights.as_slice()[o * in_dim..(o + 1) * in_dim];
                    layer.activation.apply(layer.bias[o] + super::dot(w, &cur))
                })
                .collect();
        }
        cur
    }

    /// First output column for every row, inference mode.
    pub fn predict(&self, x: &Dense) -> Result<Vec<f64>> {
        let acts = self.forward(x, ForwardMode::Inference)?;
        let out = acts.output();
        Ok((0..out.rows()).map(|r| out.get(r, 0)).collect())
    }

    /// Backprop from `dL/d(output)`.
    pub fn backward(&self, acts: &Activations, grad_output: &Dense) -> Result<MlpGrads> {
        let last = self.layers.len() - 1;
        if grad_output.shape() != acts.post[last].shape() {
            return Err(Error::Shape("output gradient shape".into()));
        }
        let mut delta = grad_output.clone();
        let act = self.layers[last].activation;
        for ((d, &z), &a) in delta
            .as_mut_slice()
            .iter_mut()
            .zip(acts.pre[last].as_slice())
            .zip(acts.post[last].as_slice())
        {
            *d *= act.derivative(z, a);
        }
        Ok(self.backprop_delta(acts, delta))
    }

    /// Fused BCE + sigmoid output gradient, `(p - y) / n`, which stays finite
    /// when `p` saturates.
    pub fn backward_bce(&self, acts: &Activations, y: &[f64]) -> Result<MlpGrads> {
        let last = self.layers.len() - 1;
        if self.layers[last].activation != Activation::Sigmoid || self.output_dim() != 1 {
            return Err(Error::invalid("fused BCE gradient needs a single sigmoid output"));
        }
        let p = &acts.post[last];
        if p.rows() != y.len() {
            return Err(Error::Shape(format!("{} outputs vs {} labels", p.rows(), y.len())));
        }
        let n = y.len() as f64;
        let delta = Dense::from_vec(
            y.len(),
            1,
            p.as_slice().iter().zip(y).map(|(p, y)| (p - y) / n).collect(),
        )?;
        Ok(self.backprop_delta(acts, delta))
    }

    fn backprop_delta(&self, acts: &Activations, mut delta: Dense) -> MlpGrads {
        let n = delta.rows();
        let mut gw = vec![Dense::zeros(0, 0); self.layers.len()];
        let mut gb = vec![Vec::new(); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (out_dim, in_dim) = layer.weights.shape();
            let input = &acts.inputs[l];
            let mut dw = Dense::zeros(out_dim, in_dim);
            let mut db = vec![0.0; out_dim];
            for r in 0..n {
                let dr = delta.row(r);
                let xr = input.row(r);
                for o in 0..out_dim {
                    let d = dr[o];
                    if d == 0.0 {
                        continue;
                    }
                    db[o] += d;
                    let row = dw.row_mut(o);
                    for (g, x) in row.iter_mut().zip(xr) {
                        *g += d * x;
                    }
                }
            }
            if l > 0 {
                let prev = &self.layers[l - 1];
                let mut next = Dense::zeros(n, in_dim);
                for r in 0..n {
                    let dr = delta.row(r);
                    let nr = next.row_mut(r);
                    for o in 0..out_dim {
                        let d = dr[o];
                        if d == 0.0 {
                            continue;
                        }
                        let w = layer.weights.row(o);
                        for (v, wv) in nr.iter_mut().zip(w) {
                            *v += d * wv;
                        }
                    }
                }
                if let Some(m) = &acts.masks[l - 1] {
                    next.as_mut_slice()
                        .iter_mut()
                        .zip(m.as_slice())
                        .for_each(|(v, k)| *v *= k);
                }
                for ((v, &z), &a) in next
                    .as_mut_slice()
                    .iter_mut()
                    .zip(acts.pre[l - 1].as_slice())
                    .zip(acts.post[l - 1].as_slice())
                {
                    *v *= prev.activation.derivative(z, a);
                }
                delta = next;
            }
            gw[l] = dw;
            gb[l] = db;
        }
        MlpGrads {
            weights: gw,
            bias: gb,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

/// Mini-batch Adam on BCE for a single-sigmoid-output network.
/// Returns the mean training loss of each epoch.
pub fn train_bce(mlp: &mut Mlp, x: &Dense, y: &[f64], cfg: TrainConfig) -> Result<Vec<f64>> {
    if x.rows() != y.len() || y.is_empty() {
        return Err(Error::Shape(format!("{} rows vs {} labels", x.rows(), y.len())));
    }
    let mut adam = AdamState::new(cfg.adam, &mlp.block_sizes());
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream(cfg.seed, &[label("shuffle"), epoch as u64]));
        let mut total = 0.0;
        for (b, idx) in order.chunks(batch).enumerate() {
            let xb = x.select_rows(idx);
            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let seed = super::rng::derive_seed(cfg.seed, &[label("dropout"), epoch as u64, b as u64]);
            let acts = mlp.forward(&xb, ForwardMode::Training { seed })?;
            let (loss, _) = bce_loss(acts.output().as_slice(), &yb)?;
            total += loss * idx.len() as f64;
            let grads = mlp.backward_bce(&acts, &yb)?;
            adam.step(&mut mlp.blocks_mut(), &grads.blocks())?;
        }
        curve.push(total / y.len() as f64);
    }
    Ok(curve)
}

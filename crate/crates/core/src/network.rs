//! Fully-connected classifier with a K+1 output head and per-layer binary
//! masks. ReLU between layers, identity on the output.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::sparsity::BitMatrix;
use crate::tensor::{softmax_slice, Tensor};

/// Probability vector over K real classes plus the unknown slot.
#[derive(Debug, Clone)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn from_logits(logits: &[f64]) -> Self {
        Self {
            probs: softmax_slice(logits),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of class `y` (1-based over the K real classes).
    pub fn class(&self, y: usize) -> f64 {
        self.probs[y - 1]
    }

    /// The unknown-slot probability `p_{K+1}`.
    pub fn unknown(&self) -> f64 {
        *self.probs.last().unwrap()
    }

    /// Argmax over the first `k` entries, ties to the lowest index; returns a
    /// 1-based class.
    pub fn argmax_first(&self, k: usize) -> usize {
        let mut best = 0;
        for i in 1..k {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best + 1
    }

    /// Largest probability among the first `k` entries.
    pub fn max_first(&self, k: usize) -> f64 {
        self.probs[..k]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// `n_out x n_in`, row-major.
    pub weight: Tensor,
    pub bias: Tensor,
    pub mask: BitMatrix,
}

impl Layer {
    pub fn n_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    /// Zeroes every weight whose mask bit is clear.
    pub fn apply_mask(&mut self) {
        for idx in 0..self.weight.len() {
            if !self.mask.get_flat(idx) {
                self.weight.data_mut()[idx] = 0.0;
            }
        }
    }
}

/// Layered fully-connected model; the last layer has `num_classes + 1`
/// outputs. Masked weights are exactly zero between updates.
#[derive(Debug, Clone)]
pub struct SparseNetwork {
    layers: Vec<Layer>,
    num_classes: usize,
    revision: u64,
}

/// Everything `backward` needs from a matching `forward`.
pub struct ForwardCache {
    revision: u64,
    /// Input to each layer: `inputs[0]` is the sample, `inputs[i]` the
    /// activation feeding layer `i`.
    inputs: Vec<Tensor>,
    /// Pre-activation output of each layer.
    pre_acts: Vec<Tensor>,
}

/// Dense parameter gradients. Entries at masked-out weight positions are
/// populated too — RigL growth scores need them — and must not be folded
/// into masked weights without re-masking.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl ParamGrads {
    pub fn zeros_like(net: &SparseNetwork) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Tensor::zeros(vec![l.n_out(), l.n_in()]))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Tensor::zeros(vec![l.n_out()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for x in t.data_mut() {
                *x *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|t| t.is_finite())
    }
}

fn matvec(w: &Tensor, x: &[f64], bias: &Tensor) -> Vec<f64> {
    let (m, k) = (w.rows(), w.cols());
    let wd = w.data();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let row = &wd[i * k..(i + 1) * k];
        let mut acc = 0.0;
        for l in 0..k {
            acc += row[l] * x[l];
        }
        out.push(acc + bias.data()[i]);
    }
    out
}

fn matvec_transposed(w: &Tensor, d: &[f64]) -> Vec<f64> {
    let (m, k) = (w.rows(), w.cols());
    let wd = w.data();
    let mut out = vec![0.0; k];
    for i in 0..m {
        let di = d[i];
        let row = &wd[i * k..(i + 1) * k];
        for j in 0..k {
            out[j] += row[j] * di;
        }
    }
    out
}

impl SparseNetwork {
    /// Builds a network for `num_classes` real classes. `dims` runs from the
    /// input width through the hidden widths; the K+1 output layer is
    /// appended here. Weights get scaled-normal init and are masked
    /// immediately.
    pub fn new(
        dims: &[usize],
        num_classes: usize,
        masks: Vec<BitMatrix>,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if dims.is_empty() || num_classes == 0 {
            return Err(Error::Config("empty layer dims or zero classes".into()));
        }
        let mut full: Vec<usize> = dims.to_vec();
        full.push(num_classes + 1);
        if masks.len() != full.len() - 1 {
            return Err(Error::Dimension(format!(
                "expected {} masks, got {}",
                full.len() - 1,
                masks.len()
            )));
        }
        let mut layers = Vec::new();
        for (i, mask) in masks.into_iter().enumerate() {
            let (n_in, n_out) = (full[i], full[i + 1]);
            if mask.rows() != n_out || mask.cols() != n_in {
                return Err(Error::Dimension(format!(
                    "mask {} is {}x{}, layer wants {}x{}",
                    i,
                    mask.rows(),
                    mask.cols(),
                    n_out,
                    n_in
                )));
            }
            let scale = (2.0 / n_in as f64).sqrt();
            let data: Vec<f64> = (0..n_out * n_in)
                .map(|_| rng.next_normal() * scale)
                .collect();
            let mut layer = Layer {
                weight: Tensor::new(vec![n_out, n_in], data)?,
                bias: Tensor::zeros(vec![n_out]),
                mask,
            };
            layer.apply_mask();
            layers.push(layer);
        }
        Ok(Self {
            layers,
            num_classes,
            revision: 0,
        })
    }

    /// Layer dims `(n_out, n_in)` for mask allocation.
    pub fn layer_dims(dims: &[usize], num_classes: usize) -> Vec<(usize, usize)> {
        let mut full: Vec<usize> = dims.to_vec();
        full.push(num_classes + 1);
        (0..full.len() - 1).map(|i| (full[i + 1], full[i])).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn weight_param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len()).sum()
    }

    pub fn nonzero_weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.mask.count_ones()).sum()
    }

    /// Mutable access to parameters and masks; bumps the revision so stale
    /// forward caches are rejected.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.revision += 1;
        &mut self.layers
    }

    /// Rebuilds a network from raw parts (checkpoint loading, voting).
    pub fn from_parts(layers: Vec<Layer>, num_classes: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if layers.last().unwrap().n_out() != num_classes + 1 {
            return Err(Error::Dimension(format!(
                "last layer has {} outputs, expected K+1 = {}",
                layers.last().unwrap().n_out(),
                num_classes + 1
            )));
        }
        for w in layers.windows(2) {
            if w[1].n_in() != w[0].n_out() {
                return Err(Error::Dimension("layer widths do not chain".into()));
            }
        }
        Ok(Self {
            layers,
            num_classes,
            revision: 0,
        })
    }

    /// Forward pass: returns logits, the penultimate activation (the
    /// feature vector), and a cache for `backward`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input dim {} does not match first layer {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(act.clone());
            let z = Tensor::vector(matvec(&layer.weight, act.data(), &layer.bias));
            pre_acts.push(z.clone());
            act = if i + 1 < self.layers.len() {
                crate::tensor::relu_forward(&z)
            } else {
                z
            };
        }
        let features = inputs.last().unwrap().clone();
        let logits = act;
        let cache = ForwardCache {
            revision: self.revision,
            inputs,
            pre_acts,
        };
        Ok((logits, features, cache))
    }

    /// Reverse-mode gradients of `logits . dlogits` with respect to every
    /// parameter (dense, including masked slots) and the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &Tensor,
    ) -> Result<(ParamGrads, Tensor)> {
        if cache.revision != self.revision {
            return Err(Error::Precondition(
                "stale forward cache: parameters changed since forward".into(),
            ));
        }
        let last = self.layers.len() - 1;
        if dlogits.len() != self.layers[last].n_out() {
            return Err(Error::Dimension(format!(
                "dlogits len {} vs output dim {}",
                dlogits.len(),
                self.layers[last].n_out()
            )));
        }
        let mut grads = ParamGrads::zeros_like(self);
        let mut delta = dlogits.data().to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &cache.inputs[i];
            // weight grad: outer(delta, input)
            {
                let wg = grads.weights[i].data_mut();
                let (m, k) = (layer.n_out(), layer.n_in());
                for r in 0..m {
                    let dr = delta[r];
                    let row = &mut wg[r * k..(r + 1) * k];
                    for c in 0..k {
                        row[c] += dr * input.data()[c];
                    }
                }
                let bg = grads.biases[i].data_mut();
                for r in 0..m {
                    bg[r] += delta[r];
                }
            }
            let upstream = matvec_transposed(&layer.weight, &delta);
            if i > 0 {
                // gate by the previous layer's ReLU
                let pre = &cache.pre_acts[i - 1];
                delta = pre
                    .data()
                    .iter()
                    .zip(&upstream)
                    .map(|(&z, &u)| if z > 0.0 { u } else { 0.0 })
                    .collect();
            } else {
                delta = upstream;
            }
        }
        Ok((grads, Tensor::vector(delta)))
    }

    /// Softmax probabilities over the K+1 head.
    pub fn probabilities(&self, x: &Tensor) -> Result<ProbVector> {
        let (logits, _, _) = self.forward(x)?;
        Ok(ProbVector::from_logits(logits.data()))
    }

    /// ID prediction: argmax over the first K probabilities only, ties to
    /// the lowest index. The unknown slot is never a predictable label.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.probabilities(x)?.argmax_first(self.num_classes))
    }
}

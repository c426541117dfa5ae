use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng;

/// Fully connected layer, `outputs x inputs` weights in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitScheme {
    /// Hidden weights uniform in `[-scale, scale]`; output layer and all
    /// biases zero, so the network starts at `e(x) = 0`.
    SmallUniform { scale: f64 },
    /// Every parameter zero. Hidden layers receive no gradient from this
    /// start under ReLU.
    Zero,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::SmallUniform { scale: 0.05 }
    }
}

/// Scalar-output ReLU network giving the elasticity at market cost `e(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityNetwork {
    pub layers: Vec<Dense>,
}

/// Pre-activations of every layer for one input, kept for backpropagation.
pub(crate) struct Trace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn output(&self) -> f64 {
        self.pre.last().expect("network has layers")[0]
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

impl ElasticityNetwork {
    /// `depth` layers: `input -> width -> ... -> width -> 1`.
    pub fn new(input: usize, width: usize, depth: usize, init: InitScheme, seed: u64) -> Self {
        assert!(depth >= 1, "network needs at least one layer");
        let mut rng = rng::stream(seed, 0);
        let layers = (0..depth)
            .map(|l| {
                let fan_in = if l == 0 { input } else { width };
                let fan_out = if l + 1 == depth { 1 } else { width };
                let mut layer = Dense::zeros(fan_in, fan_out);
                if let InitScheme::SmallUniform { scale } = init {
                    if l + 1 < depth {
                        for w in &mut layer.weights {
                            *w = rng.random_range(-scale..=scale);
                        }
                    }
                }
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.trace(x).output()
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Trace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(&act, &mut z);
            if l + 1 < self.layers.len() {
                act = z.iter().copied().map(relu).collect();
            }
            pre.push(z);
        }
        Trace {
            input: x.to_vec(),
            pre,
        }
    }

    /// Adds `d_out * d e / d theta` into `grad`, laid out as [`Self::params`].
    pub(crate) fn backward(&self, trace: &Trace, d_out: f64, grad: &mut [f64]) {
        let offsets = self.offsets();
        let mut delta = vec![d_out];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let owned;
            let act: &[f64] = if l == 0 {
                &trace.input
            } else {
                owned = trace.pre[l - 1].iter().copied().map(relu).collect::<Vec<_>>();
                &owned
            };
            let base = offsets[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                for (g, a) in row.iter_mut().zip(act) {
                    *g += d * a;
                }
                grad[base + layer.weights.len() + o] += d;
            }
            if l > 0 {
                let below = &trace.pre[l - 1];
                delta = (0..layer.inputs)
                    .map(|i| {
                        if below[i] <= 0.0 {
                            return 0.0;
                        }
                        delta
                            .iter()
                            .enumerate()
                            .map(|(o, d)| d * layer.weights[o * layer.inputs + i])
                            .sum()
                    })
                    .collect();
            }
        }
    }

    fn offsets(&self) -> Vec<usize> {
        self.layers
            .iter()
            .scan(0, |acc, layer| {
                let at = *acc;
                *acc += layer.param_count();
                Some(at)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All parameters, layer by layer, weights before bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            layer.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
    }
}

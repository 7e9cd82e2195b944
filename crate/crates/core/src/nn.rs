//! Minimal fully-connected networks with hand-written reverse-mode gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense layer `y = W x + b` with `W` stored row-major (`outputs x inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weight
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| b + dot(row, x)),
        );
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize; order is fixed so the
    // result is deterministic.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        sum += a[j] * b[j];
    }
    sum
}

// Unlike f64::max this keeps NaN, so bad inputs surface as a non-finite loss.
fn relu(v: &mut f64) {
    if *v < 0.0 {
        *v = 0.0;
    }
}

/// Multi-layer perceptron with ReLU between layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Per-layer inputs saved by [`Mlp::forward_cached`].
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-uniform hidden layers; the output layer is additionally scaled by
    /// `output_scale`. Biases start at zero.
    pub fn new<R: Rng>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(sizes);
        let n = mlp.layers.len();
        for (k, layer) in mlp.layers.iter_mut().enumerate() {
            let mut bound = (6.0 / layer.inputs as f64).sqrt();
            if k + 1 == n {
                bound *= output_scale;
            }
            for w in &mut layer.weight {
                *w = rng.random_range(-bound..=bound);
            }
        }
        mlp
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        Self {
            layers: sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let n = self.layers.len();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            if k + 1 < n {
                next.iter_mut().for_each(relu);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(x.len(), self.input_dim());
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        inputs.push(x.to_vec());
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&inputs[k], &mut out);
            if k + 1 < n {
                out.iter_mut().for_each(relu);
                inputs.push(std::mem::take(&mut out));
            }
        }
        (out, MlpCache { inputs })
    }

    /// Accumulate parameter gradients into `grads` and return `dL/dx`.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let gl = &mut grads.layers[k];
            let x = &cache.inputs[k];
            let mut gin = vec![0.0; layer.inputs];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                gl.bias[o] += go;
                let row = o * layer.inputs;
                let wrow = &layer.weight[row..row + layer.inputs];
                let grow = &mut gl.weight[row..row + layer.inputs];
                for i in 0..layer.inputs {
                    grow[i] += go * x[i];
                    gin[i] += go * wrow[i];
                }
            }
            if k > 0 {
                for (gi, &xi) in gin.iter_mut().zip(x) {
                    if xi <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            g = gin;
        }
        g
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes())
    }
}

//! Feed-forward network with relu hidden layers and a sigmoid output unit,
//! with hand-written backpropagation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::sigmoid;

/// Dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.biases.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// `dims` runs input width, hidden widths..., 1.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) || dims[dims.len() - 1] != 1 {
            return Err(Error::config("layer_dims", "need positive widths ending in 1"));
        }
        Ok(Mlp {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// He-normal weights for relu layers, `N(0, 1/fan_in)` for the output
    /// layer, zero biases.
    pub fn init<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Mlp::zeros(dims)?;
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let gain = if i == last { 1.0 } else { 2.0 };
            let normal = Normal::new(0.0, (gain / layer.inputs as f64).sqrt()).expect("positive sd");
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        }
        Ok(net)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    /// Pre-sigmoid output.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_width() {
            return Err(Error::Shape {
                expected: self.input_width(),
                actual: x.len(),
            });
        }
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&a, &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut a, &mut z);
        }
        Ok(a[0])
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.logit(x).map(sigmoid)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
    }

    /// Output logits for every row plus the activations needed by
    /// [`Mlp::backward`].
    pub(crate) fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<Vec<f64>>>)> {
        let last = self.layers.len() - 1;
        let mut logits = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            if x.len() != self.input_width() {
                return Err(Error::Shape {
                    expected: self.input_width(),
                    actual: x.len(),
                });
            }
            // acts[l] is the input to layer l (post-relu for l > 0)
            let mut acts = Vec::with_capacity(self.layers.len());
            acts.push(x.clone());
            let mut z = Vec::new();
            for (i, layer) in self.layers.iter().enumerate() {
                layer.affine(&acts[i], &mut z);
                if i < last {
                    acts.push(z.iter().map(|v| v.max(0.0)).collect());
                }
            }
            logits.push(z[0]);
            caches.push(acts);
        }
        Ok((logits, caches))
    }

    /// Accumulates parameter gradients given `d loss / d logit` per row.
    pub(crate) fn backward(&self, caches: &[Vec<Vec<f64>>], dlogit: &[f64]) -> Vec<f64> {
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        for (acts, &dz_out) in caches.iter().zip(dlogit) {
            let mut delta = vec![dz_out];
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let g = &mut grads[li];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, &a) in row.iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
                if li == 0 {
                    break;
                }
                // through the weights, then the relu that produced `input`
                let mut next = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                for (n, &a) in next.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        Mlp { layers: grads }.params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_one_half() {
        let net = Mlp::zeros(&[3, 4, 1]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 5.0]).unwrap(), 0.5);
    }

    #[test]
    fn hand_evaluated_one_by_one_by_one() {
        // hidden = relu(2 * x - 0.5), output = sigmoid(-1.5 * hidden + 0.25)
        let mut net = Mlp::zeros(&[1, 1, 1]).unwrap();
        net.set_params(&[2.0, -0.5, -1.5, 0.25]);
        let hidden: f64 = (2.0f64 * 1.0 - 0.5).max(0.0);
        let expected = 1.0 / (1.0 + (-(-1.5 * hidden + 0.25f64)).exp());
        assert!((net.forward(&[1.0]).unwrap() - expected).abs() < 1e-15);
        // relu clamps negative pre-activations
        assert!((net.forward(&[-3.0]).unwrap() - 1.0 / (1.0 + (-0.25f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let net = Mlp::zeros(&[2, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { expected: 2, actual: 1 })));
        assert!(Mlp::zeros(&[2, 3]).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut rng = crate::stats::child_rng(1, 0);
        let net = Mlp::init(&[3, 5, 2, 1], &mut rng).unwrap();
        let mut copy = Mlp::zeros(&net.dims()).unwrap();
        copy.set_params(&net.params());
        assert_eq!(copy, net);
    }
}

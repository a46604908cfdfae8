use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    SiLU,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::SiLU => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::SiLU => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer computing `act(W x + b)`, with `W` stored out x in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
    version: u64,
}

/// Activations cached by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    inputs: Vec<DenseMatrix>,
    pre: Vec<DenseMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
    pub input: DenseMatrix,
}

impl MlpGrads {
    /// Parameter gradients in the same block order as [`MlpParams::blocks`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Param("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::shape("MlpParams::new bias", l.out_dim(), l.bias.len()));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.in_dim() != l.out_dim() {
                    return Err(Error::shape("MlpParams::new chain", l.out_dim(), next.in_dim()));
                }
            }
            l.weight.check_finite("MlpParams::new weight")?;
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return Err(Error::Param("final MLP activation must be Identity".into()));
        }
        Ok(Self { layers, version: 0 })
    }

    /// Layers of widths `dims[0] -> dims[1] -> ... -> dims[n]`, hidden
    /// layers using `hidden`, weights and biases drawn from
    /// `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(dims: &[usize], hidden: Activation, rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "need input and output widths");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight =
                    DenseMatrix::from_fn(fan_out, fan_in, |_, _| rng.uniform(-bound, bound));
                let bias = (0..fan_out).map(|_| rng.uniform(-bound, bound)).collect();
                let activation = if i + 1 == n { Activation::Identity } else { hidden };
                Layer {
                    weight,
                    bias,
                    activation,
                }
            })
            .collect();
        Self { layers, version: 0 }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Parameter blocks: weight then bias for each layer.
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// Mutable parameter blocks. Invalidates outstanding tapes.
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn block_names(&self) -> Vec<(String, usize, usize)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.weight"), l.out_dim(), l.in_dim()),
                    (format!("layer{i}.bias"), 1, l.out_dim()),
                ]
            })
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let x = DenseMatrix::from_vec(1, input.len(), input.to_vec())?;
        let (out, tape) = self.forward_batch(&x)?;
        Ok((out.into_vec(), tape))
    }

    /// Forward pass over a batch with one sample per row.
    pub fn forward_batch(&self, x: &DenseMatrix) -> Result<(DenseMatrix, Tape)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let z = self.affine(layer, &h)?;
            let mut a = z.clone();
            if layer.activation != Activation::Identity {
                a.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = layer.activation.apply(*v));
            }
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok((
            h,
            Tape {
                version: self.version,
                inputs,
                pre,
            },
        ))
    }

    /// Forward pass without recording a tape.
    pub fn predict_batch(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = self.affine(layer, &h)?;
            if layer.activation != Activation::Identity {
                h.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = layer.activation.apply(*v));
            }
        }
        Ok(h)
    }

    fn affine(&self, layer: &Layer, h: &DenseMatrix) -> Result<DenseMatrix> {
        if h.cols() != layer.in_dim() {
            return Err(Error::shape("mlp forward", layer.in_dim(), h.cols()));
        }
        let mut z = h.matmul_t(&layer.weight)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    /// Gradients of `sum(grad_output .* output)` with respect to every
    /// parameter and to the input.
    pub fn backward(&self, tape: &Tape, grad_output: &DenseMatrix) -> Result<MlpGrads> {
        if tape.version != self.version || tape.pre.len() != self.layers.len() {
            return Err(Error::StaleTape {
                tape: tape.version,
                params: self.version,
            });
        }
        let batch = tape.inputs[0].rows();
        if grad_output.shape() != (batch, self.out_dim()) {
            return Err(Error::shape(
                "mlp backward",
                format!("({batch}, {})", self.out_dim()),
                format!("{:?}", grad_output.shape()),
            ));
        }
        let n = self.layers.len();
        let mut weights = vec![DenseMatrix::zeros(0, 0); n];
        let mut biases = vec![Vec::new(); n];
        let mut delta = grad_output.clone();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            if layer.activation != Activation::Identity {
                for (d, z) in delta.as_mut_slice().iter_mut().zip(tape.pre[i].as_slice()) {
                    *d *= layer.activation.derivative(*z);
                }
            }
            weights[i] = delta.t_matmul(&tape.inputs[i])?;
            let mut db = vec![0.0; layer.out_dim()];
            for r in 0..delta.rows() {
                for (acc, d) in db.iter_mut().zip(delta.row(r)) {
                    *acc += d;
                }
            }
            biases[i] = db;
            delta = delta.matmul(&layer.weight)?;
        }
        Ok(MlpGrads {
            weights,
            biases,
            input: delta,
        })
    }
}

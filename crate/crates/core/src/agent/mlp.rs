use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AgentError;

/// Fully connected layer. `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Uniform in ±√(6/(fan_in+fan_out)), zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.biases))
        {
            *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Feed-forward Q-network: rectifier on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    fn check_sizes(sizes: &[usize]) -> Result<(), AgentError> {
        if sizes.len() < 2 {
            return Err(AgentError::Shape(format!(
                "need at least input and output sizes, got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(AgentError::Shape(format!("zero-width layer in {sizes:?}")));
        }
        Ok(())
    }

    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self, AgentError> {
        Self::check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self, AgentError> {
        Self::check_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, AgentError> {
        if layers.is_empty() {
            return Err(AgentError::Shape("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(AgentError::Shape(format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(AgentError::Shape(format!(
                    "layer {i} buffers do not match {}x{}",
                    l.outputs, l.inputs
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(AgentError::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    /// Σ (fan_in·fan_out + fan_out) over layers.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, AgentError> {
        if input.len() != self.input_dim() {
            return Err(AgentError::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut cur = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.outputs];
            layer.affine(&cur, &mut next);
            if i < last {
                relu(&mut next);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer's activation; `acts[0]` is the input.
    pub(crate) fn forward_cached(&self, input: &[f64], acts: &mut Vec<Vec<f64>>) {
        debug_assert_eq!(input.len(), self.input_dim());
        acts.resize_with(self.layers.len() + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(input);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.split_at_mut(i + 1);
            let out = &mut rest[0];
            out.resize(layer.outputs, 0.0);
            layer.affine(&done[i], out);
            if i < last {
                relu(out);
            }
        }
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output` and the cached
    /// activations of the same sample.
    pub(crate) fn backward(&self, acts: &[Vec<f64>], d_output: &[f64], grads: &mut Mlp) {
        let mut delta = d_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let input = &acts[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // Hidden activations are ReLU outputs, so a zero output means a zero slope.
            for (p, &a) in prev.iter_mut().zip(input) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Zeroed network of identical shape, used as a gradient buffer.
    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    /// `self -= rate · grads`
    pub fn descend(&mut self, grads: &Mlp, rate: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, dw) in l.weights.iter_mut().zip(&g.weights) {
                *w -= rate * dw;
            }
            for (b, db) in l.biases.iter_mut().zip(&g.biases) {
                *b -= rate * db;
            }
        }
    }

    pub fn copy_from(&mut self, other: &Mlp) -> Result<(), AgentError> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(AgentError::Shape(format!(
                "cannot copy {:?} into {:?}",
                other.layer_sizes(),
                self.layer_sizes()
            )));
        }
        self.layers.clone_from(&other.layers);
        Ok(())
    }

    /// Parameters in snapshot order: per layer, weights row-major then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), AgentError> {
        if params.len() != self.param_count() {
            return Err(AgentError::Dimension {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            layer_sizes: self.layer_sizes(),
            params: self.params(),
        }
    }

    pub fn from_snapshot(snap: &PolicySnapshot) -> Result<Self, AgentError> {
        let mut mlp = Mlp::zeros(&snap.layer_sizes)?;
        mlp.set_params(&snap.params)
            .map_err(|e| AgentError::Snapshot(e.to_string()))?;
        Ok(mlp)
    }
}

fn relu(xs: &mut [f64]) {
    for x in xs {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Checkpoint layout: layer sizes followed by the flat parameter vector
/// (per layer: `outputs × inputs` weights row-major, then `outputs` biases).
///
/// The binary form is little-endian: `u32` count of sizes, that many `u32`
/// sizes, then every parameter as `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl PolicySnapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.layer_sizes.len() + 8 * self.params.len());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.layer_sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for &p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AgentError> {
        let short = || AgentError::Snapshot("truncated buffer".into());
        let word = |at: usize| -> Result<u32, AgentError> {
            let b = bytes.get(at..at + 4).ok_or_else(short)?;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
        };
        let n = word(0)? as usize;
        let layer_sizes = (0..n)
            .map(|i| word(4 + 4 * i).map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let body = &bytes[4 + 4 * n..];
        if body.len() % 8 != 0 {
            return Err(AgentError::Snapshot(format!(
                "parameter block of {} bytes is not a multiple of 8",
                body.len()
            )));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            layer_sizes,
            params,
        })
    }
}

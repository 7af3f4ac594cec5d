//! Dense Q-network: forward pass, backpropagation, and a binary checkpoint
//! format. Everything is 64-bit floating point.

#![allow(clippy::needless_range_loop)]
//!
//! Parameters live in one flat vector in a fixed order: for each layer, the
//! weight matrix row-major (one row per output unit), then the biases. The
//! same order is used by the optimizer, the gradient vector, and the
//! checkpoint file.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QlearnError {
    #[error("network needs at least two layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("layer sizes must be positive")]
    ZeroLayer,
    #[error("input length {got} does not match network input dimension {want}")]
    InputDim { got: usize, want: usize },
    #[error("parameter shape mismatch: {got} values for {want} parameters")]
    ShapeMismatch { got: usize, want: usize },
    #[error("networks have different layer sizes")]
    LayerMismatch,
    #[error("q-values contain NaN")]
    NanQValues,
    #[error("training loss is not finite")]
    NonFiniteLoss,
    #[error("action index {index} out of range for {outputs} outputs")]
    BadActionIndex { index: usize, outputs: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("cannot sample {want} transitions from a buffer holding {have}")]
    BufferTooSmall { want: usize, have: usize },
    #[error("checkpoint is corrupt: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint io on {path}: {message}")]
    CheckpointIo { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSpec {
    inputs: usize,
    outputs: usize,
    weight_offset: usize,
    bias_offset: usize,
}

/// Fully connected network with rectifier hidden layers and an identity
/// output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    sizes: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

fn build_layers(sizes: &[usize]) -> Result<(Vec<LayerSpec>, usize), QlearnError> {
    if sizes.len() < 2 {
        return Err(QlearnError::TooFewLayers(sizes.len()));
    }
    if sizes.contains(&0) {
        return Err(QlearnError::ZeroLayer);
    }
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    let mut offset = 0usize;
    for w in sizes.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        layers.push(LayerSpec {
            inputs,
            outputs,
            weight_offset: offset,
            bias_offset: offset + inputs * outputs,
        });
        offset += inputs * outputs + outputs;
    }
    Ok((layers, offset))
}

impl QNetwork {
    /// Seeded initialization: weights uniform in
    /// `±sqrt(6 / (fan_in + fan_out))` per layer, biases zero.
    pub fn new(sizes: &[usize], rng: &mut SimRng) -> Result<QNetwork, QlearnError> {
        let mut net = QNetwork::zeros(sizes)?;
        for layer in net.layers.clone() {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for i in 0..layer.inputs * layer.outputs {
                net.params[layer.weight_offset + i] = rng.random::<f64>() * 2.0 * bound - bound;
            }
        }
        Ok(net)
    }

    /// All-zero parameters; maps every input to a zero vector.
    pub fn zeros(sizes: &[usize]) -> Result<QNetwork, QlearnError> {
        let (layers, count) = build_layers(sizes)?;
        Ok(QNetwork { sizes: sizes.to_vec(), layers, params: vec![0.0; count] })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Copy parameters from a same-shaped network.
    pub fn copy_params_from(&mut self, other: &QNetwork) -> Result<(), QlearnError> {
        if self.sizes != other.sizes {
            return Err(QlearnError::LayerMismatch);
        }
        self.params.copy_from_slice(&other.params);
        Ok(())
    }

    /// Q-values for one state.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, QlearnError> {
        if input.len() != self.input_dim() {
            return Err(QlearnError::InputDim { got: input.len(), want: self.input_dim() });
        }
        let mut activation = input.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            activation = self.affine(layer, &activation, l != last);
        }
        Ok(activation)
    }

    fn affine(&self, layer: &LayerSpec, input: &[f64], rectify: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(layer.outputs);
        for o in 0..layer.outputs {
            let row = layer.weight_offset + o * layer.inputs;
            let mut z = self.params[layer.bias_offset + o];
            for (i, &x) in input.iter().enumerate() {
                z += self.params[row + i] * x;
            }
            out.push(if rectify && z < 0.0 { 0.0 } else { z });
        }
        out
    }

    /// Activations of every layer for one input, `a[0]` being the input
    /// itself. Hidden activations are post-rectifier, so `a > 0` marks the
    /// active units for the backward pass.
    fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let next = self.affine(layer, &acts[l], l != last);
            acts.push(next);
        }
        acts
    }

    /// Mean squared error of the selected action values against fixed
    /// targets, plus its gradient with respect to every parameter.
    ///
    /// `loss = (1/B) * sum_i (q(s_i)[a_i] - y_i)^2`
    pub fn loss_and_gradients(
        &self,
        states: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Vec<f64>), QlearnError> {
        if states.is_empty() {
            return Err(QlearnError::EmptyBatch);
        }
        if states.len() != actions.len() || states.len() != targets.len() {
            return Err(QlearnError::ShapeMismatch { got: actions.len(), want: states.len() });
        }
        let batch = states.len() as f64;
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;

        for ((state, &action), &target) in states.iter().zip(actions).zip(targets) {
            if action >= self.output_dim() {
                return Err(QlearnError::BadActionIndex { index: action, outputs: self.output_dim() });
            }
            let acts = self.forward_trace(state);
            let q = acts.last().unwrap()[action];
            let err = q - target;
            loss += err * err / batch;

            // Output delta: only the selected action carries error.
            let mut delta = vec![0.0; self.output_dim()];
            delta[action] = 2.0 * err / batch;

            for (l, layer) in self.layers.iter().enumerate().rev() {
                let below = &acts[l];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = layer.weight_offset + o * layer.inputs;
                    for (i, &x) in below.iter().enumerate() {
                        grads[row + i] += d * x;
                    }
                    grads[layer.bias_offset + o] += d;
                }
                if l == 0 {
                    break;
                }
                // Propagate through the rectifier of the layer below:
                // inactive units (activation 0) pass no gradient.
                let mut next_delta = vec![0.0; layer.inputs];
                for (i, nd) in next_delta.iter_mut().enumerate() {
                    if below[i] <= 0.0 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for o in 0..layer.outputs {
                        if delta[o] != 0.0 {
                            acc += delta[o] * self.params[layer.weight_offset + o * layer.inputs + i];
                        }
                    }
                    *nd = acc;
                }
                delta = next_delta;
            }
        }
        Ok((loss, grads))
    }
}

/// Copy the online network's parameters into the target network.
pub fn sync_target(net: &QNetwork, target: &mut QNetwork) -> Result<(), QlearnError> {
    target.copy_params_from(net)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SEGQNET\x01";

/// Serialize a network plus training metadata.
///
/// Layout, all integers and floats little-endian:
/// magic `"SEGQNET\x01"`, `u32` layer-size count, the sizes as `u32` each,
/// `u64` seed, `u64` training steps, `u64` parameter count, then the
/// parameters as `f64` in flat order. Round-trips bit-exactly.
pub fn checkpoint_to_bytes(net: &QNetwork, seed: u64, train_steps: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 + net.sizes.len() * 4 + 24 + net.params.len() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(net.sizes.len() as u32).to_le_bytes());
    for &s in &net.sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&train_steps.to_le_bytes());
    out.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
    for p in &net.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Parse a checkpoint produced by [`checkpoint_to_bytes`].
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(QNetwork, u64, u64), QlearnError> {
    let bad = |msg: &str| QlearnError::BadCheckpoint(msg.to_string());
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], QlearnError> {
        if *cursor + n > bytes.len() {
            return Err(bad("truncated"));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };

    if take(&mut cursor, 8)? != CHECKPOINT_MAGIC {
        return Err(bad("wrong magic"));
    }
    let n_sizes = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(bad("implausible layer count"));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize);
    }
    let seed = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
    let steps = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
    let count = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;

    let mut net = QNetwork::zeros(&sizes)?;
    if net.param_count() != count {
        return Err(bad("parameter count does not match layer sizes"));
    }
    for p in net.params.iter_mut() {
        *p = f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
    }
    if cursor != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok((net, seed, steps))
}

pub fn save_checkpoint(
    net: &QNetwork,
    seed: u64,
    train_steps: u64,
    path: &Path,
) -> Result<(), QlearnError> {
    let bytes = checkpoint_to_bytes(net, seed, train_steps);
    File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| QlearnError::CheckpointIo { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_checkpoint(path: &Path) -> Result<(QNetwork, u64, u64), QlearnError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| QlearnError::CheckpointIo { path: path.display().to_string(), message: e.to_string() })?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&[6, 4, 5]).unwrap();
        let q = net.forward(&[1.0, -2.0, 0.5, 3.0, -0.1, 0.0]).unwrap();
        assert_eq!(q, vec![0.0; 5]);
    }

    #[test]
    fn forward_matches_hand_computed_fixture() {
        // 1 -> 2 -> 5 with hand-set weights.
        let mut net = QNetwork::zeros(&[1, 2, 5]).unwrap();
        // Layer 0: w = [[2], [-3]], b = [0.5, 1.0]
        // Layer 1: w rows per output, b = 0.1 each.
        let params = net.params_mut();
        params[0] = 2.0; // w0[0][0]
        params[1] = -3.0; // w0[1][0]
        params[2] = 0.5; // b0[0]
        params[3] = 1.0; // b0[1]
        // layer 1 weights: 5 outputs x 2 inputs
        let w1 = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 2.0], [0.5, 0.5]];
        for (o, row) in w1.iter().enumerate() {
            params[4 + o * 2] = row[0];
            params[4 + o * 2 + 1] = row[1];
        }
        for o in 0..5 {
            params[4 + 10 + o] = 0.1;
        }
        // Input 1.0: hidden z = [2.5, -2.0] -> relu [2.5, 0.0]
        let q = net.forward(&[1.0]).unwrap();
        let h = [2.5, 0.0];
        let expect: Vec<f64> =
            w1.iter().map(|row| row[0] * h[0] + row[1] * h[1] + 0.1).collect();
        assert_eq!(q, expect);
        assert_eq!(q, vec![2.6, 0.1, 2.6, -2.4, 1.35]);
    }

    #[test]
    fn scaling_a_weight_row_scales_its_preactivation() {
        let mut rng = rng_from_seed(2);
        let net = QNetwork::new(&[3, 4, 5], &mut rng).unwrap();
        let mut scaled = net.clone();
        // Double output 0's row in the last layer; bias zeroed to expose
        // pure linearity.
        let spec = scaled.layers[1];
        scaled.params[spec.bias_offset] = 0.0;
        let reference = scaled.clone();
        for i in 0..spec.inputs {
            scaled.params[spec.weight_offset + i] *= 2.0;
        }
        let x = [0.3, -0.7, 1.1];
        let q_ref = reference.forward(&x).unwrap();
        let q_scaled = scaled.forward(&x).unwrap();
        assert!((q_scaled[0] - 2.0 * q_ref[0]).abs() < 1e-12);
        // Other outputs untouched.
        for o in 1..5 {
            assert_eq!(q_scaled[o], q_ref[o]);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = QNetwork::zeros(&[4, 3, 5]).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(QlearnError::InputDim { got: 2, want: 4 })
        ));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let n1 = QNetwork::new(&[26, 64, 64, 5], &mut rng_from_seed(9)).unwrap();
        let n2 = QNetwork::new(&[26, 64, 64, 5], &mut rng_from_seed(9)).unwrap();
        assert_eq!(n1, n2);
        let bound0 = (6.0 / (26 + 64) as f64).sqrt();
        for &w in &n1.params()[..26 * 64] {
            assert!(w.abs() <= bound0);
        }
        // Biases start at zero.
        let spec = n1.layers[0];
        for o in 0..spec.outputs {
            assert_eq!(n1.params()[spec.bias_offset + o], 0.0);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = rng_from_seed(13);
        let net = QNetwork::new(&[4, 6, 5], &mut rng).unwrap();
        let states: Vec<Vec<f64>> =
            (0..4).map(|_| (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let state_refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
        let actions = [0usize, 2, 4, 1];
        let targets = [0.5, -1.0, 0.25, 2.0];

        let (_, grads) = net.loss_and_gradients(&state_refs, &actions, &targets).unwrap();
        let h = 1e-5;
        for p in 0..net.param_count() {
            let mut plus = net.clone();
            plus.params_mut()[p] += h;
            let mut minus = net.clone();
            minus.params_mut()[p] -= h;
            let (lp, _) = plus.loss_and_gradients(&state_refs, &actions, &targets).unwrap();
            let (lm, _) = minus.loss_and_gradients(&state_refs, &actions, &targets).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let denom = grads[p].abs().max(numeric.abs()).max(1e-6);
            assert!(
                ((grads[p] - numeric) / denom).abs() <= 1e-4,
                "param {p}: analytic {} vs numeric {numeric}",
                grads[p]
            );
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let mut rng = rng_from_seed(4);
        let net = QNetwork::new(&[10, 8, 5], &mut rng).unwrap();
        let bytes = checkpoint_to_bytes(&net, 1234, 42);
        let (loaded, seed, steps) = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(seed, 1234);
        assert_eq!(steps, 42);
        assert_eq!(loaded, net);
        let again = checkpoint_to_bytes(&loaded, seed, steps);
        assert_eq!(again, bytes);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let net = QNetwork::zeros(&[3, 5]).unwrap();
        let mut bytes = checkpoint_to_bytes(&net, 0, 0);
        bytes[0] = b'X';
        assert!(matches!(checkpoint_from_bytes(&bytes), Err(QlearnError::BadCheckpoint(_))));
        let bytes = checkpoint_to_bytes(&net, 0, 0);
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn sync_target_copies_then_diverges() {
        let mut rng = rng_from_seed(5);
        let net = QNetwork::new(&[4, 6, 5], &mut rng).unwrap();
        let mut target = QNetwork::new(&[4, 6, 5], &mut rng).unwrap();
        sync_target(&net, &mut target).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(net.forward(&x).unwrap(), target.forward(&x).unwrap());
    }
}

//! Sequential stacks of (optional upsample, conv, activation) layers with a
//! cache-based backward pass.

use ndarray::{Array1, Array2};

use super::conv::{upsample, upsample_backward, Activation, Conv1d};

#[derive(Clone, Debug)]
pub struct ConvLayer {
    /// Nearest-neighbor upsampling factor applied before the conv; 1 disables.
    pub upsample: usize,
    pub conv: Conv1d,
    pub act: Activation,
}

impl ConvLayer {
    pub fn new(conv: Conv1d, act: Activation) -> Self {
        ConvLayer {
            upsample: 1,
            conv,
            act,
        }
    }

    pub fn upsampled(factor: usize, conv: Conv1d, act: Activation) -> Self {
        ConvLayer {
            upsample: factor,
            conv,
            act,
        }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        self.conv.out_len(in_len * self.upsample)
    }
}

/// Per-layer activations saved by the forward pass: the conv input (after any
/// upsampling) and the post-activation output.
pub struct StackCache {
    pub inputs: Vec<Array2<f64>>,
    pub outputs: Vec<Array2<f64>>,
}

pub type StackGrads = Vec<(Array2<f64>, Array1<f64>)>;

#[derive(Clone, Debug)]
pub struct ConvStack {
    pub layers: Vec<ConvLayer>,
}

impl ConvStack {
    pub fn new(layers: Vec<ConvLayer>) -> Self {
        ConvStack { layers }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        self.layers.iter().fold(in_len, |l, layer| layer.out_len(l))
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, StackCache) {
        let mut cache = StackCache {
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.clone();
        for layer in &self.layers {
            let conv_in = if layer.upsample > 1 {
                upsample(&cur, layer.upsample)
            } else {
                cur
            };
            let mut y = layer.conv.forward(&conv_in);
            layer.act.forward_inplace(&mut y);
            cache.inputs.push(conv_in);
            cache.outputs.push(y.clone());
            cur = y;
        }
        (cur, cache)
    }

    /// Backpropagate `gout` through the stack. When `grads` is provided,
    /// parameter gradients accumulate into it (same layer order); otherwise
    /// only the input gradient is computed.
    pub fn backward(
        &self,
        cache: &StackCache,
        gout: &Array2<f64>,
        mut grads: Option<&mut StackGrads>,
    ) -> Array2<f64> {
        let mut g = gout.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            layer.act.backward_inplace(&mut g, &cache.outputs[i]);
            let param = grads
                .as_deref_mut()
                .map(|gs| &mut gs[i])
                .map(|(gw, gb)| (gw, gb));
            let gin = layer.conv.backward(&cache.inputs[i], &g, param);
            g = if layer.upsample > 1 {
                upsample_backward(&gin, layer.upsample)
            } else {
                gin
            };
        }
        g
    }

    pub fn zero_grads(&self) -> StackGrads {
        self.layers
            .iter()
            .map(|l| {
                (
                    Array2::zeros(l.conv.w.dim()),
                    Array1::zeros(l.conv.b.len()),
                )
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.conv.param_count()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_stack(rng: &mut ChaCha8Rng) -> ConvStack {
        ConvStack::new(vec![
            ConvLayer::new(Conv1d::new(1, 3, 5, 2, rng), Activation::Elu),
            ConvLayer::new(Conv1d::new(3, 4, 3, 2, rng), Activation::Tanh),
            ConvLayer::upsampled(2, Conv1d::new(4, 2, 3, 1, rng), Activation::Identity),
        ])
    }

    #[test]
    fn out_len_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stack = tiny_stack(&mut rng);
        for len in [16, 17, 31, 100] {
            let x = ndarray::Array2::from_shape_fn((1, len), |(_, j)| (j as f64 * 0.1).sin());
            let (y, _) = stack.forward(&x);
            assert_eq!(y.ncols(), stack.out_len(len));
        }
    }

    #[test]
    fn stacked_input_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stack = tiny_stack(&mut rng);
        let x = ndarray::Array2::from_shape_fn((1, 24), |(_, j)| (0.37 * j as f64).sin());
        let (y, cache) = stack.forward(&x);
        let readout = ndarray::Array2::from_shape_fn(y.dim(), |(i, j)| (0.21 * (i * 11 + j) as f64).cos());
        let gx = stack.backward(&cache, &readout, None);
        let h = 1e-6;
        for j in [0usize, 7, 23] {
            let mut xp = x.clone();
            xp[[0, j]] += h;
            let lp = (&stack.forward(&xp).0 * &readout).sum();
            xp[[0, j]] -= 2.0 * h;
            let lm = (&stack.forward(&xp).0 * &readout).sum();
            let fd = (lp - lm) / (2.0 * h);
            let an = gx[[0, j]];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-9);
            assert!(rel < 1e-5, "x[0,{j}]: rel {rel}");
        }
    }

    #[test]
    fn stacked_param_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut stack = tiny_stack(&mut rng);
        let x = ndarray::Array2::from_shape_fn((1, 24), |(_, j)| (0.29 * j as f64).cos());
        let (y, cache) = stack.forward(&x);
        let readout = ndarray::Array2::from_shape_fn(y.dim(), |(i, j)| 0.12 * (i as f64 - j as f64 * 0.3));
        let mut grads = stack.zero_grads();
        stack.backward(&cache, &readout, Some(&mut grads));
        let h = 1e-6;
        for layer_idx in 0..stack.layers.len() {
            let idx = (0usize, 1usize);
            let orig = stack.layers[layer_idx].conv.w[idx];
            stack.layers[layer_idx].conv.w[idx] = orig + h;
            let lp = (&stack.forward(&x).0 * &readout).sum();
            stack.layers[layer_idx].conv.w[idx] = orig - h;
            let lm = (&stack.forward(&x).0 * &readout).sum();
            stack.layers[layer_idx].conv.w[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = grads[layer_idx].0[idx];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-9);
            assert!(rel < 1e-5, "layer {layer_idx} w: rel {rel}");
        }
    }

    #[test]
    fn four_stride_four_layers_give_ceil_over_256() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let stack = ConvStack::new(
            (0..4)
                .map(|i| {
                    ConvLayer::new(
                        Conv1d::new(if i == 0 { 1 } else { 2 }, 2, 9, 4, &mut rng),
                        Activation::Elu,
                    )
                })
                .collect(),
        );
        for len in [48_000usize, 48_001, 16_000, 1, 255, 256, 257] {
            assert_eq!(stack.out_len(len), len.div_ceil(256), "len {len}");
        }
    }
}

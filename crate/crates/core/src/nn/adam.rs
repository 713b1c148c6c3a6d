//! Adam over a conv stack's parameters.

use ndarray::{Array1, Array2};

use super::stack::{ConvStack, StackGrads};

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Adam {
    pub fn new(stack: &ConvStack, lr: f64) -> Self {
        let zeros: Vec<(Array2<f64>, Array1<f64>)> = stack
            .layers
            .iter()
            .map(|l| {
                (
                    Array2::zeros(l.conv.w.dim()),
                    Array1::zeros(l.conv.b.len()),
                )
            })
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, stack: &mut ConvStack, grads: &StackGrads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, layer) in stack.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[i];
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            mw.zip_mut_with(gw, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            vw.zip_mut_with(gw, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            mb.zip_mut_with(gb, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            vb.zip_mut_with(gb, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            ndarray::Zip::from(&mut layer.conv.w)
                .and(&*mw)
                .and(&*vw)
                .for_each(|w, &m, &v| {
                    *w -= self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
                });
            ndarray::Zip::from(&mut layer.conv.b)
                .and(&*mb)
                .and(&*vb)
                .for_each(|b, &m, &v| {
                    *b -= self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Conv1d, ConvLayer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adam_reduces_quadratic_loss() {
        // Fit a single conv layer to reproduce a fixed target map.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut stack = ConvStack::new(vec![ConvLayer::new(
            Conv1d::new(1, 2, 3, 1, &mut rng),
            Activation::Identity,
        )]);
        let x = ndarray::Array2::from_shape_fn((1, 32), |(_, j)| (0.41 * j as f64).sin());
        let target = ndarray::Array2::from_shape_fn((2, 32), |(i, j)| {
            0.5 * (0.41 * j as f64 + i as f64).cos()
        });
        let mut opt = Adam::new(&stack, 0.02);
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..300 {
            let (y, cache) = stack.forward(&x);
            let diff = &y - &target;
            last = diff.mapv(|d| d * d).sum();
            first.get_or_insert(last);
            let gout = diff.mapv(|d| 2.0 * d);
            let mut grads = stack.zero_grads();
            stack.backward(&cache, &gout, Some(&mut grads));
            opt.step(&mut stack, &grads);
        }
        let first = first.unwrap();
        assert!(last < 0.05 * first, "loss {first} -> {last}");
    }
}

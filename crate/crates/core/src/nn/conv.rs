//! 1-D convolution with "same" padding (output length ceil(in/stride)) and
//! exact input/weight gradients.

use ndarray::{Array1, Array2};
use rand::Rng;

use super::ceil_div;

/// Elementwise activation. ELU is C1 everywhere, which keeps central
/// finite-difference checks clean; the derivative is recoverable from the
/// output alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Elu,
    Tanh,
}

impl Activation {
    pub fn forward_inplace(&self, x: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Elu => x.mapv_inplace(|v| if v > 0.0 { v } else { v.exp() - 1.0 }),
            Activation::Tanh => x.mapv_inplace(f64::tanh),
        }
    }

    /// Multiply `grad` by the activation derivative, expressed through the
    /// activation output `y`.
    pub fn backward_inplace(&self, grad: &mut Array2<f64>, y: &Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Elu => grad.zip_mut_with(y, |g, &o| {
                *g *= if o > 0.0 { 1.0 } else { o + 1.0 };
            }),
            Activation::Tanh => grad.zip_mut_with(y, |g, &o| *g *= 1.0 - o * o),
        }
    }
}

/// 1-D convolution over (channels, time) arrays.
#[derive(Clone, Debug)]
pub struct Conv1d {
    /// (out_ch, in_ch * k), row-major over (in_ch, tap).
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let bound = (1.0 / (in_ch * k) as f64).sqrt();
        let w = Array2::from_shape_fn((out_ch, in_ch * k), |_| rng.gen_range(-bound..bound));
        let b = Array1::from_shape_fn(out_ch, |_| rng.gen_range(-bound..bound));
        Conv1d {
            w,
            b,
            in_ch,
            out_ch,
            k,
            stride,
        }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        ceil_div(in_len, self.stride)
    }

    fn pad_left(&self, in_len: usize) -> usize {
        let out_t = self.out_len(in_len);
        let total = ((out_t - 1) * self.stride + self.k).saturating_sub(in_len);
        total / 2
    }

    fn im2col(&self, x: &Array2<f64>) -> Array2<f64> {
        let in_len = x.ncols();
        let out_t = self.out_len(in_len);
        let pad_left = self.pad_left(in_len);
        let mut col = Array2::zeros((self.in_ch * self.k, out_t));
        for c in 0..self.in_ch {
            let xr = x.row(c);
            for j in 0..self.k {
                let mut cr = col.row_mut(c * self.k + j);
                for t in 0..out_t {
                    let src = t * self.stride + j;
                    if src >= pad_left && src - pad_left < in_len {
                        cr[t] = xr[src - pad_left];
                    }
                }
            }
        }
        col
    }

    /// Forward pass: (in_ch, t) -> (out_ch, ceil(t/stride)).
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.in_ch, "channel mismatch");
        let col = self.im2col(x);
        let mut y = self.w.dot(&col);
        for (mut row, &b) in y.rows_mut().into_iter().zip(self.b.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        y
    }

    /// Gradient with respect to the input; optionally accumulates parameter
    /// gradients into (gw, gb).
    pub fn backward(
        &self,
        x: &Array2<f64>,
        gy: &Array2<f64>,
        param_grads: Option<(&mut Array2<f64>, &mut Array1<f64>)>,
    ) -> Array2<f64> {
        let in_len = x.ncols();
        let out_t = self.out_len(in_len);
        assert_eq!(gy.dim(), (self.out_ch, out_t), "output grad shape");
        if let Some((gw, gb)) = param_grads {
            let col = self.im2col(x);
            let gwn = gy.dot(&col.t());
            *gw += &gwn;
            for (o, g) in gb.iter_mut().enumerate() {
                *g += gy.row(o).sum();
            }
        }
        let gcol = self.w.t().dot(gy);
        let pad_left = self.pad_left(in_len);
        let mut gx = Array2::zeros((self.in_ch, in_len));
        for c in 0..self.in_ch {
            let mut gxr = gx.row_mut(c);
            for j in 0..self.k {
                let gr = gcol.row(c * self.k + j);
                for t in 0..out_t {
                    let src = t * self.stride + j;
                    if src >= pad_left && src - pad_left < in_len {
                        gxr[src - pad_left] += gr[t];
                    }
                }
            }
        }
        gx
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Nearest-neighbor upsampling by an integer factor.
pub fn upsample(x: &Array2<f64>, factor: usize) -> Array2<f64> {
    if factor == 1 {
        return x.clone();
    }
    let (c, t) = x.dim();
    Array2::from_shape_fn((c, t * factor), |(i, j)| x[[i, j / factor]])
}

/// Adjoint of `upsample`: sum gradient groups back down.
pub fn upsample_backward(gy: &Array2<f64>, factor: usize) -> Array2<f64> {
    if factor == 1 {
        return gy.clone();
    }
    let (c, t_up) = gy.dim();
    let t = t_up / factor;
    let mut gx = Array2::zeros((c, t));
    for i in 0..c {
        for j in 0..t_up {
            gx[[i, j / factor]] += gy[[i, j]];
        }
    }
    gx
}

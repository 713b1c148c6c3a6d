//! CTC negative log-likelihood with exact logit gradients (log-space
//! forward/backward) and greedy best-path decoding.

use ndarray::Array2;

use super::{id_to_char, BLANK};

fn logsumexp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

fn logsumexp2(a: f64, b: f64) -> f64 {
    logsumexp3(a, b, f64::NEG_INFINITY)
}

/// Column-wise log-softmax of (classes, time) logits.
pub fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut col in out.columns_mut() {
        let m = col.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + col.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        col.mapv_inplace(|v| v - lse);
    }
    out
}

/// CTC loss -ln P(labels | logits) and its gradient with respect to the
/// logits. Labels are class ids (< blank). Returns +inf with a zero gradient
/// when no alignment fits in the available frames.
pub fn ctc_loss_grad(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let (classes, t_len) = logits.dim();
    assert!(classes > BLANK, "logit rows must cover the blank class");
    assert!(labels.iter().all(|&l| l < BLANK), "labels must be non-blank classes");
    let lp = log_softmax(logits);

    let s_len = 2 * labels.len() + 1;
    let ext = |s: usize| -> usize {
        if s % 2 == 0 {
            BLANK
        } else {
            labels[s / 2]
        }
    };

    let neg = f64::NEG_INFINITY;
    let mut alpha = Array2::from_elem((t_len, s_len), neg);
    alpha[[0, 0]] = lp[[BLANK, 0]];
    if s_len > 1 {
        alpha[[0, 1]] = lp[[ext(1), 0]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let stay = alpha[[t - 1, s]];
            let step = if s >= 1 { alpha[[t - 1, s - 1]] } else { neg };
            let skip = if s >= 2 && ext(s) != BLANK && ext(s) != ext(s - 2) {
                alpha[[t - 1, s - 2]]
            } else {
                neg
            };
            let acc = logsumexp3(stay, step, skip);
            if acc != neg {
                alpha[[t, s]] = acc + lp[[ext(s), t]];
            }
        }
    }
    let log_p = if s_len > 1 {
        logsumexp2(alpha[[t_len - 1, s_len - 1]], alpha[[t_len - 1, s_len - 2]])
    } else {
        alpha[[t_len - 1, 0]]
    };
    if log_p == neg {
        return (f64::INFINITY, Array2::zeros(logits.dim()));
    }

    let mut beta = Array2::from_elem((t_len, s_len), neg);
    beta[[t_len - 1, s_len - 1]] = lp[[ext(s_len - 1), t_len - 1]];
    if s_len > 1 {
        beta[[t_len - 1, s_len - 2]] = lp[[ext(s_len - 2), t_len - 1]];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let stay = beta[[t + 1, s]];
            let step = if s + 1 < s_len { beta[[t + 1, s + 1]] } else { neg };
            let skip = if s + 2 < s_len && ext(s + 2) != BLANK && ext(s + 2) != ext(s) {
                beta[[t + 1, s + 2]]
            } else {
                neg
            };
            let acc = logsumexp3(stay, step, skip);
            if acc != neg {
                beta[[t, s]] = acc + lp[[ext(s), t]];
            }
        }
    }

    // dL/du[k,t] = softmax[k,t] - sum_{s: ext(s)=k} exp(alpha + beta - lp[k,t] - logP)
    let mut grad = lp.mapv(f64::exp);
    for t in 0..t_len {
        let mut per_class = vec![neg; classes];
        for s in 0..s_len {
            let a = alpha[[t, s]];
            let b = beta[[t, s]];
            if a == neg || b == neg {
                continue;
            }
            let k = ext(s);
            per_class[k] = logsumexp2(per_class[k], a + b - lp[[k, t]]);
        }
        for (k, &acc) in per_class.iter().enumerate() {
            if acc != neg {
                grad[[k, t]] -= (acc - log_p).exp();
            }
        }
    }
    (-log_p, grad)
}

/// Best-path decode: collapse repeats, drop blanks, then tidy whitespace.
pub fn greedy_decode(logits: &Array2<f64>) -> String {
    let (_, t_len) = logits.dim();
    let mut prev = usize::MAX;
    let mut raw = String::new();
    for t in 0..t_len {
        let col = logits.column(t);
        let mut best = 0;
        for k in 1..col.len() {
            if col[k] > col[best] {
                best = k;
            }
        }
        if best != prev && best != BLANK {
            raw.push(id_to_char(best));
        }
        prev = best;
    }
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

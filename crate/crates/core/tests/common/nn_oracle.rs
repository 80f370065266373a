//! Direct-evaluation reference for the network: nested-loop convolution,
//! scalar LSTM recurrence and an explicit dense product, all in f64 and
//! reading parameters by name.

use mstm_core::nn::{ModelConfig, ModelParams};

fn t<'a>(p: &'a ModelParams<f64>, name: &str) -> &'a [f64] {
    &p.get(name).unwrap_or_else(|| panic!("missing tensor {name}")).data
}

/// Same-padded convolution with a 6-deep loop nest.
pub fn conv(x: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64], k: usize) -> Vec<f64> {
    let cout = bias.len();
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = bias[o];
                for c in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as isize + ky as isize - pad;
                            let sx = xx as isize + kx as isize - pad;
                            if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                acc += weight[((o * cin + c) * k + ky) * k + kx]
                                    * x[(c * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                }
                out[(o * h + y) * w + xx] = acc;
            }
        }
    }
    out
}

pub fn relu(x: &mut [f64]) {
    for v in x {
        *v = v.max(0.0);
    }
}

pub fn maxpool(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![f64::NEG_INFINITY; c * ho * wo];
    for ch in 0..c {
        for y in 0..h - h % 2 {
            for xx in 0..w - w % 2 {
                let o = (ch * ho + y / 2) * wo + xx / 2;
                out[o] = out[o].max(x[(ch * h + y) * w + xx]);
            }
        }
    }
    out
}

pub fn conv_block(p: &ModelParams<f64>, image: &[f64]) -> Vec<f64> {
    let cfg = p.config;
    let (h, w, k) = (cfg.height, cfg.width, cfg.kernel);
    let mut a = conv(image, cfg.fields, h, w, t(p, "conv1.weight"), t(p, "conv1.bias"), k);
    relu(&mut a);
    let a = maxpool(&a, cfg.conv1_out, h, w);
    let mut b = conv(&a, cfg.conv1_out, h / 2, w / 2, t(p, "conv2.weight"), t(p, "conv2.bias"), k);
    relu(&mut b);
    maxpool(&b, cfg.conv2_out, h / 2, w / 2)
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Stacked LSTM over `xs` (one vector per step); returns the top layer's
/// last hidden state.
pub fn lstm(p: &ModelParams<f64>, xs: &[Vec<f64>]) -> Vec<f64> {
    let cfg = p.config;
    let hd = cfg.lstm_hidden;
    let mut seq: Vec<Vec<f64>> = xs.to_vec();
    for l in 0..cfg.lstm_layers {
        let w_ih = t(p, &format!("lstm.{l}.weight_ih"));
        let w_hh = t(p, &format!("lstm.{l}.weight_hh"));
        let b_ih = t(p, &format!("lstm.{l}.bias_ih"));
        let b_hh = t(p, &format!("lstm.{l}.bias_hh"));
        let n_in = seq[0].len();
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut outs = Vec::new();
        for x in &seq {
            let gate = |g: usize, j: usize| {
                let row = g * hd + j;
                let mut z = b_ih[row] + b_hh[row];
                for i in 0..n_in {
                    z += w_ih[row * n_in + i] * x[i];
                }
                for i in 0..hd {
                    z += w_hh[row * hd + i] * h[i];
                }
                z
            };
            let mut h_new = vec![0.0; hd];
            let mut c_new = vec![0.0; hd];
            for j in 0..hd {
                let i_g = sig(gate(0, j));
                let f_g = sig(gate(1, j));
                let g_g = gate(2, j).tanh();
                let o_g = sig(gate(3, j));
                c_new[j] = f_g * c[j] + i_g * g_g;
                h_new[j] = o_g * c_new[j].tanh();
            }
            h = h_new;
            c = c_new;
            outs.push(h.clone());
        }
        seq = outs;
    }
    seq.pop().expect("at least one step")
}

/// Full model on one window `(T, F, H, W)`; returns `F * H * W` values.
pub fn forward(p: &ModelParams<f64>, window: &[f64]) -> Vec<f64> {
    let cfg: ModelConfig = p.config;
    let frame = cfg.frame_len();
    let feats: Vec<Vec<f64>> = window.chunks_exact(frame).map(|img| conv_block(p, img)).collect();
    let h = lstm(p, &feats);
    let w = t(p, "dense.weight");
    let b = t(p, "dense.bias");
    (0..frame)
        .map(|r| b[r] + (0..h.len()).map(|j| w[r * h.len() + j] * h[j]).sum::<f64>())
        .collect()
}

/// Batch-mean MSE through the oracle.
pub fn loss(p: &ModelParams<f64>, inputs: &[f64], targets: &[f64], batch: usize) -> f64 {
    let cfg = p.config;
    let win = cfg.window * cfg.frame_len();
    let frame = cfg.frame_len();
    let mut total = 0.0;
    for b in 0..batch {
        let y = forward(p, &inputs[b * win..(b + 1) * win]);
        total += y
            .iter()
            .zip(&targets[b * frame..(b + 1) * frame])
            .map(|(a, t)| (a - t) * (a - t))
            .sum::<f64>();
    }
    total / (batch * frame) as f64
}

/// Worst `|analytic - fd| / max(|fd|, 1e-8)` per tensor, using central
/// differences with step `eps` on the library's own forward pass.
pub fn gradient_check(
    params: &ModelParams<f64>,
    inputs: &[f64],
    targets: &[f64],
    batch: usize,
    eps: f64,
) -> Vec<(String, f64)> {
    let (_, grads) = mstm_core::nn::loss_and_gradient(params, inputs, targets, batch).expect("gradient");
    let eval = |p: &ModelParams<f64>| {
        let acts = mstm_core::nn::forward_batch(p, inputs, batch).expect("forward");
        mstm_core::nn::mse_loss(&acts.output, targets).expect("loss")
    };
    let mut report = Vec::new();
    let mut probe = params.clone();
    for (ti, tensor) in params.tensors.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..tensor.len() {
            let orig = tensor.data[i];
            probe.tensors[ti].data[i] = orig + eps;
            let up = eval(&probe);
            probe.tensors[ti].data[i] = orig - eps;
            let down = eval(&probe);
            probe.tensors[ti].data[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            let analytic = grads.tensors[ti].data[i];
            worst = worst.max((analytic - fd).abs() / fd.abs().max(1e-8));
        }
        report.push((tensor.name.clone(), worst));
    }
    report
}

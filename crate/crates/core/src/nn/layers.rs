//! Convolution, ReLU + max-pool and LSTM kernels with their backward passes.
//!
//! Images are `(channels, height, width)` row-major. LSTM sequences are laid
//! out time-major: row `t * batch + b`.

use super::scalar::{gemm, Mat, Scalar};

/// Convolution geometry for one image.
#[derive(Clone, Copy, Debug)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl ConvShape {
    pub fn col_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.plane()
    }

    pub fn pooled_len(&self) -> usize {
        self.out_channels * (self.height / 2) * (self.width / 2)
    }
}

/// Unfolds `x` into `cols` of shape `(C*k*k, H*W)` with zero padding.
pub fn im2col<S: Scalar>(x: &[S], s: &ConvShape, cols: &mut [S]) {
    let (h, w, k) = (s.height, s.width, s.kernel);
    let pad = (k / 2) as isize;
    let plane = s.plane();
    for c in 0..s.in_channels {
        let src = &x[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.iter_mut().for_each(|v| *v = S::zero());
                        continue;
                    }
                    let line = &src[sy as usize * w..(sy as usize + 1) * w];
                    for (xx, v) in out.iter_mut().enumerate() {
                        let sx = xx as isize + dx;
                        *v = if sx < 0 || sx >= w as isize {
                            S::zero()
                        } else {
                            line[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `dx`.
pub fn col2im<S: Scalar>(cols: &[S], s: &ConvShape, dx: &mut [S]) {
    let (h, w, k) = (s.height, s.width, s.kernel);
    let pad = (k / 2) as isize;
    let plane = s.plane();
    for c in 0..s.in_channels {
        let dst = &mut dx[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let dy = ky as isize - pad;
                let ddx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let line = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                    for xx in 0..w {
                        let sx = xx as isize + ddx;
                        if sx >= 0 && sx < w as isize {
                            line[sx as usize] = line[sx as usize] + src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

/// Pre-activation convolution `W * cols + b` into `out` `(Cout, H*W)`.
pub fn conv_forward<S: Scalar>(weight: &[S], bias: &[S], cols: &[S], s: &ConvShape, out: &mut [S]) {
    let plane = s.plane();
    for (o, &b) in bias.iter().enumerate() {
        out[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v = b);
    }
    gemm(
        S::one(),
        Mat::new(weight, s.out_channels, s.col_rows()),
        Mat::new(cols, s.col_rows(), plane),
        S::one(),
        out,
    );
}

/// ReLU followed by 2x2 stride-2 max pooling. Stores the flat in-plane
/// index of each window's maximum (first in scan order on ties).
pub fn relu_pool<S: Scalar>(pre: &[S], channels: usize, h: usize, w: usize, out: &mut [S], arg: &mut [u32]) {
    let (ho, wo) = (h / 2, w / 2);
    for c in 0..channels {
        let src = &pre[c * h * w..(c + 1) * h * w];
        for y in 0..ho {
            for x in 0..wo {
                let base = 2 * y * w + 2 * x;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                let o = c * ho * wo + y * wo + x;
                out[o] = src[best].max(S::zero());
                arg[o] = best as u32;
            }
        }
    }
}

/// Routes pooled gradients back to the pre-activation map through the
/// stored maxima and the ReLU gate.
pub fn relu_pool_backward<S: Scalar>(
    d_out: &[S],
    pooled: &[S],
    arg: &[u32],
    channels: usize,
    h: usize,
    w: usize,
    d_pre: &mut [S],
) {
    d_pre.iter_mut().for_each(|v| *v = S::zero());
    let per = (h / 2) * (w / 2);
    for c in 0..channels {
        for j in 0..per {
            let o = c * per + j;
            if pooled[o] > S::zero() {
                d_pre[c * h * w + arg[o] as usize] = d_out[o];
            }
        }
    }
}

/// Accumulates weight/bias gradients of one image and, when `dcols` is
/// given, writes the column-space input gradient into it.
pub fn conv_backward<S: Scalar>(
    weight: &[S],
    cols: &[S],
    d_pre: &[S],
    s: &ConvShape,
    d_weight: &mut [S],
    d_bias: &mut [S],
    dcols: Option<&mut [S]>,
) {
    let plane = s.plane();
    for (o, db) in d_bias.iter_mut().enumerate() {
        *db = *db + d_pre[o * plane..(o + 1) * plane].iter().copied().sum::<S>();
    }
    gemm(
        S::one(),
        Mat::new(d_pre, s.out_channels, plane),
        Mat::new(cols, s.col_rows(), plane).t(),
        S::one(),
        d_weight,
    );
    if let Some(dcols) = dcols {
        gemm(
            S::one(),
            Mat::new(weight, s.out_channels, s.col_rows()).t(),
            Mat::new(d_pre, s.out_channels, plane),
            S::zero(),
            dcols,
        );
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Parameters of one LSTM layer, gates ordered (input, forget, cell, output).
#[derive(Clone, Copy)]
pub struct LstmWeights<'a, S> {
    pub w_ih: &'a [S],
    pub w_hh: &'a [S],
    pub b_ih: &'a [S],
    pub b_hh: &'a [S],
    pub input: usize,
    pub hidden: usize,
}

/// Activations of one LSTM layer kept for the backward pass, time-major.
#[derive(Clone, Debug, Default)]
pub struct LstmCache<S> {
    /// Gate activations after their nonlinearity, `(T, B, 4h)`.
    pub gates: Vec<S>,
    pub cell: Vec<S>,
    pub hidden: Vec<S>,
}

/// Runs one layer over `x` `(T*B, input)` from zero state.
pub fn lstm_layer_forward<S: Scalar>(w: &LstmWeights<'_, S>, x: &[S], steps: usize, batch: usize) -> LstmCache<S> {
    let h = w.hidden;
    let g4 = 4 * h;
    let rows = steps * batch;
    let mut gates = vec![S::zero(); rows * g4];
    for r in 0..rows {
        let row = &mut gates[r * g4..(r + 1) * g4];
        for ((v, a), b) in row.iter_mut().zip(w.b_ih).zip(w.b_hh) {
            *v = *a + *b;
        }
    }
    gemm(
        S::one(),
        Mat::new(x, rows, w.input),
        Mat::new(w.w_ih, g4, w.input).t(),
        S::one(),
        &mut gates,
    );
    let mut cell = vec![S::zero(); rows * h];
    let mut hidden = vec![S::zero(); rows * h];
    for t in 0..steps {
        let g = &mut gates[t * batch * g4..(t + 1) * batch * g4];
        if t > 0 {
            let prev = &hidden[(t - 1) * batch * h..t * batch * h];
            gemm(
                S::one(),
                Mat::new(prev, batch, h),
                Mat::new(w.w_hh, g4, h).t(),
                S::one(),
                g,
            );
        }
        for b in 0..batch {
            let gr = &mut g[b * g4..(b + 1) * g4];
            for j in 0..h {
                let i = sigmoid(gr[j]);
                let f = sigmoid(gr[h + j]);
                let cand = gr[2 * h + j].tanh();
                let o = sigmoid(gr[3 * h + j]);
                gr[j] = i;
                gr[h + j] = f;
                gr[2 * h + j] = cand;
                gr[3 * h + j] = o;
                let c_prev = if t > 0 { cell[((t - 1) * batch + b) * h + j] } else { S::zero() };
                let c = f * c_prev + i * cand;
                let idx = (t * batch + b) * h + j;
                cell[idx] = c;
                hidden[idx] = o * c.tanh();
            }
        }
    }
    LstmCache { gates, cell, hidden }
}

/// Gradients of one layer.
pub struct LstmGrads<'a, S> {
    pub w_ih: &'a mut [S],
    pub w_hh: &'a mut [S],
    pub b_ih: &'a mut [S],
    pub b_hh: &'a mut [S],
}

/// Backpropagates `d_hidden` `(T, B, h)` through one layer. Accumulates
/// parameter gradients and returns the input gradient `(T*B, input)`.
pub fn lstm_layer_backward<S: Scalar>(
    w: &LstmWeights<'_, S>,
    x: &[S],
    cache: &LstmCache<S>,
    d_hidden: &[S],
    steps: usize,
    batch: usize,
    grads: LstmGrads<'_, S>,
    want_dx: bool,
) -> Option<Vec<S>> {
    let h = w.hidden;
    let g4 = 4 * h;
    let rows = steps * batch;
    let one = S::one();
    let mut d_gates = vec![S::zero(); rows * g4];
    let mut dh_next = vec![S::zero(); batch * h];
    let mut dc_next = vec![S::zero(); batch * h];
    for t in (0..steps).rev() {
        for b in 0..batch {
            let r = t * batch + b;
            let gr = &cache.gates[r * g4..(r + 1) * g4];
            let dg = &mut d_gates[r * g4..(r + 1) * g4];
            for j in 0..h {
                let (i, f, cand, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                let c = cache.cell[r * h + j];
                let c_prev = if t > 0 { cache.cell[(r - batch) * h + j] } else { S::zero() };
                let tc = c.tanh();
                let dh = d_hidden[r * h + j] + dh_next[b * h + j];
                let d_o = dh * tc;
                let dc = dc_next[b * h + j] + dh * o * (one - tc * tc);
                dg[j] = dc * cand * i * (one - i);
                dg[h + j] = dc * c_prev * f * (one - f);
                dg[2 * h + j] = dc * i * (one - cand * cand);
                dg[3 * h + j] = d_o * o * (one - o);
                dc_next[b * h + j] = dc * f;
            }
        }
        if t > 0 {
            gemm(
                one,
                Mat::new(&d_gates[t * batch * g4..(t + 1) * batch * g4], batch, g4),
                Mat::new(w.w_hh, g4, h),
                S::zero(),
                &mut dh_next,
            );
        }
    }
    if steps > 1 {
        gemm(
            one,
            Mat::new(&d_gates[batch * g4..], (steps - 1) * batch, g4).t(),
            Mat::new(&cache.hidden[..(steps - 1) * batch * h], (steps - 1) * batch, h),
            one,
            grads.w_hh,
        );
    }
    gemm(
        one,
        Mat::new(&d_gates, rows, g4).t(),
        Mat::new(x, rows, w.input),
        one,
        grads.w_ih,
    );
    for r in 0..rows {
        for (k, v) in d_gates[r * g4..(r + 1) * g4].iter().enumerate() {
            grads.b_ih[k] = grads.b_ih[k] + *v;
            grads.b_hh[k] = grads.b_hh[k] + *v;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![S::zero(); rows * w.input];
        gemm(
            one,
            Mat::new(&d_gates, rows, g4),
            Mat::new(w.w_ih, g4, w.input),
            S::zero(),
            &mut dx,
        );
        dx
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_col2im_are_adjoint() {
        let s = ConvShape {
            in_channels: 2,
            out_channels: 1,
            height: 5,
            width: 4,
            kernel: 3,
        };
        let x: Vec<f64> = (0..s.in_len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..s.col_rows() * s.plane()).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, &s, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, &s, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pool_picks_window_maximum() {
        let pre = [1.0, -2.0, 3.0, 0.5, -1.0, 4.0, -3.0, -0.5f64];
        let (mut out, mut arg) = ([0.0; 2], [0u32; 2]);
        relu_pool(&pre, 1, 2, 4, &mut out, &mut arg);
        assert_eq!(out, [4.0, 3.0]);
        assert_eq!(arg, [5, 2]);
        let pre = [-1.0, -2.0, -3.0, -4.0f64];
        let (mut out, mut arg) = ([9.0], [9u32]);
        relu_pool(&pre, 1, 2, 2, &mut out, &mut arg);
        assert_eq!(out, [0.0]);
    }

    #[test]
    fn single_unit_closed_form() {
        // Zero input, gates driven by biases only.
        let (bi, bf, bg, bo) = (0.3, -0.2, 0.7, 1.1f64);
        let w = LstmWeights {
            w_ih: &[0.0; 4],
            w_hh: &[0.0; 4],
            b_ih: &[bi, bf, bg, bo],
            b_hh: &[0.0; 4],
            input: 1,
            hidden: 1,
        };
        let cache = lstm_layer_forward(&w, &[0.0], 1, 1);
        let c1 = sigmoid(bi) * bg.tanh();
        assert!((cache.cell[0] - c1).abs() < 1e-15);
        assert!((cache.hidden[0] - sigmoid(bo) * c1.tanh()).abs() < 1e-15);
    }
}

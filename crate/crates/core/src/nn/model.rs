//! Full forward pass, MSE loss and reverse-mode gradients.
//!
//! A batch input is `(B, T, F, H, W)` row-major and a target batch is
//! `(B, F, H, W)`. Internally conv images are processed time-major so their
//! pooled features form the first LSTM layer's input directly.

use super::layers::{
    col2im, conv_backward, conv_forward, im2col, lstm_layer_backward, lstm_layer_forward, relu_pool,
    relu_pool_backward, ConvShape, LstmCache, LstmGrads, LstmWeights,
};
use super::params::{slot, ModelConfig, ModelParams};
use super::scalar::{gemm, Mat, Scalar};
use super::NnError;
use crate::field::{FieldFrame, FrameShape};

fn conv_shapes(cfg: &ModelConfig) -> (ConvShape, ConvShape) {
    (
        ConvShape {
            in_channels: cfg.fields,
            out_channels: cfg.conv1_out,
            height: cfg.height,
            width: cfg.width,
            kernel: cfg.kernel,
        },
        ConvShape {
            in_channels: cfg.conv1_out,
            out_channels: cfg.conv2_out,
            height: cfg.height / 2,
            width: cfg.width / 2,
            kernel: cfg.kernel,
        },
    )
}

fn lstm_weights<'a, S: Scalar>(params: &'a ModelParams<S>, layer: usize) -> LstmWeights<'a, S> {
    let base = slot::lstm(layer);
    LstmWeights {
        w_ih: params.data(base),
        w_hh: params.data(base + 1),
        b_ih: params.data(base + 2),
        b_hh: params.data(base + 3),
        input: params.config.lstm_input(layer),
        hidden: params.config.lstm_hidden,
    }
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Activations<S> {
    pub batch: usize,
    /// Pooled first-block outputs per image (time-major image order).
    pooled1: Vec<S>,
    arg1: Vec<u32>,
    /// Pooled second-block outputs; also the first LSTM layer's input.
    features: Vec<S>,
    arg2: Vec<u32>,
    lstm: Vec<LstmCache<S>>,
    /// Dense output `(B, F*H*W)`.
    pub output: Vec<S>,
}

/// Conv block on a single `(F, H, W)` image: two rounds of
/// conv -> ReLU -> 2x2 max-pool. Returns `(conv2_out, H/4, W/4)` flattened.
pub fn conv_block<S: Scalar>(params: &ModelParams<S>, image: &[S]) -> Result<Vec<S>, NnError> {
    let cfg = &params.config;
    let (s1, _) = conv_shapes(cfg);
    if image.len() != s1.in_len() {
        return Err(NnError::Shape {
            expected: s1.in_len(),
            found: image.len(),
        });
    }
    let mut scratch = ConvScratch::new(cfg);
    let mut p1 = vec![S::zero(); s1.pooled_len()];
    let mut a1 = vec![0; p1.len()];
    let mut features = vec![S::zero(); cfg.feature_len()];
    let mut a2 = vec![0; features.len()];
    scratch.forward(params, image, &mut p1, &mut a1, &mut features, &mut a2);
    Ok(features)
}

struct ConvScratch<S> {
    s1: ConvShape,
    s2: ConvShape,
    cols1: Vec<S>,
    pre1: Vec<S>,
    cols2: Vec<S>,
    pre2: Vec<S>,
}

impl<S: Scalar> ConvScratch<S> {
    fn new(cfg: &ModelConfig) -> Self {
        let (s1, s2) = conv_shapes(cfg);
        Self {
            cols1: vec![S::zero(); s1.col_rows() * s1.plane()],
            pre1: vec![S::zero(); s1.out_channels * s1.plane()],
            cols2: vec![S::zero(); s2.col_rows() * s2.plane()],
            pre2: vec![S::zero(); s2.out_channels * s2.plane()],
            s1,
            s2,
        }
    }

    fn forward(
        &mut self,
        params: &ModelParams<S>,
        image: &[S],
        p1: &mut [S],
        a1: &mut [u32],
        p2: &mut [S],
        a2: &mut [u32],
    ) {
        let (s1, s2) = (self.s1, self.s2);
        im2col(image, &s1, &mut self.cols1);
        conv_forward(params.data(slot::CONV1_W), params.data(slot::CONV1_B), &self.cols1, &s1, &mut self.pre1);
        relu_pool(&self.pre1, s1.out_channels, s1.height, s1.width, p1, a1);
        im2col(p1, &s2, &mut self.cols2);
        conv_forward(params.data(slot::CONV2_W), params.data(slot::CONV2_B), &self.cols2, &s2, &mut self.pre2);
        relu_pool(&self.pre2, s2.out_channels, s2.height, s2.width, p2, a2);
    }
}

fn check_batch<S: Scalar>(cfg: &ModelConfig, inputs: &[S], batch: usize) -> Result<(), NnError> {
    let want = batch * cfg.window * cfg.frame_len();
    if batch == 0 || inputs.len() != want {
        return Err(NnError::Shape {
            expected: want.max(cfg.window * cfg.frame_len()),
            found: inputs.len(),
        });
    }
    Ok(())
}

/// Forward pass over a batch, keeping what the backward pass needs.
pub fn forward_batch<S: Scalar>(
    params: &ModelParams<S>,
    inputs: &[S],
    batch: usize,
) -> Result<Activations<S>, NnError> {
    let cfg = params.config;
    check_batch(&cfg, inputs, batch)?;
    let steps = cfg.window;
    let frame = cfg.frame_len();
    let (s1, _) = conv_shapes(&cfg);
    let n_img = steps * batch;
    let (len1, len2) = (s1.pooled_len(), cfg.feature_len());

    let mut scratch = ConvScratch::new(&cfg);
    let mut pooled1 = vec![S::zero(); n_img * len1];
    let mut arg1 = vec![0u32; n_img * len1];
    let mut features = vec![S::zero(); n_img * len2];
    let mut arg2 = vec![0u32; n_img * len2];
    for t in 0..steps {
        for b in 0..batch {
            let img = t * batch + b;
            let src = &inputs[(b * steps + t) * frame..(b * steps + t + 1) * frame];
            scratch.forward(
                params,
                src,
                &mut pooled1[img * len1..(img + 1) * len1],
                &mut arg1[img * len1..(img + 1) * len1],
                &mut features[img * len2..(img + 1) * len2],
                &mut arg2[img * len2..(img + 1) * len2],
            );
        }
    }

    let mut lstm: Vec<LstmCache<S>> = Vec::with_capacity(cfg.lstm_layers);
    for l in 0..cfg.lstm_layers {
        let x = if l == 0 { &features } else { &lstm[l - 1].hidden };
        let cache = lstm_layer_forward(&lstm_weights(params, l), x, steps, batch);
        lstm.push(cache);
    }
    let h = cfg.lstm_hidden;
    let top = &lstm.last().expect("at least one layer").hidden[(steps - 1) * batch * h..];
    if !top.iter().all(|v| v.is_finite()) {
        return Err(NnError::NonFinite("lstm activation"));
    }

    let dense = slot::dense(cfg.lstm_layers);
    let mut output = vec![S::zero(); batch * frame];
    for row in output.chunks_exact_mut(frame) {
        row.copy_from_slice(params.data(dense + 1));
    }
    gemm(
        S::one(),
        Mat::new(top, batch, h),
        Mat::new(params.data(dense), frame, h).t(),
        S::one(),
        &mut output,
    );
    if !output.iter().all(|v| v.is_finite()) {
        return Err(NnError::NonFinite("output"));
    }
    Ok(Activations {
        batch,
        pooled1,
        arg1,
        features,
        arg2,
        lstm,
        output,
    })
}

/// Final LSTM hidden state for a single `(T, input)` sequence.
pub fn lstm_forward<S: Scalar>(params: &ModelParams<S>, sequence: &[S]) -> Result<Vec<S>, NnError> {
    let cfg = params.config;
    let steps = cfg.window;
    if sequence.len() != steps * cfg.feature_len() {
        return Err(NnError::Shape {
            expected: steps * cfg.feature_len(),
            found: sequence.len(),
        });
    }
    let mut x = sequence.to_vec();
    for l in 0..cfg.lstm_layers {
        x = lstm_layer_forward(&lstm_weights(params, l), &x, steps, 1).hidden;
    }
    let h = cfg.lstm_hidden;
    let last = x[(steps - 1) * h..].to_vec();
    if !last.iter().all(|v| v.is_finite()) {
        return Err(NnError::NonFinite("lstm activation"));
    }
    Ok(last)
}

/// Predicts the next frame from a window of normalized frames. The output
/// has shape `(F, H, W)`, i.e. the `(1, F, H, W)` tensor without its batch
/// axis.
pub fn forward(params: &ModelParams<f32>, window: &[FieldFrame]) -> Result<FieldFrame, NnError> {
    let cfg = params.config;
    let shape = FrameShape::new(cfg.fields, cfg.height, cfg.width);
    if window.len() != cfg.window {
        return Err(NnError::Shape {
            expected: cfg.window,
            found: window.len(),
        });
    }
    let mut inputs = Vec::with_capacity(cfg.window * cfg.frame_len());
    for f in window {
        if f.shape() != shape {
            return Err(NnError::Shape {
                expected: shape.len(),
                found: f.shape().len(),
            });
        }
        inputs.extend_from_slice(f.data());
    }
    let acts = forward_batch(params, &inputs, 1)?;
    Ok(FieldFrame::new(shape, acts.output).expect("output matches frame shape"))
}

/// Mean squared error over all entries, accumulated in f64.
pub fn mse_loss<S: Scalar>(pred: &[S], target: &[S]) -> Result<f64, NnError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NnError::Shape {
            expected: target.len(),
            found: pred.len(),
        });
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p.as_f64() - t.as_f64();
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradients of the batch-mean MSE with respect to every parameter.
pub fn backward<S: Scalar>(
    params: &ModelParams<S>,
    inputs: &[S],
    targets: &[S],
    acts: &Activations<S>,
) -> Result<ModelParams<S>, NnError> {
    let mut grads = params.zeros_like();
    accumulate_gradients(params, inputs, targets, acts, S::one(), &mut grads)?;
    Ok(grads)
}

/// Adds `scale * d(mean MSE)/d(params)` into `grads`. Used to sum
/// micro-batches into one batch gradient.
pub fn accumulate_gradients<S: Scalar>(
    params: &ModelParams<S>,
    inputs: &[S],
    targets: &[S],
    acts: &Activations<S>,
    scale: S,
    grads: &mut ModelParams<S>,
) -> Result<(), NnError> {
    let cfg = params.config;
    let batch = acts.batch;
    let steps = cfg.window;
    let frame = cfg.frame_len();
    let h = cfg.lstm_hidden;
    if targets.len() != batch * frame {
        return Err(NnError::Shape {
            expected: batch * frame,
            found: targets.len(),
        });
    }

    // d(loss)/d(output) for loss = sum (y - t)^2 / (B * N).
    let norm = S::from_f64(2.0 / (batch * frame) as f64) * scale;
    let d_out: Vec<S> = acts.output.iter().zip(targets).map(|(y, t)| (*y - *t) * norm).collect();

    let dense = slot::dense(cfg.lstm_layers);
    let top = &acts.lstm[cfg.lstm_layers - 1].hidden[(steps - 1) * batch * h..];
    {
        let [dw, db] = grads.tensors.get_disjoint_mut([dense, dense + 1]).expect("distinct slots");
        gemm(
            S::one(),
            Mat::new(&d_out, batch, frame).t(),
            Mat::new(top, batch, h),
            S::one(),
            &mut dw.data,
        );
        for row in d_out.chunks_exact(frame) {
            for (g, d) in db.data.iter_mut().zip(row) {
                *g = *g + *d;
            }
        }
    }
    let mut d_hidden = vec![S::zero(); steps * batch * h];
    gemm(
        S::one(),
        Mat::new(&d_out, batch, frame),
        Mat::new(params.data(dense), frame, h),
        S::zero(),
        &mut d_hidden[(steps - 1) * batch * h..],
    );

    for l in (0..cfg.lstm_layers).rev() {
        let x = if l == 0 { &acts.features } else { &acts.lstm[l - 1].hidden };
        let base = slot::lstm(l);
        let [w_ih, w_hh, b_ih, b_hh] = grads
            .tensors
            .get_disjoint_mut([base, base + 1, base + 2, base + 3])
            .expect("distinct slots");
        d_hidden = lstm_layer_backward(
            &lstm_weights(params, l),
            x,
            &acts.lstm[l],
            &d_hidden,
            steps,
            batch,
            LstmGrads {
                w_ih: &mut w_ih.data,
                w_hh: &mut w_hh.data,
                b_ih: &mut b_ih.data,
                b_hh: &mut b_hh.data,
            },
            true,
        )
        .expect("input gradient requested");
    }
    let d_features = d_hidden;

    let (s1, s2) = conv_shapes(&cfg);
    let (len1, len2) = (s1.pooled_len(), cfg.feature_len());
    let mut cols1 = vec![S::zero(); s1.col_rows() * s1.plane()];
    let mut cols2 = vec![S::zero(); s2.col_rows() * s2.plane()];
    let mut dcols2 = vec![S::zero(); cols2.len()];
    let mut d_pre1 = vec![S::zero(); s1.out_channels * s1.plane()];
    let mut d_pre2 = vec![S::zero(); s2.out_channels * s2.plane()];
    let mut d_p1 = vec![S::zero(); len1];
    let [w1g, b1g, w2g, b2g] = grads
        .tensors
        .get_disjoint_mut([slot::CONV1_W, slot::CONV1_B, slot::CONV2_W, slot::CONV2_B])
        .expect("distinct slots");
    for t in 0..steps {
        for b in 0..batch {
            let img = t * batch + b;
            let p1 = &acts.pooled1[img * len1..(img + 1) * len1];
            relu_pool_backward(
                &d_features[img * len2..(img + 1) * len2],
                &acts.features[img * len2..(img + 1) * len2],
                &acts.arg2[img * len2..(img + 1) * len2],
                s2.out_channels,
                s2.height,
                s2.width,
                &mut d_pre2,
            );
            im2col(p1, &s2, &mut cols2);
            conv_backward(
                params.data(slot::CONV2_W),
                &cols2,
                &d_pre2,
                &s2,
                &mut w2g.data,
                &mut b2g.data,
                Some(&mut dcols2),
            );
            d_p1.iter_mut().for_each(|v| *v = S::zero());
            col2im(&dcols2, &s2, &mut d_p1);
            relu_pool_backward(
                &d_p1,
                p1,
                &acts.arg1[img * len1..(img + 1) * len1],
                s1.out_channels,
                s1.height,
                s1.width,
                &mut d_pre1,
            );
            let src = &inputs[(b * steps + t) * frame..(b * steps + t + 1) * frame];
            im2col(src, &s1, &mut cols1);
            conv_backward(
                params.data(slot::CONV1_W),
                &cols1,
                &d_pre1,
                &s1,
                &mut w1g.data,
                &mut b1g.data,
                None,
            );
        }
    }
    if !grads.is_finite() {
        return Err(NnError::NonFinite("gradient"));
    }
    Ok(())
}

/// Loss and gradient of one batch.
pub fn loss_and_gradient<S: Scalar>(
    params: &ModelParams<S>,
    inputs: &[S],
    targets: &[S],
    batch: usize,
) -> Result<(f64, ModelParams<S>), NnError> {
    let acts = forward_batch(params, inputs, batch)?;
    let loss = mse_loss(&acts.output, targets)?;
    let grads = backward(params, inputs, targets, &acts)?;
    Ok((loss, grads))
}

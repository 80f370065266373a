//! Model configuration, named parameter tensors and initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scalar::Scalar;
use super::NnError;
use crate::config::{ConfigError, KeyValues};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub fields: usize,
    pub height: usize,
    pub width: usize,
    pub window: usize,
    pub conv1_out: usize,
    pub conv2_out: usize,
    /// Odd square kernel size; padding keeps spatial size.
    pub kernel: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            fields: 7,
            height: 60,
            width: 60,
            window: 5,
            conv1_out: 64,
            conv2_out: 128,
            kernel: 3,
            lstm_hidden: 512,
            lstm_layers: 4,
        }
    }
}

impl ModelConfig {
    /// Desk-scale model: conv 32/64, hidden 128, two LSTM layers.
    pub fn reduced(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            conv1_out: 32,
            conv2_out: 64,
            lstm_hidden: 128,
            lstm_layers: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let counts = [
            self.fields,
            self.height,
            self.width,
            self.window,
            self.conv1_out,
            self.conv2_out,
            self.kernel,
            self.lstm_hidden,
            self.lstm_layers,
        ];
        if counts.contains(&0) {
            return Err(NnError::InvalidConfig("all sizes must be at least 1".into()));
        }
        if self.height % 4 != 0 || self.width % 4 != 0 {
            return Err(NnError::InvalidConfig(format!(
                "spatial size {}x{} must be divisible by 4",
                self.height, self.width
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(NnError::InvalidConfig(format!("kernel {} must be odd", self.kernel)));
        }
        Ok(())
    }

    /// Values in one frame, `F * H * W`.
    pub fn frame_len(&self) -> usize {
        self.fields * self.height * self.width
    }

    /// Shape of the conv feature map fed to the LSTM.
    pub fn feature_shape(&self) -> (usize, usize, usize) {
        (self.conv2_out, self.height / 4, self.width / 4)
    }

    pub fn feature_len(&self) -> usize {
        let (c, h, w) = self.feature_shape();
        c * h * w
    }

    pub fn lstm_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.feature_len()
        } else {
            self.lstm_hidden
        }
    }

    /// Tensor names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel;
        let h4 = 4 * self.lstm_hidden;
        let mut out = vec![
            ("conv1.weight".to_owned(), vec![self.conv1_out, self.fields, k, k]),
            ("conv1.bias".to_owned(), vec![self.conv1_out]),
            ("conv2.weight".to_owned(), vec![self.conv2_out, self.conv1_out, k, k]),
            ("conv2.bias".to_owned(), vec![self.conv2_out]),
        ];
        for l in 0..self.lstm_layers {
            out.push((format!("lstm.{l}.weight_ih"), vec![h4, self.lstm_input(l)]));
            out.push((format!("lstm.{l}.weight_hh"), vec![h4, self.lstm_hidden]));
            out.push((format!("lstm.{l}.bias_ih"), vec![h4]));
            out.push((format!("lstm.{l}.bias_hh"), vec![h4]));
        }
        out.push(("dense.weight".to_owned(), vec![self.frame_len(), self.lstm_hidden]));
        out.push(("dense.bias".to_owned(), vec![self.frame_len()]));
        out
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "fields = {}\nheight = {}\nwidth = {}\nwindow = {}\nconv1_out = {}\nconv2_out = {}\nkernel = {}\nlstm_hidden = {}\nlstm_layers = {}\n",
            self.fields,
            self.height,
            self.width,
            self.window,
            self.conv1_out,
            self.conv2_out,
            self.kernel,
            self.lstm_hidden,
            self.lstm_layers
        )
    }

    /// Reads model keys, falling back to `base` for missing ones.
    pub fn from_key_values(kv: &mut KeyValues, base: ModelConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            fields: kv.take_or("fields", base.fields)?,
            height: kv.take_or("height", base.height)?,
            width: kv.take_or("width", base.width)?,
            window: kv.take_or("window", base.window)?,
            conv1_out: kv.take_or("conv1_out", base.conv1_out)?,
            conv2_out: kv.take_or("conv2_out", base.conv2_out)?,
            kernel: kv.take_or("kernel", base.kernel)?,
            lstm_hidden: kv.take_or("lstm_hidden", base.lstm_hidden)?,
            lstm_layers: kv.take_or("lstm_layers", base.lstm_layers)?,
        })
    }
}

/// One named tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![S::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// All trainable tensors in the order given by [`ModelConfig::layout`].
/// Gradients and optimizer moments use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<S> {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor<S>>,
}

/// Indices of each layer's tensors inside [`ModelParams::tensors`].
pub(crate) mod slot {
    pub const CONV1_W: usize = 0;
    pub const CONV1_B: usize = 1;
    pub const CONV2_W: usize = 2;
    pub const CONV2_B: usize = 3;

    pub fn lstm(layer: usize) -> usize {
        4 + 4 * layer
    }

    pub fn dense(layers: usize) -> usize {
        4 + 4 * layers
    }
}

impl<S: Scalar> ModelParams<S> {
    pub fn zeros(config: ModelConfig) -> Self {
        let tensors = config
            .layout()
            .into_iter()
            .map(|(name, shape)| Tensor::zeros(name, shape))
            .collect();
        Self { config, tensors }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn fill(&mut self, value: S) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = value);
        }
    }

    /// `self += other`, tensor by tensor in storage order.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + *y;
            }
        }
    }

    pub fn scale(&mut self, factor: S) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = *v * factor);
        }
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            config: self.config,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub(crate) fn data(&self, slot: usize) -> &[S] {
        &self.tensors[slot].data
    }
}

/// Fan-in used for each tensor's initialization bound.
fn fan_in(config: &ModelConfig, name: &str) -> usize {
    let k2 = config.kernel * config.kernel;
    if name.starts_with("conv1") {
        config.fields * k2
    } else if name.starts_with("conv2") {
        config.conv1_out * k2
    } else if let Some(rest) = name.strip_prefix("lstm.") {
        let (layer, kind) = rest.split_once('.').expect("lstm tensor name");
        if kind.ends_with("_ih") {
            config.lstm_input(layer.parse().expect("layer index"))
        } else {
            config.lstm_hidden
        }
    } else {
        config.lstm_hidden
    }
}

/// Uniform `(-k, k)` with `k = 1/sqrt(fan_in)` per tensor, drawn from one
/// ChaCha8 stream in storage order. Each value takes one 32-bit draw: the top
/// 24 bits pick a cell midpoint, so the interval stays open.
pub fn init_params<S: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<S>, NnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(*config);
    let mut bits = vec![0u32; 4096];
    for t in &mut params.tensors {
        let k = 1.0 / (fan_in(config, &t.name) as f64).sqrt();
        for chunk in t.data.chunks_mut(bits.len()) {
            let bits = &mut bits[..chunk.len()];
            rng.fill(bits);
            for (v, &b) in chunk.iter_mut().zip(bits.iter()) {
                let u = ((b >> 8) as f64 + 0.5) * (1.0 / 16_777_216.0);
                *v = S::from_f64(k * (2.0 * u - 1.0));
            }
        }
    }
    Ok(params)
}

/// Parameter count of one layer group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCount {
    pub layer: String,
    pub weights: usize,
    pub biases: usize,
}

impl LayerCount {
    pub fn total(&self) -> usize {
        self.weights + self.biases
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub layers: Vec<LayerCount>,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.layers.iter().map(LayerCount::total).sum()
    }
}

impl std::fmt::Display for ParamCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for l in &self.layers {
            writeln!(f, "{:<8} {:>12} (weights {}, biases {})", l.layer, l.total(), l.weights, l.biases)?;
        }
        write!(f, "{:<8} {:>12}", "total", self.total())
    }
}

/// Trainable parameters per layer by shape arithmetic.
pub fn param_count(config: &ModelConfig) -> ParamCount {
    let k2 = config.kernel * config.kernel;
    let h = config.lstm_hidden;
    let mut layers = vec![
        LayerCount {
            layer: "conv1".into(),
            weights: config.conv1_out * config.fields * k2,
            biases: config.conv1_out,
        },
        LayerCount {
            layer: "conv2".into(),
            weights: config.conv2_out * config.conv1_out * k2,
            biases: config.conv2_out,
        },
    ];
    for l in 0..config.lstm_layers {
        layers.push(LayerCount {
            layer: format!("lstm.{l}"),
            weights: 4 * h * config.lstm_input(l) + 4 * h * h,
            biases: 8 * h,
        });
    }
    layers.push(LayerCount {
        layer: "dense".into(),
        weights: config.frame_len() * h,
        biases: config.frame_len(),
    });
    ParamCount { layers }
}

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bank::{bank_from_digit, to_2d, FilterBank2D};
use crate::error::{Error, Result};
use crate::Image;

use super::graph::{NodeId, ValueGraph};
use super::tensor::{Scalar, Tensor};

/// Side of the square convolution kernels in every conv block.
pub const CONV_KERNEL: usize = 3;

/// Default channel width of the first conv block.
pub const DEFAULT_BASE_CHANNELS: usize = 64;

/// Network inputs and outputs are intensities divided by this.
pub const INTENSITY_SCALE: f64 = 255.0;

/// Stage layout parsed from a digit string such as `"4422"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageConfig {
    digits: String,
    base_channels: usize,
    /// Predict `clean - noisy` and add the input back at the output.
    pub residual: bool,
}

impl StageConfig {
    pub fn new(digits: &str, base_channels: usize) -> Result<Self> {
        if digits.is_empty() {
            return Err(Error::Config("stage string must be non-empty".into()));
        }
        if let Some(bad) = digits.chars().find(|c| !matches!(c, '2' | '4')) {
            return Err(Error::Config(format!(
                "invalid wavelet digit {bad:?} in {digits:?}"
            )));
        }
        if base_channels == 0 {
            return Err(Error::Config("base channel count must be positive".into()));
        }
        Ok(Self {
            digits: digits.to_string(),
            base_channels,
            residual: false,
        })
    }

    pub fn with_residual(mut self, residual: bool) -> Self {
        self.residual = residual;
        self
    }

    pub fn digits(&self) -> &str {
        &self.digits
    }

    pub fn base_channels(&self) -> usize {
        self.base_channels
    }

    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    pub fn strides(&self) -> Vec<usize> {
        self.digits
            .chars()
            .map(|c| if c == '4' { 4 } else { 2 })
            .collect()
    }

    /// Product of all stage strides; input sides must be multiples of it.
    pub fn input_multiple(&self) -> usize {
        self.strides().iter().product()
    }

    /// Channel width of each encoder stage: base, 2·base, 4·base, ...
    pub fn encoder_channels(&self) -> Vec<usize> {
        (0..self.depth()).map(|k| self.base_channels << k).collect()
    }
}

/// One learnable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor<f32>,
}

#[derive(Debug, Clone)]
pub struct NetworkStage {
    pub bank: Arc<FilterBank2D>,
    pub channels_in: usize,
    pub channels_out: usize,
}

/// Conv block references into the parameter table.
#[derive(Debug, Clone, Copy)]
struct Conv {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct Block {
    first: Conv,
    second: Conv,
}

/// Mixed-wavelet encoder-decoder.
///
/// Each encoder stage runs two 3x3 conv + ReLU layers and splits the result
/// with the stage's wavelet bank. The LL band continues downward; LH/HL/HH
/// are held back and concatenated with the decoder's band at the mirrored
/// stage, which is then synthesized with the same bank and refined by two
/// more conv + ReLU layers. A final 1x1 conv returns to one channel.
#[derive(Debug, Clone)]
pub struct Network {
    config: StageConfig,
    encoder: Vec<NetworkStage>,
    params: Vec<Param>,
    enc_blocks: Vec<Block>,
    bottleneck: Block,
    dec_blocks: Vec<Block>,
    head: Conv,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

struct Layout {
    shapes: Vec<(String, Vec<usize>)>,
    enc_blocks: Vec<Block>,
    bottleneck: Block,
    dec_blocks: Vec<Block>,
    head: Conv,
}

fn layout(config: &StageConfig) -> Layout {
    let mut shapes = Vec::new();
    let mut conv = |name: String, cin: usize, cout: usize, k: usize| -> Conv {
        shapes.push((format!("{name}.weight"), vec![cout, cin, k, k]));
        shapes.push((format!("{name}.bias"), vec![cout]));
        Conv {
            weight: shapes.len() - 2,
            bias: shapes.len() - 1,
        }
    };
    let chans = config.encoder_channels();
    let k = CONV_KERNEL;

    let mut enc_blocks = Vec::new();
    let mut cin = 1;
    for (s, &c) in chans.iter().enumerate() {
        enc_blocks.push(Block {
            first: conv(format!("enc{s}.conv1"), cin, c, k),
            second: conv(format!("enc{s}.conv2"), c, c, k),
        });
        cin = c;
    }
    let deepest = *chans.last().expect("non-empty config");
    let bottleneck = Block {
        first: conv("mid.conv1".into(), deepest, 2 * deepest, k),
        second: conv("mid.conv2".into(), 2 * deepest, deepest, k),
    };
    let mut dec_blocks = Vec::with_capacity(chans.len());
    for s in (0..chans.len()).rev() {
        let out = if s == 0 { chans[0] } else { chans[s - 1] };
        dec_blocks.push(Block {
            first: conv(format!("dec{s}.conv1"), chans[s], chans[s], k),
            second: conv(format!("dec{s}.conv2"), chans[s], out, k),
        });
    }
    // decoder blocks are stored by stage index
    dec_blocks.reverse();
    let head = conv("out".into(), chans[0], 1, 1);
    Layout {
        shapes,
        enc_blocks,
        bottleneck,
        dec_blocks,
        head,
    }
}

/// Builds a network with Glorot-uniform conv weights drawn from `seed` and
/// zero biases.
pub fn build_network(config: &StageConfig, seed: u64) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Network::from_fn(config, |name, dims| {
        let count: usize = dims.iter().product();
        if name.ends_with(".bias") {
            return vec![0.0; count];
        }
        let receptive = dims[2] * dims[3];
        let fan_in = dims[1] * receptive;
        let fan_out = dims[0] * receptive;
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..count)
            .map(|_| rng.random_range(-limit..limit) as f32)
            .collect()
    })
}

impl Network {
    /// Builds the layout for `config` and fills each tensor from `init`,
    /// called once per parameter in table order.
    pub fn from_fn(
        config: &StageConfig,
        mut init: impl FnMut(&str, &[usize]) -> Vec<f32>,
    ) -> Result<Self> {
        // re-validate: configs may be constructed through deserialization
        let config = StageConfig::new(config.digits(), config.base_channels())?
            .with_residual(config.residual);
        let lay = layout(&config);
        let params = lay
            .shapes
            .into_iter()
            .map(|(name, dims)| {
                let data = init(&name, &dims);
                let value = Tensor::new(dims, data)?;
                Ok(Param { name, value })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut encoder = Vec::new();
        let mut cin = 1;
        for (digit, cout) in config.digits().chars().zip(config.encoder_channels()) {
            encoder.push(NetworkStage {
                bank: Arc::new(to_2d(&bank_from_digit(digit)?)),
                channels_in: cin,
                channels_out: cout,
            });
            cin = cout;
        }
        Ok(Self {
            config,
            encoder,
            params,
            enc_blocks: lay.enc_blocks,
            bottleneck: lay.bottleneck,
            dec_blocks: lay.dec_blocks,
            head: lay.head,
        })
    }

    pub fn config(&self) -> &StageConfig {
        &self.config
    }

    pub fn stages(&self) -> &[NetworkStage] {
        &self.encoder
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn check_input<T: Scalar>(&self, x: &Tensor<T>) -> Result<()> {
        let (c, h, w) = x.chw()?;
        let m = self.config.input_multiple();
        if c != 1 {
            return Err(Error::Shape(format!("expected 1 input channel, got {c}")));
        }
        if h % m != 0 || w % m != 0 {
            return Err(Error::Shape(format!(
                "input {w}x{h} not divisible by {m} (config {})",
                self.config.digits()
            )));
        }
        Ok(())
    }

    /// Records one forward pass of a `1 x H x W` map into `graph` and marks
    /// the result as the graph output.
    pub fn forward_recorded<T: Scalar>(
        &self,
        graph: &mut ValueGraph<T>,
        input: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let leaves: Vec<NodeId> = self
            .params
            .iter()
            .enumerate()
            .map(|(slot, p)| graph.param(slot, p.value.cast()))
            .collect();
        let conv_relu = |g: &mut ValueGraph<T>, x: NodeId, c: Conv| -> Result<NodeId> {
            let y = g.conv(x, leaves[c.weight])?;
            let y = g.bias_add(y, leaves[c.bias])?;
            Ok(g.relu(y))
        };

        let x = graph.input(input.clone());
        let mut h = x;
        let mut skips = Vec::with_capacity(self.encoder.len());
        for (stage, block) in self.encoder.iter().zip(&self.enc_blocks) {
            h = conv_relu(graph, h, block.first)?;
            h = conv_relu(graph, h, block.second)?;
            let bands = graph.analysis(h, stage.bank.clone())?;
            let c = stage.channels_out;
            skips.push(graph.slice(bands, c, 3 * c)?);
            h = graph.slice(bands, 0, c)?;
        }
        h = conv_relu(graph, h, self.bottleneck.first)?;
        h = conv_relu(graph, h, self.bottleneck.second)?;
        for (s, stage) in self.encoder.iter().enumerate().rev() {
            let stacked = graph.concat(h, skips[s])?;
            h = graph.synthesis(stacked, stage.bank.clone())?;
            h = conv_relu(graph, h, self.dec_blocks[s].first)?;
            h = conv_relu(graph, h, self.dec_blocks[s].second)?;
        }
        let y = graph.conv(h, leaves[self.head.weight])?;
        let mut y = graph.bias_add(y, leaves[self.head.bias])?;
        if self.config.residual {
            y = graph.add(y, x)?;
        }
        graph.set_output(y);

        let out = graph.value(y);
        if !out.all_finite() {
            return Err(Error::Numeric(
                "non-finite activations in network output".into(),
            ));
        }
        Ok(out.clone())
    }

    /// Forward pass on one normalized `1 x H x W` map.
    pub fn forward_tensor<T: Scalar>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut graph = ValueGraph::new();
        self.forward_recorded(&mut graph, input)
    }

    /// Denoises a batch of images on the `[0, 255]` scale. Items are
    /// evaluated in parallel; results keep batch order.
    pub fn forward(&self, batch: &[Image]) -> Result<Vec<Image>> {
        batch.par_iter().map(|img| self.denoise(img)).collect()
    }

    pub fn denoise(&self, img: &Image) -> Result<Image> {
        let input = image_to_tensor::<f32>(img);
        let out = self.forward_tensor(&input)?;
        tensor_to_image(&out)
    }

    /// Like [`denoise`](Self::denoise) for arbitrary sizes: the image is
    /// mirror-extended on the right and bottom up to the next multiple of the
    /// input multiple, denoised, and cropped back.
    pub fn denoise_padded(&self, img: &Image) -> Result<Image> {
        let m = self.config.input_multiple();
        let (w, h) = (img.width(), img.height());
        let (pw, ph) = (w.div_ceil(m) * m, h.div_ceil(m) * m);
        if (pw, ph) == (w, h) {
            return self.denoise(img);
        }
        let padded = Image::from_fn(pw, ph, |x, y| img.get(mirror(x, w), mirror(y, h)));
        self.denoise(&padded)?.crop(0, 0, w, h)
    }

    /// Reverse sweep over a graph recorded by [`forward_recorded`]. Every
    /// parameter gets an entry; parameters the graph never touched get
    /// exact zeros.
    ///
    /// [`forward_recorded`]: Self::forward_recorded
    pub fn backward<T: Scalar>(
        &self,
        graph: &mut ValueGraph<T>,
        output_grad: &Tensor<T>,
    ) -> Result<GradTable<T>> {
        let mut grads: Vec<Tensor<T>> = self
            .params
            .iter()
            .map(|p| Tensor::zeros(p.value.dims()))
            .collect();
        for (slot, g) in graph.backward(output_grad)? {
            grads[slot].add_assign(&g);
        }
        Ok(GradTable {
            names: self.params.iter().map(|p| p.name.clone()).collect(),
            grads,
        })
    }
}

/// Gradients aligned with [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradTable<T> {
    names: Vec<String>,
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> GradTable<T> {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            names: net.params.iter().map(|p| p.name.clone()).collect(),
            grads: net
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.dims()))
                .collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.grads[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.grads)
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.grads
    }

    pub fn add_assign(&mut self, other: &GradTable<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|g| g.all_finite())
    }
}

/// Symmetric (edge-repeating) reflection of `i` into `0..n`.
fn mirror(i: usize, n: usize) -> usize {
    let r = i % (2 * n);
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

/// `1 x H x W` map of intensities divided by [`INTENSITY_SCALE`].
pub fn image_to_tensor<T: Scalar>(img: &Image) -> Tensor<T> {
    let data = img
        .as_slice()
        .iter()
        .map(|v| T::from_f64(v / INTENSITY_SCALE))
        .collect();
    Tensor::map(1, img.height(), img.width(), data).expect("image dims")
}

pub fn tensor_to_image<T: Scalar>(t: &Tensor<T>) -> Result<Image> {
    let (c, h, w) = t.chw()?;
    if c != 1 {
        return Err(Error::Shape(format!("expected 1 channel, got {c}")));
    }
    Image::new(
        w,
        h,
        t.data()
            .iter()
            .map(|v| v.to_f64() * INTENSITY_SCALE)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_4422() {
        let c = StageConfig::new("4422", 64).unwrap();
        assert_eq!(c.strides(), vec![4, 4, 2, 2]);
        assert_eq!(c.input_multiple(), 64);
        assert_eq!(c.encoder_channels(), vec![64, 128, 256, 512]);
        assert_eq!(StageConfig::new("2222", 64).unwrap().input_multiple(), 16);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            StageConfig::new("24x2", 64),
            Err(Error::Config(_))
        ));
        assert!(matches!(StageConfig::new("", 64), Err(Error::Config(_))));
        assert!(StageConfig::new("22", 0).is_err());
    }

    #[test]
    fn seeded_build_is_deterministic() {
        let c = StageConfig::new("22", 4).unwrap();
        assert_eq!(build_network(&c, 7).unwrap(), build_network(&c, 7).unwrap());
        assert_ne!(build_network(&c, 7).unwrap(), build_network(&c, 8).unwrap());
    }

    #[test]
    fn channel_plan_doubles() {
        let net = build_network(&StageConfig::new("422", 8).unwrap(), 0).unwrap();
        let outs: Vec<usize> = net.stages().iter().map(|s| s.channels_out).collect();
        assert_eq!(outs, vec![8, 16, 32]);
        assert_eq!(net.stages()[0].bank.stride(), 4);
        assert_eq!(
            net.param("mid.conv1.weight").unwrap().value.dims(),
            &[64, 32, 3, 3]
        );
        assert_eq!(
            net.param("dec0.conv2.weight").unwrap().value.dims(),
            &[8, 8, 3, 3]
        );
        assert_eq!(
            net.param("dec2.conv2.weight").unwrap().value.dims(),
            &[16, 32, 3, 3]
        );
        assert_eq!(net.param("out.weight").unwrap().value.dims(), &[1, 8, 1, 1]);
    }

    #[test]
    fn rejects_indivisible_input() {
        let net = build_network(&StageConfig::new("22", 2).unwrap(), 0).unwrap();
        assert!(matches!(
            net.denoise(&Image::filled(10, 8, 1.0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn padded_denoise_keeps_size() {
        let net = build_network(&StageConfig::new("4", 2).unwrap(), 0).unwrap();
        let img = Image::from_fn(10, 3, |x, y| (x + y) as f64);
        let out = net.denoise_padded(&img).unwrap();
        assert_eq!((out.width(), out.height()), (10, 3));
        assert_eq!(mirror(10, 10), 9);
        assert_eq!(mirror(3, 3), 2);
        assert_eq!(mirror(7, 3), 1);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let c = StageConfig::new("24", 2).unwrap();
        let net = Network::from_fn(&c, |_, d| vec![0.0; d.iter().product()]).unwrap();
        let out = net
            .denoise(&Image::from_fn(16, 16, |x, y| (x * y) as f64))
            .unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_mode_adds_input() {
        let c = StageConfig::new("2", 2).unwrap().with_residual(true);
        let net = Network::from_fn(&c, |_, d| vec![0.0; d.iter().product()]).unwrap();
        let img = Image::from_fn(4, 4, |x, _| x as f64 * 10.0);
        let out = net.denoise(&img).unwrap();
        for (a, b) in img.as_slice().iter().zip(out.as_slice()) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}

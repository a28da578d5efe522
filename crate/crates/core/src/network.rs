//! Seeded, untrained network instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::family::{
    FamilyConfig, NetConfig, BLOCK_KERNEL, LEAKY_SLOPE, NORM_EPS, UPSAMPLE_FACTOR,
};
use crate::ops::ConvSpec;
use crate::tape::{InputDifferentiable, Recorder, Tape, Var};
use crate::tensor::Tensor;

/// Per-member weight seed: `base ^ splitmix64(cap_index)`.
pub fn member_seed(base: u64, cap_index: usize) -> u64 {
    let mut z = (cap_index as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    base ^ (z ^ (z >> 31))
}

/// He-normal standard deviation corrected for the leaky-ReLU slope.
pub fn he_std(fan_in: usize, slope: f64) -> f64 {
    (2.0 / ((1.0 + slope * slope) * fan_in as f64)).sqrt()
}

fn he_normal(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let dist = Normal::new(0.0, he_std(fan_in, LEAKY_SLOPE)).expect("positive std");
    let n = shape.iter().product();
    Tensor::from_raw(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvLayer {
    /// Weights from the leaky-ReLU He rule, zero bias.
    pub fn init(spec: ConvSpec, rng: &mut ChaCha8Rng) -> Self {
        ConvLayer {
            weight: he_normal(rng, &spec.weight_shape(), spec.fan_in()),
            bias: Tensor::zeros(&[spec.out_channels]),
            spec,
        }
    }

    fn record(&self, rec: &mut Recorder, x: &Var) -> Result<Var> {
        rec.conv2d(x, &self.weight, &self.bias, &self.spec)
    }

    fn params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// conv -> instance norm -> leaky-ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: ConvLayer,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl ConvBlock {
    fn init(spec: ConvSpec, rng: &mut ChaCha8Rng) -> Self {
        let c = spec.out_channels;
        ConvBlock {
            conv: ConvLayer::init(spec, rng),
            gamma: Tensor::ones(&[c]),
            beta: Tensor::zeros(&[c]),
        }
    }

    fn record(&self, rec: &mut Recorder, x: &Var) -> Result<Var> {
        let h = self.conv.record(rec, x)?;
        let h = rec.instance_norm(&h, &self.gamma, &self.beta, NORM_EPS)?;
        rec.leaky_relu(&h, LEAKY_SLOPE)
    }

    fn params(&self) -> usize {
        self.conv.params() + self.gamma.len() + self.beta.len()
    }
}

#[derive(Debug, Clone)]
pub struct DecoderStage {
    /// `[C_deep, C, 2, 2]`.
    pub up_weight: Tensor,
    pub up_bias: Tensor,
    pub blocks: [ConvBlock; 2],
}

/// A fully materialized family member at initialization.
#[derive(Debug, Clone)]
pub struct NetworkInstance {
    config: NetConfig,
    family: FamilyConfig,
    seed: u64,
    encoder: Vec<[ConvBlock; 2]>,
    decoder: Vec<DecoderStage>,
    head: ConvLayer,
}

impl NetworkInstance {
    /// Draws every weight in layer order from a ChaCha8 stream seeded with `seed`.
    pub fn init(cfg: &NetConfig, fc: &FamilyConfig, seed: u64) -> Result<Self> {
        fc.validate()?;
        if cfg.channels.len() != fc.stages {
            return Err(Error::config(format!(
                "schedule {:?} has {} stages, family has {}",
                cfg.channels,
                cfg.channels.len(),
                fc.stages
            )));
        }
        let ch = &cfg.channels;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut encoder = Vec::with_capacity(fc.stages);
        let mut prev = fc.in_channels;
        for (l, &c) in ch.iter().enumerate() {
            let first =
                ConvSpec::same(prev, c, BLOCK_KERNEL).with_stride(if l == 0 { 1 } else { 2 });
            let b0 = ConvBlock::init(first, &mut rng);
            let b1 = ConvBlock::init(ConvSpec::same(c, c, BLOCK_KERNEL), &mut rng);
            encoder.push([b0, b1]);
            prev = c;
        }

        let mut decoder = Vec::with_capacity(fc.stages.saturating_sub(1));
        for l in (0..fc.stages - 1).rev() {
            let (deep, c) = (ch[l + 1], ch[l]);
            let k = UPSAMPLE_FACTOR;
            // Each upsampled pixel receives one tap from every input channel.
            let up_weight = he_normal(&mut rng, &[deep, c, k, k], deep);
            let b0 = ConvBlock::init(ConvSpec::same(2 * c, c, BLOCK_KERNEL), &mut rng);
            let b1 = ConvBlock::init(ConvSpec::same(c, c, BLOCK_KERNEL), &mut rng);
            decoder.push(DecoderStage {
                up_weight,
                up_bias: Tensor::zeros(&[c]),
                blocks: [b0, b1],
            });
        }

        let head = ConvLayer::init(ConvSpec::same(ch[0], fc.out_classes, 1), &mut rng);
        let net = NetworkInstance {
            config: cfg.clone(),
            family: fc.clone(),
            seed,
            encoder,
            decoder,
            head,
        };
        debug_assert_eq!(net.parameter_count(), cfg.param_count);
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn family(&self) -> &FamilyConfig {
        &self.family
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn head(&self) -> &ConvLayer {
        &self.head
    }

    pub fn encoder(&self) -> &[[ConvBlock; 2]] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DecoderStage] {
        &self.decoder
    }

    /// Every weight tensor in initialization order.
    pub fn weight_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for stage in &self.encoder {
            for b in stage {
                out.extend([&b.conv.weight, &b.conv.bias, &b.gamma, &b.beta]);
            }
        }
        for stage in &self.decoder {
            out.extend([&stage.up_weight, &stage.up_bias]);
            for b in &stage.blocks {
                out.extend([&b.conv.weight, &b.conv.bias, &b.gamma, &b.beta]);
            }
        }
        out.extend([&self.head.weight, &self.head.bias]);
        out
    }

    /// Counted from the materialized tensors.
    pub fn parameter_count(&self) -> usize {
        let enc: usize = self.encoder.iter().flatten().map(ConvBlock::params).sum();
        let dec: usize = self
            .decoder
            .iter()
            .map(|s| {
                s.up_weight.len()
                    + s.up_bias.len()
                    + s.blocks.iter().map(ConvBlock::params).sum::<usize>()
            })
            .sum();
        enc + dec + self.head.params()
    }
}

impl InputDifferentiable for NetworkInstance {
    fn input_dims(&self) -> (usize, usize, usize) {
        let (h, w) = self.family.input_size;
        (self.family.in_channels, h, w)
    }

    fn forward_taped(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut rec = Recorder::default();
        let mut h = rec.input(x.clone());

        let mut skips = Vec::with_capacity(self.encoder.len());
        for [b0, b1] in &self.encoder {
            h = b0.record(&mut rec, &h)?;
            h = b1.record(&mut rec, &h)?;
            skips.push(h.clone());
        }
        skips.pop();

        for stage in &self.decoder {
            let skip = skips.pop().expect("one skip per decoder stage");
            let up = rec.transposed_conv2d(
                &h,
                &stage.up_weight,
                &stage.up_bias,
                (UPSAMPLE_FACTOR, UPSAMPLE_FACTOR),
            )?;
            h = rec.concat_channels(&up, &skip)?;
            for b in &stage.blocks {
                h = b.record(&mut rec, &h)?;
            }
        }

        let out = self.head.record(&mut rec, &h)?;
        Ok((out.into_value(), rec.finish()))
    }
}

/// One layer of a [`Sequential`] chain.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv(ConvLayer),
    InstanceNorm {
        gamma: Tensor,
        beta: Tensor,
        eps: f64,
    },
    LeakyRelu(f64),
}

/// A plain chain of layers. Handy for checking the engine on small,
/// hand-built networks.
#[derive(Debug, Clone)]
pub struct Sequential {
    pub input_dims: (usize, usize, usize),
    pub layers: Vec<Layer>,
}

impl Sequential {
    /// A single `1x1` conv with unit weight on one channel.
    pub fn identity(h: usize, w: usize) -> Self {
        Sequential {
            input_dims: (1, h, w),
            layers: vec![Layer::Conv(ConvLayer {
                spec: ConvSpec::same(1, 1, 1),
                weight: Tensor::ones(&[1, 1, 1, 1]),
                bias: Tensor::zeros(&[1]),
            })],
        }
    }
}

impl InputDifferentiable for Sequential {
    fn input_dims(&self) -> (usize, usize, usize) {
        self.input_dims
    }

    fn forward_taped(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut rec = Recorder::default();
        let mut h = rec.input(x.clone());
        for layer in &self.layers {
            h = match layer {
                Layer::Conv(c) => c.record(&mut rec, &h)?,
                Layer::InstanceNorm { gamma, beta, eps } => {
                    rec.instance_norm(&h, gamma, beta, *eps)?
                }
                Layer::LeakyRelu(slope) => rec.leaky_relu(&h, *slope)?,
            };
        }
        Ok((h.into_value(), rec.finish()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::net_config;
    use crate::tape::input_gradient;

    fn small_family() -> FamilyConfig {
        FamilyConfig {
            base_channels: 4,
            max_channels_base: 16,
            stages: 3,
            in_channels: 1,
            out_classes: 2,
            input_size: (16, 16),
        }
    }

    #[test]
    fn materialized_count_matches_closed_form() {
        let fc = small_family();
        for i in 0..fc.family_size() {
            let cfg = net_config(&fc, i).unwrap();
            let net = NetworkInstance::init(&cfg, &fc, 1).unwrap();
            assert_eq!(net.parameter_count(), cfg.param_count);
            let total: usize = net.weight_tensors().iter().map(|t| t.len()).sum();
            assert_eq!(total, cfg.param_count);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let fc = small_family();
        let cfg = net_config(&fc, 0).unwrap();
        let a = NetworkInstance::init(&cfg, &fc, 42).unwrap();
        let b = NetworkInstance::init(&cfg, &fc, 42).unwrap();
        for (x, y) in a.weight_tensors().iter().zip(b.weight_tensors()) {
            let bx: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
            let by: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bx, by);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let fc = small_family();
        let cfg = net_config(&fc, 0).unwrap();
        let a = NetworkInstance::init(&cfg, &fc, 1).unwrap();
        let b = NetworkInstance::init(&cfg, &fc, 2).unwrap();
        assert_ne!(a.weight_tensors()[0], b.weight_tensors()[0]);
    }

    #[test]
    fn init_statistics_follow_he_rule() {
        let spec = ConvSpec::same(100, 100, 1);
        let layer = ConvLayer::init(spec, &mut ChaCha8Rng::seed_from_u64(9));
        let w = layer.weight.data();
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        let target = (2.0 / (1.0001 * 100.0f64)).sqrt();
        assert!(
            (std / target - 1.0).abs() < 0.05,
            "std {std}, target {target}"
        );
        assert!(layer.bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn forward_preserves_resolution_for_every_member() {
        let fc = small_family();
        let x = Tensor::full(&[2, 1, 16, 16], 0.5);
        for i in 0..fc.family_size() {
            let net = NetworkInstance::init(&net_config(&fc, i).unwrap(), &fc, 3).unwrap();
            assert_eq!(net.forward(&x).unwrap().shape(), &[2, 2, 16, 16]);
        }
    }

    #[test]
    fn zero_input_gives_finite_logits_and_forward_is_pure() {
        let fc = small_family();
        let net = NetworkInstance::init(&net_config(&fc, 1).unwrap(), &fc, 5).unwrap();
        let x = Tensor::zeros(&[1, 1, 16, 16]);
        let y = net.forward(&x).unwrap();
        assert!(y.is_finite());
        assert_eq!(y, net.forward(&x).unwrap());
    }

    #[test]
    fn rejects_wrong_input_size() {
        let fc = small_family();
        let net = NetworkInstance::init(&net_config(&fc, 0).unwrap(), &fc, 5).unwrap();
        assert!(matches!(
            net.forward(&Tensor::zeros(&[1, 1, 8, 16])),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn identity_net_gradient_is_all_ones() {
        let net = Sequential::identity(4, 5);
        let x = Tensor::full(&[2, 1, 4, 5], -0.3);
        let g = input_gradient(&net, &x).unwrap();
        assert_eq!(g.data(), &[1.0; 40]);
    }

    #[test]
    fn member_seeds_are_distinct() {
        let seeds: std::collections::HashSet<_> = (0..10).map(|i| member_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10);
    }
}

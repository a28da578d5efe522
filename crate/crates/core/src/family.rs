//! The ordered width-capped U-Net family.
//!
//! Member `i` caps every stage at `C_max^base / 2^i`; stage `l` gets
//! `min(2^l * C0, cap)` channels. Depth, downsampling and output resolution
//! are the same for every member.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convolution kernel size of every conv-norm-act block.
pub const BLOCK_KERNEL: usize = 3;
/// Kernel (and stride) of the decoder upsampling.
pub const UPSAMPLE_FACTOR: usize = 2;
pub const LEAKY_SLOPE: f64 = 0.01;
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub base_channels: usize,
    pub max_channels_base: usize,
    pub stages: usize,
    pub in_channels: usize,
    pub out_classes: usize,
    pub input_size: (usize, usize),
}

impl FamilyConfig {
    /// Defaults `C0 = 32`, `C_max^base = 512`, and the stage count from
    /// [`default_stages`].
    pub fn for_input(in_channels: usize, out_classes: usize, input_size: (usize, usize)) -> Self {
        FamilyConfig {
            base_channels: 32,
            max_channels_base: 512,
            stages: default_stages(input_size),
            in_channels,
            out_classes,
            input_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base channels", self.base_channels),
            ("stages", self.stages),
            ("input channels", self.in_channels),
            ("output classes", self.out_classes),
            ("input height", self.input_size.0),
            ("input width", self.input_size.1),
        ];
        for (what, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{what} must be positive")));
            }
        }
        if !self.max_channels_base.is_power_of_two() {
            return Err(Error::config(format!(
                "max channels {} is not a power of two",
                self.max_channels_base
            )));
        }
        if self.stages > 31 {
            return Err(Error::config(format!(
                "{} stages is unreasonable",
                self.stages
            )));
        }
        let factor = 1usize << (self.stages - 1);
        let (h, w) = self.input_size;
        if h % factor != 0 || w % factor != 0 {
            return Err(Error::config(format!(
                "input size {h}x{w} is not divisible by 2^{} = {factor}",
                self.stages - 1
            )));
        }
        Ok(())
    }

    /// `log2(C_max^base) + 1`.
    pub fn family_size(&self) -> usize {
        self.max_channels_base.trailing_zeros() as usize + 1
    }

    pub fn cap(&self, cap_index: usize) -> Result<usize> {
        if cap_index >= self.family_size() {
            return Err(Error::config(format!(
                "cap index {cap_index} outside 0..={}",
                self.family_size() - 1
            )));
        }
        Ok(self.max_channels_base >> cap_index)
    }

    /// Spatial size of the feature maps at stage `l`.
    pub fn stage_size(&self, l: usize) -> (usize, usize) {
        (self.input_size.0 >> l, self.input_size.1 >> l)
    }
}

/// `min(6, floor(log2(min(H, W))) - 2)`, at least 1.
pub fn default_stages((h, w): (usize, usize)) -> usize {
    let side = h.min(w).max(1);
    let log2 = (usize::BITS - 1 - side.leading_zeros()) as usize;
    log2.saturating_sub(2).clamp(1, 6)
}

/// One member of the family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub cap_index: usize,
    pub cap: usize,
    pub channels: Vec<usize>,
    pub param_count: usize,
}

/// Encoder widths `[min(2^l * C0, C_max^base / 2^i) for l in 0..L]`.
pub fn channel_schedule(fc: &FamilyConfig, cap_index: usize) -> Result<Vec<usize>> {
    let cap = fc.cap(cap_index)?;
    Ok((0..fc.stages)
        .map(|l| fc.base_channels.saturating_mul(1 << l).min(cap))
        .collect())
}

/// All members, largest (`i = 0`) first.
pub fn build_family(fc: &FamilyConfig) -> Result<Vec<NetConfig>> {
    fc.validate()?;
    (0..fc.family_size()).map(|i| net_config(fc, i)).collect()
}

pub fn net_config(fc: &FamilyConfig, cap_index: usize) -> Result<NetConfig> {
    let channels = channel_schedule(fc, cap_index)?;
    let param_count = count_for_schedule(&channels, fc);
    Ok(NetConfig {
        cap_index,
        cap: fc.cap(cap_index)?,
        channels,
        param_count,
    })
}

/// Recounts the scalar parameters of `cfg` from its schedule.
pub fn param_count(cfg: &NetConfig, fc: &FamilyConfig) -> usize {
    count_for_schedule(&cfg.channels, fc)
}

/// conv3x3 (+bias) followed by instance-norm affine.
fn block_params(cin: usize, cout: usize) -> usize {
    cout * cin * BLOCK_KERNEL * BLOCK_KERNEL + cout + 2 * cout
}

fn count_for_schedule(channels: &[usize], fc: &FamilyConfig) -> usize {
    let mut total = 0;
    let mut prev = fc.in_channels;
    for &c in channels {
        total += block_params(prev, c) + block_params(c, c);
        prev = c;
    }
    for l in (0..channels.len().saturating_sub(1)).rev() {
        let (deep, c) = (channels[l + 1], channels[l]);
        total += deep * c * UPSAMPLE_FACTOR * UPSAMPLE_FACTOR + c;
        total += block_params(2 * c, c) + block_params(c, c);
    }
    total + fc.out_classes * channels[0] + fc.out_classes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nnunet_like() -> FamilyConfig {
        FamilyConfig {
            base_channels: 32,
            max_channels_base: 512,
            stages: 6,
            in_channels: 1,
            out_classes: 2,
            input_size: (256, 256),
        }
    }

    fn tiny(cap: usize) -> FamilyConfig {
        FamilyConfig {
            base_channels: 2,
            max_channels_base: cap,
            stages: 2,
            in_channels: 1,
            out_classes: 2,
            input_size: (8, 8),
        }
    }

    #[test]
    fn schedules_follow_the_cap() {
        let fc = nnunet_like();
        assert_eq!(
            channel_schedule(&fc, 0).unwrap(),
            [32, 64, 128, 256, 512, 512]
        );
        assert_eq!(channel_schedule(&fc, 4).unwrap(), [32; 6]);
        assert_eq!(channel_schedule(&fc, 9).unwrap(), [1; 6]);
        assert!(matches!(channel_schedule(&fc, 10), Err(Error::Config(_))));
    }

    #[test]
    fn family_sizes() {
        assert_eq!(build_family(&nnunet_like()).unwrap().len(), 10);
        let caps: Vec<_> = build_family(&tiny(8))
            .unwrap()
            .iter()
            .map(|c| c.cap)
            .collect();
        assert_eq!(caps, [8, 4, 2, 1]);
    }

    #[test]
    fn single_block_counts() {
        // 3x3 conv 1 -> 2 with bias is 20; the norm affine adds 4.
        assert_eq!(block_params(1, 2), 20 + 4);
    }

    #[test]
    fn tiny_family_matches_hand_count() {
        // Schedules [2,4], [2,2], [1,1]; weights + biases + norm affine,
        // tallied block by block:
        //   [2,2]: enc 24+42 | 42+42, up 18, dec 78+42, head 6        = 294
        //   [2,4]: enc 24+42 | 84+156, up 34, dec 78+42, head 6       = 466
        //   [1,1]: enc 12+12 | 12+12, up 5, dec 21+12, head 4         = 90
        let counts: Vec<_> = build_family(&tiny(4))
            .unwrap()
            .iter()
            .map(|c| c.param_count)
            .collect();
        assert_eq!(counts, [466, 294, 90]);
    }

    #[test]
    fn param_count_recomputes() {
        let fc = nnunet_like();
        for cfg in build_family(&fc).unwrap() {
            assert_eq!(param_count(&cfg, &fc), cfg.param_count);
        }
    }

    #[test]
    fn default_stage_rule() {
        assert_eq!(default_stages((64, 64)), 4);
        assert_eq!(default_stages((512, 256)), 6);
        assert_eq!(default_stages((16, 16)), 2);
        assert_eq!(default_stages((4, 4)), 1);
    }

    #[test]
    fn validation() {
        let mut fc = nnunet_like();
        fc.max_channels_base = 500;
        assert!(fc.validate().is_err());
        let mut fc = nnunet_like();
        fc.input_size = (100, 96);
        assert!(fc.validate().is_err());
        let mut fc = nnunet_like();
        fc.base_channels = 0;
        assert!(fc.validate().is_err());
    }
}

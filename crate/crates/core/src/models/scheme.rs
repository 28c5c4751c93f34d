use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::ConvSpec;
use crate::error::{Error, Result};

/// Kernel extent shared by every generator and discriminator layer.
pub const KERNEL: usize = 4;
/// Maximum encoder depth (reached at 256 px and above).
pub const MAX_ENCODER_DEPTH: usize = 8;
/// Width multipliers of the encoder relative to the base width.
const ENCODER_MULTIPLIERS: [usize; MAX_ENCODER_DEPTH] = [1, 2, 4, 8, 8, 8, 8, 8];
/// Decoder layers (counted from the innermost) that apply dropout.
const DROPOUT_LAYERS: usize = 3;
pub const DROPOUT_RATE: f64 = 0.5;

/// Output task of the generator. Channel order follows declaration order:
/// segmentation mask first, bone-suppressed image second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Segmentation,
    BoneSuppression,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Segmentation => "segmentation",
            Task::BoneSuppression => "bone-suppression",
        }
    }
}

/// The six ablation schemes: single-task (per task), single-task with a
/// dilated generator, multitask, multitask with a dilated generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    StSeg,
    StBone,
    StSegD,
    StBoneD,
    Mt,
    Mtdg,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::StSeg,
        Scheme::StBone,
        Scheme::StSegD,
        Scheme::StBoneD,
        Scheme::Mt,
        Scheme::Mtdg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::StSeg => "st-seg",
            Scheme::StBone => "st-bone",
            Scheme::StSegD => "st-seg-d",
            Scheme::StBoneD => "st-bone-d",
            Scheme::Mt => "mt",
            Scheme::Mtdg => "mtdg",
        }
    }

    pub fn tasks(self) -> &'static [Task] {
        match self {
            Scheme::StSeg | Scheme::StSegD => &[Task::Segmentation],
            Scheme::StBone | Scheme::StBoneD => &[Task::BoneSuppression],
            Scheme::Mt | Scheme::Mtdg => &[Task::Segmentation, Task::BoneSuppression],
        }
    }

    pub fn dilated(self) -> bool {
        matches!(self, Scheme::StSegD | Scheme::StBoneD | Scheme::Mtdg)
    }

    pub fn has_task(self, task: Task) -> bool {
        self.tasks().contains(&task)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown scheme `{s}` (expected one of st-seg, st-bone, st-seg-d, st-bone-d, mt, mtdg)"
                ))
            })
    }
}

/// A scheme instantiated at a concrete image size and width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub image_size: usize,
    pub base_width: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv,
    Deconv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    None,
    LeakyRelu,
    Relu,
    Tanh,
    Sigmoid,
}

/// Self-describing record of one layer, serialized with checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub batch_norm: bool,
    /// Applied to the layer input.
    pub pre_activation: Activation,
    /// Applied after the (normalized) layer output.
    pub post_activation: Activation,
    pub dropout: f64,
    /// Encoder layer whose output is concatenated to this layer's input.
    pub skip_from: Option<String>,
}

impl LayerDescriptor {
    pub fn conv_spec(&self) -> ConvSpec {
        ConvSpec {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            dilation: self.dilation,
        }
    }

    /// Learnable scalars in this layer.
    pub fn param_count(&self) -> usize {
        let weights = self.in_channels * self.out_channels * self.kernel * self.kernel;
        let bias = self.out_channels;
        let norm = if self.batch_norm {
            2 * self.out_channels
        } else {
            0
        };
        weights + bias + norm
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub scheme: Scheme,
    pub image_size: usize,
    pub base_width: usize,
    pub generator: Vec<LayerDescriptor>,
    pub discriminator: Vec<LayerDescriptor>,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, image_size: usize) -> Self {
        Self {
            scheme,
            image_size,
            base_width: 64,
        }
    }

    pub fn with_base_width(mut self, base_width: usize) -> Self {
        self.base_width = base_width;
        self
    }

    pub fn tasks(&self) -> &'static [Task] {
        self.scheme.tasks()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks().len()
    }

    pub fn dilated(&self) -> bool {
        self.scheme.dilated()
    }

    pub fn kernel(&self) -> usize {
        KERNEL
    }

    pub fn in_channels(&self) -> usize {
        3
    }

    pub fn out_channels(&self) -> usize {
        3 * self.num_tasks()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.image_size;
        if n < 16 || n % 16 != 0 {
            return Err(Error::config(format!(
                "image size {n} must be a multiple of 16 (e.g. 64, 256, 512)"
            )));
        }
        if self.base_width == 0 {
            return Err(Error::config("base width must be positive"));
        }
        Ok(())
    }

    /// Number of stride-2 encoder layers: 8 from 256 px up. Smaller images
    /// stop one halving early so the innermost map is 2x2; batch statistics
    /// of a 1x1 map at batch size 1 would erase the bottleneck.
    pub fn encoder_depth(&self) -> usize {
        let halvings = self.image_size.trailing_zeros() as usize;
        if self.image_size >= 256 {
            halvings.min(MAX_ENCODER_DEPTH)
        } else {
            halvings - 1
        }
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        ENCODER_MULTIPLIERS[..self.encoder_depth()]
            .iter()
            .map(|m| m * self.base_width)
            .collect()
    }

    /// 1-based encoder layers that use dilation rate 2: layers 2 through 7,
    /// clipped to exclude the innermost layer of shallower encoders.
    pub fn is_dilated_layer(&self, layer: usize) -> bool {
        self.dilated() && layer >= 2 && layer <= 7.min(self.encoder_depth() - 1)
    }

    pub fn generator_layers(&self) -> Vec<LayerDescriptor> {
        let depth = self.encoder_depth();
        let widths = self.encoder_widths();
        let mut layers = Vec::with_capacity(2 * depth);
        for i in 1..=depth {
            let dilation = if self.is_dilated_layer(i) { 2 } else { 1 };
            layers.push(LayerDescriptor {
                name: format!("gen.enc{i}"),
                kind: LayerKind::Conv,
                in_channels: if i == 1 {
                    self.in_channels()
                } else {
                    widths[i - 2]
                },
                out_channels: widths[i - 1],
                kernel: KERNEL,
                stride: 2,
                // keeps the output at exactly half the input for k=4, s=2
                padding: if dilation == 2 { 3 } else { 1 },
                dilation,
                batch_norm: i > 1,
                pre_activation: if i == 1 {
                    Activation::None
                } else {
                    Activation::LeakyRelu
                },
                post_activation: Activation::None,
                dropout: 0.0,
                skip_from: None,
            });
        }
        for k in 0..depth {
            let last = k == depth - 1;
            let in_channels = if k == 0 {
                widths[depth - 1]
            } else {
                2 * widths[depth - 1 - k]
            };
            layers.push(LayerDescriptor {
                name: format!("gen.dec{}", k + 1),
                kind: LayerKind::Deconv,
                in_channels,
                out_channels: if last {
                    self.out_channels()
                } else {
                    widths[depth - 2 - k]
                },
                kernel: KERNEL,
                stride: 2,
                padding: 1,
                dilation: 1,
                batch_norm: !last,
                pre_activation: Activation::Relu,
                post_activation: if last {
                    Activation::Tanh
                } else {
                    Activation::None
                },
                dropout: if !last && k < DROPOUT_LAYERS {
                    DROPOUT_RATE
                } else {
                    0.0
                },
                skip_from: (k > 0).then(|| format!("gen.enc{}", depth - k)),
            });
        }
        layers
    }

    /// Number of stride-2 layers in the discriminator: 3 (the standard
    /// 70x70 PatchGAN), reduced for images too small to leave a patch map.
    pub fn discriminator_downsamples(&self) -> usize {
        (1..=3)
            .rev()
            .find(|&n| (self.image_size >> n) >= 3)
            .unwrap_or(1)
    }

    pub fn discriminator_layers(&self) -> Vec<LayerDescriptor> {
        let downs = self.discriminator_downsamples();
        let bw = self.base_width;
        let in_channels = self.in_channels() + self.out_channels();
        let mut layers = Vec::new();
        let mut prev = in_channels;
        let mut push = |name: String,
                        out: usize,
                        stride: usize,
                        bn: bool,
                        post: Activation,
                        prev: &mut usize| {
            layers.push(LayerDescriptor {
                name,
                kind: LayerKind::Conv,
                in_channels: *prev,
                out_channels: out,
                kernel: KERNEL,
                stride,
                padding: 1,
                dilation: 1,
                batch_norm: bn,
                pre_activation: Activation::None,
                post_activation: post,
                dropout: 0.0,
                skip_from: None,
            });
            *prev = out;
        };
        for i in 0..downs {
            let width = bw * (1 << i).min(8);
            push(
                format!("disc.conv{}", i + 1),
                width,
                2,
                i > 0,
                Activation::LeakyRelu,
                &mut prev,
            );
        }
        let width = bw * (1 << downs).min(8);
        push(
            format!("disc.conv{}", downs + 1),
            width,
            1,
            true,
            Activation::LeakyRelu,
            &mut prev,
        );
        push(
            format!("disc.conv{}", downs + 2),
            1,
            1,
            false,
            Activation::Sigmoid,
            &mut prev,
        );
        layers
    }

    pub fn descriptor(&self) -> ArchitectureDescriptor {
        ArchitectureDescriptor {
            scheme: self.scheme,
            image_size: self.image_size,
            base_width: self.base_width,
            generator: self.generator_layers(),
            discriminator: self.discriminator_layers(),
        }
    }

    /// Side `k` of the discriminator's `k x k` patch map.
    pub fn patch_grid(&self) -> usize {
        self.discriminator_layers()
            .iter()
            .try_fold(self.image_size, |n, l| l.conv_spec().conv_out(n))
            .unwrap_or(0)
    }

    /// Nominal patch extent `n = N / k`.
    pub fn patch_size(&self) -> f64 {
        self.image_size as f64 / self.patch_grid() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert!("pix2pix".parse::<Scheme>().is_err());
    }

    #[test]
    fn scheme_table() {
        assert_eq!(Scheme::Mtdg.tasks().len(), 2);
        assert!(Scheme::Mtdg.dilated());
        assert!(!Scheme::Mt.dilated());
        assert_eq!(Scheme::StBone.tasks(), &[Task::BoneSuppression]);
        assert_eq!(SchemeConfig::new(Scheme::Mt, 512).out_channels(), 6);
        assert_eq!(SchemeConfig::new(Scheme::StSeg, 512).out_channels(), 3);
    }

    #[test]
    fn mtdg_512_dilates_layers_two_through_seven() {
        let cfg = SchemeConfig::new(Scheme::Mtdg, 512);
        let layers = cfg.generator_layers();
        let enc: Vec<_> = layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv)
            .collect();
        assert_eq!(enc.len(), 8);
        let dil: Vec<usize> = enc.iter().map(|l| l.dilation).collect();
        assert_eq!(dil, vec![1, 2, 2, 2, 2, 2, 2, 1]);
        let widths: Vec<usize> = enc.iter().map(|l| l.out_channels).collect();
        assert_eq!(widths, vec![64, 128, 256, 512, 512, 512, 512, 512]);
    }

    #[test]
    fn shallow_encoders_for_small_images() {
        assert_eq!(SchemeConfig::new(Scheme::Mt, 64).encoder_depth(), 5);
        assert_eq!(SchemeConfig::new(Scheme::Mt, 16).encoder_depth(), 3);
        assert_eq!(SchemeConfig::new(Scheme::Mt, 128).encoder_depth(), 6);
        assert_eq!(SchemeConfig::new(Scheme::Mt, 256).encoder_depth(), 8);
        assert_eq!(SchemeConfig::new(Scheme::Mt, 768).encoder_depth(), 8);
        let cfg = SchemeConfig::new(Scheme::Mtdg, 64);
        assert!((2..=4).all(|l| cfg.is_dilated_layer(l)));
        assert!(!cfg.is_dilated_layer(5));
    }

    #[test]
    fn invalid_sizes_rejected() {
        for n in [0, 8, 100, 250] {
            assert!(SchemeConfig::new(Scheme::Mt, n).validate().is_err());
        }
        assert!(SchemeConfig::new(Scheme::Mt, 256)
            .with_base_width(0)
            .validate()
            .is_err());
    }

    #[test]
    fn patch_grid_follows_convolution_arithmetic() {
        for (n, k) in [(64, 6), (128, 14), (256, 30), (512, 62), (16, 2)] {
            assert_eq!(SchemeConfig::new(Scheme::Mt, n).patch_grid(), k, "size {n}");
        }
    }
}

//! Generator, PatchGAN discriminator and the scheme table that configures
//! them.

mod discriminator;
mod generator;
mod scheme;

pub use discriminator::{Discriminator, DiscriminatorTrace};
pub use generator::{Generator, GeneratorTrace, INIT_STD};
pub use scheme::{
    Activation, ArchitectureDescriptor, LayerDescriptor, LayerKind, Scheme, SchemeConfig, Task,
    DROPOUT_RATE, KERNEL, MAX_ENCODER_DEPTH,
};

use crate::engine::Scalar;
use crate::error::{Error, Result};

pub fn build_generator(cfg: SchemeConfig, seed: u64) -> Result<Generator<f32>> {
    Generator::new(cfg, seed)
}

pub fn build_discriminator(cfg: SchemeConfig, seed: u64) -> Result<Discriminator<f32>> {
    Discriminator::new(cfg, seed)
}

/// Learnable scalars of a generator/discriminator pair.
pub fn count_parameters<F: Scalar>(g: &Generator<F>, d: &Discriminator<F>) -> usize {
    g.param_count() + d.param_count()
}

/// Parameter count implied by a configuration, computed from its layer
/// descriptors without allocating weights.
pub fn count_parameters_for(cfg: &SchemeConfig) -> usize {
    cfg.generator_layers()
        .iter()
        .chain(cfg.discriminator_layers().iter())
        .map(LayerDescriptor::param_count)
        .sum()
}

/// Receptive field (in input pixels) of one unit of encoder layer `layer`
/// (1-based): `r_i = r_{i-1} + d_i (k - 1) prod_{j<i} s_j`, `r_0 = 1`.
pub fn receptive_field(cfg: &SchemeConfig, layer: usize) -> Result<usize> {
    let encoder: Vec<LayerDescriptor> = cfg
        .generator_layers()
        .into_iter()
        .filter(|l| l.kind == LayerKind::Conv)
        .collect();
    if layer == 0 || layer > encoder.len() {
        return Err(Error::config(format!(
            "layer {layer} outside 1..={} for a {} px encoder",
            encoder.len(),
            cfg.image_size
        )));
    }
    let mut field = 1;
    let mut jump = 1;
    for l in &encoder[..layer] {
        field += l.dilation * (l.kernel - 1) * jump;
        jump *= l.stride;
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_field_hand_values() {
        let plain = SchemeConfig::new(Scheme::Mt, 512);
        let dilated = SchemeConfig::new(Scheme::Mtdg, 512);
        assert_eq!(receptive_field(&plain, 1).unwrap(), 4);
        assert_eq!(receptive_field(&dilated, 1).unwrap(), 4);
        assert_eq!(receptive_field(&plain, 2).unwrap(), 10);
        // 4 + 2*3*2
        assert_eq!(receptive_field(&dilated, 2).unwrap(), 16);
        assert!(receptive_field(&plain, 0).is_err());
        assert!(receptive_field(&plain, 9).is_err());
    }

    #[test]
    fn descriptor_count_matches_allocated_weights() {
        let cfg = SchemeConfig::new(Scheme::Mtdg, 64).with_base_width(4);
        let g = Generator::<f32>::new(cfg, 0).unwrap();
        let d = Discriminator::<f32>::new(cfg, 0).unwrap();
        assert_eq!(count_parameters(&g, &d), count_parameters_for(&cfg));
    }
}

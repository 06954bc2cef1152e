//! Joint encoder / split decoder generator and the joint patch discriminator.

mod discriminator;
mod generator;

pub use discriminator::{DiscriminatorConfig, DiscriminatorTrace, PatchDiscriminator};
pub use generator::{GeneratorConfig, GeneratorModel, GeneratorTrace, Translation, MIN_BASE_CHANNELS};

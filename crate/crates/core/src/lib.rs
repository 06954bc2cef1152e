//! Joint image and class-map translation between two unpaired domains.
//!
//! Generators encode an image together with its one-hot class planes and decode both a
//! translated image and a translated class map. Training combines adversarial, identity,
//! cycle-reconstruction, background-preservation and label-preservation losses.

pub mod datamodel;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod scalar;
pub mod shapes;
pub mod tensor;
pub mod trainer;
pub mod io;
pub mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Single-precision generator, the training default.
pub type Generator = network::GeneratorModel<f32>;
/// Double-precision generator, used for gradient checks.
pub type Generator64 = network::GeneratorModel<f64>;
pub type Discriminator = network::PatchDiscriminator<f32>;
pub type Discriminator64 = network::PatchDiscriminator<f64>;
pub type TrainState = trainer::TrainState<f32>;
pub type TrainState64 = trainer::TrainState<f64>;
pub type Pair = datamodel::LabeledPair<f32>;
pub type Image = datamodel::RawImage<f32>;

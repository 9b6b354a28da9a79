//! The UniST video saliency model at desk scale, with its objectives, metrics,
//! dataset plumbing and training harness.

pub mod config;
pub mod data;
pub mod decoders;
pub mod encoder;
pub mod error;
pub mod gradcheck_suite;
pub mod harness;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod tokens;
pub mod transformer;

pub use error::{Error, Result};
pub use model::{Forward, ModelConfig, Task, UniST};

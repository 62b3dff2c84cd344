mod check;
mod checkpoint;
mod config;
mod finetune;
mod model;
mod optim;
mod train;

pub use check::*;
pub use checkpoint::*;
pub use config::{EncoderConfig, Preset, TrainConfig};
pub use finetune::*;
pub use model::*;
pub use optim::Adam;
pub use train::*;

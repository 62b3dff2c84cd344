pub mod baseline;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod data;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod glyph;
pub mod numerics;
pub mod pinyin;
pub mod rng;

pub use error::{Error, Result};

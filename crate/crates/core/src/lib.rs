pub mod adapter;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod granularity;
pub mod oracle;
pub mod pipeline;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};

pub mod codecs;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod lm;
pub mod metrics;
pub mod pipeline;
pub mod quantize;
pub mod reformer;
pub mod synthetic;

pub use error::{Result, StegoError};

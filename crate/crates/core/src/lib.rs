pub mod blocks;
pub mod error;
pub mod events;
pub mod genome;
pub mod proxies;
pub mod search;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};

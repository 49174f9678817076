pub mod analysis;
pub mod decoder;
pub mod detection;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod numerics;
pub mod probe;
pub mod seeds;

pub use error::{Error, Result};

pub mod baselines;
pub mod error;
pub mod goals;
pub mod neural;
pub mod presets;
pub mod rates;
pub mod schedule;
pub mod simulate;
pub mod trainer;
pub mod utility;

pub use error::{Error, Result};

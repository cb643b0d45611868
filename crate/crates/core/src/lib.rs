pub mod cauchy;
pub mod coefficients;
pub mod cz;
pub mod error;
pub mod family;
pub mod generators;
pub mod maximal;
pub mod measure;
pub mod norms;
pub mod scenario;
pub mod sweeps;

pub use error::{Error, Result};

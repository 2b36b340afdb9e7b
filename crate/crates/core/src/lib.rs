pub mod binning;
pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fusion;
mod linalg;
pub mod mpca;
pub mod pipeline;
pub mod registration;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Modality, Mode, Tensor3};

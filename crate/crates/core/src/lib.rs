//! Remote-sensing dehazing toolkit: a small tensor engine with reverse-mode
//! differentiation, the MCAF-Net graph, the dark-channel haze pipeline,
//! image-quality metrics and dataset tooling.

pub mod atomic;
pub mod autodiff;
pub mod classical;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod weights;

pub use autodiff::Var;
pub use error::{Error, Result};
pub use params::{Bound, ParamStore};
pub use rng::SeededRng;
pub use tensor::{Scalar, Tensor};

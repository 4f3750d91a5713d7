//! MCAF-Net: MFIBA encoder stages, CSAM upsampling bridges and MFAFM skip
//! fusion in a U-shaped layout, plus closed-form cost accounting.

pub mod accounting;
pub mod config;
pub mod csam;
pub mod layers;
pub mod mfafm;
pub mod mfib;
pub mod net;

pub use accounting::{count_params_flops, ModelCost, FLOPS_PER_MAC};
pub use config::ModelConfig;
pub use net::{init_params, mcafnet_forward, McafNet, NetOutput};

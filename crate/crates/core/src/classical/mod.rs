//! Dark-channel-prior haze pipeline: dehazing baseline, haze density
//! grading, threshold discovery, stratified splitting and a synthetic hazer.

pub mod dcp;
pub mod kmeans;
pub mod split;
pub mod synth;

pub use dcp::{
    classify_haze, dark_channel, dcp_dehaze, estimate_atmospheric_light, haze_density,
    transmission, DcpConfig, DcpOutput, HazeClass, HazeReport, Map, DEFAULT_THRESHOLDS,
};
pub use kmeans::{kmeans_thresholds, KMeans};
pub use split::{split_counts, stratified_split, Split};
pub use synth::{invert_haze, scene, synthesize_haze, Transmission};

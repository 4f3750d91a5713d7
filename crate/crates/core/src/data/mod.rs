//! Image I/O, geographic cropping, tiling and dataset manifests.

pub mod geo;
pub mod image;
pub mod manifest;
pub mod tile;

pub use self::geo::{geo_crop, GeoMeta};
pub use self::image::Image;
pub use self::manifest::{build_manifest, Manifest, ManifestConfig, ManifestRecord};
pub use self::tile::{tile_image, untile};

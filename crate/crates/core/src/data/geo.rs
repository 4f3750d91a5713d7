//! Geographic extents and coordinate-based cropping.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::image::Image;

/// Corner coordinates of a raster, as `[lon, lat]`. Pixel positions map
/// linearly onto the extent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoMeta {
    pub tl: [f64; 2],
    pub br: [f64; 2],
}

impl GeoMeta {
    pub fn new(tl: [f64; 2], br: [f64; 2]) -> Result<Self> {
        let g = Self { tl, br };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tl.iter().chain(&self.br).all(|v| v.is_finite())
            && self.tl[0] < self.br[0]
            && self.tl[1] > self.br[1];
        if ok {
            Ok(())
        } else {
            Err(Error::Range(format!(
                "degenerate extent {:?} .. {:?}",
                self.tl, self.br
            )))
        }
    }

    pub fn lon_span(&self) -> f64 {
        self.br[0] - self.tl[0]
    }

    pub fn lat_span(&self) -> f64 {
        self.tl[1] - self.br[1]
    }

    /// Read a `{"tl": [lon, lat], "br": [lon, lat]}` sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        g.validate()?;
        Ok(g)
    }
}

// Absorbs floating error in coordinates that land exactly on pixel edges.
const EDGE_EPS: f64 = 1e-9;

/// Pixel window `(row0, col0, rows, cols)` covering `region` inside a raster
/// of `width`×`height` spanning `meta`. Start and end edges are floored;
/// the end edge is exclusive.
pub fn pixel_window(
    width: usize,
    height: usize,
    meta: &GeoMeta,
    region: &GeoMeta,
) -> Result<(usize, usize, usize, usize)> {
    meta.validate()?;
    region.validate()?;
    let inside = region.tl[0] >= meta.tl[0]
        && region.br[0] <= meta.br[0]
        && region.tl[1] <= meta.tl[1]
        && region.br[1] >= meta.br[1];
    if !inside {
        return Err(Error::Range(format!(
            "region {:?}..{:?} outside raster {:?}..{:?}",
            region.tl, region.br, meta.tl, meta.br
        )));
    }
    let col = |lon: f64| {
        ((lon - meta.tl[0]) / meta.lon_span() * width as f64 + EDGE_EPS).floor() as usize
    };
    let row = |lat: f64| {
        ((meta.tl[1] - lat) / meta.lat_span() * height as f64 + EDGE_EPS).floor() as usize
    };
    let (c0, c1) = (col(region.tl[0]), col(region.br[0]).min(width));
    let (r0, r1) = (row(region.tl[1]), row(region.br[1]).min(height));
    if c1 <= c0 || r1 <= r0 {
        return Err(Error::Range("region covers no whole pixel".into()));
    }
    Ok((r0, c0, r1 - r0, c1 - c0))
}

/// Crop `img` (spanning `meta`) to `region`. The result carries the extent
/// of the pixels actually kept.
pub fn geo_crop(img: &Image, meta: &GeoMeta, region: &GeoMeta) -> Result<Image> {
    let (r0, c0, rows, cols) = pixel_window(img.width(), img.height(), meta, region)?;
    let mut out = img.crop(r0, c0, rows, cols)?;
    let dlon = meta.lon_span() / img.width() as f64;
    let dlat = meta.lat_span() / img.height() as f64;
    out.geo = Some(GeoMeta {
        tl: [meta.tl[0] + c0 as f64 * dlon, meta.tl[1] - r0 as f64 * dlat],
        br: [
            meta.tl[0] + (c0 + cols) as f64 * dlon,
            meta.tl[1] - (r0 + rows) as f64 * dlat,
        ],
    });
    Ok(out)
}

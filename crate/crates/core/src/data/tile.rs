use crate::error::{Error, Result};

use super::image::Image;

/// Non-overlapping `tile`×`tile` crops in row-major order with their
/// `(row, col)` pixel origins. Partial tiles at the right and bottom edges
/// are dropped.
pub fn tile_image(img: &Image, tile: usize) -> Result<Vec<(Image, (usize, usize))>> {
    if tile == 0 {
        return Err(Error::Invalid("tile size must be >= 1".into()));
    }
    let mut out = Vec::with_capacity((img.height() / tile) * (img.width() / tile));
    for r in 0..img.height() / tile {
        for c in 0..img.width() / tile {
            let origin = (r * tile, c * tile);
            out.push((img.crop(origin.0, origin.1, tile, tile)?, origin));
        }
    }
    Ok(out)
}

/// Paste tiles back into a `width`×`height` canvas. Uncovered pixels stay 0.
pub fn untile(tiles: &[(Image, (usize, usize))], width: usize, height: usize) -> Result<Image> {
    let mut out = Image::filled(width, height, [0.0; 3]);
    for (t, (r0, c0)) in tiles {
        if r0 + t.height() > height || c0 + t.width() > width {
            return Err(Error::Range(format!(
                "tile at ({r0},{c0}) overflows canvas"
            )));
        }
        for c in 0..3 {
            for y in 0..t.height() {
                for x in 0..t.width() {
                    out.set(c, r0 + y, c0 + x, t.get(c, y, x));
                }
            }
        }
    }
    Ok(out)
}

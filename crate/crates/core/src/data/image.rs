//! Three-channel raster images with values in [0, 1].

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::atomic::write_atomic;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::geo::GeoMeta;

/// Planar RGB image, channel-major, `f32` values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
    pub geo: Option<GeoMeta>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::shape(
                "image",
                format!("{} values for {width}x{height}x3", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
            geo: None,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            width,
            height,
            data,
            geo: None,
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(width, height, |c, _, _| rgb[c])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        &self.data[c * self.pixels()..][..self.pixels()]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn rgb(&self, y: usize, x: usize) -> [f32; 3] {
        [self.get(0, y, x), self.get(1, y, x), self.get(2, y, x)]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Reorder or repeat channels: output channel `i` is input channel
    /// `bands[i]`. Used to map false-colour composites onto RGB.
    pub fn select_bands(&self, bands: [usize; 3]) -> Result<Self> {
        if let Some(b) = bands.iter().find(|&&b| b >= 3) {
            return Err(Error::Range(format!("band {b} not in 0..3")));
        }
        if bands == [0, 1, 2] {
            return Ok(self.clone());
        }
        Ok(Self::from_fn(self.width, self.height, |c, y, x| {
            self.get(bands[c], y, x)
        }))
    }

    /// Pixel rectangle `[y0, y0+h) × [x0, x0+w)`. Geo metadata is dropped;
    /// callers that track coordinates recompute it.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::Range(format!(
                "crop {h}x{w} at ({y0},{x0}) outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(w, h, |c, y, x| self.get(c, y0 + y, x0 + x)))
    }

    /// As a (1, 3, h, w) tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, 3, self.height, self.width], self.data.clone()).expect("consistent dims")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [b, c, h, w] = t.dims();
        if b != 1 || c != 3 {
            return Err(Error::shape(
                "image",
                format!("tensor {:?} is not (1, 3, h, w)", t.dims()),
            ));
        }
        Self::new(w, h, t.to_vec())
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self::from_fn(w, h, |c, y, x| {
            img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
        })
    }

    /// Quantise to 8 bits with rounding; values are clamped to [0, 1].
    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = self.rgb(y as usize, x as usize);
            image::Rgb(px.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }

    /// Decode PNG or binary/ASCII PNM, detected from the content.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let fail = |d: String| Error::Image {
            path: path.to_path_buf(),
            detail: d,
        };
        let fmt = image::guess_format(&bytes).map_err(|e| fail(e.to_string()))?;
        if !matches!(fmt, ImageFormat::Png | ImageFormat::Pnm) {
            return Err(fail(format!("unsupported format {fmt:?}")));
        }
        let img =
            image::load_from_memory_with_format(&bytes, fmt).map_err(|e| fail(e.to_string()))?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    /// Encode as 8-bit RGB. `.ppm`/`.pnm` write binary PPM, anything else
    /// PNG. The file appears only once fully written.
    pub fn save(&self, path: &Path) -> Result<()> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        let fmt = match ext.as_deref() {
            Some("ppm" | "pnm") => ImageFormat::Pnm,
            _ => ImageFormat::Png,
        };
        let mut buf = Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut buf, fmt)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        write_atomic(path, buf.get_ref())
    }
}

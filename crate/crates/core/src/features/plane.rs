use std::path::Path;

use crate::error::{Error, Result};

/// A dense row-major grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Validation(format!(
                "plane of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// 2x downsample by bilinear interpolation with half-pixel alignment. At an exact
    /// factor of two every output sample sits at the center of a 2x2 block, so it is
    /// the block mean. Odd trailing rows/columns are dropped.
    pub fn downsample2(&self) -> Plane {
        let (w, h) = (self.width / 2, self.height / 2);
        Plane::from_fn(w, h, |x, y| {
            let (sx, sy) = (2 * x, 2 * y);
            0.25 * (self.get(sx, sy)
                + self.get(sx + 1, sy)
                + self.get(sx, sy + 1)
                + self.get(sx + 1, sy + 1))
        })
    }
}

/// Minimum side length accepted for feature extraction.
pub const MIN_SIDE: usize = 32;

/// Grayscale luma in `[0, 1]`, at least [`MIN_SIDE`] pixels on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane(Plane);

impl ImagePlane {
    pub fn new(plane: Plane) -> Result<Self> {
        if plane.width < MIN_SIDE || plane.height < MIN_SIDE {
            return Err(Error::Validation(format!(
                "image of {}x{} is smaller than {MIN_SIDE}x{MIN_SIDE}",
                plane.width, plane.height
            )));
        }
        if let Some(v) = plane.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("luma value {v} outside [0, 1]")));
        }
        Ok(ImagePlane(plane))
    }

    pub fn from_luma(width: usize, height: usize, luma: Vec<f64>) -> Result<Self> {
        Self::new(Plane::new(width, height, luma)?)
    }

    /// Decodes an image file and converts it to BT.601 luma.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let luma = rgb
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(f64::from);
                ((0.299 * r + 0.587 * g + 0.114 * b) / 255.0).clamp(0.0, 1.0)
            })
            .collect();
        Self::from_luma(w as usize, h as usize, luma).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }
}

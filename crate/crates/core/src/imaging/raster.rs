use crate::error::{Error, Result};

/// Row-major image of unit-interval intensities with 1 or 3 channels.
///
/// Frames, cloud probability maps and binary masks all use this container.
/// Binary masks store exactly 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    /// Builds a raster from existing data, validating length, channel count and range.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "raster must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{}x{}x{} raster needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!(
                "intensity {} at index {bad} is outside [0, 1]",
                data[bad]
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self::from_fn(width, height, channels, |_, _, _| value)
    }

    /// Builds a raster by evaluating `f(x, y, channel)`; results are clamped to [0, 1]
    /// and NaN becomes 0.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        assert!(channels == 1 || channels == 3, "raster channels must be 1 or 3");
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp_unit(f(x, y, c)));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn from_gray_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        Self::from_fn(width, height, 1, |x, y, _| f(x, y))
    }

    /// Binary mask from a predicate: 1.0 where `f` is true.
    pub fn mask_from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self::from_fn(width, height, 1, |x, y, _| if f(x, y) { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Single-channel convenience accessor.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.get(x, y, 0)
    }

    /// Foreground test for binary masks (values at or above one half).
    #[inline]
    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.get(x, y, 0) >= 0.5
    }

    pub fn same_size(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_size(&self, other: &Raster, what: &str) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub(crate) fn ensure_channels(&self, expected: usize) -> Result<()> {
        if self.channels == expected {
            Ok(())
        } else {
            Err(Error::Channel {
                expected,
                actual: self.channels,
            })
        }
    }

    /// Luma (Rec. 601 weights). Single-channel rasters are returned unchanged.
    pub fn to_gray(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        Raster::from_gray_fn(self.width, self.height, |x, y| {
            0.299 * self.get(x, y, 0) + 0.587 * self.get(x, y, 1) + 0.114 * self.get(x, y, 2)
        })
    }

    /// Bilinear sample of channel `c` at a real-valued position.
    /// Coordinates are clamped to the image, which replicates the border pixels.
    pub fn sample(&self, x: f64, y: f64, c: usize) -> f32 {
        bilinear(
            |ix, iy| self.get(ix, iy, c),
            self.width,
            self.height,
            x,
            y,
        ) as f32
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Number of set pixels in a binary mask.
    pub fn count_set(&self) -> usize {
        self.data
            .chunks(self.channels)
            .filter(|px| px[0] >= 0.5)
            .count()
    }
}

#[inline]
fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Border-replicating bilinear interpolation over an accessor.
#[inline]
pub(crate) fn bilinear(
    get: impl Fn(usize, usize) -> f32,
    width: usize,
    height: usize,
    x: f64,
    y: f64,
) -> f64 {
    let xc = x.clamp(0.0, (width - 1) as f64);
    let yc = y.clamp(0.0, (height - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let ax = xc - x0 as f64;
    let ay = yc - y0 as f64;
    let top = get(x0, y0) as f64 * (1.0 - ax) + get(x1, y0) as f64 * ax;
    let bottom = get(x0, y1) as f64 * (1.0 - ax) + get(x1, y1) as f64 * ax;
    top * (1.0 - ay) + bottom * ay
}

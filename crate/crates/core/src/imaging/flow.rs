use crate::error::{Error, Result};
use crate::imaging::raster::bilinear;

/// Dense per-pixel displacement field with a validity channel.
///
/// Displacements are in pixels: pixel `q` of the source frame corresponds to
/// `q + (u, v)` in the target frame. Invalid pixels always carry `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
    valid: Vec<bool>,
}

impl FlowField {
    /// Builds a field; displacements at invalid pixels are forced to zero.
    pub fn new(
        width: usize,
        height: usize,
        mut u: Vec<f32>,
        mut v: Vec<f32>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(Error::Shape(format!(
                "{width}x{height} flow needs {n} entries per channel, got u={} v={} valid={}",
                u.len(),
                v.len(),
                valid.len()
            )));
        }
        let valid: Vec<bool> = (0..n)
            .map(|i| valid[i] && u[i].is_finite() && v[i].is_finite())
            .collect();
        for i in 0..n {
            if !valid[i] {
                u[i] = 0.0;
                v[i] = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            u,
            v,
            valid,
        })
    }

    /// Constant displacement, every pixel valid.
    pub fn uniform(width: usize, height: usize, du: f32, dv: f32) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![du; n],
            v: vec![dv; n],
            valid: vec![true; n],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, 0.0, 0.0)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn displacement(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&ok| ok).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            return 0.0;
        }
        self.valid_count() as f64 / self.valid.len() as f64
    }

    /// Mean displacement over valid pixels, `None` when nothing is valid.
    pub fn mean_valid(&self) -> Option<(f64, f64)> {
        let n = self.valid_count();
        if n == 0 {
            return None;
        }
        let (mut su, mut sv) = (0.0, 0.0);
        for i in 0..self.valid.len() {
            if self.valid[i] {
                su += self.u[i] as f64;
                sv += self.v[i] as f64;
            }
        }
        Some((su / n as f64, sv / n as f64))
    }

    /// Bilinear sample of the displacement with border replication.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let w = self.width;
        let du = bilinear(|ix, iy| self.u[iy * w + ix], w, self.height, x, y);
        let dv = bilinear(|ix, iy| self.v[iy * w + ix], w, self.height, x, y);
        (du, dv)
    }

    pub fn same_size(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }

    pub(crate) fn ensure_size(&self, width: usize, height: usize, what: &str) -> Result<()> {
        if self.same_size(width, height) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: flow is {}x{}, expected {width}x{height}",
                self.width, self.height
            )))
        }
    }

    /// Maps every pixel through `f(x, y, u, v, valid) -> (u, v, valid)`.
    pub(crate) fn map(&self, mut f: impl FnMut(usize, usize, f32, f32, bool) -> (f32, f32, bool)) -> FlowField {
        let n = self.width * self.height;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                let (a, b, ok) = f(x, y, self.u[i], self.v[i], self.valid[i]);
                u.push(a);
                v.push(b);
                valid.push(ok);
            }
        }
        FlowField::new(self.width, self.height, u, v, valid).expect("sizes preserved by map")
    }

    /// The same field with every displacement negated.
    pub fn negated(&self) -> FlowField {
        self.map(|_, _, u, v, ok| (-u, -v, ok))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_pixels_carry_zero_displacement() {
        let f = FlowField::new(2, 1, vec![3.0, 1.0], vec![4.0, 1.0], vec![false, true]).unwrap();
        assert_eq!(f.displacement(0, 0), (0.0, 0.0));
        assert_eq!(f.displacement(1, 0), (1.0, 1.0));
        assert_eq!(f.mean_valid(), Some((1.0, 1.0)));
    }

    #[test]
    fn non_finite_entries_become_invalid() {
        let f = FlowField::new(1, 1, vec![f32::NAN], vec![0.0], vec![true]).unwrap();
        assert!(!f.is_valid(0, 0));
        assert_eq!(f.displacement(0, 0), (0.0, 0.0));
    }

    #[test]
    fn rejects_wrong_lengths() {
        assert!(FlowField::new(2, 2, vec![0.0; 4], vec![0.0; 3], vec![true; 4]).is_err());
    }
}

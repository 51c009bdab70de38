use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Raster;

/// Rectangular map extent in projected metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min_easting: f64,
    pub min_northing: f64,
    pub max_easting: f64,
    pub max_northing: f64,
}

impl Extent {
    pub fn contains(&self, easting: f64, northing: f64) -> bool {
        (self.min_easting..=self.max_easting).contains(&easting)
            && (self.min_northing..=self.max_northing).contains(&northing)
    }
}

/// A tile's geo position and its berry count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileCount {
    pub easting: f64,
    pub northing: f64,
    pub count: f64,
}

/// Per-cell summed counts and contributing-image counts. Row 0 is the
/// southernmost row, column 0 the westernmost.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDensityMap {
    extent: Extent,
    cell_size_m: f64,
    cols: usize,
    rows: usize,
    sums: Vec<f64>,
    images: Vec<u32>,
}

impl CountDensityMap {
    pub fn empty(extent: Extent, cell_size_m: f64) -> Result<Self> {
        if !(cell_size_m > 0.0 && cell_size_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("cell size must be positive, got {cell_size_m}")));
        }
        let width = extent.max_easting - extent.min_easting;
        let height = extent.max_northing - extent.min_northing;
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::InvalidParameter("extent must have positive finite size".into()));
        }
        let cols = ((width / cell_size_m).ceil() as usize).max(1);
        let rows = ((height / cell_size_m).ceil() as usize).max(1);
        Ok(Self {
            extent,
            cell_size_m,
            cols,
            rows,
            sums: vec![0.0; cols * rows],
            images: vec![0; cols * rows],
        })
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    /// `(col, row)` of the cell holding a position; the max edges belong to the last cell.
    pub fn cell_of(&self, easting: f64, northing: f64) -> Result<(usize, usize)> {
        if !self.extent.contains(easting, northing) {
            return Err(Error::OutOfExtent { easting, northing });
        }
        let col = (((easting - self.extent.min_easting) / self.cell_size_m) as usize).min(self.cols - 1);
        let row = (((northing - self.extent.min_northing) / self.cell_size_m) as usize).min(self.rows - 1);
        Ok((col, row))
    }

    pub fn add(&mut self, tile: &TileCount) -> Result<()> {
        if !(tile.count >= 0.0 && tile.count.is_finite()) {
            return Err(Error::InvalidParameter(format!("tile count {} must be non-negative", tile.count)));
        }
        let (c, r) = self.cell_of(tile.easting, tile.northing)?;
        self.sums[r * self.cols + c] += tile.count;
        self.images[r * self.cols + c] += 1;
        Ok(())
    }

    pub fn sum(&self, col: usize, row: usize) -> f64 {
        self.sums[row * self.cols + col]
    }

    pub fn images(&self, col: usize, row: usize) -> u32 {
        self.images[row * self.cols + col]
    }

    /// Mean count per contributing image, `None` for cells no image covers.
    pub fn mean(&self, col: usize, row: usize) -> Option<f64> {
        let n = self.images(col, row);
        (n > 0).then(|| self.sum(col, row) / n as f64)
    }

    /// Cell-centre coordinates.
    pub fn cell_centre(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.extent.min_easting + (col as f64 + 0.5) * self.cell_size_m,
            self.extent.min_northing + (row as f64 + 0.5) * self.cell_size_m,
        )
    }

    /// CSV with one line per cell in row-major order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("col,row,easting_m,northing_m,count_sum,images,mean_count\n");
        for row in 0..self.rows {
            for col in 0..self.cols {
                let (e, n) = self.cell_centre(col, row);
                let mean = self.mean(col, row).map(|m| format!("{m:.4}")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{col},{row},{e:.3},{n:.3},{:.4},{},{mean}",
                    self.sum(col, row),
                    self.images(col, row)
                );
            }
        }
        s
    }

    /// Grayscale heat image of the mean count, north up, scaled to the maximum.
    pub fn heat_image(&self) -> Raster {
        let max = (0..self.rows * self.cols)
            .filter_map(|i| self.mean(i % self.cols, i / self.cols))
            .fold(0.0f64, f64::max);
        Raster::from_gray_fn(self.cols, self.rows, |x, y| {
            let row = self.rows - 1 - y;
            match self.mean(x, row) {
                Some(m) if max > 0.0 => (m / max) as f32,
                _ => 0.0,
            }
        })
    }
}

pub fn density_map(tiles: &[TileCount], cell_size_m: f64, extent: Extent) -> Result<CountDensityMap> {
    let mut map = CountDensityMap::empty(extent, cell_size_m)?;
    for t in tiles {
        map.add(t)?;
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXTENT: Extent = Extent {
        min_easting: 0.0,
        min_northing: 0.0,
        max_easting: 20.0,
        max_northing: 10.0,
    };

    fn tile(e: f64, n: f64, c: f64) -> TileCount {
        TileCount {
            easting: e,
            northing: n,
            count: c,
        }
    }

    #[test]
    fn single_tile() {
        let m = density_map(&[tile(1.0, 1.0, 5.0)], 5.0, EXTENT).unwrap();
        assert_eq!((m.cols(), m.rows()), (4, 2));
        assert_eq!((m.sum(0, 0), m.images(0, 0)), (5.0, 1));
    }

    #[test]
    fn tiles_in_one_cell_accumulate() {
        let m = density_map(&[tile(1.0, 1.0, 5.0), tile(4.0, 2.0, 7.0)], 5.0, EXTENT).unwrap();
        assert_eq!((m.sum(0, 0), m.images(0, 0), m.mean(0, 0)), (12.0, 2, Some(6.0)));
    }

    #[test]
    fn empty_input_is_all_zero() {
        let m = density_map(&[], 5.0, EXTENT).unwrap();
        assert!((0..2).all(|r| (0..4).all(|c| m.sum(c, r) == 0.0 && m.images(c, r) == 0 && m.mean(c, r).is_none())));
    }

    #[test]
    fn out_of_extent_is_a_range_error() {
        assert!(matches!(
            density_map(&[tile(25.0, 1.0, 1.0)], 5.0, EXTENT),
            Err(Error::OutOfExtent { .. })
        ));
        let m = density_map(&[tile(20.0, 10.0, 1.0)], 5.0, EXTENT).unwrap();
        assert_eq!(m.images(3, 1), 1);
    }

    #[test]
    fn csv_and_heat_image() {
        let m = density_map(&[tile(1.0, 9.0, 4.0), tile(19.0, 1.0, 2.0)], 5.0, EXTENT).unwrap();
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.contains("0,1,2.500,7.500,4.0000,1,4.0000"));
        let heat = m.heat_image();
        assert_eq!(heat.at(0, 0), 1.0);
        assert_eq!(heat.at(3, 1), 0.5);
    }
}

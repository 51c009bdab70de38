//! Deterministic inputs for the benchmarks.

use bogwatch_core::imaging::{warp, FlowField, Raster};
use bogwatch_core::pipeline::sim::{simulate_field, FieldScenario};

/// Smooth multi-scale texture in [0.1, 0.9].
pub fn texture(width: usize, height: usize) -> Raster {
    Raster::from_gray_fn(width, height, |x, y| {
        let (x, y) = (x as f32, y as f32);
        let v = (x * 0.21 + y * 0.07).sin() + (x * 0.05 - y * 0.17).sin() + (x * 0.11 + y * 0.13).cos();
        0.5 + 0.4 * v / 3.0
    })
}

/// `texture` and a copy translated by (tx, ty).
pub fn frame_pair(width: usize, height: usize, tx: f32, ty: f32) -> (Raster, Raster) {
    let prev = texture(width, height);
    let next = warp(&prev, &FlowField::uniform(width, height, -tx, -ty)).expect("matching sizes");
    (prev, next)
}

/// A field tile mask with isolated and overlapping berries.
pub fn berry_mask() -> Raster {
    let sc = FieldScenario {
        tiles: 1,
        tile_px: 256,
        berries: (30, 30),
        overlapping_pairs: (6, 6),
        ..FieldScenario::default()
    };
    simulate_field(&sc).expect("valid scenario").remove(0).mask()
}

/// Training rows with a smooth nonlinear target.
pub fn regression_rows(n: usize, features: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..features).map(|j| ((i * (j + 3) * 7919) % 1000) as f64 / 1000.0).collect())
        .collect();
    let y = x.iter().map(|r| 3.0 * r[0] + (4.0 * r[1]).sin() + r[2] * r[3]).collect();
    (x, y)
}

/// A wobbling curve of `n` points.
pub fn curve(n: usize, phase: f64) -> Vec<(f64, f64)> {
    (0..n).map(|i| (i as f64, (i as f64 * 0.1 + phase).sin())).collect()
}

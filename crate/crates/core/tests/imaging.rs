use bogwatch_core::imaging::{warp, Affine, CameraParams, FisheyeCamera, FlowField, Pixel, Raster};
use bogwatch_core::motion::{lucas_kanade_flow, LkParams};
use proptest::prelude::*;
use std::f64::consts::TAU;

/// Smooth texture: a sum of sinusoids with periods of at least `min_period` pixels.
fn waves(w: usize, h: usize, phases: &[f64], min_period: f64) -> Raster {
    Raster::from_gray_fn(w, h, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let mut v = 0.0;
        for (i, p) in phases.iter().enumerate() {
            let period = min_period * (1.0 + i as f64 * 0.6);
            let (a, b) = ((i as f64 * 1.3).cos(), (i as f64 * 1.3).sin());
            v += (TAU * (a * x + b * y) / period + p).sin();
        }
        (0.5 + 0.4 * v / phases.len() as f64) as f32
    })
}

fn max_interior_diff(a: &Raster, b: &Raster, margin: usize) -> f32 {
    let mut worst = 0.0f32;
    for y in margin..a.height() - margin {
        for x in margin..a.width() - margin {
            worst = worst.max((a.at(x, y) - b.at(x, y)).abs());
        }
    }
    worst
}

proptest! {
    #[test]
    fn projection_round_trip(
        f in 40.0f64..80.0,
        k3 in -2.0f64..2.0,
        cx in 100.0f64..140.0,
        cy in 80.0f64..120.0,
        c in 0.95f64..1.05,
        d in -0.02f64..0.02,
        e in -0.02f64..0.02,
        north in -180.0f64..180.0,
        px in 0.0f64..239.0,
        py in 0.0f64..199.0,
    ) {
        let cam = FisheyeCamera::new(CameraParams {
            image_width: 240,
            image_height: 200,
            cx,
            cy,
            poly_coeffs: vec![0.0, f, 0.0, k3],
            theta_max_rad: 1.5,
            affine: Affine { c, d, e },
            north_offset_deg: north,
        })
        .unwrap();
        let p = Pixel::new(px, py);
        prop_assume!(cam.in_field(p));
        let ray = cam.pixel_to_ray(p).unwrap();
        let back = cam.ray_to_pixel(ray).unwrap().pixel().unwrap();
        prop_assert!(back.distance(p) < 1e-6, "{p:?} -> {back:?}");
    }

    #[test]
    fn warp_stays_within_input_range(
        seed in proptest::collection::vec(0.0f64..TAU, 3),
        du in -6.0f32..6.0,
        dv in -6.0f32..6.0,
        swirl in -2.0f32..2.0,
    ) {
        let img = waves(48, 40, &seed, 7.0);
        let u: Vec<f32> = (0..48 * 40).map(|i| du + swirl * ((i % 48) as f32 / 48.0)).collect();
        let v: Vec<f32> = (0..48 * 40).map(|i| dv - swirl * ((i / 48) as f32 / 40.0)).collect();
        let flow = FlowField::new(48, 40, u, v, vec![true; 48 * 40]).unwrap();
        let out = warp(&img, &flow).unwrap();
        let (lo, hi) = img.min_max();
        let (olo, ohi) = out.min_max();
        prop_assert!(olo >= lo && ohi <= hi);
    }

    #[test]
    fn warp_there_and_back_recovers_band_limited_image(
        phases in proptest::collection::vec(0.0f64..TAU, 3),
        du in -3.0f32..3.0,
        dv in -3.0f32..3.0,
    ) {
        let img = waves(96, 80, &phases, 64.0);
        let fwd = FlowField::uniform(96, 80, du, dv);
        let there = warp(&img, &fwd).unwrap();
        let back = warp(&there, &fwd.negated()).unwrap();
        prop_assert!(max_interior_diff(&img, &back, 8) < 1e-3);
    }
}

#[test]
fn lk_flow_warps_next_back_onto_prev() {
    let prev = waves(96, 96, &[0.3, 1.7, 4.1, 2.2, 5.0], 9.0);
    for (tx, ty) in [(1.3f32, -0.6f32), (-2.5, 1.8), (3.0, 2.0)] {
        let next = warp(&prev, &FlowField::uniform(96, 96, -tx, -ty)).unwrap();
        let flow = lucas_kanade_flow(&prev, &next, &LkParams::default()).unwrap();
        let back = warp(&next, &flow).unwrap();
        let margin = 8;
        let (mut sum, mut n) = (0.0f64, 0usize);
        for y in margin..96 - margin {
            for x in margin..96 - margin {
                if flow.is_valid(x, y) {
                    sum += (back.at(x, y) - prev.at(x, y)).abs() as f64;
                    n += 1;
                }
            }
        }
        assert!(n > 96 * 96 / 2, "only {n} valid pixels for ({tx}, {ty})");
        let err = sum / n as f64;
        assert!(err < 0.02, "mean photometric error {err} for ({tx}, {ty})");
    }
}

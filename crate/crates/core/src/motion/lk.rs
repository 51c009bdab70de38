//! Dense pyramidal Lucas-Kanade optical flow.
//!
//! Every pixel solves the windowed LK normal equations
//! `G·η = Σ ∇I·(I(q) − J(q + d))` with `G = Σ ∇I ∇Iᵀ`. Window sums are box
//! filters over integral images, so one Gauss-Newton iteration costs O(pixels)
//! regardless of the window size. `J(q + d(p))` is linearised about each
//! window pixel's own displacement `d(q)`, which keeps the sums separable and is
//! exact for locally constant flow.
//!
//! The structure tensor is averaged over the window (not summed), so the
//! eigenvalue threshold is independent of the window size. A pixel is valid
//! when that tensor is well conditioned and the window of `prev` still
//! correlates with `next` warped back by the final flow; unrelated frames
//! otherwise settle on small spurious displacements that look consistent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::bilinear;
use crate::imaging::{FlowField, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LkParams {
    /// Pyramid levels including full resolution.
    pub levels: usize,
    /// Odd integration window side, pixels.
    pub window: usize,
    /// Gauss-Newton iterations per level.
    pub iterations: usize,
    /// Smallest accepted eigenvalue of the window-averaged structure tensor.
    pub min_eigenvalue: f64,
    /// Smallest accepted window correlation between `prev` and `next` warped
    /// back by the flow, `1 − var(I − J_w) / (var I + var J_w)`. −1 disables.
    pub min_correlation: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            levels: 3,
            window: 15,
            iterations: 10,
            min_eigenvalue: 1e-4,
            min_correlation: 0.5,
        }
    }
}

impl LkParams {
    fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidParameter("LK needs at least one pyramid level".into()));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "LK window must be odd and at least 3, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// A single-channel f32 image plane used internally.
#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    px: Vec<f32>,
}

impl Plane {
    fn from_raster(r: &Raster) -> Self {
        Self {
            w: r.width(),
            h: r.height(),
            px: r.data().to_vec(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.px[y * self.w + x]
    }

    #[inline]
    fn at_clamped(&self, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.w as isize - 1) as usize;
        let yc = y.clamp(0, self.h as isize - 1) as usize;
        self.at(xc, yc)
    }

    fn sample(&self, x: f64, y: f64) -> f32 {
        bilinear(|ix, iy| self.at(ix, iy), self.w, self.h, x, y) as f32
    }

    /// 5-tap binomial blur followed by 2× decimation.
    fn pyr_down(&self) -> Plane {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let mut tmp = vec![0.0f32; self.w * self.h];
        for y in 0..self.h {
            for x in 0..self.w {
                tmp[y * self.w + x] = (0..5)
                    .map(|k| K[k] * self.at_clamped(x as isize + k as isize - 2, y as isize))
                    .sum();
            }
        }
        let blurred = Plane {
            w: self.w,
            h: self.h,
            px: tmp,
        };
        let (w2, h2) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut px = Vec::with_capacity(w2 * h2);
        for y in 0..h2 {
            for x in 0..w2 {
                px.push(
                    (0..5)
                        .map(|k| K[k] * blurred.at_clamped(2 * x as isize, 2 * y as isize + k as isize - 2))
                        .sum(),
                );
            }
        }
        Plane { w: w2, h: h2, px }
    }

    /// Normalised Scharr derivatives (intensity change per pixel).
    fn gradients(&self) -> (Vec<f32>, Vec<f32>) {
        let mut gx = vec![0.0f32; self.w * self.h];
        let mut gy = vec![0.0f32; self.w * self.h];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let p = |dx: isize, dy: isize| self.at_clamped(x + dx, y + dy);
                let i = y as usize * self.w + x as usize;
                gx[i] = (3.0 * (p(1, -1) - p(-1, -1)) + 10.0 * (p(1, 0) - p(-1, 0)) + 3.0 * (p(1, 1) - p(-1, 1))) / 32.0;
                gy[i] = (3.0 * (p(-1, 1) - p(-1, -1)) + 10.0 * (p(0, 1) - p(0, -1)) + 3.0 * (p(1, 1) - p(1, -1))) / 32.0;
            }
        }
        (gx, gy)
    }
}

/// Windowed mean over a square window clipped at the image border.
struct BoxFilter {
    w: usize,
    h: usize,
    radius: usize,
    sums: Vec<f64>,
}

impl BoxFilter {
    fn new(w: usize, h: usize, radius: usize) -> Self {
        Self {
            w,
            h,
            radius,
            sums: vec![0.0; (w + 1) * (h + 1)],
        }
    }

    fn mean(&mut self, values: impl Fn(usize) -> f64, out: &mut [f64]) {
        let (w, h, r) = (self.w, self.h, self.radius);
        let stride = w + 1;
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += values(y * w + x);
                self.sums[(y + 1) * stride + x + 1] = self.sums[y * stride + x + 1] + row;
            }
        }
        for y in 0..h {
            let y0 = y.saturating_sub(r);
            let y1 = (y + r + 1).min(h);
            for x in 0..w {
                let x0 = x.saturating_sub(r);
                let x1 = (x + r + 1).min(w);
                let s = self.sums[y1 * stride + x1] - self.sums[y0 * stride + x1] - self.sums[y1 * stride + x0]
                    + self.sums[y0 * stride + x0];
                out[y * w + x] = s / ((x1 - x0) * (y1 - y0)) as f64;
            }
        }
    }
}

/// Smaller eigenvalue of the symmetric matrix `[a b; b c]`.
#[inline]
fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let half_trace = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    half_trace - (half_diff * half_diff + b * b).sqrt()
}

/// Per-pixel `1 − var(r) / (var I + var J_w)` over the window, where
/// `J_w(q) = J(q + d(q))` and `r = I − J_w`. Offset-invariant; 1 for an exact
/// match, about 0 for unrelated textures.
fn window_correlation(img_i: &Plane, img_j: &Plane, du: &[f64], dv: &[f64], radius: usize) -> Vec<f64> {
    let (w, h) = (img_i.w, img_i.h);
    let n = w * h;
    let jw: Vec<f64> = (0..n)
        .map(|i| img_j.sample((i % w) as f64 + du[i], (i / w) as f64 + dv[i]) as f64)
        .collect();
    let iv = |i: usize| img_i.px[i] as f64;
    let mut boxf = BoxFilter::new(w, h, radius);
    let mut stats = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let [mi, mi2, mj, mj2, mr, mr2] = &mut stats;
    boxf.mean(iv, mi);
    boxf.mean(|i| iv(i) * iv(i), mi2);
    boxf.mean(|i| jw[i], mj);
    boxf.mean(|i| jw[i] * jw[i], mj2);
    boxf.mean(|i| iv(i) - jw[i], mr);
    boxf.mean(|i| (iv(i) - jw[i]).powi(2), mr2);
    (0..n)
        .map(|i| {
            let var_i = (mi2[i] - mi[i] * mi[i]).max(0.0);
            let var_j = (mj2[i] - mj[i] * mj[i]).max(0.0);
            let var_r = (mr2[i] - mr[i] * mr[i]).max(0.0);
            let total = var_i + var_j;
            if total > 0.0 {
                1.0 - var_r / total
            } else {
                1.0
            }
        })
        .collect()
}

/// Pixels whose tensor falls below this are not updated on coarse levels.
const SOLVE_EIGEN_FLOOR: f64 = 1e-9;

/// Dense coarse-to-fine Lucas-Kanade flow from `prev` to `next` (grayscale).
///
/// Pixels whose window structure tensor has a smaller eigenvalue below
/// `params.min_eigenvalue` at full resolution are marked invalid.
pub fn lucas_kanade_flow(prev: &Raster, next: &Raster, params: &LkParams) -> Result<FlowField> {
    params.validate()?;
    prev.ensure_same_size(next, "lucas_kanade_flow")?;
    prev.ensure_channels(1)?;
    next.ensure_channels(1)?;

    let mut prev_pyr = vec![Plane::from_raster(prev)];
    let mut next_pyr = vec![Plane::from_raster(next)];
    for _ in 1..params.levels {
        let (p, n) = (prev_pyr.last().unwrap(), next_pyr.last().unwrap());
        if p.w < params.window || p.h < params.window {
            break;
        }
        let (pd, nd) = (p.pyr_down(), n.pyr_down());
        prev_pyr.push(pd);
        next_pyr.push(nd);
    }

    let radius = params.window / 2;
    let mut du: Vec<f64> = Vec::new();
    let mut dv: Vec<f64> = Vec::new();
    let mut final_min_eig: Vec<f64> = Vec::new();

    for level in (0..prev_pyr.len()).rev() {
        let img_i = &prev_pyr[level];
        let img_j = &next_pyr[level];
        let (w, h) = (img_i.w, img_i.h);
        let n = w * h;

        // Propagate the coarser estimate.
        if du.is_empty() {
            du = vec![0.0; n];
            dv = vec![0.0; n];
        } else {
            let coarse_w = prev_pyr[level + 1].w;
            let coarse_h = prev_pyr[level + 1].h;
            let (cu, cv) = (std::mem::take(&mut du), std::mem::take(&mut dv));
            du = Vec::with_capacity(n);
            dv = Vec::with_capacity(n);
            for y in 0..h {
                for x in 0..w {
                    let (sx, sy) = (x as f64 / 2.0, y as f64 / 2.0);
                    du.push(2.0 * bilinear(|ix, iy| cu[iy * coarse_w + ix] as f32, coarse_w, coarse_h, sx, sy));
                    dv.push(2.0 * bilinear(|ix, iy| cv[iy * coarse_w + ix] as f32, coarse_w, coarse_h, sx, sy));
                }
            }
        }

        let (gx, gy) = img_i.gradients();
        let mut boxf = BoxFilter::new(w, h, radius);
        let mut sxx = vec![0.0; n];
        let mut sxy = vec![0.0; n];
        let mut syy = vec![0.0; n];
        boxf.mean(|i| (gx[i] * gx[i]) as f64, &mut sxx);
        boxf.mean(|i| (gx[i] * gy[i]) as f64, &mut sxy);
        boxf.mean(|i| (gy[i] * gy[i]) as f64, &mut syy);
        let min_eig: Vec<f64> = (0..n).map(|i| min_eigenvalue(sxx[i], sxy[i], syy[i])).collect();

        let mut err = vec![0.0f32; n];
        let mut bx = vec![0.0; n];
        let mut by = vec![0.0; n];
        for _ in 0..params.iterations {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    err[i] = img_i.at(x, y) - img_j.sample(x as f64 + du[i], y as f64 + dv[i]);
                }
            }
            // Linearising J(q + d(p)) about d(q) keeps the window sums separable:
            // G(p)·d(p) = Σ ∇I(q)·(err(q) + ∇I(q)ᵀ·d(q)).
            boxf.mean(
                |i| {
                    let (ix, iy) = (gx[i] as f64, gy[i] as f64);
                    ix * (err[i] as f64 + ix * du[i] + iy * dv[i])
                },
                &mut bx,
            );
            boxf.mean(
                |i| {
                    let (ix, iy) = (gx[i] as f64, gy[i] as f64);
                    iy * (err[i] as f64 + ix * du[i] + iy * dv[i])
                },
                &mut by,
            );
            for i in 0..n {
                if min_eig[i] < SOLVE_EIGEN_FLOOR {
                    continue;
                }
                let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
                du[i] = (syy[i] * bx[i] - sxy[i] * by[i]) / det;
                dv[i] = (sxx[i] * by[i] - sxy[i] * bx[i]) / det;
            }
        }
        final_min_eig = min_eig;
    }

    let correlation = window_correlation(&prev_pyr[0], &next_pyr[0], &du, &dv, radius);
    let valid: Vec<bool> = final_min_eig
        .iter()
        .zip(&correlation)
        .map(|(&e, &c)| e >= params.min_eigenvalue && c >= params.min_correlation)
        .collect();
    FlowField::new(
        prev.width(),
        prev.height(),
        du.iter().map(|&d| d as f32).collect(),
        dv.iter().map(|&d| d as f32).collect(),
        valid,
    )
}

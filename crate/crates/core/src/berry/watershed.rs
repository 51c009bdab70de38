//! Selective watershed: splits only blobs that look like merged instances.
//!
//! A blob is split when its area reaches `min_split_area` and its Euclidean
//! distance transform has at least two regional maxima whose dynamic (height
//! above the saddle joining them to a higher maximum) is at least
//! `min_marker_dynamic` and which lie at least `min_marker_sep` pixels apart. Those maxima seed a priority flood over the
//! negated distance transform, and pixels touching a higher-labelled region are
//! erased so the pieces separate under 8-connectivity.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::components::connected_components;
use crate::imaging::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WatershedParams {
    pub min_split_area: usize,
    pub min_marker_sep: f64,
    /// Distance maxima less prominent than this are discretisation ridges, pixels.
    pub min_marker_dynamic: f64,
}

impl Default for WatershedParams {
    fn default() -> Self {
        Self {
            min_split_area: 120,
            min_marker_sep: 6.0,
            min_marker_dynamic: 1.0,
        }
    }
}

const INF: f64 = 1e20;

/// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates from −∞.
                v[0] = q;
                z[0] = -INF;
                z[1] = INF;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = INF;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel; the area outside the image counts as background.
pub fn distance_transform(mask: &Raster) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let (pw, ph) = (w + 2, h + 2);
    let mut grid = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask.is_set(x, y) {
                grid[(y + 1) * pw + x + 1] = INF;
            }
        }
    }
    let n = pw.max(ph);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        edt_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        f[..pw].copy_from_slice(&grid[y * pw..(y + 1) * pw]);
        edt_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        grid[y * pw..(y + 1) * pw].copy_from_slice(&out[..pw]);
    }
    let mut dt = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            dt[y * w + x] = grid[(y + 1) * pw + x + 1].sqrt();
        }
    }
    dt
}

fn neighbours8(w: usize, h: usize, i: usize) -> impl Iterator<Item = usize> {
    let (x, y) = ((i % w) as isize, (i / w) as isize);
    (-1isize..=1)
        .flat_map(move |dy| (-1isize..=1).map(move |dx| (dx, dy)))
        .filter(|&d| d != (0, 0))
        .filter_map(move |(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize).then(|| ny as usize * w + nx as usize)
        })
}

/// A regional maximum: a plateau of equal distance with no higher neighbour.
struct Peak {
    height: f64,
    /// Plateau pixel closest to the plateau centroid.
    seed: usize,
    /// First plateau pixel in flooding order.
    birth: usize,
    x: f64,
    y: f64,
}

fn regional_maxima(pixels: &[usize], dt: &[f64], w: usize, h: usize, in_blob: &[bool]) -> Vec<Peak> {
    let mut seen = vec![false; w * h];
    let mut peaks = Vec::new();
    for &start in pixels {
        if seen[start] {
            continue;
        }
        let height = dt[start];
        let mut plateau = vec![start];
        let mut stack = vec![start];
        seen[start] = true;
        let mut is_max = true;
        while let Some(p) = stack.pop() {
            for q in neighbours8(w, h, p) {
                if !in_blob[q] {
                    continue;
                }
                if dt[q] > height {
                    is_max = false;
                } else if dt[q] == height && !seen[q] {
                    seen[q] = true;
                    plateau.push(q);
                    stack.push(q);
                }
            }
        }
        if !is_max {
            continue;
        }
        let n = plateau.len() as f64;
        let cx = plateau.iter().map(|&p| (p % w) as f64).sum::<f64>() / n;
        let cy = plateau.iter().map(|&p| (p / w) as f64).sum::<f64>() / n;
        let seed = *plateau
            .iter()
            .min_by(|&&a, &&b| {
                let da = ((a % w) as f64 - cx).powi(2) + ((a / w) as f64 - cy).powi(2);
                let db = ((b % w) as f64 - cx).powi(2) + ((b / w) as f64 - cy).powi(2);
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .unwrap();
        peaks.push(Peak {
            height,
            seed,
            birth: *plateau.iter().min().unwrap(),
            x: cx,
            y: cy,
        });
    }
    peaks
}

/// Dynamic of every maximum: how far it sits above the level at which its
/// component first merges with a higher one. The highest maximum is infinite.
fn dynamics(pixels: &[usize], dt: &[f64], w: usize, h: usize, in_blob: &[bool], peaks: &[Peak]) -> Vec<f64> {
    let mut order = pixels.to_vec();
    order.sort_by(|&a, &b| dt[b].total_cmp(&dt[a]).then(a.cmp(&b)));
    let index: std::collections::HashMap<usize, usize> = order.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut parent: Vec<usize> = (0..order.len()).collect();
    // Peak height and birth pixel of each root.
    let top: Vec<(f64, usize)> = order.iter().map(|&p| (dt[p], p)).collect();
    let mut active = vec![false; order.len()];
    let mut dynamic: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();

    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    for (i, &p) in order.iter().enumerate() {
        active[i] = true;
        for q in neighbours8(w, h, p) {
            if !in_blob[q] {
                continue;
            }
            let j = index[&q];
            if !active[j] {
                continue;
            }
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri == rj {
                continue;
            }
            // The lower peak dies here; ties keep the earlier birth.
            let (keep, die) = if (top[ri].0, std::cmp::Reverse(top[ri].1)) >= (top[rj].0, std::cmp::Reverse(top[rj].1)) {
                (ri, rj)
            } else {
                (rj, ri)
            };
            dynamic.insert(top[die].1, top[die].0 - dt[p]);
            parent[die] = keep;
        }
    }
    peaks
        .iter()
        .map(|pk| dynamic.get(&pk.birth).copied().unwrap_or(f64::INFINITY))
        .collect()
}

/// Strongest maxima first, dropping any closer than `min_sep` to one already kept.
fn select_markers(mut peaks: Vec<Peak>, min_sep: f64) -> Vec<Peak> {
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.seed.cmp(&b.seed)));
    let mut kept: Vec<Peak> = Vec::new();
    for p in peaks {
        if kept.iter().all(|k| (k.x - p.x).hypot(k.y - p.y) >= min_sep) {
            kept.push(p);
        }
    }
    kept
}

/// Marker-seeded flood over the negated distance transform, restricted to one blob.
fn flood(pixels: &[usize], markers: &[Peak], dt: &[f64], w: usize, h: usize, in_blob: &[bool]) -> Vec<u32> {
    let mut label = vec![0u32; w * h];
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    // Higher distance floods first; ties resolve in insertion order.
    for (m, peak) in markers.iter().enumerate() {
        label[peak.seed] = m as u32 + 1;
        heap.push((OrderedDist(dt[peak.seed]), Reverse(order), peak.seed));
        order += 1;
    }
    while let Some((_, _, p)) = heap.pop() {
        for q in neighbours8(w, h, p) {
            if in_blob[q] && label[q] == 0 {
                label[q] = label[p];
                heap.push((OrderedDist(dt[q]), Reverse(order), q));
                order += 1;
            }
        }
    }
    debug_assert!(pixels.iter().all(|&p| label[p] > 0));
    label
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedDist(f64);

impl Eq for OrderedDist {}

impl PartialOrd for OrderedDist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedDist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

pub fn selective_watershed(mask: &Raster, params: &WatershedParams) -> Raster {
    let (w, h) = (mask.width(), mask.height());
    let blobs = connected_components(mask);
    let mut out: Vec<bool> = (0..w * h).map(|i| mask.is_set(i % w, i / w)).collect();
    if blobs.count() == 0 {
        return Raster::mask_from_fn(w, h, |x, y| out[y * w + x]);
    }
    let dt = distance_transform(mask);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); blobs.count()];
    for (i, &l) in blobs.labels().iter().enumerate() {
        if l > 0 {
            members[l as usize - 1].push(i);
        }
    }
    let mut in_blob = vec![false; w * h];
    for pixels in members.iter().filter(|p| p.len() >= params.min_split_area) {
        for &p in pixels {
            in_blob[p] = true;
        }
        let peaks = regional_maxima(pixels, &dt, w, h, &in_blob);
        let dynamic = dynamics(pixels, &dt, w, h, &in_blob, &peaks);
        let prominent = peaks
            .into_iter()
            .zip(dynamic)
            .filter(|(_, d)| *d >= params.min_marker_dynamic)
            .map(|(p, _)| p)
            .collect();
        let markers = select_markers(prominent, params.min_marker_sep);
        if markers.len() >= 2 {
            let label = flood(pixels, &markers, &dt, w, h, &in_blob);
            for &p in pixels {
                if neighbours8(w, h, p).any(|q| in_blob[q] && label[q] > label[p]) {
                    out[p] = false;
                }
            }
        }
        for &p in pixels {
            in_blob[p] = false;
        }
    }
    Raster::mask_from_fn(w, h, |x, y| out[y * w + x])
}

/// Instance count: connected components after selective watershed.
pub fn count(mask: &Raster, params: &WatershedParams) -> usize {
    connected_components(&selective_watershed(mask, params)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn discs(w: usize, h: usize, centres: &[(f64, f64, f64)]) -> Raster {
        Raster::mask_from_fn(w, h, |x, y| {
            centres
                .iter()
                .any(|&(cx, cy, r)| (x as f64 - cx).hypot(y as f64 - cy) <= r)
        })
    }

    fn brute_force_dt(mask: &Raster) -> Vec<f64> {
        let (w, h) = (mask.width() as isize, mask.height() as isize);
        let mut out = vec![0.0; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                if !mask.is_set(x as usize, y as usize) {
                    continue;
                }
                let mut best = f64::INFINITY;
                for by in -1..=h {
                    for bx in -1..=w {
                        let background =
                            bx < 0 || by < 0 || bx >= w || by >= h || !mask.is_set(bx as usize, by as usize);
                        if background {
                            best = best.min(((bx - x) as f64).hypot((by - y) as f64));
                        }
                    }
                }
                out[(y * w + x) as usize] = best;
            }
        }
        out
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let m = Raster::mask_from_fn(23, 17, |x, y| (x * 7 + y * 13) % 11 != 0 && !(x == 5 && y > 3));
        let fast = distance_transform(&m);
        let slow = brute_force_dt(&m);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn disjoint_discs_pass_through() {
        let m = discs(80, 40, &[(20.0, 20.0, 10.0), (55.0, 20.0, 10.0)]);
        assert_eq!(selective_watershed(&m, &WatershedParams::default()), m);
    }

    #[test]
    fn single_disc_is_unchanged() {
        let m = discs(40, 40, &[(20.0, 20.0, 12.0)]);
        assert_eq!(selective_watershed(&m, &WatershedParams::default()), m);
        assert_eq!(count(&m, &WatershedParams::default()), 1);
    }

    #[test]
    fn dumbbell_splits_in_two() {
        let m = discs(60, 40, &[(20.0, 20.0, 10.0), (36.0, 20.0, 10.0)]);
        assert_eq!(connected_components(&m).count(), 1);
        let split = selective_watershed(&m, &WatershedParams::default());
        assert_eq!(connected_components(&split).count(), 2);
        assert_eq!(count(&m, &WatershedParams::default()), 2);
    }

    #[test]
    fn ridge_pixel_at_a_neck_is_not_a_marker() {
        // The neck of this pair holds a distance maximum 0.2 px above its saddle.
        let m = discs(128, 128, &[(78.700869, 66.332994, 6.674322), (67.031175, 61.857141, 6.674322)]);
        assert_eq!(count(&m, &WatershedParams::default()), 2);
        let loose = WatershedParams {
            min_marker_dynamic: 0.0,
            ..WatershedParams::default()
        };
        assert_eq!(count(&m, &loose), 3);
    }

    #[test]
    fn small_blobs_are_never_split() {
        let m = discs(60, 40, &[(20.0, 20.0, 10.0), (36.0, 20.0, 10.0)]);
        let params = WatershedParams {
            min_split_area: 10_000,
            ..WatershedParams::default()
        };
        assert_eq!(selective_watershed(&m, &params), m);
    }

    #[test]
    fn counts_separated_discs() {
        assert_eq!(count(&Raster::filled(10, 10, 1, 0.0), &WatershedParams::default()), 0);
        let m = discs(100, 40, &[(15.0, 20.0, 8.0), (50.0, 20.0, 9.0), (85.0, 20.0, 10.0)]);
        assert_eq!(count(&m, &WatershedParams::default()), 3);
    }

    #[test]
    fn count_is_translation_invariant() {
        let a = discs(90, 70, &[(30.0, 30.0, 10.0), (45.0, 33.0, 9.0), (60.0, 30.0, 7.0)]);
        let b = discs(90, 70, &[(37.0, 41.0, 10.0), (52.0, 44.0, 9.0), (67.0, 41.0, 7.0)]);
        assert_eq!(count(&a, &WatershedParams::default()), count(&b, &WatershedParams::default()));
    }

    fn random_mask(seed: u64) -> Raster {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 33) as f64 / (1u64 << 31) as f64
        };
        let n = 1 + (next() * 6.0) as usize;
        let centres: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| (next() * 64.0, next() * 64.0, 3.0 + next() * 10.0))
            .collect();
        discs(64, 64, &centres)
    }

    proptest! {
        #[test]
        fn never_merges_and_only_erases(seed in any::<u64>()) {
            let m = random_mask(seed);
            let out = selective_watershed(&m, &WatershedParams::default());
            prop_assert!(connected_components(&out).count() >= connected_components(&m).count());
            for (a, b) in out.data().iter().zip(m.data()) {
                prop_assert!(*a <= *b);
            }
        }
    }
}

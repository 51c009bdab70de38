use crate::imaging::{Pixel, Raster};

/// Connected foreground blobs of a binary mask.
///
/// Labels run `1..=N` in raster-scan order of each blob's first pixel; 0 is
/// background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBlobs {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    areas: Vec<usize>,
    centroids: Vec<Pixel>,
}

impl LabeledBlobs {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.areas.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Area in pixels of blob `label` (1-based).
    pub fn area(&self, label: u32) -> usize {
        self.areas[label as usize - 1]
    }

    pub fn areas(&self) -> &[usize] {
        &self.areas
    }

    pub fn centroids(&self) -> &[Pixel] {
        &self.centroids
    }
}

fn find(parent: &mut [u32], mut a: u32) -> u32 {
    while parent[a as usize] != a {
        parent[a as usize] = parent[parent[a as usize] as usize];
        a = parent[a as usize];
    }
    a
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    // Keep the older provisional label as root so first-encounter order survives.
    if ra < rb {
        parent[rb as usize] = ra;
    } else if rb < ra {
        parent[ra as usize] = rb;
    }
}

/// 8-connected component labelling (two-pass union-find).
pub fn connected_components(mask: &Raster) -> LabeledBlobs {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if !mask.is_set(x, y) {
                continue;
            }
            // Already-visited 8-neighbours: W, NW, N, NE.
            let mut neighbours = [0u32; 4];
            if x > 0 {
                neighbours[0] = labels[y * w + x - 1];
            }
            if y > 0 {
                let up = (y - 1) * w;
                if x > 0 {
                    neighbours[1] = labels[up + x - 1];
                }
                neighbours[2] = labels[up + x];
                if x + 1 < w {
                    neighbours[3] = labels[up + x + 1];
                }
            }
            let min = neighbours.iter().copied().filter(|&l| l > 0).min();
            let l = match min {
                Some(m) => {
                    for &n in neighbours.iter().filter(|&&l| l > 0) {
                        union(&mut parent, m, n);
                    }
                    m
                }
                None => {
                    let next = parent.len() as u32;
                    parent.push(next);
                    next
                }
            };
            labels[y * w + x] = l;
        }
    }

    // Provisional labels were issued in raster order and roots are the smallest
    // member, so numbering roots in ascending order gives first-encounter order.
    let mut final_label = vec![0u32; parent.len()];
    let mut n = 0u32;
    for l in 1..parent.len() as u32 {
        let r = find(&mut parent, l);
        if r == l {
            n += 1;
            final_label[l as usize] = n;
        }
    }
    let mut areas = vec![0usize; n as usize];
    let mut sums = vec![(0.0f64, 0.0f64); n as usize];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if labels[i] == 0 {
                continue;
            }
            let r = find(&mut parent, labels[i]);
            let l = final_label[r as usize];
            labels[i] = l;
            areas[l as usize - 1] += 1;
            sums[l as usize - 1].0 += x as f64;
            sums[l as usize - 1].1 += y as f64;
        }
    }
    let centroids = sums
        .iter()
        .zip(&areas)
        .map(|(&(sx, sy), &a)| Pixel::new(sx / a as f64, sy / a as f64))
        .collect();
    LabeledBlobs {
        width: w,
        height: h,
        labels,
        areas,
        centroids,
    }
}

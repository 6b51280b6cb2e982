//! Grayscale SLIC superpixels.
//!
//! Cluster centres start on a regular grid of spacing `S = sqrt(W*H/P)`,
//! nudged to the lowest-gradient pixel of their 3x3 neighbourhood. Each pass
//! assigns every pixel inside a centre's `2S x 2S` window to the centre with
//! the smallest
//!
//! ```text
//! D^2 = (Y_p - Y_c)^2 + (d_xy / S)^2 * m^2
//! ```
//!
//! and then moves centres to the mean of their members. Small disconnected
//! fragments are merged into neighbours afterwards so every label is one
//! 4-connected region.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicConfig {
    pub target_superpixels: usize,
    /// Weight of the spatial term, in luma units (luma is normalized to [0, 1]).
    pub compactness: f32,
    pub max_iterations: usize,
    /// Fragments smaller than this fraction of the nominal region area
    /// (`W*H/P`) are merged into a neighbour.
    pub connectivity_min_fraction: f32,
}

impl Default for SlicConfig {
    fn default() -> Self {
        SlicConfig {
            target_superpixels: 48,
            compactness: 10.0 / 255.0,
            max_iterations: 10,
            connectivity_min_fraction: 0.25,
        }
    }
}

impl SlicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_superpixels == 0 {
            return Err(Error::config("slic.target_superpixels must be >= 1"));
        }
        if !(self.compactness > 0.0) {
            return Err(Error::config("slic.compactness must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("slic.max_iterations must be >= 1"));
        }
        if !(self.connectivity_min_fraction > 0.0 && self.connectivity_min_fraction <= 1.0) {
            return Err(Error::config("slic.connectivity_min_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Per-pixel region labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub region_count: usize,
}

impl SuperpixelMap {
    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.region_count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Applies `perm[old] = new` to every label.
    pub fn relabeled(&self, perm: &[u32]) -> SuperpixelMap {
        SuperpixelMap {
            labels: self.labels.iter().map(|&l| perm[l as usize]).collect(),
            ..self.clone()
        }
    }

    /// Checks the partition invariants: labels in range, no empty label,
    /// every label 4-connected.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.labels.len() != self.width * self.height {
            return Err("label grid has wrong size".into());
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.region_count) {
            return Err(format!("label {l} out of range"));
        }
        if self.region_sizes().contains(&0) {
            return Err("empty region".into());
        }
        let (comp, _) = components(&self.labels, self.width, self.height);
        let ncomp = comp.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        if ncomp != self.region_count {
            return Err(format!("{ncomp} connected components for {} labels", self.region_count));
        }
        Ok(())
    }
}

/// Sum of absolute horizontal and vertical central differences, clamped at borders.
fn gradient(frame: &Frame, x: usize, y: usize) -> f32 {
    let (w, h) = (frame.width, frame.height);
    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
    (frame.get(xr, y) - frame.get(xl, y)).abs() + (frame.get(x, yd) - frame.get(x, yu)).abs()
}

#[derive(Debug, Clone, Copy)]
struct Center {
    x: f64,
    y: f64,
    luma: f64,
}

fn initial_centers(frame: &Frame, step: f64) -> Vec<Center> {
    let (w, h) = (frame.width, frame.height);
    let nx = ((w as f64 / step).round() as usize).max(1);
    let ny = ((h as f64 / step).round() as usize).max(1);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let mut cx = (i as f64 + 0.5) * sx - 0.5;
            let mut cy = (j as f64 + 0.5) * sy - 0.5;
            let px = (cx.round() as usize).min(w - 1);
            let py = (cy.round() as usize).min(h - 1);
            let mut best = gradient(frame, px, py);
            for ny_ in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                for nx_ in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                    let g = gradient(frame, nx_, ny_);
                    if g < best {
                        best = g;
                        cx = nx_ as f64;
                        cy = ny_ as f64;
                    }
                }
            }
            let luma = frame.get((cx.round() as usize).min(w - 1), (cy.round() as usize).min(h - 1)) as f64;
            centers.push(Center { x: cx, y: cy, luma });
        }
    }
    centers
}

pub fn segment_slic(frame: &Frame, config: &SlicConfig) -> Result<SuperpixelMap> {
    config.validate()?;
    let (w, h) = (frame.width, frame.height);
    if w < 2 || h < 2 {
        return Err(Error::config(format!("frame {w}x{h} is smaller than 2x2")));
    }
    let n = w * h;
    if config.target_superpixels > n {
        return Err(Error::config(format!("{} superpixels requested for {n} pixels", config.target_superpixels)));
    }
    let step = (n as f64 / config.target_superpixels as f64).sqrt();
    let spatial = (config.compactness as f64 / step).powi(2);
    let mut centers = initial_centers(frame, step);

    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..config.max_iterations {
        assign(frame, &centers, step, spatial, &mut labels, &mut dist);

        let mut sums = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            s.0 += (i % w) as f64;
            s.1 += (i / w) as f64;
            s.2 += frame.luma[i] as f64;
            s.3 += 1;
        }
        let mut moved = 0.0f64;
        for (c, &(sx, sy, sl, cnt)) in centers.iter_mut().zip(&sums) {
            if cnt == 0 {
                continue;
            }
            let k = cnt as f64;
            let (nx, ny) = (sx / k, sy / k);
            moved = moved.max((nx - c.x).hypot(ny - c.y));
            *c = Center { x: nx, y: ny, luma: sl / k };
        }
        if moved < 0.25 {
            break;
        }
    }
    Ok(enforce_connectivity(&labels, w, h, config.connectivity_min_fraction))
}

fn assign(frame: &Frame, centers: &[Center], step: f64, spatial: f64, labels: &mut [u32], dist: &mut [f64]) {
    let (w, h) = (frame.width, frame.height);
    dist.fill(f64::INFINITY);
    labels.fill(u32::MAX);
    for (k, c) in centers.iter().enumerate() {
        let x0 = (c.x - step).ceil().max(0.0) as usize;
        let x1 = ((c.x + step).floor().max(0.0) as usize).min(w - 1);
        let y0 = (c.y - step).ceil().max(0.0) as usize;
        let y1 = ((c.y + step).floor().max(0.0) as usize).min(h - 1);
        for y in y0..=y1 {
            let dy = y as f64 - c.y;
            let row = y * w;
            for x in x0..=x1 {
                let dx = x as f64 - c.x;
                let dl = frame.luma[row + x] as f64 - c.luma;
                let d = dl * dl + spatial * (dx * dx + dy * dy);
                if d < dist[row + x] {
                    dist[row + x] = d;
                    labels[row + x] = k as u32;
                }
            }
        }
    }
    // pixels no window reached fall back to a full search
    for i in 0..labels.len() {
        if labels[i] != u32::MAX {
            continue;
        }
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let l = frame.luma[i] as f64;
        let mut best = (f64::INFINITY, 0u32);
        for (k, c) in centers.iter().enumerate() {
            let d = (l - c.luma).powi(2) + spatial * ((x - c.x).powi(2) + (y - c.y).powi(2));
            if d < best.0 {
                best = (d, k as u32);
            }
        }
        labels[i] = best.1;
        dist[i] = best.0;
    }
}

/// 4-connected components of equal labels, numbered in raster order of
/// their first pixel. Returns (component per pixel, component sizes).
fn components(labels: &[u32], w: usize, h: usize) -> (Vec<u32>, Vec<usize>) {
    let mut comp = vec![u32::MAX; labels.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let l = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == u32::MAX && labels[q] == l {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

struct Component {
    label: u32,
    size: usize,
    first: usize,
    adjacent: BTreeSet<usize>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Merges every 4-connected fragment smaller than
/// `min_fraction * W*H / P` (P = number of distinct input labels) into its
/// largest adjacent region, smallest fragments first, then renumbers labels
/// in raster order. The result has exactly one connected component per label.
pub fn enforce_connectivity(labels: &[u32], width: usize, height: usize, min_fraction: f32) -> SuperpixelMap {
    let n = width * height;
    assert_eq!(labels.len(), n, "label grid size");
    let distinct = labels.iter().collect::<BTreeSet<_>>().len().max(1);
    let min_size = min_fraction as f64 * n as f64 / distinct as f64;

    let (comp, sizes) = components(labels, width, height);
    let mut comps: Vec<Component> = sizes
        .iter()
        .map(|&size| Component { label: 0, size, first: usize::MAX, adjacent: BTreeSet::new() })
        .collect();
    for (p, &c) in comp.iter().enumerate() {
        let c = c as usize;
        if comps[c].first == usize::MAX {
            comps[c].first = p;
            comps[c].label = labels[p];
        }
        let (x, y) = (p % width, p / width);
        if x + 1 < width && comp[p + 1] as usize != c {
            let o = comp[p + 1] as usize;
            comps[c].adjacent.insert(o);
            comps[o].adjacent.insert(c);
        }
        if y + 1 < height && comp[p + width] as usize != c {
            let o = comp[p + width] as usize;
            comps[c].adjacent.insert(o);
            comps[o].adjacent.insert(c);
        }
    }

    let mut parent: Vec<usize> = (0..comps.len()).collect();
    let mut heap: BinaryHeap<Reverse<(usize, usize, usize)>> = comps
        .iter()
        .enumerate()
        .filter(|(_, c)| (c.size as f64) < min_size)
        .map(|(i, c)| Reverse((c.size, c.first, i)))
        .collect();

    while let Some(Reverse((size, first, id))) = heap.pop() {
        if find(&mut parent, id) != id || comps[id].size != size || comps[id].first != first {
            continue;
        }
        let neighbours: BTreeSet<usize> =
            std::mem::take(&mut comps[id].adjacent).into_iter().map(|a| find(&mut parent, a)).filter(|&a| a != id).collect();
        let Some(&target) = neighbours
            .iter()
            .max_by(|&&a, &&b| comps[a].size.cmp(&comps[b].size).then(comps[b].first.cmp(&comps[a].first)))
        else {
            continue;
        };
        let label = comps[target].label;
        let mut absorbed = vec![id];
        absorbed.extend(neighbours.iter().copied().filter(|&a| a != target && comps[a].label == label));
        let mut adjacent = std::mem::take(&mut comps[target].adjacent);
        adjacent.extend(neighbours.iter().copied());
        for a in absorbed {
            parent[a] = target;
            comps[target].size += comps[a].size;
            comps[target].first = comps[target].first.min(comps[a].first);
            adjacent.extend(std::mem::take(&mut comps[a].adjacent));
        }
        let adjacent: BTreeSet<usize> = adjacent.into_iter().map(|a| find(&mut parent, a)).filter(|&a| a != target).collect();
        comps[target].adjacent = adjacent;
        if (comps[target].size as f64) < min_size {
            heap.push(Reverse((comps[target].size, comps[target].first, target)));
        }
    }

    // renumber surviving components by first pixel
    let mut roots: Vec<usize> = (0..comps.len()).filter(|&i| find(&mut parent, i) == i).collect();
    roots.sort_by_key(|&r| comps[r].first);
    let mut new_label = vec![0u32; comps.len()];
    for (l, &r) in roots.iter().enumerate() {
        new_label[r] = l as u32;
    }
    let out: Vec<u32> = comp.iter().map(|&c| new_label[find(&mut parent, c as usize)]).collect();
    SuperpixelMap { width, height, labels: out, region_count: roots.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> Frame {
        let luma = (0..w * h).map(|i| f(i % w, i / w)).collect();
        Frame::new(0, w, h, luma).unwrap()
    }

    #[test]
    fn constant_frame_gives_grid_quadrants() {
        let f = frame(80, 80, |_, _| 0.5);
        let cfg = SlicConfig { target_superpixels: 4, compactness: 10.0, ..Default::default() };
        let map = segment_slic(&f, &cfg).unwrap();
        assert_eq!(map.region_count, 4);
        assert_eq!(map.region_sizes(), vec![1600; 4]);
        for y in 0..80 {
            for x in 0..80 {
                let want = (y / 40) * 2 + x / 40;
                assert_eq!(map.label(x, y) as usize, want, "({x},{y})");
            }
        }
    }

    #[test]
    fn larger_compactness_keeps_grid_cells() {
        let f = frame(90, 60, |_, _| 0.3);
        for m in [1.0, 100.0, 1.0e4] {
            let cfg = SlicConfig { target_superpixels: 6, compactness: m, ..Default::default() };
            let map = segment_slic(&f, &cfg).unwrap();
            assert_eq!(map.region_sizes(), vec![900; 6]);
        }
    }

    /// Lloyd k-means over (luma, x/S*m, y/S*m) with unrestricted search,
    /// seeded from the same grid as SLIC.
    fn brute_force_kmeans(f: &Frame, p: usize, m: f64, iters: usize) -> Vec<u32> {
        let s = ((f.width * f.height) as f64 / p as f64).sqrt();
        let mut centers = initial_centers(f, s);
        let mut labels = vec![0u32; f.luma.len()];
        for _ in 0..iters {
            for (i, l) in labels.iter_mut().enumerate() {
                let (x, y) = ((i % f.width) as f64, (i / f.width) as f64);
                let v = f.luma[i] as f64;
                let mut best = (f64::INFINITY, 0);
                for (k, c) in centers.iter().enumerate() {
                    let d = (v - c.luma).powi(2) + (m / s).powi(2) * ((x - c.x).powi(2) + (y - c.y).powi(2));
                    if d < best.0 {
                        best = (d, k);
                    }
                }
                *l = best.1 as u32;
            }
            for (k, c) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k as u32).collect();
                if members.is_empty() {
                    continue;
                }
                let n = members.len() as f64;
                c.x = members.iter().map(|&i| (i % f.width) as f64).sum::<f64>() / n;
                c.y = members.iter().map(|&i| (i / f.width) as f64).sum::<f64>() / n;
                c.luma = members.iter().map(|&i| f.luma[i] as f64).sum::<f64>() / n;
            }
        }
        labels
    }

    #[test]
    fn two_tone_frame_splits_at_the_edge() {
        let f = frame(40, 20, |x, _| if x < 14 { 0.2 } else { 0.8 });
        let cfg = SlicConfig { target_superpixels: 2, compactness: 0.01, ..Default::default() };
        let map = segment_slic(&f, &cfg).unwrap();
        assert_eq!(map.region_count, 2);
        let oracle = brute_force_kmeans(&f, 2, 0.01, 10);
        for y in 0..20 {
            for x in 0..40 {
                assert_eq!(map.label(x, y), (x >= 14) as u32);
                assert_eq!(oracle[y * 40 + x], (x >= 14) as u32);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let f = frame(4, 4, |_, _| 0.0);
        let cfg = SlicConfig { target_superpixels: 17, ..Default::default() };
        assert!(matches!(segment_slic(&f, &cfg), Err(Error::InvalidConfig(_))));
        let tiny = frame(1, 4, |_, _| 0.0);
        assert!(segment_slic(&tiny, &SlicConfig { target_superpixels: 1, ..Default::default() }).is_err());
        assert!(SlicConfig { compactness: 0.0, ..Default::default() }.validate().is_err());
        assert!(SlicConfig { connectivity_min_fraction: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn connected_labeling_is_a_fixed_point() {
        let labels: Vec<u32> = (0..64).map(|i| ((i % 8) / 4 + 2 * ((i / 8) / 4)) as u32).collect();
        let map = enforce_connectivity(&labels, 8, 8, 0.25);
        assert_eq!(map.labels, labels);
        assert_eq!(map.region_count, 4);
    }

    #[test]
    fn isolated_pixel_is_absorbed() {
        let mut labels = vec![1u32; 25];
        labels[12] = 0;
        let map = enforce_connectivity(&labels, 5, 5, 0.25);
        assert_eq!(map.region_count, 1);
        assert!(map.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn checkerboard_collapses_to_one_label() {
        // Smallest-first merging starts at (0,0); its largest neighbour ties
        // at size 1 and the raster-first one wins, producing a blob of the
        // other label. Every later singleton in raster order touches that
        // blob, so the blob's label takes over the whole grid.
        for n in [4usize, 5, 8] {
            let labels: Vec<u32> = (0..n * n).map(|i| (((i % n) + (i / n)) % 2) as u32).collect();
            let map = enforce_connectivity(&labels, n, n, 0.5);
            assert_eq!(map.region_count, 1, "n={n}");
            map.check_invariants().unwrap();
        }
    }

    #[test]
    fn split_label_becomes_two_regions() {
        // label 0 appears in two separate large blocks
        let labels: Vec<u32> = (0..30).map(|i| if (i % 10) < 3 || (i % 10) >= 7 { 0 } else { 1 }).collect();
        let map = enforce_connectivity(&labels, 10, 3, 0.1);
        assert_eq!(map.region_count, 3);
        map.check_invariants().unwrap();
    }

    #[test]
    fn realistic_frame_partition() {
        let f = frame(640, 480, |x, y| {
            let base = if (x / 97 + y / 61) % 2 == 0 { 0.3 } else { 0.6 };
            base + 0.05 * ((x as f32 * 0.05).sin() * (y as f32 * 0.03).cos())
        });
        let map = segment_slic(&f, &SlicConfig::default()).unwrap();
        map.check_invariants().unwrap();
        assert!((24..=96).contains(&map.region_count), "{}", map.region_count);
        let mean = (640 * 480) as f64 / map.region_count as f64;
        assert!((mean - 6400.0).abs() < 3200.0);
    }
}

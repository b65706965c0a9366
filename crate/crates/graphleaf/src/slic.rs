//! SLIC superpixel segmentation.
//!
//! Localized k-means in combined CIELAB + spatial space: cluster centers
//! start on a regular grid (perturbed to the lowest-gradient pixel in a
//! 3x3 neighborhood), pixels are assigned within a 2S x 2S window per
//! center under the distance
//!
//!   d^2 = d_lab^2 + (compactness / S)^2 * d_xy^2,   S = sqrt(H*W / k)
//!
//! and centers move to their cluster means until the average center
//! movement drops below half a pixel or the iteration budget runs out.
//! Distances are computed in Lab converted from the un-normalized [0, 1]
//! RGB, since the metric presumes Lab.
//!
//! A separate connectivity pass absorbs small disconnected fragments into
//! their largest adjacent segment, so every final segment is one
//! 4-connected component.

use crate::dataset::NormalizedImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SlicParams {
    /// Requested segment count.
    pub segments: usize,
    pub compactness: f64,
    pub max_iter: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            segments: 50,
            compactness: 10.0,
            max_iter: 10,
        }
    }
}

impl SlicParams {
    pub fn with_segments(segments: usize) -> Self {
        SlicParams {
            segments,
            ..Default::default()
        }
    }

    /// Fragments below this size get merged during connectivity enforcement.
    pub fn min_segment_size(&self, width: usize, height: usize) -> usize {
        ((width * height) / self.segments.max(1) / 4).max(1)
    }
}

/// Per-pixel segment labels. Labels are contiguous 0..num_segments-1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    labels: Vec<u32>,
    width: usize,
    height: usize,
    num_segments: usize,
}

impl SegmentMap {
    pub fn new(labels: Vec<u32>, width: usize, height: usize) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Input(format!(
                "label buffer has {} entries for a {}x{} image",
                labels.len(),
                width,
                height
            )));
        }
        let num_segments = match labels.iter().max() {
            Some(&m) => m as usize + 1,
            None => 0,
        };
        let mut seen = vec![false; num_segments];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::Input("segment labels are not contiguous".into()));
        }
        Ok(SegmentMap {
            labels,
            width,
            height,
            num_segments,
        })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    #[inline]
    pub fn label_at(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_segments];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Debug dump as a plain-text PGM (`P2`) integer raster.
    pub fn to_pgm(&self) -> String {
        let maxval = self.num_segments.saturating_sub(1).max(1);
        let mut out = format!("P2\n{} {}\n{}\n", self.width, self.height, maxval);
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| self.label_at(y, x).to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// True when every segment is a single 4-connected component.
    pub fn all_segments_connected(&self) -> bool {
        self.connected_component_count() == self.num_segments
    }

    /// Number of 4-connected components over all labels.
    pub fn connected_component_count(&self) -> usize {
        let (comps, _) = components_with_map(&self.labels, self.width, self.height);
        comps.len()
    }
}

fn srgb_channel_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB in [0, 1] to CIELAB under D65.
pub fn rgb01_to_lab(r: f64, g: f64, b: f64) -> [f64; 3] {
    let rl = srgb_channel_to_linear(r);
    let gl = srgb_channel_to_linear(g);
    let bl = srgb_channel_to_linear(b);

    let x = rl * 0.4124564 + gl * 0.3575761 + bl * 0.1804375;
    let y = rl * 0.2126729 + gl * 0.7151522 + bl * 0.0721750;
    let z = rl * 0.0193339 + gl * 0.1191920 + bl * 0.9503041;

    // D65 reference white
    let (xn, yn, zn) = (0.950456, 1.0, 1.088754);
    let f = |t: f64| {
        const EPS: f64 = 0.008856;
        const KAPPA: f64 = 903.3;
        if t > EPS {
            t.cbrt()
        } else {
            (KAPPA * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x / xn), f(y / yn), f(z / zn));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn lab_image(image: &NormalizedImage) -> Vec<[f64; 3]> {
    let (w, h) = (image.width(), image.height());
    let mut lab = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let px = image.at(y, x);
            // undo the (v - 0.5) / 0.5 normalization before the color transform
            let r = (px[0] as f64) * 0.5 + 0.5;
            let g = (px[1] as f64) * 0.5 + 0.5;
            let b = (px[2] as f64) * 0.5 + 0.5;
            lab.push(rgb01_to_lab(r, g, b));
        }
    }
    lab
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

fn lab_dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Gradient magnitude used to nudge seeds off edges.
fn gradient_at(lab: &[[f64; 3]], w: usize, h: usize, x: usize, y: usize) -> f64 {
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let at = |x: usize, y: usize| &lab[y * w + x];
    let gx = lab_dist_sq(
        at(clamp(x as isize + 1, w), y),
        at(clamp(x as isize - 1, w), y),
    );
    let gy = lab_dist_sq(
        at(x, clamp(y as isize + 1, h)),
        at(x, clamp(y as isize - 1, h)),
    );
    gx + gy
}

fn initial_centers(lab: &[[f64; 3]], w: usize, h: usize, k: usize) -> Vec<Center> {
    // grid roughly proportional to the aspect ratio, at least 1x1
    let nx = ((k as f64 * w as f64 / h as f64).sqrt().ceil() as usize).max(1);
    let ny = (((k as f64 / nx as f64).round() as usize).max(1)).min(h);
    let nx = nx.min(w);

    let mut centers = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let cx = ((ix as f64 + 0.5) * w as f64 / nx as f64).floor() as usize;
            let cy = ((iy as f64 + 0.5) * h as f64 / ny as f64).floor() as usize;
            let (cx, cy) = (cx.min(w - 1), cy.min(h - 1));

            // move to the lowest-gradient pixel in the 3x3 neighborhood
            let mut best = (cx, cy);
            let mut best_grad = f64::INFINITY;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let px = cx as isize + dx;
                    let py = cy as isize + dy;
                    if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                        continue;
                    }
                    let (px, py) = (px as usize, py as usize);
                    let g = gradient_at(lab, w, h, px, py);
                    if g < best_grad {
                        best_grad = g;
                        best = (px, py);
                    }
                }
            }
            centers.push(Center {
                lab: lab[best.1 * w + best.0],
                x: best.0 as f64,
                y: best.1 as f64,
            });
        }
    }
    centers
}

/// Run SLIC. The returned map is label-total but may contain disconnected
/// fragments; follow with [`enforce_connectivity`].
pub fn slic_segment(image: &NormalizedImage, params: &SlicParams) -> Result<SegmentMap> {
    let (w, h) = (image.width(), image.height());
    let n_pixels = w * h;
    if params.segments < 1 {
        return Err(Error::Input("segment count must be >= 1".into()));
    }
    if params.segments > n_pixels {
        return Err(Error::Input(format!(
            "requested {} segments for an image with {} pixels",
            params.segments, n_pixels
        )));
    }
    if !params.compactness.is_finite() || params.compactness <= 0.0 {
        return Err(Error::Input("compactness must be > 0".into()));
    }
    if params.max_iter < 1 {
        return Err(Error::Input("max_iter must be >= 1".into()));
    }

    let lab = lab_image(image);
    let s = ((n_pixels as f64) / params.segments as f64).sqrt();
    let spatial_weight = (params.compactness / s) * (params.compactness / s);
    let mut centers = initial_centers(&lab, w, h, params.segments);

    let mut labels = vec![u32::MAX; n_pixels];
    let mut dist = vec![f64::INFINITY; n_pixels];
    let window = s.ceil() as isize;

    for _ in 0..params.max_iter {
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = ((c.x as isize) - window).max(0) as usize;
            let x1 = ((c.x as isize) + window).min(w as isize - 1) as usize;
            let y0 = ((c.y as isize) - window).max(0) as usize;
            let y1 = ((c.y as isize) + window).min(h as isize - 1) as usize;
            for y in y0..=y1 {
                let dy = y as f64 - c.y;
                for x in x0..=x1 {
                    let idx = y * w + x;
                    let dx = x as f64 - c.x;
                    let d = lab_dist_sq(&lab[idx], &c.lab)
                        + spatial_weight * (dx * dx + dy * dy);
                    // strict < keeps the lowest center id on ties
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = ci as u32;
                    }
                }
            }
        }

        // pixels no window reached fall back to a full scan
        for idx in 0..n_pixels {
            if labels[idx] != u32::MAX {
                continue;
            }
            let (x, y) = ((idx % w) as f64, (idx / w) as f64);
            let mut best = (f64::INFINITY, 0u32);
            for (ci, c) in centers.iter().enumerate() {
                let d = lab_dist_sq(&lab[idx], &c.lab)
                    + spatial_weight * ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y));
                if d < best.0 {
                    best = (d, ci as u32);
                }
            }
            labels[idx] = best.1;
        }

        // recompute centers as cluster means
        let mut sums = vec![[0.0f64; 5]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for idx in 0..n_pixels {
            let ci = labels[idx] as usize;
            let l = &lab[idx];
            let acc = &mut sums[ci];
            acc[0] += l[0];
            acc[1] += l[1];
            acc[2] += l[2];
            acc[3] += (idx % w) as f64;
            acc[4] += (idx / w) as f64;
            counts[ci] += 1;
        }
        let mut total_movement = 0.0f64;
        for (ci, c) in centers.iter_mut().enumerate() {
            if counts[ci] == 0 {
                continue;
            }
            let inv = 1.0 / counts[ci] as f64;
            let nx = sums[ci][3] * inv;
            let ny = sums[ci][4] * inv;
            total_movement += ((nx - c.x).powi(2) + (ny - c.y).powi(2)).sqrt();
            *c = Center {
                lab: [sums[ci][0] * inv, sums[ci][1] * inv, sums[ci][2] * inv],
                x: nx,
                y: ny,
            };
        }
        if total_movement / (centers.len() as f64) < 0.5 {
            break;
        }
    }

    // drop empty clusters so labels are contiguous
    let mut remap = vec![u32::MAX; centers.len()];
    let mut next = 0u32;
    for &l in &labels {
        if remap[l as usize] == u32::MAX {
            remap[l as usize] = next;
            next += 1;
        }
    }
    for l in labels.iter_mut() {
        *l = remap[*l as usize];
    }
    SegmentMap::new(labels, w, h)
}

struct Component {
    size: usize,
    first_pixel: usize,
}

fn components_with_map(labels: &[u32], w: usize, h: usize) -> (Vec<Component>, Vec<usize>) {
    let mut comp_of = vec![usize::MAX; labels.len()];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if comp_of[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let label = labels[start];
        let mut size = 0usize;
        stack.push(start);
        comp_of[start] = id;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (x, y) = (idx % w, idx / w);
            let mut visit = |nidx: usize| {
                if comp_of[nidx] == usize::MAX && labels[nidx] == label {
                    comp_of[nidx] = id;
                    stack.push(nidx);
                }
            };
            if x > 0 {
                visit(idx - 1);
            }
            if x + 1 < w {
                visit(idx + 1);
            }
            if y > 0 {
                visit(idx - w);
            }
            if y + 1 < h {
                visit(idx + w);
            }
        }
        comps.push(Component {
            size,
            first_pixel: start,
        });
    }
    (comps, comp_of)
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(sizes: &[usize]) -> Self {
        UnionFind {
            parent: (0..sizes.len()).collect(),
            size: sizes.to_vec(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merge `child` into `target`; `target`'s root survives.
    fn merge_into(&mut self, child: usize, target: usize) {
        let (c, t) = (self.find(child), self.find(target));
        if c == t {
            return;
        }
        self.parent[c] = t;
        self.size[t] += self.size[c];
    }
}

/// Merge every 4-connected fragment smaller than `min_size` into its
/// largest adjacent segment, then re-compact labels to 0..M-1 in scan
/// order. Applying this twice equals applying it once.
pub fn enforce_connectivity(raw: &SegmentMap, min_size: usize) -> SegmentMap {
    let (w, h) = (raw.width(), raw.height());
    let (comps, comp_of) = components_with_map(raw.labels(), w, h);

    // adjacency over original components
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); comps.len()];
    let push_edge = |a: usize, b: usize, adjacency: &mut Vec<Vec<usize>>| {
        if a != b {
            if !adjacency[a].contains(&b) {
                adjacency[a].push(b);
            }
            if !adjacency[b].contains(&a) {
                adjacency[b].push(a);
            }
        }
    };
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if x + 1 < w {
                push_edge(comp_of[idx], comp_of[idx + 1], &mut adjacency);
            }
            if y + 1 < h {
                push_edge(comp_of[idx], comp_of[idx + w], &mut adjacency);
            }
        }
    }

    let sizes: Vec<usize> = comps.iter().map(|c| c.size).collect();
    let mut uf = UnionFind::new(&sizes);

    // Absorb small fragments, smallest first, until stable. Merging can
    // leave a grown group still under the threshold, hence the outer loop.
    loop {
        let mut order: Vec<usize> = (0..comps.len())
            .filter(|&c| {
                let root = uf.find(c);
                root == c && uf.size[root] < min_size
            })
            .collect();
        order.sort_by_key(|&c| (uf.size[c], comps[c].first_pixel));
        let mut merged_any = false;
        for c in order {
            let root = uf.find(c);
            if root != c || uf.size[root] >= min_size {
                continue;
            }
            // neighbors of the whole group, through original adjacency
            let mut best: Option<(usize, usize, usize)> = None; // (size, -first_pixel ordering, root)
            for member in 0..comps.len() {
                if uf.find(member) != root {
                    continue;
                }
                for &nb in &adjacency[member] {
                    let nb_root = uf.find(nb);
                    if nb_root == root {
                        continue;
                    }
                    let candidate = (uf.size[nb_root], comps[nb_root].first_pixel, nb_root);
                    best = match best {
                        None => Some(candidate),
                        Some(cur) => {
                            // largest size wins; ties broken by earliest first pixel
                            if candidate.0 > cur.0 || (candidate.0 == cur.0 && candidate.1 < cur.1)
                            {
                                Some(candidate)
                            } else {
                                Some(cur)
                            }
                        }
                    };
                }
            }
            if let Some((_, _, target)) = best {
                uf.merge_into(root, target);
                merged_any = true;
            }
        }
        if !merged_any {
            break;
        }
    }

    // relabel roots in scan order of first appearance
    let mut new_labels = vec![u32::MAX; raw.labels().len()];
    let mut root_label: Vec<u32> = vec![u32::MAX; comps.len()];
    let mut next = 0u32;
    for idx in 0..new_labels.len() {
        let root = uf.find(comp_of[idx]);
        if root_label[root] == u32::MAX {
            root_label[root] = next;
            next += 1;
        }
        new_labels[idx] = root_label[root];
    }
    SegmentMap::new(new_labels, w, h).expect("relabeled map is contiguous")
}

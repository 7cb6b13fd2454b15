//! From soft maps to slick objects: thresholding, hysteresis filtering,
//! 8-connected component extraction, pixel-edge polygon tracing, feature
//! vectors, and small-slick pruning.

use oseg_data::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl BoundingBox {
    pub fn area(&self) -> usize {
        (self.row_max - self.row_min + 1) * (self.col_max - self.col_min + 1)
    }
}

#[derive(Debug, Clone)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BoundingBox,
}

/// 8-connected components of a binary mask (BFS labeling); component order
/// follows the row-major position of each component's first pixel.
pub fn connected_components(mask: &Grid<u8>) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = Vec::new();
    for start in 0..w * h {
        if seen[start] || mask.data()[start] == 0 {
            continue;
        }
        seen[start] = true;
        queue.clear();
        queue.push(start);
        let mut pixels = Vec::new();
        let mut bbox = BoundingBox {
            row_min: usize::MAX,
            row_max: 0,
            col_min: usize::MAX,
            col_max: 0,
        };
        while let Some(idx) = queue.pop() {
            let (r, c) = (idx / w, idx % w);
            pixels.push((r, c));
            bbox.row_min = bbox.row_min.min(r);
            bbox.row_max = bbox.row_max.max(r);
            bbox.col_min = bbox.col_min.min(c);
            bbox.col_max = bbox.col_max.max(c);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let nr = r as i64 + dr;
                    let nc = c as i64 + dc;
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let nidx = nr as usize * w + nc as usize;
                    if !seen[nidx] && mask.data()[nidx] != 0 {
                        seen[nidx] = true;
                        queue.push(nidx);
                    }
                }
            }
        }
        pixels.sort_unstable();
        out.push(Component { pixels, bbox });
    }
    out
}

/// Binary mask at `tau`; values exactly at the threshold map to 1.
pub fn threshold_mask(soft: &Grid<f32>, tau: f32) -> Grid<u8> {
    soft.map(|v| u8::from(v >= tau))
}

/// Hysteresis filter-color: keep exactly those `tau_color`-connected
/// components that contain at least one pixel >= `tau_filter`. The soft map
/// is never recomputed.
pub fn filter_color(soft: &Grid<f32>, tau_filter: f32, tau_color: f32) -> Result<Grid<u8>, String> {
    if tau_filter < tau_color {
        return Err(format!("tau_filter {tau_filter} below tau_color {tau_color}"));
    }
    let color = threshold_mask(soft, tau_color);
    let mut out = Grid::new(soft.width(), soft.height(), 0u8);
    for comp in connected_components(&color) {
        let has_seed = comp.pixels.iter().any(|&(r, c)| soft.get(r, c) >= tau_filter);
        if has_seed {
            for &(r, c) in &comp.pixels {
                out.set(r, c, 1);
            }
        }
    }
    Ok(out)
}

/// One detected slick and its feature vector.
#[derive(Debug, Clone)]
pub struct Slick {
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BoundingBox,
    /// Exterior outline as pixel-corner lattice points (closed ring, first
    /// point repeated at the end).
    pub polygon: Vec<(f64, f64)>,
    pub area_km2: f64,
    /// Centroid distance to the nearest other slick; `None` when alone.
    pub nn_distance_km: Option<f64>,
    pub mean_score: f64,
    pub centroid: (f64, f64),
}

/// Components of `mask` with bbox, outline, area, nearest-neighbor distance,
/// and mean soft score. An empty mask yields an empty list.
pub fn extract_slicks(mask: &Grid<u8>, soft: &Grid<f32>, pixel_size_m: f64) -> Vec<Slick> {
    assert_eq!(mask.len(), soft.len(), "mask/soft shape mismatch");
    let comps = connected_components(mask);
    let km_per_px = pixel_size_m / 1000.0;
    let mut slicks: Vec<Slick> = comps
        .into_iter()
        .map(|comp| {
            let n = comp.pixels.len() as f64;
            let mut score = 0.0;
            let (mut sy, mut sx) = (0.0, 0.0);
            for &(r, c) in &comp.pixels {
                score += soft.get(r, c) as f64;
                sy += r as f64;
                sx += c as f64;
            }
            let polygon = trace_exterior(&comp);
            Slick {
                area_km2: n * km_per_px * km_per_px,
                mean_score: score / n,
                centroid: (sy / n, sx / n),
                nn_distance_km: None,
                polygon,
                bbox: comp.bbox,
                pixels: comp.pixels,
            }
        })
        .collect();

    let centroids: Vec<(f64, f64)> = slicks.iter().map(|s| s.centroid).collect();
    for (i, s) in slicks.iter_mut().enumerate() {
        let mut best: Option<f64> = None;
        for (j, &(cy, cx)) in centroids.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = ((s.centroid.0 - cy).powi(2) + (s.centroid.1 - cx).powi(2)).sqrt() * km_per_px;
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
        s.nn_distance_km = best;
    }
    slicks
}

/// Remove slicks that are both small (area below `min_area_km2`) and
/// isolated (nearest neighbor beyond `max_isolation_km`, or no neighbor at
/// all). Distances are the pre-pruning values.
pub fn prune_slicks(slicks: Vec<Slick>, min_area_km2: f64, max_isolation_km: f64) -> Vec<Slick> {
    slicks
        .into_iter()
        .filter(|s| {
            let small = s.area_km2 < min_area_km2;
            let isolated = s.nn_distance_km.map_or(true, |d| d > max_isolation_km);
            !(small && isolated)
        })
        .collect()
}

/// Exterior outline of a component by pixel-edge tracing: collect the
/// directed border edges (interior on the left), chain them into loops, and
/// return the loop with the largest absolute area. Vertices are lattice
/// corners in (row, col) units.
fn trace_exterior(comp: &Component) -> Vec<(f64, f64)> {
    use std::collections::HashMap;
    let set: std::collections::HashSet<(i64, i64)> =
        comp.pixels.iter().map(|&(r, c)| (r as i64, c as i64)).collect();
    // Directed edges between corners; pixel (r, c) owns corners
    // (r, c)..(r+1, c+1). Orientation keeps the pixel on the left.
    let mut nexts: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
    let mut edge_count = 0usize;
    for &(r, c) in &set {
        let (r, c) = (r, c);
        if !set.contains(&(r - 1, c)) {
            nexts.entry((r, c)).or_default().push((r, c + 1)); // top edge, eastward
            edge_count += 1;
        }
        if !set.contains(&(r, c + 1)) {
            nexts.entry((r, c + 1)).or_default().push((r + 1, c + 1)); // right edge, southward
            edge_count += 1;
        }
        if !set.contains(&(r + 1, c)) {
            nexts.entry((r + 1, c + 1)).or_default().push((r + 1, c)); // bottom, westward
            edge_count += 1;
        }
        if !set.contains(&(r, c - 1)) {
            nexts.entry((r + 1, c)).or_default().push((r, c)); // left, northward
            edge_count += 1;
        }
    }

    let mut best: Vec<(f64, f64)> = Vec::new();
    let mut best_area = 0.0f64;
    let mut consumed = 0usize;
    while consumed < edge_count {
        // Start a new loop at any corner with an unused outgoing edge.
        let Some((&start, _)) = nexts.iter().find(|(_, v)| !v.is_empty()) else { break };
        let mut ring = vec![start];
        let mut current = start;
        let mut prev_dir: Option<(i64, i64)> = None;
        loop {
            let outs = nexts.get_mut(&current).expect("boundary edges form closed loops");
            // At pinch corners prefer the sharpest left turn so each loop
            // stays simple.
            let pick = if outs.len() == 1 {
                0
            } else {
                let pd = prev_dir.unwrap_or((0, 1));
                let mut best_i = 0;
                let mut best_key = i64::MIN;
                for (i, &(nr, nc)) in outs.iter().enumerate() {
                    let d = (nr - current.0, nc - current.1);
                    // cross > 0 is a left turn relative to the incoming edge
                    let cross = pd.0 * d.1 - pd.1 * d.0;
                    let dot = pd.0 * d.0 + pd.1 * d.1;
                    let key = match (cross.signum(), dot.signum()) {
                        (1, _) => 3,
                        (0, 1) => 2,
                        (-1, _) => 1,
                        _ => 0,
                    };
                    if key > best_key {
                        best_key = key;
                        best_i = i;
                    }
                }
                best_i
            };
            let next = outs.swap_remove(pick);
            consumed += 1;
            prev_dir = Some((next.0 - current.0, next.1 - current.1));
            ring.push(next);
            current = next;
            if current == start {
                break;
            }
        }
        let area = shoelace(&ring).abs();
        if area > best_area {
            best_area = area;
            best = simplify_ring(&ring).iter().map(|&(r, c)| (r as f64, c as f64)).collect();
        }
    }
    best
}

/// Drop collinear intermediate vertices of a closed lattice ring, keeping
/// only direction changes; returns a closed ring.
fn simplify_ring(ring: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let open = &ring[..ring.len() - 1];
    let n = open.len();
    let mut keep = Vec::new();
    for i in 0..n {
        let prev = open[(i + n - 1) % n];
        let cur = open[i];
        let next = open[(i + 1) % n];
        let d1 = (cur.0 - prev.0, cur.1 - prev.1);
        let d2 = (next.0 - cur.0, next.1 - cur.1);
        if d1.0 * d2.1 - d1.1 * d2.0 != 0 || (d1.0 + d2.0 == 0 && d1.1 + d2.1 == 0) {
            keep.push(cur);
        }
    }
    keep.push(keep[0]);
    keep
}

/// Signed shoelace area over integer lattice points.
fn shoelace(ring: &[(i64, i64)]) -> f64 {
    let mut acc = 0i64;
    for w in ring.windows(2) {
        let (r0, c0) = w[0];
        let (r1, c1) = w[1];
        acc += c0 * r1 - c1 * r0;
    }
    acc as f64 / 2.0
}

/// Signed area of a float ring (positive = counter-clockwise in x/y order).
pub fn ring_signed_area(ring: &[(f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for w in ring.windows(2) {
        acc += w[0].0 * w[1].1 - w[1].0 * w[0].1;
    }
    acc / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, ones: &[(usize, usize)]) -> Grid<u8> {
        let mut g = Grid::new(w, h, 0u8);
        for &(r, c) in ones {
            g.set(r, c, 1);
        }
        g
    }

    #[test]
    fn components_count_diagonal_as_connected() {
        let g = grid(5, 5, &[(0, 0), (1, 1), (3, 3)]);
        let comps = connected_components(&g);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].pixels.len(), 2);
    }

    #[test]
    fn threshold_tie_goes_to_one() {
        let mut soft = Grid::new(3, 1, 0.0f32);
        soft.set(0, 0, 0.4);
        soft.set(0, 1, 0.5);
        soft.set(0, 2, 0.6);
        assert_eq!(threshold_mask(&soft, 0.5).data(), &[0, 1, 1]);
    }

    #[test]
    fn filter_color_keeps_seeded_components_only() {
        let mut soft = Grid::new(8, 3, 0.0f32);
        // Component A: max 0.75 (dropped); component B: one 0.9 seed (kept).
        for c in 0..3 {
            soft.set(1, c, 0.75);
        }
        for c in 5..8 {
            soft.set(1, c, 0.6);
        }
        soft.set(1, 6, 0.9);
        let kept = filter_color(&soft, 0.8, 0.5).unwrap();
        assert_eq!(kept.get(1, 1), 0);
        assert_eq!(kept.get(1, 5), 1);
        assert_eq!(kept.get(1, 6), 1);
        assert_eq!(kept.get(1, 7), 1);
    }

    #[test]
    fn filter_color_rejects_inverted_thresholds() {
        let soft = Grid::new(2, 2, 0.0f32);
        assert!(filter_color(&soft, 0.4, 0.5).is_err());
    }

    #[test]
    fn slick_features_area_and_distance() {
        // Two single-pixel slicks 25 columns apart at 40 m = 1 km.
        let mask = grid(30, 3, &[(1, 2), (1, 27)]);
        let soft = mask.map(|v| v as f32 * 0.9);
        let slicks = extract_slicks(&mask, &soft, 40.0);
        assert_eq!(slicks.len(), 2);
        assert!((slicks[0].nn_distance_km.unwrap() - 1.0).abs() < 1e-9);
        assert!((slicks[0].area_km2 - 0.0016).abs() < 1e-9);
        assert!((slicks[0].mean_score - 0.9).abs() < 1e-6);
    }

    #[test]
    fn blob_area_matches_pixel_count() {
        let pixels: Vec<(usize, usize)> = (0..157)
            .map(|i| (10 + i / 15, 10 + i % 15))
            .collect();
        let mask = grid(40, 40, &pixels);
        let soft = mask.map(|v| v as f32);
        let slicks = extract_slicks(&mask, &soft, 40.0);
        assert_eq!(slicks.len(), 1);
        assert!((slicks[0].area_km2 - 157.0 * 0.0016).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_gives_empty_list() {
        let mask = Grid::new(4, 4, 0u8);
        let soft = Grid::new(4, 4, 0.0f32);
        assert!(extract_slicks(&mask, &soft, 40.0).is_empty());
    }

    #[test]
    fn prune_rule_is_a_conjunction() {
        let mk = |area: f64, nn: Option<f64>| Slick {
            pixels: vec![(0, 0)],
            bbox: BoundingBox { row_min: 0, row_max: 0, col_min: 0, col_max: 0 },
            polygon: vec![],
            area_km2: area,
            nn_distance_km: nn,
            mean_score: 0.9,
            centroid: (0.0, 0.0),
        };
        // Small but has a neighbor inside 1.5 km: kept.
        assert_eq!(prune_slicks(vec![mk(0.1, Some(0.5))], 0.25, 1.5).len(), 1);
        // Small and isolated: removed.
        assert_eq!(prune_slicks(vec![mk(0.1, Some(5.0))], 0.25, 1.5).len(), 0);
        // Small and alone in the scene: removed.
        assert_eq!(prune_slicks(vec![mk(0.1, None)], 0.25, 1.5).len(), 0);
        // Large enough: kept regardless of isolation.
        assert_eq!(prune_slicks(vec![mk(0.3, None)], 0.25, 1.5).len(), 1);
    }

    #[test]
    fn square_slick_polygon_is_closed_with_five_points() {
        let mask = grid(6, 6, &[(2, 2), (2, 3), (3, 2), (3, 3)]);
        let soft = mask.map(|v| v as f32);
        let slicks = extract_slicks(&mask, &soft, 40.0);
        let poly = &slicks[0].polygon;
        assert_eq!(poly.len(), 5);
        assert_eq!(poly.first(), poly.last());
        // Encloses exactly the 4 pixels.
        let ring: Vec<(i64, i64)> = poly.iter().map(|&(r, c)| (r as i64, c as i64)).collect();
        assert!((shoelace(&ring).abs() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn polygon_area_matches_pixel_count_for_solid_shapes() {
        // L-shaped component.
        let mut ones = Vec::new();
        for r in 1..5 {
            for c in 1..3 {
                ones.push((r, c));
            }
        }
        for c in 3..6 {
            ones.push((4, c));
        }
        let mask = grid(8, 8, &ones);
        let soft = mask.map(|v| v as f32);
        let slicks = extract_slicks(&mask, &soft, 40.0);
        let ring: Vec<(i64, i64)> = slicks[0].polygon.iter().map(|&(r, c)| (r as i64, c as i64)).collect();
        assert!((shoelace(&ring).abs() - ones.len() as f64).abs() < 1e-9);
    }
}

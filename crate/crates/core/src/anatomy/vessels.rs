//! Vessel centerlines and nearest-segment queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{aabb_dist2, closest_on_segment, norm2, scale, sub, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec3,
    pub b: Vec3,
}

/// Vessel centerline segments with a uniform radius (mm).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VesselSet {
    pub segments: Vec<Segment>,
    pub radius: f64,
}

impl VesselSet {
    pub fn new(segments: Vec<Segment>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!("vessel radius must be >= 0, got {radius}")));
        }
        for (i, s) in segments.iter().enumerate() {
            if !crate::geom::is_finite3(s.a) || !crate::geom::is_finite3(s.b) {
                return Err(Error::invalid(format!("vessel segment {i} has non-finite endpoints")));
            }
            if !(norm2(sub(s.b, s.a)) > 0.0) {
                return Err(Error::invalid(format!("vessel segment {i} has zero length")));
            }
        }
        Ok(Self { segments, radius })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Result of a nearest-vessel query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselHit {
    /// Distance to the vessel surface (centerline distance minus radius).
    pub distance: f64,
    /// Unit vector from the nearest centerline point toward the query.
    pub gradient: Vec3,
    /// Index of the nearest segment, `None` for an empty vessel set.
    pub segment: Option<usize>,
}

impl VesselHit {
    pub fn none() -> Self {
        Self { distance: f64::INFINITY, gradient: [0.0; 3], segment: None }
    }
}

#[derive(Debug, Clone)]
struct BvhNode {
    lo: Vec3,
    hi: Vec3,
    /// Leaves hold `[start, end)` into the permuted segment order; inner
    /// nodes hold their two children.
    kind: BvhKind,
}

#[derive(Debug, Clone)]
enum BvhKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

const BVH_LEAF: usize = 4;

/// Bounding volume hierarchy over segment boxes.
#[derive(Debug, Clone, Default)]
pub struct VesselIndex {
    order: Vec<usize>,
    nodes: Vec<BvhNode>,
}

impl VesselIndex {
    pub fn build(set: &VesselSet) -> Self {
        let mut order: Vec<usize> = (0..set.segments.len()).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            let n = order.len();
            build_bvh(&set.segments, &mut order, 0, n, &mut nodes);
        }
        Self { order, nodes }
    }

    /// Nearest segment to `p`; ties go to the lowest segment index.
    pub fn nearest(&self, set: &VesselSet, p: Vec3) -> VesselHit {
        if self.nodes.is_empty() {
            return VesselHit::none();
        }
        let mut best_d2 = f64::INFINITY;
        let mut best_seg = usize::MAX;
        let mut best_q = [0.0; 3];
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if aabb_dist2(p, node.lo, node.hi) > best_d2 {
                continue;
            }
            match node.kind {
                BvhKind::Leaf { start, end } => {
                    for &s in &self.order[start..end] {
                        let seg = &set.segments[s];
                        let (q, d2) = closest_on_segment(p, seg.a, seg.b);
                        if d2 < best_d2 || (d2 == best_d2 && s < best_seg) {
                            best_d2 = d2;
                            best_seg = s;
                            best_q = q;
                        }
                    }
                }
                BvhKind::Inner { left, right } => {
                    let dl = aabb_dist2(p, self.nodes[left].lo, self.nodes[left].hi);
                    let dr = aabb_dist2(p, self.nodes[right].lo, self.nodes[right].hi);
                    // Visit the closer child first.
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        let d = best_d2.sqrt();
        let gradient = if d > 0.0 { scale(sub(p, best_q), 1.0 / d) } else { [0.0; 3] };
        VesselHit { distance: d - set.radius, gradient, segment: Some(best_seg) }
    }
}

fn segment_box(s: &Segment) -> (Vec3, Vec3) {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        lo[a] = s.a[a].min(s.b[a]);
        hi[a] = s.a[a].max(s.b[a]);
    }
    (lo, hi)
}

fn build_bvh(segs: &[Segment], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<BvhNode>) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &order[start..end] {
        let (l, h) = segment_box(&segs[i]);
        for a in 0..3 {
            lo[a] = lo[a].min(l[a]);
            hi[a] = hi[a].max(h[a]);
        }
    }
    let id = nodes.len();
    nodes.push(BvhNode { lo, hi, kind: BvhKind::Leaf { start, end } });
    if end - start <= BVH_LEAF {
        return id;
    }
    let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
    let centroid = |i: usize| 0.5 * (segs[i].a[axis] + segs[i].b[axis]);
    let slice = &mut order[start..end];
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| centroid(a).total_cmp(&centroid(b)));
    let left = build_bvh(segs, order, start, start + mid, nodes);
    let right = build_bvh(segs, order, start + mid, end, nodes);
    nodes[id].kind = BvhKind::Inner { left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize) -> VesselSet {
        let segs = (0..n)
            .map(|_| {
                let a = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-2.0..2.0)];
                let b = [
                    a[0] + rng.random_range(-2.0..2.0),
                    a[1] + rng.random_range(-2.0..2.0),
                    a[2] + rng.random_range(-0.5..0.5),
                ];
                Segment { a, b }
            })
            .collect();
        VesselSet::new(segs, 0.0).unwrap()
    }

    #[test]
    fn matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = random_set(&mut rng, 100);
        let index = VesselIndex::build(&set);
        for _ in 0..50 {
            let p = [rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0), rng.random_range(-3.0..3.0)];
            let hit = index.nearest(&set, p);
            let (brute_seg, brute_d) = set
                .segments
                .iter()
                .enumerate()
                .map(|(i, s)| (i, closest_on_segment(p, s.a, s.b).1.sqrt()))
                .fold((usize::MAX, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
            assert!((hit.distance - brute_d).abs() < 1e-12);
            assert_eq!(hit.segment, Some(brute_seg));
        }
    }

    #[test]
    fn rejects_zero_length_segment() {
        let s = Segment { a: [1.0; 3], b: [1.0; 3] };
        assert!(VesselSet::new(vec![s], 0.0).is_err());
    }

    #[test]
    fn equidistant_tie_uses_lowest_index() {
        let set = VesselSet::new(
            vec![
                Segment { a: [0.0, 1.0, 0.0], b: [1.0, 1.0, 0.0] },
                Segment { a: [0.0, -1.0, 0.0], b: [1.0, -1.0, 0.0] },
            ],
            0.0,
        )
        .unwrap();
        let index = VesselIndex::build(&set);
        let hit = index.nearest(&set, [0.5, 0.0, 0.0]);
        assert_eq!(hit.segment, Some(0));
        assert_eq!(hit.gradient, [0.0, -1.0, 0.0]);
    }

    #[test]
    fn radius_is_subtracted() {
        let set = VesselSet::new(vec![Segment { a: [0.0; 3], b: [1.0, 0.0, 0.0] }], 0.1).unwrap();
        let index = VesselIndex::build(&set);
        let hit = index.nearest(&set, [0.5, 0.3, 0.0]);
        assert!((hit.distance - 0.2).abs() < 1e-12);
    }
}

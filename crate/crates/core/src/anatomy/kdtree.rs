//! Static 3D kd-tree for exact k-nearest-neighbor queries.
//!
//! Neighbors are ordered by (squared distance, id) so results are fully
//! deterministic under ties.

use crate::geom::{norm2, sub, Vec3};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    ids: Vec<u64>,
    /// Permutation of point indices, grouped by leaf.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// A neighbor found by a query: position in the original point list,
/// caller-supplied id and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub id: u64,
    pub dist2: f64,
}

impl KdTree {
    pub fn build(points: Vec<Vec3>, ids: Vec<u64>) -> Self {
        assert_eq!(points.len(), ids.len());
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = order.len();
            build_node(&points, &mut order, 0, n, &mut nodes);
        }
        Self { points, ids, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `q`, ascending by (distance, id).
    pub fn nearest(&self, q: Vec3, k: usize) -> Vec<Neighbor> {
        let k = k.min(self.points.len());
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k == 0 {
            return best;
        }
        self.search(0, q, k, &mut best);
        best
    }

    fn search(&self, node: usize, q: Vec3, k: usize, best: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    let cand = Neighbor { index: idx, id: self.ids[idx], dist2: norm2(sub(self.points[idx], q)) };
                    insert_bounded(best, cand, k);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, best);
                // Ties at the bound still have to be visited for id ordering.
                if best.len() < k || diff * diff <= best[best.len() - 1].dist2 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

#[inline]
fn precedes(a: &Neighbor, b: &Neighbor) -> bool {
    a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.id < b.id)
}

fn insert_bounded(best: &mut Vec<Neighbor>, cand: Neighbor, k: usize) {
    if best.len() == k && !precedes(&cand, &best[k - 1]) {
        return;
    }
    let pos = best.partition_point(|b| precedes(b, &cand));
    best.insert(pos, cand);
    if best.len() > k {
        best.pop();
    }
}

fn build_node(points: &[Vec3], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[slice[mid]][axis];
    // Points left of `mid` are <= value, points from `mid` on are >= value.
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

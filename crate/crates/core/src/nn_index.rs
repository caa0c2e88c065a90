//! Exact k-nearest-neighbour search with a kd-tree.
//!
//! Nodes split at the median of the coordinate with the widest spread.
//! Search keeps per-axis offsets to the current cell so that pruning uses the
//! full squared distance to the cell rather than only the splitting plane.
//! Ties in distance are broken by lower training index, so results are
//! identical to a sorted brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{GpnnError, Result};
use crate::linalg::Matrix;

pub const DEFAULT_LEAF_SIZE: usize = 40;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Immutable kd-tree over a fixed point set.
#[derive(Debug, Clone)]
pub struct NeighbourIndex {
    points: Matrix,
    /// Points permuted into leaf order, for contiguous leaf scans.
    ordered: Vec<f64>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

/// Result of a k-NN query, sorted by nondecreasing distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbours {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl NeighbourIndex {
    pub fn build(points: Matrix, leaf_size: usize) -> Result<Self> {
        if points.rows() == 0 {
            return Err(GpnnError::Empty("neighbour index points"));
        }
        if points.cols() == 0 {
            return Err(GpnnError::InvalidArgument("points must have dimension >= 1".into()));
        }
        if leaf_size == 0 {
            return Err(GpnnError::InvalidArgument("leaf_size must be >= 1".into()));
        }
        let mut ids: Vec<usize> = (0..points.rows()).collect();
        let mut nodes = Vec::new();
        let n = ids.len();
        build_node(&points, &mut ids, 0, n, leaf_size, &mut nodes);
        let d = points.cols();
        let mut ordered = Vec::with_capacity(n * d);
        for &i in &ids {
            ordered.extend_from_slice(points.row(i));
        }
        Ok(NeighbourIndex {
            points,
            ordered,
            ids,
            nodes,
            leaf_size,
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// The indexed points in their original order.
    pub fn points(&self) -> &Matrix {
        &self.points
    }

    /// The `min(m, n)` nearest indexed points to `x`.
    pub fn query(&self, x: &[f64], m: usize) -> Result<Neighbours> {
        if x.len() != self.dim() {
            return Err(GpnnError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if m == 0 {
            return Err(GpnnError::InvalidArgument("neighbour count must be >= 1".into()));
        }
        let k = m.min(self.len());
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let mut offsets = vec![0.0; self.dim()];
        self.search(0, x, k, 0.0, &mut offsets, &mut heap);
        let sorted = heap.into_sorted_vec();
        Ok(Neighbours {
            indices: sorted.iter().map(|c| c.idx).collect(),
            distances: sorted.iter().map(|c| c.d2.sqrt()).collect(),
        })
    }

    fn search(
        &self,
        node: usize,
        x: &[f64],
        k: usize,
        rd: f64,
        offsets: &mut [f64],
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                let d = self.dim();
                for pos in start..end {
                    let p = &self.ordered[pos * d..(pos + 1) * d];
                    let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    let cand = Candidate { d2, idx: self.ids[pos] };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("k >= 1") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = x[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, x, k, rd, offsets, heap);
                let old = offsets[dim];
                let far_rd = rd - old * old + diff * diff;
                // `<=` keeps equal-distance cells reachable for the index tie-break.
                if heap.len() < k || far_rd <= heap.peek().expect("k >= 1").d2 {
                    offsets[dim] = diff;
                    self.search(far, x, k, far_rd, offsets, heap);
                    offsets[dim] = old;
                }
            }
        }
    }
}

fn build_node(
    points: &Matrix,
    ids: &mut [usize],
    start: usize,
    end: usize,
    leaf_size: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let slot = nodes.len();
    nodes.push(Node::Leaf { start, end });
    if end - start <= leaf_size {
        return slot;
    }
    let d = points.cols();
    let slice = &mut ids[start..end];
    let mut best = (0, f64::NEG_INFINITY);
    for dim in 0..d {
        let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = points[(i, dim)];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > best.1 {
            best = (dim, hi - lo);
        }
    }
    let (dim, spread) = best;
    if spread <= 0.0 {
        // all points coincide
        return slot;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[(a, dim)].total_cmp(&points[(b, dim)]));
    let value = points[(slice[mid], dim)];
    let left = build_node(points, ids, start, start + mid, leaf_size, nodes);
    let right = build_node(points, ids, start + mid, end, leaf_size, nodes);
    nodes[slot] = Node::Split { dim, value, left, right };
    slot
}

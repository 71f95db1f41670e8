//! Recursive binary partition of the dataset that defines the block
//! hierarchy: at each node, points are split at the median of their
//! projection onto the node's top principal direction (fixed-iteration
//! seeded power method). Constant or duplicate point sets fall back to an
//! even split by index so the recursion always terminates balanced.

use crate::dataset::{Dataset, Permutation};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

pub const MIN_LEAF_SIZE: usize = 16;
pub const DEFAULT_LEAF_SIZE: usize = 128;
const POWER_ITERATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterNode {
    /// Range `[lo, hi)` into the permuted point ordering.
    pub lo: usize,
    pub hi: usize,
    /// Indices of the children in [`ClusterTree::nodes`]; both or neither.
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl ClusterNode {
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }
}

/// Binary cluster tree over `[0, d)`; node 0 is the root and children's
/// ranges partition the parent's range contiguously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTree {
    nodes: Vec<ClusterNode>,
    d: usize,
    leaf_size: usize,
}

impl ClusterTree {
    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &ClusterNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn len_points(&self) -> usize {
        self.d
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    /// Children-before-parent order.
    pub fn postorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root(), false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded || self.nodes[id].is_leaf() {
                out.push(id);
            } else {
                stack.push((id, true));
                stack.push((self.nodes[id].right.unwrap(), false));
                stack.push((self.nodes[id].left.unwrap(), false));
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &ClusterTree, id: usize) -> usize {
            match (t.nodes[id].left, t.nodes[id].right) {
                (Some(l), Some(r)) => 1 + rec(t, l).max(rec(t, r)),
                _ => 1,
            }
        }
        rec(self, self.root())
    }

    /// Construct from raw nodes (used by the container loader); validates
    /// the partition invariants.
    pub fn from_nodes(nodes: Vec<ClusterNode>, d: usize, leaf_size: usize) -> Result<Self> {
        let tree = ClusterTree {
            nodes,
            d,
            leaf_size,
        };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Validation("empty cluster tree".into()));
        }
        let root = &self.nodes[0];
        if root.lo != 0 || root.hi != self.d {
            return Err(Error::Validation("root range must be [0, d)".into()));
        }
        for (id, n) in self.nodes.iter().enumerate() {
            if n.hi < n.lo || n.hi > self.d {
                return Err(Error::Validation(format!("bad range at node {id}")));
            }
            match (n.left, n.right) {
                (Some(l), Some(r)) => {
                    let (nl, nr) = (&self.nodes[l], &self.nodes[r]);
                    if nl.lo != n.lo || nl.hi != nr.lo || nr.hi != n.hi {
                        return Err(Error::Validation(format!(
                            "children do not tile node {id}"
                        )));
                    }
                }
                (None, None) => {
                    if n.len() > self.leaf_size || n.is_empty() {
                        return Err(Error::Validation(format!(
                            "leaf {id} size {} outside [1, {}]",
                            n.len(),
                            self.leaf_size
                        )));
                    }
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "node {id} has exactly one child"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Build the bisection tree; returns the tree and the permutation from tree
/// order to original order (`forward[i]` = original index of tree slot `i`).
pub fn build_tree<F: Scalar>(
    ds: &Dataset<F>,
    leaf_size: usize,
    seed: u64,
) -> Result<(ClusterTree, Permutation)> {
    if ds.is_empty() {
        return Err(Error::Validation("cannot cluster an empty dataset".into()));
    }
    if leaf_size < MIN_LEAF_SIZE {
        return Err(Error::Validation(format!(
            "leaf size {leaf_size} below minimum {MIN_LEAF_SIZE}"
        )));
    }
    let d = ds.len();
    let mut order: Vec<usize> = (0..d).collect();
    let mut nodes: Vec<ClusterNode> = Vec::new();
    nodes.push(ClusterNode {
        lo: 0,
        hi: d,
        left: None,
        right: None,
    });
    // worklist of nodes to (maybe) split, preorder so node ids are stable
    let mut work = vec![0usize];
    while let Some(id) = work.pop() {
        let (lo, hi) = (nodes[id].lo, nodes[id].hi);
        if hi - lo <= leaf_size {
            continue;
        }
        split_segment(ds, &mut order[lo..hi], seed, id as u64);
        let mid = lo + (hi - lo) / 2;
        let left = nodes.len();
        nodes.push(ClusterNode {
            lo,
            hi: mid,
            left: None,
            right: None,
        });
        let right = nodes.len();
        nodes.push(ClusterNode {
            lo: mid,
            hi,
            left: None,
            right: None,
        });
        nodes[id].left = Some(left);
        nodes[id].right = Some(right);
        // push right first so the left child is processed first
        work.push(right);
        work.push(left);
    }
    let tree = ClusterTree {
        nodes,
        d,
        leaf_size,
    };
    tree.validate()?;
    let perm = Permutation::from_forward(order)?;
    Ok((tree, perm))
}

/// Reorder `segment` so the lower-projection half comes first. Falls back to
/// a stable index sort when the projection spread is negligible.
fn split_segment<F: Scalar>(ds: &Dataset<F>, segment: &mut [usize], seed: u64, node_tag: u64) {
    let dim = ds.num_features();
    let direction = principal_direction(ds, segment, dim, seed, node_tag);
    let keys: Vec<(F, usize)> = match &direction {
        Some(v) => segment
            .iter()
            .map(|&idx| (project(ds.point(idx), v), idx))
            .collect(),
        None => segment.iter().map(|&idx| (F::zero(), idx)).collect(),
    };
    let spread_ok = direction.is_some() && {
        let mut min = keys[0].0;
        let mut max = keys[0].0;
        for &(k, _) in &keys[1..] {
            if k < min {
                min = k;
            }
            if k > max {
                max = k;
            }
        }
        let scale = min.abs().max(max.abs()).max(F::one());
        (max - min) > scale * F::cast(1e-12)
    };
    let mut keyed = keys;
    if spread_ok {
        keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    } else {
        // constant/duplicate points: even split by index
        keyed.sort_by_key(|&(_, idx)| idx);
    }
    for (slot, &(_, idx)) in segment.iter_mut().zip(&keyed) {
        *slot = idx;
    }
}

fn project<F: Scalar>(p: &crate::dataset::SparseVector<F>, v: &[F]) -> F {
    let mut s = F::zero();
    for (idx, val) in p.iter() {
        s = s + val * v[(idx - 1) as usize];
    }
    s
}

/// Top principal direction of the segment's point cloud by a fixed number of
/// seeded power iterations on the (implicit) scatter matrix. Returns `None`
/// when the cloud has no measurable variance along the iterate.
fn principal_direction<F: Scalar>(
    ds: &Dataset<F>,
    segment: &[usize],
    dim: usize,
    seed: u64,
    node_tag: u64,
) -> Option<Vec<F>> {
    if dim == 0 || segment.len() < 2 {
        return None;
    }
    let n = segment.len();
    let inv_n = F::one() / F::from_index(n);
    // mean vector (dense over features)
    let mut mean = vec![F::zero(); dim];
    for &idx in segment {
        for (fidx, val) in ds.point(idx).iter() {
            mean[(fidx - 1) as usize] = mean[(fidx - 1) as usize] + val;
        }
    }
    for m in &mut mean {
        *m = *m * inv_n;
    }
    let mut rng = SplitMix64::substream(seed, node_tag.wrapping_mul(2).wrapping_add(1));
    let mut v: Vec<F> = (0..dim).map(|_| F::cast(rng.next_gaussian())).collect();
    normalize(&mut v)?;
    for _ in 0..POWER_ITERATIONS {
        // u = sum_j (x_j - mean) <x_j - mean, v>
        let mean_dot_v = crate::linalg::dot(&mean, &v);
        let mut u = vec![F::zero(); dim];
        let mut t_sum = F::zero();
        for &idx in segment {
            let p = ds.point(idx);
            let t = project(p, &v) - mean_dot_v;
            t_sum = t_sum + t;
            for (fidx, val) in p.iter() {
                let slot = (fidx - 1) as usize;
                u[slot] = u[slot] + val * t;
            }
        }
        for (ui, &mi) in u.iter_mut().zip(&mean) {
            *ui = *ui - mi * t_sum;
        }
        if normalize(&mut u).is_none() {
            return None;
        }
        v = u;
    }
    Some(v)
}

fn normalize<F: Scalar>(v: &mut [F]) -> Option<()> {
    let n = crate::linalg::norm2(v);
    if n <= F::cast(1e-300) || !n.is_finite() {
        return None;
    }
    for x in v.iter_mut() {
        *x = *x / n;
    }
    Some(())
}

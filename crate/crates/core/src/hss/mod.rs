//! Hierarchically semi-separable representation of the (permuted) kernel
//! matrix, with nested interpolative bases.
//!
//! Leaves store their exact dense diagonal block. Every non-root node
//! carries a row generator in interpolative form: an interpolation matrix
//! plus the global ids of its selected pivot rows. A parent's generator is
//! expressed over the stacked pivot rows of its children, which is what
//! makes the bases nested. Sibling interaction is a small coupling block of
//! exact kernel entries between the two pivot sets, so the represented
//! operator is symmetric by construction.

mod compress;
mod io;
mod ulv;

pub use compress::{compress, CompressionConfig};
pub use io::{read_hss, write_hss};
pub use ulv::{factor_shifted, ShiftedFactorization};

use crate::cluster::ClusterTree;
use crate::error::{Error, Result};
use crate::instrument;
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Truncation record for one node's generator.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeAudit {
    pub rank: usize,
    /// First discarded singular value of the sampled block (0 if none).
    pub sigma_next: f64,
    /// `max(abs_tol, rel_tol * sigma_1)` at build time.
    pub threshold: f64,
    /// Rank cap was hit while the tolerance was still unmet.
    pub rank_capped: bool,
    /// Number of probe columns the generator was built from.
    pub sampled_cols: usize,
    /// All complement columns were evaluated (no sampling).
    pub full_block: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HssNode<F> {
    /// Exact diagonal block (leaves only).
    pub(crate) diag: Option<Mat<F>>,
    /// Leaf: `m x r` interpolation onto pivot rows. Internal: translation
    /// from the stacked child pivot rows (`(r1+r2) x r`). Root: `0 x 0`.
    pub(crate) interp: Mat<F>,
    /// Global (permuted-order) ids of the selected pivot rows.
    pub(crate) pivots: Vec<usize>,
    /// Coupling between the two children's pivot sets (`r1 x r2`);
    /// internal nodes and the root.
    pub(crate) coupling: Option<Mat<F>>,
    pub(crate) audit: Option<NodeAudit>,
}

impl<F: Scalar> HssNode<F> {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn audit(&self) -> Option<&NodeAudit> {
        self.audit.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct HssMatrix<F> {
    pub(crate) tree: ClusterTree,
    pub(crate) nodes: Vec<HssNode<F>>,
    pub(crate) d: usize,
    pub(crate) hss_rank: usize,
    pub(crate) memory_bytes: usize,
    pub(crate) compress_seconds: f64,
}

impl<F: Scalar> PartialEq for HssMatrix<F> {
    /// Structural equality of the represented operator; build timing is
    /// excluded.
    fn eq(&self, other: &Self) -> bool {
        self.tree == other.tree
            && self.nodes == other.nodes
            && self.d == other.d
            && self.hss_rank == other.hss_rank
            && self.memory_bytes == other.memory_bytes
    }
}

impl<F: Scalar> HssMatrix<F> {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn tree(&self) -> &ClusterTree {
        &self.tree
    }

    pub fn node(&self, id: usize) -> &HssNode<F> {
        &self.nodes[id]
    }

    /// Maximum rank over all off-diagonal generators.
    pub fn hss_rank(&self) -> usize {
        self.hss_rank
    }

    /// Accounted storage footprint of the representation.
    pub fn memory_bytes(&self) -> usize {
        self.memory_bytes
    }

    pub fn compress_seconds(&self) -> f64 {
        self.compress_seconds
    }

    /// Truncation audits for all nodes that carry a generator.
    pub fn audits(&self) -> impl Iterator<Item = (usize, &NodeAudit)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(id, n)| n.audit.as_ref().map(|a| (id, a)))
    }

    /// `K~ v` in the permuted ordering.
    pub fn matvec(&self, v: &[F]) -> Result<Vec<F>> {
        if v.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: v.len(),
            });
        }
        let n_nodes = self.nodes.len();
        // up sweep: q[node] = U_node^T v restricted to the node's range
        let mut q: Vec<Vec<F>> = vec![Vec::new(); n_nodes];
        for id in self.tree.postorder() {
            let node = self.tree.node(id);
            let h = &self.nodes[id];
            if h.interp.cols() == 0 {
                continue;
            }
            if node.is_leaf() {
                q[id] = h.interp.matvec_t(&v[node.lo..node.hi]);
            } else {
                let (c1, c2) = (node.left.unwrap(), node.right.unwrap());
                let stacked = concat(&q[c1], &q[c2]);
                q[id] = h.interp.matvec_t(&stacked);
            }
        }
        // down sweep: f[node] = incoming coefficients from outside the node
        let mut y = vec![F::zero(); self.d];
        let mut f: Vec<Vec<F>> = vec![Vec::new(); n_nodes];
        let mut stack = vec![self.tree.root()];
        while let Some(id) = stack.pop() {
            let node = self.tree.node(id);
            let h = &self.nodes[id];
            if node.is_leaf() {
                let local = &v[node.lo..node.hi];
                let mut out = h
                    .diag
                    .as_ref()
                    .expect("leaf stores its diagonal block")
                    .matvec(local);
                if !f[id].is_empty() {
                    let add = h.interp.matvec(&f[id]);
                    for (o, a) in out.iter_mut().zip(add) {
                        *o = *o + a;
                    }
                }
                y[node.lo..node.hi].copy_from_slice(&out);
                continue;
            }
            let (c1, c2) = (node.left.unwrap(), node.right.unwrap());
            let (r1, r2) = (self.nodes[c1].rank(), self.nodes[c2].rank());
            let g = if f[id].is_empty() {
                vec![F::zero(); r1 + r2]
            } else {
                h.interp.matvec(&f[id])
            };
            let b = h.coupling.as_ref().expect("internal node has coupling");
            let mut f1 = g[..r1].to_vec();
            let mut f2 = g[r1..].to_vec();
            if r1 > 0 && r2 > 0 {
                for (fi, bi) in f1.iter_mut().zip(b.matvec(&q[c2])) {
                    *fi = *fi + bi;
                }
                for (fi, bi) in f2.iter_mut().zip(b.matvec_t(&q[c1])) {
                    *fi = *fi + bi;
                }
            }
            f[c1] = f1;
            f[c2] = f2;
            stack.push(c2);
            stack.push(c1);
        }
        Ok(y)
    }

    /// Materialize the represented operator column by column; capped
    /// reference path for tests and small problems.
    pub fn assemble_dense(&self, cap: usize) -> Result<Mat<F>> {
        if self.d > cap {
            return Err(Error::OracleCap { d: self.d, cap });
        }
        instrument::ORACLE_CALLS.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let mut out = Mat::zeros(self.d, self.d);
        let mut e = vec![F::zero(); self.d];
        for j in 0..self.d {
            e[j] = F::one();
            let col = self.matvec(&e)?;
            e[j] = F::zero();
            for i in 0..self.d {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }
}

fn concat<F: Scalar>(a: &[F], b: &[F]) -> Vec<F> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

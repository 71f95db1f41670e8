//! Bottom-up compression against a kernel element accessor.
//!
//! Each node's off-diagonal block row is probed at a seeded random subset of
//! complement columns (all of them when the complement is small), the
//! truncation rank is chosen from the probe's singular values under the
//! `max(abs_tol, rel_tol * sigma_1)` rule capped at `max_rank`, and the row
//! generator is a rank-`k` interpolative decomposition of the probe. Parents
//! probe only their children's pivot rows, so cost stays near-linear in `d`
//! for bounded rank, and the full kernel matrix is never materialized.

use std::time::Instant;

use crate::cluster::ClusterTree;
use crate::error::{Error, Result};
use crate::instrument;
use crate::kernel::KernelAccessor;
use crate::linalg::{row_interp_decomp, singular_values, Mat};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

use super::{HssMatrix, HssNode, NodeAudit};

#[derive(Debug, Clone, Copy)]
pub struct CompressionConfig<F> {
    pub rel_tol: F,
    pub abs_tol: F,
    pub max_rank: usize,
    pub seed: u64,
}

impl<F: Scalar> CompressionConfig<F> {
    fn validate(&self, d: usize) -> Result<()> {
        if self.rel_tol < F::zero() || self.abs_tol < F::zero() {
            return Err(Error::Validation("tolerances must be >= 0".into()));
        }
        if self.max_rank == 0 {
            return Err(Error::Validation("max_rank must be positive".into()));
        }
        let unbounded = self.max_rank >= d;
        if self.rel_tol == F::zero()
            && self.abs_tol == F::zero()
            && unbounded
            && d > crate::kernel::DEFAULT_ORACLE_CAP
        {
            return Err(Error::Validation(
                "zero tolerances with an unbounded rank cap would devolve to a dense \
                 factorization on this problem size"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Number of probe columns drawn per node.
    fn probe_columns(&self) -> usize {
        self.max_rank.saturating_mul(2).saturating_add(10)
    }

    /// Complement sizes up to this are evaluated in full.
    fn full_block_threshold(&self) -> usize {
        self.max_rank.saturating_mul(3)
    }
}

/// Compress the operator served by `acc` over the block hierarchy of `tree`.
/// Deterministic for a fixed seed.
pub fn compress<F: Scalar>(
    acc: &KernelAccessor<'_, F>,
    tree: &ClusterTree,
    cfg: &CompressionConfig<F>,
) -> Result<HssMatrix<F>> {
    let d = acc.len();
    if tree.len_points() != d {
        return Err(Error::Dimension {
            expected: d,
            got: tree.len_points(),
        });
    }
    cfg.validate(d)?;
    let start = Instant::now();
    let mut nodes: Vec<Option<HssNode<F>>> = vec![None; tree.num_nodes()];
    for id in tree.postorder() {
        let node = tree.node(id);
        let is_root = id == tree.root();
        // rows the generator acts on: the leaf's own range, or the stacked
        // pivot rows of the children
        let rows: Vec<usize> = if node.is_leaf() {
            (node.lo..node.hi).collect()
        } else {
            let c1 = nodes[node.left.unwrap()].as_ref().unwrap();
            let c2 = nodes[node.right.unwrap()].as_ref().unwrap();
            c1.pivots.iter().chain(&c2.pivots).copied().collect()
        };
        let diag = if node.is_leaf() {
            Some(acc.eval_block(&rows, &rows)?)
        } else {
            None
        };
        let coupling = if node.is_leaf() {
            None
        } else {
            let c1 = nodes[node.left.unwrap()].as_ref().unwrap();
            let c2 = nodes[node.right.unwrap()].as_ref().unwrap();
            Some(acc.eval_block(&c1.pivots, &c2.pivots)?)
        };
        let (interp, pivots, audit) = if is_root {
            (Mat::zeros(0, 0), Vec::new(), None)
        } else {
            let (interp, local_pivots, audit) = build_generator(acc, cfg, id, node.lo, node.hi, &rows)?;
            let pivots = local_pivots.iter().map(|&l| rows[l]).collect();
            (interp, pivots, Some(audit))
        };
        nodes[id] = Some(HssNode {
            diag,
            interp,
            pivots,
            coupling,
            audit,
        });
    }
    let nodes: Vec<HssNode<F>> = nodes.into_iter().map(|n| n.unwrap()).collect();
    let hss_rank = nodes.iter().map(|n| n.rank()).max().unwrap_or(0);
    let memory_bytes = account_memory(tree, &nodes);
    instrument::COMPRESSIONS.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    Ok(HssMatrix {
        tree: tree.clone(),
        nodes,
        d,
        hss_rank,
        memory_bytes,
        compress_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Probe the block row `K[rows, complement]`, pick the truncation rank, and
/// return `(interp, local pivot ids, audit)`.
fn build_generator<F: Scalar>(
    acc: &KernelAccessor<'_, F>,
    cfg: &CompressionConfig<F>,
    node_id: usize,
    lo: usize,
    hi: usize,
    rows: &[usize],
) -> Result<(Mat<F>, Vec<usize>, NodeAudit)> {
    let d = acc.len();
    let n_complement = d - (hi - lo);
    let (cols, full_block) = if n_complement <= cfg.full_block_threshold() {
        let cols: Vec<usize> = (0..lo).chain(hi..d).collect();
        (cols, true)
    } else {
        let complement: Vec<usize> = (0..lo).chain(hi..d).collect();
        let omega = cfg.probe_columns().min(n_complement);
        let mut rng = SplitMix64::substream(cfg.seed, node_id as u64);
        (rng.sample_distinct(&complement, omega), false)
    };
    let probe = acc.eval_block(rows, &cols)?;
    let sv = singular_values(&probe);
    let sigma1 = sv.first().copied().unwrap_or(F::zero());
    let threshold = cfg.abs_tol.max(cfg.rel_tol * sigma1);
    let k_tol = sv.iter().take_while(|&&s| s > threshold).count();
    let k = k_tol.min(cfg.max_rank).min(rows.len()).min(cols.len());
    let rank_capped = k < k_tol;
    let (local_pivots, interp) = row_interp_decomp(&probe, k);
    let sigma_next = sv.get(k).copied().unwrap_or(F::zero());
    Ok((
        interp,
        local_pivots,
        NodeAudit {
            rank: k,
            sigma_next: sigma_next.as_f64(),
            threshold: threshold.as_f64(),
            rank_capped,
            sampled_cols: cols.len(),
            full_block,
        },
    ))
}

fn account_memory<F: Scalar>(tree: &ClusterTree, nodes: &[HssNode<F>]) -> usize {
    let fsize = std::mem::size_of::<F>();
    let mut total = tree.num_nodes() * (std::mem::size_of::<crate::cluster::ClusterNode>() + 64);
    for n in nodes {
        if let Some(d) = &n.diag {
            total += d.rows() * d.cols() * fsize;
        }
        total += n.interp.rows() * n.interp.cols() * fsize;
        if let Some(b) = &n.coupling {
            total += b.rows() * b.cols() * fsize;
        }
        total += n.pivots.len() * std::mem::size_of::<usize>();
    }
    total
}

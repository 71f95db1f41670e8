//! ULV-style factorization of the shifted operator `K~ + beta I` and the
//! associated direct solver.
//!
//! At each non-root node the row generator is triangularized by an
//! orthogonal transform, so all but `rank` of the node's variables decouple
//! from the rest of the matrix and are eliminated locally; the surviving
//! variables cascade upward as a Schur complement that merges with the
//! sibling through the coupling block. The root's merged block is factored
//! densely. The shift enters through the leaf diagonal blocks only, and no
//! dense `d x d` matrix is ever formed.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::instrument;
use crate::linalg::{householder_qr, lu_factor, Householder, LuFactors, Mat};
use crate::scalar::Scalar;

use super::HssMatrix;

#[derive(Debug, Clone)]
struct UlvNode<F> {
    q: Householder<F>,
    keep: usize,
    elim: usize,
    a12: Mat<F>,
    a22_lu: LuFactors<F>,
    a22inv_a21: Mat<F>,
}

#[derive(Debug)]
pub struct ShiftedFactorization<'a, F> {
    hss: &'a HssMatrix<F>,
    beta: F,
    nodes: Vec<Option<UlvNode<F>>>,
    root_lu: LuFactors<F>,
    factor_seconds: f64,
}

impl<'a, F: Scalar> ShiftedFactorization<'a, F> {
    pub fn beta(&self) -> F {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.hss.dim()
    }

    pub fn matrix(&self) -> &HssMatrix<F> {
        self.hss
    }

    pub fn factor_seconds(&self) -> f64 {
        self.factor_seconds
    }

    /// Solve `(K~ + beta I) x = b`. Deterministic: repeated calls are
    /// bitwise identical. Safe to call concurrently.
    pub fn solve(&self, b: &[F]) -> Result<Vec<F>> {
        let d = self.hss.dim();
        if b.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: b.len(),
            });
        }
        let tree = self.hss.tree();
        let n_nodes = tree.num_nodes();
        let mut reduced_rhs: Vec<Vec<F>> = vec![Vec::new(); n_nodes];
        let mut elim_part: Vec<Vec<F>> = vec![Vec::new(); n_nodes];
        // upward sweep: transform, eliminate, reduce
        let mut root_rhs = Vec::new();
        for id in tree.postorder() {
            let node = tree.node(id);
            let local: Vec<F> = if node.is_leaf() {
                b[node.lo..node.hi].to_vec()
            } else {
                let (c1, c2) = (node.left.unwrap(), node.right.unwrap());
                let mut v = std::mem::take(&mut reduced_rhs[c1]);
                v.extend_from_slice(&reduced_rhs[c2]);
                reduced_rhs[c2] = Vec::new();
                v
            };
            if id == tree.root() {
                root_rhs = local;
                continue;
            }
            let f = self.nodes[id].as_ref().expect("factored node");
            let mut t = local;
            f.q.apply_qt_vec(&mut t);
            let beta2 = t.split_off(f.keep);
            let beta1 = t;
            let w2 = f.a22_lu.solve(&beta2);
            let mut bhat = beta1;
            if f.elim > 0 && f.keep > 0 {
                let corr = f.a12.matvec(&w2);
                for (bi, ci) in bhat.iter_mut().zip(corr) {
                    *bi = *bi - ci;
                }
            }
            elim_part[id] = w2;
            reduced_rhs[id] = bhat;
        }
        let root_sol = self.root_lu.solve(&root_rhs);
        // downward sweep: expand kept coordinates back to eliminated ones
        let mut x = vec![F::zero(); d];
        let mut kept: Vec<Vec<F>> = vec![Vec::new(); n_nodes];
        let root = tree.root();
        let mut stack: Vec<usize> = Vec::new();
        if tree.node(root).is_leaf() {
            // single-leaf tree: the root block was solved densely
            let node = tree.node(root);
            x[node.lo..node.hi].copy_from_slice(&root_sol);
        } else {
            let (c1, c2) = (tree.node(root).left.unwrap(), tree.node(root).right.unwrap());
            let r1 = self.hss.node(c1).rank();
            kept[c1] = root_sol[..r1].to_vec();
            kept[c2] = root_sol[r1..].to_vec();
            stack.push(c2);
            stack.push(c1);
        }
        while let Some(id) = stack.pop() {
            let node = tree.node(id);
            let f = self.nodes[id].as_ref().expect("factored node");
            let x1 = std::mem::take(&mut kept[id]);
            let w2 = std::mem::take(&mut elim_part[id]);
            let x2 = if f.elim == 0 {
                Vec::new()
            } else if f.keep == 0 {
                w2
            } else {
                let corr = f.a22inv_a21.matvec(&x1);
                w2.iter().zip(corr).map(|(&w, c)| w - c).collect()
            };
            let mut xt = x1;
            xt.extend_from_slice(&x2);
            f.q.apply_q_vec(&mut xt);
            if node.is_leaf() {
                x[node.lo..node.hi].copy_from_slice(&xt);
            } else {
                let (c1, c2) = (node.left.unwrap(), node.right.unwrap());
                let r1 = self.hss.node(c1).rank();
                kept[c1] = xt[..r1].to_vec();
                kept[c2] = xt[r1..].to_vec();
                stack.push(c2);
                stack.push(c1);
            }
        }
        Ok(x)
    }
}

/// Factor `K~ + beta I` once; the result supports repeated solves.
pub fn factor_shifted<F: Scalar>(
    hss: &HssMatrix<F>,
    beta: F,
) -> Result<ShiftedFactorization<'_, F>> {
    if !(beta > F::zero()) || !beta.is_finite() {
        return Err(Error::Validation(format!("shift beta={beta} must be > 0")));
    }
    let start = Instant::now();
    let tree = hss.tree();
    let mut nodes: Vec<Option<UlvNode<F>>> = vec![None; tree.num_nodes()];
    // (schur, ru) pending per node until the parent consumes them
    let mut pending: Vec<Option<(Mat<F>, Mat<F>)>> = vec![None; tree.num_nodes()];
    let mut root_lu = None;
    for id in tree.postorder() {
        let node = tree.node(id);
        let h = hss.node(id);
        let (block, basis) = if node.is_leaf() {
            let mut a = h.diag.clone().expect("leaf diagonal");
            for i in 0..a.rows() {
                a[(i, i)] = a[(i, i)] + beta;
            }
            (a, h.interp.clone())
        } else {
            let (c1, c2) = (node.left.unwrap(), node.right.unwrap());
            let (s1, r1m) = pending[c1].take().expect("child factored");
            let (s2, r2m) = pending[c2].take().expect("child factored");
            let (r1, r2) = (s1.rows(), s2.rows());
            let b = h.coupling.as_ref().expect("internal coupling");
            // off-diagonal in the transformed child coordinates
            let coup = r1m.matmul(&b.matmul_nt(&r2m)); // R1 B R2^T
            let mut a = Mat::zeros(r1 + r2, r1 + r2);
            a.set_block(0, 0, &s1);
            a.set_block(r1, r1, &s2);
            a.set_block(0, r1, &coup);
            a.set_block(r1, 0, &coup.transposed());
            let basis = if id == tree.root() {
                Mat::zeros(0, 0)
            } else {
                // U_p in transformed child coordinates: diag(R1, R2) * X_p
                let top = h.interp.block(0, r1, 0, h.interp.cols());
                let bot = h.interp.block(r1, r1 + r2, 0, h.interp.cols());
                let mut u = Mat::zeros(r1 + r2, h.interp.cols());
                u.set_block(0, 0, &r1m.matmul(&top));
                u.set_block(r1, 0, &r2m.matmul(&bot));
                u
            };
            (a, basis)
        };
        if id == tree.root() {
            root_lu = Some(lu_factor(&block).map_err(|e| Error::Breakdown {
                node: id,
                msg: e.to_string(),
            })?);
            continue;
        }
        let m = block.rows();
        let keep = h.rank();
        debug_assert_eq!(basis.cols(), keep);
        let q = householder_qr(&basis);
        // transformed block: Q^T A Q
        let mut at = block;
        q.apply_qt_left(&mut at);
        q.apply_q_right(&mut at);
        let elim = m - keep;
        let a11 = at.block(0, keep, 0, keep);
        let a12 = at.block(0, keep, keep, m);
        let a21 = at.block(keep, m, 0, keep);
        let a22 = at.block(keep, m, keep, m);
        let a22_lu = lu_factor(&a22).map_err(|e| Error::Breakdown {
            node: id,
            msg: e.to_string(),
        })?;
        let a22inv_a21 = a22_lu.solve_mat(&a21);
        let schur = if elim == 0 {
            a11
        } else {
            a11.sub(&a12.matmul(&a22inv_a21))
        };
        pending[id] = Some((schur, q.r_factor().clone()));
        nodes[id] = Some(UlvNode {
            q,
            keep,
            elim,
            a12,
            a22_lu,
            a22inv_a21,
        });
    }
    instrument::FACTORIZATIONS.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    Ok(ShiftedFactorization {
        hss,
        beta,
        nodes,
        root_lu: root_lu.expect("root factored"),
        factor_seconds: start.elapsed().as_secs_f64(),
    })
}

//! Versioned binary container for a compressed operator. Little-endian,
//! magic `HSS1`; generator payloads are stored as f64. Written by the CLI's
//! `compress --out` and readable back for inspection or reuse.

use std::io::{Read, Write};

use crate::cluster::{ClusterNode, ClusterTree};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

use super::{HssMatrix, HssNode, NodeAudit};

const MAGIC: &[u8; 4] = b"HSS1";
const VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_i64<W: Write>(w: &mut W, v: i64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_i64<R: Read>(r: &mut R) -> Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn put_mat<F: Scalar, W: Write>(w: &mut W, m: &Mat<F>) -> Result<()> {
    put_u64(w, m.rows() as u64)?;
    put_u64(w, m.cols() as u64)?;
    for &v in m.data() {
        put_f64(w, v.as_f64())?;
    }
    Ok(())
}

fn get_mat<F: Scalar, R: Read>(r: &mut R) -> Result<Mat<F>> {
    let rows = get_u64(r)? as usize;
    let cols = get_u64(r)? as usize;
    if rows.saturating_mul(cols) > (1 << 34) {
        return Err(Error::Model("implausible matrix size in container".into()));
    }
    let mut vals = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        vals.push(F::cast(get_f64(r)?));
    }
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = vals[i * cols + j];
        }
    }
    Ok(m)
}

pub fn write_hss<F: Scalar, W: Write>(m: &HssMatrix<F>, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u64(w, m.d as u64)?;
    put_u32(w, m.tree.leaf_size() as u32)?;
    put_u32(w, m.hss_rank as u32)?;
    put_u64(w, m.memory_bytes as u64)?;
    put_f64(w, m.compress_seconds)?;
    put_u64(w, m.tree.num_nodes() as u64)?;
    for (tn, hn) in m.tree.nodes().iter().zip(&m.nodes) {
        put_u64(w, tn.lo as u64)?;
        put_u64(w, tn.hi as u64)?;
        put_i64(w, tn.left.map_or(-1, |v| v as i64))?;
        put_i64(w, tn.right.map_or(-1, |v| v as i64))?;
        put_u32(w, hn.rank() as u32)?;
        let mut flags = 0u8;
        if hn.diag.is_some() {
            flags |= 1;
        }
        if hn.coupling.is_some() {
            flags |= 2;
        }
        if hn.audit.is_some() {
            flags |= 4;
        }
        w.write_all(&[flags])?;
    }
    for hn in &m.nodes {
        if let Some(d) = &hn.diag {
            put_mat(w, d)?;
        }
        put_mat(w, &hn.interp)?;
        put_u64(w, hn.pivots.len() as u64)?;
        for &p in &hn.pivots {
            put_u64(w, p as u64)?;
        }
        if let Some(b) = &hn.coupling {
            put_mat(w, b)?;
        }
        if let Some(a) = &hn.audit {
            put_f64(w, a.sigma_next)?;
            put_f64(w, a.threshold)?;
            w.write_all(&[a.rank_capped as u8, a.full_block as u8])?;
            put_u64(w, a.sampled_cols as u64)?;
        }
    }
    Ok(())
}

pub fn read_hss<F: Scalar, R: Read>(r: &mut R) -> Result<HssMatrix<F>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Model("bad magic, not an HSS1 container".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Model(format!("unsupported HSS1 version {version}")));
    }
    let d = get_u64(r)? as usize;
    let leaf_size = get_u32(r)? as usize;
    let hss_rank = get_u32(r)? as usize;
    let memory_bytes = get_u64(r)? as usize;
    let compress_seconds = get_f64(r)?;
    let num_nodes = get_u64(r)? as usize;
    if num_nodes == 0 || num_nodes > 4 * d + 4 {
        return Err(Error::Model("implausible node count".into()));
    }
    let mut tree_nodes = Vec::with_capacity(num_nodes);
    let mut ranks = Vec::with_capacity(num_nodes);
    let mut flags = Vec::with_capacity(num_nodes);
    for _ in 0..num_nodes {
        let lo = get_u64(r)? as usize;
        let hi = get_u64(r)? as usize;
        let left = get_i64(r)?;
        let right = get_i64(r)?;
        tree_nodes.push(ClusterNode {
            lo,
            hi,
            left: (left >= 0).then_some(left as usize),
            right: (right >= 0).then_some(right as usize),
        });
        ranks.push(get_u32(r)? as usize);
        let mut fl = [0u8; 1];
        r.read_exact(&mut fl)?;
        flags.push(fl[0]);
    }
    let tree = ClusterTree::from_nodes(tree_nodes, d, leaf_size)?;
    let mut nodes = Vec::with_capacity(num_nodes);
    for i in 0..num_nodes {
        let diag = if flags[i] & 1 != 0 {
            Some(get_mat::<F, _>(r)?)
        } else {
            None
        };
        let interp = get_mat::<F, _>(r)?;
        let npiv = get_u64(r)? as usize;
        if npiv != ranks[i] {
            return Err(Error::Model(format!(
                "pivot count {npiv} disagrees with rank {}",
                ranks[i]
            )));
        }
        let mut pivots = Vec::with_capacity(npiv);
        for _ in 0..npiv {
            let p = get_u64(r)? as usize;
            if p >= d {
                return Err(Error::Model(format!("pivot {p} out of range")));
            }
            pivots.push(p);
        }
        let coupling = if flags[i] & 2 != 0 {
            Some(get_mat::<F, _>(r)?)
        } else {
            None
        };
        let audit = if flags[i] & 4 != 0 {
            let sigma_next = get_f64(r)?;
            let threshold = get_f64(r)?;
            let mut b = [0u8; 2];
            r.read_exact(&mut b)?;
            let sampled_cols = get_u64(r)? as usize;
            Some(NodeAudit {
                rank: npiv,
                sigma_next,
                threshold,
                rank_capped: b[0] != 0,
                sampled_cols,
                full_block: b[1] != 0,
            })
        } else {
            None
        };
        nodes.push(HssNode {
            diag,
            interp,
            pivots,
            coupling,
            audit,
        });
    }
    Ok(HssMatrix {
        tree,
        nodes,
        d,
        hss_rank,
        memory_bytes,
        compress_seconds,
    })
}

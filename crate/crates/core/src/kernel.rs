//! Gaussian kernel evaluation: entrywise, blockwise, and (capped) dense
//! assembly. Squared distances go through precomputed per-point norms plus a
//! sparse dot product, with the negative rounding residue clamped at zero so
//! kernel values never exceed one.

use crate::dataset::{Dataset, SparseVector};
use crate::error::{Error, Result};
use crate::instrument;
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Default refusal threshold for dense kernel assembly.
pub const DEFAULT_ORACLE_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
}

/// Kernel family plus bandwidth `h > 0`:
/// `K(a, b) = exp(-||a - b||^2 / (2 h^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<F> {
    pub family: KernelFamily,
    pub h: F,
}

impl<F: Scalar> KernelSpec<F> {
    pub fn gaussian(h: F) -> Result<Self> {
        if !(h > F::zero()) || !h.is_finite() {
            return Err(Error::Validation(format!("bandwidth h={h} must be > 0")));
        }
        Ok(KernelSpec {
            family: KernelFamily::Gaussian,
            h,
        })
    }

    #[inline]
    fn gamma(&self) -> F {
        // 1 / (2 h^2)
        F::one() / (F::cast(2.0) * self.h * self.h)
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub fn from_dist_sq(&self, dist_sq: F) -> F {
        (-self.gamma() * dist_sq).exp()
    }

    /// Entrywise evaluation on two sparse vectors.
    pub fn eval(&self, a: &SparseVector<F>, b: &SparseVector<F>) -> F {
        let d2 = a.norm_sq() + b.norm_sq() - F::cast(2.0) * a.dot(b);
        self.from_dist_sq(d2.max(F::zero()))
    }
}

/// Element/block accessor over a fixed dataset, with per-point squared
/// norms precomputed. Stateless after construction; safe for concurrent
/// reads.
#[derive(Debug, Clone)]
pub struct KernelAccessor<'a, F> {
    spec: KernelSpec<F>,
    ds: &'a Dataset<F>,
    norms_sq: Vec<F>,
}

impl<'a, F: Scalar> KernelAccessor<'a, F> {
    pub fn new(spec: KernelSpec<F>, ds: &'a Dataset<F>) -> Self {
        let norms_sq = ds.points().iter().map(|p| p.norm_sq()).collect();
        KernelAccessor { spec, ds, norms_sq }
    }

    pub fn len(&self) -> usize {
        self.ds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ds.is_empty()
    }

    pub fn spec(&self) -> &KernelSpec<F> {
        &self.spec
    }

    pub fn dataset(&self) -> &Dataset<F> {
        self.ds
    }

    /// `K[i, j]`, exactly one on the diagonal.
    #[inline]
    pub fn eval_idx(&self, i: usize, j: usize) -> F {
        if i == j {
            return F::one();
        }
        let d2 = self.norms_sq[i] + self.norms_sq[j]
            - F::cast(2.0) * self.ds.point(i).dot(self.ds.point(j));
        self.spec.from_dist_sq(d2.max(F::zero()))
    }

    /// Dense block `K[rows, cols]`.
    pub fn eval_block(&self, rows: &[usize], cols: &[usize]) -> Result<Mat<F>> {
        let d = self.len();
        if let Some(&bad) = rows.iter().chain(cols).find(|&&i| i >= d) {
            return Err(Error::Validation(format!(
                "index {bad} out of range for d={d}"
            )));
        }
        Ok(Mat::from_fn(rows.len(), cols.len(), |a, b| {
            self.eval_idx(rows[a], cols[b])
        }))
    }
}

/// Full dense kernel matrix; refuses above `cap` to prevent accidental
/// quadratic blowups. Reference/oracle use only.
pub fn dense_kernel_capped<F: Scalar>(
    spec: &KernelSpec<F>,
    ds: &Dataset<F>,
    cap: usize,
) -> Result<Mat<F>> {
    let d = ds.len();
    if d > cap {
        return Err(Error::OracleCap { d, cap });
    }
    instrument::DENSE_KERNEL_CALLS.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let acc = KernelAccessor::new(*spec, ds);
    let mut k = Mat::zeros(d, d);
    for i in 0..d {
        k[(i, i)] = F::one();
        for j in i + 1..d {
            let v = acc.eval_idx(i, j);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// [`dense_kernel_capped`] at the default cap of 4096.
pub fn dense_kernel<F: Scalar>(spec: &KernelSpec<F>, ds: &Dataset<F>) -> Result<Mat<F>> {
    dense_kernel_capped(spec, ds, DEFAULT_ORACLE_CAP)
}

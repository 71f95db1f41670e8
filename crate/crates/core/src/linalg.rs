//! Small dense linear algebra kernels used by the structured solver and the
//! dense reference paths: row-major matrices, LU and Cholesky factorizations,
//! Householder QR (with and without column pivoting) and a cyclic Jacobi
//! eigensolver. Everything is generic over [`Scalar`] and sized for blocks
//! (leaf diagonals, generator panels), not for large global matrices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn transposed(&self) -> Mat<F> {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * x`
    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![F::zero(); self.rows];
        for i in 0..self.rows {
            y[i] = dot(self.row(i), x);
        }
        y
    }

    /// `self^T * x`
    pub fn matvec_t(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![F::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi != F::zero() {
                for (yj, &aij) in y.iter_mut().zip(self.row(i)) {
                    *yj = *yj + xi * aij;
                }
            }
        }
        y
    }

    /// `self * other`
    pub fn matmul(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik != F::zero() {
                    let orow = other.row(k);
                    let out_row = out.row_mut(i);
                    for (o, &b) in out_row.iter_mut().zip(orow) {
                        *o = *o + aik * b;
                    }
                }
            }
        }
        out
    }

    /// `self^T * other`
    pub fn matmul_tn(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.rows, other.rows);
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for i in 0..self.cols {
                let aki = arow[i];
                if aki != F::zero() {
                    let out_row = out.row_mut(i);
                    for (o, &b) in out_row.iter_mut().zip(brow) {
                        *o = *o + aki * b;
                    }
                }
            }
        }
        out
    }

    /// `self * other^T`
    pub fn matmul_nt(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, other.cols);
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out[(i, j)] = dot(self.row(i), other.row(j));
            }
        }
        out
    }

    pub fn scale(&mut self, s: F) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    pub fn add_assign(&mut self, other: &Mat<F>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn sub(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> F {
        self.data
            .iter()
            .map(|&v| v * v)
            .fold(F::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn max_abs(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |a, &b| if b.abs() > a { b.abs() } else { a })
    }

    /// Copy of the sub-block `[r0, r1) x [c0, c1)`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Mat<F> {
        let mut out = Mat::zeros(r1 - r0, c1 - c0);
        for i in r0..r1 {
            out.row_mut(i - r0)
                .copy_from_slice(&self.row(i)[c0..c1]);
        }
        out
    }

    /// Write `block` at offset `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Mat<F>) {
        for i in 0..block.rows {
            let dst = &mut self.row_mut(r0 + i)[c0..c0 + block.cols];
            dst.copy_from_slice(block.row(i));
        }
    }
}

impl<F: Scalar> std::ops::Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<F: Scalar> std::ops::IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut s = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        s = s + x * y;
    }
    s
}

pub fn norm2<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

pub fn norm_inf<F: Scalar>(a: &[F]) -> F {
    a.iter()
        .fold(F::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
}

/// `y += alpha * x`
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

// ---------------------------------------------------------------------------
// LU with partial pivoting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LuFactors<F> {
    lu: Mat<F>,
    piv: Vec<usize>,
}

impl<F: Scalar> LuFactors<F> {
    pub fn n(&self) -> usize {
        self.lu.rows()
    }

    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.n();
        assert_eq!(b.len(), n);
        let mut x: Vec<F> = self.piv.iter().map(|&p| b[p]).collect();
        // forward: L has unit diagonal
        for i in 1..n {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in 0..i {
                s = s - row[j] * x[j];
            }
            x[i] = s;
        }
        // backward
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in i + 1..n {
                s = s - row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        x
    }

    /// Solve `A X = B` column by column.
    pub fn solve_mat(&self, b: &Mat<F>) -> Mat<F> {
        let mut out = Mat::zeros(b.rows(), b.cols());
        let mut col = vec![F::zero(); b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Factor a square matrix with partial pivoting. Fails on exact singularity.
pub fn lu_factor<F: Scalar>(a: &Mat<F>) -> Result<LuFactors<F>> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == F::zero() {
            return Err(Error::Numerical(format!(
                "singular matrix in LU at column {k}"
            )));
        }
        if p != k {
            piv.swap(k, p);
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let m = lu[(i, k)] / pivot;
            lu[(i, k)] = m;
            if m != F::zero() {
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] = lu[(i, j)] - m * u;
                }
            }
        }
    }
    Ok(LuFactors { lu, piv })
}

// ---------------------------------------------------------------------------
// Cholesky
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CholFactor<F> {
    l: Mat<F>,
}

impl<F: Scalar> CholFactor<F> {
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = x[i];
            for j in 0..i {
                s = s - row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.l[(j, i)] * x[j];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<F: Scalar>(a: &Mat<F>) -> Result<CholFactor<F>> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= F::zero() {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite at pivot {i}"
                    )));
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(CholFactor { l })
}

// ---------------------------------------------------------------------------
// Householder QR
// ---------------------------------------------------------------------------

/// Compact-WY-free Householder QR of an `m x r` matrix (`r <= m`):
/// `Q^T A = [R; 0]` with `R` upper triangular `r x r`. Reflectors are kept in
/// factored form so `Q` and `Q^T` can be applied to vectors and matrices.
#[derive(Debug, Clone)]
pub struct Householder<F> {
    /// reflector vectors, column k holds v_k in rows k..m (v_k[k] = 1 implicit)
    vs: Mat<F>,
    tau: Vec<F>,
    r: Mat<F>,
    m: usize,
}

impl<F: Scalar> Householder<F> {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rank(&self) -> usize {
        self.tau.len()
    }

    /// The triangular factor (`r x r`).
    pub fn r_factor(&self) -> &Mat<F> {
        &self.r
    }

    fn apply_reflector_vec(&self, k: usize, x: &mut [F]) {
        let m = self.m;
        let tau = self.tau[k];
        if tau == F::zero() {
            return;
        }
        let mut s = x[k];
        for i in k + 1..m {
            s = s + self.vs[(i, k)] * x[i];
        }
        s = s * tau;
        x[k] = x[k] - s;
        for i in k + 1..m {
            x[i] = x[i] - s * self.vs[(i, k)];
        }
    }

    /// `x <- Q^T x`
    pub fn apply_qt_vec(&self, x: &mut [F]) {
        assert_eq!(x.len(), self.m);
        for k in 0..self.rank() {
            self.apply_reflector_vec(k, x);
        }
    }

    /// `x <- Q x`
    pub fn apply_q_vec(&self, x: &mut [F]) {
        assert_eq!(x.len(), self.m);
        for k in (0..self.rank()).rev() {
            self.apply_reflector_vec(k, x);
        }
    }

    /// `A <- Q^T A` (A is `m x c`)
    pub fn apply_qt_left(&self, a: &mut Mat<F>) {
        assert_eq!(a.rows(), self.m);
        let mut col = vec![F::zero(); self.m];
        for j in 0..a.cols() {
            for i in 0..self.m {
                col[i] = a[(i, j)];
            }
            self.apply_qt_vec(&mut col);
            for i in 0..self.m {
                a[(i, j)] = col[i];
            }
        }
    }

    /// `A <- A Q` (A is `c x m`)
    pub fn apply_q_right(&self, a: &mut Mat<F>) {
        assert_eq!(a.cols(), self.m);
        for i in 0..a.rows() {
            // (A Q)_{i,:} = ((Q^T) (A_{i,:})^T)^T
            self.apply_qt_vec(a.row_mut(i));
        }
    }
}

/// Householder QR of `a` (`m x r`, requires `r <= m`).
pub fn householder_qr<F: Scalar>(a: &Mat<F>) -> Householder<F> {
    let m = a.rows();
    let r = a.cols();
    assert!(r <= m, "householder_qr expects a tall matrix");
    let mut work = a.clone();
    let mut tau = vec![F::zero(); r];
    for k in 0..r {
        // build reflector for column k, rows k..m
        let mut normx = F::zero();
        for i in k..m {
            normx = normx + work[(i, k)] * work[(i, k)];
        }
        normx = normx.sqrt();
        if normx == F::zero() {
            tau[k] = F::zero();
            continue;
        }
        let alpha = work[(k, k)];
        let beta = if alpha >= F::zero() { -normx } else { normx };
        let v0 = alpha - beta;
        tau[k] = -v0 / beta; // tau = 2 / (v^T v) with v scaled so v[0] = 1
        let inv_v0 = F::one() / v0;
        for i in k + 1..m {
            work[(i, k)] = work[(i, k)] * inv_v0;
        }
        work[(k, k)] = beta;
        // apply to trailing columns
        for j in k + 1..r {
            let mut s = work[(k, j)];
            for i in k + 1..m {
                s = s + work[(i, k)] * work[(i, j)];
            }
            s = s * tau[k];
            work[(k, j)] = work[(k, j)] - s;
            for i in k + 1..m {
                work[(i, j)] = work[(i, j)] - s * work[(i, k)];
            }
        }
    }
    let mut rmat = Mat::zeros(r, r);
    for i in 0..r {
        for j in i..r {
            rmat[(i, j)] = work[(i, j)];
        }
    }
    Householder {
        vs: work,
        tau,
        r: rmat,
        m,
    }
}

// ---------------------------------------------------------------------------
// Row interpolative decomposition via column-pivoted QR
// ---------------------------------------------------------------------------

/// Rank-`k` row interpolative decomposition of `f` (`m x n`):
/// selects `k` rows (local indices, in pivot order) and an interpolation
/// matrix `x` (`m x k`, identity on the selected rows) with
/// `f ≈ x * f[selected rows, :]`.
pub fn row_interp_decomp<F: Scalar>(f: &Mat<F>, k: usize) -> (Vec<usize>, Mat<F>) {
    let m = f.rows();
    assert!(k <= m);
    if k == 0 {
        return (Vec::new(), Mat::zeros(m, 0));
    }
    if k == m {
        return ((0..m).collect(), Mat::identity(m));
    }
    // column-pivoted QR on f^T (n x m), truncated at k steps
    let mut g = f.transposed();
    let n = g.rows();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut colnorm: Vec<F> = (0..m)
        .map(|j| {
            let mut s = F::zero();
            for i in 0..n {
                s = s + g[(i, j)] * g[(i, j)];
            }
            s
        })
        .collect();
    let orig_norm = colnorm.clone();
    for step in 0..k {
        // pivot: remaining column with the largest norm (first on ties)
        let mut p = step;
        let mut best = colnorm[step];
        for j in step + 1..m {
            if colnorm[j] > best {
                best = colnorm[j];
                p = j;
            }
        }
        if p != step {
            perm.swap(step, p);
            colnorm.swap(step, p);
            for i in 0..n {
                let t = g[(i, step)];
                g[(i, step)] = g[(i, p)];
                g[(i, p)] = t;
            }
        }
        // Householder reflector on column `step`, rows step..n
        let mut normx = F::zero();
        for i in step..n {
            normx = normx + g[(i, step)] * g[(i, step)];
        }
        normx = normx.sqrt();
        if normx == F::zero() {
            continue;
        }
        let a0 = g[(step, step)];
        let beta = if a0 >= F::zero() { -normx } else { normx };
        let v0 = a0 - beta;
        let tau = -v0 / beta;
        let inv_v0 = F::one() / v0;
        for i in step + 1..n {
            g[(i, step)] = g[(i, step)] * inv_v0;
        }
        g[(step, step)] = beta;
        for j in step + 1..m {
            let mut s = g[(step, j)];
            for i in step + 1..n {
                s = s + g[(i, step)] * g[(i, j)];
            }
            s = s * tau;
            g[(step, j)] = g[(step, j)] - s;
            for i in step + 1..n {
                g[(i, j)] = g[(i, j)] - s * g[(i, step)];
            }
        }
        // downdate norms, recomputing when cancellation bites
        for j in step + 1..m {
            let r = g[(step, j)];
            let mut nn = colnorm[j] - r * r;
            if nn < orig_norm[j] * F::cast(1e-8) {
                nn = F::zero();
                for i in step + 1..n {
                    nn = nn + g[(i, j)] * g[(i, j)];
                }
            }
            colnorm[j] = nn;
        }
    }
    // T = R11^{-1} R12  (k x (m-k)), back substitution on the upper triangle
    let mut t = Mat::zeros(k, m - k);
    for j in 0..m - k {
        for i in (0..k).rev() {
            let mut s = g[(i, k + j)];
            for l in i + 1..k {
                s = s - g[(i, l)] * t[(l, j)];
            }
            let d = g[(i, i)];
            t[(i, j)] = if d == F::zero() { F::zero() } else { s / d };
        }
    }
    let piv = perm[..k].to_vec();
    let mut x = Mat::zeros(m, k);
    for (j, &pj) in piv.iter().enumerate() {
        x[(pj, j)] = F::one();
    }
    for (i, &pi) in perm[k..].iter().enumerate() {
        for j in 0..k {
            x[(pi, j)] = t[(j, i)];
        }
    }
    (piv, x)
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Eigenvalues (descending) and optional eigenvectors (columns) of a
/// symmetric matrix.
pub fn sym_eigen<F: Scalar>(a: &Mat<F>, want_vectors: bool) -> (Vec<F>, Option<Mat<F>>) {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    if n == 0 {
        return (Vec::new(), want_vectors.then(|| Mat::zeros(0, 0)));
    }
    let mut m = a.clone();
    let mut v = want_vectors.then(|| Mat::<F>::identity(n));
    let eps = F::epsilon();
    let fro = m.frobenius_norm();
    let tol = fro * eps * F::cast(n as f64);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = F::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= tol || off == F::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * F::cast(1e-2) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (F::cast(2.0) * apq);
                let t = {
                    let sign = if theta >= F::zero() { F::one() } else { -F::one() };
                    sign / (theta.abs() + (F::one() + theta * theta).sqrt())
                };
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = t * c;
                // rotate rows/cols p and q
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[(p, j)];
                    let mqj = m[(q, j)];
                    m[(p, j)] = c * mpj - s * mqj;
                    m[(q, j)] = s * mpj + c * mqj;
                }
                if let Some(vm) = v.as_mut() {
                    for i in 0..n {
                        let vip = vm[(i, p)];
                        let viq = vm[(i, q)];
                        vm[(i, p)] = c * vip - s * viq;
                        vm[(i, q)] = s * vip + c * viq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<F> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let vals: Vec<F> = order.iter().map(|&i| diag[i]).collect();
    let vecs = v.map(|vm| {
        let mut out = Mat::zeros(n, n);
        for (newj, &oldj) in order.iter().enumerate() {
            for i in 0..n {
                out[(i, newj)] = vm[(i, oldj)];
            }
        }
        out
    });
    (vals, vecs)
}

/// Singular values of `f` (descending), through the Gram matrix of the
/// smaller side. Adequate for rank decisions down to ~sqrt(machine eps).
pub fn singular_values<F: Scalar>(f: &Mat<F>) -> Vec<F> {
    let (m, n) = (f.rows(), f.cols());
    if m == 0 || n == 0 {
        return Vec::new();
    }
    let gram = if m <= n {
        f.matmul_nt(f)
    } else {
        f.matmul_tn(f)
    };
    let (vals, _) = sym_eigen(&gram, false);
    vals.iter()
        .map(|&v| if v > F::zero() { v.sqrt() } else { F::zero() })
        .collect()
}

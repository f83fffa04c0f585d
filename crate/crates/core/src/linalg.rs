//! Small dense complex linear algebra.
//!
//! Everything the simulator needs and nothing more: products, Hermitian
//! transposes, rank-one updates and Hermitian solves. Storage is row-major.
//! There is deliberately no `inverse`; inverse-correlation matrices are only
//! ever produced by the recursive updates in the adaptive modules.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{dim_err, Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Condition-number cap above which `solve_hermitian` refuses to answer.
pub const DEFAULT_COND_CAP: f64 = 1e13;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CVector(Vec<C64>);

impl CVector {
    pub fn zeros(len: usize) -> Self {
        CVector(vec![ZERO; len])
    }

    pub fn from_vec(v: Vec<C64>) -> Self {
        CVector(v)
    }

    pub fn from_real(v: &[f64]) -> Self {
        CVector(v.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn basis(len: usize, idx: usize) -> Self {
        let mut v = Self::zeros(len);
        v.0[idx] = ONE;
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.0.iter()
    }

    /// `selfᴴ · other`
    pub fn dot(&self, other: &CVector) -> C64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: C64) -> CVector {
        CVector(self.0.iter().map(|z| z * s).collect())
    }

    pub fn scale_mut(&mut self, s: C64) {
        self.0.iter_mut().for_each(|z| *z *= s);
    }

    pub fn conj(&self) -> CVector {
        CVector(self.0.iter().map(|z| z.conj()).collect())
    }

    /// `self += s · x`
    pub fn axpy(&mut self, s: C64, x: &CVector) {
        debug_assert_eq!(self.len(), x.len());
        self.0.iter_mut().zip(&x.0).for_each(|(y, x)| *y += s * x);
    }

    pub fn add(&self, other: &CVector) -> Result<CVector> {
        check_len("add", self, other)?;
        Ok(CVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &CVector) -> Result<CVector> {
        check_len("sub", self, other)?;
        Ok(CVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn check_len(op: &'static str, a: &CVector, b: &CVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(dim_err(op, a.len(), b.len()));
    }
    Ok(())
}

impl Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl FromIterator<C64> for CVector {
    fn from_iter<T: IntoIterator<Item = C64>>(iter: T) -> Self {
        CVector(iter.into_iter().collect())
    }
}

pub fn norm2(v: &CVector) -> f64 {
    v.norm2()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(s, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err("from_row_major", rows * cols, data.len()));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn from_columns(cols: &[CVector]) -> Result<Self> {
        let rows = cols.first().map_or(0, CVector::len);
        if let Some(bad) = cols.iter().find(|c| c.len() != rows) {
            return Err(dim_err("from_columns", rows, bad.len()));
        }
        Ok(Self::from_fn(rows, cols.len(), |r, c| cols[c][r]))
    }

    pub fn diag(d: &CVector) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for i in 0..d.len() {
            m[(i, i)] = d[i];
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [C64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> CVector {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_col(&mut self, c: usize, v: &CVector) {
        debug_assert_eq!(v.len(), self.rows);
        for r in 0..self.rows {
            self[(r, c)] = v[r];
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &CMatrix) {
        for r in 0..b.rows {
            for c in 0..b.cols {
                self[(r0 + r, c0 + c)] = b[(r, c)];
            }
        }
    }

    pub fn hermitian(&self) -> CMatrix {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> CMatrix {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_mut(&mut self, s: C64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn add(&self, other: &CMatrix) -> Result<CMatrix> {
        self.check_same("add", other)?;
        Ok(CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &CMatrix) -> Result<CMatrix> {
        self.check_same("sub", other)?;
        Ok(CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, s: C64, other: &CMatrix) -> Result<()> {
        self.check_same("add_scaled", other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += s * b);
        Ok(())
    }

    pub fn add_diag(&mut self, s: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += s;
        }
    }

    /// `self += s · u vᴴ`
    pub fn rank1_update(&mut self, s: C64, u: &CVector, v: &CVector) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for r in 0..self.rows {
            let su = s * u[r];
            let row = self.row_mut(r);
            for (x, vc) in row.iter_mut().zip(v.iter()) {
                *x += su * vc.conj();
            }
        }
    }

    pub fn mul_vec(&self, v: &CVector) -> Result<CVector> {
        if v.len() != self.cols {
            return Err(dim_err("mul_vec", self.cols, v.len()));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v.iter()).fold(ZERO, |acc, (a, b)| acc + a * b))
            .collect())
    }

    /// `selfᴴ · v` without forming the transpose.
    pub fn herm_mul_vec(&self, v: &CVector) -> Result<CVector> {
        if v.len() != self.rows {
            return Err(dim_err("herm_mul_vec", self.rows, v.len()));
        }
        let mut out = CVector::zeros(self.cols);
        for r in 0..self.rows {
            let vr = v[r];
            for (o, a) in out.as_mut_slice().iter_mut().zip(self.row(r)) {
                *o += a.conj() * vr;
            }
        }
        Ok(out)
    }

    /// `vᴴ · self · v`, real part. Meaningful for Hermitian `self`.
    pub fn quad_form(&self, v: &CVector) -> Result<f64> {
        Ok(v.dot(&self.mul_vec(v)?).re)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest entrywise distance to the Hermitian transpose.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Replace `self` by `(self + selfᴴ)/2`.
    pub fn symmetrize(&mut self) {
        for r in 0..self.rows {
            for c in r + 1..self.cols {
                let avg = 0.5 * (self[(r, c)] + self[(c, r)].conj());
                self[(r, c)] = avg;
                self[(c, r)] = avg.conj();
            }
            let d = self[(r, r)].re;
            self[(r, r)] = C64::new(d, 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_same(&self, op: &'static str, other: &CMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(dim_err(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn hermitian(a: &CMatrix) -> CMatrix {
    a.hermitian()
}

/// `A · B`
pub fn gemm(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.cols != b.rows {
        return Err(dim_err(
            "gemm",
            format!("inner dimension {}", a.cols),
            format!("inner dimension {}", b.rows),
        ));
    }
    let mut out = CMatrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for k in 0..a.cols {
            let x = a[(r, k)];
            if x == ZERO {
                continue;
            }
            let brow = b.row(k);
            let orow = out.row_mut(r);
            for (o, y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    Ok(out)
}

/// `Aᴴ · B`
pub fn gemm_hn(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.rows != b.rows {
        return Err(dim_err("gemm_hn", a.rows, b.rows));
    }
    let mut out = CMatrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let arow = a.row(k);
        let brow = b.row(k);
        for (r, x) in arow.iter().enumerate() {
            if *x == ZERO {
                continue;
            }
            let xc = x.conj();
            let orow = out.row_mut(r);
            for (o, y) in orow.iter_mut().zip(brow) {
                *o += xc * y;
            }
        }
    }
    Ok(out)
}

/// `A · Bᴴ`
pub fn gemm_nh(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.cols != b.cols {
        return Err(dim_err("gemm_nh", a.cols, b.cols));
    }
    Ok(CMatrix::from_fn(a.rows, b.rows, |r, c| {
        a.row(r)
            .iter()
            .zip(b.row(c))
            .fold(ZERO, |acc, (x, y)| acc + x * y.conj())
    }))
}

/// `u vᴴ`
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    CMatrix::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj())
}

/// Cholesky factor `A = L Lᴴ` of a Hermitian positive definite matrix.
#[derive(Clone, Debug)]
pub struct HermitianFactor {
    l: CMatrix,
    cond_estimate: f64,
}

impl HermitianFactor {
    pub fn new(a: &CMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(dim_err("cholesky", "square", format!("{}x{}", a.rows, a.cols)));
        }
        let n = a.rows;
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = d.sqrt();
            l[(j, j)] = C64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / ljj;
            }
        }
        let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
            let d = l[(i, i)].re;
            (lo.min(d), hi.max(d))
        });
        let cond_estimate = if n == 0 { 1.0 } else { (hi / lo).powi(2) };
        Ok(HermitianFactor { l, cond_estimate })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Lower bound on the 2-norm condition number from the pivot spread.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    pub fn solve_vec(&self, b: &CVector) -> Result<CVector> {
        let n = self.dim();
        if b.len() != n {
            return Err(dim_err("cholesky solve", n, b.len()));
        }
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)].re;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)].conj() * y[k];
            }
            y[i] = s / self.l[(i, i)].re;
        }
        Ok(y)
    }

    pub fn solve_mat(&self, b: &CMatrix) -> Result<CMatrix> {
        if b.rows != self.dim() {
            return Err(dim_err("cholesky solve", self.dim(), b.rows));
        }
        let mut out = CMatrix::zeros(b.rows, b.cols);
        for c in 0..b.cols {
            let x = self.solve_vec(&b.col(c))?;
            out.set_col(c, &x);
        }
        Ok(out)
    }
}

/// Solves `A x = b` for Hermitian nonsingular `A`.
///
/// Positive definite systems go through Cholesky; indefinite ones fall back
/// to LU with partial pivoting. Systems whose condition estimate exceeds
/// [`DEFAULT_COND_CAP`] are rejected.
pub fn solve_hermitian(a: &CMatrix, b: &CVector) -> Result<CVector> {
    solve_hermitian_capped(a, b, DEFAULT_COND_CAP)
}

pub fn solve_hermitian_capped(a: &CMatrix, b: &CVector, cond_cap: f64) -> Result<CVector> {
    if !a.is_square() {
        return Err(dim_err("solve_hermitian", "square", format!("{}x{}", a.rows, a.cols)));
    }
    if b.len() != a.rows {
        return Err(dim_err("solve_hermitian", a.rows, b.len()));
    }
    match HermitianFactor::new(a) {
        Ok(f) => {
            if f.cond_estimate() > cond_cap {
                return Err(Error::IllConditioned {
                    cond: f.cond_estimate(),
                });
            }
            f.solve_vec(b)
        }
        Err(Error::NotPositiveDefinite) => lu_solve(a, b, cond_cap),
        Err(e) => Err(e),
    }
}

fn lu_solve(a: &CMatrix, b: &CVector, cond_cap: f64) -> Result<CVector> {
    let n = a.rows;
    let mut m = a.clone();
    let mut x = b.clone();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..n {
        let (p, pmag) = (k..n)
            .map(|r| (r, m[(r, k)].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmag == 0.0 || !pmag.is_finite() {
            return Err(Error::IllConditioned { cond: f64::INFINITY });
        }
        lo = lo.min(pmag);
        hi = hi.max(pmag);
        if p != k {
            for c in 0..n {
                let tmp = m[(k, c)];
                m[(k, c)] = m[(p, c)];
                m[(p, c)] = tmp;
            }
            let tmp = x[k];
            x[k] = x[p];
            x[p] = tmp;
        }
        let piv = m[(k, k)];
        for r in k + 1..n {
            let f = m[(r, k)] / piv;
            if f == ZERO {
                continue;
            }
            for c in k..n {
                let v = m[(k, c)];
                m[(r, c)] -= f * v;
            }
            let xk = x[k];
            x[r] -= f * xk;
        }
    }
    let cond = hi / lo;
    if cond > cond_cap {
        return Err(Error::IllConditioned { cond });
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for c in i + 1..n {
            s -= m[(i, c)] * x[c];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

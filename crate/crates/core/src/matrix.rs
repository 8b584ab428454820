//! Dense matrices over a [`ScalarField`].
//!
//! Empty shapes are first-class: `n×0` and `0×n` matrices exist, their
//! products are zero matrices of the outer size, and direct sums with them
//! append zero rows or columns.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Scalar, ScalarField};

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
    field: ScalarField,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RevealMode {
    Exact,
    Unitary,
}

/// `left · A · right = [[0, 0], [0, core]]` with `core` a nonsingular
/// `rank×rank` block in the bottom-right corner.
#[derive(Clone, Debug)]
pub struct RankRevelation {
    pub rank: usize,
    pub left: Mat,
    pub right: Mat,
    pub core: Mat,
    pub mode: RevealMode,
}

impl Mat {
    pub fn zeros(field: ScalarField, rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![field.zero(); rows * cols], field }
    }

    pub fn identity(field: ScalarField, n: usize) -> Mat {
        let mut m = Mat::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = field.one();
        }
        m
    }

    pub fn from_fn(
        field: ScalarField,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Scalar,
    ) -> Mat {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data, field }
    }

    /// Row-major construction; every entry must belong to `field`.
    pub fn from_vec(field: ScalarField, rows: usize, cols: usize, data: Vec<Scalar>) -> Result<Mat> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|a| !field.contains(a)) {
            return Err(Error::FieldMismatch(format!("{bad:?} is not in {field}")));
        }
        Ok(Mat { rows, cols, data, field })
    }

    /// Small-integer literal matrices, mostly for tests and generators.
    pub fn from_i64(field: ScalarField, rows: usize, cols: usize, vals: &[i64]) -> Mat {
        assert_eq!(vals.len(), rows * cols, "wrong entry count");
        Mat { rows, cols, data: vals.iter().map(|&v| field.from_i64(v)).collect(), field }
    }

    pub fn scalar(field: ScalarField, a: Scalar) -> Mat {
        Mat { rows: 1, cols: 1, data: vec![a], field }
    }

    pub fn diag(field: ScalarField, entries: &[Scalar]) -> Mat {
        let n = entries.len();
        let mut m = Mat::zeros(field, n, n);
        for (i, e) in entries.iter().enumerate() {
            m.data[i * n + i] = e.clone();
        }
        m
    }

    /// Permutation matrix with `P[perm[j]][j] = 1`, i.e. column `j` of `A·P`
    /// is column `perm[j]` of `A`.
    pub fn permutation(field: ScalarField, perm: &[usize]) -> Mat {
        let n = perm.len();
        let mut m = Mat::zeros(field, n, n);
        for (j, &p) in perm.iter().enumerate() {
            m.data[p * n + j] = field.one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Scalar] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of {}x{}", self.rows, self.cols);
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Scalar) {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of {}x{}", self.rows, self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn check_field(&self, other: &Mat) -> Result<()> {
        if self.field != other.field {
            return Err(Error::FieldMismatch(format!("{} vs {}", self.field, other.field)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Mat) -> Result<Mat> {
        self.check_field(other)?;
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::ShapeMismatch(format!(
                "add {}x{} + {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f.add(a, b)).collect();
        Ok(self.with_data(data))
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Mat {
        let f = self.field;
        self.with_data(self.data.iter().map(|a| f.neg(a)).collect())
    }

    pub fn scale(&self, s: &Scalar) -> Mat {
        let f = self.field;
        self.with_data(self.data.iter().map(|a| f.mul(s, a)).collect())
    }

    fn with_data(&self, data: Vec<Scalar>) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data, field: self.field }
    }

    /// Matrix product; exact-zero entries of the left factor are skipped.
    pub fn mul(&self, other: &Mat) -> Result<Mat> {
        self.check_field(other)?;
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "mul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        if let ScalarField::Complex { .. } = f {
            return Ok(self.mul_complex(other));
        }
        let mut out = Mat::zeros(f, self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = &self.data[i * self.cols + l];
                if f.is_exact_zero(a) {
                    continue;
                }
                let one = f.is_one(a);
                for j in 0..other.cols {
                    let b = &other.data[l * other.cols + j];
                    if f.is_exact_zero(b) {
                        continue;
                    }
                    let idx = i * other.cols + j;
                    out.data[idx] = if one {
                        f.add(&out.data[idx], b)
                    } else {
                        f.add(&out.data[idx], &f.mul(a, b))
                    };
                }
            }
        }
        Ok(out)
    }

    fn mul_complex(&self, other: &Mat) -> Mat {
        let a = self.to_c64();
        let b = other.to_c64();
        let mut c = vec![Complex64::new(0.0, 0.0); self.rows * other.cols];
        for i in 0..self.rows {
            for l in 0..self.cols {
                let x = a[i * self.cols + l];
                if x.re == 0.0 && x.im == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    c[i * other.cols + j] += x * b[l * other.cols + j];
                }
            }
        }
        Mat::from_c64(self.field, self.rows, other.cols, &c)
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.field, self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// Entrywise involution.
    pub fn conj(&self) -> Mat {
        let f = self.field;
        self.with_data(self.data.iter().map(|a| f.conj(a)).collect())
    }

    /// `A*`: transpose followed by the field involution.
    pub fn conj_transpose(&self) -> Mat {
        let f = self.field;
        Mat::from_fn(f, self.cols, self.rows, |i, j| f.conj(self.get(j, i)))
    }

    /// `A ⊕ B = [[A, 0], [0, B]]`.
    pub fn direct_sum(&self, other: &Mat) -> Result<Mat> {
        self.check_field(other)?;
        let mut out = Mat::zeros(self.field, self.rows + other.rows, self.cols + other.cols);
        out.set_block(0, 0, self);
        out.set_block(self.rows, self.cols, other);
        Ok(out)
    }

    pub fn hstack(field: ScalarField, rows: usize, parts: &[&Mat]) -> Result<Mat> {
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Mat::zeros(field, rows, cols);
        let mut c0 = 0;
        for p in parts {
            if p.rows != rows {
                return Err(Error::ShapeMismatch(format!("hstack: {} rows, expected {rows}", p.rows)));
            }
            out.set_block(0, c0, p);
            c0 += p.cols;
        }
        Ok(out)
    }

    pub fn vstack(field: ScalarField, cols: usize, parts: &[&Mat]) -> Result<Mat> {
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut out = Mat::zeros(field, rows, cols);
        let mut r0 = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::ShapeMismatch(format!("vstack: {} cols, expected {cols}", p.cols)));
            }
            out.set_block(r0, 0, p);
            r0 += p.rows;
        }
        Ok(out)
    }

    /// Contiguous block `[r0, r0+nr) × [c0, c0+nc)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Mat {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "block out of range");
        Mat::from_fn(self.field, nr, nc, |i, j| self.get(r0 + i, c0 + j).clone())
    }

    /// Arbitrary row/column selection.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Mat {
        Mat::from_fn(self.field, rows.len(), cols.len(), |i, j| self.get(rows[i], cols[j]).clone())
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "set_block out of range");
        for i in 0..b.rows {
            for j in 0..b.cols {
                self.data[(r0 + i) * self.cols + c0 + j] = b.data[i * b.cols + j].clone();
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|a| self.field.is_exact_zero(a))
    }

    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| {
                (0..self.cols).all(|j| {
                    let a = self.get(i, j);
                    if i == j {
                        self.field.is_one(a)
                    } else {
                        self.field.is_exact_zero(a)
                    }
                })
            })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| self.field.abs(a)).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|a| self.field.abs(a).powi(2)).sum::<f64>().sqrt()
    }

    /// Exact equality on exact fields; `max |a - b| <= tol` on complex floats.
    pub fn approx_eq(&self, other: &Mat, tol: f64) -> bool {
        if self.field != other.field || (self.rows, self.cols) != (other.rows, other.cols) {
            return false;
        }
        if self.field.is_exact() {
            return self == other;
        }
        self.data
            .iter()
            .zip(&other.data)
            .all(|(a, b)| self.field.abs(&self.field.sub(a, b)) <= tol)
    }

    pub fn to_c64(&self) -> Vec<Complex64> {
        self.data
            .iter()
            .map(|a| self.field.to_complex(a).expect("complex view of a finite-field matrix"))
            .collect()
    }

    pub fn from_c64(field: ScalarField, rows: usize, cols: usize, data: &[Complex64]) -> Mat {
        debug_assert!(matches!(field, ScalarField::Complex { .. }));
        Mat { rows, cols, data: data.iter().map(|&z| Scalar::Cpx(z)).collect(), field }
    }

    /// Re-embed into another field (exact → complex, or equal fields).
    pub fn convert(&self, field: ScalarField) -> Result<Mat> {
        if field == self.field {
            return Ok(self.clone());
        }
        let data = self
            .data
            .iter()
            .map(|a| {
                let z = self.field.to_complex(a).ok_or_else(|| {
                    Error::FieldMismatch(format!("cannot embed {} into {field}", self.field))
                })?;
                field.from_complex(z)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mat { rows: self.rows, cols: self.cols, data, field })
    }

    /// Default absolute tolerance for rank decisions on this matrix.
    pub fn rank_tol(&self) -> f64 {
        match self.field.eps() {
            Some(eps) => eps * self.frobenius().max(f64::MIN_POSITIVE),
            None => 0.0,
        }
    }

    pub fn rank(&self) -> usize {
        rank_reveal(self, None).rank
    }

    pub fn is_nonsingular(&self) -> bool {
        self.is_square() && self.rank() == self.rows
    }

    pub fn inverse(&self) -> Result<Mat> {
        if !self.is_square() {
            return Err(Error::ShapeMismatch(format!("inverse of {}x{}", self.rows, self.cols)));
        }
        let n = self.rows;
        let tol = self.field.eps().map(|e| e * self.max_abs() * (n.max(1) as f64));
        let ech = echelon(self, tol);
        if ech.pivots.len() < n {
            return Err(Error::SingularMatrix);
        }
        Ok(ech.transform)
    }

    /// A particular solution `Z` of `self · Z = rhs`.
    ///
    /// Exact fields accept any consistent system. Complex floats require
    /// `self` to have full row rank and return the minimum-norm solution.
    pub fn solve(&self, rhs: &Mat) -> Result<Mat> {
        self.check_field(rhs)?;
        if rhs.rows != self.rows {
            return Err(Error::ShapeMismatch(format!(
                "solve: {}x{} system with {} right-hand rows",
                self.rows, self.cols, rhs.rows
            )));
        }
        if self.field.is_exact() {
            solve_exact(self, rhs)
        } else {
            solve_full_row_rank(self, rhs)
        }
    }
}

struct Echelon {
    /// `transform · A` is in reduced row echelon form.
    transform: Mat,
    reduced: Mat,
    pivots: Vec<usize>,
}

/// Gauss–Jordan elimination. Exact fields pivot on the first nonzero entry
/// in index order; complex floats use partial pivoting with threshold `tol`.
fn echelon(a: &Mat, tol: Option<f64>) -> Echelon {
    let f = a.field;
    let (m, n) = (a.rows, a.cols);
    let mut r = a.clone();
    let mut e = Mat::identity(f, m);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let pick = match tol {
            None => (row..m).find(|&i| !f.is_exact_zero(r.get(i, col))),
            Some(t) => {
                let (best, mag) = (row..m)
                    .map(|i| (i, f.abs(r.get(i, col))))
                    .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                (mag > t).then_some(best)
            }
        };
        let Some(p) = pick else { continue };
        r.swap_rows(row, p);
        e.swap_rows(row, p);
        let inv = f.inv(r.get(row, col)).expect("pivot is nonzero");
        r.scale_row(row, &inv);
        e.scale_row(row, &inv);
        for i in 0..m {
            if i == row {
                continue;
            }
            let factor = r.get(i, col).clone();
            if f.is_exact_zero(&factor) {
                continue;
            }
            let neg = f.neg(&factor);
            r.add_row_multiple(i, row, &neg);
            e.add_row_multiple(i, row, &neg);
        }
        pivots.push(col);
        row += 1;
    }
    Echelon { transform: e, reduced: r, pivots }
}

impl Mat {
    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn scale_row(&mut self, i: usize, s: &Scalar) {
        for j in 0..self.cols {
            let idx = i * self.cols + j;
            self.data[idx] = self.field.mul(s, &self.data[idx]);
        }
    }

    /// row_i += s · row_src
    fn add_row_multiple(&mut self, i: usize, src: usize, s: &Scalar) {
        let f = self.field;
        for j in 0..self.cols {
            let b = &self.data[src * self.cols + j];
            if f.is_exact_zero(b) {
                continue;
            }
            let v = f.add(&self.data[i * self.cols + j], &f.mul(s, b));
            self.data[i * self.cols + j] = v;
        }
    }
}

fn solve_exact(a: &Mat, rhs: &Mat) -> Result<Mat> {
    let f = a.field;
    let ech = echelon(a, None);
    let y = ech.transform.mul(rhs)?;
    let r = ech.pivots.len();
    for i in r..a.rows {
        if (0..rhs.cols).any(|j| !f.is_exact_zero(y.get(i, j))) {
            return Err(Error::InvariantViolation("inconsistent linear system".into()));
        }
    }
    let mut z = Mat::zeros(f, a.cols, rhs.cols);
    for (i, &p) in ech.pivots.iter().enumerate() {
        for j in 0..rhs.cols {
            z.set(p, j, y.get(i, j).clone());
        }
    }
    debug_assert_eq!(ech.reduced.rows, a.rows);
    Ok(z)
}

/// Minimum-norm solution via a QR factorization of `A*`.
fn solve_full_row_rank(a: &Mat, rhs: &Mat) -> Result<Mat> {
    let (m, n) = (a.rows, a.cols);
    if m == 0 {
        return Ok(Mat::zeros(a.field, n, rhs.cols));
    }
    if m > n {
        return Err(Error::SingularMatrix);
    }
    // A* = Q [T; 0]  ⇒  A = [T* 0] Q*,  A Z = U  ⇒  T* Y1 = U, Z = Q[:, :m] Y1.
    let mut w = CMat::from_mat(&a.conj_transpose_plain_complex());
    let mut qh = CMat::identity(n);
    for j in 0..m {
        householder_step(&mut w, &mut qh, j, j);
    }
    let tol = a.field.eps().unwrap_or(0.0) * a.frobenius();
    for j in 0..m {
        if w.at(j, j).norm() <= tol {
            return Err(Error::SingularMatrix);
        }
    }
    let u = CMat::from_mat(rhs);
    let mut y = CMat::zeros(m, rhs.cols);
    // T* is lower triangular with (T*)[i][l] = conj(T[l][i]).
    for c in 0..rhs.cols {
        for i in 0..m {
            let mut acc = u.at(i, c);
            for l in 0..i {
                acc -= w.at(l, i).conj() * y.at(l, c);
            }
            y.put(i, c, acc / w.at(i, i).conj());
        }
    }
    // Q = qh*, so Z = qh*[:, :m] · Y1.
    let mut z = CMat::zeros(n, rhs.cols);
    for i in 0..n {
        for c in 0..rhs.cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..m {
                acc += qh.at(l, i).conj() * y.at(l, c);
            }
            z.put(i, c, acc);
        }
    }
    Ok(z.to_mat(a.field))
}

impl Mat {
    /// Conjugate transpose with complex conjugation regardless of the
    /// field's involution; used by the unitary kernels.
    fn conj_transpose_plain_complex(&self) -> Mat {
        let z = self.to_c64();
        let mut out = Vec::with_capacity(z.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(z[i * self.cols + j].conj());
            }
        }
        Mat::from_c64(self.field, self.cols, self.rows, &out)
    }
}

/// Column-major-free dense complex scratch matrix for the unitary kernels.
#[derive(Clone)]
struct CMat {
    rows: usize,
    cols: usize,
    d: Vec<Complex64>,
}

impl CMat {
    fn zeros(rows: usize, cols: usize) -> CMat {
        CMat { rows, cols, d: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    fn identity(n: usize) -> CMat {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m.d[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    fn from_mat(a: &Mat) -> CMat {
        CMat { rows: a.rows, cols: a.cols, d: a.to_c64() }
    }

    fn to_mat(&self, field: ScalarField) -> Mat {
        Mat::from_c64(field, self.rows, self.cols, &self.d)
    }

    fn at(&self, i: usize, j: usize) -> Complex64 {
        self.d[i * self.cols + j]
    }

    fn put(&mut self, i: usize, j: usize, v: Complex64) {
        self.d[i * self.cols + j] = v;
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        for i in 0..self.rows {
            self.d.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    fn col_norm_from(&self, j: usize, r0: usize) -> f64 {
        (r0..self.rows).map(|i| self.at(i, j).norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Apply the Householder reflector that annihilates `w[r0+1.., c]` to the
/// rows `r0..` of `w` (columns `c..`) and of the accumulator `acc`
/// (all columns). The reflector is Hermitian and unitary.
fn householder_step(w: &mut CMat, acc: &mut CMat, r0: usize, c: usize) {
    let m = w.rows;
    if r0 >= m {
        return;
    }
    let norm = w.col_norm_from(c, r0);
    if norm == 0.0 {
        return;
    }
    let x0 = w.at(r0, c);
    let phase = if x0.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { x0 / x0.norm() };
    let alpha = -phase * norm;
    let mut v: Vec<Complex64> = (r0..m).map(|i| w.at(i, c)).collect();
    v[0] -= alpha;
    let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if vnorm2 == 0.0 {
        return;
    }
    let apply = |mat: &mut CMat, from_col: usize| {
        for j in from_col..mat.cols {
            let mut dot = Complex64::new(0.0, 0.0);
            for (l, vl) in v.iter().enumerate() {
                dot += vl.conj() * mat.at(r0 + l, j);
            }
            let s = dot * (2.0 / vnorm2);
            for (l, vl) in v.iter().enumerate() {
                let cur = mat.at(r0 + l, j);
                mat.put(r0 + l, j, cur - vl * s);
            }
        }
    };
    apply(w, c);
    apply(acc, 0);
    w.put(r0, c, alpha);
    for i in r0 + 1..m {
        w.put(i, c, Complex64::new(0.0, 0.0));
    }
}

/// Exact rank reveal: `left·A·right = [[0,0],[0,I_r]]`.
///
/// Row-reduce with first-nonzero pivoting, clear the non-pivot columns by
/// column operations to reach `[[I_r,0],[0,0]]`, then reverse the order of
/// rows and columns.
pub fn column_echelon_in_strip(a: &Mat) -> RankRevelation {
    let f = a.field;
    let (m, n) = (a.rows, a.cols);
    let ech = echelon(a, None);
    let r = ech.pivots.len();
    // Column transform: pivot columns first, others after, then clear.
    let mut order: Vec<usize> = ech.pivots.clone();
    order.extend((0..n).filter(|c| !ech.pivots.contains(c)));
    let mut c = Mat::permutation(f, &order);
    // After permuting, reduced = [I_r  X; 0 0]; clear X with columns.
    let rp = ech.reduced.mul(&c).expect("shapes agree");
    let mut clear = Mat::identity(f, n);
    for i in 0..r {
        for j in r..n {
            clear.set(i, j, f.neg(rp.get(i, j)));
        }
    }
    c = c.mul(&clear).expect("shapes agree");
    let rev_m = Mat::permutation(f, &(0..m).rev().collect::<Vec<_>>());
    let rev_n = Mat::permutation(f, &(0..n).rev().collect::<Vec<_>>());
    RankRevelation {
        rank: r,
        left: rev_m.mul(&ech.transform).expect("shapes agree"),
        right: c.mul(&rev_n).expect("shapes agree"),
        core: Mat::identity(f, r),
        mode: RevealMode::Exact,
    }
}

/// Unitary rank reveal with the default relative threshold
/// `σ ≤ eps·σ_max` (σ_max estimated by the first pivot column norm).
pub fn unitary_rank_reveal(a: &Mat) -> RankRevelation {
    let eps = a.field.eps().expect("unitary rank reveal needs a complex float field");
    let cm = CMat::from_mat(a);
    let smax = (0..a.cols).map(|j| cm.col_norm_from(j, 0)).fold(0.0, f64::max);
    unitary_rank_reveal_tol(a, eps * smax)
}

/// Householder QR with column pivoting followed by a complete orthogonal
/// step. A step counts towards the rank while the largest remaining column
/// norm exceeds `tol`. Everything below the threshold is treated as zero,
/// so `left·A·right` matches the pivot shape up to `tol`.
pub fn unitary_rank_reveal_tol(a: &Mat, tol: f64) -> RankRevelation {
    let f = a.field;
    let (m, n) = (a.rows, a.cols);
    let mut w = CMat::from_mat(a);
    let mut left = CMat::identity(m);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    for j in 0..m.min(n) {
        let (best, mag) = (j..n)
            .map(|c| (c, w.col_norm_from(c, j)))
            .fold((j, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= tol {
            break;
        }
        w.swap_cols(j, best);
        perm.swap(j, best);
        householder_step(&mut w, &mut left, j, j);
        rank = j + 1;
    }
    // [R11 R12] = [T* 0] Z*  via QR of its conjugate transpose.
    let mut top = CMat::zeros(n, rank);
    for i in 0..rank {
        for j in 0..n {
            top.put(j, i, w.at(i, j).conj());
        }
    }
    let mut zh = CMat::identity(n);
    for j in 0..rank {
        householder_step(&mut top, &mut zh, j, j);
    }
    // right = Π · Z · J_n with Z = zh*.
    let mut right = CMat::zeros(n, n);
    let mut pz = CMat::zeros(n, n);
    for j in 0..n {
        for c in 0..n {
            // (Π Z)[perm[j]][c] = Z[j][c]
            pz.put(perm[j], c, zh.at(c, j).conj());
        }
    }
    for i in 0..n {
        for c in 0..n {
            right.put(i, c, pz.at(i, n - 1 - c));
        }
    }
    let mut left_rev = CMat::zeros(m, m);
    for i in 0..m {
        for c in 0..m {
            left_rev.put(i, c, left.at(m - 1 - i, c));
        }
    }
    // core = J_r T* J_r
    let mut core = CMat::zeros(rank, rank);
    for i in 0..rank {
        for j in 0..rank {
            let (ti, tj) = (rank - 1 - i, rank - 1 - j);
            core.put(i, j, top.at(tj, ti).conj());
        }
    }
    RankRevelation {
        rank,
        left: left_rev.to_mat(f),
        right: right.to_mat(f),
        core: core.to_mat(f),
        mode: RevealMode::Unitary,
    }
}

/// Exact reveal on exact fields, unitary reveal on complex floats. `tol`
/// overrides the default relative threshold of the unitary path.
pub fn rank_reveal(a: &Mat, tol: Option<f64>) -> RankRevelation {
    if a.field.is_exact() {
        column_echelon_in_strip(a)
    } else {
        match tol {
            Some(t) => unitary_rank_reveal_tol(a, t),
            None => unitary_rank_reveal(a),
        }
    }
}

impl RankRevelation {
    /// The shape `left·A·right` is meant to have.
    pub fn shape(&self, rows: usize, cols: usize) -> Mat {
        let mut s = Mat::zeros(self.core.field, rows, cols);
        s.set_block(rows - self.rank, cols - self.rank, &self.core);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Involution;
    use proptest::prelude::*;

    const Q: ScalarField = ScalarField::Rational;
    const QI: ScalarField = ScalarField::Gaussian(Involution::Conjugation);

    fn c() -> ScalarField {
        ScalarField::complex(1e-10).unwrap()
    }

    #[test]
    fn conj_transpose_examples() {
        let a = Mat::from_vec(
            QI,
            2,
            2,
            ["1+i", "2", "0", "3"].iter().map(|s| QI.parse(s).unwrap()).collect(),
        )
        .unwrap();
        let expect = Mat::from_vec(
            QI,
            2,
            2,
            ["1-i", "0", "2", "3"].iter().map(|s| QI.parse(s).unwrap()).collect(),
        )
        .unwrap();
        assert_eq!(a.conj_transpose(), expect);
        assert_eq!(a.conj_transpose().conj_transpose(), a);

        let e = Mat::zeros(Q, 3, 0).conj_transpose();
        assert_eq!((e.rows(), e.cols()), (0, 3));

        let qi_id = ScalarField::Gaussian(Involution::Identity);
        let b = Mat::from_vec(qi_id, 1, 2, vec![qi_id.parse("i").unwrap(), qi_id.one()]).unwrap();
        assert_eq!(b.conj_transpose(), b.transpose());
    }

    #[test]
    fn empty_conventions() {
        let p = Mat::zeros(Q, 2, 0).mul(&Mat::zeros(Q, 0, 3)).unwrap();
        assert_eq!(p, Mat::zeros(Q, 2, 3));
        let s = Mat::zeros(Q, 4, 0).direct_sum(&Mat::zeros(Q, 0, 5)).unwrap();
        assert_eq!(s, Mat::zeros(Q, 4, 5));
        let a = Mat::identity(Q, 2);
        let with_rows = a.direct_sum(&Mat::zeros(Q, 3, 0)).unwrap();
        assert_eq!((with_rows.rows(), with_rows.cols()), (5, 2));
        assert!(Mat::zeros(Q, 2, 2).mul(&Mat::zeros(Q, 3, 1)).is_err());
    }

    #[test]
    fn jordan_inverse() {
        let j = Mat::from_i64(Q, 2, 2, &[3, 1, 0, 3]);
        let inv = j.inverse().unwrap();
        let expect = Mat::from_vec(
            Q,
            2,
            2,
            ["1/3", "-1/9", "0", "1/3"].iter().map(|s| Q.parse(s).unwrap()).collect(),
        )
        .unwrap();
        assert_eq!(inv, expect);
        assert!(j.mul(&inv).unwrap().is_identity());
        assert_eq!(Mat::from_i64(Q, 2, 2, &[1, 2, 2, 4]).inverse(), Err(Error::SingularMatrix));
    }

    fn minors_vanish_2x2(a: &Mat) -> bool {
        let f = a.field();
        let d = f.sub(&f.mul(a.get(0, 0), a.get(1, 1)), &f.mul(a.get(0, 1), a.get(1, 0)));
        f.is_exact_zero(&d)
    }

    #[test]
    fn exact_reveal_examples() {
        let z = column_echelon_in_strip(&Mat::zeros(Q, 2, 2));
        assert_eq!(z.rank, 0);
        assert!(z.left.is_identity() || z.left.is_nonsingular());

        let a = Mat::from_i64(Q, 2, 2, &[1, 2, 2, 4]);
        let r = column_echelon_in_strip(&a);
        assert!(minors_vanish_2x2(&a) && !a.is_zero());
        assert_eq!(r.rank, 1);
        let shaped = r.left.mul(&a).unwrap().mul(&r.right).unwrap();
        assert_eq!(shaped, r.shape(2, 2));

        assert_eq!(column_echelon_in_strip(&Mat::zeros(Q, 0, 4)).rank, 0);
    }

    #[test]
    fn unitary_reveal_examples() {
        let f = c();
        let i3 = Mat::identity(f, 3);
        let r = unitary_rank_reveal(&i3);
        assert_eq!(r.rank, 3);

        let a = Mat::from_c64(
            f,
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0 + 1e-15, 0.0),
            ],
        );
        assert_eq!(unitary_rank_reveal(&a).rank, 1);
        assert_eq!(unitary_rank_reveal(&Mat::zeros(f, 2, 3)).rank, 0);
    }

    /// Singular values via nalgebra, used only as an oracle.
    fn svd_rank(a: &Mat, eps: f64) -> usize {
        let z = a.to_c64();
        let m = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), &z);
        if a.rows() == 0 || a.cols() == 0 {
            return 0;
        }
        let sv = m.singular_values();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s > eps * smax).count()
    }

    fn unitary_defect(u: &Mat) -> f64 {
        let p = u.conj_transpose_plain_complex().mul(u).unwrap();
        p.sub(&Mat::identity(u.field(), u.rows())).unwrap().max_abs()
    }

    fn cmat_strategy() -> impl Strategy<Value = (usize, usize, usize, Vec<(i8, i8)>)> {
        (0usize..5, 0usize..5, 0usize..5).prop_flat_map(|(m, n, r)| {
            let len = m * r + r * n;
            (Just(m), Just(n), Just(r), prop::collection::vec((-4i8..5, -4i8..5), len))
        })
    }

    fn low_rank(m: usize, n: usize, r: usize, v: &[(i8, i8)]) -> Mat {
        let f = c();
        let cz = |p: &(i8, i8)| Complex64::new(p.0 as f64, p.1 as f64);
        let a = Mat::from_c64(f, m, r, &v[..m * r].iter().map(cz).collect::<Vec<_>>());
        let b = Mat::from_c64(f, r, n, &v[m * r..].iter().map(cz).collect::<Vec<_>>());
        a.mul(&b).unwrap()
    }

    proptest! {
        #[test]
        fn unitary_reveal_matches_svd((m, n, r, v) in cmat_strategy()) {
            let a = low_rank(m, n, r, &v);
            let rev = unitary_rank_reveal(&a);
            prop_assert_eq!(rev.rank, svd_rank(&a, 1e-10));
            prop_assert!(unitary_defect(&rev.left) <= 1e-9);
            prop_assert!(unitary_defect(&rev.right) <= 1e-9);
            let shaped = rev.left.mul(&a).unwrap().mul(&rev.right).unwrap();
            let dev = shaped.sub(&rev.shape(m, n)).unwrap().max_abs();
            prop_assert!(dev <= 1e-9 * a.max_abs().max(1.0));
            prop_assert!(rev.core.rank() == rev.rank);
        }

        #[test]
        fn exact_reveal_is_exact(m in 0usize..5, n in 0usize..5, vals in prop::collection::vec(-2i64..3, 25)) {
            let a = Mat::from_i64(Q, m, n, &vals[..m * n]);
            let rev = column_echelon_in_strip(&a);
            prop_assert_eq!(rev.left.mul(&a).unwrap().mul(&rev.right).unwrap(), rev.shape(m, n));
            prop_assert!(rev.left.inverse().is_ok());
            prop_assert!(rev.right.inverse().is_ok());
            prop_assert_eq!(a.rank(), a.transpose().rank());
        }

        #[test]
        fn ranks_agree_under_transposes(vals in prop::collection::vec((-2i64..3, -2i64..3), 16), m in 0usize..5, n in 0usize..5) {
            let a = Mat::from_fn(QI, m, n, |i, j| {
                let (x, y) = vals[i * 4 + j];
                QI.from_gaussian_ints(x, y).unwrap()
            });
            let r = a.rank();
            prop_assert_eq!(r, a.transpose().rank());
            prop_assert_eq!(r, a.conj_transpose().rank());
        }

        #[test]
        fn solve_returns_a_solution(m in 0usize..4, extra in 0usize..3, vals in prop::collection::vec((-3i8..4, -3i8..4), 40)) {
            let n = m + extra;
            let f = c();
            let cz = |p: &(i8, i8)| Complex64::new(p.0 as f64, p.1 as f64);
            let a = Mat::from_c64(f, m, n, &vals[..m * n].iter().map(cz).collect::<Vec<_>>());
            prop_assume!(a.rank() == m);
            let u = Mat::from_c64(f, m, 2, &vals[20..20 + 2 * m].iter().map(cz).collect::<Vec<_>>());
            let z = a.solve(&u).unwrap();
            prop_assert!(a.mul(&z).unwrap().approx_eq(&u, 1e-8 * (1.0 + u.max_abs())));

            let aq = Mat::from_fn(Q, m, n, |i, j| Q.from_i64(vals[i * n + j].0 as i64));
            let uq = aq.mul(&Mat::from_i64(Q, n, 1, &vec![1; n])).unwrap();
            let zq = aq.solve(&uq).unwrap();
            prop_assert_eq!(aq.mul(&zq).unwrap(), uq);
        }
    }

    #[test]
    fn exact_inverse_over_finite_field() {
        let f = ScalarField::prime(5).unwrap();
        let a = Mat::from_i64(f, 2, 2, &[1, 2, 3, 4]);
        let inv = a.inverse().unwrap();
        assert!(a.mul(&inv).unwrap().is_identity());
    }
}

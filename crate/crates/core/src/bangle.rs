//! Bangles, their transformation group, block-direct sums and the canonical
//! summand generators.
//!
//! Strip indices are 0-based throughout the library; the file format and
//! human-readable output use 1-based numbering.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::field::{Scalar, ScalarField};
use crate::matrix::Mat;

/// Which equivalence a witness realizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// `B = S_kk* · A · S`
    Star,
    /// `B = S_kk⁻¹ · A · S`
    Sim,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Star => "star",
            Mode::Sim => "sim",
        })
    }
}

/// Vertical strips sharing a row count, one of which (the box) is square.
#[derive(Clone, Debug, PartialEq)]
pub struct Bangle {
    field: ScalarField,
    strips: Vec<Mat>,
    boxed: usize,
}

impl Bangle {
    pub fn new(field: ScalarField, strips: Vec<Mat>, boxed: usize) -> Result<Bangle> {
        if strips.is_empty() {
            return Err(Error::InvariantViolation("a bangle needs at least one strip".into()));
        }
        if boxed >= strips.len() {
            return Err(Error::InvariantViolation(format!(
                "boxed strip {} out of {} strips",
                boxed + 1,
                strips.len()
            )));
        }
        let n = strips[boxed].rows();
        if !strips[boxed].is_square() {
            return Err(Error::InvariantViolation(format!(
                "boxed strip is {}x{}, not square",
                n,
                strips[boxed].cols()
            )));
        }
        for (i, s) in strips.iter().enumerate() {
            if s.field() != field {
                return Err(Error::FieldMismatch(format!("strip {} is over {}", i + 1, s.field())));
            }
            if s.rows() != n {
                return Err(Error::InvariantViolation(format!(
                    "strip {} has {} rows, boxed strip has {n}",
                    i + 1,
                    s.rows()
                )));
            }
        }
        Ok(Bangle { field, strips, boxed })
    }

    /// Split a wide matrix into strips of the given widths.
    pub fn from_matrix(full: &Mat, widths: &[usize], boxed: usize) -> Result<Bangle> {
        if widths.iter().sum::<usize>() != full.cols() {
            return Err(Error::ShapeMismatch(format!(
                "widths {widths:?} do not add up to {} columns",
                full.cols()
            )));
        }
        let mut c0 = 0;
        let strips = widths
            .iter()
            .map(|&w| {
                let s = full.block(0, c0, full.rows(), w);
                c0 += w;
                s
            })
            .collect();
        Bangle::new(full.field(), strips, boxed)
    }

    /// The all-empty bangle, neutral for the block-direct sum.
    pub fn empty(field: ScalarField, t: usize, boxed: usize) -> Bangle {
        Bangle::new(field, vec![Mat::zeros(field, 0, 0); t], boxed).expect("valid empty layout")
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn t(&self) -> usize {
        self.strips.len()
    }

    pub fn boxed(&self) -> usize {
        self.boxed
    }

    pub fn rows(&self) -> usize {
        self.strips[self.boxed].rows()
    }

    pub fn strips(&self) -> &[Mat] {
        &self.strips
    }

    pub fn strip(&self, i: usize) -> &Mat {
        &self.strips[i]
    }

    pub fn box_mat(&self) -> &Mat {
        &self.strips[self.boxed]
    }

    pub fn widths(&self) -> Vec<usize> {
        self.strips.iter().map(Mat::cols).collect()
    }

    pub fn total_cols(&self) -> usize {
        self.strips.iter().map(Mat::cols).sum()
    }

    /// First column of strip `i` inside the wide matrix.
    pub fn offset(&self, i: usize) -> usize {
        self.strips[..i].iter().map(Mat::cols).sum()
    }

    pub fn to_matrix(&self) -> Mat {
        let parts: Vec<&Mat> = self.strips.iter().collect();
        Mat::hstack(self.field, self.rows(), &parts).expect("strips share the row count")
    }

    pub fn max_abs(&self) -> f64 {
        self.strips.iter().map(Mat::max_abs).fold(0.0, f64::max)
    }

    pub fn same_layout(&self, other: &Bangle) -> bool {
        self.field == other.field && self.t() == other.t() && self.boxed == other.boxed
    }

    pub fn approx_eq(&self, other: &Bangle, tol: f64) -> bool {
        self.same_layout(other)
            && self.widths() == other.widths()
            && self.strips.iter().zip(&other.strips).all(|(a, b)| a.approx_eq(b, tol))
    }

    /// Strip-wise `[[A_i, 0], [0, B_i]]`.
    pub fn block_direct_sum(&self, other: &Bangle) -> Result<Bangle> {
        if !self.same_layout(other) {
            return Err(Error::LayoutMismatch(format!(
                "cannot sum t={}, k={} with t={}, k={}",
                self.t(),
                self.boxed + 1,
                other.t(),
                other.boxed + 1
            )));
        }
        let strips = self
            .strips
            .iter()
            .zip(&other.strips)
            .map(|(a, b)| a.direct_sum(b))
            .collect::<Result<Vec<_>>>()?;
        Bangle::new(self.field, strips, self.boxed)
    }

    pub fn sum_all<'a>(
        field: ScalarField,
        t: usize,
        boxed: usize,
        parts: impl IntoIterator<Item = &'a Bangle>,
    ) -> Result<Bangle> {
        parts.into_iter().try_fold(Bangle::empty(field, t, boxed), |acc, b| acc.block_direct_sum(b))
    }

    /// Admissible permutation: row `r` of the result is row `row_perm[r]`
    /// of `self` (the box columns follow), and column `j` of unboxed strip
    /// `i` is column `col_perms[i][j]`. Returns the result together with
    /// the permutation witness realizing it in either mode.
    pub fn admissible_permute(
        &self,
        row_perm: &[usize],
        col_perms: &[Vec<usize>],
        mode: Mode,
    ) -> Result<(Bangle, Witness)> {
        let w = Witness::from_permutations(self, row_perm, col_perms, mode)?;
        Ok((w.apply(self)?, w))
    }
}

/// Nonsingular upper block-triangular `S`, stored as one square matrix
/// partitioned by the strip widths.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    s: Mat,
    widths: Vec<usize>,
    boxed: usize,
    mode: Mode,
}

impl Witness {
    pub fn identity(field: ScalarField, widths: &[usize], boxed: usize, mode: Mode) -> Witness {
        let n = widths.iter().sum();
        Witness { s: Mat::identity(field, n), widths: widths.to_vec(), boxed, mode }
    }

    /// For witnesses whose shape is guaranteed by construction.
    pub(crate) fn from_parts(s: Mat, widths: Vec<usize>, boxed: usize, mode: Mode) -> Witness {
        Witness { s, widths, boxed, mode }
    }

    pub fn for_bangle(a: &Bangle, mode: Mode) -> Witness {
        Witness::identity(a.field(), &a.widths(), a.boxed(), mode)
    }

    /// Checks the block-triangular shape and the diagonal blocks.
    pub fn new(s: Mat, widths: &[usize], boxed: usize, mode: Mode) -> Result<Witness> {
        let n: usize = widths.iter().sum();
        if s.rows() != n || s.cols() != n {
            return Err(Error::ShapeMismatch(format!(
                "witness is {}x{}, widths {widths:?} need {n}x{n}",
                s.rows(),
                s.cols()
            )));
        }
        if boxed >= widths.len() {
            return Err(Error::LayoutMismatch(format!("boxed strip {} out of range", boxed + 1)));
        }
        let w = Witness { s, widths: widths.to_vec(), boxed, mode };
        for i in 0..widths.len() {
            for j in 0..i {
                if !w.block(i, j).is_zero() {
                    return Err(Error::InvariantViolation(format!(
                        "witness block ({}, {}) below the diagonal is nonzero",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if !w.block(i, i).is_nonsingular() {
                return Err(Error::SingularBlock(i + 1));
            }
        }
        Ok(w)
    }

    pub fn from_permutations(
        a: &Bangle,
        row_perm: &[usize],
        col_perms: &[Vec<usize>],
        mode: Mode,
    ) -> Result<Witness> {
        let f = a.field();
        let widths = a.widths();
        if col_perms.len() != widths.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} column permutations for {} strips",
                col_perms.len(),
                widths.len()
            )));
        }
        let mut s = Mat::zeros(f, a.total_cols(), a.total_cols());
        for (i, &w) in widths.iter().enumerate() {
            let perm = if i == a.boxed() { row_perm } else { &col_perms[i][..] };
            if !is_permutation(perm, w) {
                return Err(Error::ShapeMismatch(format!("invalid permutation {perm:?} of {w}")));
            }
            s.set_block(a.offset(i), a.offset(i), &Mat::permutation(f, perm));
        }
        Ok(Witness { s, widths, boxed: a.boxed(), mode })
    }

    pub fn matrix(&self) -> &Mat {
        &self.s
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn boxed(&self) -> usize {
        self.boxed
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn field(&self) -> ScalarField {
        self.s.field()
    }

    fn offset(&self, i: usize) -> usize {
        self.widths[..i].iter().sum()
    }

    pub fn block(&self, i: usize, j: usize) -> Mat {
        self.s.block(self.offset(i), self.offset(j), self.widths[i], self.widths[j])
    }

    /// The matrix that multiplies the rows: `S_kk*` or `S_kk⁻¹`.
    pub fn row_factor(&self) -> Result<Mat> {
        let skk = self.block(self.boxed, self.boxed);
        match self.mode {
            Mode::Star => Ok(skk.conj_transpose()),
            Mode::Sim => skk.inverse().map_err(|_| Error::SingularBlock(self.boxed + 1)),
        }
    }

    pub fn apply(&self, a: &Bangle) -> Result<Bangle> {
        if a.widths() != self.widths || a.boxed() != self.boxed || a.field() != self.field() {
            return Err(Error::ShapeMismatch(format!(
                "witness for widths {:?} (box {}) applied to widths {:?} (box {})",
                self.widths,
                self.boxed + 1,
                a.widths(),
                a.boxed() + 1
            )));
        }
        let full = self.row_factor()?.mul(&a.to_matrix())?.mul(&self.s)?;
        Bangle::from_matrix(&full, &self.widths, self.boxed)
    }

    /// `self` first, then `next`.
    pub fn then(&self, next: &Witness) -> Result<Witness> {
        if self.widths != next.widths || self.boxed != next.boxed || self.mode != next.mode {
            return Err(Error::LayoutMismatch("composing witnesses of different layouts".into()));
        }
        Ok(Witness { s: self.s.mul(&next.s)?, ..self.clone() })
    }

    pub fn compose(first: &Witness, rest: &[Witness]) -> Result<Witness> {
        rest.iter().try_fold(first.clone(), |acc, w| acc.then(w))
    }

    /// The inverse transformation.
    pub fn inverse(&self) -> Result<Witness> {
        Ok(Witness { s: self.s.inverse()?, ..self.clone() })
    }
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    p.len() == n && p.iter().all(|&x| x < n && !std::mem::replace(&mut seen[x], true))
}

/// Elementary transformations generating the bangle group.
#[derive(Clone, Debug)]
pub enum BangleTransformation {
    /// Rows by `E`, box columns by `E*` (star) or `E⁻¹` (sim).
    RowAndBox { e: Mat },
    /// Columns of unboxed strip `strip` by a nonsingular `t`.
    ColsInStrip { strip: usize, t: Mat },
    /// `A_to += A_from · c` for `from < to`.
    ColCombAdd { from: usize, to: usize, c: Mat },
}

impl BangleTransformation {
    pub fn to_witness(&self, widths: &[usize], boxed: usize, mode: Mode, field: ScalarField) -> Result<Witness> {
        let mut w = Witness::identity(field, widths, boxed, mode);
        match self {
            BangleTransformation::RowAndBox { e } => {
                let skk = match mode {
                    Mode::Star => e.conj_transpose(),
                    Mode::Sim => e.inverse()?,
                };
                if skk.rows() != widths[boxed] {
                    return Err(Error::ShapeMismatch("row transform size".into()));
                }
                let o = w.offset(boxed);
                w.s.set_block(o, o, &skk);
            }
            BangleTransformation::ColsInStrip { strip, t } => {
                if *strip == boxed {
                    return Err(Error::InvariantViolation("box columns follow the rows".into()));
                }
                if t.rows() != widths[*strip] || !t.is_nonsingular() {
                    return Err(Error::SingularBlock(strip + 1));
                }
                let o = w.offset(*strip);
                w.s.set_block(o, o, t);
            }
            BangleTransformation::ColCombAdd { from, to, c } => {
                if from >= to {
                    return Err(Error::InvariantViolation(
                        "columns may only be added to later strips".into(),
                    ));
                }
                if c.rows() != widths[*from] || c.cols() != widths[*to] {
                    return Err(Error::ShapeMismatch("column combination size".into()));
                }
                let (r0, c0) = (w.offset(*from), w.offset(*to));
                w.s.set_block(r0, c0, c);
            }
        }
        Ok(w)
    }

    pub fn apply(&self, a: &Bangle, mode: Mode) -> Result<Bangle> {
        self.to_witness(&a.widths(), a.boxed(), mode, a.field())?.apply(a)
    }
}

/// Γ_n: alternating ±1 pairs on the two central anti-diagonals, with
/// `Γ_n[n−1][0] = 1`.
pub fn gamma(field: ScalarField, n: usize) -> Mat {
    let mut g = Mat::zeros(field, n, n);
    for i in 0..n {
        let s = n - 1 - i;
        let v = field.from_i64(if s % 2 == 0 { 1 } else { -1 });
        g.set(i, s, v.clone());
        if s + 1 < n {
            g.set(i, s + 1, v);
        }
    }
    g
}

/// Δ_n: ones on the anti-diagonal, `i` directly below it.
pub fn delta(field: ScalarField, n: usize) -> Result<Mat> {
    let im = field.imaginary_unit()?;
    let mut d = Mat::zeros(field, n, n);
    for r in 0..n {
        d.set(r, n - 1 - r, field.one());
        if r > 0 {
            d.set(r, n - r, im.clone());
        }
    }
    Ok(d)
}

/// Upper Jordan block.
pub fn jordan(field: ScalarField, n: usize, lambda: &Scalar) -> Mat {
    let mut j = Mat::zeros(field, n, n);
    for i in 0..n {
        j.set(i, i, lambda.clone());
        if i + 1 < n {
            j.set(i, i + 1, field.one());
        }
    }
    j
}

/// `[[0, I_n], [J_n(λ), 0]]`.
pub fn hpair(field: ScalarField, n: usize, lambda: &Scalar) -> Mat {
    let mut h = Mat::zeros(field, 2 * n, 2 * n);
    h.set_block(0, n, &Mat::identity(field, n));
    h.set_block(n, 0, &jordan(field, n, lambda));
    h
}

/// `E_q`: q×1 with a single one in the last row; `E_0` is 0×1.
pub fn e_col(field: ScalarField, q: usize) -> Mat {
    let mut e = Mat::zeros(field, q, 1);
    if q > 0 {
        e.set(q - 1, 0, field.one());
    }
    e
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Attachment {
    /// `J_q(0)` boxed, every other strip empty (q ≥ 1).
    Plain,
    /// `J_q(0)` boxed with `E_q` in the given unboxed strip (q ≥ 0).
    EInStrip(usize),
}

/// A singular summand of a regularizing decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SingularSummand {
    pub q: usize,
    pub attachment: Attachment,
}

impl SingularSummand {
    pub fn plain(q: usize) -> SingularSummand {
        SingularSummand { q, attachment: Attachment::Plain }
    }

    pub fn e_in(strip: usize, q: usize) -> SingularSummand {
        SingularSummand { q, attachment: Attachment::EInStrip(strip) }
    }

    /// Order key: attachment strip (Plain first), kind, then q.
    fn key(&self) -> (usize, u8, usize) {
        match self.attachment {
            Attachment::Plain => (0, 0, self.q),
            Attachment::EInStrip(i) => (i + 1, 1, self.q),
        }
    }

    pub fn validate(&self, t: usize, boxed: usize) -> Result<()> {
        match self.attachment {
            Attachment::Plain if self.q == 0 => {
                Err(Error::InvariantViolation("a plain summand needs q >= 1".into()))
            }
            Attachment::EInStrip(i) if i >= t || i == boxed => Err(Error::InvariantViolation(
                format!("E-column strip {} must be an unboxed strip of 1..{t}", i + 1),
            )),
            _ => Ok(()),
        }
    }

    /// The literal summand bangle.
    pub fn bangle(&self, field: ScalarField, t: usize, boxed: usize) -> Result<Bangle> {
        self.validate(t, boxed)?;
        let q = self.q;
        let mut strips = vec![Mat::zeros(field, q, 0); t];
        strips[boxed] = jordan(field, q, &field.zero());
        if let Attachment::EInStrip(i) = self.attachment {
            strips[i] = e_col(field, q);
        }
        Bangle::new(field, strips, boxed)
    }

    /// Inverse of [`SingularSummand::bangle`].
    pub fn detect(a: &Bangle) -> Option<SingularSummand> {
        let f = a.field();
        let q = a.rows();
        if *a.box_mat() != jordan(f, q, &f.zero()) {
            return None;
        }
        let wide: Vec<usize> = (0..a.t()).filter(|&i| i != a.boxed() && a.strip(i).cols() > 0).collect();
        match wide[..] {
            [] if q > 0 => Some(SingularSummand::plain(q)),
            [i] if *a.strip(i) == e_col(f, q) => Some(SingularSummand::e_in(i, q)),
            _ => None,
        }
    }
}

impl Ord for SingularSummand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for SingularSummand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SingularSummand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.attachment {
            Attachment::Plain => write!(f, "J{}(0)", self.q),
            Attachment::EInStrip(i) => write!(f, "J{}(0)|E{}@{}", self.q, self.q, i + 1),
        }
    }
}

/// `K` boxed, all other strips of width zero.
pub fn regular_bangle(k: &Mat, t: usize, boxed: usize) -> Result<Bangle> {
    if !k.is_square() {
        return Err(Error::ShapeMismatch(format!("regular part is {}x{}", k.rows(), k.cols())));
    }
    if !k.is_nonsingular() {
        return Err(Error::SingularRegularPart);
    }
    let f = k.field();
    let mut strips = vec![Mat::zeros(f, k.rows(), 0); t];
    strips[boxed] = k.clone();
    Bangle::new(f, strips, boxed)
}

//! Matrices of sesquilinear forms and linear mappings attached to a
//! subspace `U ⊂ V`, and their translation to bangles.
//!
//! A change of basis of `V` that respects `U` has the block shape
//! `R = [[S, P], [0, Q]]` when `e_1..e_m` span `U`, and
//! `R = [[S, 0], [P, Q]]` when `e_{m+1}..e_n` span `U` (quotient kinds,
//! where `S` acts on `V/U`). Every kind turns `R` into a bangle witness:
//!
//! | kind     | bangle            | mode | law                         |
//! |----------|-------------------|------|-----------------------------|
//! | `UxV`    | `[▣A │ B]`        | star | `[A B] ↦ S*[A B]R`          |
//! | `QuotxV` | `[B │ ▣A]`        | star | `[A B] ↦ S*[A B]R`          |
//! | `UtoV`   | `[Bᵀ │ ▣Aᵀ]`      | sim  | `[A; B] ↦ R⁻¹[A; B]S`       |
//! | `VtoU`   | `[▣A │ B]`        | sim  | `[A B] ↦ S⁻¹[A B]R`         |
//! | `QtoV`   | `[▣Aᵀ │ Bᵀ]`      | sim  | `[A; B] ↦ R⁻¹[A; B]S`       |
//! | `VtoQ`   | `[B │ ▣A]`        | sim  | `[A B] ↦ S⁻¹[A B]R`         |
//!
//! Transposes are plain (never conjugating): mappings are compared by
//! similarity, which ignores the involution.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::bangle::{Bangle, Mode, Witness};
use crate::canonical::{canonical_bangle, Descriptor};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::matrix::Mat;
use crate::random::{random_mat, random_nonsingular};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FormKind {
    /// `U × V → F`
    UxV,
    /// `(V/U) × V → F`
    QuotxV,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MappingKind {
    /// `U → V`
    UtoV,
    /// `V → U`
    VtoU,
    /// `V/U → V`
    QtoV,
    /// `V → V/U`
    VtoQ,
}

/// Which end of the basis of `V` spans `U`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    /// `e_1..e_m` span `U`; `R` is block upper triangular.
    Subspace,
    /// `e_{m+1}..e_n` span `U`; `R` is block lower triangular.
    Quotient,
}

/// How a kind sits inside a two-strip bangle.
#[derive(Clone, Copy, Debug)]
struct Layout {
    frame: Frame,
    mode: Mode,
    /// The bangle holds `Aᵀ, Bᵀ` and its witness is `R⁻ᵀ`.
    transposed: bool,
    /// The box is the second strip.
    box_second: bool,
}

impl FormKind {
    pub const ALL: [FormKind; 2] = [FormKind::UxV, FormKind::QuotxV];

    pub fn frame(self) -> Frame {
        match self {
            FormKind::UxV => Frame::Subspace,
            FormKind::QuotxV => Frame::Quotient,
        }
    }

    fn layout(self) -> Layout {
        Layout {
            frame: self.frame(),
            mode: Mode::Star,
            transposed: false,
            box_second: self == FormKind::QuotxV,
        }
    }
}

impl MappingKind {
    pub const ALL: [MappingKind; 4] = [MappingKind::UtoV, MappingKind::VtoU, MappingKind::QtoV, MappingKind::VtoQ];

    pub fn frame(self) -> Frame {
        match self {
            MappingKind::UtoV | MappingKind::VtoU => Frame::Subspace,
            MappingKind::QtoV | MappingKind::VtoQ => Frame::Quotient,
        }
    }

    /// `A_e` is `[A; B]` rather than `[A | B]`.
    pub fn stacked(self) -> bool {
        matches!(self, MappingKind::UtoV | MappingKind::QtoV)
    }

    fn layout(self) -> Layout {
        Layout {
            frame: self.frame(),
            mode: Mode::Sim,
            transposed: self.stacked(),
            box_second: matches!(self, MappingKind::UtoV | MappingKind::VtoQ),
        }
    }
}

impl fmt::Display for FormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormKind::UxV => "UxV",
            FormKind::QuotxV => "QuotxV",
        })
    }
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MappingKind::UtoV => "UtoV",
            MappingKind::VtoU => "VtoU",
            MappingKind::QtoV => "QtoV",
            MappingKind::VtoQ => "VtoQ",
        })
    }
}

impl FromStr for FormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FormKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Domain(format!("unknown form kind {s:?} (expected UxV or QuotxV)")))
    }
}

impl FromStr for MappingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MappingKind::ALL.into_iter().find(|k| k.to_string() == s).ok_or_else(|| {
            Error::Domain(format!("unknown mapping kind {s:?} (expected UtoV, VtoU, QtoV or VtoQ)"))
        })
    }
}

/// The matrix `[A | B]` of a form, `A` being `m×m` and `B` `m×(n−m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormMatrix {
    kind: FormKind,
    a: Mat,
    b: Mat,
}

/// The matrix `A_e` of a mapping: `[A; B]` (`B` is `(n−m)×m`) for the
/// stacked kinds, `[A | B]` (`B` is `m×(n−m)`) otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingMatrix {
    kind: MappingKind,
    a: Mat,
    b: Mat,
}

fn check_blocks(a: &Mat, b: &Mat, stacked: bool) -> Result<()> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch(format!("A is {}x{}, not square", a.rows(), a.cols())));
    }
    if a.field() != b.field() {
        return Err(Error::FieldMismatch("A and B are over different fields".into()));
    }
    let (along, what) = if stacked { (b.cols(), "columns") } else { (b.rows(), "rows") };
    if along != a.rows() {
        return Err(Error::ShapeMismatch(format!("B has {along} {what}, A is {}x{}", a.rows(), a.rows())));
    }
    Ok(())
}

impl FormMatrix {
    pub fn new(kind: FormKind, a: Mat, b: Mat) -> Result<FormMatrix> {
        check_blocks(&a, &b, false)?;
        Ok(FormMatrix { kind, a, b })
    }

    pub fn kind(&self) -> FormKind {
        self.kind
    }
    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn field(&self) -> ScalarField {
        self.a.field()
    }
    /// `dim U` (or `dim V/U`).
    pub fn m(&self) -> usize {
        self.a.rows()
    }
    /// `dim V`.
    pub fn n(&self) -> usize {
        self.a.rows() + self.b.cols()
    }
    fn max_abs(&self) -> f64 {
        self.a.max_abs().max(self.b.max_abs())
    }

    /// `[A B] ↦ S*[A B]R`.
    pub fn transform(&self, c: &BasisChange) -> Result<FormMatrix> {
        c.check(self.kind.frame(), self.m(), self.n(), self.field())?;
        let ab = Mat::hstack(self.field(), self.m(), &[&self.a, &self.b])?;
        let out = c.s.conj_transpose().mul(&ab)?.mul(&c.r(self.kind.frame())?)?;
        let m = self.m();
        FormMatrix::new(self.kind, out.block(0, 0, m, m), out.block(0, m, m, self.n() - m))
    }
}

impl MappingMatrix {
    pub fn new(kind: MappingKind, a: Mat, b: Mat) -> Result<MappingMatrix> {
        check_blocks(&a, &b, kind.stacked())?;
        Ok(MappingMatrix { kind, a, b })
    }

    pub fn kind(&self) -> MappingKind {
        self.kind
    }
    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn field(&self) -> ScalarField {
        self.a.field()
    }
    pub fn m(&self) -> usize {
        self.a.rows()
    }
    pub fn n(&self) -> usize {
        self.a.rows() + if self.kind.stacked() { self.b.rows() } else { self.b.cols() }
    }
    fn max_abs(&self) -> f64 {
        self.a.max_abs().max(self.b.max_abs())
    }

    /// The full matrix `A_e`.
    pub fn matrix(&self) -> Result<Mat> {
        if self.kind.stacked() {
            Mat::vstack(self.field(), self.m(), &[&self.a, &self.b])
        } else {
            Mat::hstack(self.field(), self.m(), &[&self.a, &self.b])
        }
    }

    /// `[A; B] ↦ R⁻¹[A; B]S` or `[A B] ↦ S⁻¹[A B]R`.
    pub fn transform(&self, c: &BasisChange) -> Result<MappingMatrix> {
        c.check(self.kind.frame(), self.m(), self.n(), self.field())?;
        let r = c.r(self.kind.frame())?;
        let ae = self.matrix()?;
        let (m, n) = (self.m(), self.n());
        if self.kind.stacked() {
            let out = r.inverse()?.mul(&ae)?.mul(&c.s)?;
            MappingMatrix::new(self.kind, out.block(0, 0, m, m), out.block(m, 0, n - m, m))
        } else {
            let out = c.s.inverse()?.mul(&ae)?.mul(&r)?;
            MappingMatrix::new(self.kind, out.block(0, 0, m, m), out.block(0, m, m, n - m))
        }
    }
}

/// A change of basis of `V` respecting `U`: nonsingular `S` (`m×m`) and
/// `Q` (`(n−m)×(n−m)`), arbitrary `P` placed according to the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisChange {
    pub s: Mat,
    pub p: Mat,
    pub q: Mat,
}

impl BasisChange {
    pub fn identity(f: ScalarField, frame: Frame, m: usize, n: usize) -> BasisChange {
        let (pr, pc) = p_shape(frame, m, n);
        BasisChange { s: Mat::identity(f, m), p: Mat::zeros(f, pr, pc), q: Mat::identity(f, n - m) }
    }

    fn check(&self, frame: Frame, m: usize, n: usize, f: ScalarField) -> Result<()> {
        if [&self.s, &self.p, &self.q].iter().any(|x| x.field() != f) {
            return Err(Error::FieldMismatch("basis change over a different field".into()));
        }
        let (pr, pc) = p_shape(frame, m, n);
        if (self.s.rows(), self.s.cols()) != (m, m)
            || (self.q.rows(), self.q.cols()) != (n - m, n - m)
            || (self.p.rows(), self.p.cols()) != (pr, pc)
        {
            return Err(Error::ShapeMismatch(format!(
                "basis change with S {}x{}, P {}x{}, Q {}x{} does not fit m={m}, n={n}",
                self.s.rows(),
                self.s.cols(),
                self.p.rows(),
                self.p.cols(),
                self.q.rows(),
                self.q.cols()
            )));
        }
        if !self.s.is_nonsingular() || !self.q.is_nonsingular() {
            return Err(Error::SingularMatrix);
        }
        Ok(())
    }

    /// The full change matrix `R`.
    pub fn r(&self, frame: Frame) -> Result<Mat> {
        let f = self.s.field();
        let (m, k) = (self.s.rows(), self.q.rows());
        let mut r = Mat::zeros(f, m + k, m + k);
        r.set_block(0, 0, &self.s);
        r.set_block(m, m, &self.q);
        match frame {
            Frame::Subspace => r.set_block(0, m, &self.p),
            Frame::Quotient => r.set_block(m, 0, &self.p),
        }
        Ok(r)
    }

    fn from_r(r: &Mat, frame: Frame, m: usize) -> BasisChange {
        let n = r.rows();
        let p = match frame {
            Frame::Subspace => r.block(0, m, m, n - m),
            Frame::Quotient => r.block(m, 0, n - m, m),
        };
        BasisChange { s: r.block(0, 0, m, m), p, q: r.block(m, m, n - m, n - m) }
    }
}

fn p_shape(frame: Frame, m: usize, n: usize) -> (usize, usize) {
    match frame {
        Frame::Subspace => (m, n - m),
        Frame::Quotient => (n - m, m),
    }
}

/// Conjugation by the block swap: moves the last `n − m` coordinates first.
fn swap_blocks(x: &Mat, m: usize) -> Mat {
    let n = x.rows();
    let order: Vec<usize> = (m..n).chain(0..m).collect();
    x.select(&order, &order)
}

fn unswap_blocks(x: &Mat, m: usize) -> Mat {
    swap_blocks(x, x.rows() - m)
}

fn widths(l: Layout, m: usize, n: usize) -> (Vec<usize>, usize) {
    if l.box_second {
        (vec![n - m, m], 1)
    } else {
        (vec![m, n - m], 0)
    }
}

fn to_witness(l: Layout, c: &BasisChange) -> Result<Witness> {
    let (m, n) = (c.s.rows(), c.s.rows() + c.q.rows());
    let r = c.r(l.frame)?;
    let r = if l.transposed { r.inverse()?.transpose() } else { r };
    let w = if l.box_second { swap_blocks(&r, m) } else { r };
    let (ws, k) = widths(l, m, n);
    Witness::new(w, &ws, k, l.mode)
}

fn from_witness(l: Layout, w: &Witness, m: usize) -> Result<BasisChange> {
    if w.mode() != l.mode {
        return Err(Error::LayoutMismatch(format!("a {} witness where {} is needed", w.mode(), l.mode)));
    }
    let x = w.matrix();
    let r = if l.box_second { unswap_blocks(x, m) } else { x.clone() };
    let r = if l.transposed { r.transpose().inverse()? } else { r };
    Ok(BasisChange::from_r(&r, l.frame, m))
}

fn two_strips(first: Mat, second: Mat, box_second: bool) -> Result<Bangle> {
    let f = first.field();
    Bangle::new(f, vec![first, second], usize::from(box_second))
}

fn split(b: &Bangle, l: Layout) -> Result<(Mat, Mat)> {
    if b.t() != 2 || b.boxed() != usize::from(l.box_second) {
        return Err(Error::LayoutMismatch(format!(
            "expected two strips with the box at {}, got {} strips with the box at {}",
            usize::from(l.box_second) + 1,
            b.t(),
            b.boxed() + 1
        )));
    }
    let (a, rest) = if l.box_second { (b.strip(1), b.strip(0)) } else { (b.strip(0), b.strip(1)) };
    Ok(if l.transposed { (a.transpose(), rest.transpose()) } else { (a.clone(), rest.clone()) })
}

pub fn bangle_of_form(f: &FormMatrix) -> Result<Bangle> {
    if f.kind.layout().box_second {
        two_strips(f.b.clone(), f.a.clone(), true)
    } else {
        two_strips(f.a.clone(), f.b.clone(), false)
    }
}

pub fn form_of_bangle(b: &Bangle, kind: FormKind) -> Result<FormMatrix> {
    let (a, rest) = split(b, kind.layout())?;
    FormMatrix::new(kind, a, rest)
}

pub fn bangle_of_mapping(mp: &MappingMatrix) -> Result<Bangle> {
    let l = mp.kind.layout();
    let (a, b) = if l.transposed { (mp.a.transpose(), mp.b.transpose()) } else { (mp.a.clone(), mp.b.clone()) };
    if l.box_second {
        two_strips(b, a, true)
    } else {
        two_strips(a, b, false)
    }
}

pub fn mapping_of_bangle(b: &Bangle, kind: MappingKind) -> Result<MappingMatrix> {
    let (a, rest) = split(b, kind.layout())?;
    MappingMatrix::new(kind, a, rest)
}

/// The bangle witness realizing a form's basis change.
pub fn form_witness(kind: FormKind, c: &BasisChange) -> Result<Witness> {
    to_witness(kind.layout(), c)
}

pub fn form_change(kind: FormKind, w: &Witness, m: usize) -> Result<BasisChange> {
    from_witness(kind.layout(), w, m)
}

pub fn mapping_witness(kind: MappingKind, c: &BasisChange) -> Result<Witness> {
    to_witness(kind.layout(), c)
}

pub fn mapping_change(kind: MappingKind, w: &Witness, m: usize) -> Result<BasisChange> {
    from_witness(kind.layout(), w, m)
}

/// Anything a [`BasisChange`] acts on.
pub trait SubspaceMatrix: Sized {
    fn transform(&self, c: &BasisChange) -> Result<Self>;
    fn same_shape(&self, other: &Self) -> bool;
    /// `0` on exact fields.
    fn tolerance(&self, other: &Self, c: &BasisChange) -> f64;
    fn distance(&self, other: &Self) -> Result<f64>;
}

fn float_tol(f: ScalarField, x: f64, y: f64, c: &BasisChange) -> f64 {
    match f.eps() {
        None => 0.0,
        Some(eps) => {
            let n = (c.s.rows() + c.q.rows()).max(1) as f64;
            let growth = c.s.max_abs().max(c.p.max_abs()).max(c.q.max_abs()).max(1.0);
            10.0 * eps * n * (x * growth * growth).max(y).max(1.0)
        }
    }
}

impl SubspaceMatrix for FormMatrix {
    fn transform(&self, c: &BasisChange) -> Result<Self> {
        FormMatrix::transform(self, c)
    }
    fn same_shape(&self, o: &Self) -> bool {
        self.kind == o.kind && self.m() == o.m() && self.n() == o.n() && self.field() == o.field()
    }
    fn tolerance(&self, o: &Self, c: &BasisChange) -> f64 {
        float_tol(self.field(), self.max_abs(), o.max_abs(), c)
    }
    fn distance(&self, o: &Self) -> Result<f64> {
        Ok(self.a.sub(&o.a)?.max_abs().max(self.b.sub(&o.b)?.max_abs()))
    }
}

impl SubspaceMatrix for MappingMatrix {
    fn transform(&self, c: &BasisChange) -> Result<Self> {
        MappingMatrix::transform(self, c)
    }
    fn same_shape(&self, o: &Self) -> bool {
        self.kind == o.kind && self.m() == o.m() && self.n() == o.n() && self.field() == o.field()
    }
    fn tolerance(&self, o: &Self, c: &BasisChange) -> f64 {
        // Inverses enter the mapping law; scale by their size too.
        let inv = c.s.inverse().map(|x| x.max_abs()).unwrap_or(f64::INFINITY).max(1.0);
        float_tol(self.field(), self.max_abs() * inv, o.max_abs(), c)
    }
    fn distance(&self, o: &Self) -> Result<f64> {
        Ok(self.a.sub(&o.a)?.max_abs().max(self.b.sub(&o.b)?.max_abs()))
    }
}

/// Whether `c` carries `x` to `y`: exactly over exact fields, within
/// `10·eps·scale` over the complex floats.
pub fn verify_equivalence<T: SubspaceMatrix>(x: &T, y: &T, c: &BasisChange) -> Result<bool> {
    if !x.same_shape(y) {
        return Err(Error::ShapeMismatch("the two matrices have different kinds or shapes".into()));
    }
    let image = x.transform(c)?;
    Ok(image.distance(y)? <= x.tolerance(y, c))
}

/// Result of canonicalizing a form or mapping.
#[derive(Clone, Debug)]
pub struct Canonicalized<T> {
    /// `None` when the regular part has invariants but no canonical matrix.
    pub canonical: Option<T>,
    /// `K ⊎ singular summands`, the regularizing decomposition itself.
    pub decomposed: T,
    /// Carries the input to `decomposed`.
    pub change: BasisChange,
    pub descriptor: Descriptor,
    pub unresolved: usize,
}

pub fn canonicalize_form(f: &FormMatrix) -> Result<Canonicalized<FormMatrix>> {
    let cf = canonical_bangle(&bangle_of_form(f)?, Mode::Star)?;
    let dec = &cf.decomposition;
    Ok(Canonicalized {
        canonical: cf.bangle.as_ref().map(|b| form_of_bangle(b, f.kind)).transpose()?,
        decomposed: form_of_bangle(&dec.assemble()?, f.kind)?,
        change: form_change(f.kind, &dec.witness, f.m())?,
        descriptor: cf.descriptor,
        unresolved: cf.unresolved,
    })
}

/// Over exact fields the regular part comes out as a direct sum of
/// companion matrices of the invariant factors.
pub fn canonicalize_mapping(mp: &MappingMatrix) -> Result<Canonicalized<MappingMatrix>> {
    let cf = canonical_bangle(&bangle_of_mapping(mp)?, Mode::Sim)?;
    let dec = &cf.decomposition;
    Ok(Canonicalized {
        canonical: cf.bangle.as_ref().map(|b| mapping_of_bangle(b, mp.kind)).transpose()?,
        decomposed: mapping_of_bangle(&dec.assemble()?, mp.kind)?,
        change: mapping_change(mp.kind, &dec.witness, mp.m())?,
        descriptor: cf.descriptor,
        unresolved: cf.unresolved,
    })
}

pub fn random_change(f: ScalarField, frame: Frame, m: usize, n: usize, rng: &mut impl Rng) -> BasisChange {
    let (pr, pc) = p_shape(frame, m, n);
    BasisChange {
        s: random_nonsingular(f, m, rng),
        p: random_mat(f, pr, pc, 0.7, rng),
        q: random_nonsingular(f, n - m, rng),
    }
}

pub fn random_form(f: ScalarField, kind: FormKind, m: usize, n: usize, density: f64, rng: &mut impl Rng) -> FormMatrix {
    FormMatrix::new(kind, random_mat(f, m, m, density, rng), random_mat(f, m, n - m, density, rng))
        .expect("shapes fit by construction")
}

pub fn random_mapping(
    f: ScalarField,
    kind: MappingKind,
    m: usize,
    n: usize,
    density: f64,
    rng: &mut impl Rng,
) -> MappingMatrix {
    let b = if kind.stacked() { random_mat(f, n - m, m, density, rng) } else { random_mat(f, m, n - m, density, rng) };
    MappingMatrix::new(kind, random_mat(f, m, m, density, rng), b).expect("shapes fit by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bangle::{e_col, jordan, SingularSummand};
    use crate::canonical::RegularClass;
    use crate::field::Involution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q() -> ScalarField {
        ScalarField::Rational
    }

    fn qi() -> ScalarField {
        ScalarField::Gaussian(Involution::Conjugation)
    }

    fn m(f: ScalarField, r: usize, c: usize, v: &[i64]) -> Mat {
        Mat::from_i64(f, r, c, v)
    }

    #[test]
    fn form_bangles_follow_the_table() {
        let f = q();
        let one = FormMatrix::new(FormKind::UxV, m(f, 1, 1, &[1]), Mat::zeros(f, 1, 0)).unwrap();
        let b = bangle_of_form(&one).unwrap();
        assert_eq!((b.t(), b.boxed(), b.widths()), (2, 0, vec![1, 0]));

        let j2 = jordan(f, 2, &f.zero());
        let quot = FormMatrix::new(FormKind::QuotxV, j2.clone(), e_col(f, 2)).unwrap();
        let b = bangle_of_form(&quot).unwrap();
        assert_eq!(b.boxed(), 1);
        assert_eq!(b.strip(0), &e_col(f, 2));
        assert_eq!(b.strip(1), &j2);

        let empty = FormMatrix::new(FormKind::UxV, Mat::zeros(f, 0, 0), Mat::zeros(f, 0, 3)).unwrap();
        let b = bangle_of_form(&empty).unwrap();
        assert_eq!((b.rows(), b.widths()), (0, vec![0, 3]));
        let d = crate::regularize::regularize(&b, Mode::Star).unwrap();
        assert_eq!(d.singular, vec![SingularSummand::e_in(1, 0); 3]);
    }

    #[test]
    fn mapping_bangles_follow_the_table() {
        let f = qi();
        let a = m(f, 2, 2, &[1, 2, 3, 4]);
        let side = m(f, 2, 1, &[5, 6]);
        let stack = m(f, 1, 2, &[5, 6]);
        let i = f.imaginary_unit().unwrap();
        let ai = a.scale(&i);

        let utov = MappingMatrix::new(MappingKind::UtoV, ai.clone(), stack.clone()).unwrap();
        let b = bangle_of_mapping(&utov).unwrap();
        assert_eq!(b.boxed(), 1);
        assert_eq!(b.strip(0), &stack.transpose());
        // Plain transpose: the imaginary unit keeps its sign.
        assert_eq!(b.strip(1), &ai.transpose());

        let qtov = MappingMatrix::new(MappingKind::QtoV, a.clone(), stack).unwrap();
        let b = bangle_of_mapping(&qtov).unwrap();
        assert_eq!((b.boxed(), b.strip(0)), (0, &a.transpose()));

        let vtou = MappingMatrix::new(MappingKind::VtoU, a.clone(), side.clone()).unwrap();
        let b = bangle_of_mapping(&vtou).unwrap();
        assert_eq!((b.boxed(), b.strip(0), b.strip(1)), (0, &a, &side));

        let vtoq = MappingMatrix::new(MappingKind::VtoQ, a.clone(), side.clone()).unwrap();
        let b = bangle_of_mapping(&vtoq).unwrap();
        assert_eq!((b.boxed(), b.strip(0), b.strip(1)), (1, &side, &a));

        let scalar = MappingMatrix::new(MappingKind::VtoU, m(f, 1, 1, &[2]), Mat::zeros(f, 1, 0)).unwrap();
        let b = bangle_of_mapping(&scalar).unwrap();
        assert_eq!(b.widths(), vec![1, 0]);
        assert_eq!(b.strip(0), &m(f, 1, 1, &[2]));

        let none = MappingMatrix::new(MappingKind::QtoV, Mat::zeros(f, 0, 0), Mat::zeros(f, 3, 0)).unwrap();
        let b = bangle_of_mapping(&none).unwrap();
        assert_eq!((b.rows(), b.widths()), (0, vec![0, 3]));
    }

    #[test]
    fn shapes_are_checked() {
        let f = q();
        assert!(matches!(
            FormMatrix::new(FormKind::UxV, m(f, 1, 2, &[1, 2]), Mat::zeros(f, 1, 0)),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            MappingMatrix::new(MappingKind::UtoV, Mat::identity(f, 2), Mat::zeros(f, 2, 1)),
            Err(Error::ShapeMismatch(_))
        ));
        let x = FormMatrix::new(FormKind::UxV, Mat::identity(f, 1), Mat::zeros(f, 1, 0)).unwrap();
        let y = FormMatrix::new(FormKind::UxV, Mat::identity(f, 2), Mat::zeros(f, 2, 0)).unwrap();
        let c = BasisChange::identity(f, Frame::Subspace, 1, 1);
        assert!(matches!(verify_equivalence(&x, &y, &c), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn round_trips_cover_edge_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in [q(), qi(), ScalarField::prime(5).unwrap()] {
            for (mm, n) in [(0, 0), (0, 3), (2, 2), (1, 3), (3, 5)] {
                for kind in FormKind::ALL {
                    let x = random_form(f, kind, mm, n, 0.8, &mut rng);
                    assert_eq!(form_of_bangle(&bangle_of_form(&x).unwrap(), kind).unwrap(), x);
                }
                for kind in MappingKind::ALL {
                    let x = random_mapping(f, kind, mm, n, 0.8, &mut rng);
                    assert_eq!(mapping_of_bangle(&bangle_of_mapping(&x).unwrap(), kind).unwrap(), x);
                }
            }
        }
    }

    #[test]
    fn one_by_one_law() {
        let f = qi();
        let x = FormMatrix::new(FormKind::UxV, m(f, 1, 1, &[1]), Mat::zeros(f, 1, 0)).unwrap();
        let c = BasisChange { s: m(f, 1, 1, &[2]), p: Mat::zeros(f, 1, 0), q: Mat::identity(f, 0) };
        let y = FormMatrix::new(FormKind::UxV, m(f, 1, 1, &[4]), Mat::zeros(f, 1, 0)).unwrap();
        assert!(verify_equivalence(&x, &y, &c).unwrap());
        assert!(verify_equivalence(&x, &x, &BasisChange::identity(f, Frame::Subspace, 1, 1)).unwrap());
        assert!(!verify_equivalence(&x, &x, &c).unwrap());

        // With S = [i]: S*·1·S = (−i)(i) = 1 under conjugation.
        let i = f.imaginary_unit().unwrap();
        let ci = BasisChange { s: Mat::scalar(f, i), ..c };
        assert!(verify_equivalence(&x, &x, &ci).unwrap());
    }

    /// Hand-expanded block laws, independent of the witness plumbing.
    #[test]
    fn laws_match_block_expansions() {
        let f = qi();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mm, n) = (2, 3);
        for kind in FormKind::ALL {
            let x = random_form(f, kind, mm, n, 0.9, &mut rng);
            let c = random_change(f, kind.frame(), mm, n, &mut rng);
            let y = x.transform(&c).unwrap();
            let sh = c.s.conj_transpose();
            let (a2, b2) = match kind {
                // S*[AS | AP + BQ]
                FormKind::UxV => (
                    sh.mul(&x.a).unwrap().mul(&c.s).unwrap(),
                    sh.mul(&x.a.mul(&c.p).unwrap().add(&x.b.mul(&c.q).unwrap()).unwrap()).unwrap(),
                ),
                // S*[AS + BP | BQ]
                FormKind::QuotxV => (
                    sh.mul(&x.a.mul(&c.s).unwrap().add(&x.b.mul(&c.p).unwrap()).unwrap()).unwrap(),
                    sh.mul(&x.b).unwrap().mul(&c.q).unwrap(),
                ),
            };
            assert_eq!((y.a(), y.b()), (&a2, &b2), "{kind}");
        }
        for kind in MappingKind::ALL {
            let x = random_mapping(f, kind, mm, n, 0.9, &mut rng);
            let c = random_change(f, kind.frame(), mm, n, &mut rng);
            let y = x.transform(&c).unwrap();
            let si = c.s.inverse().unwrap();
            let qi_ = c.q.inverse().unwrap();
            let (a2, b2) = match kind {
                // R⁻¹ = [[S⁻¹, −S⁻¹PQ⁻¹], [0, Q⁻¹]]
                MappingKind::UtoV => {
                    let top = si.mul(&x.a).unwrap().sub(&si.mul(&c.p).unwrap().mul(&qi_).unwrap().mul(&x.b).unwrap()).unwrap();
                    (top.mul(&c.s).unwrap(), qi_.mul(&x.b).unwrap().mul(&c.s).unwrap())
                }
                // S⁻¹[AS | AP + BQ]
                MappingKind::VtoU => (
                    si.mul(&x.a).unwrap().mul(&c.s).unwrap(),
                    si.mul(&x.a.mul(&c.p).unwrap().add(&x.b.mul(&c.q).unwrap()).unwrap()).unwrap(),
                ),
                // R⁻¹ = [[S⁻¹, 0], [−Q⁻¹PS⁻¹, Q⁻¹]]
                MappingKind::QtoV => {
                    let bot = qi_.mul(&x.b).unwrap().sub(&qi_.mul(&c.p).unwrap().mul(&si).unwrap().mul(&x.a).unwrap()).unwrap();
                    (si.mul(&x.a).unwrap().mul(&c.s).unwrap(), bot.mul(&c.s).unwrap())
                }
                // S⁻¹[AS + BP | BQ]
                MappingKind::VtoQ => (
                    si.mul(&x.a.mul(&c.s).unwrap().add(&x.b.mul(&c.p).unwrap()).unwrap()).unwrap(),
                    si.mul(&x.b).unwrap().mul(&c.q).unwrap(),
                ),
            };
            assert_eq!((y.a(), y.b()), (&a2, &b2), "{kind}");
        }
    }

    #[test]
    fn witnesses_commute_with_the_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in [q(), qi()] {
            for (mm, n) in [(0, 2), (2, 2), (2, 4)] {
                for kind in FormKind::ALL {
                    let x = random_form(f, kind, mm, n, 0.8, &mut rng);
                    let c = random_change(f, kind.frame(), mm, n, &mut rng);
                    let w = form_witness(kind, &c).unwrap();
                    let via_bangle = form_of_bangle(&w.apply(&bangle_of_form(&x).unwrap()).unwrap(), kind).unwrap();
                    assert_eq!(via_bangle, x.transform(&c).unwrap());
                    assert_eq!(form_change(kind, &w, mm).unwrap(), c);
                }
                for kind in MappingKind::ALL {
                    let x = random_mapping(f, kind, mm, n, 0.8, &mut rng);
                    let c = random_change(f, kind.frame(), mm, n, &mut rng);
                    let w = mapping_witness(kind, &c).unwrap();
                    let via_bangle =
                        mapping_of_bangle(&w.apply(&bangle_of_mapping(&x).unwrap()).unwrap(), kind).unwrap();
                    assert_eq!(via_bangle, x.transform(&c).unwrap());
                    assert_eq!(mapping_change(kind, &w, mm).unwrap(), c);
                }
            }
        }
    }

    #[test]
    fn canonical_form_examples() {
        let f = qi();
        let z = FormMatrix::new(FormKind::UxV, m(f, 1, 1, &[0]), Mat::zeros(f, 1, 0)).unwrap();
        let c = canonicalize_form(&z).unwrap();
        assert_eq!(c.canonical.as_ref(), Some(&z));
        assert_eq!(c.descriptor.singular, vec![SingularSummand::plain(1)]);

        // [1] ⊎ [J_1(0) | E_1], scrambled by random S, P, Q.
        let a = m(f, 2, 2, &[1, 0, 0, 0]);
        let b = m(f, 2, 1, &[0, 1]);
        let x = FormMatrix::new(FormKind::UxV, a, b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let y = x.transform(&random_change(f, Frame::Subspace, 2, 3, &mut rng)).unwrap();
            let c = canonicalize_form(&y).unwrap();
            assert_eq!(c.descriptor.singular, vec![SingularSummand::e_in(1, 1)]);
            assert_eq!(c.descriptor.size, 1);
            assert!(verify_equivalence(&y, &c.decomposed, &c.change).unwrap());
            assert_eq!(c.canonical.as_ref(), Some(&x));
        }

        // Bilinear over ℚ: invariants only.
        let f = q();
        let x = FormMatrix::new(FormKind::QuotxV, m(f, 2, 2, &[1, 2, 0, 3]), Mat::zeros(f, 2, 0)).unwrap();
        let c = canonicalize_form(&x).unwrap();
        assert!(c.canonical.is_none());
        assert!(matches!(c.descriptor.regular, RegularClass::Cosquare(_)));
        assert!(verify_equivalence(&x, &c.decomposed, &c.change).unwrap());
    }

    #[test]
    fn canonical_mapping_examples() {
        let f = q();
        let id = MappingMatrix::new(MappingKind::VtoU, Mat::identity(f, 2), Mat::zeros(f, 2, 0)).unwrap();
        assert_eq!(canonicalize_mapping(&id).unwrap().canonical, Some(id));

        let nil = MappingMatrix::new(MappingKind::VtoQ, jordan(f, 2, &f.zero()), e_col(f, 2)).unwrap();
        let c = canonicalize_mapping(&nil).unwrap();
        assert_eq!(c.descriptor.singular, vec![SingularSummand::e_in(0, 2)]);
        assert_eq!(c.canonical, Some(nil));

        // [2] ⊎ [J_1(0) | E_1] under the V → U law.
        let x = MappingMatrix::new(MappingKind::VtoU, m(f, 2, 2, &[2, 0, 0, 0]), m(f, 2, 1, &[0, 1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let y = x.transform(&random_change(f, Frame::Subspace, 2, 3, &mut rng)).unwrap();
            let c = canonicalize_mapping(&y).unwrap();
            assert_eq!(c.descriptor.singular, vec![SingularSummand::e_in(1, 1)]);
            assert_eq!(c.descriptor.size, 1);
            assert!(verify_equivalence(&y, &c.decomposed, &c.change).unwrap());
            assert_eq!(c.canonical.as_ref(), Some(&x));
        }
    }

    #[test]
    fn canonical_outputs_are_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let f = qi();
        for kind in FormKind::ALL {
            for _ in 0..10 {
                let x = random_form(f, kind, 2, 4, 0.5, &mut rng);
                let c = canonicalize_form(&x).unwrap();
                if let Some(k) = c.canonical {
                    let again = canonicalize_form(&k).unwrap();
                    assert!(again.descriptor.approx_eq(&c.descriptor, 1e-6));
                }
            }
        }
        for kind in MappingKind::ALL {
            for _ in 0..10 {
                let x = random_mapping(q(), kind, 2, 4, 0.5, &mut rng);
                let c = canonicalize_mapping(&x).unwrap();
                let k = c.canonical.unwrap();
                assert_eq!(canonicalize_mapping(&k).unwrap().canonical, Some(k));
            }
        }
    }
}

//! Regularizing decompositions.
//!
//! A reduction step transforms a bangle `A` into `rebuild(layout, M)`: a
//! bangle whose entries are ones at pivot positions, zeros elsewhere, and
//! the entries of a smaller bangle `M` at the inner positions. Steps are
//! chained on the inner bangle until it is a nonsingular box with empty
//! side strips. The total witness is assembled bottom-up by lifting each
//! inner witness through its layout, so no elimination is ever re-run on
//! the full matrix.

use std::ops::Range;

use crate::bangle::{regular_bangle, Attachment, Bangle, Mode, SingularSummand, Witness};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::matrix::{column_echelon_in_strip, rank_reveal, unitary_rank_reveal_tol, Mat, RankRevelation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowRole {
    /// Row `i` of the inner bangle.
    Inner(usize),
    /// Holds a single one, in the given outer column.
    Pivot(usize),
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColRole {
    /// Column `j` of the inner bangle (as one wide matrix).
    Inner(usize),
    /// Holds a single one, in the given outer row.
    Pivot(usize),
    Zero,
}

/// Where the inner bangle and the identity pivots sit inside the outer one.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub field: ScalarField,
    pub outer_widths: Vec<usize>,
    pub outer_boxed: usize,
    pub inner_widths: Vec<usize>,
    pub inner_boxed: usize,
    pub rows: Vec<RowRole>,
    pub cols: Vec<ColRole>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    LeftStar,
    RightStar,
    LeftSim,
    RightSim,
    /// Drops the empty strips left of the box once they have no columns.
    DropEmpty,
}

#[derive(Clone, Debug)]
pub struct ReductionStep {
    pub kind: StepKind,
    /// The pivot block sizes in the order of the inner strips they create
    /// (including the block of zero rows for right-hand steps).
    pub ranks: Vec<usize>,
    pub inner: Bangle,
    pub layout: Layout,
    /// `apply(witness, input) = layout.rebuild(inner)`.
    pub witness: Witness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub kind: StepKind,
    pub ranks: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RegularizingDecomposition {
    pub regular: Mat,
    pub singular: Vec<SingularSummand>,
    pub t: usize,
    pub boxed: usize,
    pub witness: Witness,
    pub mode: Mode,
    pub steps: Vec<StepRecord>,
}

/// Tolerances of one run. Exact fields ignore them.
#[derive(Clone, Copy, Debug)]
struct Ctx {
    eps: Option<f64>,
    /// Frobenius norm of the input bangle.
    scale: f64,
    /// Largest entry of the input bangle.
    scale_max: f64,
}

impl Ctx {
    fn for_input(a: &Bangle) -> Ctx {
        let m = a.to_matrix();
        Ctx { eps: a.field().eps(), scale: m.frobenius(), scale_max: m.max_abs() }
    }

    /// Absolute threshold for rank decisions on a bangle at some depth.
    fn rank_tol(&self, current: &Bangle) -> f64 {
        match self.eps {
            Some(eps) => eps * self.scale.max(current.to_matrix().frobenius()).max(f64::MIN_POSITIVE),
            None => 0.0,
        }
    }

    fn deviation_tol(&self) -> f64 {
        10.0 * self.eps.unwrap_or(0.0) * self.scale_max.max(1.0)
    }
}

impl Layout {
    fn outer_total(&self) -> usize {
        self.outer_widths.iter().sum()
    }

    fn strip_of_outer(&self) -> Vec<usize> {
        self.outer_widths.iter().enumerate().flat_map(|(i, &w)| std::iter::repeat_n(i, w)).collect()
    }

    fn outer_box_cols(&self) -> Range<usize> {
        let o: usize = self.outer_widths[..self.outer_boxed].iter().sum();
        o..o + self.outer_widths[self.outer_boxed]
    }

    /// Outer row holding inner row `i`.
    pub fn outer_row_of_inner(&self) -> Vec<usize> {
        let n_inner = self.inner_widths[self.inner_boxed];
        let mut out = vec![usize::MAX; n_inner];
        for (r, role) in self.rows.iter().enumerate() {
            if let RowRole::Inner(i) = role {
                out[*i] = r;
            }
        }
        out
    }

    /// Trivial layout: the inner bangle is the outer one.
    fn identity(a: &Bangle) -> Layout {
        Layout {
            field: a.field(),
            outer_widths: a.widths(),
            outer_boxed: a.boxed(),
            inner_widths: a.widths(),
            inner_boxed: a.boxed(),
            rows: (0..a.rows()).map(RowRole::Inner).collect(),
            cols: (0..a.total_cols()).map(ColRole::Inner).collect(),
        }
    }

    fn check_inner(&self, m: &Bangle) -> Result<()> {
        if m.widths() != self.inner_widths || m.boxed() != self.inner_boxed || m.field() != self.field {
            return Err(Error::LayoutMismatch(format!(
                "inner bangle has widths {:?} (box {}), layout expects {:?} (box {})",
                m.widths(),
                m.boxed() + 1,
                self.inner_widths,
                self.inner_boxed + 1
            )));
        }
        Ok(())
    }

    pub fn rebuild(&self, m: &Bangle) -> Result<Bangle> {
        self.check_inner(m)?;
        let f = self.field;
        let mm = m.to_matrix();
        let mut x = Mat::zeros(f, self.rows.len(), self.cols.len());
        for (r, role) in self.rows.iter().enumerate() {
            match *role {
                RowRole::Inner(i) => {
                    for (c, cr) in self.cols.iter().enumerate() {
                        if let ColRole::Inner(j) = *cr {
                            x.set(r, c, mm.get(i, j).clone());
                        }
                    }
                }
                RowRole::Pivot(p) => x.set(r, p, f.one()),
                RowRole::Zero => {}
            }
        }
        Bangle::from_matrix(&x, &self.outer_widths, self.outer_boxed)
    }

    /// Reads the inner bangle off an outer matrix of this layout.
    pub fn extract(&self, outer: &Mat) -> Result<Bangle> {
        let n_inner = self.inner_widths[self.inner_boxed];
        let total: usize = self.inner_widths.iter().sum();
        let mut m = Mat::zeros(self.field, n_inner, total);
        for (r, role) in self.rows.iter().enumerate() {
            if let RowRole::Inner(i) = *role {
                for (c, cr) in self.cols.iter().enumerate() {
                    if let ColRole::Inner(j) = *cr {
                        m.set(i, j, outer.get(r, c).clone());
                    }
                }
            }
        }
        Bangle::from_matrix(&m, &self.inner_widths, self.inner_boxed)
    }

    /// Given `N = apply(w, M)`, build the outer witness mapping
    /// `rebuild(M)` to `rebuild(N)`.
    ///
    /// With `X = rebuild(M)`, `Y = rebuild(N)` the requirement is
    /// `X·S = U` where `U = (S_kk*)⁻¹·Y` (star) or `S_kk·Y` (sim). The inner
    /// columns of `S` copy `w`, zero columns get identity, pivot rows of `X`
    /// read rows of `U` directly, and the remaining entries of pivot columns
    /// solve a linear system in the inner rows.
    pub fn lift(&self, w: &Witness, m: &Bangle, n: &Bangle, tol: f64) -> Result<Witness> {
        self.check_inner(m)?;
        self.check_inner(n)?;
        let f = self.field;
        let total = self.outer_total();
        let strip = self.strip_of_outer();
        let wm = w.matrix();
        let mut s = Mat::zeros(f, total, total);
        let inner_cols: Vec<(usize, usize)> = self
            .cols
            .iter()
            .enumerate()
            .filter_map(|(c, r)| if let ColRole::Inner(j) = *r { Some((c, j)) } else { None })
            .collect();
        for &(c1, j1) in &inner_cols {
            for &(c2, j2) in &inner_cols {
                let v = wm.get(j1, j2);
                if !f.is_exact_zero(v) {
                    s.set(c1, c2, v.clone());
                }
            }
        }
        for (c, role) in self.cols.iter().enumerate() {
            if *role == ColRole::Zero {
                s.set(c, c, f.one());
            }
        }
        let bc = self.outer_box_cols();
        let skk = s.block(bc.start, bc.start, bc.len(), bc.len());
        let einv = match w.mode() {
            Mode::Star => skk.inverse()?.conj_transpose(),
            Mode::Sim => skk,
        };
        let y = self.rebuild(n)?.to_matrix();
        let u = einv.mul(&y)?;
        let small = |v: &crate::field::Scalar| f.is_negligible(v, 1.0) || f.abs(v) <= tol;
        for (r, role) in self.rows.iter().enumerate() {
            match *role {
                RowRole::Pivot(p) => {
                    for c in 0..total {
                        let v = u.get(r, c);
                        if strip[c] >= strip[p] {
                            s.set(p, c, v.clone());
                        } else if !small(v) {
                            return Err(Error::InvariantViolation(format!(
                                "lift: pivot row {r} needs a below-diagonal entry in column {c}"
                            )));
                        }
                    }
                }
                RowRole::Zero => {
                    if (0..total).any(|c| !small(u.get(r, c))) {
                        return Err(Error::InvariantViolation(format!("lift: zero row {r} is not preserved")));
                    }
                }
                RowRole::Inner(_) => {}
            }
        }
        let inner_rows: Vec<usize> = self.outer_row_of_inner();
        let mm = m.to_matrix();
        for (c, role) in self.cols.iter().enumerate() {
            if !matches!(role, ColRole::Pivot(_)) {
                continue;
            }
            let rhs = Mat::from_fn(f, inner_rows.len(), 1, |i, _| u.get(inner_rows[i], c).clone());
            if rhs.entries().iter().all(|v| f.is_exact_zero(v)) {
                continue;
            }
            let allowed: Vec<(usize, usize)> =
                inner_cols.iter().copied().filter(|&(c2, _)| strip[c2] <= strip[c]).collect();
            let sub = mm.select(&(0..mm.rows()).collect::<Vec<_>>(), &allowed.iter().map(|p| p.1).collect::<Vec<_>>());
            let z = if f.is_exact() {
                sub.solve(&rhs)?
            } else {
                // Negligible right-hand sides are float noise; skip them.
                if rhs.max_abs() <= tol {
                    continue;
                }
                sub.solve(&rhs)?
            };
            for (idx, &(c2, _)) in allowed.iter().enumerate() {
                s.set(c2, c, z.get(idx, 0).clone());
            }
        }
        Ok(Witness::from_parts(s, self.outer_widths.clone(), self.outer_boxed, w.mode()))
    }
}

/// Working copy of a bangle (as one wide matrix) together with the
/// accumulated witness; every elementary operation updates both.
struct Work {
    a: Mat,
    s: Mat,
    widths: Vec<usize>,
    offs: Vec<usize>,
    boxed: usize,
    mode: Mode,
    tol: f64,
}

impl Work {
    fn new(a: &Bangle, mode: Mode, tol: f64) -> Work {
        let widths = a.widths();
        let offs = (0..widths.len()).map(|i| a.offset(i)).collect();
        Work {
            a: a.to_matrix(),
            s: Mat::identity(a.field(), a.total_cols()),
            widths,
            offs,
            boxed: a.boxed(),
            mode,
            tol,
        }
    }

    fn field(&self) -> ScalarField {
        self.a.field()
    }

    fn cols(&self, i: usize) -> Range<usize> {
        self.offs[i]..self.offs[i] + self.widths[i]
    }

    fn right_mul(&mut self, cols: Range<usize>, g: &Mat) -> Result<()> {
        for m in [&mut self.a, &mut self.s] {
            let blk = m.block(0, cols.start, m.rows(), cols.len());
            m.set_block(0, cols.start, &blk.mul(g)?);
        }
        Ok(())
    }

    /// Rows `rows` by `e`; the matching box columns by `e*` or `e⁻¹`.
    fn row_op(&mut self, rows: Range<usize>, e: &Mat) -> Result<()> {
        let nc = self.a.cols();
        let blk = self.a.block(rows.start, 0, rows.len(), nc);
        self.a.set_block(rows.start, 0, &e.mul(&blk)?);
        let g = match self.mode {
            Mode::Star => e.conj_transpose(),
            Mode::Sim => e.inverse()?,
        };
        let bc = self.offs[self.boxed] + rows.start;
        self.right_mul(bc..bc + rows.len(), &g)
    }

    /// Columns `dst` += columns `src` · x.
    fn col_add(&mut self, src: Range<usize>, dst: Range<usize>, x: &Mat) -> Result<()> {
        for m in [&mut self.a, &mut self.s] {
            let add = m.block(0, src.start, m.rows(), src.len()).mul(x)?;
            let cur = m.block(0, dst.start, m.rows(), dst.len());
            m.set_block(0, dst.start, &cur.add(&add)?);
        }
        Ok(())
    }

    fn reveal(&self, blk: &Mat) -> RankRevelation {
        if self.field().is_exact() {
            column_echelon_in_strip(blk)
        } else {
            unitary_rank_reveal_tol(blk, self.tol)
        }
    }

    /// Reduce `A[rows, strip]` to an identity pivot block in its last
    /// columns and in the bottom (or top) rows of `rows`. Returns the rank.
    fn pivot_strip(&mut self, rows: Range<usize>, strip: usize, top: bool) -> Result<usize> {
        let cs = self.cols(strip);
        let blk = self.a.block(rows.start, cs.start, rows.len(), cs.len());
        let rev = self.reveal(&blk);
        let r = rev.rank;
        let (e, core) = if top {
            (reverse_rows(&rev.left), reverse_rows(&rev.core))
        } else {
            (rev.left, rev.core)
        };
        self.row_op(rows, &e)?;
        let w = cs.len();
        let mut norm = Mat::identity(self.field(), w);
        norm.set_block(w - r, w - r, &core.inverse()?);
        self.right_mul(cs, &rev.right.mul(&norm)?)
            .map(|_| r)
    }

    /// Zero the pivot rows in the given strips by adding pivot columns.
    fn clear_rows(&mut self, prow: Range<usize>, pcol: Range<usize>, strips: impl Iterator<Item = usize>) -> Result<()> {
        for j in strips {
            let cj = self.cols(j);
            if cj.is_empty() || prow.is_empty() {
                continue;
            }
            let x = self.a.block(prow.start, cj.start, prow.len(), cj.len());
            if x.is_zero() {
                continue;
            }
            self.col_add(pcol.clone(), cj, &x.neg())?;
        }
        Ok(())
    }

    /// Row-compress the box: its rank rows end up at the bottom (or top).
    fn compress_box(&mut self, top: bool) -> Result<usize> {
        let n = self.widths[self.boxed];
        let bc = self.cols(self.boxed);
        let blk = self.a.block(0, bc.start, n, n);
        let rev = self.reveal(&blk);
        let e = if top { reverse_rows(&rev.left) } else { rev.left };
        self.row_op(0..n, &e)?;
        Ok(rev.rank)
    }

    /// Clear `rows` of every unboxed strip by adding box columns; the box
    /// must be zero outside `rows` and of full row rank on them.
    fn clear_with_box(&mut self, rows: Range<usize>) -> Result<()> {
        let bc = self.cols(self.boxed);
        let bb = self.a.block(rows.start, bc.start, rows.len(), bc.len());
        for j in 0..self.widths.len() {
            if j == self.boxed {
                continue;
            }
            let cj = self.cols(j);
            if cj.is_empty() || rows.is_empty() {
                continue;
            }
            let x = self.a.block(rows.start, cj.start, rows.len(), cj.len());
            if x.is_zero() {
                continue;
            }
            let z = bb.solve(&x)?;
            self.col_add(bc.clone(), cj, &z.neg())?;
        }
        Ok(())
    }

    /// Check the working matrix against the layout and produce the step.
    fn finish(self, kind: StepKind, ranks: Vec<usize>, layout: Layout, ctx: &Ctx) -> Result<ReductionStep> {
        let inner = layout.extract(&self.a)?;
        let rebuilt = layout.rebuild(&inner)?.to_matrix();
        if self.field().is_exact() {
            if rebuilt != self.a {
                return Err(Error::InvariantViolation(format!("{kind:?} did not reach its layout")));
            }
        } else {
            let dev = rebuilt.sub(&self.a)?.max_abs();
            let tol = ctx.deviation_tol();
            if dev > tol {
                return Err(Error::NonConvergence {
                    tol: ctx.eps.unwrap_or(0.0),
                    reason: format!("{kind:?} left residue {dev:e} outside its layout (allowed {tol:e})"),
                });
            }
        }
        let witness = Witness::from_parts(self.s, self.widths, self.boxed, self.mode);
        Ok(ReductionStep { kind, ranks, inner, layout, witness })
    }
}

fn reverse_rows(m: &Mat) -> Mat {
    let rows: Vec<usize> = (0..m.rows()).rev().collect();
    m.select(&rows, &(0..m.cols()).collect::<Vec<_>>())
}

/// Roles shared by the unboxed strips: pivot columns map to their rows,
/// the remaining columns are zero.
fn unboxed_roles(cols: &mut [ColRole], rows: &mut [RowRole], pivots: &[(Range<usize>, Range<usize>)]) {
    for (prow, pcol) in pivots {
        for (r, c) in prow.clone().zip(pcol.clone()) {
            rows[r] = RowRole::Pivot(c);
            cols[c] = ColRole::Pivot(r);
        }
    }
}

fn left_star(a: &Bangle, ctx: &Ctx) -> Result<ReductionStep> {
    let (n, k, t) = (a.rows(), a.boxed(), a.t());
    let mut w = Work::new(a, Mode::Star, ctx.rank_tol(a));
    let mut top = n;
    let mut pivots = Vec::new();
    for i in 0..k {
        let r = w.pivot_strip(0..top, i, false)?;
        let ci = w.cols(i);
        let (prow, pcol) = (top - r..top, ci.end - r..ci.end);
        w.clear_rows(prow.clone(), pcol.clone(), i + 1..t)?;
        pivots.push((prow, pcol));
        top -= r;
    }
    let bo = w.offs[k];
    let total = a.total_cols();
    let mut rows = vec![RowRole::Zero; n];
    let mut cols = vec![ColRole::Zero; total];
    for (r, role) in rows.iter_mut().enumerate().take(top) {
        *role = RowRole::Inner(r);
    }
    for (c, role) in cols.iter_mut().enumerate().skip(bo) {
        *role = ColRole::Inner(c - bo);
    }
    unboxed_roles(&mut cols, &mut rows, &pivots);
    // Pivot blocks from the top down: the last processed strip sits highest.
    let ranks: Vec<usize> = pivots.iter().rev().map(|p| p.0.len()).collect();
    let mut inner_widths = vec![top];
    inner_widths.extend(&ranks);
    inner_widths.extend(&a.widths()[k + 1..]);
    let layout = Layout {
        field: a.field(),
        outer_widths: a.widths(),
        outer_boxed: k,
        inner_widths,
        inner_boxed: 0,
        rows,
        cols,
    };
    w.finish(StepKind::LeftStar, ranks, layout, ctx)
}

fn right_star(a: &Bangle, ctx: &Ctx) -> Result<ReductionStep> {
    if a.boxed() != 0 {
        return Err(Error::LayoutMismatch("right-hand reduction needs the box first".into()));
    }
    let (n, t) = (a.rows(), a.t());
    let mut w = Work::new(a, Mode::Star, ctx.rank_tol(a));
    let rho = w.compress_box(false)?;
    let d = n - rho;
    w.clear_with_box(d..n)?;
    let mut top = d;
    let mut pivots = Vec::new();
    for j in 1..t {
        let r = w.pivot_strip(0..top, j, false)?;
        let cj = w.cols(j);
        let (prow, pcol) = (top - r..top, cj.end - r..cj.end);
        w.clear_rows(prow.clone(), pcol.clone(), j + 1..t)?;
        pivots.push((prow, pcol));
        top -= r;
    }
    let mut rows = vec![RowRole::Zero; n];
    let mut cols = vec![ColRole::Zero; a.total_cols()];
    for (r, role) in rows.iter_mut().enumerate().skip(d) {
        *role = RowRole::Inner(r - d);
    }
    for (c, role) in cols.iter_mut().enumerate().take(n) {
        *role = ColRole::Inner(c);
    }
    unboxed_roles(&mut cols, &mut rows, &pivots);
    let mut ranks = vec![top];
    ranks.extend(pivots.iter().rev().map(|p| p.0.len()));
    let mut inner_widths = ranks.clone();
    inner_widths.push(rho);
    let layout = Layout {
        field: a.field(),
        outer_widths: a.widths(),
        outer_boxed: 0,
        inner_boxed: inner_widths.len() - 1,
        inner_widths,
        rows,
        cols,
    };
    w.finish(StepKind::RightStar, ranks, layout, ctx)
}

fn left_sim(a: &Bangle, ctx: &Ctx) -> Result<ReductionStep> {
    let (n, k, t) = (a.rows(), a.boxed(), a.t());
    let mut w = Work::new(a, Mode::Sim, ctx.rank_tol(a));
    let mut bottom = 0;
    let mut pivots = Vec::new();
    for i in 0..k {
        let r = w.pivot_strip(bottom..n, i, true)?;
        let ci = w.cols(i);
        let (prow, pcol) = (bottom..bottom + r, ci.end - r..ci.end);
        w.clear_rows(prow.clone(), pcol.clone(), i + 1..t)?;
        pivots.push((prow, pcol));
        bottom += r;
    }
    let bo = w.offs[k];
    let mut rows = vec![RowRole::Zero; n];
    let mut cols = vec![ColRole::Zero; a.total_cols()];
    for (r, role) in rows.iter_mut().enumerate().skip(bottom) {
        *role = RowRole::Inner(r - bottom);
    }
    for (c, role) in cols.iter_mut().enumerate().skip(bo) {
        *role = ColRole::Inner(c - bo);
    }
    unboxed_roles(&mut cols, &mut rows, &pivots);
    let ranks: Vec<usize> = pivots.iter().map(|p| p.0.len()).collect();
    let mut inner_widths = ranks.clone();
    inner_widths.push(n - bottom);
    inner_widths.extend(&a.widths()[k + 1..]);
    let layout = Layout {
        field: a.field(),
        outer_widths: a.widths(),
        outer_boxed: k,
        inner_widths,
        inner_boxed: k,
        rows,
        cols,
    };
    w.finish(StepKind::LeftSim, ranks, layout, ctx)
}

fn right_sim(a: &Bangle, ctx: &Ctx) -> Result<ReductionStep> {
    if a.boxed() != 0 {
        return Err(Error::LayoutMismatch("right-hand reduction needs the box first".into()));
    }
    let (n, t) = (a.rows(), a.t());
    let mut w = Work::new(a, Mode::Sim, ctx.rank_tol(a));
    let rho = w.compress_box(true)?;
    w.clear_with_box(0..rho)?;
    let mut act = rho;
    let mut pivots = Vec::new();
    for j in 1..t {
        let r = w.pivot_strip(act..n, j, true)?;
        let cj = w.cols(j);
        let (prow, pcol) = (act..act + r, cj.end - r..cj.end);
        w.clear_rows(prow.clone(), pcol.clone(), j + 1..t)?;
        pivots.push((prow, pcol));
        act += r;
    }
    let mut rows = vec![RowRole::Zero; n];
    let mut cols = vec![ColRole::Zero; a.total_cols()];
    for (r, role) in rows.iter_mut().enumerate().take(rho) {
        *role = RowRole::Inner(r);
    }
    for (c, role) in cols.iter_mut().enumerate().take(n) {
        *role = ColRole::Inner(c);
    }
    unboxed_roles(&mut cols, &mut rows, &pivots);
    let mut ranks: Vec<usize> = pivots.iter().map(|p| p.0.len()).collect();
    ranks.push(n - act);
    let mut inner_widths = vec![rho];
    inner_widths.extend(&ranks);
    let layout = Layout {
        field: a.field(),
        outer_widths: a.widths(),
        outer_boxed: 0,
        inner_widths,
        inner_boxed: 0,
        rows,
        cols,
    };
    w.finish(StepKind::RightSim, ranks, layout, ctx)
}

/// `[0_{n0} | … | ▢A_k | A_{k+1} | …]` → `[▢A_k | A_{k+1} | …]`.
fn drop_empty(a: &Bangle) -> Result<ReductionStep> {
    let k = a.boxed();
    if a.widths()[..k].iter().any(|&w| w > 0) {
        return Err(Error::LayoutMismatch("strips left of the box are not empty".into()));
    }
    let mut layout = Layout::identity(a);
    layout.inner_widths = a.widths()[k..].to_vec();
    layout.inner_boxed = 0;
    let inner = Bangle::new(a.field(), a.strips()[k..].to_vec(), 0)?;
    Ok(ReductionStep {
        kind: StepKind::DropEmpty,
        ranks: Vec::new(),
        inner,
        layout,
        witness: Witness::for_bangle(a, Mode::Sim),
    })
}

fn fixed_point(a: &Bangle, kind: StepKind, mode: Mode) -> ReductionStep {
    ReductionStep {
        kind,
        ranks: Vec::new(),
        inner: a.clone(),
        layout: Layout::identity(a),
        witness: Witness::for_bangle(a, mode),
    }
}

/// One left-hand step for *congruence; the inner bangle has its box first.
pub fn left_reduce_star(a: &Bangle) -> Result<ReductionStep> {
    if a.boxed() == 0 {
        return Ok(fixed_point(a, StepKind::LeftStar, Mode::Star));
    }
    left_star(a, &Ctx::for_input(a))
}

/// One right-hand step for *congruence on a box-first bangle; the inner
/// bangle has one more strip and its box last.
pub fn right_reduce_star(a: &Bangle) -> Result<ReductionStep> {
    right_star(a, &Ctx::for_input(a))
}

/// One left-hand step for similarity; the box keeps its position.
pub fn left_reduce_sim(a: &Bangle) -> Result<ReductionStep> {
    if a.boxed() == 0 {
        return Ok(fixed_point(a, StepKind::LeftSim, Mode::Sim));
    }
    left_sim(a, &Ctx::for_input(a))
}

/// One right-hand step for similarity on a box-first bangle; the inner
/// bangle has one more strip and its box first.
pub fn right_reduce_sim(a: &Bangle) -> Result<ReductionStep> {
    right_sim(a, &Ctx::for_input(a))
}

/// Rank is judged against the run's tolerance: a box that is roundoff
/// relative to the input is singular even if it is well scaled on its own.
fn is_regular(a: &Bangle, ctx: &Ctx) -> bool {
    (0..a.t()).all(|i| i == a.boxed() || a.strip(i).cols() == 0)
        && rank_reveal(a.box_mat(), Some(ctx.rank_tol(a))).rank == a.rows()
}

fn budget_exceeded(ctx: &Ctx, what: &str) -> Error {
    match ctx.eps {
        Some(eps) => Error::NonConvergence { tol: eps, reason: format!("{what} did not terminate") },
        None => Error::InvariantViolation(format!("{what} did not terminate")),
    }
}

/// Regularizing decomposition for *congruence: alternate left- and
/// right-hand reductions until the inner bangle is regular.
pub fn regularize_star(a: &Bangle) -> Result<RegularizingDecomposition> {
    let ctx = Ctx::for_input(a);
    let mut steps = Vec::new();
    let mut cur = a.clone();
    let budget = 2 * (a.rows() + 2);
    while !is_regular(&cur, &ctx) {
        if steps.len() > budget {
            return Err(budget_exceeded(&ctx, "*congruence regularization"));
        }
        let step = if cur.boxed() != 0 { left_star(&cur, &ctx)? } else { right_star(&cur, &ctx)? };
        cur = step.inner.clone();
        steps.push(step);
    }
    assemble(a, steps, cur, Mode::Star, &ctx)
}

/// Regularizing decomposition for similarity: left-hand reductions until
/// the strips left of the box are empty, then right-hand reductions.
pub fn regularize_sim(a: &Bangle) -> Result<RegularizingDecomposition> {
    let ctx = Ctx::for_input(a);
    let mut steps = Vec::new();
    let mut cur = a.clone();
    let budget = a.rows() + 2;
    while cur.widths()[..cur.boxed()].iter().any(|&w| w > 0) {
        if steps.len() > budget {
            return Err(budget_exceeded(&ctx, "left-hand similarity phase"));
        }
        let step = left_sim(&cur, &ctx)?;
        cur = step.inner.clone();
        steps.push(step);
    }
    if cur.boxed() != 0 {
        let step = drop_empty(&cur)?;
        cur = step.inner.clone();
        steps.push(step);
    }
    let phase2 = steps.len();
    while !is_regular(&cur, &ctx) {
        if steps.len() - phase2 > budget {
            return Err(budget_exceeded(&ctx, "right-hand similarity phase"));
        }
        let step = right_sim(&cur, &ctx)?;
        cur = step.inner.clone();
        steps.push(step);
    }
    assemble(a, steps, cur, Mode::Sim, &ctx)
}

pub fn regularize(a: &Bangle, mode: Mode) -> Result<RegularizingDecomposition> {
    match mode {
        Mode::Star => regularize_star(a),
        Mode::Sim => regularize_sim(a),
    }
}

/// Replay: lift the witnesses bottom-up, then sort the 0/1 remainder.
fn assemble(
    a: &Bangle,
    steps: Vec<ReductionStep>,
    last: Bangle,
    mode: Mode,
    ctx: &Ctx,
) -> Result<RegularizingDecomposition> {
    let lift_tol = 1e3 * ctx.deviation_tol();
    let mut y = last.clone();
    let mut v = Witness::for_bangle(&last, mode);
    let mut krows: Vec<usize> = (0..last.rows()).collect();
    for step in steps.iter().rev() {
        let lifted = step.layout.lift(&v, &step.inner, &y, lift_tol)?;
        v = step.witness.then(&lifted)?;
        y = step.layout.rebuild(&y)?;
        let up = step.layout.outer_row_of_inner();
        krows = krows.into_iter().map(|i| up[i]).collect();
    }
    let sorted = sort_with_regular(&y, &krows)?;
    let perm = Witness::from_permutations(&y, &sorted.row_perm, &sorted.col_perms, mode)?;
    let witness = v.then(&perm)?;
    let regular = y.box_mat().select(&krows, &krows);
    let dec = RegularizingDecomposition {
        regular,
        singular: sorted.summands,
        t: a.t(),
        boxed: a.boxed(),
        witness,
        mode,
        steps: steps.iter().map(|s| StepRecord { kind: s.kind, ranks: s.ranks.clone() }).collect(),
    };
    if a.field().is_exact() {
        dec.certify(a)?;
    } else {
        let res = dec.residual(a)?;
        let tol = 1e-8 * ctx.scale_max.max(1.0);
        if res > tol {
            return Err(Error::NonConvergence {
                tol: ctx.eps.unwrap_or(0.0),
                reason: format!("witness residual {res:e} exceeds {tol:e}"),
            });
        }
    }
    Ok(dec)
}

/// Result of the admissible-permutation sort of a 0/1 bangle.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroOneSort {
    pub summands: Vec<SingularSummand>,
    /// Row `r` of the sorted bangle is row `row_perm[r]` of the input.
    pub row_perm: Vec<usize>,
    /// Per strip; the boxed entry repeats `row_perm`.
    pub col_perms: Vec<Vec<usize>>,
}

impl ZeroOneSort {
    pub fn apply(&self, d: &Bangle, mode: Mode) -> Result<(Bangle, Witness)> {
        d.admissible_permute(&self.row_perm, &self.col_perms, mode)
    }
}

/// Sort a bangle whose entries are 0/1 with at most one 1 per row and
/// column into a block-direct sum of singular summands.
pub fn sort_zero_one(d: &Bangle) -> Result<ZeroOneSort> {
    sort_with_regular(d, &[])
}

/// As [`sort_zero_one`], with the rows/box columns `krows` holding a
/// regular block that is moved to the front untouched.
fn sort_with_regular(y: &Bangle, krows: &[usize]) -> Result<ZeroOneSort> {
    let f = y.field();
    let n = y.rows();
    let k = y.boxed();
    let full = y.to_matrix();
    let strip_of: Vec<usize> = y.widths().iter().enumerate().flat_map(|(i, &w)| std::iter::repeat_n(i, w)).collect();
    let bo = y.offset(k);
    let mut in_k = vec![false; n];
    for &r in krows {
        in_k[r] = true;
    }
    let is_k_col = |c: usize| strip_of[c] == k && in_k[c - bo];
    let mut next_box: Vec<Option<usize>> = vec![None; n];
    let mut e_col: Vec<Option<usize>> = vec![None; n];
    let mut col_used = vec![false; full.cols()];
    for r in 0..n {
        let mut ones = 0;
        for c in 0..full.cols() {
            let v = full.get(r, c);
            if f.is_exact_zero(v) {
                continue;
            }
            if in_k[r] {
                if !is_k_col(c) {
                    return Err(Error::NotZeroOne(format!("regular row {r} leaks into column {c}")));
                }
                continue;
            }
            if is_k_col(c) {
                return Err(Error::NotZeroOne(format!("regular column {c} leaks into row {r}")));
            }
            if !f.is_one(v) {
                return Err(Error::NotZeroOne(format!("entry ({r}, {c}) is neither 0 nor 1")));
            }
            ones += 1;
            if ones > 1 {
                return Err(Error::NotZeroOne(format!("row {r} has more than one 1")));
            }
            if std::mem::replace(&mut col_used[c], true) {
                return Err(Error::NotZeroOne(format!("column {c} has more than one 1")));
            }
            if strip_of[c] == k {
                next_box[r] = Some(c - bo);
            } else {
                e_col[r] = Some(c);
            }
        }
    }
    // Chains of the nilpotent box part start at rows whose box column is empty.
    let mut has_prev = vec![false; n];
    for nb in next_box.iter().flatten() {
        has_prev[*nb] = true;
    }
    let mut visited = in_k.clone();
    let mut items: Vec<(SingularSummand, Vec<usize>, Option<usize>)> = Vec::new();
    for start in 0..n {
        if in_k[start] || has_prev[start] {
            continue;
        }
        let mut chain = vec![start];
        visited[start] = true;
        let mut cur = start;
        while let Some(nx) = next_box[cur] {
            chain.push(nx);
            visited[nx] = true;
            cur = nx;
        }
        let q = chain.len();
        let (s, col) = match e_col[cur] {
            Some(c) => (SingularSummand::e_in(strip_of[c], q), Some(c)),
            None => (SingularSummand::plain(q), None),
        };
        if e_col[..].iter().enumerate().any(|(r, ec)| ec.is_some() && r != cur && chain.contains(&r)) {
            return Err(Error::NotZeroOne("a 1 in an unboxed strip sits inside a Jordan chain".into()));
        }
        items.push((s, chain, col));
    }
    if visited.iter().any(|v| !v) {
        return Err(Error::NotZeroOne("the boxed 0/1 block is not nilpotent".into()));
    }
    for c in 0..full.cols() {
        if strip_of[c] != k && !col_used[c] {
            items.push((SingularSummand::e_in(strip_of[c], 0), Vec::new(), Some(c)));
        }
    }
    items.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.first().cmp(&b.1.first())).then(a.2.cmp(&b.2)));
    let mut row_perm: Vec<usize> = krows.to_vec();
    let mut col_perms: Vec<Vec<usize>> = vec![Vec::new(); y.t()];
    for (s, chain, col) in &items {
        row_perm.extend(chain);
        if let (Attachment::EInStrip(i), Some(c)) = (s.attachment, col) {
            col_perms[i].push(c - y.offset(i));
        }
    }
    col_perms[k] = row_perm.clone();
    Ok(ZeroOneSort { summands: items.into_iter().map(|i| i.0).collect(), row_perm, col_perms })
}

impl RegularizingDecomposition {
    pub fn field(&self) -> ScalarField {
        self.regular.field()
    }

    /// `regular ⊎ summand_1 ⊎ …` in canonical order.
    pub fn assemble(&self) -> Result<Bangle> {
        let f = self.field();
        let mut acc = regular_bangle(&self.regular, self.t, self.boxed)?;
        for s in &self.singular {
            acc = acc.block_direct_sum(&s.bangle(f, self.t, self.boxed)?)?;
        }
        Ok(acc)
    }

    /// `max |apply(witness, a) − assemble()|`.
    pub fn residual(&self, a: &Bangle) -> Result<f64> {
        let lhs = self.witness.apply(a)?.to_matrix();
        let rhs = self.assemble()?.to_matrix();
        Ok(lhs.sub(&rhs)?.max_abs())
    }

    /// Exact check on exact fields; on complex floats the residual must
    /// stay below `1e-8·max(‖A‖_max, 1)`.
    pub fn certify(&self, a: &Bangle) -> Result<()> {
        let w = Witness::new(
            self.witness.matrix().clone(),
            self.witness.widths(),
            self.witness.boxed(),
            self.witness.mode(),
        );
        let ok = match w {
            Err(_) => false,
            Ok(_) if a.field().is_exact() => self.witness.apply(a)? == self.assemble()?,
            Ok(_) => self.residual(a)? <= 1e-8 * a.max_abs().max(1.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvariantViolation("witness certification failed".into()))
        }
    }

    /// All rank sequences in step order, for comparing runs.
    pub fn rank_profile(&self) -> Vec<(StepKind, Vec<usize>)> {
        self.steps.iter().map(|s| (s.kind, s.ranks.clone())).collect()
    }
}

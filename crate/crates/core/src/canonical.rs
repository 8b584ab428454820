//! Canonical forms and complete invariants of the regular part.
//!
//! Exact fields work with invariant factors; eigenvalues are only ever
//! computed as roots of exact square-free factors, so multiplicities and
//! Jordan block sizes are exact and only the root values are numerical.
//! Complex-float input gets its Jordan structure from eigenvalue clusters
//! and rank sequences.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;

use crate::bangle::{gamma, hpair, jordan, regular_bangle, Bangle, Mode, SingularSummand};
use crate::error::{Error, Result};
use crate::field::{Involution, Scalar, ScalarField, DEFAULT_EPS};
use crate::matrix::Mat;
use crate::poly::{invariant_factors, Poly};
use crate::regularize::{regularize, RegularizingDecomposition};

/// A Jordan block `J_size(value)`; `exact` holds the eigenvalue when it
/// lies in the field of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct JordanBlock {
    pub value: Complex64,
    pub size: usize,
    pub exact: Option<Scalar>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimilarityClass {
    /// Nonconstant monic invariant factors, each dividing the next.
    InvariantFactors(Vec<Poly>),
    /// Over the complex floats.
    Jordan(Vec<JordanBlock>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CongruenceBlock {
    /// `Γ_n`.
    Gamma(usize),
    /// `H_2n(λ) = [[0, I_n], [J_n(λ), 0]]`.
    HPair { n: usize, lambda: Complex64, exact: Option<Scalar> },
    /// `λΓ_n` with `|λ| = 1`; `lambda` is `None` when the sign of `λ` is
    /// not determined (only `λ²` is known).
    UnitGamma { n: usize, lambda: Option<Complex64>, lambda_sq: Complex64, exact: Option<Scalar> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CongruenceClassC {
    /// `true` for *congruence, `false` for congruence.
    pub star: bool,
    pub blocks: Vec<CongruenceBlock>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegularClass {
    Similarity(SimilarityClass),
    Congruence(CongruenceClassC),
    /// Invariant factors of the cosquare `K⁻*K`; used where no canonical
    /// matrix is available (ℚ, large GF(p)).
    Cosquare(Vec<Poly>),
    /// Lexicographically least matrix in the congruence orbit (small GF(p)).
    OrbitMinimum(Mat),
}

/// Everything the decomposition determines up to equivalence.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub mode: Mode,
    pub t: usize,
    pub boxed: usize,
    pub size: usize,
    pub regular: RegularClass,
    pub singular: Vec<SingularSummand>,
}

#[derive(Clone, Debug)]
pub struct CanonicalForm {
    pub descriptor: Descriptor,
    /// `None` when the regular part has invariants but no canonical matrix.
    pub bangle: Option<Bangle>,
    /// Number of `λΓ_n` blocks whose sign was left open.
    pub unresolved: usize,
    pub decomposition: RegularizingDecomposition,
}

const ROOT_TOL: f64 = 1e-9;
const FLOAT_TOL: f64 = 1e-6;

fn na(m: &Mat) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), &m.to_c64())
}

fn eigenvalues(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let t = nalgebra::Schur::new(a.clone()).unpack().1;
    (0..a.nrows()).map(|i| t[(i, i)]).collect()
}

fn cmp_c(a: &Complex64, b: &Complex64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Best rational approximation with denominator ≤ `max_den`.
fn rationalize(x: f64, max_den: i64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut r = x;
    for _ in 0..40 {
        let a = r.floor();
        if a.abs() > 1e12 {
            break;
        }
        let a = a as i64;
        let (h2, k2) = (a.checked_mul(h1)?.checked_add(h0)?, a.checked_mul(k1)?.checked_add(k0)?);
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac.abs() < 1e-15 {
            break;
        }
        r = 1.0 / frac;
    }
    if k1 == 0 {
        return None;
    }
    Some(BigRational::new(BigInt::from(h1), BigInt::from(k1)))
}

/// The root as an exact scalar of `p`'s field, if it is one.
fn exact_root(p: &Poly, z: Complex64) -> Option<Scalar> {
    let f = p.field();
    let re = rationalize(z.re, 1 << 20)?;
    let cand = match f {
        ScalarField::Rational => {
            if z.im.abs() > ROOT_TOL * z.norm().max(1.0) {
                return None;
            }
            Scalar::Rat(re)
        }
        ScalarField::Gaussian(_) => Scalar::Gauss(re, rationalize(z.im, 1 << 20)?),
        _ => return None,
    };
    f.is_exact_zero(&p.eval(&cand)).then_some(cand)
}

fn poly_roots(p: &Poly) -> Vec<Complex64> {
    let coeffs: Vec<Complex64> = p.monic().coeffs().iter().map(|c| p.field().to_complex(c).unwrap_or_default()).collect();
    let eval = |z: Complex64| coeffs.iter().rev().fold((Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)), |(v, d), c| (v * z + c, d * z + v));
    let mut roots = eigenvalues(&na(&p.companion().convert(ScalarField::complex(DEFAULT_EPS).expect("valid eps")).expect("complex view")));
    for z in roots.iter_mut() {
        // A few Newton steps on the simple roots of a square-free factor.
        for _ in 0..3 {
            let (v, d) = eval(*z);
            if d.norm() == 0.0 {
                break;
            }
            let next = *z - v / d;
            if eval(next).0.norm() < v.norm() {
                *z = next;
            } else {
                break;
            }
        }
    }
    roots
}

/// Jordan structure over ℂ.
pub fn jordan_data(k: &Mat) -> Result<Vec<JordanBlock>> {
    if !k.is_square() {
        return Err(Error::ShapeMismatch(format!("{}x{} is not square", k.rows(), k.cols())));
    }
    let f = k.field();
    let mut blocks = match f {
        ScalarField::Prime { .. } => {
            return Err(Error::Domain("GF(p) has no complex eigenvalues; use invariant factors".into()));
        }
        ScalarField::Complex { eps, .. } => numeric_jordan(k, eps)?,
        _ => {
            let mut out = Vec::new();
            for factor in invariant_factors(k)? {
                for (mult, g) in factor.squarefree_decomposition() {
                    for z in poly_roots(&g) {
                        let exact = exact_root(&g, z);
                        let value = exact.as_ref().and_then(|e| f.to_complex(e)).unwrap_or(z);
                        out.push(JordanBlock { value, size: mult, exact });
                    }
                }
            }
            out
        }
    };
    blocks.sort_by(|a, b| a.size.cmp(&b.size).then(cmp_c(&a.value, &b.value)));
    Ok(blocks)
}

/// Dimensions of `ker N^j` for `j = 0, 1, …` until they stop growing or
/// reach `m`, computed as a staircase: `ker N^j` is the kernel of `N`
/// followed by the projection off `ker N^(j−1)`, so no powers are formed.
fn null_chain(shifted: &DMatrix<Complex64>, m: usize, eps: f64) -> Vec<usize> {
    let n = shifted.nrows();
    let tol = (eps * 1e4).clamp(1e-9, 1e-3) * shifted.norm().max(1.0);
    let mut z = DMatrix::<Complex64>::zeros(n, 0);
    let mut dims = vec![0];
    while dims.len() <= m {
        let proj = DMatrix::<Complex64>::identity(n, n) - &z * z.adjoint();
        let svd = (proj * shifted).svd(false, true);
        let vt = svd.v_t.expect("requested");
        let null: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= tol).collect();
        z = DMatrix::from_fn(n, null.len(), |r, j| vt[(null[j], r)].conj());
        let d = null.len();
        if d <= *dims.last().expect("nonempty") {
            break;
        }
        dims.push(d);
        if d >= m {
            break;
        }
    }
    dims
}

/// Cluster the eigenvalues, then read block sizes off the rank sequence
/// of `(C − μI)^j` for each cluster mean `μ`. The cluster radius shrinks
/// from coarse to fine until every cluster has a consistent rank sequence;
/// starting coarse keeps a split defective eigenvalue from being read as
/// several simple ones.
fn numeric_jordan(k: &Mat, eps: f64) -> Result<Vec<JordanBlock>> {
    let a = na(k);
    let ev = eigenvalues(&a);
    let mut last = None;
    for radius in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7] {
        match jordan_at_radius(&a, &ev, radius, eps) {
            Ok(out) => return Ok(out),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::IllConditioned("no eigenvalues".into())))
}

fn jordan_at_radius(a: &DMatrix<Complex64>, ev: &[Complex64], radius: f64, eps: f64) -> Result<Vec<JordanBlock>> {
    let n = a.nrows();
    let mut cluster: Vec<usize> = (0..n).collect();
    fn find(c: &mut [usize], mut i: usize) -> usize {
        while c[i] != i {
            c[i] = c[c[i]];
            i = c[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..i {
            if (ev[i] - ev[j]).norm() <= radius * ev[i].norm().max(ev[j].norm()).max(1.0) {
                let (ri, rj) = (find(&mut cluster, i), find(&mut cluster, j));
                cluster[ri] = rj;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index_of = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut cluster, i);
        if index_of[r] == usize::MAX {
            index_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[index_of[r]].push(i);
    }
    let mut out = Vec::new();
    for g in groups {
        let m = g.len();
        let mu = g.iter().map(|&i| ev[i]).sum::<Complex64>() / m as f64;
        let shifted = a - DMatrix::<Complex64>::identity(n, n) * mu;
        let dims = null_chain(&shifted, m, eps);
        let mut total = 0;
        for j in 1..dims.len() {
            let at_least_j = dims[j] - dims[j - 1];
            let at_least_next = dims.get(j + 1).map_or(0, |d| d - dims[j]);
            for _ in 0..at_least_j.saturating_sub(at_least_next) {
                out.push(JordanBlock { value: mu, size: j, exact: None });
                total += j;
            }
        }
        let ranks: Vec<usize> = dims.iter().map(|d| n - d).collect();
        if total != m || dims.last() != Some(&m) {
            return Err(Error::IllConditioned(format!(
                "eigenvalue cluster near {mu} of size {m} has inconsistent rank sequence {ranks:?}"
            )));
        }
    }
    Ok(out)
}

pub fn similarity_invariants(k: &Mat) -> Result<SimilarityClass> {
    if k.field().is_exact() {
        Ok(SimilarityClass::InvariantFactors(invariant_factors(k)?))
    } else {
        Ok(SimilarityClass::Jordan(jordan_data(k)?))
    }
}

/// `K⁻ᵀK` (or `K⁻*K` when `star`).
pub fn cosquare(k: &Mat, star: bool) -> Result<Mat> {
    if !k.is_square() {
        return Err(Error::ShapeMismatch(format!("{}x{} is not square", k.rows(), k.cols())));
    }
    let kt = if star { k.conj_transpose() } else { k.transpose() };
    let inv = kt.inverse().map_err(|_| Error::SingularInput)?;
    inv.mul(k)
}

fn tol_for(f: ScalarField) -> f64 {
    if f.is_exact() {
        ROOT_TOL
    } else {
        FLOAT_TOL
    }
}

fn sign_pow(n: usize) -> f64 {
    // (−1)^(n+1)
    if n % 2 == 1 {
        1.0
    } else {
        -1.0
    }
}

fn exact_mul(f: ScalarField, a: &Option<Scalar>, b: &Option<Scalar>) -> Option<Scalar> {
    Some(f.mul(a.as_ref()?, b.as_ref()?))
}

/// Pick `λ` over `λ⁻¹`-type partners: larger modulus, then `Im ≥ 0`.
fn prefer(a: (Complex64, Option<Scalar>), b: (Complex64, Option<Scalar>)) -> (Complex64, Option<Scalar>) {
    let (na, nb) = (a.0.norm(), b.0.norm());
    if (na - nb).abs() > ROOT_TOL * na.max(nb).max(1.0) {
        if na > nb {
            a
        } else {
            b
        }
    } else if a.0.im >= b.0.im {
        a
    } else {
        b
    }
}

/// Pair Jordan blocks `(λ, n)` with `(partner(λ), n)`.
fn pair_blocks(
    f: ScalarField,
    blocks: Vec<JordanBlock>,
    partner_of: impl Fn(&JordanBlock, &JordanBlock) -> bool,
) -> Result<Vec<(usize, JordanBlock, JordanBlock)>> {
    let mut left: Vec<Option<JordanBlock>> = blocks.into_iter().map(Some).collect();
    let mut out = Vec::new();
    for i in 0..left.len() {
        let Some(b) = left[i].take() else { continue };
        let j = (i + 1..left.len()).find(|&j| left[j].as_ref().is_some_and(|c| c.size == b.size && partner_of(&b, c)));
        match j {
            Some(j) => {
                let c = left[j].take().expect("found above");
                out.push((b.size, b, c));
            }
            None => {
                return Err(Error::UnpairedEigenvalues(format!(
                    "block J{}({}) over {f} has no partner",
                    b.size, b.value
                )))
            }
        }
    }
    Ok(out)
}

fn sort_blocks(blocks: &mut [CongruenceBlock]) {
    fn key(b: &CongruenceBlock) -> (u8, usize, Complex64) {
        match b {
            CongruenceBlock::Gamma(n) => (0, *n, Complex64::new(0.0, 0.0)),
            CongruenceBlock::HPair { n, lambda, .. } => (1, *n, *lambda),
            CongruenceBlock::UnitGamma { n, lambda, lambda_sq, .. } => (2, *n, lambda.unwrap_or(*lambda_sq)),
        }
    }
    blocks.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(cmp_c(&ka.2, &kb.2))
    });
}

/// Congruence class over ℂ from the Jordan structure of the cosquare.
pub fn congruence_canonical_c(k: &Mat) -> Result<CongruenceClassC> {
    let f = k.field();
    if !f.has_imaginary_unit() {
        return Err(Error::Domain(format!("congruence classes over C need a complex field, got {f}")));
    }
    let c = cosquare(k, false)?;
    let tol = tol_for(f);
    let mut blocks = Vec::new();
    let mut rest = Vec::new();
    for b in jordan_data(&c)? {
        let target = sign_pow(b.size);
        let is_gamma = match &b.exact {
            Some(e) => f.is_exact_zero(&f.sub(e, &f.from_i64(target as i64))),
            None => (b.value - target).norm() <= tol,
        };
        if is_gamma {
            blocks.push(CongruenceBlock::Gamma(b.size));
        } else {
            rest.push(b);
        }
    }
    let pairs = pair_blocks(f, rest, |a, b| match exact_mul(f, &a.exact, &b.exact) {
        Some(p) => f.is_one(&p),
        None => (a.value * b.value - 1.0).norm() <= tol * 10.0,
    })?;
    for (n, a, b) in pairs {
        let (lambda, exact) = prefer((a.value, a.exact), (b.value, b.exact));
        blocks.push(CongruenceBlock::HPair { n, lambda, exact });
    }
    sort_blocks(&mut blocks);
    Ok(CongruenceClassC { star: false, blocks })
}

fn principal_sqrt(z: Complex64) -> Complex64 {
    let r = z.sqrt();
    if r.re < -0.0 || (r.re == 0.0 && r.im < 0.0) {
        -r
    } else {
        r
    }
}

/// Exact square root in a Gaussian field, if the numerical root is one.
fn exact_sqrt(f: ScalarField, target: &Scalar, z: Complex64) -> Option<Scalar> {
    if !matches!(f, ScalarField::Gaussian(_) | ScalarField::Rational) {
        return None;
    }
    let cand = match f {
        ScalarField::Rational if z.im.abs() <= ROOT_TOL => Scalar::Rat(rationalize(z.re, 1 << 20)?),
        ScalarField::Gaussian(_) => Scalar::Gauss(rationalize(z.re, 1 << 20)?, rationalize(z.im, 1 << 20)?),
        _ => return None,
    };
    f.is_exact_zero(&f.sub(&f.mul(&cand, &cand), target)).then_some(cand)
}

/// Signs of the size-1 blocks at a unit eigenvalue `nu` of the
/// *cosquare: inertia of `λ₀⁻¹·X*KX` on the eigenspace `X`.
fn unit_signs(k: &Mat, c: &Mat, nu: Complex64, lambda0: Complex64, count: usize) -> Result<Vec<f64>> {
    let kf = na(k);
    let cf = na(c);
    let n = cf.nrows();
    let shifted = &cf - DMatrix::<Complex64>::identity(n, n) * nu;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let scale = cf.norm().max(1.0);
    let small = order.iter().take_while(|&&i| svd.singular_values[i] <= 1e-6 * scale).count();
    if small != count {
        return Err(Error::IllConditioned(format!(
            "eigenspace of the *cosquare at {nu} has numerical dimension {small}, expected {count}"
        )));
    }
    let x = DMatrix::from_fn(n, count, |r, j| vt[(order[j], r)].conj());
    let g = x.adjoint() * &kf * &x * lambda0.conj();
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let hs = h.norm().max(f64::MIN_POSITIVE);
    let mut signs = Vec::new();
    for &e in eig.eigenvalues.iter() {
        if e.abs() <= 1e-8 * hs {
            return Err(Error::IllConditioned(format!("indefinite sign at unit eigenvalue {nu}")));
        }
        signs.push(e.signum());
    }
    signs.sort_by(|a, b| b.total_cmp(a));
    Ok(signs)
}

/// *Congruence class over ℂ from the Jordan structure of the *cosquare.
pub fn star_congruence_canonical_c(k: &Mat) -> Result<CongruenceClassC> {
    let f = k.field();
    if !f.has_imaginary_unit() || f.involution() != Involution::Conjugation {
        return Err(Error::Domain(format!("*congruence classes need a conjugating complex field, got {f}")));
    }
    let c = cosquare(k, true)?;
    let tol = tol_for(f);
    let jd = jordan_data(&c)?;
    let is_unit = |b: &JordanBlock| match &b.exact {
        Some(e) => f.is_one(&f.mul(e, &f.conj(e))),
        None => (b.value.norm() - 1.0).abs() <= tol,
    };
    let (unit, rest): (Vec<JordanBlock>, Vec<JordanBlock>) = jd.into_iter().partition(|b| is_unit(b));
    let mut blocks = Vec::new();
    let pairs = pair_blocks(f, rest, |a, b| match exact_mul(f, &a.exact.as_ref().map(|e| f.conj(e)), &b.exact) {
        Some(p) => f.is_one(&p),
        None => (a.value.conj() * b.value - 1.0).norm() <= tol * 10.0,
    })?;
    for (n, a, b) in pairs {
        let (lambda, exact) = if a.value.norm() >= b.value.norm() { (a.value, a.exact) } else { (b.value, b.exact) };
        blocks.push(CongruenceBlock::HPair { n, lambda, exact });
    }
    // Group unit blocks by eigenvalue.
    let mut groups: Vec<(Complex64, Option<Scalar>, Vec<usize>)> = Vec::new();
    for b in unit {
        let same = |g: &(Complex64, Option<Scalar>, Vec<usize>)| match (&g.1, &b.exact) {
            (Some(x), Some(y)) => x == y,
            _ => (g.0 - b.value).norm() <= tol,
        };
        match groups.iter_mut().find(|g| same(g)) {
            Some(g) => g.2.push(b.size),
            None => groups.push((b.value, b.exact.clone(), vec![b.size])),
        }
    }
    for (nu, nu_exact, sizes) in groups {
        if sizes.iter().all(|&s| s == 1) {
            let lambda0 = principal_sqrt(nu);
            let exact0 = nu_exact.as_ref().and_then(|e| exact_sqrt(f, e, lambda0));
            for s in unit_signs(k, &c, nu, lambda0, sizes.len())? {
                let (lambda, exact) = if s > 0.0 {
                    (lambda0, exact0.clone())
                } else {
                    (-lambda0, exact0.as_ref().map(|e| f.neg(e)))
                };
                blocks.push(CongruenceBlock::UnitGamma { n: 1, lambda: Some(lambda), lambda_sq: lambda0 * lambda0, exact });
            }
        } else {
            for n in sizes {
                let lambda_sq = nu * sign_pow(n);
                let target = nu_exact.as_ref().map(|e| f.mul(e, &f.from_i64(sign_pow(n) as i64)));
                let exact = target.as_ref().and_then(|t| exact_sqrt(f, t, principal_sqrt(lambda_sq)));
                blocks.push(CongruenceBlock::UnitGamma { n, lambda: None, lambda_sq, exact });
            }
        }
    }
    sort_blocks(&mut blocks);
    Ok(CongruenceClassC { star: true, blocks })
}

const ORBIT_LIMIT: u64 = 1 << 16;

/// Least `SᵀKS` (row-major, as residues) over all nonsingular `S`, when
/// GF(p) is small enough to enumerate `p^(n²)` matrices.
pub fn orbit_minimum(k: &Mat) -> Option<Mat> {
    let ScalarField::Prime { p } = k.field() else { return None };
    let n = k.rows();
    let cells = (n * n) as u32;
    if p.checked_pow(cells).is_none_or(|c| c > ORBIT_LIMIT) {
        return None;
    }
    let kv: Vec<u64> = k.entries().iter().map(|s| if let Scalar::Mod(x) = s { *x } else { 0 }).collect();
    let total = p.pow(cells);
    let mut best: Option<Vec<u64>> = None;
    let mut s = vec![0u64; n * n];
    for code in 0..total {
        let mut c = code;
        for v in s.iter_mut() {
            *v = c % p;
            c /= p;
        }
        if !nonsingular_mod(&s, n, p) {
            continue;
        }
        // SᵀKS
        let mut ks = vec![0u64; n * n];
        for i in 0..n {
            for j in 0..n {
                ks[i * n + j] = (0..n).map(|l| kv[i * n + l] * s[l * n + j] % p).sum::<u64>() % p;
            }
        }
        let img: Vec<u64> =
            (0..n * n).map(|ij| (0..n).map(|l| s[l * n + ij / n] * ks[l * n + ij % n] % p).sum::<u64>() % p).collect();
        if best.as_ref().is_none_or(|b| img < *b) {
            best = Some(img);
        }
    }
    let f = k.field();
    let b = best.unwrap_or_default();
    Some(Mat::from_fn(f, n, n, |i, j| Scalar::Mod(b[i * n + j])))
}

fn nonsingular_mod(s: &[u64], n: usize, p: u64) -> bool {
    let mut m = s.to_vec();
    for col in 0..n {
        let Some(piv) = (col..n).find(|&r| m[r * n + col] != 0) else { return false };
        for j in 0..n {
            m.swap(col * n + j, piv * n + j);
        }
        let inv = mod_inv(m[col * n + col], p);
        for r in col + 1..n {
            let factor = m[r * n + col] * inv % p;
            if factor == 0 {
                continue;
            }
            for j in col..n {
                m[r * n + j] = (m[r * n + j] + p * p - factor * m[col * n + j] % p) % p;
            }
        }
    }
    true
}

fn mod_inv(a: u64, p: u64) -> u64 {
    let (mut acc, mut b, mut e) = (1u64, a % p, p - 2);
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    acc
}

/// The class of `K` in the sense fixed by the mode and the field.
pub fn regular_class(k: &Mat, mode: Mode) -> Result<RegularClass> {
    let f = k.field();
    Ok(match mode {
        Mode::Sim => RegularClass::Similarity(similarity_invariants(k)?),
        Mode::Star => match f {
            ScalarField::Gaussian(Involution::Conjugation) | ScalarField::Complex { involution: Involution::Conjugation, .. } => {
                RegularClass::Congruence(star_congruence_canonical_c(k)?)
            }
            ScalarField::Gaussian(Involution::Identity) | ScalarField::Complex { involution: Involution::Identity, .. } => {
                RegularClass::Congruence(congruence_canonical_c(k)?)
            }
            ScalarField::Prime { .. } => match orbit_minimum(k) {
                Some(m) => RegularClass::OrbitMinimum(m),
                None => RegularClass::Cosquare(invariant_factors(&cosquare(k, false)?)?),
            },
            ScalarField::Rational => RegularClass::Cosquare(invariant_factors(&cosquare(k, false)?)?),
        },
    })
}

pub fn describe(dec: &RegularizingDecomposition) -> Result<Descriptor> {
    Ok(Descriptor {
        mode: dec.mode,
        t: dec.t,
        boxed: dec.boxed,
        size: dec.regular.rows(),
        regular: regular_class(&dec.regular, dec.mode)?,
        singular: dec.singular.clone(),
    })
}

pub fn descriptor(a: &Bangle, mode: Mode) -> Result<Descriptor> {
    describe(&regularize(a, mode)?)
}

fn float_companion(f: ScalarField) -> ScalarField {
    match f {
        ScalarField::Complex { .. } => f,
        _ => ScalarField::complex_with(DEFAULT_EPS, f.involution()).expect("valid eps"),
    }
}

/// Canonical matrix of a regular class, over the input field when every
/// entry lies in it, otherwise over the complex floats. `None` when the
/// class carries invariants only.
pub fn canonical_regular(class: &RegularClass, f: ScalarField) -> Result<Option<Mat>> {
    let direct_sum = |field: ScalarField, parts: Vec<Mat>| -> Result<Mat> {
        parts.into_iter().try_fold(Mat::zeros(field, 0, 0), |acc, p| acc.direct_sum(&p))
    };
    match class {
        RegularClass::Similarity(SimilarityClass::InvariantFactors(fs)) => {
            Ok(Some(direct_sum(f, fs.iter().map(|p| p.companion()).collect())?))
        }
        RegularClass::Similarity(SimilarityClass::Jordan(bs)) => {
            let fc = float_companion(f);
            let parts = bs.iter().map(|b| jordan(fc, b.size, &Scalar::Cpx(b.value))).collect();
            Ok(Some(direct_sum(fc, parts)?))
        }
        RegularClass::Congruence(cls) => {
            let exact_ok = f.is_exact()
                && cls.blocks.iter().all(|b| match b {
                    CongruenceBlock::Gamma(_) => true,
                    CongruenceBlock::HPair { exact, .. } | CongruenceBlock::UnitGamma { exact, .. } => exact.is_some(),
                });
            let field = if exact_ok { f } else { float_companion(f) };
            let value = |z: Complex64, e: &Option<Scalar>| -> Result<Scalar> {
                match e {
                    Some(e) if exact_ok => Ok(e.clone()),
                    _ => field.from_complex(z),
                }
            };
            let mut parts = Vec::new();
            for b in &cls.blocks {
                parts.push(match b {
                    CongruenceBlock::Gamma(n) => gamma(field, *n),
                    CongruenceBlock::HPair { n, lambda, exact } => hpair(field, *n, &value(*lambda, exact)?),
                    CongruenceBlock::UnitGamma { n, lambda, lambda_sq, exact } => {
                        let l = lambda.unwrap_or_else(|| principal_sqrt(*lambda_sq));
                        gamma(field, *n).scale(&value(l, exact)?)
                    }
                });
            }
            Ok(Some(direct_sum(field, parts)?))
        }
        RegularClass::OrbitMinimum(m) => Ok(Some(m.clone())),
        RegularClass::Cosquare(_) => Ok(None),
    }
}

impl RegularClass {
    pub fn unresolved(&self) -> usize {
        match self {
            RegularClass::Congruence(c) => c
                .blocks
                .iter()
                .filter(|b| matches!(b, CongruenceBlock::UnitGamma { lambda: None, .. }))
                .count(),
            _ => 0,
        }
    }

    /// Exact comparison for exact data, `tol` on complex values.
    pub fn approx_eq(&self, other: &RegularClass, tol: f64) -> bool {
        let close = |a: &Complex64, b: &Complex64| (a - b).norm() <= tol * a.norm().max(1.0);
        match (self, other) {
            (RegularClass::Similarity(SimilarityClass::Jordan(a)), RegularClass::Similarity(SimilarityClass::Jordan(b))) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.size == y.size && close(&x.value, &y.value))
            }
            (RegularClass::Congruence(a), RegularClass::Congruence(b)) => {
                a.star == b.star
                    && a.blocks.len() == b.blocks.len()
                    && a.blocks.iter().zip(&b.blocks).all(|(x, y)| match (x, y) {
                        (CongruenceBlock::Gamma(n), CongruenceBlock::Gamma(m)) => n == m,
                        (CongruenceBlock::HPair { n, lambda: l, .. }, CongruenceBlock::HPair { n: m, lambda: k, .. }) => {
                            n == m && close(l, k)
                        }
                        (
                            CongruenceBlock::UnitGamma { n, lambda: l, lambda_sq: ls, .. },
                            CongruenceBlock::UnitGamma { n: m, lambda: k, lambda_sq: ks, .. },
                        ) => {
                            n == m
                                && close(ls, ks)
                                && match (l, k) {
                                    (Some(l), Some(k)) => close(l, k),
                                    (None, None) => true,
                                    _ => false,
                                }
                        }
                        _ => false,
                    })
            }
            _ => self == other,
        }
    }
}

impl Descriptor {
    pub fn approx_eq(&self, other: &Descriptor, tol: f64) -> bool {
        self.mode == other.mode
            && self.t == other.t
            && self.boxed == other.boxed
            && self.size == other.size
            && self.singular == other.singular
            && self.regular.approx_eq(&other.regular, tol)
    }
}

pub fn canonical_bangle(a: &Bangle, mode: Mode) -> Result<CanonicalForm> {
    let dec = regularize(a, mode)?;
    let descriptor = describe(&dec)?;
    let bangle = match canonical_regular(&descriptor.regular, a.field())? {
        Some(k) => {
            let f = k.field();
            let mut acc = regular_bangle(&k, a.t(), a.boxed())?;
            for s in &descriptor.singular {
                acc = acc.block_direct_sum(&s.bangle(f, a.t(), a.boxed())?)?;
            }
            Some(acc)
        }
        None => None,
    };
    Ok(CanonicalForm { unresolved: descriptor.regular.unresolved(), descriptor, bangle, decomposition: dec })
}

/// Compact decimal rendering of a complex value.
pub fn format_complex(z: Complex64) -> String {
    fn num(x: f64) -> String {
        let r = (x * 1e9).round() / 1e9;
        let r = if r == 0.0 { 0.0 } else { r };
        let s = format!("{r:.9}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
    let (re, im) = (num(z.re), num(z.im));
    match (re.as_str(), im.as_str()) {
        (_, "0") => re,
        ("0", _) => format!("{im}i"),
        _ if im.starts_with('-') => format!("{re}{im}i"),
        _ => format!("{re}+{im}i"),
    }
}

impl fmt::Display for CongruenceBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CongruenceBlock::Gamma(n) => write!(f, "Gamma{n}"),
            CongruenceBlock::HPair { n, lambda, .. } => write!(f, "H{}({})", 2 * n, format_complex(*lambda)),
            CongruenceBlock::UnitGamma { n, lambda: Some(l), .. } => write!(f, "({})Gamma{n}", format_complex(*l)),
            CongruenceBlock::UnitGamma { n, lambda: None, lambda_sq, .. } => {
                write!(f, "(±sqrt({}))Gamma{n} [sign unresolved]", format_complex(*lambda_sq))
            }
        }
    }
}

impl fmt::Display for RegularClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |items: Vec<String>| if items.is_empty() { "empty".to_string() } else { items.join(" + ") };
        match self {
            RegularClass::Similarity(SimilarityClass::InvariantFactors(fs)) => {
                write!(f, "invariant factors [{}]", fs.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", "))
            }
            RegularClass::Similarity(SimilarityClass::Jordan(bs)) => {
                write!(f, "{}", join(bs.iter().map(|b| format!("J{}({})", b.size, format_complex(b.value))).collect()))
            }
            RegularClass::Congruence(c) => write!(f, "{}", join(c.blocks.iter().map(|b| b.to_string()).collect())),
            RegularClass::Cosquare(fs) => write!(
                f,
                "cosquare invariant factors [{}]",
                fs.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
            ),
            RegularClass::OrbitMinimum(m) => {
                let f_ = m.field();
                let rows: Vec<String> = (0..m.rows())
                    .map(|i| format!("[{}]", (0..m.cols()).map(|j| f_.format(m.get(i, j))).collect::<Vec<_>>().join(", ")))
                    .collect();
                write!(f, "orbit minimum [{}]", rows.join(", "))
            }
        }
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sing: Vec<String> = self.singular.iter().map(|s| s.to_string()).collect();
        write!(
            f,
            "{} t={} k={} regular({}): {}; singular: {}",
            self.mode,
            self.t,
            self.boxed + 1,
            self.size,
            self.regular,
            if sing.is_empty() { "none".to_string() } else { sing.join(" + ") }
        )
    }
}

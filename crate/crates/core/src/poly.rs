//! Univariate polynomials over the exact fields and the Smith form of the
//! characteristic matrix `xI − K`.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::{Scalar, ScalarField};
use crate::matrix::Mat;

/// Coefficients in increasing degree; no trailing zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    field: ScalarField,
    coeffs: Vec<Scalar>,
}

impl Poly {
    pub fn new(field: ScalarField, mut coeffs: Vec<Scalar>) -> Poly {
        while coeffs.last().is_some_and(|c| field.is_exact_zero(c)) {
            coeffs.pop();
        }
        Poly { field, coeffs }
    }

    pub fn zero(field: ScalarField) -> Poly {
        Poly { field, coeffs: Vec::new() }
    }

    pub fn constant(field: ScalarField, c: Scalar) -> Poly {
        Poly::new(field, vec![c])
    }

    /// `x − a`
    pub fn linear(field: ScalarField, a: &Scalar) -> Poly {
        Poly::new(field, vec![field.neg(a), field.one()])
    }

    pub fn x(field: ScalarField) -> Poly {
        Poly::new(field, vec![field.zero(), field.one()])
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub fn coeffs(&self) -> &[Scalar] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports `None`.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn lead(&self) -> Option<&Scalar> {
        self.coeffs.last()
    }

    pub fn is_one(&self) -> bool {
        self.coeffs.len() == 1 && self.field.is_one(&self.coeffs[0])
    }

    pub fn monic(&self) -> Poly {
        match self.lead() {
            None => self.clone(),
            Some(l) => {
                let inv = self.field.inv(l).expect("leading coefficient is nonzero");
                self.scale(&inv)
            }
        }
    }

    pub fn scale(&self, s: &Scalar) -> Poly {
        Poly::new(self.field, self.coeffs.iter().map(|c| self.field.mul(s, c)).collect())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let f = self.field;
        let n = self.coeffs.len().max(other.coeffs.len());
        let z = f.zero();
        let coeffs = (0..n)
            .map(|i| f.add(self.coeffs.get(i).unwrap_or(&z), other.coeffs.get(i).unwrap_or(&z)))
            .collect();
        Poly::new(f, coeffs)
    }

    pub fn neg(&self) -> Poly {
        Poly::new(self.field, self.coeffs.iter().map(|c| self.field.neg(c)).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let f = self.field;
        if self.is_zero() || other.is_zero() {
            return Poly::zero(f);
        }
        let mut out = vec![f.zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if f.is_exact_zero(a) {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = f.add(&out[i + j], &f.mul(a, b));
            }
        }
        Poly::new(f, out)
    }

    pub fn div_rem(&self, d: &Poly) -> Result<(Poly, Poly)> {
        let f = self.field;
        let dl = d.lead().ok_or(Error::DivisionByZero)?;
        let dinv = f.inv(dl)?;
        let dd = d.coeffs.len() - 1;
        let mut r = self.coeffs.clone();
        if r.len() <= dd {
            return Ok((Poly::zero(f), self.clone()));
        }
        let mut q = vec![f.zero(); r.len() - dd];
        for i in (0..q.len()).rev() {
            let c = f.mul(&r[i + dd], &dinv);
            if !f.is_exact_zero(&c) {
                for (j, dc) in d.coeffs.iter().enumerate() {
                    r[i + j] = f.sub(&r[i + j], &f.mul(&c, dc));
                }
            }
            q[i] = c;
        }
        Ok((Poly::new(f, q), Poly::new(f, r)))
    }

    pub fn rem(&self, d: &Poly) -> Result<Poly> {
        Ok(self.div_rem(d)?.1)
    }

    /// Monic gcd (zero if both are zero).
    pub fn gcd(&self, other: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.rem(&b).expect("nonzero divisor");
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn derivative(&self) -> Poly {
        let f = self.field;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| f.mul(&f.from_i64(i as i64), c))
            .collect();
        Poly::new(f, coeffs)
    }

    pub fn eval(&self, x: &Scalar) -> Scalar {
        let f = self.field;
        self.coeffs.iter().rev().fold(f.zero(), |acc, c| f.add(&f.mul(&acc, x), c))
    }

    pub fn divides(&self, other: &Poly) -> bool {
        !self.is_zero() && other.rem(self).map(|r| r.is_zero()).unwrap_or(false)
    }

    /// Yun's square-free factorization for characteristic zero:
    /// `self = c · Π a_i^i` with the `a_i` square-free and pairwise coprime.
    /// Returns `(i, a_i)` for the nontrivial factors.
    pub fn squarefree_decomposition(&self) -> Vec<(usize, Poly)> {
        assert!(
            !matches!(self.field, ScalarField::Prime { .. }),
            "square-free decomposition is implemented for characteristic zero"
        );
        let mut out = Vec::new();
        if self.degree().unwrap_or(0) == 0 {
            return out;
        }
        let p = self.monic();
        let dp = p.derivative();
        let mut a = p.gcd(&dp);
        let mut b = p.div_rem(&a).expect("gcd divides").0;
        let mut c = dp.div_rem(&a).expect("gcd divides").0;
        let mut d = c.sub(&b.derivative());
        let mut i = 1;
        while b.degree().unwrap_or(0) > 0 {
            a = b.gcd(&d);
            if a.degree().unwrap_or(0) > 0 {
                out.push((i, a.clone()));
            }
            b = b.div_rem(&a).expect("gcd divides").0;
            c = d.div_rem(&a).expect("gcd divides").0;
            d = c.sub(&b.derivative());
            i += 1;
        }
        out
    }

    /// Companion matrix with ones on the subdiagonal and the negated
    /// coefficients of the monic polynomial in the last column.
    pub fn companion(&self) -> Mat {
        let f = self.field;
        let p = self.monic();
        let n = p.degree().unwrap_or(0);
        let mut m = Mat::zeros(f, n, n);
        for i in 1..n {
            m.set(i, i - 1, f.one());
        }
        for i in 0..n {
            m.set(i, n - 1, f.neg(&p.coeffs[i]));
        }
        m
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(out, "0");
        }
        let f = self.field;
        let mut terms = Vec::new();
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if f.is_exact_zero(c) {
                continue;
            }
            let lit = f.format(c);
            let coef = if lit.contains(['+', '/']) || lit[1..].contains('-') {
                format!("({lit})")
            } else {
                lit
            };
            terms.push(match (i, coef.as_str()) {
                (0, _) => coef,
                (1, "1") => "x".to_string(),
                (1, "-1") => "-x".to_string(),
                (1, _) => format!("{coef}*x"),
                (_, "1") => format!("x^{i}"),
                (_, "-1") => format!("-x^{i}"),
                _ => format!("{coef}*x^{i}"),
            });
        }
        write!(out, "{}", terms.join(" + "))
    }
}

/// Invariant factors of a square matrix over an exact field: the non-unit
/// diagonal entries of the Smith form of `xI − K`, each dividing the next.
pub fn invariant_factors(k: &Mat) -> Result<Vec<Poly>> {
    let f = k.field();
    if !f.is_exact() {
        return Err(Error::Domain("invariant factors need an exact field".into()));
    }
    if !k.is_square() {
        return Err(Error::ShapeMismatch(format!("{}x{} is not square", k.rows(), k.cols())));
    }
    let n = k.rows();
    let mut m: Vec<Vec<Poly>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let c = f.neg(k.get(i, j));
                    let mut p = Poly::constant(f, c);
                    if i == j {
                        p = p.add(&Poly::x(f));
                    }
                    p
                })
                .collect()
        })
        .collect();
    let mut diag = Vec::with_capacity(n);
    for t in 0..n {
        loop {
            // Smallest-degree nonzero entry in the trailing block.
            let mut best: Option<(usize, usize, usize)> = None;
            for i in t..n {
                for j in t..n {
                    if let Some(d) = m[i][j].degree() {
                        if best.is_none_or(|b| d < b.2) {
                            best = Some((i, j, d));
                        }
                    }
                }
            }
            let Some((bi, bj, _)) = best else {
                // Trailing block is zero: xI − K is never singular, so this
                // cannot happen for square K.
                return Err(Error::InvariantViolation("singular characteristic matrix".into()));
            };
            m.swap(t, bi);
            for row in m.iter_mut() {
                row.swap(t, bj);
            }
            let mut clean = true;
            for i in t + 1..n {
                let (q, r) = m[i][t].div_rem(&m[t][t])?;
                if !q.is_zero() {
                    for j in t..n {
                        let v = m[i][j].sub(&q.mul(&m[t][j]));
                        m[i][j] = v;
                    }
                }
                if !r.is_zero() {
                    clean = false;
                }
            }
            for j in t + 1..n {
                let (q, r) = m[t][j].div_rem(&m[t][t])?;
                if !q.is_zero() {
                    for i in t..n {
                        let v = m[i][j].sub(&q.mul(&m[i][t]));
                        m[i][j] = v;
                    }
                }
                if !r.is_zero() {
                    clean = false;
                }
            }
            if !clean {
                continue;
            }
            // Pivot must divide every trailing entry.
            let bad = (t + 1..n).find(|&i| (t + 1..n).any(|j| !m[t][t].divides(&m[i][j]) && !m[i][j].is_zero()));
            match bad {
                Some(i) => {
                    for j in t..n {
                        let v = m[t][j].add(&m[i][j]);
                        m[t][j] = v;
                    }
                }
                None => break,
            }
        }
        diag.push(m[t][t].monic());
    }
    Ok(diag.into_iter().filter(|p| p.degree().unwrap_or(0) > 0).collect())
}

/// Characteristic polynomial `det(xI − K)` as the product of the invariant factors.
pub fn char_poly(k: &Mat) -> Result<Poly> {
    let f = k.field();
    Ok(invariant_factors(k)?.iter().fold(Poly::constant(f, f.one()), |acc, p| acc.mul(p)))
}

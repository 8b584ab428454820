//! Scalars of the supported fields with involution.
//!
//! Every field exposes the same arithmetic through [`ScalarField`]; the
//! scalar values themselves ([`Scalar`]) carry no context, so operations
//! that need the modulus or the involution go through the field value.

use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Default relative rank tolerance for complex floats.
pub const DEFAULT_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Involution {
    Conjugation,
    Identity,
}

/// A field together with its involution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarField {
    /// Exact rationals, identity involution.
    Rational,
    /// Exact Gaussian rationals `a + bi`.
    Gaussian(Involution),
    /// Residues modulo a prime, identity involution.
    Prime { p: u64 },
    /// Complex doubles with a relative rank tolerance.
    Complex { eps: f64, involution: Involution },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Rat(BigRational),
    Gauss(BigRational, BigRational),
    Mod(u64),
    Cpx(Complex64),
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn mod_pow(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    acc
}

impl ScalarField {
    pub fn prime(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Domain(format!("{p} is not prime")));
        }
        if p >= 1 << 31 {
            return Err(Error::Domain(format!("modulus {p} too large")));
        }
        Ok(ScalarField::Prime { p })
    }

    pub fn complex(eps: f64) -> Result<Self> {
        Self::complex_with(eps, Involution::Conjugation)
    }

    pub fn complex_with(eps: f64, involution: Involution) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("tolerance must be positive, got {eps}")));
        }
        Ok(ScalarField::Complex { eps, involution })
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, ScalarField::Complex { .. })
    }

    pub fn involution(&self) -> Involution {
        match self {
            ScalarField::Rational | ScalarField::Prime { .. } => Involution::Identity,
            ScalarField::Gaussian(inv) => *inv,
            ScalarField::Complex { involution, .. } => *involution,
        }
    }

    /// Whether the field contains a square root of -1 that we can name.
    pub fn has_imaginary_unit(&self) -> bool {
        matches!(self, ScalarField::Gaussian(_) | ScalarField::Complex { .. })
    }

    /// The rank tolerance of a complex field, `None` for exact fields.
    pub fn eps(&self) -> Option<f64> {
        match self {
            ScalarField::Complex { eps, .. } => Some(*eps),
            _ => None,
        }
    }

    pub fn zero(&self) -> Scalar {
        match self {
            ScalarField::Rational => Scalar::Rat(BigRational::zero()),
            ScalarField::Gaussian(_) => Scalar::Gauss(BigRational::zero(), BigRational::zero()),
            ScalarField::Prime { .. } => Scalar::Mod(0),
            ScalarField::Complex { .. } => Scalar::Cpx(Complex64::new(0.0, 0.0)),
        }
    }

    pub fn one(&self) -> Scalar {
        self.from_i64(1)
    }

    pub fn from_i64(&self, n: i64) -> Scalar {
        match self {
            ScalarField::Rational => Scalar::Rat(rat(n)),
            ScalarField::Gaussian(_) => Scalar::Gauss(rat(n), BigRational::zero()),
            ScalarField::Prime { p } => Scalar::Mod((n.rem_euclid(*p as i64)) as u64),
            ScalarField::Complex { .. } => Scalar::Cpx(Complex64::new(n as f64, 0.0)),
        }
    }

    /// `re + im·i` for fields that contain i.
    pub fn from_gaussian_ints(&self, re: i64, im: i64) -> Result<Scalar> {
        match self {
            ScalarField::Gaussian(_) => Ok(Scalar::Gauss(rat(re), rat(im))),
            ScalarField::Complex { .. } => Ok(Scalar::Cpx(Complex64::new(re as f64, im as f64))),
            _ if im == 0 => Ok(self.from_i64(re)),
            _ => Err(Error::Domain(format!("{self} has no imaginary unit"))),
        }
    }

    pub fn imaginary_unit(&self) -> Result<Scalar> {
        self.from_gaussian_ints(0, 1)
    }

    /// Embed a complex number; exact fields only accept values they can represent exactly.
    pub fn from_complex(&self, z: Complex64) -> Result<Scalar> {
        match self {
            ScalarField::Complex { .. } => Ok(Scalar::Cpx(z)),
            _ => {
                let re = BigRational::from_float(z.re)
                    .ok_or_else(|| Error::Domain(format!("non-finite value {z}")))?;
                let im = BigRational::from_float(z.im)
                    .ok_or_else(|| Error::Domain(format!("non-finite value {z}")))?;
                match self {
                    ScalarField::Rational if im.is_zero() => Ok(Scalar::Rat(re)),
                    ScalarField::Gaussian(_) => Ok(Scalar::Gauss(re, im)),
                    ScalarField::Prime { .. } if im.is_zero() && re.is_integer() => {
                        let n = re.to_integer().to_i64().ok_or_else(|| {
                            Error::Domain(format!("{z} does not fit a residue"))
                        })?;
                        Ok(self.from_i64(n))
                    }
                    _ => Err(Error::Domain(format!("{z} is not an element of {self}"))),
                }
            }
        }
    }

    /// Whether `a` belongs to this field's carrier.
    pub fn contains(&self, a: &Scalar) -> bool {
        match (self, a) {
            (ScalarField::Rational, Scalar::Rat(_)) => true,
            (ScalarField::Gaussian(_), Scalar::Gauss(..)) => true,
            (ScalarField::Prime { p }, Scalar::Mod(r)) => r < p,
            (ScalarField::Complex { .. }, Scalar::Cpx(_)) => true,
            _ => false,
        }
    }

    pub fn add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (a, b) {
            (Scalar::Rat(x), Scalar::Rat(y)) => Scalar::Rat(x + y),
            (Scalar::Gauss(a1, b1), Scalar::Gauss(a2, b2)) => Scalar::Gauss(a1 + a2, b1 + b2),
            (Scalar::Mod(x), Scalar::Mod(y)) => Scalar::Mod((x + y) % self.modulus()),
            (Scalar::Cpx(x), Scalar::Cpx(y)) => Scalar::Cpx(x + y),
            _ => mismatch(a, b),
        }
    }

    pub fn neg(&self, a: &Scalar) -> Scalar {
        match a {
            Scalar::Rat(x) => Scalar::Rat(-x),
            Scalar::Gauss(x, y) => Scalar::Gauss(-x, -y),
            Scalar::Mod(x) => Scalar::Mod((self.modulus() - x) % self.modulus()),
            Scalar::Cpx(z) => Scalar::Cpx(-z),
        }
    }

    pub fn sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        self.add(a, &self.neg(b))
    }

    pub fn mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (a, b) {
            (Scalar::Rat(x), Scalar::Rat(y)) => Scalar::Rat(x * y),
            (Scalar::Gauss(a1, b1), Scalar::Gauss(a2, b2)) => {
                Scalar::Gauss(a1 * a2 - b1 * b2, a1 * b2 + b1 * a2)
            }
            (Scalar::Mod(x), Scalar::Mod(y)) => Scalar::Mod(x * y % self.modulus()),
            (Scalar::Cpx(x), Scalar::Cpx(y)) => Scalar::Cpx(x * y),
            _ => mismatch(a, b),
        }
    }

    pub fn inv(&self, a: &Scalar) -> Result<Scalar> {
        match a {
            Scalar::Rat(x) => {
                if x.is_zero() {
                    return Err(Error::DivisionByZero);
                }
                Ok(Scalar::Rat(x.recip()))
            }
            Scalar::Gauss(x, y) => {
                let norm = x * x + y * y;
                if norm.is_zero() {
                    return Err(Error::DivisionByZero);
                }
                Ok(Scalar::Gauss(x / &norm, -(y / &norm)))
            }
            Scalar::Mod(x) => {
                if *x == 0 {
                    return Err(Error::DivisionByZero);
                }
                let p = self.modulus();
                Ok(Scalar::Mod(mod_pow(*x, p - 2, p)))
            }
            Scalar::Cpx(z) => {
                if z.re == 0.0 && z.im == 0.0 {
                    return Err(Error::DivisionByZero);
                }
                Ok(Scalar::Cpx(z.inv()))
            }
        }
    }

    pub fn div(&self, a: &Scalar, b: &Scalar) -> Result<Scalar> {
        Ok(self.mul(a, &self.inv(b)?))
    }

    /// The involution. Identity for ℚ, GF(p) and identity-involution modes.
    pub fn conj(&self, a: &Scalar) -> Scalar {
        if self.involution() == Involution::Identity {
            return a.clone();
        }
        match a {
            Scalar::Gauss(x, y) => Scalar::Gauss(x.clone(), -y),
            Scalar::Cpx(z) => Scalar::Cpx(z.conj()),
            other => other.clone(),
        }
    }

    /// Exact zero test. For complex floats this is bitwise zero and must not
    /// be used for rank decisions; use [`ScalarField::is_negligible`] there.
    pub fn is_exact_zero(&self, a: &Scalar) -> bool {
        match a {
            Scalar::Rat(x) => x.is_zero(),
            Scalar::Gauss(x, y) => x.is_zero() && y.is_zero(),
            Scalar::Mod(x) => *x == 0,
            Scalar::Cpx(z) => z.re == 0.0 && z.im == 0.0,
        }
    }

    /// Zero test against a caller-supplied scale: `|a| <= eps * scale` for
    /// complex floats, exact equality otherwise.
    pub fn is_negligible(&self, a: &Scalar, scale: f64) -> bool {
        match (self, a) {
            (ScalarField::Complex { eps, .. }, Scalar::Cpx(z)) => z.norm() <= eps * scale,
            _ => self.is_exact_zero(a),
        }
    }

    pub fn is_one(&self, a: &Scalar) -> bool {
        match a {
            Scalar::Rat(x) => x.is_one(),
            Scalar::Gauss(x, y) => x.is_one() && y.is_zero(),
            Scalar::Mod(x) => *x == 1,
            Scalar::Cpx(z) => z.re == 1.0 && z.im == 0.0,
        }
    }

    /// Magnitude used for pivoting and norms. GF(p) has no absolute value;
    /// nonzero residues report 1.
    pub fn abs(&self, a: &Scalar) -> f64 {
        match a {
            Scalar::Rat(x) => x.to_f64().unwrap_or(f64::INFINITY).abs(),
            Scalar::Gauss(x, y) => {
                let re = x.to_f64().unwrap_or(f64::INFINITY);
                let im = y.to_f64().unwrap_or(f64::INFINITY);
                re.hypot(im)
            }
            Scalar::Mod(x) => {
                if *x == 0 {
                    0.0
                } else {
                    1.0
                }
            }
            Scalar::Cpx(z) => z.norm(),
        }
    }

    /// Complex approximation; `None` for GF(p).
    pub fn to_complex(&self, a: &Scalar) -> Option<Complex64> {
        match a {
            Scalar::Rat(x) => Some(Complex64::new(x.to_f64()?, 0.0)),
            Scalar::Gauss(x, y) => Some(Complex64::new(x.to_f64()?, y.to_f64()?)),
            Scalar::Mod(_) => None,
            Scalar::Cpx(z) => Some(*z),
        }
    }

    fn modulus(&self) -> u64 {
        match self {
            ScalarField::Prime { p } => *p,
            _ => panic!("modular arithmetic requested in {self}"),
        }
    }

    /// Parse a scalar literal.
    ///
    /// Grammar: rationals `a` or `a/b`; Gaussian rationals `a/b+c/di` with
    /// either part optional (`3i`, `-i`, `1/2-i`); residues `k`; complex
    /// floats `x+yi` in decimal notation.
    pub fn parse(&self, text: &str) -> std::result::Result<Scalar, String> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err("empty scalar literal".into());
        }
        match self {
            ScalarField::Rational => parse_rational(&s).map(Scalar::Rat),
            ScalarField::Prime { p } => {
                let n: BigInt = s.parse().map_err(|_| format!("invalid residue `{s}`"))?;
                let r = ((n % BigInt::from(*p)) + BigInt::from(*p)) % BigInt::from(*p);
                Ok(Scalar::Mod(r.to_u64().expect("residue fits")))
            }
            ScalarField::Gaussian(_) => {
                let (re, im) = split_complex(&s)?;
                let re = match re {
                    Some(r) => parse_rational(r)?,
                    None => BigRational::zero(),
                };
                let im = match im {
                    Some(i) => parse_imag(i, parse_rational)?,
                    None => BigRational::zero(),
                };
                Ok(Scalar::Gauss(re, im))
            }
            ScalarField::Complex { .. } => {
                let (re, im) = split_complex(&s)?;
                let re = match re {
                    Some(r) => parse_float(r)?,
                    None => 0.0,
                };
                let im = match im {
                    Some(i) => parse_imag(i, parse_float)?,
                    None => 0.0,
                };
                Ok(Scalar::Cpx(Complex64::new(re, im)))
            }
        }
    }

    /// Canonical literal for `a`; inverse of [`ScalarField::parse`].
    pub fn format(&self, a: &Scalar) -> String {
        match a {
            Scalar::Rat(x) => x.to_string(),
            Scalar::Mod(x) => x.to_string(),
            Scalar::Gauss(x, y) => {
                if y.is_zero() {
                    x.to_string()
                } else if x.is_zero() {
                    format!("{y}i")
                } else if y.is_negative() {
                    format!("{x}-{}i", -y)
                } else {
                    format!("{x}+{y}i")
                }
            }
            Scalar::Cpx(z) => {
                let im = if z.im == 0.0 { 0.0 } else { z.im };
                let re = if z.re == 0.0 { 0.0 } else { z.re };
                if im.is_sign_negative() {
                    format!("{re:?}-{:?}i", -im)
                } else {
                    format!("{re:?}+{im:?}i")
                }
            }
        }
    }
}

fn mismatch(a: &Scalar, b: &Scalar) -> ! {
    panic!("scalar carriers differ: {a:?} vs {b:?}")
}

fn parse_rational(s: &str) -> std::result::Result<BigRational, String> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = num.parse().map_err(|_| format!("invalid rational `{s}`"))?;
    let d: BigInt = den.parse().map_err(|_| format!("invalid rational `{s}`"))?;
    if d.is_zero() {
        return Err(format!("zero denominator in `{s}`"));
    }
    Ok(BigRational::new(n, d))
}

fn parse_float(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid decimal `{s}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite decimal `{s}`"));
    }
    Ok(v)
}

/// `s` ends with `i`; a bare sign means unit coefficient.
fn parse_imag<T>(
    s: &str,
    coeff: impl Fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<T, String> {
    let body = &s[..s.len() - 1];
    match body {
        "" | "+" => coeff("1"),
        "-" => coeff("-1"),
        b => coeff(b.strip_prefix('+').unwrap_or(b)),
    }
}

/// Split `x+yi` into real and imaginary literals. A sign preceded by an
/// exponent marker belongs to the exponent.
fn split_complex(s: &str) -> std::result::Result<(Option<&str>, Option<&str>), String> {
    if !s.ends_with('i') {
        return Ok((Some(s), None));
    }
    let bytes = s.as_bytes();
    let mut split = None;
    for idx in (1..bytes.len()).rev() {
        let c = bytes[idx];
        if (c == b'+' || c == b'-') && !matches!(bytes[idx - 1], b'e' | b'E') {
            split = Some(idx);
            break;
        }
    }
    match split {
        Some(idx) => Ok((Some(&s[..idx]), Some(&s[idx..]))),
        None => Ok((None, Some(s))),
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Rational => write!(f, "Q"),
            ScalarField::Gaussian(Involution::Conjugation) => write!(f, "Q(i)"),
            ScalarField::Gaussian(Involution::Identity) => write!(f, "Q(i) (identity involution)"),
            ScalarField::Prime { p } => write!(f, "GF({p})"),
            ScalarField::Complex { eps, involution } => match involution {
                Involution::Conjugation => write!(f, "C (eps {eps:e})"),
                Involution::Identity => write!(f, "C (eps {eps:e}, identity involution)"),
            },
        }
    }
}

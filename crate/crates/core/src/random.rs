//! Seeded generators for bangles, witnesses and structured test inputs.

use rand::Rng;

use crate::bangle::{regular_bangle, Bangle, Mode, SingularSummand, Witness};
use crate::error::Result;
use crate::field::{Scalar, ScalarField};
use crate::matrix::Mat;

/// A small random entry: integers in `[-3, 3]` over ℚ, Gaussian integers
/// with parts in `[-2, 2]`, complex integers in `[-5, 5]` for floats,
/// uniform residues over GF(p).
pub fn random_scalar(f: ScalarField, rng: &mut impl Rng) -> Scalar {
    match f {
        ScalarField::Rational => f.from_i64(rng.random_range(-3..=3)),
        ScalarField::Gaussian(_) => f
            .from_gaussian_ints(rng.random_range(-2..=2), rng.random_range(-2..=2))
            .expect("Gaussian field has i"),
        ScalarField::Prime { p } => f.from_i64(rng.random_range(0..p as i64)),
        ScalarField::Complex { .. } => f
            .from_complex(num_complex::Complex64::new(
                rng.random_range(-5..=5) as f64,
                rng.random_range(-5..=5) as f64,
            ))
            .expect("complex field"),
    }
}

/// Entries are zero with probability `1 - density`.
pub fn random_mat(f: ScalarField, rows: usize, cols: usize, density: f64, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(f, rows, cols, |_, _| {
        if rng.random_bool(density.clamp(0.0, 1.0)) {
            random_scalar(f, rng)
        } else {
            f.zero()
        }
    })
}

fn random_nonzero(f: ScalarField, rng: &mut impl Rng) -> Scalar {
    loop {
        let s = random_scalar(f, rng);
        if !f.is_exact_zero(&s) {
            return s;
        }
    }
}

/// `L·U` with unit lower `L` and upper `U` with nonzero diagonal, so the
/// result is nonsingular by construction.
pub fn random_nonsingular(f: ScalarField, n: usize, rng: &mut impl Rng) -> Mat {
    let l = Mat::from_fn(f, n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => random_scalar(f, rng),
        std::cmp::Ordering::Equal => f.one(),
        std::cmp::Ordering::Less => f.zero(),
    });
    let u = Mat::from_fn(f, n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => random_scalar(f, rng),
        std::cmp::Ordering::Equal => random_nonzero(f, rng),
        std::cmp::Ordering::Greater => f.zero(),
    });
    l.mul(&u).expect("square factors")
}

/// Nonsingular upper block-triangular witness.
pub fn random_witness(f: ScalarField, widths: &[usize], boxed: usize, mode: Mode, rng: &mut impl Rng) -> Witness {
    let n: usize = widths.iter().sum();
    let mut s = Mat::zeros(f, n, n);
    let mut oi = 0;
    for (i, &wi) in widths.iter().enumerate() {
        s.set_block(oi, oi, &random_nonsingular(f, wi, rng));
        let mut oj = oi + wi;
        for &wj in &widths[i + 1..] {
            s.set_block(oi, oj, &random_mat(f, wi, wj, 0.7, rng));
            oj += wj;
        }
        oi += wi;
    }
    Witness::new(s, widths, boxed, mode).expect("block-triangular with nonsingular diagonal")
}

pub fn random_bangle(f: ScalarField, widths: &[usize], boxed: usize, density: f64, rng: &mut impl Rng) -> Result<Bangle> {
    let n = widths[boxed];
    let strips = widths.iter().map(|&w| random_mat(f, n, w, density, rng)).collect();
    Bangle::new(f, strips, boxed)
}

/// A random singular summand fitting `t` strips with the box at `boxed`.
pub fn random_summand(t: usize, boxed: usize, max_q: usize, rng: &mut impl Rng) -> SingularSummand {
    let others: Vec<usize> = (0..t).filter(|&i| i != boxed).collect();
    if others.is_empty() || rng.random_bool(0.4) {
        SingularSummand::plain(rng.random_range(1..=max_q.max(1)))
    } else {
        let i = others[rng.random_range(0..others.len())];
        SingularSummand::e_in(i, rng.random_range(0..=max_q))
    }
}

/// `K ⊎ summands` with a random nonsingular `K` of size `p`, before any
/// scrambling.
pub fn random_structured(
    f: ScalarField,
    t: usize,
    boxed: usize,
    p: usize,
    n_summands: usize,
    max_q: usize,
    rng: &mut impl Rng,
) -> Result<(Bangle, Mat, Vec<SingularSummand>)> {
    let k = random_nonsingular(f, p, rng);
    let mut acc = regular_bangle(&k, t, boxed)?;
    let mut summands = Vec::new();
    for _ in 0..n_summands {
        let s = random_summand(t, boxed, max_q, rng);
        acc = acc.block_direct_sum(&s.bangle(f, t, boxed)?)?;
        summands.push(s);
    }
    summands.sort();
    Ok((acc, k, summands))
}

/// Apply a random witness; returns the image and the witness used.
pub fn scramble(a: &Bangle, mode: Mode, rng: &mut impl Rng) -> Result<(Bangle, Witness)> {
    let w = random_witness(a.field(), &a.widths(), a.boxed(), mode, rng);
    Ok((w.apply(a)?, w))
}

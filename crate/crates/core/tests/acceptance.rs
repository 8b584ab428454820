//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` (release builds are not required; the test
//! profile is optimized).

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::time::{Duration, Instant};

use bangle_core::bangle::{delta, gamma, hpair, jordan, regular_bangle, Bangle, Mode, SingularSummand};
use bangle_core::canonical::{
    canonical_bangle, congruence_canonical_c, cosquare, descriptor, CongruenceBlock, CongruenceClassC,
};
use bangle_core::cli::{Document, Payload};
use bangle_core::forms::{
    bangle_of_form, bangle_of_mapping, canonicalize_form, canonicalize_mapping, form_of_bangle, mapping_of_bangle,
    random_change, random_form, random_mapping, verify_equivalence, FormKind, MappingKind,
};
use bangle_core::poly::invariant_factors;
use bangle_core::random::{random_bangle, random_nonsingular, random_structured, scramble};
use bangle_core::regularize::regularize;
use bangle_core::{Involution, Mat, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const QI: ScalarField = ScalarField::Gaussian(Involution::Conjugation);
const QT: ScalarField = ScalarField::Gaussian(Involution::Identity);
const Q: ScalarField = ScalarField::Rational;
const DESCRIPTOR_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn gf(p: u64) -> ScalarField {
    ScalarField::prime(p).unwrap()
}

/// Random layout with `t ≤ max_t`, box width ≤ 6, total width ≤ 14.
fn random_layout(rng: &mut impl Rng, max_t: usize) -> (Vec<usize>, usize) {
    let t = rng.random_range(1..=max_t);
    let boxed = rng.random_range(0..t);
    let mut widths = vec![0; t];
    widths[boxed] = rng.random_range(0..=6);
    let mut budget = 14 - widths[boxed];
    for (i, w) in widths.iter_mut().enumerate() {
        if i != boxed {
            *w = rng.random_range(0..=budget.min(4));
            budget -= *w;
        }
    }
    (widths, boxed)
}

/// Either an unstructured random bangle or a scrambled known decomposition.
fn random_input(f: ScalarField, mode: Mode, rng: &mut impl Rng) -> (Bangle, Option<Vec<SingularSummand>>) {
    if rng.random_bool(0.5) {
        let (widths, boxed) = random_layout(rng, 4);
        let density = [0.25, 0.5, 0.9][rng.random_range(0..3)];
        (random_bangle(f, &widths, boxed, density, rng).unwrap(), None)
    } else {
        let t = rng.random_range(1..=4);
        let boxed = rng.random_range(0..t);
        let p = rng.random_range(0..=2);
        let count = rng.random_range(0..=3);
        let (a, _, summands) = random_structured(f, t, boxed, p, count, 2, rng).unwrap();
        let (b, _) = scramble(&a, mode, rng).unwrap();
        (b, Some(summands))
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    let mut runs = 0;
    for f in [Q, QI, gf(2), gf(5)] {
        for i in 0..500 {
            let mode = if i % 2 == 0 { Mode::Star } else { Mode::Sim };
            let (a, _) = random_input(f, mode, &mut rng);
            runs += 1;
            let ok = match regularize(&a, mode) {
                Ok(d) => d.witness.apply(&a).ok() == Some(d.assemble().unwrap()),
                Err(_) => false,
            };
            if !ok {
                failures.push(format!("{f} {mode} #{i}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(60),
        format!("{runs} runs, {} failures {:?}, {:.1}s (limit 60s)", failures.len(), failures.first(), elapsed.as_secs_f64()),
    )
}

/// Complete similarity invariants of the regular part in sim mode, cosquare
/// invariants in star mode (the regular part is only fixed up to *congruence).
fn regular_invariants(k: &Mat, mode: Mode) -> Vec<String> {
    let m = match mode {
        Mode::Sim => k.clone(),
        Mode::Star => cosquare(k, k.field().involution() == Involution::Conjugation).unwrap(),
    };
    invariant_factors(&m).unwrap().iter().map(|p| p.to_string()).collect()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fields = [Q, QI, gf(3), gf(5)];
    let mut failures = Vec::new();
    for mode in [Mode::Star, Mode::Sim] {
        for i in 0..200 {
            let f = fields[i % fields.len()];
            let (a, known) = random_input(f, mode, &mut rng);
            let (b, _) = scramble(&a, mode, &mut rng).unwrap();
            let (da, db) = (regularize(&a, mode).unwrap(), regularize(&b, mode).unwrap());
            let mut ok = da.singular == db.singular
                && regular_invariants(&da.regular, mode) == regular_invariants(&db.regular, mode)
                && descriptor(&a, mode).unwrap().approx_eq(&descriptor(&b, mode).unwrap(), DESCRIPTOR_TOL);
            if let Some(s) = known {
                ok &= da.singular == s;
            }
            if !ok {
                failures.push(format!("{f} {mode} #{i}"));
            }
        }
    }
    outcome(failures.is_empty(), format!("400 scrambles, {} failures {:?}", failures.len(), failures.first()))
}

/// GF(2) matrices as row-major bit vectors, independent of the library.
#[derive(Clone, PartialEq, Eq)]
struct Bits {
    r: usize,
    c: usize,
    v: Vec<u8>,
}

impl Bits {
    fn from_code(r: usize, c: usize, code: u32) -> Bits {
        Bits { r, c, v: (0..r * c).map(|i| ((code >> i) & 1) as u8).collect() }
    }
    fn code(&self) -> u32 {
        self.v.iter().enumerate().map(|(i, &b)| (b as u32) << i).sum()
    }
    fn mul(&self, o: &Bits) -> Bits {
        let mut v = vec![0u8; self.r * o.c];
        for i in 0..self.r {
            for j in 0..o.c {
                v[i * o.c + j] = (0..self.c).fold(0, |acc, l| acc ^ (self.v[i * self.c + l] & o.v[l * o.c + j]));
            }
        }
        Bits { r: self.r, c: o.c, v }
    }
    fn transpose(&self) -> Bits {
        let mut v = vec![0u8; self.r * self.c];
        for i in 0..self.r {
            for j in 0..self.c {
                v[j * self.r + i] = self.v[i * self.c + j];
            }
        }
        Bits { r: self.c, c: self.r, v }
    }
    fn identity(n: usize) -> Bits {
        Bits { r: n, c: n, v: (0..n * n).map(|i| u8::from(i / n == i % n)).collect() }
    }
}

fn gl2(n: usize) -> Vec<(Bits, Bits)> {
    let all: Vec<Bits> = (0..1u32 << (n * n)).map(|c| Bits::from_code(n, n, c)).collect();
    all.iter()
        .filter_map(|x| all.iter().find(|y| x.mul(y) == Bits::identity(n)).map(|y| (x.clone(), y.clone())))
        .collect()
}

/// Nonsingular upper block-triangular `S` with the box block separately,
/// paired with the matching row factor.
fn witnesses_gf2(widths: &[usize], boxed: usize, mode: Mode) -> Vec<(Bits, Bits)> {
    let (w0, w1) = (widths[0], widths[1]);
    let n = w0 + w1;
    let mut out = Vec::new();
    for (a, ai) in gl2(w0) {
        for (d, di) in gl2(w1) {
            for off in 0..1u32 << (w0 * w1) {
                let b = Bits::from_code(w0, w1, off);
                let mut s = Bits { r: n, c: n, v: vec![0; n * n] };
                for i in 0..n {
                    for j in 0..n {
                        s.v[i * n + j] = match (i < w0, j < w0) {
                            (true, true) => a.v[i * w0 + j],
                            (true, false) => b.v[i * w1 + j - w0],
                            (false, false) => d.v[(i - w0) * w1 + j - w0],
                            (false, true) => 0,
                        };
                    }
                }
                let (skk, skk_inv) = if boxed == 0 { (&a, &ai) } else { (&d, &di) };
                let row = match mode {
                    Mode::Star => skk.transpose(),
                    Mode::Sim => skk_inv.clone(),
                };
                out.push((s, row));
            }
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let f = gf(2);
    let mut failures = Vec::new();
    let mut checked = 0;
    for mode in [Mode::Star, Mode::Sim] {
        for boxed in 0..2 {
            for nk in 0..=2 {
                for no in 0..=2 {
                    let widths = if boxed == 0 { vec![nk, no] } else { vec![no, nk] };
                    let cols = nk + no;
                    let ws = witnesses_gf2(&widths, boxed, mode);
                    let mut orbit_of = BTreeMap::new();
                    let mut descr_of = BTreeMap::new();
                    for code in 0..1u32 << (nk * cols) {
                        let a = Bits::from_code(nk, cols, code);
                        let orbit = ws.iter().map(|(s, row)| row.mul(&a).mul(s).code()).min().unwrap_or(code);
                        orbit_of.insert(code, orbit);
                        let m = Mat::from_fn(f, nk, cols, |i, j| f.from_i64(a.v[i * cols + j] as i64));
                        let b = Bangle::from_matrix(&m, &widths, boxed).unwrap();
                        descr_of.insert(code, format!("{:?}", descriptor(&b, mode).unwrap()));
                    }
                    // Descriptors must be constant on orbits and separate them.
                    let mut by_orbit: BTreeMap<u32, BTreeSet<&String>> = BTreeMap::new();
                    let mut by_descr: BTreeMap<&String, BTreeSet<u32>> = BTreeMap::new();
                    for (code, orbit) in &orbit_of {
                        by_orbit.entry(*orbit).or_default().insert(&descr_of[code]);
                        by_descr.entry(&descr_of[code]).or_default().insert(*orbit);
                    }
                    checked += orbit_of.len();
                    if by_orbit.values().any(|d| d.len() != 1) || by_descr.values().any(|o| o.len() != 1) {
                        failures.push(format!("{mode} box {} widths {widths:?}", boxed + 1));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(600),
        format!(
            "{checked} bangles, {} failing layouts {:?}, {:.1}s (limit 600s)",
            failures.len(),
            failures.first(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let f = QI;
    let i = f.imaginary_unit().unwrap();
    let lambdas = [f.from_i64(2), i.clone(), f.add(&f.one(), &i)];
    let mut regulars: Vec<(String, Mat)> = vec![("none".into(), Mat::zeros(f, 0, 0))];
    for n in 1..=3 {
        regulars.push((format!("Gamma{n}"), gamma(f, n)));
        regulars.push((format!("Delta{n}"), delta(f, n).unwrap()));
        for l in &lambdas {
            regulars.push((format!("J{n}({})", f.format(l)), jordan(f, n, l)));
        }
    }
    let mut failures = Vec::new();
    let mut runs = 0;
    for t in 1..=3 {
        for boxed in 0..t {
            let mut summands: Vec<Option<SingularSummand>> = vec![None];
            summands.extend((1..=4).map(|q| Some(SingularSummand::plain(q))));
            for strip in (0..t).filter(|&s| s != boxed) {
                summands.extend((0..=4).map(|q| Some(SingularSummand::e_in(strip, q))));
            }
            for (name, k) in &regulars {
                for s in &summands {
                    let mut a = regular_bangle(k, t, boxed).unwrap();
                    if let Some(s) = s {
                        a = a.block_direct_sum(&s.bangle(f, t, boxed).unwrap()).unwrap();
                    }
                    for mode in [Mode::Star, Mode::Sim] {
                        runs += 1;
                        let ok = canonical_bangle(&a, mode).ok().and_then(|c| {
                            let b = c.bangle?;
                            let again = descriptor(&b, mode).ok()?;
                            let expected: Vec<SingularSummand> = s.iter().copied().collect();
                            Some(c.descriptor.singular == expected && again.approx_eq(&c.descriptor, DESCRIPTOR_TOL))
                        });
                        if ok != Some(true) {
                            failures.push(format!("{mode} t={t} k={} {name} {s:?}", boxed + 1));
                        }
                    }
                }
            }
        }
    }
    outcome(failures.is_empty(), format!("{runs} generator bangles, {} failures {:?}", failures.len(), failures.first()))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cf = ScalarField::complex(1e-10).unwrap();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for n in 0..100 {
        let (widths, boxed) = random_layout(&mut rng, 4);
        let density = [0.2, 0.4, 0.7][n % 3];
        let rows = widths[boxed];
        let strips: Vec<Mat> = widths
            .iter()
            .map(|&w| {
                Mat::from_fn(QI, rows, w, |_, _| {
                    if rng.random_bool(density) {
                        QI.from_gaussian_ints(rng.random_range(-5..=5), rng.random_range(-5..=5)).unwrap()
                    } else {
                        QI.zero()
                    }
                })
            })
            .collect();
        let exact = Bangle::new(QI, strips, boxed).unwrap();
        let float =
            Bangle::new(cf, exact.strips().iter().map(|s| s.convert(cf).unwrap()).collect(), boxed).unwrap();
        for mode in [Mode::Star, Mode::Sim] {
            let ok = match (regularize(&exact, mode), regularize(&float, mode)) {
                (Ok(de), Ok(df)) => {
                    let res = df.residual(&float).unwrap();
                    let scale = float.max_abs();
                    worst = worst.max(res / scale.max(f64::MIN_POSITIVE));
                    let why = [
                        (de.rank_profile() != df.rank_profile(), "rank profile"),
                        (de.singular != df.singular, "summands"),
                        (res > 1e-8 * scale, "residual"),
                    ];
                    why.iter().filter(|w| w.0).map(|w| w.1).collect::<Vec<_>>().join("+")
                }
                (e, g) => format!("errors {:?} / {:?}", e.err(), g.err()),
            };
            if !ok.is_empty() {
                failures.push(format!("#{n} {mode} widths {widths:?} box {}: {ok}", boxed + 1));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("200 runs, {} failures {:?}, worst residual/‖A‖max {worst:.1e}", failures.len(), failures.first()),
    )
}

fn block_total(c: &CongruenceClassC) -> usize {
    c.blocks
        .iter()
        .map(|b| match b {
            CongruenceBlock::Gamma(n) | CongruenceBlock::UnitGamma { n, .. } => *n,
            CongruenceBlock::HPair { n, .. } => 2 * n,
        })
        .sum()
}

/// A random nonsingular matrix over ℚ(i): either generic, or a direct sum of
/// canonical congruence blocks (so repeated and paired eigenvalues occur).
fn random_k(rng: &mut impl Rng) -> Mat {
    let f = QT;
    let n = rng.random_range(1..=5);
    if rng.random_bool(0.5) {
        return random_nonsingular(f, n, rng);
    }
    let mut k = Mat::zeros(f, 0, 0);
    while k.rows() < n {
        let room = n - k.rows();
        let part = match rng.random_range(0..3) {
            0 => gamma(f, rng.random_range(1..=room)),
            1 if room >= 2 => {
                let l = f.from_gaussian_ints(rng.random_range(-2..=2), rng.random_range(1..=2)).unwrap();
                hpair(f, rng.random_range(1..=room / 2), &l)
            }
            _ => {
                let unit = [f.one(), f.from_i64(-1), f.imaginary_unit().unwrap()][rng.random_range(0..3)].clone();
                gamma(f, rng.random_range(1..=room)).scale(&unit)
            }
        };
        k = k.direct_sum(&part).unwrap();
    }
    k
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    for n in 0..200 {
        let k = random_k(&mut rng);
        let s = random_nonsingular(QT, k.rows(), &mut rng);
        let l = s.transpose().mul(&k).unwrap().mul(&s).unwrap();
        let ok = match (congruence_canonical_c(&k), congruence_canonical_c(&l)) {
            (Ok(a), Ok(b)) => {
                let same = bangle_core::canonical::RegularClass::Congruence(a.clone())
                    .approx_eq(&bangle_core::canonical::RegularClass::Congruence(b.clone()), DESCRIPTOR_TOL);
                same && block_total(&a) == k.rows() && block_total(&b) == k.rows()
            }
            _ => false,
        };
        if !ok {
            failures.push(format!("#{n} size {}", k.rows()));
        }
    }
    outcome(failures.is_empty(), format!("200 matrices, {} failures {:?}", failures.len(), failures.first()))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shapes = [(0, 0), (0, 1), (0, 3), (1, 1), (2, 2), (3, 3), (1, 3), (2, 5)];
    let mut failures = Vec::new();
    let mut round_trips = 0;
    for f in [Q, QI, gf(5)] {
        for &(m, n) in &shapes {
            for kind in FormKind::ALL {
                let x = random_form(f, kind, m, n, 0.7, &mut rng);
                round_trips += 1;
                if form_of_bangle(&bangle_of_form(&x).unwrap(), kind).unwrap() != x {
                    failures.push(format!("round trip {kind} {m}/{n}"));
                }
            }
            for kind in MappingKind::ALL {
                let x = random_mapping(f, kind, m, n, 0.7, &mut rng);
                round_trips += 1;
                if mapping_of_bangle(&bangle_of_mapping(&x).unwrap(), kind).unwrap() != x {
                    failures.push(format!("round trip {kind} {m}/{n}"));
                }
            }
        }
    }
    let fields = [QI, Q, gf(5)];
    let dims = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(0..=6);
        (rng.random_range(0..=n), n)
    };
    for kind in FormKind::ALL {
        for i in 0..100 {
            let f = fields[i % 3];
            let (m, n) = dims(&mut rng);
            let x = random_form(f, kind, m, n, [0.3, 0.6][i % 2], &mut rng);
            let y = x.transform(&random_change(f, kind.frame(), m, n, &mut rng)).unwrap();
            let ok = match (canonicalize_form(&x), canonicalize_form(&y)) {
                (Ok(cx), Ok(cy)) => {
                    cx.descriptor.approx_eq(&cy.descriptor, DESCRIPTOR_TOL)
                        && verify_equivalence(&y, &cy.decomposed, &cy.change).unwrap()
                }
                _ => false,
            };
            if !ok {
                failures.push(format!("{kind} #{i} over {f}"));
            }
        }
    }
    for kind in MappingKind::ALL {
        for i in 0..100 {
            let f = fields[i % 3];
            let (m, n) = dims(&mut rng);
            let x = random_mapping(f, kind, m, n, [0.3, 0.6][i % 2], &mut rng);
            let y = x.transform(&random_change(f, kind.frame(), m, n, &mut rng)).unwrap();
            let ok = match (canonicalize_mapping(&x), canonicalize_mapping(&y)) {
                (Ok(cx), Ok(cy)) => {
                    cx.descriptor.approx_eq(&cy.descriptor, DESCRIPTOR_TOL)
                        && verify_equivalence(&y, &cy.decomposed, &cy.change).unwrap()
                }
                _ => false,
            };
            if !ok {
                failures.push(format!("{kind} #{i} over {f}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("600 scrambles + {round_trips} round trips, {} failures {:?}", failures.len(), failures.first()),
    )
}

fn bangle_bin(args: &[&str], stdin_file: Option<&std::path::Path>) -> (i32, String, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bangle"));
    cmd.args(args);
    if let Some(p) = stdin_file {
        cmd.arg(p);
    }
    let out = cmd.output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn corrupt(cert: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(cert).unwrap();
    let d = &mut v["decomposition"];
    let k = d["k"].as_u64().unwrap();
    let f = Document::parse(cert).unwrap().field;
    for b in d["witness"]["blocks"].as_array_mut().unwrap() {
        if b["row"].as_u64() == Some(k) && b["col"].as_u64() == Some(k) {
            for e in b["entries"].as_array_mut().unwrap() {
                *e = serde_json::Value::String(f.format(&f.zero()));
            }
        }
    }
    serde_json::to_string_pretty(&v).unwrap()
}

fn criterion_8() -> Outcome {
    let dir = std::env::temp_dir().join(format!("bangle-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let fields = ["Q", "QI", "GF", "C"];
    let mut failures = Vec::new();
    let mut corrupted = 0;
    for mode in ["star", "sim"] {
        for seed in 0..50u64 {
            let field = fields[seed as usize % 4];
            let t = 1 + seed as usize % 4;
            let k = 1 + (seed as usize / 4) % t;
            let (t_s, k_s, seed_s) = (t.to_string(), k.to_string(), seed.to_string());
            let mut args = vec!["random", "--seed", &seed_s, "--t", &t_s, "--k", &k_s, "--field", field];
            if field == "GF" {
                args.extend(["--p", "5"]);
            }
            let (code, a, _) = bangle_bin(&args, None);
            let a_path = dir.join(format!("{mode}-{seed}-a.json"));
            let w_path = dir.join(format!("{mode}-{seed}-w.json"));
            std::fs::write(&a_path, &a).unwrap();
            let (c2, dec, err) =
                bangle_bin(&["regularize", "--mode", mode, "--witness", w_path.to_str().unwrap()], Some(&a_path));
            let (c3, _, err3) = bangle_bin(&["verify", "--witness", w_path.to_str().unwrap()], Some(&a_path));
            let stdout_matches = std::fs::read_to_string(&w_path).map(|w| w == dec).unwrap_or(false);
            if (code, c2, c3) != (0, 0, 0) || !stdout_matches {
                failures.push(format!("{mode} seed {seed}: exits {code}/{c2}/{c3} {err}{err3}"));
                continue;
            }
            // A zero box block is singular, so the witness cannot be valid.
            let has_box = matches!(Document::parse(&a).unwrap().payload, Payload::Bangle(ref b) if b.rows() > 0);
            if has_box && seed % 5 == 0 {
                corrupted += 1;
                let bad = dir.join(format!("{mode}-{seed}-bad.json"));
                std::fs::write(&bad, corrupt(&dec)).unwrap();
                let (c4, _, err4) = bangle_bin(&["verify", "--witness", bad.to_str().unwrap()], Some(&a_path));
                if c4 != 1 || !err4.contains("witness certification failed") {
                    failures.push(format!("{mode} seed {seed}: corrupted witness gave exit {c4}: {err4}"));
                }
            }
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    outcome(
        failures.is_empty() && corrupted > 0,
        format!("100 pipelines, {corrupted} corrupted witnesses, {} failures {:?}", failures.len(), failures.first()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("witness certification", criterion_1),
        ("orbit invariance", criterion_2),
        ("GF(2) exhaustive orbit oracle", criterion_3),
        ("canonical fixed points", criterion_4),
        ("complex-float / exact agreement", criterion_5),
        ("congruence class invariance", criterion_6),
        ("form and mapping equivalence", criterion_7),
        ("CLI end-to-end", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} {name}: {} — {} [{:.1}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}

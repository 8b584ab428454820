//! The on-disk document format and the `bangle` command-line front end.
//!
//! Documents are JSON. Every matrix entry is a scalar literal string in the
//! grammar of [`ScalarField::parse`]; strip and box numbers are 1-based.
//!
//! ```json
//! {
//!   "version": "1",
//!   "field": { "name": "QI", "involution": "conjugation" },
//!   "bangle": { "t": 2, "k": 1, "rows": 1, "cols": [1, 1], "strips": [["0"], ["1"]] }
//! }
//! ```

use std::cell::Cell;
use std::fs;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bangle::{Attachment, Bangle, Mode, SingularSummand, Witness};
use crate::canonical::canonical_bangle;
use crate::error::{Error, Result};
use crate::field::{Involution, Scalar, ScalarField, DEFAULT_EPS};
use crate::forms::{bangle_of_form, bangle_of_mapping, FormKind, FormMatrix, MappingKind, MappingMatrix};
use crate::matrix::Mat;
use crate::random::random_bangle;
use crate::regularize::{regularize, RegularizingDecomposition};

pub const VERSION: &str = "1";

thread_local! {
    // Scalar literals can only be parsed once the field is known; the
    // document is read in two passes and the field is parked here.
    static FIELD: Cell<Option<ScalarField>> = const { Cell::new(None) };
}

/// A scalar literal, parsed in the field of the enclosing document.
struct Lit(Scalar);

impl<'de> Deserialize<'de> for Lit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let f = FIELD.with(Cell::get).ok_or_else(|| serde::de::Error::custom("field not set"))?;
        f.parse(&s).map(Lit).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDesc {
    /// `Q`, `QI`, `GF` or `C`.
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// `conjugation` or `identity`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub involution: Option<String>,
}

impl FieldDesc {
    pub fn of(f: ScalarField) -> FieldDesc {
        let inv = |i: Involution| {
            Some(match i {
                Involution::Conjugation => "conjugation".to_string(),
                Involution::Identity => "identity".to_string(),
            })
        };
        match f {
            ScalarField::Rational => FieldDesc { name: "Q".into(), p: None, eps: None, involution: None },
            ScalarField::Gaussian(i) => FieldDesc { name: "QI".into(), p: None, eps: None, involution: inv(i) },
            ScalarField::Prime { p } => FieldDesc { name: "GF".into(), p: Some(p), eps: None, involution: None },
            ScalarField::Complex { eps, involution } => {
                FieldDesc { name: "C".into(), p: None, eps: Some(eps), involution: inv(involution) }
            }
        }
    }

    pub fn resolve(&self) -> Result<ScalarField> {
        let involution = match self.involution.as_deref() {
            None | Some("conjugation") => Involution::Conjugation,
            Some("identity") => Involution::Identity,
            Some(other) => return Err(Error::Domain(format!("unknown involution {other:?}"))),
        };
        let no_involution = |name: &str| match self.involution.as_deref() {
            None | Some("identity") => Ok(()),
            Some(_) => Err(Error::Domain(format!("{name} only carries the identity involution"))),
        };
        match self.name.as_str() {
            "Q" => no_involution("Q").map(|_| ScalarField::Rational),
            "QI" => Ok(ScalarField::Gaussian(involution)),
            "GF" => {
                no_involution("GF(p)")?;
                ScalarField::prime(self.p.ok_or_else(|| Error::Domain("GF needs a modulus p".into()))?)
            }
            "C" => ScalarField::complex_with(self.eps.unwrap_or(DEFAULT_EPS), involution),
            other => Err(Error::Domain(format!("unknown field {other:?} (expected Q, QI, GF or C)"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMat<E> {
    rows: usize,
    cols: usize,
    entries: Vec<E>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBangle<E> {
    t: usize,
    k: usize,
    rows: usize,
    cols: Vec<usize>,
    strips: Vec<Vec<E>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair<E> {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(rename = "A")]
    a: RawMat<E>,
    #[serde(rename = "B")]
    b: RawMat<E>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSummand {
    q: usize,
    /// `plain` or `strip`.
    attachment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    strip: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock<E> {
    row: usize,
    col: usize,
    entries: Vec<E>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWitness<E> {
    blocks: Vec<RawBlock<E>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDecomposition<E> {
    mode: String,
    t: usize,
    k: usize,
    cols: Vec<usize>,
    #[serde(rename = "K")]
    regular: RawMat<E>,
    summands: Vec<RawSummand>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<RawWitness<E>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub descriptor: String,
    pub unresolved: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc<E> {
    version: String,
    field: FieldDesc,
    #[serde(skip_serializing_if = "Option::is_none")]
    bangle: Option<RawBangle<E>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    form: Option<RawPair<E>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mapping: Option<RawPair<E>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decomposition: Option<RawDecomposition<E>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<Report>,
}

#[derive(Deserialize)]
struct Head {
    version: String,
    field: FieldDesc,
}

/// A regularizing decomposition as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredDecomposition {
    pub mode: Mode,
    pub t: usize,
    pub boxed: usize,
    pub widths: Vec<usize>,
    pub regular: Mat,
    pub singular: Vec<SingularSummand>,
    pub witness: Option<Witness>,
}

impl StoredDecomposition {
    pub fn of(d: &RegularizingDecomposition, widths: &[usize]) -> StoredDecomposition {
        StoredDecomposition {
            mode: d.mode,
            t: d.t,
            boxed: d.boxed,
            widths: widths.to_vec(),
            regular: d.regular.clone(),
            singular: d.singular.clone(),
            witness: Some(d.witness.clone()),
        }
    }

    /// Checks that the stored witness carries `a` to the stored summands.
    pub fn certify(&self, a: &Bangle) -> Result<()> {
        let fail = |why: String| Error::InvariantViolation(format!("witness certification failed: {why}"));
        if a.widths() != self.widths || a.boxed() != self.boxed {
            return Err(fail("the decomposition belongs to a bangle of another shape".into()));
        }
        let w = self.witness.clone().ok_or_else(|| fail("the document carries no witness".into()))?;
        let w = Witness::new(w.matrix().clone(), &self.widths, self.boxed, self.mode).map_err(|e| fail(e.to_string()))?;
        let d = RegularizingDecomposition {
            regular: self.regular.clone(),
            singular: self.singular.clone(),
            t: self.t,
            boxed: self.boxed,
            witness: w,
            mode: self.mode,
            steps: Vec::new(),
        };
        d.certify(a).map_err(|_| fail("apply(witness, A) differs from the decomposition".into()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Bangle(Bangle),
    Form { kind: Option<FormKind>, a: Mat, b: Mat },
    Mapping { kind: Option<MappingKind>, a: Mat, b: Mat },
    Decomposition(StoredDecomposition),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub field: ScalarField,
    pub payload: Payload,
    pub report: Option<Report>,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

fn mat_in(f: ScalarField, raw: RawMat<Lit>, what: &str) -> Result<Mat> {
    if raw.entries.len() != raw.rows * raw.cols {
        return Err(Error::InvariantViolation(format!(
            "{what} is {}x{} but lists {} entries",
            raw.rows,
            raw.cols,
            raw.entries.len()
        )));
    }
    Mat::from_vec(f, raw.rows, raw.cols, raw.entries.into_iter().map(|l| l.0).collect())
}

fn mat_out(m: &Mat) -> RawMat<String> {
    let f = m.field();
    RawMat { rows: m.rows(), cols: m.cols(), entries: m.entries().iter().map(|x| f.format(x)).collect() }
}

fn one_based(i: usize, n: usize, what: &str) -> Result<usize> {
    if i == 0 || i > n {
        Err(Error::InvariantViolation(format!("{what} {i} is outside 1..={n}")))
    } else {
        Ok(i - 1)
    }
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "star" => Ok(Mode::Star),
        "sim" => Ok(Mode::Sim),
        other => Err(Error::InvariantViolation(format!("unknown mode {other:?} (expected star or sim)"))),
    }
}

fn bangle_in(f: ScalarField, raw: RawBangle<Lit>) -> Result<Bangle> {
    if raw.cols.len() != raw.t || raw.strips.len() != raw.t {
        return Err(Error::InvariantViolation(format!(
            "t = {} but {} widths and {} strips are given",
            raw.t,
            raw.cols.len(),
            raw.strips.len()
        )));
    }
    let k = one_based(raw.k, raw.t, "boxed strip")?;
    let strips = raw
        .strips
        .into_iter()
        .zip(&raw.cols)
        .enumerate()
        .map(|(i, (s, &w))| mat_in(f, RawMat { rows: raw.rows, cols: w, entries: s }, &format!("strip {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    Bangle::new(f, strips, k)
}

fn bangle_out(b: &Bangle) -> RawBangle<String> {
    RawBangle {
        t: b.t(),
        k: b.boxed() + 1,
        rows: b.rows(),
        cols: b.widths(),
        strips: b.strips().iter().map(|s| mat_out(s).entries).collect(),
    }
}

fn decomposition_in(f: ScalarField, raw: RawDecomposition<Lit>) -> Result<StoredDecomposition> {
    let mode = parse_mode(&raw.mode)?;
    if raw.cols.len() != raw.t {
        return Err(Error::InvariantViolation(format!("t = {} but {} widths are given", raw.t, raw.cols.len())));
    }
    let boxed = one_based(raw.k, raw.t, "boxed strip")?;
    let regular = mat_in(f, raw.regular, "K")?;
    let singular = raw
        .summands
        .into_iter()
        .map(|s| {
            let sum = match (s.attachment.as_str(), s.strip) {
                ("plain", None) => SingularSummand::plain(s.q),
                ("strip", Some(i)) => SingularSummand::e_in(one_based(i, raw.t, "summand strip")?, s.q),
                _ => {
                    return Err(Error::InvariantViolation(format!(
                        "summand attachment {:?} with strip {:?}",
                        s.attachment, s.strip
                    )))
                }
            };
            sum.validate(raw.t, boxed)?;
            Ok(sum)
        })
        .collect::<Result<Vec<_>>>()?;
    let witness = match raw.witness {
        None => None,
        Some(w) => {
            let n: usize = raw.cols.iter().sum();
            let offsets: Vec<usize> = raw.cols.iter().scan(0, |acc, &w| Some(std::mem::replace(acc, *acc + w))).collect();
            let mut s = Mat::zeros(f, n, n);
            for b in w.blocks {
                let i = one_based(b.row, raw.t, "witness block row")?;
                let j = one_based(b.col, raw.t, "witness block column")?;
                let block = mat_in(
                    f,
                    RawMat { rows: raw.cols[i], cols: raw.cols[j], entries: b.entries },
                    &format!("witness block ({}, {})", i + 1, j + 1),
                )?;
                s.set_block(offsets[i], offsets[j], &block);
            }
            // Shape is checked at certification so a corrupted witness is
            // reported as such rather than as a parse failure.
            Some(Witness::from_parts(s, raw.cols.clone(), boxed, mode))
        }
    };
    Ok(StoredDecomposition { mode, t: raw.t, boxed, widths: raw.cols, regular, singular, witness })
}

fn decomposition_out(d: &StoredDecomposition) -> RawDecomposition<String> {
    RawDecomposition {
        mode: d.mode.to_string(),
        t: d.t,
        k: d.boxed + 1,
        cols: d.widths.clone(),
        regular: mat_out(&d.regular),
        summands: d
            .singular
            .iter()
            .map(|s| match s.attachment {
                Attachment::Plain => RawSummand { q: s.q, attachment: "plain".into(), strip: None },
                Attachment::EInStrip(i) => RawSummand { q: s.q, attachment: "strip".into(), strip: Some(i + 1) },
            })
            .collect(),
        witness: d.witness.as_ref().map(|w| RawWitness {
            blocks: (0..d.t)
                .flat_map(|i| (i..d.t).map(move |j| (i, j)))
                .map(|(i, j)| RawBlock { row: i + 1, col: j + 1, entries: mat_out(&w.block(i, j)).entries })
                .collect(),
        }),
    }
}

fn pair_in(f: ScalarField, raw: RawPair<Lit>) -> Result<(Option<String>, Mat, Mat)> {
    Ok((raw.kind, mat_in(f, raw.a, "A")?, mat_in(f, raw.b, "B")?))
}

impl Document {
    pub fn new(field: ScalarField, payload: Payload) -> Document {
        Document { field, payload, report: None }
    }

    pub fn parse(text: &str) -> Result<Document> {
        let head: Head = serde_json::from_str(text).map_err(parse_error)?;
        if head.version != VERSION {
            return Err(Error::InvariantViolation(format!("unsupported document version {:?}", head.version)));
        }
        let f = head.field.resolve()?;
        FIELD.with(|c| c.set(Some(f)));
        let raw: std::result::Result<RawDoc<Lit>, _> = serde_json::from_str(text);
        FIELD.with(|c| c.set(None));
        let raw = raw.map_err(parse_error)?;

        let given = [raw.bangle.is_some(), raw.form.is_some(), raw.mapping.is_some(), raw.decomposition.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(Error::InvariantViolation(
                "a document holds exactly one of bangle, form, mapping, decomposition".into(),
            ));
        }
        let payload = if let Some(b) = raw.bangle {
            Payload::Bangle(bangle_in(f, b)?)
        } else if let Some(p) = raw.form {
            let (kind, a, b) = pair_in(f, p)?;
            FormMatrix::new(FormKind::UxV, a.clone(), b.clone())?;
            Payload::Form { kind: kind.map(|k| k.parse()).transpose()?, a, b }
        } else if let Some(p) = raw.mapping {
            let (kind, a, b) = pair_in(f, p)?;
            let kind: Option<MappingKind> = kind.map(|k| k.parse()).transpose()?;
            if let Some(k) = kind {
                MappingMatrix::new(k, a.clone(), b.clone())?;
            }
            Payload::Mapping { kind, a, b }
        } else {
            Payload::Decomposition(decomposition_in(f, raw.decomposition.expect("one payload present"))?)
        };
        Ok(Document { field: f, payload, report: raw.report })
    }

    /// Pretty JSON with a trailing newline; stable key order.
    pub fn serialize(&self) -> String {
        let mut raw: RawDoc<String> = RawDoc {
            version: VERSION.into(),
            field: FieldDesc::of(self.field),
            bangle: None,
            form: None,
            mapping: None,
            decomposition: None,
            report: self.report.clone(),
        };
        match &self.payload {
            Payload::Bangle(b) => raw.bangle = Some(bangle_out(b)),
            Payload::Form { kind, a, b } => {
                raw.form = Some(RawPair { kind: kind.map(|k| k.to_string()), a: mat_out(a), b: mat_out(b) })
            }
            Payload::Mapping { kind, a, b } => {
                raw.mapping = Some(RawPair { kind: kind.map(|k| k.to_string()), a: mat_out(a), b: mat_out(b) })
            }
            Payload::Decomposition(d) => raw.decomposition = Some(decomposition_out(d)),
        }
        let mut s = serde_json::to_string_pretty(&raw).expect("documents always serialize");
        s.push('\n');
        s
    }
}

#[derive(Parser, Debug)]
#[command(name = "bangle", version, about = "Regularizing decompositions and canonical forms of bangles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Star,
    Sim,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Star => Mode::Star,
            ModeArg::Sim => Mode::Sim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormKindArg {
    #[value(name = "UxV")]
    UxV,
    #[value(name = "QuotxV")]
    QuotxV,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MappingKindArg {
    #[value(name = "UtoV")]
    UtoV,
    #[value(name = "VtoU")]
    VtoU,
    #[value(name = "QtoV")]
    QtoV,
    #[value(name = "VtoQ")]
    VtoQ,
}

impl From<FormKindArg> for FormKind {
    fn from(k: FormKindArg) -> FormKind {
        match k {
            FormKindArg::UxV => FormKind::UxV,
            FormKindArg::QuotxV => FormKind::QuotxV,
        }
    }
}

impl From<MappingKindArg> for MappingKind {
    fn from(k: MappingKindArg) -> MappingKind {
        match k {
            MappingKindArg::UtoV => MappingKind::UtoV,
            MappingKindArg::VtoU => MappingKind::VtoU,
            MappingKindArg::QtoV => MappingKind::QtoV,
            MappingKindArg::VtoQ => MappingKind::VtoQ,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Regularizing decomposition with its witness.
    Regularize {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Rank tolerance for complex-float input.
        #[arg(long)]
        eps: Option<f64>,
        /// Also write the certificate to this file.
        #[arg(long)]
        witness: Option<PathBuf>,
        /// Input document; standard input when absent.
        input: Option<PathBuf>,
    },
    /// Canonical bangle, or invariants when no canonical matrix exists.
    Canonical {
        #[arg(long, value_enum)]
        mode: ModeArg,
        input: Option<PathBuf>,
    },
    /// Bangle of a form document.
    FromForm {
        #[arg(long, value_enum)]
        kind: Option<FormKindArg>,
        input: Option<PathBuf>,
    },
    /// Bangle of a mapping document.
    FromMapping {
        #[arg(long, value_enum)]
        kind: Option<MappingKindArg>,
        input: Option<PathBuf>,
    },
    /// Check a decomposition certificate against the input bangle.
    Verify {
        #[arg(long)]
        witness: PathBuf,
        input: Option<PathBuf>,
    },
    /// Quick internal consistency run.
    Selftest,
    /// Seeded random bangle.
    Random {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        t: usize,
        /// Boxed strip, 1-based.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Strip widths, comma separated; random when absent.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Q, QI, GF or C.
        #[arg(long, default_value = "Q")]
        field: String,
        #[arg(long)]
        p: Option<u64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        involution: Option<String>,
        #[arg(long, default_value_t = 0.6)]
        density: f64,
    },
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn read_input(path: &Option<PathBuf>, stdin: &mut dyn Read) -> Result<Document> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Domain(format!("cannot read {}: {e}", p.display())))?,
        None => {
            let mut s = String::new();
            stdin.read_to_string(&mut s).map_err(|e| Error::Domain(format!("cannot read standard input: {e}")))?;
            s
        }
    };
    Document::parse(&text)
}

fn expect_bangle(doc: Document) -> Result<Bangle> {
    match doc.payload {
        Payload::Bangle(b) => Ok(b),
        _ => Err(Error::InvariantViolation("expected a bangle document".into())),
    }
}

fn with_eps(b: Bangle, eps: Option<f64>) -> Result<Bangle> {
    match (eps, b.field()) {
        (None, _) => Ok(b),
        (Some(eps), ScalarField::Complex { involution, .. }) => {
            let f = ScalarField::complex_with(eps, involution)?;
            let strips = b.strips().iter().map(|s| s.convert(f)).collect::<Result<Vec<_>>>()?;
            Bangle::new(f, strips, b.boxed())
        }
        (Some(_), f) => Err(Error::Domain(format!("--eps applies to complex input, not {f}"))),
    }
}

fn pick<K: PartialEq + std::fmt::Display + Copy>(flag: Option<K>, doc: Option<K>) -> Result<K> {
    match (flag, doc) {
        (Some(a), Some(b)) if a != b => Err(Error::InvariantViolation(format!("--kind {a} contradicts document kind {b}"))),
        (Some(a), _) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::InvariantViolation("no kind given (use --kind or a kind key)".into())),
    }
}

fn random_doc(
    seed: u64,
    t: usize,
    k: usize,
    dims: Option<Vec<usize>>,
    field: FieldDesc,
    density: f64,
) -> Result<Document> {
    let f = field.resolve()?;
    let boxed = one_based(k, t, "boxed strip")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = match dims {
        Some(d) if d.len() == t => d,
        Some(d) => return Err(Error::InvariantViolation(format!("--dims lists {} widths for t = {t}", d.len()))),
        None => (0..t).map(|i| rng.random_range(usize::from(i == boxed)..=3)).collect(),
    };
    Ok(Document::new(f, Payload::Bangle(random_bangle(f, &widths, boxed, density, &mut rng)?)))
}

fn selftest(out: &mut dyn Write) -> Result<bool> {
    let fields = [
        ScalarField::Rational,
        ScalarField::Gaussian(Involution::Conjugation),
        ScalarField::prime(2)?,
        ScalarField::prime(5)?,
        ScalarField::complex(DEFAULT_EPS)?,
    ];
    let mut all = true;
    for f in fields {
        for mode in [Mode::Star, Mode::Sim] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut ok = 0;
            let runs = 25;
            for _ in 0..runs {
                let t = rng.random_range(1..=3);
                let boxed = rng.random_range(0..t);
                let widths: Vec<usize> = (0..t).map(|_| rng.random_range(0..=3)).collect();
                let a = random_bangle(f, &widths, boxed, 0.6, &mut rng)?;
                let good = regularize(&a, mode).and_then(|d| d.certify(&a)).is_ok();
                ok += usize::from(good);
            }
            all &= ok == runs;
            writeln!(out, "{} {f} {mode}: {ok}/{runs} certified", if ok == runs { "PASS" } else { "FAIL" })
                .map_err(|e| Error::Domain(e.to_string()))?;
        }
    }
    Ok(all)
}

fn execute(cli: Cli, stdin: &mut dyn Read, out: &mut dyn Write) -> Result<i32> {
    let emit = |out: &mut dyn Write, doc: &Document| -> Result<()> {
        out.write_all(doc.serialize().as_bytes()).map_err(|e| Error::Domain(format!("cannot write output: {e}")))
    };
    match cli.command {
        Command::Regularize { mode, eps, witness, input } => {
            let a = with_eps(expect_bangle(read_input(&input, stdin)?)?, eps)?;
            let d = regularize(&a, mode.into())?;
            d.certify(&a)?;
            let doc = Document::new(d.field(), Payload::Decomposition(StoredDecomposition::of(&d, &a.widths())));
            if let Some(path) = witness {
                fs::write(&path, doc.serialize())
                    .map_err(|e| Error::Domain(format!("cannot write {}: {e}", path.display())))?;
            }
            emit(out, &doc)?;
        }
        Command::Canonical { mode, input } => {
            let a = expect_bangle(read_input(&input, stdin)?)?;
            let c = canonical_bangle(&a, mode.into())?;
            let report = Some(Report { descriptor: c.descriptor.to_string(), unresolved: c.unresolved });
            let mut doc = match &c.bangle {
                Some(b) => Document::new(b.field(), Payload::Bangle(b.clone())),
                None => {
                    let mut d = StoredDecomposition::of(&c.decomposition, &a.widths());
                    d.witness = None;
                    Document::new(a.field(), Payload::Decomposition(d))
                }
            };
            doc.report = report;
            emit(out, &doc)?;
        }
        Command::FromForm { kind, input } => {
            let doc = read_input(&input, stdin)?;
            let Payload::Form { kind: dk, a, b } = doc.payload else {
                return Err(Error::InvariantViolation("expected a form document".into()));
            };
            let f = FormMatrix::new(pick(kind.map(Into::into), dk)?, a, b)?;
            emit(out, &Document::new(doc.field, Payload::Bangle(bangle_of_form(&f)?)))?;
        }
        Command::FromMapping { kind, input } => {
            let doc = read_input(&input, stdin)?;
            let Payload::Mapping { kind: dk, a, b } = doc.payload else {
                return Err(Error::InvariantViolation("expected a mapping document".into()));
            };
            let m = MappingMatrix::new(pick(kind.map(Into::into), dk)?, a, b)?;
            emit(out, &Document::new(doc.field, Payload::Bangle(bangle_of_mapping(&m)?)))?;
        }
        Command::Verify { witness, input } => {
            let a = expect_bangle(read_input(&input, stdin)?)?;
            let cert = read_input(&Some(witness), stdin)?;
            let Payload::Decomposition(d) = cert.payload else {
                return Err(Error::InvariantViolation("the witness file must hold a decomposition".into()));
            };
            if cert.field != a.field() {
                return Err(Error::FieldMismatch(format!("certificate over {}, input over {}", cert.field, a.field())));
            }
            d.certify(&a)?;
            writeln!(out, "witness certified").map_err(|e| Error::Domain(e.to_string()))?;
        }
        Command::Selftest => {
            return Ok(if selftest(out)? { 0 } else { 1 });
        }
        Command::Random { seed, t, k, dims, field, p, eps, involution, density } => {
            let desc = FieldDesc { name: field, p, eps, involution };
            emit(out, &random_doc(seed, t, k, dims, desc, density)?)?;
        }
    }
    Ok(0)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli, stdin, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

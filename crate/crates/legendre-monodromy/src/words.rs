//! Free-group combinatorics on the fundamental group of the punctured base.
//!
//! Generators: a0 and a1 (small counterclockwise loops around λ = 0 and
//! λ = 1) and d1..dk (small loops around the k extra punctures r_1..r_k).
//! Words are stored freely reduced. The kernel of the projection that
//! deletes d-letters is generated by iterated commutators; `decompose_kernel`
//! produces an explicit certificate tree for that membership.

use std::fmt;
use thiserror::Error;

/// Base symbol of a generator letter.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum LetterKind {
    A0,
    A1,
    /// Loop around the extra puncture r_index, 1-based.
    D(u32),
}

/// A generator or its inverse.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Letter {
    pub kind: LetterKind,
    pub inverted: bool,
}

impl Letter {
    pub fn a0() -> Self {
        Letter { kind: LetterKind::A0, inverted: false }
    }
    pub fn a1() -> Self {
        Letter { kind: LetterKind::A1, inverted: false }
    }
    pub fn d(index: u32) -> Self {
        assert!(index >= 1, "d-letter indices are 1-based");
        Letter { kind: LetterKind::D(index), inverted: false }
    }

    pub fn inverse(self) -> Self {
        Letter { kind: self.kind, inverted: !self.inverted }
    }

    pub fn is_a(self) -> bool {
        matches!(self.kind, LetterKind::A0 | LetterKind::A1)
    }

    pub fn is_d(self) -> bool {
        matches!(self.kind, LetterKind::D(_))
    }

    fn cancels(self, other: Letter) -> bool {
        self.kind == other.kind && self.inverted != other.inverted
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lower, tail) = match self.kind {
            LetterKind::A0 => ('a', "0".to_string()),
            LetterKind::A1 => ('a', "1".to_string()),
            LetterKind::D(i) => ('d', i.to_string()),
        };
        let head = if self.inverted { lower.to_ascii_uppercase() } else { lower };
        write!(f, "{head}{tail}")
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum WordError {
    #[error("word does not project to the identity in the base group")]
    NotInKernel,
    #[error("d-letter index {0} out of range 1..={1}")]
    BadIndex(u32, u32),
    #[error("cannot parse letter token `{0}`")]
    Parse(String),
}

/// A freely reduced word. The empty word is the identity.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Word {
    letters: Vec<Letter>,
}

/// Free reduction of an arbitrary letter sequence.
pub fn reduce(letters: impl IntoIterator<Item = Letter>) -> Word {
    let mut out: Vec<Letter> = Vec::new();
    for l in letters {
        if out.last().is_some_and(|&last| last.cancels(l)) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    Word { letters: out }
}

impl Word {
    pub fn identity() -> Self {
        Word::default()
    }

    pub fn from_letter(l: Letter) -> Self {
        Word { letters: vec![l] }
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Group product, reduced eagerly.
    pub fn mul(&self, rhs: &Word) -> Word {
        reduce(self.letters.iter().chain(rhs.letters.iter()).copied())
    }

    pub fn inverse(&self) -> Word {
        Word { letters: self.letters.iter().rev().map(|l| l.inverse()).collect() }
    }

    pub fn pow(&self, n: i32) -> Word {
        let base = if n < 0 { self.inverse() } else { self.clone() };
        let mut out = Word::identity();
        for _ in 0..n.unsigned_abs() {
            out = out.mul(&base);
        }
        out
    }

    /// Conjugate g · self · g⁻¹.
    pub fn conjugate_by(&self, g: &Word) -> Word {
        g.mul(self).mul(&g.inverse())
    }

    /// Commutator g · self · g⁻¹ · self⁻¹.
    pub fn commutator(g: &Word, h: &Word) -> Word {
        g.mul(h).mul(&g.inverse()).mul(&h.inverse())
    }

    /// Serialize as whitespace-separated tokens, e.g. `a0 D1 a1`.
    pub fn to_token_string(&self) -> String {
        if self.letters.is_empty() {
            return String::new();
        }
        self.letters.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            write!(f, "(id)")
        } else {
            write!(f, "{}", self.to_token_string())
        }
    }
}

/// The generating alphabet for a base with k extra punctures.
#[derive(Clone, Copy, Debug)]
pub struct Alphabet {
    k: u32,
}

impl Alphabet {
    pub fn new(k: u32) -> Self {
        Alphabet { k }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// All 2(k+2) letters: generators and inverses.
    pub fn letters(&self) -> Vec<Letter> {
        let mut out = vec![Letter::a0(), Letter::a1()];
        out.extend((1..=self.k).map(Letter::d));
        let inverses: Vec<Letter> = out.iter().map(|l| l.inverse()).collect();
        out.extend(inverses);
        out
    }

    pub fn check(&self, l: Letter) -> Result<(), WordError> {
        if let LetterKind::D(i) = l.kind {
            if i == 0 || i > self.k {
                return Err(WordError::BadIndex(i, self.k));
            }
        }
        Ok(())
    }

    /// Parse whitespace-separated tokens (`a0 A0 a1 A1 d3 D3`; uppercase =
    /// inverse) and reduce.
    pub fn parse(&self, s: &str) -> Result<Word, WordError> {
        let mut letters = Vec::new();
        for tok in s.split_whitespace() {
            let mut chars = tok.chars();
            let head = chars.next().ok_or_else(|| WordError::Parse(tok.into()))?;
            let rest: String = chars.collect();
            let inverted = head.is_ascii_uppercase();
            let kind = match (head.to_ascii_lowercase(), rest.as_str()) {
                ('a', "0") => LetterKind::A0,
                ('a', "1") => LetterKind::A1,
                ('d', idx) => {
                    let i: u32 = idx.parse().map_err(|_| WordError::Parse(tok.into()))?;
                    LetterKind::D(i)
                }
                _ => return Err(WordError::Parse(tok.into())),
            };
            let l = Letter { kind, inverted };
            self.check(l)?;
            letters.push(l);
        }
        Ok(reduce(letters))
    }
}

/// Delete every d-letter and reduce: the image in the fundamental group of
/// the thrice-punctured line.
pub fn project_to_s(w: &Word) -> Word {
    reduce(w.letters.iter().copied().filter(|l| l.is_a()))
}

/// True iff the word lies in the kernel of the projection.
pub fn in_kernel(w: &Word) -> bool {
    project_to_s(w).is_empty()
}

/// Half the number of a-letters in the reduced word; defined for kernel
/// words only.
pub fn relative_length(w: &Word) -> Result<u32, WordError> {
    if !in_kernel(w) {
        return Err(WordError::NotInKernel);
    }
    let m = w.letters.iter().filter(|l| l.is_a()).count() as u32;
    debug_assert!(m.is_multiple_of(2));
    Ok(m / 2)
}

/// One multiplicand in a kernel certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CertFactor {
    /// A d-letter or its inverse: a generator of the level-0 subgroup.
    Gen(Letter),
    /// The commutator a · h · a⁻¹ · h⁻¹ with h certified at the inner level.
    Commutator { a: Letter, inner: KernelCertificate },
}

impl CertFactor {
    fn witness_level(&self) -> u32 {
        match self {
            CertFactor::Gen(_) => 0,
            CertFactor::Commutator { inner, .. } => inner.witness_level() + 1,
        }
    }

    fn expand(&self) -> Word {
        match self {
            CertFactor::Gen(l) => Word::from_letter(*l),
            CertFactor::Commutator { a, inner } => {
                let h = inner.expand();
                Word::commutator(&Word::from_letter(*a), &h)
            }
        }
    }
}

/// Certified decomposition of a kernel word as a product of d-letters and
/// iterated commutators. `level` is the filtration level the certificate
/// witnesses; it never exceeds the relative length of the word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelCertificate {
    pub factors: Vec<CertFactor>,
}

impl KernelCertificate {
    /// The filtration level witnessed by the factor tree.
    pub fn witness_level(&self) -> u32 {
        self.factors.iter().map(|f| f.witness_level()).max().unwrap_or(0)
    }

    /// Re-multiply the certificate into a reduced word.
    pub fn expand(&self) -> Word {
        let mut out = Word::identity();
        for f in &self.factors {
            out = out.mul(&f.expand());
        }
        out
    }
}

/// Decompose a kernel word following the rewriting
/// g = d · (a h a⁻¹ h⁻¹) · h · f, where a is the first a-letter of the
/// reduced word, h the kernel word between a and its cancelling partner,
/// and f the remaining tail.
pub fn decompose_kernel(w: &Word) -> Result<KernelCertificate, WordError> {
    if !in_kernel(w) {
        return Err(WordError::NotInKernel);
    }
    let letters = w.letters();

    // Position of the first a-letter and its cancelling partner in the
    // projection, located by stack pairing.
    let mut first_a: Option<usize> = None;
    let mut partner: Option<usize> = None;
    let mut stack: Vec<(Letter, usize)> = Vec::new();
    for (idx, &l) in letters.iter().enumerate() {
        if !l.is_a() {
            continue;
        }
        if stack.last().is_some_and(|&(top, _)| top.cancels(l)) {
            let (_, open_idx) = stack.pop().unwrap();
            if first_a == Some(open_idx) {
                partner = Some(idx);
                break;
            }
        } else {
            if stack.is_empty() && first_a.is_none() {
                first_a = Some(idx);
            }
            stack.push((l, idx));
        }
    }

    let mut factors = Vec::new();
    match (first_a, partner) {
        (None, _) => {
            // Level 0: only d-letters.
            factors.extend(letters.iter().map(|&l| CertFactor::Gen(l)));
        }
        (Some(p), Some(q)) => {
            // d-prefix before the first a-letter.
            factors.extend(letters[..p].iter().map(|&l| CertFactor::Gen(l)));
            let a = letters[p];
            let h = reduce(letters[p + 1..q].iter().copied());
            let f = reduce(letters[q + 1..].iter().copied());
            debug_assert!(in_kernel(&h) && in_kernel(&f));
            let h_cert = decompose_kernel(&h)?;
            factors.push(CertFactor::Commutator { a, inner: h_cert.clone() });
            factors.extend(h_cert.factors);
            let f_cert = decompose_kernel(&f)?;
            factors.extend(f_cert.factors);
        }
        (Some(_), None) => unreachable!("kernel word with unpaired a-letter"),
    }

    let cert = KernelCertificate { factors };
    debug_assert_eq!(&cert.expand(), w);
    Ok(cert)
}

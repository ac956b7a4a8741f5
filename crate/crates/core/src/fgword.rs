//! Words in the free group F(a, b) and homogeneous Brooks counting
//! quasi-morphisms.
//!
//! Words are stored as flat letter arrays and are always freely reduced.
//! The textual form uses `a`, `b` for the generators and `A`, `B` for
//! their inverses, so `"abAB"` is the commutator `[a, b]`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Generator {
    A,
    B,
}

/// A generator raised to the power +1 or -1.
///
/// Encoded as a signed byte: `a = 1`, `A = -1`, `b = 2`, `B = -2`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(i8);

impl Letter {
    pub const A: Letter = Letter(1);
    pub const A_INV: Letter = Letter(-1);
    pub const B: Letter = Letter(2);
    pub const B_INV: Letter = Letter(-2);

    pub fn new(generator: Generator, exponent: i8) -> Letter {
        assert!(exponent == 1 || exponent == -1, "letter exponent must be +1 or -1");
        let g = match generator {
            Generator::A => 1,
            Generator::B => 2,
        };
        Letter(g * exponent)
    }

    pub fn generator(self) -> Generator {
        if self.0.abs() == 1 {
            Generator::A
        } else {
            Generator::B
        }
    }

    pub fn exponent(self) -> i8 {
        self.0.signum()
    }

    pub fn inverse(self) -> Letter {
        Letter(-self.0)
    }

    pub fn is_inverse_of(self, other: Letter) -> bool {
        self.0 == -other.0
    }

    pub fn to_char(self) -> char {
        match self.0 {
            1 => 'a',
            -1 => 'A',
            2 => 'b',
            _ => 'B',
        }
    }

    pub fn from_char(c: char) -> Result<Letter> {
        match c {
            'a' => Ok(Letter::A),
            'A' => Ok(Letter::A_INV),
            'b' => Ok(Letter::B),
            'B' => Ok(Letter::B_INV),
            other => Err(Error::InvalidSymbol(other)),
        }
    }

    pub const ALL: [Letter; 4] = [Letter::A, Letter::A_INV, Letter::B, Letter::B_INV];
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// A freely reduced word. The empty word is the identity.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Word {
    letters: Vec<Letter>,
}

/// Freely reduces a letter sequence.
pub fn reduce<I: IntoIterator<Item = Letter>>(letters: I) -> Word {
    let mut w = Word::identity();
    for l in letters {
        w.push(l);
    }
    w
}

impl Word {
    pub fn identity() -> Word {
        Word { letters: Vec::new() }
    }

    pub fn letter(l: Letter) -> Word {
        Word { letters: vec![l] }
    }

    /// The commutator `[a, b] = a b a^-1 b^-1`.
    pub fn commutator() -> Word {
        Word {
            letters: vec![Letter::A, Letter::B, Letter::A_INV, Letter::B_INV],
        }
    }

    pub fn parse(s: &str) -> Result<Word> {
        let mut letters = Vec::with_capacity(s.len());
        for c in s.chars().filter(|c| !c.is_whitespace()) {
            if c == '1' || c == 'e' {
                continue;
            }
            letters.push(Letter::from_char(c)?);
        }
        Ok(reduce(letters))
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

    /// Right-multiplies by a single letter, cancelling if needed.
    pub fn push(&mut self, l: Letter) {
        match self.letters.last() {
            Some(&last) if last.is_inverse_of(l) => {
                self.letters.pop();
            }
            _ => self.letters.push(l),
        }
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut k = 0;
        let n = self.letters.len();
        while k < n && k < other.letters.len() && self.letters[n - 1 - k].is_inverse_of(other.letters[k]) {
            k += 1;
        }
        let mut letters = Vec::with_capacity(n - k + other.letters.len() - k);
        letters.extend_from_slice(&self.letters[..n - k]);
        letters.extend_from_slice(&other.letters[k..]);
        Word { letters }
    }

    pub fn inverse(&self) -> Word {
        Word {
            letters: self.letters.iter().rev().map(|l| l.inverse()).collect(),
        }
    }

    /// `self^n` by repeated squaring; negative powers go through the inverse.
    pub fn pow(&self, n: i64) -> Word {
        let mut base = if n < 0 { self.inverse() } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc = Word::identity();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.concat(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.concat(&base);
            }
        }
        acc
    }

    /// `(core, conjugator)` with `self = conjugator * core * conjugator^-1`
    /// and a cyclically reduced core.
    pub fn cyclic_reduce(&self) -> (Word, Word) {
        let n = self.letters.len();
        let mut k = 0;
        while 2 * k + 1 < n && self.letters[k].is_inverse_of(self.letters[n - 1 - k]) {
            k += 1;
        }
        let core = Word {
            letters: self.letters[k..n - k].to_vec(),
        };
        let conj = Word {
            letters: self.letters[..k].to_vec(),
        };
        (core, conj)
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        match (self.letters.first(), self.letters.last()) {
            (Some(f), Some(l)) => self.letters.len() == 1 || !f.is_inverse_of(*l),
            _ => true,
        }
    }

    /// Exponent sums `(#a - #A, #b - #B)`, the image in the abelianization.
    pub fn exponent_sums(&self) -> (i64, i64) {
        let mut s = (0i64, 0i64);
        for l in &self.letters {
            match l.generator() {
                Generator::A => s.0 += l.exponent() as i64,
                Generator::B => s.1 += l.exponent() as i64,
            }
        }
        s
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        for l in &self.letters {
            write!(f, "{}", l.to_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl From<Word> for String {
    fn from(w: Word) -> String {
        w.to_string()
    }
}

impl TryFrom<String> for Word {
    type Error = Error;

    fn try_from(s: String) -> Result<Word> {
        s.parse()
    }
}

impl FromStr for Word {
    type Err = Error;
    fn from_str(s: &str) -> Result<Word> {
        Word::parse(s)
    }
}

impl FromIterator<Letter> for Word {
    fn from_iter<I: IntoIterator<Item = Letter>>(iter: I) -> Word {
        reduce(iter)
    }
}

/// Counts (possibly overlapping) occurrences of `pattern` in `g`.
///
/// In cyclic mode `g` is read as a cyclic word: every start position in one
/// period is tried once and indices wrap, so patterns longer than `g` are
/// matched against the unrolled word.
pub fn count_subwords(pattern: &Word, g: &Word, cyclic: bool) -> usize {
    let p = pattern.letters();
    let w = g.letters();
    if p.is_empty() || w.is_empty() {
        return 0;
    }
    if cyclic {
        let n = w.len();
        (0..n)
            .filter(|&i| p.iter().enumerate().all(|(j, l)| w[(i + j) % n] == *l))
            .count()
    } else {
        if p.len() > w.len() {
            return 0;
        }
        w.windows(p.len()).filter(|win| *win == p).count()
    }
}

/// A homogeneous counting quasi-morphism: a weighted sum of
/// `C_w - C_{w^-1}` over pattern words `w`, evaluated on cyclic cores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingQM {
    pub name: String,
    terms: Vec<(Word, f64)>,
    pub defect_bound: Option<f64>,
}

impl CountingQM {
    pub fn new(name: impl Into<String>, terms: Vec<(Word, f64)>) -> Result<CountingQM> {
        if terms.iter().any(|(w, _)| w.is_empty()) {
            return Err(Error::EmptyPattern);
        }
        Ok(CountingQM {
            name: name.into(),
            terms,
            defect_bound: None,
        })
    }

    /// Builds a kernel from `(word-string, weight)` pairs.
    pub fn from_strings(name: impl Into<String>, terms: &[(&str, f64)]) -> Result<CountingQM> {
        let parsed = terms
            .iter()
            .map(|(s, w)| Ok((Word::parse(s)?, *w)))
            .collect::<Result<Vec<_>>>()?;
        CountingQM::new(name, parsed)
    }

    pub fn terms(&self) -> &[(Word, f64)] {
        &self.terms
    }

    /// Per-term integer counts `C_w(c) - C_{w^-1}(c)` on the cyclic core.
    pub fn term_counts(&self, g: &Word) -> Vec<i64> {
        let (core, _) = g.cyclic_reduce();
        self.terms
            .iter()
            .map(|(w, _)| {
                count_subwords(w, &core, true) as i64 - count_subwords(&w.inverse(), &core, true) as i64
            })
            .collect()
    }

    pub fn eval(&self, g: &Word) -> f64 {
        self.term_counts(g)
            .into_iter()
            .zip(&self.terms)
            .map(|(k, (_, weight))| weight * k as f64)
            .sum()
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.terms.iter().map(|(_, w)| w.abs()).fold(0.0, f64::max)
    }

    /// Records an empirical defect lower bound on the kernel.
    pub fn with_defect_estimate(mut self, budget: usize, max_len: usize, seed: u64) -> CountingQM {
        self.defect_bound = Some(defect_estimate(&self, budget, max_len, seed));
        self
    }
}

/// Evaluates the homogeneous quasi-morphism on a reduced word.
pub fn qm_eval(mu: &CountingQM, g: &Word) -> f64 {
    mu.eval(g)
}

/// Names of the shipped kernels.
pub const KERNEL_NAMES: [&str; 4] = ["exp-a", "ab", "aab", "abb"];

/// The shipped kernel library.
///
/// * `exp-a`: `{(a, 1)}`, the exponent-sum homomorphism.
/// * `ab`: `{(ab, 1)}`, takes the value 1 on `[a, b]`.
/// * `aab`, `abb`: vanish on `[a, b]`.
pub fn kernel(name: &str) -> Option<CountingQM> {
    let pattern = match name {
        "exp-a" | "a" => "a",
        "ab" => "ab",
        "aab" => "aab",
        "abb" => "abb",
        _ => return None,
    };
    Some(CountingQM::from_strings(name, &[(pattern, 1.0)]).expect("shipped kernel is valid"))
}

pub fn kernel_library() -> Vec<CountingQM> {
    KERNEL_NAMES.iter().filter_map(|n| kernel(n)).collect()
}

/// Uniformly random reduced word of the given length.
pub fn random_reduced_word<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Word {
    let mut letters: Vec<Letter> = Vec::with_capacity(len);
    while letters.len() < len {
        let l = Letter::ALL[rng.random_range(0..4)];
        if letters.last().is_some_and(|last| last.is_inverse_of(l)) {
            continue;
        }
        letters.push(l);
    }
    Word { letters }
}

/// Lower bound for the defect `sup |mu(xy) - mu(x) - mu(y)|` from `budget`
/// random pairs of reduced words with lengths in `0..=max_len`.
///
/// Pair `i` draws from ChaCha stream `i` of the seed, so the result does not
/// depend on evaluation order.
pub fn defect_estimate(mu: &CountingQM, budget: usize, max_len: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..budget {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let lx = rng.random_range(0..=max_len);
        let ly = rng.random_range(0..=max_len);
        let x = random_reduced_word(&mut rng, lx);
        let y = random_reduced_word(&mut rng, ly);
        let d = (mu.eval(&x.concat(&y)) - mu.eval(&x) - mu.eval(&y)).abs();
        worst = worst.max(d);
    }
    worst
}

/// Every reduced word of length at most `max_len`, shortest first.
pub fn reduced_words_up_to(max_len: usize) -> Vec<Word> {
    let mut words = vec![Word::identity()];
    let mut frontier = vec![Word::identity()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(frontier.len() * 3);
        for f in &frontier {
            for l in Letter::ALL {
                if f.letters.last().is_some_and(|last| last.is_inverse_of(l)) {
                    continue;
                }
                let mut g = f.clone();
                g.letters.push(l);
                next.push(g);
            }
        }
        words.extend(next.iter().cloned());
        frontier = next;
    }
    words
}

/// Exact `max |mu(xy) - mu(x) - mu(y)|` over all pairs of reduced words of
/// length at most `max_len`; also a lower bound for the defect.
pub fn defect_exhaustive(mu: &CountingQM, max_len: usize) -> f64 {
    let words = reduced_words_up_to(max_len);
    let values: Vec<f64> = words.iter().map(|g| mu.eval(g)).collect();
    words
        .par_iter()
        .zip(&values)
        .map(|(x, vx)| {
            let mut worst = 0.0f64;
            for (y, vy) in words.iter().zip(&values) {
                worst = worst.max((mu.eval(&x.concat(y)) - vx - vy).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

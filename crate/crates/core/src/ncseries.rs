//! Truncated formal series in noncommuting variables `A_v` with complex
//! coefficients.
//!
//! A series stores the coefficient of every word of length at most `D`
//! sparsely; words are ordered lexicographically by letter id, which fixes
//! the summation order of every operation. Products that would produce
//! words longer than `D` are discarded silently.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type LetterId = u16;
pub type Word = Vec<LetterId>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Letter {
    pub id: LetterId,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    letters: Vec<Letter>,
}

impl Alphabet {
    /// Letters get ids `0..labels.len()` in order.
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let letters: Vec<Letter> = labels.into_iter().enumerate().map(|(i, l)| Letter { id: i as LetterId, label: l.into() }).collect();
        for l in &letters {
            if l.label.is_empty() {
                return Err(Error::Invalid("empty letter label".into()));
            }
        }
        for (i, a) in letters.iter().enumerate() {
            if letters[..i].iter().any(|b| b.label == a.label) {
                return Err(Error::Invalid(format!("duplicate letter label {}", a.label)));
            }
        }
        Ok(Alphabet { letters })
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn label(&self, id: LetterId) -> &str {
        &self.letters[id as usize].label
    }

    pub fn id_of(&self, label: &str) -> Option<LetterId> {
        self.letters.iter().find(|l| l.label == label).map(|l| l.id)
    }

    /// All words of length `0..=depth`, shortest first, lexicographic within a length.
    pub fn words(&self, depth: usize) -> Vec<Word> {
        let n = self.len() as LetterId;
        let mut out: Vec<Word> = vec![Vec::new()];
        let mut layer: Vec<Word> = vec![Vec::new()];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(layer.len() * n as usize);
            for w in &layer {
                for a in 0..n {
                    let mut x = w.clone();
                    x.push(a);
                    next.push(x);
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }
}

/// Square matrix `g[v][u]` acting by `g_*(A_u) = sum_v A_v g[v][u]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LetterMap {
    pub matrix: Vec<Vec<C64>>,
}

impl LetterMap {
    pub fn new(matrix: Vec<Vec<C64>>) -> Result<Self> {
        let n = matrix.len();
        for row in &matrix {
            if row.len() != n {
                return Err(Error::Dimension { expected: n, got: row.len() });
            }
        }
        Ok(LetterMap { matrix })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = C64::new(1.0, 0.0);
        }
        LetterMap { matrix: m }
    }

    pub fn diagonal(d: &[C64]) -> Self {
        let mut m = Self::identity(d.len());
        for (i, x) in d.iter().enumerate() {
            m.matrix[i][i] = *x;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    /// Matrix product; `(g h)_*` equals `g_* . h_*`.
    pub fn compose(&self, other: &LetterMap) -> Result<LetterMap> {
        let n = self.dim();
        if other.dim() != n {
            return Err(Error::Dimension { expected: n, got: other.dim() });
        }
        let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                for k in 0..n {
                    *x += self.matrix[i][k] * other.matrix[k][j];
                }
            }
        }
        Ok(LetterMap { matrix: m })
    }
}

#[derive(Clone, PartialEq)]
pub struct NcSeries {
    alphabet: Arc<Alphabet>,
    depth: usize,
    coeffs: BTreeMap<Word, C64>,
}

impl fmt::Debug for NcSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NcSeries(D={}", self.depth)?;
        for (w, c) in &self.coeffs {
            let label: Vec<&str> = w.iter().map(|&a| self.alphabet.label(a)).collect();
            write!(f, ", [{}]: {:.6e}{:+.6e}i", label.join(" "), c.re, c.im)?;
        }
        write!(f, ")")
    }
}

impl NcSeries {
    pub fn zero(alphabet: Arc<Alphabet>, depth: usize) -> Self {
        NcSeries { alphabet, depth, coeffs: BTreeMap::new() }
    }

    pub fn one(alphabet: Arc<Alphabet>, depth: usize) -> Self {
        let mut s = Self::zero(alphabet, depth);
        s.coeffs.insert(Vec::new(), C64::new(1.0, 0.0));
        s
    }

    /// The series `c * A_a`.
    pub fn letter(alphabet: Arc<Alphabet>, depth: usize, a: LetterId, c: C64) -> Self {
        let mut s = Self::zero(alphabet, depth);
        s.set(vec![a], c);
        s
    }

    /// Build from explicit terms; words longer than `depth` are dropped.
    pub fn from_terms(alphabet: Arc<Alphabet>, depth: usize, terms: impl IntoIterator<Item = (Word, C64)>) -> Result<Self> {
        let mut s = Self::zero(alphabet, depth);
        for (w, c) in terms {
            if w.iter().any(|&a| a as usize >= s.alphabet.len()) {
                return Err(Error::Invalid(format!("word {w:?} uses an unknown letter")));
            }
            s.add_to(w, c);
        }
        Ok(s)
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &C64)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, w: &[LetterId]) -> C64 {
        self.coeffs.get(w).copied().unwrap_or_default()
    }

    pub fn constant_term(&self) -> C64 {
        self.coeff(&[])
    }

    pub fn set(&mut self, w: Word, c: C64) {
        if w.len() > self.depth {
            return;
        }
        if c == C64::new(0.0, 0.0) {
            self.coeffs.remove(&w);
        } else {
            self.coeffs.insert(w, c);
        }
    }

    pub fn add_to(&mut self, w: Word, c: C64) {
        if w.len() > self.depth {
            return;
        }
        *self.coeffs.entry(w).or_default() += c;
    }

    fn check_compatible(&self, other: &NcSeries) -> Result<()> {
        if self.depth != other.depth {
            return Err(Error::Mismatch(format!("truncation {} vs {}", self.depth, other.depth)));
        }
        if self.alphabet != other.alphabet {
            return Err(Error::Mismatch("different alphabets".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &NcSeries) -> Result<NcSeries> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (w, c) in &other.coeffs {
            out.add_to(w.clone(), *c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &NcSeries) -> Result<NcSeries> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> NcSeries {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v *= c;
        }
        out
    }

    /// Same coefficients, smaller truncation.
    pub fn truncate(&self, depth: usize) -> NcSeries {
        let mut out = NcSeries::zero(self.alphabet.clone(), depth.min(self.depth));
        for (w, c) in &self.coeffs {
            if w.len() <= out.depth {
                out.coeffs.insert(w.clone(), *c);
            }
        }
        out
    }

    pub fn mul(&self, other: &NcSeries) -> Result<NcSeries> {
        self.check_compatible(other)?;
        let mut out = NcSeries::zero(self.alphabet.clone(), self.depth);
        for (u, a) in &self.coeffs {
            for (v, b) in &other.coeffs {
                if u.len() + v.len() > self.depth {
                    continue;
                }
                let mut w = Vec::with_capacity(u.len() + v.len());
                w.extend_from_slice(u);
                w.extend_from_slice(v);
                *out.coeffs.entry(w).or_default() += a * b;
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<NcSeries> {
        let c0 = self.constant_term();
        if c0.norm() == 0.0 {
            return Err(Error::ZeroConstantTerm);
        }
        // a = c0 (1 + x), a^{-1} = c0^{-1} sum_k (-x)^k, evaluated by Horner.
        let mut x = self.scale(c0.inv());
        x.coeffs.remove(&Vec::new());
        let one = NcSeries::one(self.alphabet.clone(), self.depth);
        let mut b = one.clone();
        for _ in 0..self.depth {
            b = one.sub(&x.mul(&b)?)?;
        }
        Ok(b.scale(c0.inv()))
    }

    /// `exp(self)` for a series without constant term (the sum is finite after truncation).
    pub fn exp(&self) -> Result<NcSeries> {
        if self.constant_term().norm() != 0.0 {
            return Err(Error::Invalid("exp needs a series without constant term".into()));
        }
        let one = NcSeries::one(self.alphabet.clone(), self.depth);
        let mut out = one.clone();
        let mut term = one;
        for k in 1..=self.depth {
            term = term.mul(self)?.scale(C64::new(1.0 / k as f64, 0.0));
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// `g_*`: every letter `A_u` becomes `sum_v A_v g[v][u]`.
    pub fn apply_letter_map(&self, g: &LetterMap) -> Result<NcSeries> {
        let n = self.alphabet.len();
        if g.dim() != n {
            return Err(Error::Dimension { expected: n, got: g.dim() });
        }
        let images: Vec<Vec<(LetterId, C64)>> = (0..n)
            .map(|u| (0..n).filter(|&v| g.matrix[v][u] != C64::new(0.0, 0.0)).map(|v| (v as LetterId, g.matrix[v][u])).collect())
            .collect();
        self.substitute(self.alphabet.clone(), &images)
    }

    /// Linear letter substitution into another alphabet: `A_u -> sum (b, c) c * B_b`.
    pub fn substitute(&self, target: Arc<Alphabet>, images: &[Vec<(LetterId, C64)>]) -> Result<NcSeries> {
        if images.len() != self.alphabet.len() {
            return Err(Error::Dimension { expected: self.alphabet.len(), got: images.len() });
        }
        let mut out = NcSeries::zero(target, self.depth);
        for (w, c) in &self.coeffs {
            let mut partial: Vec<(Word, C64)> = vec![(Vec::with_capacity(w.len()), *c)];
            for &u in w {
                let mut next = Vec::with_capacity(partial.len() * images[u as usize].len());
                for (pw, pc) in &partial {
                    for &(b, gb) in &images[u as usize] {
                        let mut x = pw.clone();
                        x.push(b);
                        next.push((x, pc * gb));
                    }
                }
                partial = next;
            }
            for (x, v) in partial {
                *out.coeffs.entry(x).or_default() += v;
            }
        }
        Ok(out)
    }

    /// Diagonal special case of [`apply_letter_map`](Self::apply_letter_map).
    pub fn scale_letters(&self, c: &[C64]) -> Result<NcSeries> {
        if c.len() != self.alphabet.len() {
            return Err(Error::Dimension { expected: self.alphabet.len(), got: c.len() });
        }
        let mut out = self.clone();
        for (w, v) in out.coeffs.iter_mut() {
            for &a in w.iter() {
                *v *= c[a as usize];
            }
        }
        Ok(out)
    }

    /// Max coefficient distance over the union of supports.
    pub fn max_abs_diff(&self, other: &NcSeries) -> f64 {
        let mut m: f64 = 0.0;
        for (w, c) in &self.coeffs {
            m = m.max((c - other.coeff(w)).norm());
        }
        for (w, c) in &other.coeffs {
            if !self.coeffs.contains_key(w) {
                m = m.max(c.norm());
            }
        }
        m
    }

    /// Largest coefficient magnitude, used to turn absolute residuals into relative ones.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// `max |self - 1|` coefficientwise.
    pub fn distance_from_one(&self) -> f64 {
        self.max_abs_diff(&NcSeries::one(self.alphabet.clone(), self.depth))
    }

    /// Checks the shuffle relations `a(u) a(v) = sum_{w in sh(u,v)} a(w)` for all
    /// pairs with `|u| + |v| <= D`; returns the verdict and the largest residual.
    pub fn is_group_like(&self, tol: f64) -> (bool, f64) {
        let words = self.alphabet.words(self.depth);
        let mut worst: f64 = 0.0;
        for u in &words {
            for v in &words {
                if u.len() + v.len() > self.depth {
                    continue;
                }
                let lhs = self.coeff(u) * self.coeff(v);
                let rhs: C64 = shuffle_words(u, v).iter().map(|w| self.coeff(w)).sum();
                worst = worst.max((lhs - rhs).norm());
            }
        }
        (worst <= tol, worst)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SeriesWire::from(self)).expect("series serialization")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<NcSeries> {
        let wire: SeriesWire = serde_json::from_value(v.clone())?;
        let alphabet = Arc::new(Alphabet::new(wire.alphabet)?);
        NcSeries::from_terms(alphabet, wire.depth, wire.coeffs.into_iter().map(|t| (t.word, C64::new(t.re, t.im))))
    }
}

/// All interleavings of `u` and `v` that keep each word's internal order,
/// with multiplicity.
pub fn shuffle_words(u: &[LetterId], v: &[LetterId]) -> Vec<Word> {
    if u.is_empty() {
        return vec![v.to_vec()];
    }
    if v.is_empty() {
        return vec![u.to_vec()];
    }
    let mut out = Vec::new();
    for mut w in shuffle_words(&u[1..], v) {
        w.insert(0, u[0]);
        out.push(w);
    }
    for mut w in shuffle_words(u, &v[1..]) {
        w.insert(0, v[0]);
        out.push(w);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct TermWire {
    word: Vec<LetterId>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct SeriesWire {
    alphabet: Vec<String>,
    #[serde(rename = "D")]
    depth: usize,
    coeffs: Vec<TermWire>,
}

impl From<&NcSeries> for SeriesWire {
    fn from(s: &NcSeries) -> Self {
        SeriesWire {
            alphabet: s.alphabet.letters().iter().map(|l| l.label.clone()).collect(),
            depth: s.depth,
            coeffs: s.coeffs.iter().map(|(w, c)| TermWire { word: w.clone(), re: c.re, im: c.im }).collect(),
        }
    }
}

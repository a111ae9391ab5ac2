//! Multiple Dirichlet series attached to vertical iterated integrals:
//! the D-polynomials, the series evaluation engine, the `L(z; ...)` functions
//! and the product formula for series with coefficients data.
//!
//! Indexing: in a word `A_{v_k} ... A_{v_1}` the innermost form is `v_1`, the
//! last letter of the word. `S_a = n_1 + ... + n_a`.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::itint::OmegaFamily;
use crate::ncseries::{NcSeries, C64};

pub type Poly = Vec<BigRational>;

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn factorial(n: u32) -> BigRational {
    (1..=n as i64).fold(BigRational::one(), |acc, k| acc * rat(k))
}

fn rpow(x: &BigRational, e: i64) -> BigRational {
    if e >= 0 {
        num_traits::pow(x.clone(), e as usize)
    } else {
        num_traits::pow(x.recip(), (-e) as usize)
    }
}

/// `(1 + d/dt)^{-1} P = sum_k (-1)^k P^{(k)}`, via `q_j = p_j - (j+1) q_{j+1}`.
pub fn inv_one_plus_ddt(p: &[BigRational]) -> Poly {
    let mut q = p.to_vec();
    for j in (0..q.len().saturating_sub(1)).rev() {
        let next = q[j + 1].clone() * rat(j as i64 + 1);
        q[j] -= next;
    }
    q
}

fn inv_one_plus_ddt_f64(q: &mut [f64]) {
    for j in (0..q.len().saturating_sub(1)).rev() {
        q[j] -= (j + 1) as f64 * q[j + 1];
    }
}

fn check_lists(m: &[u32], n: &[u64]) -> Result<()> {
    if m.len() != n.len() {
        return Err(Error::Dimension { expected: m.len(), got: n.len() });
    }
    if m.is_empty() {
        return Err(Error::Invalid("D-polynomials need k >= 1".into()));
    }
    if m.contains(&0) || n.contains(&0) {
        return Err(Error::Invalid("m and n entries must be positive".into()));
    }
    Ok(())
}

/// One step of the recursion: `(1+d)^{-1} [D(rho t) t^{m-1}]`.
fn d_step(d: &[BigRational], rho: &BigRational, m: u32) -> Poly {
    let mut p = vec![BigRational::zero(); d.len() + m as usize - 1];
    let mut r = BigRational::one();
    for (i, c) in d.iter().enumerate() {
        p[i + m as usize - 1] = c * &r;
        r *= rho;
    }
    inv_one_plus_ddt(&p)
}

/// `D^{n_1..n_k}_{m_1..m_k}(t)` by the defining recursion, lowest degree first.
pub fn d_poly(m: &[u32], n: &[u64]) -> Result<Poly> {
    check_lists(m, n)?;
    let mut d = vec![BigRational::one()];
    let mut s_prev = 0i64;
    for (&ma, &na) in m.iter().zip(n) {
        let s = s_prev + na as i64;
        d = d_step(&d, &BigRational::new(BigInt::from(s_prev), BigInt::from(s)), ma);
        s_prev = s;
    }
    Ok(d)
}

/// The explicit sum over `j_1..j_k` with `j_a <= m_a - 1 + j_{a-1}`.
pub fn d_poly_closed(m: &[u32], n: &[u64]) -> Result<Poly> {
    check_lists(m, n)?;
    let k = m.len();
    let sums: Vec<BigRational> = n
        .iter()
        .scan(0i64, |s, &x| {
            *s += x as i64;
            Some(rat(*s))
        })
        .collect();
    let deg: u32 = m.iter().map(|x| x - 1).sum();
    let mut out = vec![BigRational::zero(); deg as usize + 1];
    let mut js = vec![0u32; k + 1];
    fn rec(a: usize, m: &[u32], sums: &[BigRational], js: &mut Vec<u32>, out: &mut Poly) {
        let k = m.len();
        if a > k {
            let mut w = BigRational::one();
            for b in 1..=k {
                w *= factorial(m[b - 1] - 1 + js[b - 1]) / factorial(js[b]);
            }
            for b in 1..k {
                w *= rpow(&sums[b - 1], js[b] as i64 - js[b - 1] as i64);
            }
            w *= rpow(&sums[k - 1], -(js[k - 1] as i64));
            if js[k] % 2 == 1 {
                w = -w;
            }
            out[js[k] as usize] += w;
            return;
        }
        for j in 0..=(m[a - 1] - 1 + js[a - 1]) {
            js[a] = j;
            rec(a + 1, m, sums, js, out);
        }
    }
    rec(1, m, &sums, &mut js, &mut out);
    if (deg % 2) == 1 {
        out.iter_mut().for_each(|c| *c = -c.clone());
    }
    Ok(out)
}

/// Summary of the exhaustive recursion-versus-closed-form comparison.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DPolyVerification {
    pub cases: u64,
    pub mismatches: u64,
    pub specialization_failures: u64,
    pub first_mismatch: Option<(Vec<u32>, Vec<u64>)>,
}

/// Compares the recursion with the closed form for every `m`-list with
/// `sum m <= max_m_sum` and every `n`-list with entries in `1..=max_n`,
/// sharing prefixes depth-first. The closed form is evaluated by summing out
/// `j_1, ..., j_{a-1}` one level at a time. Also checks the constant terms
/// for `k = 1` and `k = 2` against their explicit formulas.
pub fn verify_d_polys(max_m_sum: u32, max_n: u64) -> DPolyVerification {
    struct Frame {
        m: Vec<u32>,
        n: Vec<u64>,
        s: i64,
        rec: Poly,
        // v[j] = sum over j_1..j_{a-1} of prod (m_b-1+j_{b-1})!/j_b! * prod S_b^{j_b - j_{b-1}}
        v: Poly,
    }
    let mut report = DPolyVerification::default();
    let facts: Vec<BigRational> = (0..=max_m_sum + 1).map(factorial).collect();
    let mut stack = vec![Frame { m: vec![], n: vec![], s: 0, rec: vec![BigRational::one()], v: vec![BigRational::one()] }];
    while let Some(fr) = stack.pop() {
        let used: u32 = fr.m.iter().sum();
        for ma in 1..=(max_m_sum - used) {
            for na in 1..=max_n {
                let s = fr.s + na as i64;
                let sr = rat(s);
                let rho = BigRational::new(BigInt::from(fr.s), BigInt::from(s));
                let rec = d_step(&fr.rec, &rho, ma);
                let mut v = vec![BigRational::zero(); fr.v.len() + ma as usize - 1];
                for (j, vj) in fr.v.iter().enumerate() {
                    if vj.is_zero() {
                        continue;
                    }
                    let top = ma as usize - 1 + j;
                    let base = vj * &facts[top];
                    let mut spow = rpow(&sr, -(j as i64));
                    for (jn, slot) in v.iter_mut().enumerate().take(top + 1) {
                        *slot += &base * &spow / &facts[jn];
                        spow *= &sr;
                    }
                }
                let mut m = fr.m.clone();
                m.push(ma);
                let mut n = fr.n.clone();
                n.push(na);
                let deg: u32 = m.iter().map(|x| x - 1).sum();
                let mut closed_ok = rec.len() == v.len();
                let mut sinv = BigRational::one();
                let srec = sr.recip();
                for j in 0..v.len().min(rec.len()) {
                    let mut c = &v[j] * &sinv;
                    if (deg as usize + j) % 2 == 1 {
                        c = -c;
                    }
                    if c != rec[j] {
                        closed_ok = false;
                        break;
                    }
                    sinv *= &srec;
                }
                report.cases += 1;
                if !closed_ok {
                    report.mismatches += 1;
                    if report.first_mismatch.is_none() {
                        report.first_mismatch = Some((m.clone(), n.clone()));
                    }
                }
                if !specializations_hold(&m, &n, &rec) {
                    report.specialization_failures += 1;
                }
                if used + ma < max_m_sum {
                    stack.push(Frame { m, n, s, rec, v });
                }
            }
        }
    }
    report
}

fn specializations_hold(m: &[u32], n: &[u64], d: &Poly) -> bool {
    let sign = |e: u32| if e % 2 == 0 { BigRational::one() } else { -BigRational::one() };
    match m.len() {
        1 => d[0] == sign(m[0] - 1) * factorial(m[0] - 1),
        2 => {
            let ratio = BigRational::new(BigInt::from(n[0]), BigInt::from(n[0] + n[1]));
            // (1+d)^{-1} t^e at t = 0 is (-1)^e e!
            let mut acc = BigRational::zero();
            for j in 0..m[0] {
                acc += factorial(m[1] - 1 + j) * rpow(&ratio, j as i64) / factorial(j);
            }
            d[0] == sign(m[0] - 1 + m[1] - 1) * factorial(m[0] - 1) * acc
        }
        _ => true,
    }
}

pub fn poly_to_f64(p: &[BigRational]) -> Vec<f64> {
    p.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect()
}

fn horner(c: &[f64], t: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, x| acc * t + x)
}

/// Per-letter data for the series engines: `c_{v,n}` (including every scalar
/// factor) and the integer Mellin argument `m_v`.
#[derive(Clone, Debug)]
pub struct SeriesLetter {
    pub coeffs: Vec<C64>,
    pub m: u32,
    pub growth: (f64, f64),
}

pub fn series_letters(family: &OmegaFamily) -> Result<Vec<SeriesLetter>> {
    (0..family.forms.len())
        .map(|v| {
            let f = family.modular_form(v as u16).ok_or_else(|| Error::Invalid("series engine needs forms of modular type".into()))?;
            if f.form.period != 1 {
                return Err(Error::Invalid("series engine needs expansions in e^{2 pi i n z}".into()));
            }
            let m = match f.integer_s() {
                Some(s) if s >= 1 => s as u32,
                _ => return Err(Error::Invalid(format!("Mellin argument {} is not a positive integer", f.s))),
            };
            let scale = f.scale * f.form.prefactor;
            let (kk, cc) = f.form.growth;
            Ok(SeriesLetter { coeffs: f.form.coeffs.iter().map(|c| c * scale).collect(), m, growth: (kk * scale.norm(), cc) })
        })
        .collect()
}

/// `I_{i inf}^z` of one word through the D-polynomial series:
/// `(2 pi i)^{sum m} I = sum_n prod c_{v_a, n_a} e^{2 pi i S_k z} / prod S_a^{m_a} D(2 pi i S_k z)`.
pub fn word_series(letters: &[&SeriesLetter], z: C64) -> C64 {
    // letters[0] is outermost; the recursion starts from the innermost one
    let inner: Vec<&SeriesLetter> = letters.iter().rev().copied().collect();
    fn dfs(inner: &[&SeriesLetter], a: usize, s_prev: u64, weight: C64, d: &[f64], z: C64) -> C64 {
        let letter = inner[a];
        let mut acc = C64::new(0.0, 0.0);
        for (i, c) in letter.coeffs.iter().enumerate() {
            if c.norm() == 0.0 {
                continue;
            }
            let s = s_prev + i as u64 + 1;
            let rho = s_prev as f64 / s as f64;
            let mut p = vec![0.0; d.len() + letter.m as usize - 1];
            let mut r = 1.0;
            for (j, x) in d.iter().enumerate() {
                p[j + letter.m as usize - 1] = x * r;
                r *= rho;
            }
            inv_one_plus_ddt_f64(&mut p);
            let w = weight * c / (s as f64).powi(letter.m as i32);
            if a + 1 == inner.len() {
                let t = C64::new(0.0, 2.0 * PI * s as f64) * z;
                acc += w * t.exp() * horner(&p, t);
            } else {
                acc += dfs(inner, a + 1, s, w, &p, z);
            }
        }
        acc
    }
    let total_m: i32 = letters.iter().map(|l| l.m as i32).sum();
    dfs(&inner, 0, 0, C64::new(1.0, 0.0), &[1.0], z) / C64::new(0.0, 2.0 * PI).powi(total_m)
}

/// `J_{i inf}^z` for a family with integer Mellin arguments, every
/// coefficient from the series engine.
pub fn j_vertical_series(family: &OmegaFamily, z: C64, depth: usize) -> Result<NcSeries> {
    if z.im <= 0.0 {
        return Err(Error::NotInUpperHalfPlane(z));
    }
    let letters = series_letters(family)?;
    let mut out = NcSeries::one(family.alphabet.clone(), depth);
    for w in family.alphabet.words(depth).into_iter().skip(1) {
        let ls: Vec<&SeriesLetter> = w.iter().map(|&v| &letters[v as usize]).collect();
        out.set(w, word_series(&ls, z));
    }
    Ok(out)
}

/// Parameters of `L(z; omega_{v_k}, ..., omega_{v_1}; j_k, ..., j_1)`,
/// stored innermost first: `letters[a-1]` is `v_a`, `j[a-1]` is `j_a`.
#[derive(Clone, Debug)]
pub struct LParams {
    pub letters: Vec<SeriesLetter>,
    pub j: Vec<u32>,
}

impl LParams {
    /// Arguments in the written order `v_k, ..., v_1` and `j_k, ..., j_1`.
    pub fn new(outer_first: Vec<SeriesLetter>, j_outer_first: Vec<u32>) -> Result<Self> {
        if outer_first.len() != j_outer_first.len() || outer_first.is_empty() {
            return Err(Error::Dimension { expected: outer_first.len(), got: j_outer_first.len() });
        }
        let letters: Vec<SeriesLetter> = outer_first.into_iter().rev().collect();
        let j: Vec<u32> = j_outer_first.into_iter().rev().collect();
        let mut prev = 0u32;
        for (l, &ja) in letters.iter().zip(&j) {
            if ja > l.m - 1 + prev {
                return Err(Error::Invalid(format!("j = {ja} exceeds m - 1 + j_prev = {}", l.m - 1 + prev)));
            }
            prev = ja;
        }
        Ok(LParams { letters, j })
    }

    pub fn depth(&self) -> usize {
        self.letters.len()
    }

    /// Exponents `m_{v_a} + j_{a-1} - j_a` of `S_a`, innermost first.
    pub fn dirichlet_args(&self) -> Vec<i64> {
        let mut prev = 0i64;
        self.letters
            .iter()
            .zip(&self.j)
            .map(|(l, &ja)| {
                let e = l.m as i64 + prev - ja as i64;
                prev = ja as i64;
                e
            })
            .collect()
    }

    fn growth_exponent(&self) -> f64 {
        self.letters.iter().map(|l| l.growth.1).fold(0.0, f64::max)
    }
}

/// Sum over `n_a <= n_max` of `prod c / prod S_a^{e_a}` times `e^{2 pi i S_k z}`
/// (`z = None` drops the exponential).
fn l_sum(p: &LParams, z: Option<C64>, n_max: usize) -> C64 {
    let exps = p.dirichlet_args();
    fn dfs(p: &LParams, exps: &[i64], a: usize, s_prev: u64, w: C64, z: Option<C64>, n_max: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (i, c) in p.letters[a].coeffs.iter().take(n_max).enumerate() {
            if c.norm() == 0.0 {
                continue;
            }
            let s = s_prev + i as u64 + 1;
            let w2 = w * c / (s as f64).powi(exps[a] as i32);
            if a + 1 == p.depth() {
                acc += match z {
                    Some(z) => w2 * (C64::new(0.0, 2.0 * PI * s as f64) * z).exp(),
                    None => w2,
                };
            } else {
                acc += dfs(p, exps, a + 1, s, w2, z, n_max);
            }
        }
        acc
    }
    dfs(p, &exps, 0, 0, C64::new(1.0, 0.0), z, n_max)
}

/// Partial sum of `L(z; ...)` over `n_a <= n_max` (capped by the stored
/// coefficients), with a bound on the omitted terms from the growth fit.
pub fn l_series(z: C64, p: &LParams, n_max: usize) -> Result<(C64, f64)> {
    if z.im <= 0.0 {
        return Err(Error::NotInUpperHalfPlane(z));
    }
    let jk = *p.j.last().unwrap();
    let pre = (C64::new(0.0, 2.0 * PI) * z).powi(jk as i32);
    let value = pre * l_sum(p, Some(z), n_max);
    // every omitted tuple has some n_a > n_max; denominators are >= 1
    let x = (-2.0 * PI * z.im).exp();
    let mut full = 1.0;
    let mut kept = 1.0;
    for l in &p.letters {
        let (kk, cc) = l.growth;
        let cut = n_max.min(l.coeffs.len());
        let head: f64 = (1..=cut).map(|n| kk * (n as f64).powf(cc) * x.powi(n as i32)).sum();
        let mut tail = 0.0;
        let mut n = cut + 1;
        loop {
            let t = kk * (n as f64).powf(cc) * x.powi(n as i32);
            tail += t;
            if t < 1e-30 * (head + tail) || n > cut + 100_000 {
                break;
            }
            n += 1;
        }
        full *= head + tail;
        kept *= head;
    }
    Ok((value, pre.norm() * (full - kept).max(0.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub enum LLimit {
    Value {
        value: C64,
        bound: f64,
    },
    Zero,
    /// Divergent at `z = 0`; only the Fricke split resolves these.
    NeedsRegularization,
}

/// The `z -> 0` behaviour of `L(z; ...)` by the three cases on
/// `e_k = m_{v_k} + j_{k-1} - j_k` against `1 + k C`.
pub fn l_limit(p: &LParams) -> LLimit {
    let k = p.depth();
    let c = p.growth_exponent();
    let jk = p.j[k - 1];
    let ek = *p.dirichlet_args().last().unwrap() as f64;
    let threshold = 1.0 + k as f64 * c;
    if jk == 0 && ek > threshold {
        let n_max = p.letters.iter().map(|l| l.coeffs.len()).min().unwrap_or(0);
        let value = l_sum(p, None, n_max);
        let kk: f64 = p.letters.iter().map(|l| l.growth.0).product();
        let slack = ek - k as f64 - k as f64 * c;
        let bound = if slack > 0.0 { kk * (n_max as f64).powf(-slack) / slack } else { f64::INFINITY };
        LLimit::Value { value, bound }
    } else if jk > 0 && ek > threshold {
        LLimit::Zero
    } else {
        LLimit::NeedsRegularization
    }
}

/// `I_{i inf}^z` of one word through the `j`-sum of `L` functions.
pub fn word_via_l(outer_first: &[&SeriesLetter], z: C64) -> Result<C64> {
    let k = outer_first.len();
    let inner: Vec<&SeriesLetter> = outer_first.iter().rev().copied().collect();
    let total_m: u32 = inner.iter().map(|l| l.m).sum();
    let mut acc = C64::new(0.0, 0.0);
    let mut js = vec![0u32; k];
    fn rec(a: usize, prev: u32, inner: &[&SeriesLetter], js: &mut Vec<u32>, z: C64, acc: &mut C64) -> Result<()> {
        let k = inner.len();
        if a == k {
            let mut w = 1.0;
            let mut p = 0u32;
            for b in 0..k {
                let top = inner[b].m - 1 + p;
                w *= (1..=top).map(f64::from).product::<f64>() / (1..=js[b]).map(f64::from).product::<f64>();
                p = js[b];
            }
            if js[k - 1] % 2 == 1 {
                w = -w;
            }
            let params = LParams { letters: inner.iter().map(|l| (*l).clone()).collect(), j: js.clone() };
            let n_max = inner.iter().map(|l| l.coeffs.len()).max().unwrap_or(0);
            *acc += l_series(z, &params, n_max)?.0 * w;
            return Ok(());
        }
        for j in 0..=(inner[a].m - 1 + prev) {
            js[a] = j;
            rec(a + 1, j, inner, js, z, acc)?;
        }
        Ok(())
    }
    rec(0, 0, &inner, &mut js, z, &mut acc)?;
    let sign = if inner.iter().map(|l| l.m - 1).sum::<u32>() % 2 == 1 { -1.0 } else { 1.0 };
    Ok(acc * sign / C64::new(0.0, 2.0 * PI).powi(total_m as i32))
}

pub fn j_vertical_via_l(family: &OmegaFamily, z: C64, depth: usize) -> Result<NcSeries> {
    let letters = series_letters(family)?;
    let mut out = NcSeries::one(family.alphabet.clone(), depth);
    for w in family.alphabet.words(depth).into_iter().skip(1) {
        let ls: Vec<&SeriesLetter> = w.iter().map(|&v| &letters[v as usize]).collect();
        out.set(w, word_via_l(&ls, z)?);
    }
    Ok(out)
}

/// Coefficients data `c^{(j,i)}_{n,m}`, `depth >= j > i >= 0`, `n > m >= 0`,
/// for `n <= cutoff`. Stored as deviations from 1. Series built from data are
/// partial sums over `u_k <= cutoff`, which are the full sums whenever the
/// data vanish past the cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientsData {
    depth: usize,
    cutoff: usize,
    dev: Vec<C64>,
}

impl CoefficientsData {
    pub fn ones(depth: usize, cutoff: usize) -> Self {
        let pairs = depth * (depth + 1) / 2;
        let nm = cutoff * (cutoff + 1) / 2;
        CoefficientsData { depth, cutoff, dev: vec![C64::new(0.0, 0.0); pairs * nm] }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    fn slot(&self, j: usize, i: usize, n: usize, m: usize) -> Result<usize> {
        if !(j <= self.depth && i < j && m < n && n >= 1 && n <= self.cutoff) {
            return Err(Error::Invalid(format!("index (j={j}, i={i}, n={n}, m={m}) out of range")));
        }
        let pair = j * (j - 1) / 2 + i;
        let nm = n * (n - 1) / 2 + m;
        Ok(pair * self.cutoff * (self.cutoff + 1) / 2 + nm)
    }

    pub fn get(&self, j: usize, i: usize, n: usize, m: usize) -> Result<C64> {
        Ok(self.dev[self.slot(j, i, n, m)?] + 1.0)
    }

    pub fn set(&mut self, j: usize, i: usize, n: usize, m: usize, value: C64) -> Result<()> {
        let k = self.slot(j, i, n, m)?;
        self.dev[k] = value - 1.0;
        Ok(())
    }

    /// Entries that differ from 1.
    pub fn support(&self) -> usize {
        self.dev.iter().filter(|d| d.norm() != 0.0).count()
    }

    /// `c^{(j,0)}_{n,0} = a^{(j)}_n` and everything else 1; `a^{(j)}_n` vanishes past the cutoff.
    pub fn from_sequences(a: &[Vec<C64>], cutoff: usize) -> Result<Self> {
        let mut d = CoefficientsData::ones(a.len(), cutoff);
        for (j, seq) in a.iter().enumerate() {
            for n in 1..=cutoff {
                d.set(j + 1, 0, n, 0, seq.get(n - 1).copied().unwrap_or_default())?;
            }
        }
        Ok(d)
    }

    /// `L_C(s) = sum_{0 < u_1 < ... < u_k <= cutoff} prod c^{(j,i)}_{u_j,u_i} / prod u_j^{s_j}`.
    pub fn l_value(&self, s: &[C64]) -> Result<C64> {
        if s.len() != self.depth {
            return Err(Error::Dimension { expected: self.depth, got: s.len() });
        }
        let mut u = vec![0usize; self.depth + 1];
        let mut acc = C64::new(0.0, 0.0);
        self.l_rec(1, &mut u, s, C64::new(1.0, 0.0), &mut acc)?;
        Ok(acc)
    }

    fn l_rec(&self, j: usize, u: &mut Vec<usize>, s: &[C64], w: C64, acc: &mut C64) -> Result<()> {
        if j > self.depth {
            *acc += w;
            return Ok(());
        }
        for uj in u[j - 1] + 1..=self.cutoff {
            u[j] = uj;
            let mut f = w * (-s[j - 1] * (uj as f64).ln()).exp();
            for i in 0..j {
                f *= self.get(j, i, uj, u[i])?;
            }
            if f.norm() == 0.0 {
                continue;
            }
            self.l_rec(j + 1, u, s, f, acc)?;
        }
        Ok(())
    }
}

/// Data of a vertical `L` function: `c^{(j,j-1)}_{n,m} = c_{v_j, n-m}`,
/// everything else 1, truncated at `cutoff`. With the arguments from
/// [`LParams::dirichlet_args`], `L_C` is the `z = 0` series summed over
/// `S_k <= cutoff`.
pub fn make_data_from_forms(p: &LParams, cutoff: usize) -> Result<CoefficientsData> {
    let mut d = CoefficientsData::ones(p.depth(), cutoff);
    for (jm1, l) in p.letters.iter().enumerate() {
        let j = jm1 + 1;
        for n in 1..=cutoff {
            for m in 0..n {
                d.set(j, j - 1, n, m, l.coeffs.get(n - m - 1).copied().unwrap_or_default())?;
            }
        }
    }
    Ok(d)
}

/// A `(k, l, p)` shuffle with repetitions: `sigma1[0] = sigma2[0] = 0`, both
/// strictly increasing, images covering `0..=p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShuffleWithReps {
    pub p: usize,
    pub sigma1: Vec<usize>,
    pub sigma2: Vec<usize>,
}

impl ShuffleWithReps {
    fn preimage(map: &[usize], x: usize) -> Option<usize> {
        map.iter().position(|&y| y == x)
    }

    pub fn multiplicity(&self, x: usize) -> u8 {
        Self::preimage(&self.sigma1, x).is_some() as u8 + Self::preimage(&self.sigma2, x).is_some() as u8
    }
}

pub fn enumerate_shuffles(k: usize, l: usize) -> Vec<ShuffleWithReps> {
    let mut out = Vec::new();
    fn rec(k: usize, l: usize, s1: &mut Vec<usize>, s2: &mut Vec<usize>, pos: usize, out: &mut Vec<ShuffleWithReps>) {
        let (a, b) = (s1.len() - 1, s2.len() - 1);
        if a == k && b == l {
            out.push(ShuffleWithReps { p: pos, sigma1: s1.clone(), sigma2: s2.clone() });
            return;
        }
        let next = pos + 1;
        if a < k {
            s1.push(next);
            rec(k, l, s1, s2, next, out);
            s1.pop();
        }
        if b < l {
            s2.push(next);
            rec(k, l, s1, s2, next, out);
            s2.pop();
        }
        if a < k && b < l {
            s1.push(next);
            s2.push(next);
            rec(k, l, s1, s2, next, out);
            s1.pop();
            s2.pop();
        }
    }
    rec(k, l, &mut vec![0], &mut vec![0], 0, &mut out);
    out
}

/// `N(k, l) = N(k-1, l) + N(k, l-1) + N(k-1, l-1)`, `N(k, 0) = N(0, l) = 1`.
pub fn shuffle_count(k: usize, l: usize) -> u64 {
    let mut t = vec![vec![1u64; l + 1]; k + 1];
    for a in 1..=k {
        for b in 1..=l {
            t[a][b] = t[a - 1][b] + t[a][b - 1] + t[a - 1][b - 1];
        }
    }
    t[k][l]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComposeCase {
    /// Both multiplicity one, both from data 1 or 2.
    A1(u8),
    /// Both multiplicity one, from different data.
    A2,
    /// Exactly one multiplicity two; the other comes from data 1 or 2.
    B(u8),
    /// Both multiplicity two.
    C,
}

pub fn classify(sigma: &ShuffleWithReps, j: usize, i: usize) -> Result<ComposeCase> {
    let in1 = |x| ShuffleWithReps::preimage(&sigma.sigma1, x).is_some();
    let in2 = |x| ShuffleWithReps::preimage(&sigma.sigma2, x).is_some();
    let (mj, mi) = (sigma.multiplicity(j), sigma.multiplicity(i));
    match (mj, mi) {
        (1, 1) => match (in1(j), in1(i)) {
            (true, true) => Ok(ComposeCase::A1(1)),
            (false, false) => Ok(ComposeCase::A1(2)),
            _ => Ok(ComposeCase::A2),
        },
        (2, 2) => Ok(ComposeCase::C),
        (2, 1) | (1, 2) => {
            let single = if mj == 1 { j } else { i };
            if in1(single) {
                Ok(ComposeCase::B(1))
            } else if in2(single) {
                Ok(ComposeCase::B(2))
            } else {
                Err(Error::Invalid(format!("index {single} is not covered")))
            }
        }
        _ => Err(Error::Invalid(format!("indices ({j}, {i}) are not covered"))),
    }
}

/// `E = C *_sigma D`, materialized up to the smaller cutoff.
pub fn compose_data(c: &CoefficientsData, d: &CoefficientsData, sigma: &ShuffleWithReps) -> Result<CoefficientsData> {
    if sigma.sigma1.len() != c.depth + 1 || sigma.sigma2.len() != d.depth + 1 {
        return Err(Error::Invalid("shuffle does not match the data depths".into()));
    }
    let cutoff = c.cutoff.min(d.cutoff);
    let mut e = CoefficientsData::ones(sigma.p, cutoff);
    let pre1 = |x| ShuffleWithReps::preimage(&sigma.sigma1, x);
    let pre2 = |x| ShuffleWithReps::preimage(&sigma.sigma2, x);
    for j in 1..=sigma.p {
        for i in 0..j {
            let case = classify(sigma, j, i)?;
            for n in 1..=cutoff {
                for m in 0..n {
                    let from1 = || c.get(pre1(j).unwrap(), pre1(i).unwrap(), n, m);
                    let from2 = || d.get(pre2(j).unwrap(), pre2(i).unwrap(), n, m);
                    let value = match case {
                        ComposeCase::A1(1) | ComposeCase::B(1) => from1()?,
                        ComposeCase::A1(_) | ComposeCase::B(_) => from2()?,
                        ComposeCase::A2 => C64::new(1.0, 0.0),
                        ComposeCase::C => from1()? * from2()?,
                    };
                    e.set(j, i, n, m, value)?;
                }
            }
        }
    }
    Ok(e)
}

/// `s +_sigma t`: collided slots add.
pub fn compose_args(s: &[C64], t: &[C64], sigma: &ShuffleWithReps) -> Result<Vec<C64>> {
    if s.len() + 1 != sigma.sigma1.len() || t.len() + 1 != sigma.sigma2.len() {
        return Err(Error::Invalid("argument lengths do not match the shuffle".into()));
    }
    (1..=sigma.p)
        .map(|x| {
            let a = ShuffleWithReps::preimage(&sigma.sigma1, x).map(|i| s[i - 1]);
            let b = ShuffleWithReps::preimage(&sigma.sigma2, x).map(|i| t[i - 1]);
            match (a, b) {
                (Some(a), Some(b)) => Ok(a + b),
                (Some(a), None) => Ok(a),
                (None, Some(b)) => Ok(b),
                (None, None) => Err(Error::Invalid(format!("slot {x} is not covered"))),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ProductCheck {
    pub lhs: C64,
    pub rhs: C64,
    /// `|lhs - rhs| / max(1, |lhs|)`.
    pub residual: f64,
    pub shuffles: usize,
}

/// Both sides of `L_C(s) L_D(t) = sum_sigma L_{C *_sigma D}(s +_sigma t)`.
pub fn theorem42_check(c: &CoefficientsData, d: &CoefficientsData, s: &[C64], t: &[C64]) -> Result<ProductCheck> {
    let lhs = c.l_value(s)? * d.l_value(t)?;
    let shuffles = enumerate_shuffles(c.depth, d.depth);
    let mut rhs = C64::new(0.0, 0.0);
    for sigma in &shuffles {
        rhs += compose_data(c, d, sigma)?.l_value(&compose_args(s, t, sigma)?)?;
    }
    Ok(ProductCheck { lhs, rhs, residual: (lhs - rhs).norm() / lhs.norm().max(1.0), shuffles: shuffles.len() })
}

pub fn rational_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else if r.is_negative() {
        format!("-{}/{}", r.numer().abs(), r.denom())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

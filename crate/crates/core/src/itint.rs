//! Total iterated integrals `J` of `Omega = sum_v A_v omega_v` along paths.
//!
//! Two independent engines: RK4 transport of `dJ = Omega J` on dense word
//! vectors, and nested Gauss-Legendre quadrature of individual iterated
//! integrals. In a word `A_{v1}...A_{vn}` the form `omega_{v1}` is outermost.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::modforms::{gamma_matrix, FormOfModularType, GL2Z};
use crate::ncseries::{Alphabet, LetterId, LetterMap, NcSeries, Word, C64};
use crate::paths::{PathSpec, Segment};

pub const DEFAULT_STEPS_PER_UNIT: f64 = 400.0;
pub const DEFAULT_NODES: usize = 48;

/// Holomorphic (or meromorphic) 1-form, stored as its `dz` coefficient.
#[derive(Clone, Debug, PartialEq)]
pub enum Form {
    Modular(FormOfModularType),
    /// `coef dz / (z - at)`
    Pole {
        at: C64,
        coef: C64,
    },
    /// `sum_k c_k z^k dz`
    Poly(Vec<C64>),
    Sum(Vec<Form>),
}

impl Form {
    pub fn eval(&self, z: C64) -> C64 {
        match self {
            Form::Modular(m) => m.density(z),
            Form::Pole { at, coef } => coef / (z - at),
            Form::Poly(c) => c.iter().rev().fold(C64::new(0.0, 0.0), |acc, x| acc * z + x),
            Form::Sum(parts) => parts.iter().map(|p| p.eval(z)).sum(),
        }
    }

    fn max_period(&self) -> u64 {
        match self {
            Form::Modular(m) => m.form.period,
            Form::Sum(parts) => parts.iter().map(Form::max_period).max().unwrap_or(1),
            _ => 1,
        }
    }

    /// Bound on `int_H^inf |omega(x + i y)| dy` for cusp-decaying forms.
    fn ray_tail(&self, x: f64, height: f64) -> f64 {
        match self {
            Form::Modular(m) => {
                let f = &m.form;
                let period = f.period as f64;
                let b =
                    f.coeffs.iter().enumerate().map(|(i, c)| c.norm() * (-2.0 * PI * (i + 1) as f64 * height / period).exp()).sum::<f64>()
                        * f.prefactor.norm()
                        + f.tail_bound(height);
                let p = m.s.re - 1.0;
                let rate = 2.0 * PI / period;
                let scale = m.scale.norm() * (PI * m.s.im.abs()).exp();
                if p >= 0.0 {
                    let r = x.abs() + height;
                    let denom = rate - p / r;
                    if denom <= 0.0 {
                        f64::INFINITY
                    } else {
                        scale * b * r.powf(p) / denom
                    }
                } else {
                    scale * b * height.powf(p) / rate
                }
            }
            Form::Sum(parts) => parts.iter().map(|p| p.ray_tail(x, height)).sum(),
            _ => f64::INFINITY,
        }
    }
}

/// `Omega = sum_v A_v omega_v`, linear in the letters.
#[derive(Clone, Debug)]
pub struct OmegaFamily {
    pub alphabet: Arc<Alphabet>,
    pub forms: Vec<Form>,
}

impl OmegaFamily {
    pub fn new(alphabet: Arc<Alphabet>, forms: Vec<Form>) -> Result<Self> {
        if forms.len() != alphabet.len() {
            return Err(Error::Dimension { expected: alphabet.len(), got: forms.len() });
        }
        Ok(OmegaFamily { alphabet, forms })
    }

    /// Family of forms of modular type sharing one level.
    pub fn modular(labels: &[&str], forms: Vec<FormOfModularType>) -> Result<Self> {
        if let Some(first) = forms.first() {
            if forms.iter().any(|f| f.form.level != first.form.level) {
                return Err(Error::Invalid("forms in a family must share the level".into()));
            }
        }
        let alphabet = Arc::new(Alphabet::new(labels.iter().copied())?);
        OmegaFamily::new(alphabet, forms.into_iter().map(Form::Modular).collect())
    }

    pub fn modular_form(&self, v: LetterId) -> Option<&FormOfModularType> {
        match &self.forms[v as usize] {
            Form::Modular(m) => Some(m),
            _ => None,
        }
    }

    /// Start height for rays to `i inf`: `t` times the largest period.
    pub fn ray_height(&self, t: f64) -> f64 {
        t * self.forms.iter().map(Form::max_period).max().unwrap_or(1) as f64
    }

    /// Bound on the neglected part of every first-order coefficient when a ray
    /// to `i inf` at real part `x` is cut at `height`.
    pub fn tail_bound(&self, x: f64, height: f64) -> f64 {
        self.forms.iter().map(|f| f.ray_tail(x, height)).fold(0.0, f64::max)
    }

    /// The letter map `g` with `gamma^* Omega = g_*(Omega)`, so that
    /// `J_{gamma a}^{gamma z} = g_*(J_a^z)`. All letters must be
    /// `scale * f z^{s-1} dz` for one `f`, and `chi` is the automorphy factor
    /// of `f` under `gamma`.
    pub fn letter_map(&self, gamma: &GL2Z, chi: C64) -> Result<LetterMap> {
        let mods: Vec<&FormOfModularType> = (0..self.forms.len() as LetterId)
            .map(|v| self.modular_form(v).ok_or_else(|| Error::NotStable("non-modular letter".into())))
            .collect::<Result<_>>()?;
        let Some(first) = mods.first() else {
            return Ok(LetterMap::identity(0));
        };
        let weight = first.form.weight;
        let mut svals = Vec::with_capacity(mods.len());
        for m in &mods {
            if !Arc::ptr_eq(&m.form, &first.form) && *m.form != *first.form {
                return Err(Error::NotStable("letters use different q-expansions".into()));
            }
            match m.integer_s() {
                Some(s) if s >= 1 && s < weight as i64 => svals.push(s as usize),
                _ => return Err(Error::NotStable(format!("Mellin argument {} outside 1..{}", m.s, weight - 1))),
            }
        }
        let mm = gamma_matrix(weight, gamma, chi);
        let n = mods.len();
        let mut g = vec![vec![C64::new(0.0, 0.0); n]; n];
        for (v, &sv) in svals.iter().enumerate() {
            // gamma^* omega_v = scale_v sum_t M[t][s_v] f z^{t-1} dz
            for t in 1..weight as usize {
                let entry = mm[t - 1][sv - 1];
                if entry.norm() == 0.0 {
                    continue;
                }
                match svals.iter().position(|&su| su == t) {
                    Some(u) => g[v][u] = mods[v].scale / mods[u].scale * entry,
                    None => {
                        return Err(Error::NotStable(format!("pullback of s = {sv} involves s = {t}")));
                    }
                }
            }
        }
        LetterMap::new(g)
    }
}

/// `Omega = sum_W A_W omega_W` over nonempty words.
#[derive(Clone, Debug)]
pub struct NonlinearOmega {
    pub alphabet: Arc<Alphabet>,
    pub terms: Vec<(Word, Form)>,
}

impl NonlinearOmega {
    pub fn new(alphabet: Arc<Alphabet>, terms: Vec<(Word, Form)>) -> Result<Self> {
        for (i, (w, _)) in terms.iter().enumerate() {
            if w.is_empty() {
                return Err(Error::Invalid("nonlinear Omega has no constant term".into()));
            }
            if w.iter().any(|&l| l as usize >= alphabet.len()) {
                return Err(Error::Invalid(format!("word {w:?} uses an unknown letter")));
            }
            if terms[..i].iter().any(|(u, _)| u == w) {
                return Err(Error::Invalid(format!("word {w:?} appears twice")));
            }
        }
        Ok(NonlinearOmega { alphabet, terms })
    }
}

/// Anything that can drive `dJ = Omega J`.
pub trait Connection {
    fn alphabet(&self) -> &Arc<Alphabet>;
    fn word_terms(&self) -> Vec<(Word, &Form)>;
}

impl Connection for OmegaFamily {
    fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }
    fn word_terms(&self) -> Vec<(Word, &Form)> {
        self.forms.iter().enumerate().map(|(v, f)| (vec![v as LetterId], f)).collect()
    }
}

impl Connection for NonlinearOmega {
    fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }
    fn word_terms(&self) -> Vec<(Word, &Form)> {
        self.terms.iter().map(|(w, f)| (w.clone(), f)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineOptions {
    pub steps_per_unit: f64,
    pub min_steps: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { steps_per_unit: DEFAULT_STEPS_PER_UNIT, min_steps: 16 }
    }
}

impl EngineOptions {
    pub fn with_steps(steps_per_unit: f64) -> Self {
        EngineOptions { steps_per_unit, ..Default::default() }
    }

    fn doubled(&self) -> Self {
        EngineOptions { steps_per_unit: 2.0 * self.steps_per_unit, min_steps: 2 * self.min_steps }
    }
}

/// Dense indexing of words of length `<= depth`: by length, then base-`n`.
struct WordIndex {
    n: usize,
    offsets: Vec<usize>,
}

impl WordIndex {
    fn new(n: usize, depth: usize) -> Self {
        let mut offsets = vec![0usize];
        let mut count = 1usize;
        for _ in 0..=depth {
            offsets.push(offsets.last().unwrap() + count);
            count *= n;
        }
        WordIndex { n, offsets }
    }

    fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn value(&self, w: &[LetterId]) -> usize {
        w.iter().fold(0, |acc, &l| acc * self.n + l as usize)
    }

    #[cfg(test)]
    fn index(&self, w: &[LetterId]) -> usize {
        self.offsets[w.len()] + self.value(w)
    }

    fn word(&self, i: usize) -> Word {
        let len = self.offsets.iter().rposition(|&o| o <= i).unwrap();
        let mut v = i - self.offsets[len];
        let mut w = vec![0; len];
        for slot in w.iter_mut().rev() {
            *slot = (v % self.n) as LetterId;
            v /= self.n;
        }
        w
    }
}

struct Transport<'a> {
    forms: Vec<&'a Form>,
    /// `(term, src, dst)`: `out[dst] += phi_term * y[src]`.
    links: Vec<(usize, usize, usize)>,
    index: WordIndex,
}

impl<'a> Transport<'a> {
    fn new<C: Connection + ?Sized>(omega: &'a C, depth: usize) -> Self {
        let n = omega.alphabet().len();
        let index = WordIndex::new(n, depth);
        let terms = omega.word_terms();
        let mut links = Vec::new();
        let mut forms = Vec::with_capacity(terms.len());
        for (t, (w, f)) in terms.into_iter().enumerate() {
            forms.push(f);
            if w.len() > depth {
                continue;
            }
            let rest = depth - w.len();
            let wv = index.value(&w);
            for src in 0..index.offsets[rest + 1] {
                let len = index.offsets.iter().rposition(|&o| o <= src).unwrap();
                let sv = src - index.offsets[len];
                let dst = index.offsets[w.len() + len] + wv * n.pow(len as u32) + sv;
                links.push((t, src, dst));
            }
        }
        Transport { forms, links, index }
    }

    fn coefficients(&self, seg: &Segment, u: f64, out: &mut [C64]) {
        let z = seg.point(u);
        let dz = seg.deriv(u);
        for (o, f) in out.iter_mut().zip(&self.forms) {
            *o = f.eval(z) * dz;
        }
    }

    fn apply(&self, phi: &[C64], y: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        for &(t, s, d) in &self.links {
            out[d] += phi[t] * y[s];
        }
    }

    fn run(&self, path: &PathSpec, opts: &EngineOptions) -> Vec<C64> {
        let total = self.index.total();
        let mut y = vec![C64::new(0.0, 0.0); total];
        y[0] = C64::new(1.0, 0.0);
        let nf = self.forms.len();
        let (mut p0, mut pm, mut p1) = (vec![C64::new(0.0, 0.0); nf], vec![C64::new(0.0, 0.0); nf], vec![C64::new(0.0, 0.0); nf]);
        let mut ks: Vec<Vec<C64>> = (0..4).map(|_| vec![C64::new(0.0, 0.0); total]).collect();
        let mut tmp = vec![C64::new(0.0, 0.0); total];
        for seg in &path.segments {
            let steps = ((opts.steps_per_unit * seg.step_length()).ceil() as usize).max(opts.min_steps);
            let (u0, u1) = seg.u_range();
            let h = (u1 - u0) / steps as f64;
            self.coefficients(seg, u0, &mut p0);
            for i in 0..steps {
                let u = u0 + h * i as f64;
                let un = if i + 1 == steps { u1 } else { u0 + h * (i + 1) as f64 };
                self.coefficients(seg, 0.5 * (u + un), &mut pm);
                self.coefficients(seg, un, &mut p1);
                let (k1, rest) = ks.split_at_mut(1);
                let (k2, rest) = rest.split_at_mut(1);
                let (k3, k4) = rest.split_at_mut(1);
                let (k1, k2, k3, k4) = (&mut k1[0], &mut k2[0], &mut k3[0], &mut k4[0]);
                self.apply(&p0, &y, k1);
                for j in 0..total {
                    tmp[j] = y[j] + k1[j] * (0.5 * h);
                }
                self.apply(&pm, &tmp, k2);
                for j in 0..total {
                    tmp[j] = y[j] + k2[j] * (0.5 * h);
                }
                self.apply(&pm, &tmp, k3);
                for j in 0..total {
                    tmp[j] = y[j] + k3[j] * h;
                }
                self.apply(&p1, &tmp, k4);
                for j in 0..total {
                    y[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
                }
                std::mem::swap(&mut p0, &mut p1);
            }
        }
        y
    }

    fn to_series(&self, alphabet: &Arc<Alphabet>, depth: usize, y: &[C64]) -> NcSeries {
        let mut s = NcSeries::zero(alphabet.clone(), depth);
        for (i, c) in y.iter().enumerate() {
            if c.norm() != 0.0 {
                s.set(self.index.word(i), *c);
            }
        }
        s.set(Vec::new(), C64::new(1.0, 0.0));
        s
    }
}

/// `J` along `path` (from `path.from` to `path.to`) truncated at `depth`.
pub fn total_j<C: Connection + ?Sized>(omega: &C, path: &PathSpec, depth: usize, opts: &EngineOptions) -> Result<NcSeries> {
    let tr = Transport::new(omega, depth);
    let y = tr.run(path, opts);
    Ok(tr.to_series(omega.alphabet(), depth, &y))
}

/// `J` at doubled step count, with the coefficientwise change from the base
/// step count as the error estimate.
pub fn total_j_with_error<C: Connection + ?Sized>(
    omega: &C,
    path: &PathSpec,
    depth: usize,
    opts: &EngineOptions,
) -> Result<(NcSeries, f64)> {
    let tr = Transport::new(omega, depth);
    let coarse = tr.run(path, opts);
    let fine = tr.run(path, &opts.doubled());
    let err = coarse.iter().zip(&fine).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok((tr.to_series(omega.alphabet(), depth, &fine), err))
}

/// Like [`total_j_with_error`] but fails when the refinement change exceeds `tol`.
pub fn total_j_checked<C: Connection + ?Sized>(
    omega: &C,
    path: &PathSpec,
    depth: usize,
    opts: &EngineOptions,
    tol: f64,
) -> Result<NcSeries> {
    let (j, err) = total_j_with_error(omega, path, depth, opts)?;
    if err > tol {
        return Err(Error::StepsTooFew(err, tol));
    }
    Ok(j)
}

#[derive(Clone, Debug)]
pub struct QuadOptions {
    pub nodes: usize,
    pub max_depth: usize,
    /// Longest piece (in step-length units) integrated by one rule.
    pub max_piece: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { nodes: DEFAULT_NODES, max_depth: 4, max_piece: 0.5 }
    }
}

fn rule(nodes: usize) -> Result<Vec<(f64, f64)>> {
    let n = NonZeroUsize::new(nodes).ok_or_else(|| Error::Invalid("quadrature needs at least one node".into()))?;
    Ok(GaussLegendre::new(n).as_node_weight_pairs().to_vec())
}

fn pieces(path: &PathSpec, max_piece: f64) -> Vec<Segment> {
    path.segments
        .iter()
        .flat_map(|s| {
            let n = (s.step_length() / max_piece).ceil().max(1.0);
            let (u0, u1) = s.u_range();
            s.split((u1 - u0).abs() / n * (1.0 + 1e-12))
        })
        .collect()
}

/// `S[i][j] = int_{-1}^{x_i} l_j(x) dx` for the Lagrange basis `l_j` on the
/// Gauss nodes, from `l_j = w_j sum_m (m + 1/2) P_m(x_j) P_m` and
/// `int_{-1}^x P_m = (P_{m+1} - P_{m-1}) / (2m + 1)`.
fn integration_matrix(gl: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let n = gl.len();
    let legendre = |x: f64| -> Vec<f64> {
        let mut p = vec![1.0, x];
        for m in 1..n {
            p.push(((2 * m + 1) as f64 * x * p[m] - m as f64 * p[m - 1]) / (m + 1) as f64);
        }
        p
    };
    let at_nodes: Vec<Vec<f64>> = gl.iter().map(|&(x, _)| legendre(x)).collect();
    let mut s = vec![vec![0.0; n]; n];
    for (i, pi) in at_nodes.iter().enumerate() {
        for (j, pj) in at_nodes.iter().enumerate() {
            let mut acc = 0.5 * (gl[i].0 + 1.0);
            for m in 1..n {
                acc += 0.5 * pj[m] * (pi[m + 1] - pi[m - 1]);
            }
            s[i][j] = gl[j].1 * acc;
        }
    }
    s
}

/// The iterated integral `I(forms)` along `path`; `forms[0]` is outermost.
/// On each piece every subword is integrated by Gauss-Legendre collocation:
/// inner integrals are carried at the nodes through the integration matrix.
pub fn nested_integral(forms: &[&Form], path: &PathSpec, q: &QuadOptions) -> Result<C64> {
    let k = forms.len();
    if k > q.max_depth {
        return Err(Error::DepthTooLarge { depth: k, max: q.max_depth });
    }
    let gl = rule(q.nodes)?;
    let smat = integration_matrix(&gl);
    let zero = C64::new(0.0, 0.0);
    // T[i][j] = I(forms[i..j]) accumulated over pieces; later pieces multiply on the left
    let mut total = vec![vec![zero; k + 1]; k + 1];
    for (i, row) in total.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    for seg in pieces(path, q.max_piece) {
        let (u0, u1) = seg.u_range();
        let (half, mid) = (0.5 * (u1 - u0), 0.5 * (u1 + u0));
        let g: Vec<Vec<C64>> = forms
            .iter()
            .map(|f| {
                gl.iter()
                    .map(|&(x, _)| {
                        let u = mid + half * x;
                        f.eval(seg.point(u)) * seg.deriv(u) * half
                    })
                    .collect()
            })
            .collect();
        let mut t = vec![vec![zero; k + 1]; k + 1];
        for j in 0..=k {
            t[j][j] = C64::new(1.0, 0.0);
            // inner[x] = I(forms[m+1..j]) from u0 to node x
            let mut inner = vec![C64::new(1.0, 0.0); gl.len()];
            for m in (0..j).rev() {
                let h: Vec<C64> = g[m].iter().zip(&inner).map(|(a, b)| a * b).collect();
                t[m][j] = h.iter().zip(&gl).map(|(v, &(_, w))| v * w).sum();
                if m > 0 {
                    inner = smat.iter().map(|row| row.iter().zip(&h).map(|(s, v)| v * *s).sum()).collect();
                }
            }
        }
        let mut next = vec![vec![zero; k + 1]; k + 1];
        for i in 0..=k {
            for j in i..=k {
                next[i][j] = (i..=j).map(|m| t[i][m] * total[m][j]).sum();
            }
        }
        total = next;
    }
    Ok(total[0][k])
}

/// `J` computed word by word with [`nested_integral`].
pub fn total_j_quadrature(family: &OmegaFamily, path: &PathSpec, depth: usize, q: &QuadOptions) -> Result<NcSeries> {
    let mut s = NcSeries::one(family.alphabet.clone(), depth);
    for w in family.alphabet.words(depth).into_iter().skip(1) {
        let forms: Vec<&Form> = w.iter().map(|&v| &family.forms[v as usize]).collect();
        let c = nested_integral(&forms, path, q)?;
        s.set(w, c);
    }
    Ok(s)
}

/// Multiple lower limits: the coefficient of `A_{v1}...A_{vn}` is
/// `int_{a(1,v1)}^{z} omega_{v1}(z1) int_{a(2,v2)}^{z1} omega_{v2}(z2) ...`,
/// each level along a straight line.
pub fn total_j_multi_lower(
    family: &OmegaFamily,
    lower: &dyn Fn(usize, LetterId) -> C64,
    z: C64,
    depth: usize,
    q: &QuadOptions,
) -> Result<NcSeries> {
    if depth > 3 {
        return Err(Error::DepthTooLarge { depth, max: 3 });
    }
    let gl = rule(q.nodes)?;
    fn level(
        family: &OmegaFamily,
        lower: &dyn Fn(usize, LetterId) -> C64,
        w: &[LetterId],
        pos: usize,
        upper: C64,
        gl: &[(f64, f64)],
    ) -> C64 {
        if pos == w.len() {
            return C64::new(1.0, 0.0);
        }
        let a = lower(pos + 1, w[pos]);
        let d = upper - a;
        let form = &family.forms[w[pos] as usize];
        gl.iter()
            .map(|&(x, wt)| {
                let p = a + d * (0.5 * (x + 1.0));
                form.eval(p) * d * level(family, lower, w, pos + 1, p, gl) * (0.5 * wt)
            })
            .sum()
    }
    let mut s = NcSeries::one(family.alphabet.clone(), depth);
    for w in family.alphabet.words(depth).into_iter().skip(1) {
        let c = level(family, lower, &w, 0, z, &gl);
        s.set(w, c);
    }
    Ok(s)
}

/// `max |J^{a1}_{a2} J^{a2}_{a3} ... J^{an}_{a1} - 1|` over straight edges.
pub fn cycle_check<C: Connection + ?Sized>(omega: &C, points: &[C64], depth: usize, opts: &EngineOptions) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Invalid("a contour needs at least two points".into()));
    }
    let n = points.len();
    let mut prod = NcSeries::one(omega.alphabet().clone(), depth);
    for i in 0..n {
        // J^{a_i}_{a_{i+1}} runs from a_{i+1} to a_i
        let path = PathSpec::polyline(&[points[(i + 1) % n], points[i]])?;
        prod = prod.mul(&total_j(omega, &path, depth, opts)?)?;
    }
    Ok(prod.distance_from_one())
}

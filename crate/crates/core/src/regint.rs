//! Regularized iterated integrals for forms with simple poles: horizontal
//! sections normalized at a logarithmic singularity, scattering operators
//! between two such points, and the KZ associator.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ncseries::{Alphabet, LetterId, NcSeries, Word, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// `sum_j c_j dz / (z - p_j)` with distinct finite poles.
#[derive(Clone, Debug, PartialEq)]
pub struct LogForm {
    pub poles: Vec<(C64, C64)>,
}

impl LogForm {
    pub fn eval(&self, z: C64) -> C64 {
        self.poles.iter().map(|(p, c)| c / (z - p)).sum()
    }

    pub fn residue(&self, a: C64) -> C64 {
        self.poles.iter().filter(|(p, _)| (p - a).norm() < 1e-12).map(|(_, c)| *c).sum()
    }

    /// Residue at infinity, `-sum_j c_j`.
    pub fn residue_at_infinity(&self) -> C64 {
        -self.poles.iter().map(|(_, c)| *c).sum::<C64>()
    }
}

#[derive(Clone, Debug)]
pub struct LogFormFamily {
    pub alphabet: Arc<Alphabet>,
    pub forms: Vec<LogForm>,
}

impl LogFormFamily {
    pub fn new(alphabet: Arc<Alphabet>, forms: Vec<LogForm>) -> Result<Self> {
        if forms.len() != alphabet.len() {
            return Err(Error::Dimension { expected: alphabet.len(), got: forms.len() });
        }
        Ok(LogFormFamily { alphabet, forms })
    }

    /// `omega_0 = dz / (2 pi i z)`, `omega_1 = dz / (2 pi i (z - 1))`.
    pub fn kz() -> Self {
        let k = C64::new(0.0, 2.0 * PI).inv();
        let alphabet = Arc::new(Alphabet::new(["A0", "A1"]).expect("two distinct labels"));
        LogFormFamily { alphabet, forms: vec![LogForm { poles: vec![(ZERO, k)] }, LogForm { poles: vec![(C64::new(1.0, 0.0), k)] }] }
    }

    pub fn singular_points(&self) -> Vec<C64> {
        let mut out: Vec<C64> = Vec::new();
        for f in &self.forms {
            for (p, _) in &f.poles {
                if !out.iter().any(|q| (q - p).norm() < 1e-12) {
                    out.push(*p);
                }
            }
        }
        out
    }

    pub fn residues(&self, a: C64) -> Vec<C64> {
        self.forms.iter().map(|f| f.residue(a)).collect()
    }

    /// `R_a = sum_v r_{v,a} A_v`.
    pub fn residue_series(&self, a: C64, depth: usize) -> NcSeries {
        let mut out = NcSeries::zero(self.alphabet.clone(), depth);
        for (v, r) in self.residues(a).into_iter().enumerate() {
            if r != ZERO && depth >= 1 {
                out.set(vec![v as LetterId], r);
            }
        }
        out
    }

    /// Distance from `a` to the nearest other pole.
    pub fn regular_radius(&self, a: C64) -> f64 {
        self.singular_points().into_iter().map(|p| (p - a).norm()).filter(|d| *d > 1e-12).fold(f64::INFINITY, f64::min)
    }
}

/// Affine local parameter `t = alpha (z - a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalParam {
    pub a: C64,
    pub alpha: C64,
}

impl LocalParam {
    pub fn new(a: C64, alpha: C64) -> Result<Self> {
        if alpha.norm() == 0.0 {
            return Err(Error::Invalid("local parameter needs a nonzero scale".into()));
        }
        Ok(LocalParam { a, alpha })
    }

    /// `t = z - a`.
    pub fn standard(a: C64) -> Self {
        LocalParam { a, alpha: C64::new(1.0, 0.0) }
    }

    pub fn t(&self, z: C64) -> C64 {
        self.alpha * (z - self.a)
    }

    pub fn z(&self, t: C64) -> C64 {
        self.a + t / self.alpha
    }
}

/// Dense word table: all words up to `depth`, with the indices of `w` minus
/// its first letter and minus its last letter.
#[derive(Clone, Debug)]
struct WordTable {
    words: Vec<Word>,
    tail: Vec<usize>,
    init: Vec<usize>,
    /// `left[v][i]`: index of `A_v w_i`, if short enough.
    left: Vec<Vec<Option<usize>>>,
}

impl WordTable {
    fn new(alphabet: &Alphabet, depth: usize) -> Self {
        let words = alphabet.words(depth);
        let index: HashMap<Word, usize> = words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        let tail = words.iter().map(|w| if w.is_empty() { 0 } else { index[&w[1..]] }).collect();
        let init = words.iter().map(|w| if w.is_empty() { 0 } else { index[&w[..w.len() - 1]] }).collect();
        let left = (0..alphabet.len())
            .map(|v| {
                words
                    .iter()
                    .map(|w| {
                        let mut x = vec![v as LetterId];
                        x.extend_from_slice(w);
                        index.get(&x).copied()
                    })
                    .collect()
            })
            .collect();
        WordTable { words, tail, init, left }
    }
}

/// `J_a = K t_a^{R_a}` with `K` a power series in `t_a` to order `order`.
#[derive(Clone, Debug)]
pub struct NormalizedSection {
    pub param: LocalParam,
    pub order: usize,
    pub depth: usize,
    pub alphabet: Arc<Alphabet>,
    pub residues: Vec<C64>,
    /// Radius of convergence in `t`.
    pub radius: f64,
    table: WordTable,
    /// `coeffs[i][k]`: coefficient of `t^k` in `f_{w_i}`.
    coeffs: Vec<Vec<C64>>,
}

fn poly_mul_trunc(a: &[C64], b: &[C64], order: usize) -> Vec<C64> {
    let mut out = vec![ZERO; order + 1];
    for (i, x) in a.iter().enumerate() {
        if *x == ZERO {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(order + 1 - i) {
            out[i + j] += x * y;
        }
    }
    out
}

fn horner(c: &[C64], t: C64) -> C64 {
    c.iter().rev().fold(ZERO, |acc, x| acc * t + x)
}

/// Regular part `nu_v / dt` of each form at `a` in the parameter `t`, and the residues.
fn local_expansion(family: &LogFormFamily, param: &LocalParam, order: usize) -> (Vec<Vec<C64>>, Vec<C64>) {
    let mut nus = Vec::new();
    let mut res = Vec::new();
    for f in &family.forms {
        let mut nu = vec![ZERO; order + 1];
        let mut r = ZERO;
        for (p, c) in &f.poles {
            if (p - param.a).norm() < 1e-12 {
                r += c;
                continue;
            }
            // c dz / (z - p) = c dt / (d + t), d = alpha (a - p)
            let d = param.alpha * (param.a - p);
            let mut term = c / d;
            for slot in nu.iter_mut() {
                *slot += term;
                term *= -1.0 / d;
            }
        }
        nus.push(nu);
        res.push(r);
    }
    (nus, res)
}

impl NormalizedSection {
    /// Word-by-word solve of `dK = Omega' K + t^{-1} [R, K] dt`:
    /// `df_{v w} = nu_v f_w + t^{-1} (r_v f_{w} - f_{v w'} r_{last}) dt` with
    /// `v w = v w' last`.
    pub fn new(family: &LogFormFamily, param: LocalParam, order: usize, depth: usize) -> Result<Self> {
        let (nus, residues) = local_expansion(family, &param, order);
        let table = WordTable::new(&family.alphabet, depth);
        let mut coeffs: Vec<Vec<C64>> = Vec::with_capacity(table.words.len());
        let mut one = vec![ZERO; order + 1];
        one[0] = C64::new(1.0, 0.0);
        coeffs.push(one);
        for i in 1..table.words.len() {
            let w = &table.words[i];
            let (first, last) = (w[0] as usize, w[w.len() - 1] as usize);
            let fw = &coeffs[table.tail[i]];
            let fi = &coeffs[table.init[i]];
            let mut g = poly_mul_trunc(&nus[first], fw, order);
            let bracket: Vec<C64> = fw.iter().zip(fi).map(|(a, b)| residues[first] * a - b * residues[last]).collect();
            if bracket[0].norm() > 1e-12 * (1.0 + residues[first].norm() + residues[last].norm()) {
                return Err(Error::Invalid(format!("non-integrable t^-1 term for word {w:?}")));
            }
            for k in 0..order {
                g[k] += bracket[k + 1];
            }
            let mut f = vec![ZERO; order + 1];
            for k in 0..order {
                f[k + 1] = g[k] / (k + 1) as f64;
            }
            coeffs.push(f);
        }
        let radius = family.regular_radius(param.a) * param.alpha.norm();
        Ok(NormalizedSection { param, order, depth, alphabet: family.alphabet.clone(), residues, radius, table, coeffs })
    }

    fn series_from(&self, values: impl Iterator<Item = C64>) -> NcSeries {
        let mut out = NcSeries::zero(self.alphabet.clone(), self.depth);
        for (w, c) in self.table.words.iter().zip(values) {
            if c != ZERO {
                out.set(w.clone(), c);
            }
        }
        out
    }

    pub fn word_coeffs(&self, w: &[LetterId]) -> Option<&[C64]> {
        self.table.words.iter().position(|x| x == w).map(|i| self.coeffs[i].as_slice())
    }

    pub fn k_at(&self, z: C64) -> NcSeries {
        let t = self.param.t(z);
        self.series_from(self.coeffs.iter().map(|c| horner(c, t)))
    }

    /// `dK/dt` at `z`.
    pub fn dk_dt(&self, z: C64) -> NcSeries {
        let t = self.param.t(z);
        self.series_from(self.coeffs.iter().map(|c| c.iter().enumerate().skip(1).rev().fold(ZERO, |acc, (k, x)| acc * t + x * k as f64)))
    }

    pub fn residue_series(&self) -> NcSeries {
        let mut out = NcSeries::zero(self.alphabet.clone(), self.depth);
        for (v, r) in self.residues.iter().enumerate() {
            if *r != ZERO && self.depth >= 1 {
                out.set(vec![v as LetterId], *r);
            }
        }
        out
    }

    /// `t^R = exp(R log t)`, principal branch.
    pub fn t_pow_r(&self, z: C64) -> Result<NcSeries> {
        if self.residues.iter().all(|r| *r == ZERO) {
            return Ok(NcSeries::one(self.alphabet.clone(), self.depth));
        }
        let t = self.param.t(z);
        if t.im == 0.0 && t.re <= 0.0 {
            return Err(Error::Invalid(format!("{z} lies on the cut of log t")));
        }
        self.residue_series().scale(t.ln()).exp()
    }

    pub fn eval(&self, z: C64) -> Result<NcSeries> {
        self.k_at(z).mul(&self.t_pow_r(z)?)
    }

    /// Estimated truncation error of `K` at `z`, from the decay of the top coefficients.
    pub fn tail_bound(&self, z: C64) -> f64 {
        let q = self.param.t(z).norm() / self.radius;
        if q >= 1.0 {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for c in &self.coeffs {
            let scale = (self.order / 2..=self.order).map(|k| c[k].norm() * self.radius.powi(k as i32)).fold(0.0, f64::max);
            worst = worst.max(scale * q.powi(self.order as i32 + 1) / (1.0 - q));
        }
        worst
    }

    /// Max coefficient of `dK/dt - Omega'/dt K - t^{-1}[R, K]` at `z`.
    pub fn ode_residual(&self, family: &LogFormFamily, z: C64) -> Result<f64> {
        let t = self.param.t(z);
        let k = self.k_at(z);
        let r = self.residue_series();
        // Omega' / dt = (Omega - R dt / t) / dt, with dz = dt / alpha
        let mut omega_p = NcSeries::zero(self.alphabet.clone(), self.depth);
        for (v, f) in family.forms.iter().enumerate() {
            let c = f.eval(z) / self.param.alpha - self.residues[v] / t;
            omega_p.set(vec![v as LetterId], c);
        }
        let rhs = omega_p.mul(&k)?.add(&r.mul(&k)?.sub(&k.mul(&r)?)?.scale(t.inv()))?;
        Ok(self.dk_dt(z).max_abs_diff(&rhs))
    }
}

/// `J~ = J_a^{-1} J_b` evaluated at a common point.
#[derive(Clone, Debug)]
pub struct ScatteringOp {
    pub series: NcSeries,
    pub a: LocalParam,
    pub b: LocalParam,
    pub eval_point: C64,
    /// Sum of the truncation estimates of both sections at the evaluation point.
    pub tail_bound: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SeriesOptions {
    pub order: usize,
    /// Evaluation points must satisfy `|t| <= max_ratio * radius` for both sections.
    pub max_ratio: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions { order: 96, max_ratio: 0.75 }
    }
}

pub fn scattering_between(sa: &NormalizedSection, sb: &NormalizedSection, z: C64, opts: &SeriesOptions) -> Result<ScatteringOp> {
    for s in [sa, sb] {
        if s.param.t(z).norm() > opts.max_ratio * s.radius {
            return Err(Error::NoCommonPoint(format!("{z} is outside the convergence disc at {}", s.param.a)));
        }
    }
    let series = sa.eval(z)?.inverse()?.mul(&sb.eval(z)?)?;
    Ok(ScatteringOp { series, a: sa.param, b: sb.param, eval_point: z, tail_bound: sa.tail_bound(z) + sb.tail_bound(z) })
}

/// Scattering operator with both sections built here, evaluated at `z`
/// (default: the midpoint of `a` and `b`).
pub fn scattering(
    family: &LogFormFamily,
    a: LocalParam,
    b: LocalParam,
    depth: usize,
    z: Option<C64>,
    opts: &SeriesOptions,
) -> Result<ScatteringOp> {
    let sa = NormalizedSection::new(family, a, opts.order, depth)?;
    let sb = NormalizedSection::new(family, b, opts.order, depth)?;
    scattering_between(&sa, &sb, z.unwrap_or((a.a + b.a) * 0.5), opts)
}

/// `tau_a^{-R_a} J~ tau_b^{R_b}`.
pub fn reparam(j: &NcSeries, tau_a: C64, tau_b: C64, r_a: &NcSeries, r_b: &NcSeries) -> Result<NcSeries> {
    let left = r_a.scale(-tau_a.ln()).exp()?;
    let right = r_b.scale(tau_b.ln()).exp()?;
    left.mul(j)?.mul(&right)
}

/// Product of the scattering operators around a closed contour of regular
/// points, each evaluated at the midpoint of its side, minus 1.
pub fn cycle_check_regular(family: &LogFormFamily, points: &[C64], depth: usize, opts: &SeriesOptions) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Invalid("a cycle needs at least two points".into()));
    }
    let sections =
        points.iter().map(|&p| NormalizedSection::new(family, LocalParam::standard(p), opts.order, depth)).collect::<Result<Vec<_>>>()?;
    let n = points.len();
    let mut prod = NcSeries::one(family.alphabet.clone(), depth);
    for i in 0..n {
        let j = (i + 1) % n;
        let s = scattering_between(&sections[i], &sections[j], (points[i] + points[j]) * 0.5, opts)?;
        prod = prod.mul(&s.series)?;
    }
    Ok(prod.distance_from_one())
}

/// Dense RK4 transport of `dT/ds = Omega(s) T`, where `coef(s)` gives the
/// coefficient of each letter.
fn transport(
    table: &WordTable,
    letters: usize,
    mut t: Vec<C64>,
    s0: f64,
    s1: f64,
    steps: usize,
    coef: impl Fn(f64) -> Vec<C64>,
) -> Vec<C64> {
    let h = (s1 - s0) / steps as f64;
    let deriv = |s: f64, y: &[C64]| -> Vec<C64> {
        let c = coef(s);
        let mut out = vec![ZERO; y.len()];
        for v in 0..letters {
            for (i, yi) in y.iter().enumerate() {
                if let Some(k) = table.left[v][i] {
                    out[k] += c[v] * yi;
                }
            }
        }
        out
    };
    let axpy = |y: &[C64], k: &[C64], a: f64| -> Vec<C64> { y.iter().zip(k).map(|(x, d)| x + d * a).collect() };
    for n in 0..steps {
        let s = s0 + n as f64 * h;
        let k1 = deriv(s, &t);
        let k2 = deriv(s + h / 2.0, &axpy(&t, &k1, h / 2.0));
        let k3 = deriv(s + h / 2.0, &axpy(&t, &k2, h / 2.0));
        let k4 = deriv(s + h, &axpy(&t, &k3, h));
        for i in 0..t.len() {
            t[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
    }
    t
}

/// `eps^{-R_1} J_eps^{1-eps} eps^{R_0}` for the KZ family, transporting in
/// `log z` on `[eps, 1/2]` and in `log(1 - z)` on `[1/2, 1 - eps]`.
pub fn associator_cutoff(depth: usize, eps: f64, steps: usize) -> Result<NcSeries> {
    let fam = LogFormFamily::kz();
    let table = WordTable::new(&fam.alphabet, depth);
    let k = C64::new(0.0, 2.0 * PI).inv();
    let mut y = vec![ZERO; table.words.len()];
    y[0] = C64::new(1.0, 0.0);
    let (l_eps, l_half) = (eps.ln(), 0.5f64.ln());
    // z = e^s: Omega dz/ds = (A0 + A1 z/(z-1)) / (2 pi i)
    y = transport(&table, 2, y, l_eps, l_half, steps, |s| {
        let z = s.exp();
        vec![k, k * (z / (z - 1.0))]
    });
    // z = 1 - e^u, u decreasing: Omega dz/du = (-A0 e^u/(1-e^u) + A1) / (2 pi i)
    y = transport(&table, 2, y, l_half, l_eps, steps, |u| {
        let e = u.exp();
        vec![-k * (e / (1.0 - e)), k]
    });
    let mut j = NcSeries::zero(fam.alphabet.clone(), depth);
    for (w, c) in table.words.iter().zip(&y) {
        j.set(w.clone(), *c);
    }
    let r0 = fam.residue_series(ZERO, depth);
    let r1 = fam.residue_series(C64::new(1.0, 0.0), depth);
    r1.scale(C64::new(-l_eps, 0.0)).exp()?.mul(&j)?.mul(&r0.scale(C64::new(l_eps, 0.0)).exp()?)
}

/// Cutoff associator at `eps` and `eps/2`, combined as `2 Phi(eps/2) - Phi(eps)`.
pub fn associator_cutoff_extrapolated(depth: usize, eps: f64, steps: usize) -> Result<NcSeries> {
    let a = associator_cutoff(depth, eps, steps)?;
    let b = associator_cutoff(depth, eps / 2.0, steps)?;
    b.scale(C64::new(2.0, 0.0)).sub(&a)
}

#[derive(Clone, Debug)]
pub struct Associator {
    /// `Phi = J_1^{-1} J_0` with `t_0 = z`, `t_1 = 1 - z`, evaluated at 1/2.
    pub phi: NcSeries,
    pub oracle: NcSeries,
    /// Max over coefficients of `|series - oracle| / max(|oracle|, 1e-3)`.
    pub engine_disagreement: f64,
    pub tail_bound: f64,
}

pub const ASSOCIATOR_ENGINE_TOL: f64 = 1e-6;

pub fn drinfeld_associator(depth: usize, order: usize) -> Result<Associator> {
    if depth > 5 {
        return Err(Error::DepthTooLarge { depth, max: 5 });
    }
    if order < 64 {
        return Err(Error::Invalid(format!("series order {order} is below 64")));
    }
    let fam = LogFormFamily::kz();
    let one = C64::new(1.0, 0.0);
    let t0 = LocalParam::new(ZERO, one)?;
    let t1 = LocalParam::new(one, -one)?;
    let opts = SeriesOptions { order, ..SeriesOptions::default() };
    let s = scattering(&fam, t1, t0, depth, Some(C64::new(0.5, 0.0)), &opts)?;
    let oracle = associator_cutoff_extrapolated(depth, 1e-16, 6000)?;
    let mut worst: f64 = 0.0;
    for w in fam.alphabet.words(depth) {
        let (x, y) = (s.series.coeff(&w), oracle.coeff(&w));
        worst = worst.max((x - y).norm() / y.norm().max(1e-3));
    }
    if worst > ASSOCIATOR_ENGINE_TOL {
        return Err(Error::EnginesDisagree(worst));
    }
    Ok(Associator { phi: s.series, oracle, engine_disagreement: worst, tail_bound: s.tail_bound })
}

/// `swap_*(Phi) Phi - 1` with `swap: A0 <-> A1`.
pub fn check_duality(phi: &NcSeries) -> Result<f64> {
    let images = vec![vec![(1 as LetterId, C64::new(1.0, 0.0))], vec![(0 as LetterId, C64::new(1.0, 0.0))]];
    let swapped = phi.substitute(phi.alphabet().clone(), &images)?;
    Ok(swapped.mul(phi)?.distance_from_one())
}

/// Truncated `zeta(k)` with the integral tail estimate.
pub fn zeta_partial(k: u32, terms: usize) -> f64 {
    let head: f64 = (1..=terms).rev().map(|n| (n as f64).powi(-(k as i32))).sum();
    let n = terms as f64 + 0.5;
    head + n.powi(1 - k as i32) / (k as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::itint::{total_j_quadrature, Form, OmegaFamily, QuadOptions};
    use crate::paths::PathSpec;
    use proptest::prelude::*;

    fn ci(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn kz_sections(order: usize, depth: usize) -> (LogFormFamily, NormalizedSection, NormalizedSection) {
        let fam = LogFormFamily::kz();
        let s0 = NormalizedSection::new(&fam, LocalParam::standard(ZERO), order, depth).unwrap();
        let s1 = NormalizedSection::new(&fam, LocalParam::new(ci(1.0, 0.0), ci(-1.0, 0.0)).unwrap(), order, depth).unwrap();
        (fam, s0, s1)
    }

    #[test]
    fn residues_sum_to_zero_with_infinity() {
        let fam = LogFormFamily::kz();
        let k = ci(0.0, 2.0 * PI).inv();
        assert_eq!(fam.residues(ZERO), vec![k, ZERO]);
        assert_eq!(fam.residues(ci(1.0, 0.0)), vec![ZERO, k]);
        for f in &fam.forms {
            let total: C64 = fam.singular_points().iter().map(|&p| f.residue(p)).sum::<C64>() + f.residue_at_infinity();
            assert!(total.norm() < 1e-15);
        }
        assert_eq!(fam.regular_radius(ZERO), 1.0);
    }

    #[test]
    fn depth_one_is_a_logarithm() {
        let (_, s0, _) = kz_sections(80, 2);
        let f1 = s0.word_coeffs(&[1]).unwrap();
        // (1/2 pi i) log(1 - t) = -(1/2 pi i) sum t^k / k
        for k in 1..=80 {
            let want = -ci(0.0, 2.0 * PI).inv() / k as f64;
            assert!((f1[k] - want).norm() < 1e-15, "k = {k}");
        }
        // the regular part of omega_0 at 0 vanishes
        assert!(s0.word_coeffs(&[0]).unwrap().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn sections_solve_the_equation() {
        let (fam, s0, s1) = kz_sections(96, 3);
        for k in 0..10 {
            let th = 0.3 + 0.6 * k as f64;
            let t = C64::from_polar(0.1 + 0.04 * k as f64, th);
            assert!(s0.ode_residual(&fam, t).unwrap() < 1e-10);
            assert!(s1.ode_residual(&fam, s1.param.z(t)).unwrap() < 1e-10);
        }
    }

    #[test]
    fn sections_are_horizontal() {
        // d/dz (K t^R) = Omega (K t^R), by central differences
        let (fam, s0, _) = kz_sections(96, 3);
        let z = ci(0.3, 0.2);
        let h = 1e-5;
        let d = s0.eval(z + h).unwrap().sub(&s0.eval(z - h).unwrap()).unwrap().scale(ci(0.5 / h, 0.0));
        let mut omega = NcSeries::zero(fam.alphabet.clone(), 3);
        for (v, f) in fam.forms.iter().enumerate() {
            omega.set(vec![v as LetterId], f.eval(z));
        }
        let rhs = omega.mul(&s0.eval(z).unwrap()).unwrap();
        assert!(d.max_abs_diff(&rhs) < 1e-8);
    }

    /// Picard iteration on the whole series, independent of the word recursion.
    fn picard(fam: &LogFormFamily, param: LocalParam, order: usize, depth: usize) -> Vec<(Word, Vec<C64>)> {
        let (nus, res) = local_expansion(fam, &param, order);
        let words = fam.alphabet.words(depth);
        let mut k: HashMap<Word, Vec<C64>> = words.iter().map(|w| (w.clone(), vec![ZERO; order + 1])).collect();
        k.get_mut(&vec![]).unwrap()[0] = C64::new(1.0, 0.0);
        for _ in 0..depth {
            let mut next = k.clone();
            for w in words.iter().filter(|w| !w.is_empty()) {
                let first = w[0] as usize;
                let last = *w.last().unwrap() as usize;
                let mut g = poly_mul_trunc(&nus[first], &k[&w[1..].to_vec()], order);
                let a = &k[&w[1..].to_vec()];
                let b = &k[&w[..w.len() - 1].to_vec()];
                for j in 0..order {
                    g[j] += res[first] * a[j + 1] - b[j + 1] * res[last];
                }
                let f = next.get_mut(w).unwrap();
                f[0] = ZERO;
                for j in 0..order {
                    f[j + 1] = g[j] / (j + 1) as f64;
                }
            }
            k = next;
        }
        words
            .into_iter()
            .map(|w| {
                let c = k[&w].clone();
                (w, c)
            })
            .collect()
    }

    #[test]
    fn uniqueness_against_picard_iteration() {
        let fam = LogFormFamily::kz();
        let param = LocalParam::new(ci(1.0, 0.0), ci(-1.0, 0.0)).unwrap();
        let s = NormalizedSection::new(&fam, param, 48, 3).unwrap();
        for (w, c) in picard(&fam, param, 48, 3) {
            let mine = s.word_coeffs(&w).unwrap();
            let d = c.iter().zip(mine).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(d < 1e-14, "{w:?}");
        }
    }

    #[test]
    fn regular_scattering_is_the_plain_integral() {
        // poles off the path, both endpoints regular
        let fam = LogFormFamily::kz();
        let (a, b) = (ci(0.2, 0.5), ci(0.6, 0.7));
        let opts = SeriesOptions::default();
        let s = scattering(&fam, LocalParam::standard(a), LocalParam::standard(b), 3, None, &opts).unwrap();
        let k = ci(0.0, 2.0 * PI).inv();
        let omega =
            OmegaFamily::new(fam.alphabet.clone(), vec![Form::Pole { at: ZERO, coef: k }, Form::Pole { at: ci(1.0, 0.0), coef: k }])
                .unwrap();
        // J~ = J_a^{-1} J_b is the integral from b to a
        let path = PathSpec::polyline(&[b, a]).unwrap();
        let direct = total_j_quadrature(&omega, &path, 3, &QuadOptions::default()).unwrap();
        assert!(s.series.max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn scattering_is_point_independent_and_group_like() {
        let (_, s0, s1) = kz_sections(96, 4);
        let opts = SeriesOptions::default();
        let at_half = scattering_between(&s1, &s0, ci(0.5, 0.0), &opts).unwrap();
        let at_third = scattering_between(&s1, &s0, ci(1.0 / 3.0, 0.0), &opts).unwrap();
        let off_axis = scattering_between(&s1, &s0, ci(0.5, 0.3), &opts).unwrap();
        let bound = at_half.tail_bound + at_third.tail_bound + 1e-13;
        assert!(at_half.series.max_abs_diff(&at_third.series) < bound);
        assert!(at_half.series.max_abs_diff(&off_axis.series) < at_half.tail_bound + off_axis.tail_bound + 1e-13);
        let (ok, res) = at_half.series.is_group_like(1e-8);
        assert!(ok, "{res}");
        assert!(matches!(scattering_between(&s1, &s0, ci(0.9, 0.0), &opts), Err(Error::NoCommonPoint(_))));
    }

    #[test]
    fn reparametrization_law() {
        let fam = LogFormFamily::kz();
        let one = ci(1.0, 0.0);
        let opts = SeriesOptions::default();
        let (t1, t0) = (LocalParam::new(one, -one).unwrap(), LocalParam::standard(ZERO));
        let base = scattering(&fam, t1, t0, 3, Some(ci(0.5, 0.0)), &opts).unwrap();
        let r1 = fam.residue_series(one, 3);
        let r0 = fam.residue_series(ZERO, 3);
        assert!(reparam(&base.series, one, one, &r1, &r0).unwrap().max_abs_diff(&base.series) < 1e-15);
        let there = reparam(&base.series, ci(2.0, 1.0), ci(0.5, -0.2), &r1, &r0).unwrap();
        let back = reparam(&there, ci(2.0, 1.0).inv(), ci(0.5, -0.2).inv(), &r1, &r0).unwrap();
        assert!(back.max_abs_diff(&base.series) < 1e-13);
        // recompute both sections with t' = 2t
        let t1p = LocalParam::new(one, -one * 2.0).unwrap();
        let t0p = LocalParam::new(ZERO, one * 2.0).unwrap();
        let recomputed = scattering(&fam, t1p, t0p, 3, Some(ci(0.5, 0.0)), &opts).unwrap();
        let predicted = reparam(&base.series, ci(2.0, 0.0), ci(2.0, 0.0), &r1, &r0).unwrap();
        assert!(recomputed.series.max_abs_diff(&predicted) < 1e-9);
    }

    #[test]
    fn associator_low_weights() {
        let phi = drinfeld_associator(3, 96).unwrap();
        assert!((phi.phi.coeff(&[]) - 1.0).norm() < 1e-15);
        assert!(phi.phi.coeff(&[0]).norm() < 1e-14 && phi.phi.coeff(&[1]).norm() < 1e-14);
        let z2 = zeta_partial(2, 100_000);
        assert!((z2 - PI * PI / 6.0).abs() < 1e-12);
        let unit2 = z2 / (2.0 * PI).powi(2);
        assert!((phi.phi.coeff(&[0, 1]).norm() - unit2).abs() < 1e-10 * unit2);
        assert!((phi.phi.coeff(&[1, 0]).norm() - unit2).abs() < 1e-10 * unit2);
        let unit3 = zeta_partial(3, 100_000) / (2.0 * PI).powi(3);
        let mut multiples = Vec::new();
        for w in [[0, 0, 1], [0, 1, 0], [1, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]] {
            let m = phi.phi.coeff(&w).norm() / unit3;
            assert!((m - m.round()).abs() < 1e-8, "{w:?}: {m}");
            multiples.push(m.round() as i64);
        }
        assert_eq!(multiples, vec![1, 2, 1, 1, 2, 1]);
        assert!(phi.phi.coeff(&[0, 0, 0]).norm() < 1e-14);
    }

    #[test]
    fn duality_and_engine_agreement() {
        let phi = drinfeld_associator(4, 96).unwrap();
        assert!(phi.engine_disagreement < 1e-6);
        assert!(check_duality(&phi.phi.truncate(1)).unwrap() < 1e-15);
        assert!(check_duality(&phi.phi.truncate(2)).unwrap() < 1e-8);
        assert!(check_duality(&phi.phi).unwrap() < 1e-7);
        assert!(matches!(drinfeld_associator(6, 96), Err(Error::DepthTooLarge { .. })));
        assert!(drinfeld_associator(2, 32).is_err());
    }

    #[test]
    fn cycles() {
        let fam = LogFormFamily::kz();
        let opts = SeriesOptions::default();
        let tri = [ci(0.3, 0.3), ci(0.7, 0.3), ci(0.5, 0.6)];
        assert!(cycle_check_regular(&fam, &tri, 3, &opts).unwrap() < 1e-12);
        // through both singular points, around a region with no pole
        let one = ci(1.0, 0.0);
        let (s0, s1) = (
            NormalizedSection::new(&fam, LocalParam::standard(ZERO), 96, 3).unwrap(),
            NormalizedSection::new(&fam, LocalParam::new(one, -one).unwrap(), 96, 3).unwrap(),
        );
        let upper = scattering_between(&s0, &s1, ci(0.5, 0.25), &opts).unwrap();
        let lower = scattering_between(&s1, &s0, ci(0.5, -0.25), &opts).unwrap();
        assert!(upper.series.mul(&lower.series).unwrap().distance_from_one() < 1e-12);
        assert!(cycle_check_regular(&fam, &[ZERO], 2, &opts).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn group_like_at_random_points(x in 0.3f64..0.7, y in -0.3f64..0.3) {
            let (_, s0, s1) = kz_sections(96, 3);
            let s = scattering_between(&s1, &s0, ci(x, y), &SeriesOptions::default()).unwrap();
            let (ok, _) = s.series.is_group_like(1e-8);
            prop_assert!(ok);
        }
    }
}

//! q-expansions of cusp forms, their pullbacks under integral matrices, and
//! pointwise evaluation in the upper half-plane.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ncseries::C64;

pub const DEFAULT_NMAX: usize = 64;

/// Integer 2x2 matrix `(a b; c d)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GL2Z {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl GL2Z {
    pub const fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        GL2Z { a, b, c, d }
    }

    pub const fn identity() -> Self {
        GL2Z::new(1, 0, 0, 1)
    }

    /// Fricke involution `g_N = (0 -1; N 0)`.
    pub const fn fricke(n: i64) -> Self {
        GL2Z::new(0, -1, n, 0)
    }

    pub const fn sigma() -> Self {
        GL2Z::new(0, -1, 1, 0)
    }

    pub const fn tau() -> Self {
        GL2Z::new(1, -1, 1, 0)
    }

    pub const fn translation(m: i64) -> Self {
        GL2Z::new(1, m, 0, 1)
    }

    pub fn det(&self) -> i64 {
        self.a * self.d - self.b * self.c
    }

    pub fn mul(&self, o: &GL2Z) -> GL2Z {
        GL2Z::new(self.a * o.a + self.b * o.c, self.a * o.b + self.b * o.d, self.c * o.a + self.d * o.c, self.c * o.b + self.d * o.d)
    }

    /// Adjugate; the inverse up to the factor `det`, which acts trivially on H.
    pub fn adjugate(&self) -> GL2Z {
        GL2Z::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn act(&self, z: C64) -> C64 {
        (z * self.a as f64 + self.b as f64) / (z * self.c as f64 + self.d as f64)
    }
}

/// `f(z) = prefactor * sum_k coeffs[k-1] * exp(2 pi i k z / period)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierExpansion {
    pub id: String,
    pub level: u64,
    /// The weight `2r`.
    pub weight: u32,
    pub period: u64,
    pub coeffs: Vec<C64>,
    pub prefactor: C64,
    /// Fitted bound `|c_k| <= K k^C` on the stored coefficients.
    pub growth: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: C64,
    /// Bound on the neglected tail `sum_{k > n_max}`.
    pub bound: f64,
}

impl FourierExpansion {
    pub fn new(id: impl Into<String>, level: u64, weight: u32, period: u64, coeffs: Vec<C64>) -> Self {
        let growth = fit_growth(&coeffs);
        FourierExpansion { id: id.into(), level, weight, period, coeffs, prefactor: C64::new(1.0, 0.0), growth }
    }

    pub fn n_max(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of `exp(2 pi i k z / period)`, including the prefactor.
    pub fn coeff(&self, k: usize) -> C64 {
        if k == 0 || k > self.coeffs.len() {
            C64::new(0.0, 0.0)
        } else {
            self.prefactor * self.coeffs[k - 1]
        }
    }

    /// Partial sum without the domain check; used on hot paths that already
    /// guarantee `Im z > 0`.
    pub fn value(&self, z: C64) -> C64 {
        let q = (C64::new(0.0, 2.0 * PI) * z / self.period as f64).exp();
        let mut acc = C64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * q + c;
        }
        self.prefactor * acc * q
    }

    pub fn evaluate(&self, z: C64) -> Result<Evaluation> {
        if z.im <= 0.0 {
            return Err(Error::NotInUpperHalfPlane(z));
        }
        Ok(Evaluation { value: self.value(z), bound: self.tail_bound(z.im) })
    }

    /// `sum_{k > n_max} K k^C x^k` with `x = exp(-2 pi y / period)`.
    pub fn tail_bound(&self, y: f64) -> f64 {
        let (kk, cc) = self.growth;
        let x = (-2.0 * PI * y / self.period as f64).exp();
        let k0 = (self.coeffs.len() + 1) as f64;
        let rho = (1.0 + 1.0 / k0).powf(cc) * x;
        if rho >= 1.0 {
            return f64::INFINITY;
        }
        let first = kk * k0.powf(cc) * x.powf(k0);
        self.prefactor.norm() * first / (1.0 - rho)
    }

    /// Weight-`weight` slash by an upper-triangular rational matrix
    /// `(u1 u2; 0 u4)` with `u1, u4 > 0`:
    /// `det^{w/2} u4^{-w} f((u1 z + u2) / u4)`.
    pub fn slash_upper(&self, u1: Rational64, u2: Rational64, u4: Rational64) -> Result<FourierExpansion> {
        if !u1.is_positive() || !u4.is_positive() {
            return Err(Error::Invalid("slash_upper needs positive diagonal".into()));
        }
        let alpha = u1 / u4;
        let beta = u2 / u4;
        let (p, q) = (*alpha.numer() as u64, *alpha.denom() as u64);
        let period = self.period * q;
        let mut coeffs = vec![C64::new(0.0, 0.0); self.coeffs.len() * p as usize];
        let beta_f = *beta.numer() as f64 / *beta.denom() as f64;
        for (i, c) in self.coeffs.iter().enumerate() {
            // reduce the phase argument exactly before converting to floating point
            let frac = (beta * Rational64::from_integer((i + 1) as i64) / Rational64::from_integer(self.period as i64)).fract();
            let ph = if beta_f == 0.0 {
                C64::new(1.0, 0.0)
            } else {
                let x = *frac.numer() as f64 / *frac.denom() as f64;
                C64::from_polar(1.0, 2.0 * PI * x)
            };
            coeffs[(i + 1) * p as usize - 1] = c * ph;
        }
        let w = self.weight as i32;
        let det = (u1 * u4).to_f64_lossy();
        let u4f = u4.to_f64_lossy();
        let scale = det.powf(w as f64 / 2.0) * u4f.powi(-w);
        let mut out = FourierExpansion::new(format!("{}|({},{};0,{})", self.id, u1, u2, u4), self.level, self.weight, period, coeffs);
        out.prefactor = self.prefactor * scale;
        Ok(out)
    }
}

trait ToF64Lossy {
    fn to_f64_lossy(&self) -> f64;
}

impl ToF64Lossy for Rational64 {
    fn to_f64_lossy(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Least-squares slope of `log|c_k|` against `log k`, then the smallest `K`
/// making `|c_k| <= K k^C` hold on the data.
pub fn fit_growth(coeffs: &[C64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> =
        coeffs.iter().enumerate().filter(|(_, c)| c.norm() > 0.0).map(|(i, c)| (((i + 1) as f64).ln(), c.norm().ln())).collect();
    let cc = if pts.len() < 2 {
        0.0
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        if sxx > 0.0 {
            (sxy / sxx).max(0.0)
        } else {
            0.0
        }
    };
    let kk = coeffs.iter().enumerate().map(|(i, c)| c.norm() / ((i + 1) as f64).powf(cc)).fold(0.0, f64::max);
    (kk, cc)
}

/// A form of modular type `scale * f(z) z^{s-1} dz`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormOfModularType {
    pub form: Arc<FourierExpansion>,
    pub s: C64,
    pub scale: C64,
}

impl FormOfModularType {
    pub fn new(form: Arc<FourierExpansion>, s: i64) -> Self {
        FormOfModularType { form, s: C64::new(s as f64, 0.0), scale: C64::new(1.0, 0.0) }
    }

    pub fn with_complex_s(form: Arc<FourierExpansion>, s: C64) -> Self {
        FormOfModularType { form, s, scale: C64::new(1.0, 0.0) }
    }

    pub fn integer_s(&self) -> Option<i64> {
        let r = self.s.re.round();
        (self.s.im == 0.0 && (self.s.re - r).abs() < 1e-12).then_some(r as i64)
    }

    /// Coefficient of `dz` at `z`.
    pub fn density(&self, z: C64) -> C64 {
        let zpow = match self.integer_s() {
            Some(s) => z.powi((s - 1) as i32),
            None => z.powc(self.s - 1.0),
        };
        self.scale * self.form.value(z) * zpow
    }
}

/// Power series `P = prod_d prod_n (1 - q^{dn})^{e_d}` to degree `deg`, exactly,
/// from the logarithmic derivative `q P'/P = -sum_k b_k q^k` with
/// `b_k = sum_{d | k} e_d d sigma(k/d)`. Intermediate values stay near the
/// size of the coefficients themselves.
fn eta_series(parts: &[(u64, i64)], deg: usize) -> Vec<i128> {
    let mut sigma = vec![0i128; deg + 1];
    for a in 1..=deg {
        for m in (a..=deg).step_by(a) {
            sigma[m] += a as i128;
        }
    }
    let mut b = vec![0i128; deg + 1];
    for &(d, e) in parts {
        let d = d as usize;
        for k in (d..=deg).step_by(d) {
            b[k] += e as i128 * d as i128 * sigma[k / d];
        }
    }
    let mut p = vec![0i128; deg + 1];
    p[0] = 1;
    for k in 1..=deg {
        let acc: i128 = (1..=k).map(|j| b[j] * p[k - j]).sum();
        p[k] = -acc / k as i128;
    }
    p
}

/// Expansion of `prod_d eta(d z)^{e_d}`.
pub fn eta_product(id: &str, parts: &[(u64, i64)], n_max: usize) -> Result<FourierExpansion> {
    if n_max == 0 {
        return Err(Error::Invalid("n_max must be at least 1".into()));
    }
    let twist: i64 = parts.iter().map(|&(d, e)| d as i64 * e).sum();
    if twist.rem_euclid(24) != 0 {
        return Err(Error::EtaCongruence(twist));
    }
    let total_e: i64 = parts.iter().map(|&(_, e)| e).sum();
    if total_e <= 0 || total_e % 2 != 0 {
        return Err(Error::Invalid(format!("weight {total_e}/2 is not a positive integer")));
    }
    let offset = twist / 24;
    if offset < 1 {
        return Err(Error::Invalid("eta product is not a cusp form at infinity".into()));
    }
    let series = eta_series(parts, n_max);
    let mut coeffs = vec![C64::new(0.0, 0.0); n_max];
    for (j, c) in series.iter().enumerate() {
        let k = j as i64 + offset;
        if k as usize <= n_max {
            coeffs[k as usize - 1] = C64::new(*c as f64, 0.0);
        }
    }
    let level = parts.iter().fold(1u64, |l, &(d, _)| lcm(l, d));
    Ok(FourierExpansion::new(id, level, (total_e / 2) as u32, 1, coeffs))
}

/// `Delta = q prod (1 - q^n)^24`: level 1, weight 12.
pub fn delta_qexp(n_max: usize) -> FourierExpansion {
    eta_product("delta", &[(1, 24)], n_max).expect("eta(z)^24 is valid")
}

/// `eta(z)^2 eta(11 z)^2`, the weight-2 newform of level 11.
pub fn level11_qexp(n_max: usize) -> FourierExpansion {
    eta_product("11a", &[(1, 2), (11, 2)], n_max).expect("eta(z)^2 eta(11z)^2 is valid")
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Extended Euclid: `(g, x, y)` with `a x + b y = g >= 0`.
pub fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// `f|_k W_N (z) / f(z)` where `f|_k W_N(z) = N^{-r} z^{-2r} f(-1/(N z))`.
fn fricke_ratio(f: &FourierExpansion, n: u64, z: C64) -> (C64, C64) {
    let r = f.weight as i32 / 2;
    let w = -1.0 / (z * n as f64);
    let lhs = f.value(w) * (n as f64).powi(-r) * z.powi(-2 * r);
    (lhs, f.value(z))
}

/// Measures the Fricke eigenvalue `eps_f` with `f|W_N = eps_f f`, using the
/// fixed point `i/sqrt(N)` and an off-fixed sample.
pub fn fricke_eigenvalue(f: &FourierExpansion, n: u64) -> Result<f64> {
    let rt = (n as f64).sqrt();
    let samples = [C64::new(0.0, 1.0 / rt), C64::new(0.1, 2.0) / rt];
    let mut best = (f64::INFINITY, 0.0);
    for eps in [1.0, -1.0] {
        let mut worst: f64 = 0.0;
        for z in samples {
            let (lhs, fz) = fricke_ratio(f, n, z);
            let scale = fz.norm().max(lhs.norm()).max(1e-300);
            worst = worst.max((lhs - fz * eps).norm() / scale);
        }
        if worst < best.0 {
            best = (worst, eps);
        }
    }
    if best.0 < 1e-8 {
        Ok(best.1)
    } else {
        Err(Error::NotEigenform(best.0))
    }
}

/// Per-letter Fricke scalar: `g_N^*(f z^{s-1} dz) = c f z^{2r-1-s} dz` with
/// `c = e^{i pi (s-1)} eps_f N^{r-s}` (for integer `s`, `(-1)^{s-1} eps_f N^{r-s}`).
/// Returns `(c, 2r - s)`.
pub fn fricke_pullback(omega: &FormOfModularType, n: u64, eps_f: f64) -> (C64, C64) {
    let r = omega.form.weight as f64 / 2.0;
    let s = omega.s;
    let parity = match omega.integer_s() {
        Some(k) => C64::new(if (k - 1) % 2 == 0 { 1.0 } else { -1.0 }, 0.0),
        None => (C64::new(0.0, PI) * (s - 1.0)).exp(),
    };
    let npow = C64::new(n as f64, 0.0).powc(C64::new(r, 0.0) - s);
    (parity * eps_f * npow, C64::new(2.0 * r, 0.0) - s)
}

/// Constituents of the weight-2 Hecke operator at `p`: first `p f(p z)`,
/// then `(1/p) f((z + b)/p)` for `b = 0..p-1`.
pub fn hecke_constituents(f: &FourierExpansion, p: u64) -> Result<Vec<FourierExpansion>> {
    if f.weight != 2 {
        return Err(Error::Invalid("Hecke constituents are defined for weight 2".into()));
    }
    if p < 2 || (2..p).any(|d| p % d == 0) {
        return Err(Error::Invalid(format!("{p} is not prime")));
    }
    let r = |x: i64| Rational64::from_integer(x);
    let mut out = vec![f.slash_upper(r(p as i64), r(0), r(1))?];
    for b in 0..p as i64 {
        out.push(f.slash_upper(r(1), r(b), r(p as i64))?);
    }
    Ok(out)
}

/// Matrix of `gamma^*` on the forms `f z^{s-1} dz`, `s = 1..2r-1`:
/// entry `[t-1][s-1]` is `det^{1-r} chi [z^{t-1}] (a z + b)^{s-1} (c z + d)^{2r-1-s}`,
/// so `gamma^*(omega_s) = sum_t M[t][s] omega_t`. The map is an
/// anti-homomorphism: `M(g h) = M(h) M(g)`.
pub fn gamma_matrix(weight: u32, g: &GL2Z, chi: C64) -> Vec<Vec<C64>> {
    let r = weight as i32 / 2;
    let n = (weight - 1) as usize;
    let poly_pow = |x0: i64, x1: i64, e: usize| -> Vec<i128> {
        // (x1 z + x0)^e, coefficients in increasing degree
        let mut p = vec![1i128];
        for _ in 0..e {
            let mut q = vec![0i128; p.len() + 1];
            for (i, c) in p.iter().enumerate() {
                q[i] += c * x0 as i128;
                q[i + 1] += c * x1 as i128;
            }
            p = q;
        }
        p
    };
    let det = g.det() as f64;
    let scale = chi * det.powi(1 - r);
    let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
    for s in 1..=n {
        let p1 = poly_pow(g.b, g.a, s - 1);
        let p2 = poly_pow(g.d, g.c, n - s);
        let mut prod = vec![0i128; n];
        for (i, x) in p1.iter().enumerate() {
            for (j, y) in p2.iter().enumerate() {
                prod[i + j] += x * y;
            }
        }
        for t in 1..=n {
            m[t - 1][s - 1] = scale * prod[t - 1] as f64;
        }
    }
    m
}

/// Factor `M = delta U` or `M = delta W_N U` with `delta` in `Gamma_0(N)` and `U`
/// upper triangular; returns `(uses_fricke, u1, u2, u4)` with `u4 > 0`.
pub fn gamma0_factor(m: &GL2Z, n: i64) -> Result<(bool, Rational64, Rational64, Rational64)> {
    if m.det() <= 0 {
        return Err(Error::Invalid("matrix must have positive determinant".into()));
    }
    let (g, _, _) = ext_gcd(m.a, m.c);
    let (a, c) = (m.a / g, m.c / g);
    let ri = |x: i64| Rational64::from_integer(x);
    // rational 2x2 product helper
    let mul = |x: [Rational64; 4], y: [Rational64; 4]| {
        [x[0] * y[0] + x[1] * y[2], x[0] * y[1] + x[1] * y[3], x[2] * y[0] + x[3] * y[2], x[2] * y[1] + x[3] * y[3]]
    };
    let mm = [ri(m.a), ri(m.b), ri(m.c), ri(m.d)];
    let (fricke, u) = if c % n == 0 {
        // delta = (a beta; c d) with a d - beta c = 1
        let (_, x, y) = ext_gcd(a, c);
        let (dd, beta) = (x, -y);
        let inv = [ri(dd), ri(-beta), ri(-c), ri(a)];
        (false, mul(inv, mm))
    } else {
        let (g2, x, y) = ext_gcd(c, a * n);
        if g2 != 1 {
            return Err(Error::Invalid(format!("cusp {a}/{c} not handled for level {n}")));
        }
        // delta = (x a; -y n  c): det = x c + a y n = 1
        let delta_inv = [ri(c), ri(-a), ri(y * n), ri(x)];
        let w_inv = [ri(0), Rational64::new(1, n), ri(-1), ri(0)];
        (true, mul(w_inv, mul(delta_inv, mm)))
    };
    if !u[2].is_zero() {
        return Err(Error::Invalid("factorization did not produce an upper-triangular matrix".into()));
    }
    let sign = if u[3].is_negative() { -Rational64::one() } else { Rational64::one() };
    Ok((fricke, u[0] * sign, u[1] * sign, u[3] * sign))
}

/// Expansion of `M^*(f dz) / dz = (f|_2 M)(z)` for a weight-2 form on
/// `Gamma_0(N)` with Fricke eigenvalue `eps`.
pub fn weight2_pullback(f: &FourierExpansion, eps: f64, m: &GL2Z) -> Result<FourierExpansion> {
    if f.weight != 2 {
        return Err(Error::Invalid("weight2_pullback needs a weight-2 form".into()));
    }
    let (fricke, u1, u2, u4) = gamma0_factor(m, f.level as i64)?;
    let mut out = f.slash_upper(u1, u2, u4)?;
    if fricke {
        out.prefactor *= eps;
    }
    Ok(out)
}

/// On-disk cache of q-expansion coefficients, keyed by form id and `n_max`.
#[derive(Clone, Debug)]
pub struct QexpCache {
    pub dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    form: String,
    n_max: usize,
    coeffs: Vec<[f64; 2]>,
}

impl QexpCache {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        QexpCache { dir: dir.as_ref().to_path_buf() }
    }

    fn path(&self, id: &str, n_max: usize) -> PathBuf {
        self.dir.join(format!("{id}_{n_max}.json"))
    }

    pub fn load(&self, id: &str, n_max: usize) -> Result<Option<Vec<C64>>> {
        let p = self.path(id, n_max);
        if !p.exists() {
            return Ok(None);
        }
        let file: CacheFile = serde_json::from_str(&std::fs::read_to_string(p)?)?;
        if file.form != id || file.n_max != n_max || file.coeffs.len() != n_max {
            return Ok(None);
        }
        Ok(Some(file.coeffs.into_iter().map(|[re, im]| C64::new(re, im)).collect()))
    }

    pub fn store(&self, id: &str, coeffs: &[C64]) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let file = CacheFile { form: id.to_string(), n_max: coeffs.len(), coeffs: coeffs.iter().map(|c| [c.re, c.im]).collect() };
        std::fs::write(self.path(id, coeffs.len()), serde_json::to_string(&file)?)?;
        Ok(())
    }

    /// Built-in forms by id (`delta`, `11a`), read through the cache.
    pub fn builtin(&self, id: &str, n_max: usize) -> Result<FourierExpansion> {
        let fresh = builtin_form(id, n_max)?;
        match self.load(id, n_max)? {
            Some(coeffs) => Ok(FourierExpansion::new(id, fresh.level, fresh.weight, 1, coeffs)),
            None => {
                self.store(id, &fresh.coeffs)?;
                Ok(fresh)
            }
        }
    }
}

pub fn builtin_form(id: &str, n_max: usize) -> Result<FourierExpansion> {
    match id {
        "delta" => Ok(delta_qexp(n_max)),
        "11a" => Ok(level11_qexp(n_max)),
        other => Err(Error::Invalid(format!("unknown form id {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ci(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Naive oracle: multiply out prod (1 - q^n)^24 one factor at a time in f64.
    fn naive_delta(deg: usize) -> Vec<f64> {
        let mut p = vec![0.0; deg + 1];
        p[0] = 1.0;
        for n in 1..=deg {
            for _ in 0..24 {
                let old = p.clone();
                for k in n..=deg {
                    p[k] = old[k] - old[k - n];
                }
            }
        }
        p
    }

    #[test]
    fn delta_first_coefficients() {
        let d = delta_qexp(8);
        assert_eq!(d.coeff(1), ci(1.0, 0.0));
        assert_eq!(d.coeff(2), ci(-24.0, 0.0));
        assert_eq!(d.coeff(3), ci(252.0, 0.0));
        let oracle = naive_delta(7);
        for k in 1..=8 {
            assert_eq!(d.coeff(k).re, oracle[k - 1]);
        }
        assert_eq!((d.level, d.weight, d.period), (1, 12, 1));
    }

    #[test]
    fn level11_first_coefficients() {
        let f = level11_qexp(20);
        assert_eq!(f.coeff(1).re, 1.0);
        assert_eq!(f.coeff(2).re, -2.0);
        assert_eq!(f.coeff(3).re, -1.0);
        assert_eq!((f.level, f.weight), (11, 2));
    }

    #[test]
    fn level11_is_multiplicative() {
        let f = level11_qexp(400);
        let a = |n: usize| f.coeff(n).re;
        for m in 1..=20usize {
            for n in 1..=20usize {
                if gcd(m as u64, n as u64) == 1 {
                    assert_eq!(a(m * n), a(m) * a(n), "a({m}*{n})");
                }
            }
        }
    }

    #[test]
    fn eta_congruence_is_checked() {
        assert!(matches!(eta_product("x", &[(1, 2)], 10), Err(Error::EtaCongruence(2))));
    }

    #[test]
    fn evaluate_rejects_lower_half_plane() {
        assert!(delta_qexp(8).evaluate(ci(0.0, -1.0)).is_err());
    }

    #[test]
    fn delta_periodicity_and_fixed_point() {
        let d = delta_qexp(64);
        let a = d.evaluate(ci(0.0, 1.0)).unwrap().value;
        let b = d.evaluate(ci(1.0, 1.0)).unwrap().value;
        assert!((a - b).norm() < 1e-15 * a.norm().max(1.0));
        let z = ci(0.0, 1.0);
        let w = -1.0 / z;
        let transformed = d.value(w) * z.powi(-12);
        assert!((transformed - a).norm() < 1e-14);
    }

    #[test]
    fn reported_bound_is_honest_under_refinement() {
        let z = ci(0.0, 2.0);
        let small = delta_qexp(6).evaluate(z).unwrap();
        let big = delta_qexp(12).evaluate(z).unwrap();
        assert!((small.value - big.value).norm() <= small.bound);
        assert!(small.bound < 1e-20);
    }

    #[test]
    fn fricke_eigenvalues_are_measured() {
        assert_eq!(fricke_eigenvalue(&delta_qexp(64), 1).unwrap(), 1.0);
        let eps = fricke_eigenvalue(&level11_qexp(64), 11).unwrap();
        assert_eq!(eps.abs(), 1.0);
        // the level-11 form has L(f, 1) != 0, which forces the form-level scalar to be -1
        assert_eq!(eps, -1.0);
    }

    #[test]
    fn fixed_point_alone_cannot_separate_signs() {
        let f = level11_qexp(64);
        let z = ci(0.0, 1.0 / 11f64.sqrt());
        let (lhs, fz) = fricke_ratio(&f, 11, z);
        // at the fixed point lhs = eps * f(z); the off-fixed sample is what pins eps
        assert!((lhs + fz).norm() < 1e-12 * fz.norm());
    }

    #[test]
    fn fricke_pullback_scalars() {
        let d = Arc::new(delta_qexp(16));
        let (c6, s6) = fricke_pullback(&FormOfModularType::new(d.clone(), 6), 1, 1.0);
        assert_eq!((c6, s6), (ci(-1.0, 0.0), ci(6.0, 0.0)));
        let (c1, s1) = fricke_pullback(&FormOfModularType::new(d, 1), 1, 1.0);
        assert_eq!((c1, s1), (ci(1.0, 0.0), ci(11.0, 0.0)));
        let f = Arc::new(level11_qexp(16));
        let (c, s) = fricke_pullback(&FormOfModularType::new(f, 1), 11, -1.0);
        assert!((c - ci(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(s, ci(1.0, 0.0));
    }

    #[test]
    fn fricke_pullback_matches_pointwise_pullback() {
        let d = Arc::new(delta_qexp(64));
        for s in 1..=11 {
            let om = FormOfModularType::new(d.clone(), s);
            let (c, s2) = fricke_pullback(&om, 1, 1.0);
            let z = ci(0.2, 1.3);
            let g = GL2Z::fricke(1);
            // g^* omega at z = omega(g z) * d(gz)/dz
            let lhs = om.density(g.act(z)) / (z * z);
            let rhs = FormOfModularType::with_complex_s(d.clone(), s2).density(z) * c;
            assert!((lhs - rhs).norm() < 1e-12 * rhs.norm(), "s = {s}");
        }
    }

    #[test]
    fn gamma_matrix_identity_and_fricke() {
        let m = gamma_matrix(12, &GL2Z::identity(), ci(1.0, 0.0));
        for (i, row) in m.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                assert_eq!(*x, ci(if i == j { 1.0 } else { 0.0 }, 0.0));
            }
        }
        let m = gamma_matrix(12, &GL2Z::fricke(1), ci(1.0, 0.0));
        for s in 1..=11usize {
            for t in 1..=11usize {
                let expect = if t == 12 - s {
                    if (s - 1) % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    0.0
                };
                assert_eq!(m[t - 1][s - 1], ci(expect, 0.0));
            }
        }
        let m = gamma_matrix(2, &GL2Z::fricke(11), ci(-1.0, 0.0));
        assert_eq!(m[0][0], ci(-1.0, 0.0));
    }

    #[test]
    fn gamma_matrix_columns_match_polynomial_values() {
        let g = GL2Z::new(2, 1, 3, 2);
        let m = gamma_matrix(8, &g, ci(1.0, 0.0));
        let z = 2.0f64;
        for s in 1..=7usize {
            let direct = (g.a as f64 * z + g.b as f64).powi(s as i32 - 1) * (g.c as f64 * z + g.d as f64).powi(7 - s as i32);
            let via: f64 = (1..=7usize).map(|t| m[t - 1][s - 1].re * z.powi(t as i32 - 1)).sum();
            assert!((direct - via).abs() < 1e-9 * direct.abs());
        }
    }

    #[test]
    fn hecke_identity_pointwise() {
        let f = level11_qexp(64);
        for p in [2u64, 3] {
            let cons = hecke_constituents(&f, p).unwrap();
            let ap = f.coeff(p as usize);
            for z in [ci(0.0, 1.0), ci(0.3, 0.7), ci(-0.2, 0.5)] {
                let lhs = ap * f.value(z) - cons[0].value(z);
                let rhs: C64 = cons[1..].iter().map(|g| g.value(z)).sum();
                assert!((lhs - rhs).norm() < 1e-8, "p={p}");
            }
        }
    }

    #[test]
    fn hecke_constituent_shapes() {
        let f = level11_qexp(16);
        let cons = hecke_constituents(&f, 2).unwrap();
        assert_eq!(cons[0].period, 1);
        assert_eq!(cons[0].coeff(2), f.coeff(1) * 2.0);
        assert_eq!(cons[0].coeff(3), ci(0.0, 0.0));
        assert_eq!(cons[1].period, 2);
        assert!((cons[1].coeff(3) - f.coeff(3) / 2.0).norm() < 1e-15);
        assert!(hecke_constituents(&f, 4).is_err());
        assert!(hecke_constituents(&delta_qexp(8), 2).is_err());
    }

    #[test]
    fn phase_sums_vanish_off_multiples() {
        for p in [2u64, 3, 5] {
            for n in 1..=12u64 {
                let s: C64 = (0..p).map(|b| C64::from_polar(1.0, 2.0 * PI * (n * b) as f64 / p as f64)).sum();
                let expect = if n % p == 0 { p as f64 } else { 0.0 };
                assert!((s - ci(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn weight2_pullbacks_match_pointwise() {
        let f = level11_qexp(96);
        let eps = fricke_eigenvalue(&f, 11).unwrap();
        // the images m(z) sit low in H, so the direct side needs many more terms
        let big = level11_qexp(4000);
        let mats = [
            GL2Z::fricke(11),
            GL2Z::new(0, -2, 11, 0),
            GL2Z::new(11, -1, 22, 0),
            GL2Z::new(22, -1, 33, 0),
            GL2Z::new(1, 0, 11, 1),
            GL2Z::new(2, 1, 3, 2),
        ];
        for m in mats {
            let g = weight2_pullback(&f, eps, &m).unwrap();
            for z in [ci(0.1, 0.6), ci(-0.3, 0.9)] {
                let direct = big.value(m.act(z)) * m.det() as f64 / (z * m.c as f64 + m.d as f64).powi(2);
                let via = g.value(z);
                assert!((direct - via).norm() < 1e-9 * direct.norm().max(1e-3), "{m:?}");
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = std::env::temp_dir().join(format!("ncmodsym-cache-{}", std::process::id()));
        let cache = QexpCache::new(&dir);
        let a = cache.builtin("delta", 10).unwrap();
        let b = cache.builtin("delta", 10).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
        let text = std::fs::read_to_string(dir.join("delta_10.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["form"], "delta");
        assert_eq!(v["n_max"], 10);
        std::fs::remove_dir_all(dir).unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gamma_matrix_is_an_anti_homomorphism(
            a1 in -3i64..=3, b1 in -3i64..=3, c1 in -3i64..=3,
            a2 in -3i64..=3, b2 in -3i64..=3, c2 in -3i64..=3,
        ) {
            let complete = |a: i64, b: i64, c: i64| -> Option<GL2Z> {
                // find d with a d - b c = 1
                (-12i64..=12).map(|d| GL2Z::new(a, b, c, d)).find(|g| g.det() == 1)
            };
            if let (Some(g), Some(h)) = (complete(a1, b1, c1), complete(a2, b2, c2)) {
                let one = ci(1.0, 0.0);
                let mg = gamma_matrix(6, &g, one);
                let mh = gamma_matrix(6, &h, one);
                let mgh = gamma_matrix(6, &g.mul(&h), one);
                for i in 0..5 {
                    for j in 0..5 {
                        let prod: C64 = (0..5).map(|k| mh[i][k] * mg[k][j]).sum();
                        prop_assert!((prod - mgh[i][j]).norm() < 1e-9 * (1.0 + prod.norm()));
                    }
                }
            }
        }

        #[test]
        fn evaluation_is_periodic(x in -1.0f64..1.0, y in 0.3f64..2.0) {
            let d = delta_qexp(64);
            let z = ci(x, y);
            let a = d.value(z);
            let b = d.value(z + 1.0);
            prop_assert!((a - b).norm() < 1e-12 * a.norm().max(1e-12));
        }
    }
}

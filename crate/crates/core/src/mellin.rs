//! Classical and total Mellin transforms `J_{i inf}^0`, their functional
//! equations under the Fricke involution, and the modular-symbol cocycle.
//!
//! Conventions: paths run from `i inf` toward `0`, so the coefficient of `A_v`
//! in the total Mellin transform is `Lambda(f_v; s_v) = int_{i inf}^0 omega_v`
//! (no extra sign). With `c_v = (-1)^{s_v - 1} eps_f N^{r - s_v}` one has
//! `Lambda(s) = -c_s Lambda(2r - s)`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::itint::{nested_integral, total_j, EngineOptions, Form, OmegaFamily, QuadOptions};
use crate::modforms::{delta_qexp, fricke_pullback, FormOfModularType, FourierExpansion, GL2Z};
use crate::ncseries::{LetterMap, NcSeries, C64};
use crate::paths::{decompose_to_primitives, mobius, BoundaryPoint, PathSpec, DEFAULT_RAY_HEIGHT};

/// Letters `s{s}` carrying `f z^{s-1} dz`.
pub fn modular_family(f: Arc<FourierExpansion>, ss: &[i64]) -> Result<OmegaFamily> {
    let labels: Vec<String> = ss.iter().map(|s| format!("s{s}")).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    OmegaFamily::modular(&refs, ss.iter().map(|&s| FormOfModularType::new(f.clone(), s)).collect())
}

/// `Delta z^{s-1} dz` for `s = 1..11`: stable under all of `SL_2(Z)`.
pub fn weight12_family(n_max: usize) -> Result<OmegaFamily> {
    modular_family(Arc::new(delta_qexp(n_max)), &(1..=11).collect::<Vec<_>>())
}

/// The Fricke fixed point `i / sqrt(N)`.
pub fn fixed_point(n: u64) -> C64 {
    C64::new(0.0, 1.0 / (n as f64).sqrt())
}

/// `g_N^{-1}(w) = -1/(N w)`.
pub fn fricke_preimage(n: u64, w: C64) -> C64 {
    -1.0 / (w * n as f64)
}

/// `int_{i inf}^w e^{a z} z^m dz` for `Re(a z) -> -inf` upward.
pub fn ray_monomial(a: C64, w: C64, m: u32) -> C64 {
    let mut sum = C64::new(0.0, 0.0);
    let mut fall = 1.0; // m! / (m - j)!
    let mut apow = a; // a^{j+1}
    for j in 0..=m {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sum += w.powi((m - j) as i32) * (sign * fall) / apow;
        fall *= (m - j) as f64;
        apow *= a;
    }
    (a * w).exp() * sum
}

#[derive(Clone, Debug)]
pub struct MellinOptions {
    pub engine: EngineOptions,
    pub quad: QuadOptions,
    /// Rays to `i inf` start at `t_height` times the largest period.
    pub t_height: f64,
}

impl Default for MellinOptions {
    fn default() -> Self {
        MellinOptions { engine: EngineOptions::default(), quad: QuadOptions::default(), t_height: DEFAULT_RAY_HEIGHT }
    }
}

/// `int_{i inf}^w omega`: termwise in closed form for integer `s >= 1`,
/// by quadrature along the vertical ray otherwise.
pub fn vertical_integral(omega: &FormOfModularType, w: C64, opts: &MellinOptions) -> Result<C64> {
    if w.im <= 0.0 {
        return Err(Error::NotInUpperHalfPlane(w));
    }
    let f = &omega.form;
    match omega.integer_s() {
        Some(s) if s >= 1 => {
            let mut acc = C64::new(0.0, 0.0);
            for k in (1..=f.coeffs.len()).rev() {
                let c = f.coeffs[k - 1];
                if c.norm() != 0.0 {
                    let a = C64::new(0.0, 2.0 * PI * k as f64 / f.period as f64);
                    acc += c * ray_monomial(a, w, (s - 1) as u32);
                }
            }
            Ok(acc * f.prefactor * omega.scale)
        }
        _ => {
            let height = opts.t_height * f.period as f64;
            let path = PathSpec::from_infinity(w, height.max(2.0 * w.im))?;
            nested_integral(&[&Form::Modular(omega.clone())], &path, &opts.quad)
        }
    }
}

/// `Lambda(f; s) = int_{i inf}^0 f z^{s-1} dz` split at `w`:
/// `int_{i inf}^w omega - c int_{i inf}^{g_N^{-1} w} f z^{2r-1-s} dz`.
pub fn classical_mellin_split(f: &Arc<FourierExpansion>, s: C64, n: u64, eps: f64, w: C64, opts: &MellinOptions) -> Result<C64> {
    let omega = FormOfModularType::with_complex_s(f.clone(), s);
    let (c, s2) = fricke_pullback(&omega, n, eps);
    let partner = FormOfModularType::with_complex_s(f.clone(), s2);
    Ok(vertical_integral(&omega, w, opts)? - c * vertical_integral(&partner, fricke_preimage(n, w), opts)?)
}

/// `Lambda(f; s)` split at the Fricke fixed point.
pub fn classical_mellin(f: &Arc<FourierExpansion>, s: C64, n: u64, eps: f64) -> Result<C64> {
    classical_mellin_split(f, s, n, eps, fixed_point(n), &MellinOptions::default())
}

#[derive(Clone, Debug)]
pub struct TotalMellin {
    pub series: NcSeries,
    pub level: u64,
    pub split: C64,
}

fn check_split(n: u64, w: C64) -> Result<()> {
    let floor = 0.5 / (n as f64).sqrt() * (1.0 - 1e-12);
    let w2 = fricke_preimage(n, w);
    if w.im < floor || w2.im < floor {
        return Err(Error::Invalid(format!("split point {w} leaves the region Im z >= 1/(2 sqrt N)")));
    }
    Ok(())
}

fn ray_j(family: &OmegaFamily, w: C64, depth: usize, opts: &MellinOptions) -> Result<NcSeries> {
    let path = PathSpec::from_infinity(w, family.ray_height(opts.t_height))?;
    total_j(family, &path, depth, &opts.engine)
}

/// `J_{i inf}^0 = g_*(J_{i inf}^{g^{-1} w})^{-1} J_{i inf}^w` with `g = g_N` and
/// `g_*` the letter map of the family.
pub fn total_mellin_at(family: &OmegaFamily, n: u64, eps: f64, depth: usize, w: C64, opts: &MellinOptions) -> Result<TotalMellin> {
    check_split(n, w)?;
    let map = family.letter_map(&GL2Z::fricke(n as i64), C64::new(eps, 0.0))?;
    let upper = ray_j(family, w, depth, opts)?;
    let lower = ray_j(family, fricke_preimage(n, w), depth, opts)?.apply_letter_map(&map)?;
    Ok(TotalMellin { series: lower.inverse()?.mul(&upper)?, level: n, split: w })
}

/// Same as [`total_mellin_at`] with the pulled-back forms `g_N^* omega_v`
/// given explicitly (over the same alphabet) instead of a letter map.
pub fn total_mellin_with_pullback(
    family: &OmegaFamily,
    pulled: &OmegaFamily,
    n: u64,
    depth: usize,
    w: C64,
    opts: &MellinOptions,
) -> Result<TotalMellin> {
    check_split(n, w)?;
    if !Arc::ptr_eq(&family.alphabet, &pulled.alphabet) && *family.alphabet != *pulled.alphabet {
        return Err(Error::Mismatch("pulled-back family uses another alphabet".into()));
    }
    let upper = ray_j(family, w, depth, opts)?;
    let lower = ray_j(pulled, fricke_preimage(n, w), depth, opts)?;
    let lower = NcSeries::from_terms(family.alphabet.clone(), depth, lower.terms().map(|(w, c)| (w.clone(), *c)))?;
    Ok(TotalMellin { series: lower.inverse()?.mul(&upper)?, level: n, split: w })
}

pub fn total_mellin(family: &OmegaFamily, n: u64, eps: f64, depth: usize, opts: &MellinOptions) -> Result<TotalMellin> {
    total_mellin_at(family, n, eps, depth, fixed_point(n), opts)
}

/// The family with every `s_v` replaced by `2r - s_v`, and the scalars `c_v`
/// with `g_N^* omega_v = c_v omega'_v`.
pub fn fricke_partner(family: &OmegaFamily, n: u64, eps: f64) -> Result<(OmegaFamily, Vec<C64>)> {
    let mut forms = Vec::new();
    let mut scalars = Vec::new();
    for v in 0..family.forms.len() {
        let m = family.modular_form(v as u16).ok_or_else(|| Error::NotStable("functional equation needs forms of modular type".into()))?;
        let (c, s2) = fricke_pullback(m, n, eps);
        forms.push(Form::Modular(FormOfModularType { form: m.form.clone(), s: s2, scale: m.scale }));
        scalars.push(c);
    }
    Ok((OmegaFamily::new(family.alphabet.clone(), forms)?, scalars))
}

#[derive(Clone, Debug)]
pub struct FunctionalEquationCheck {
    pub residual: f64,
    pub tm: TotalMellin,
    pub partner: TotalMellin,
    pub scalars: Vec<C64>,
}

/// `TM(s) = (c_*(TM(2r - s)))^{-1}` with `c_*` scaling `A_v` by `c_v`.
/// The partner transform is split at `2i/sqrt(N)` so the identity is not
/// built into the computation.
pub fn check_functional_equation(
    family: &OmegaFamily,
    n: u64,
    eps: f64,
    depth: usize,
    opts: &MellinOptions,
) -> Result<FunctionalEquationCheck> {
    let tm = total_mellin(family, n, eps, depth, opts)?;
    let (partner_family, scalars) = fricke_partner(family, n, eps)?;
    let partner = total_mellin_at(&partner_family, n, eps, depth, fixed_point(n) * 2.0, opts)?;
    let rhs = partner.series.scale_letters(&scalars)?.inverse()?;
    Ok(FunctionalEquationCheck { residual: tm.series.max_abs_diff(&rhs), tm, partner, scalars })
}

/// Integrals between `i inf` and rational cusps for a level-one family stable
/// under `SL_2(Z)`, built from `J_{i inf}^0` and the continued-fraction chain.
#[derive(Clone, Debug)]
pub struct CuspIntegrals {
    pub family: OmegaFamily,
    pub depth: usize,
    /// `J_{i inf}^0`.
    pub j0: NcSeries,
}

impl CuspIntegrals {
    pub fn new(family: OmegaFamily, depth: usize, split: C64, opts: &MellinOptions) -> Result<Self> {
        let j0 = total_mellin_at(&family, 1, 1.0, depth, split, opts)?.series;
        Ok(CuspIntegrals { family, depth, j0 })
    }

    pub fn map(&self, g: &GL2Z) -> Result<LetterMap> {
        if g.det() != 1 {
            return Err(Error::Invalid(format!("{g:?} is not in SL_2(Z)")));
        }
        self.family.letter_map(g, C64::new(1.0, 0.0))
    }

    /// `J_{i inf}^a = prod_k g_{k*}(J_0^{i inf})`, leftmost factor for the
    /// convergent nearest `a`.
    pub fn j_inf_to(&self, a: &BoundaryPoint) -> Result<NcSeries> {
        let j0_inv = self.j0.inverse()?;
        let mut out = NcSeries::one(self.family.alphabet.clone(), self.depth);
        for g in decompose_to_primitives(a)? {
            out = out.mul(&j0_inv.apply_letter_map(&self.map(&g)?)?)?;
        }
        Ok(out)
    }

    /// `zeta_a(gamma) = J^a_{gamma a}`, the integral from `gamma a` to `a`.
    pub fn cocycle(&self, a: &BoundaryPoint, gamma: &GL2Z) -> Result<NcSeries> {
        self.map(gamma)?;
        let ga = mobius(gamma, a);
        self.j_inf_to(a)?.mul(&self.j_inf_to(&ga)?.inverse()?)
    }

    /// `max |zeta(g h) - zeta(g) g_*(zeta(h))|` divided by `max(1, max |zeta(g h)|)`.
    pub fn cocycle_residual(&self, a: &BoundaryPoint, g: &GL2Z, h: &GL2Z) -> Result<f64> {
        let lhs = self.cocycle(a, &g.mul(h))?;
        let rhs = self.cocycle(a, g)?.mul(&self.cocycle(a, h)?.apply_letter_map(&self.map(g)?)?)?;
        Ok(relative_diff(&lhs, &rhs))
    }

    /// `max |zeta_b(g) - J^b_a zeta_a(g) g_*(J^a_b)|`, relative as in
    /// [`cocycle_residual`](Self::cocycle_residual).
    pub fn coboundary_residual(&self, a: &BoundaryPoint, b: &BoundaryPoint, g: &GL2Z) -> Result<f64> {
        // J^b_a = J_{i inf}^b (J_{i inf}^a)^{-1}
        let jab = self.j_inf_to(b)?.mul(&self.j_inf_to(a)?.inverse()?)?;
        let rhs = jab.mul(&self.cocycle(a, g)?)?.mul(&jab.inverse()?.apply_letter_map(&self.map(g)?)?)?;
        Ok(relative_diff(&self.cocycle(b, g)?, &rhs))
    }
}

/// `max |a - b| / max(1, max |a|)`. Coefficients at cusps with large
/// denominators grow like `q^{2(r-1)D}`, so absolute differences carry that scale.
pub fn relative_diff(a: &NcSeries, b: &NcSeries) -> f64 {
    a.max_abs_diff(b) / a.max_abs().max(1.0)
}

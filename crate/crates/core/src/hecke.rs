//! Hecke and Eichler-Shimura relations for iterated integrals of cusp forms.

use std::sync::Arc;

use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::itint::{Form, OmegaFamily};
use crate::mellin::{fixed_point, total_mellin_at, total_mellin_with_pullback, MellinOptions};
use crate::modforms::{weight2_pullback, FormOfModularType, FourierExpansion, GL2Z};
use crate::ncseries::{Alphabet, LetterId, NcSeries, C64};

/// One weight-2 eigenform with its prime and eigenvalue.
#[derive(Clone, Debug)]
pub struct HeckeForm {
    pub form: Arc<FourierExpansion>,
    pub p: u64,
    pub lambda: C64,
    /// Fricke eigenvalue at the form's level.
    pub eps: f64,
}

/// Base family `V` and the derived families `U = V + V'` and `W = {(v, b)}`.
#[derive(Clone, Debug)]
pub struct HeckeSetup {
    pub base: Vec<HeckeForm>,
    pub level: u64,
    pub v_alphabet: Arc<Alphabet>,
    pub u_alphabet: Arc<Alphabet>,
    pub w_alphabet: Arc<Alphabet>,
    /// Worst relative residual of `lambda f = p f(pz) + sum_b (1/p) f((z+b)/p)`.
    pub validation_residual: f64,
}

/// Twenty points with `0.4 <= Im z <= 1.35`.
pub fn hecke_sample_points() -> Vec<C64> {
    (0..20).map(|k| C64::new(-0.45 + 0.05 * k as f64, 0.4 + 0.05 * k as f64)).collect()
}

/// `max_z |lambda f(z) - p f(pz) - sum_b (1/p) f((z+b)/p)| / max_z |f(z)|`.
pub fn eigen_residual(f: &FourierExpansion, p: u64, lambda: C64, points: &[C64]) -> f64 {
    let pf = p as f64;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &z in points {
        let fz = f.value(z);
        let mut rhs = f.value(z * pf) * pf;
        for b in 0..p {
            rhs += f.value((z + b as f64) / pf) / pf;
        }
        worst = worst.max((fz * lambda - rhs).norm());
        scale = scale.max(fz.norm());
    }
    worst / scale.max(1e-300)
}

impl HeckeSetup {
    /// Validates every `lambda_v` against the pointwise eigen-identity before use.
    pub fn new(base: Vec<HeckeForm>) -> Result<Self> {
        let level = base.first().map(|h| h.form.level).ok_or_else(|| Error::Invalid("empty Hecke family".into()))?;
        let mut worst: f64 = 0.0;
        for h in &base {
            if h.form.weight != 2 || h.form.level != level || h.form.period != 1 {
                return Err(Error::Invalid(format!("{} is not a weight-2 form of level {level}", h.form.id)));
            }
            if level % h.p == 0 {
                return Err(Error::Invalid(format!("p = {} divides the level {level}", h.p)));
            }
            let r = eigen_residual(&h.form, h.p, h.lambda, &hecke_sample_points());
            if r > 1e-6 {
                return Err(Error::HeckeValidation(r));
            }
            worst = worst.max(r);
        }
        let names: Vec<String> = base.iter().map(|h| h.form.id.clone()).collect();
        let v_alphabet = Arc::new(Alphabet::new(names.clone())?);
        let u_alphabet = Arc::new(Alphabet::new(names.iter().cloned().chain(names.iter().map(|n| format!("{n}'"))))?);
        let w_alphabet = Arc::new(Alphabet::new(base.iter().flat_map(|h| (0..h.p).map(move |b| format!("({},{b})", h.form.id))))?);
        Ok(HeckeSetup { base, level, v_alphabet, u_alphabet, w_alphabet, validation_residual: worst })
    }

    /// `lambda = a_p`, read off the normalized expansion.
    pub fn from_forms(forms: Vec<(Arc<FourierExpansion>, u64)>) -> Result<Self> {
        let base = forms
            .into_iter()
            .map(|(f, p)| {
                let eps = crate::modforms::fricke_eigenvalue(&f, f.level)?;
                let lambda = f.coeff(p as usize) / f.coeff(1);
                Ok(HeckeForm { form: f, p, lambda, eps })
            })
            .collect::<Result<Vec<_>>>()?;
        HeckeSetup::new(base)
    }

    /// Index of `(v, b)` in the `W` alphabet.
    fn w_index(&self, v: usize, b: u64) -> usize {
        self.base[..v].iter().map(|h| h.p as usize).sum::<usize>() + b as usize
    }

    /// Matrices `M_u` with `omega_u = M_u^* omega_v`, for `U` and for `W`.
    fn matrices(&self) -> (Vec<(usize, GL2Z)>, Vec<(usize, GL2Z)>) {
        let nv = self.base.len();
        let mut u: Vec<(usize, GL2Z)> = (0..nv).map(|v| (v, GL2Z::identity())).collect();
        u.extend(self.base.iter().enumerate().map(|(v, h)| (v, GL2Z::new(h.p as i64, 0, 0, 1))));
        let w = self.base.iter().enumerate().flat_map(|(v, h)| (0..h.p as i64).map(move |b| (v, GL2Z::new(1, b, 0, h.p as i64)))).collect();
        (u, w)
    }

    fn families(&self, alphabet: &Arc<Alphabet>, mats: &[(usize, GL2Z)]) -> Result<(OmegaFamily, OmegaFamily)> {
        let g_n = GL2Z::fricke(self.level as i64);
        let mut forms = Vec::new();
        let mut pulled = Vec::new();
        for (v, m) in mats {
            let h = &self.base[*v];
            let direct = if *m == GL2Z::identity() {
                (*h.form).clone()
            } else {
                h.form.slash_upper(Rational64::from_integer(m.a), Rational64::from_integer(m.b), Rational64::from_integer(m.d))?
            };
            forms.push(Form::Modular(FormOfModularType::new(Arc::new(direct), 1)));
            let back = weight2_pullback(&h.form, h.eps, &m.mul(&g_n))?;
            pulled.push(Form::Modular(FormOfModularType::new(Arc::new(back), 1)));
        }
        Ok((OmegaFamily::new(alphabet.clone(), forms)?, OmegaFamily::new(alphabet.clone(), pulled)?))
    }

    pub fn u_families(&self) -> Result<(OmegaFamily, OmegaFamily)> {
        let (u, _) = self.matrices();
        self.families(&self.u_alphabet, &u)
    }

    pub fn w_families(&self) -> Result<(OmegaFamily, OmegaFamily)> {
        let (_, w) = self.matrices();
        self.families(&self.w_alphabet, &w)
    }

    /// `l(A_v) = lambda_v A_v`, `l(A_{v'}) = -A_v`.
    pub fn hom_l(&self, x: &NcSeries) -> Result<NcSeries> {
        if **x.alphabet() != *self.u_alphabet {
            return Err(Error::Mismatch("hom_l expects a series over the U alphabet".into()));
        }
        let nv = self.base.len();
        let images: Vec<Vec<(LetterId, C64)>> = (0..2 * nv)
            .map(|u| if u < nv { vec![(u as LetterId, self.base[u].lambda)] } else { vec![((u - nv) as LetterId, C64::new(-1.0, 0.0))] })
            .collect();
        x.substitute(self.v_alphabet.clone(), &images)
    }

    /// `r(B_{(v, b)}) = A_v`.
    pub fn hom_r(&self, x: &NcSeries) -> Result<NcSeries> {
        if **x.alphabet() != *self.w_alphabet {
            return Err(Error::Mismatch("hom_r expects a series over the W alphabet".into()));
        }
        let mut images = vec![Vec::new(); self.w_alphabet.len()];
        for (v, h) in self.base.iter().enumerate() {
            for b in 0..h.p {
                images[self.w_index(v, b)] = vec![(v as LetterId, C64::new(1.0, 0.0))];
            }
        }
        x.substitute(self.v_alphabet.clone(), &images)
    }
}

#[derive(Clone, Debug)]
pub struct HeckeCheck {
    pub lhs: NcSeries,
    pub rhs: NcSeries,
    pub residual: f64,
}

/// `l(J_{i inf}^0(omega_U))` against `r(J_{i inf}^0(omega_W))`, both computed by
/// splitting the path at `w` and pulling the lower half back under `g_N`.
pub fn check_hecke(setup: &HeckeSetup, depth: usize, w: C64, opts: &MellinOptions) -> Result<HeckeCheck> {
    let (fu, pu) = setup.u_families()?;
    let (fw, pw) = setup.w_families()?;
    let ju = total_mellin_with_pullback(&fu, &pu, setup.level, depth, w, opts)?.series;
    let jw = total_mellin_with_pullback(&fw, &pw, setup.level, depth, w, opts)?.series;
    let lhs = setup.hom_l(&ju)?;
    let rhs = setup.hom_r(&jw)?;
    Ok(HeckeCheck { residual: lhs.max_abs_diff(&rhs), lhs, rhs })
}

pub fn check_hecke_default(setup: &HeckeSetup, depth: usize) -> Result<HeckeCheck> {
    check_hecke(setup, depth, fixed_point(setup.level), &MellinOptions::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EsRelation {
    Sigma,
    Tau,
}

impl std::str::FromStr for EsRelation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" | "s" => Ok(EsRelation::Sigma),
            "tau" | "t" => Ok(EsRelation::Tau),
            _ => Err(Error::Invalid(format!("unknown relation '{s}', expected sigma or tau"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EsCheck {
    /// `J_0^{i inf}`.
    pub j: NcSeries,
    pub product: NcSeries,
    pub residual: f64,
}

/// Default split for the level-one checks, away from the fixed point of `sigma`
/// so the relations are not built into `J`.
pub const ES_SPLIT: C64 = C64::new(0.3, 1.1);

/// `sigma_*(J) J - 1` or `tau_*^2(J) tau_*(J) J - 1` with `J = J_0^{i inf}` of a
/// level-one family whose span is stable under `SL_2(Z)`.
pub fn eichler_shimura_check(family: &OmegaFamily, which: EsRelation, depth: usize, w: C64, opts: &MellinOptions) -> Result<EsCheck> {
    let one = C64::new(1.0, 0.0);
    let sigma = GL2Z::sigma();
    // stability: every letter must be f z^{s-1} dz for a single f of level one
    let map_sigma = family.letter_map(&sigma, one)?;
    if family.modular_form(0).map(|f| f.form.level) != Some(1) {
        return Err(Error::NotStable("Eichler-Shimura relations need a level-one family".into()));
    }
    let j = total_mellin_at(family, 1, 1.0, depth, w, opts)?.series.inverse()?;
    let product = match which {
        EsRelation::Sigma => j.apply_letter_map(&map_sigma)?.mul(&j)?,
        EsRelation::Tau => {
            let tau = GL2Z::tau();
            let t1 = family.letter_map(&tau, one)?;
            let t2 = family.letter_map(&tau.mul(&tau), one)?;
            // J_1^0 J_{i inf}^1 J_0^{i inf}
            let j10 = j.apply_letter_map(&t2)?;
            let j_inf1 = j.apply_letter_map(&t1)?;
            j10.mul(&j_inf1)?.mul(&j)?
        }
    };
    Ok(EsCheck { residual: product.distance_from_one(), j, product })
}

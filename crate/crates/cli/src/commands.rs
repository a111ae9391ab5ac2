use std::sync::Arc;

use anyhow::{bail, Context};
use clap::Args;
use ncmodsym_core::hecke::{check_hecke, eichler_shimura_check, HeckeSetup, ES_SPLIT};
use ncmodsym_core::itint::{total_j, total_j_quadrature};
use ncmodsym_core::mds::{
    enumerate_shuffles, j_vertical_series, j_vertical_via_l, l_limit, l_series, series_letters, shuffle_count, theorem42_check, word_via_l,
    CoefficientsData, LLimit, LParams, SeriesLetter,
};
use ncmodsym_core::mellin::{
    check_functional_equation, fixed_point, modular_family, relative_diff, total_mellin_at, CuspIntegrals, MellinOptions,
};
use ncmodsym_core::modforms::{builtin_form, fricke_eigenvalue, QexpCache};
use ncmodsym_core::paths::{convergents, decompose_to_primitives};
use ncmodsym_core::regint::{check_duality, drinfeld_associator, zeta_partial};
use ncmodsym_core::{
    BoundaryPoint, EngineOptions, EsRelation, FourierExpansion, NcSeries, OmegaFamily, PathSpec, QuadOptions, Report, RunConfig, C64, GL2Z,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::Command;

fn parse_complex(s: &str) -> anyhow::Result<C64> {
    let (re, im) = s.split_once(',').with_context(|| format!("expected re,im but got {s:?}"))?;
    Ok(C64::new(re.trim().parse()?, im.trim().parse()?))
}

fn cjson(z: C64) -> Value {
    json!([z.re, z.im])
}

fn mjson(g: &GL2Z) -> Value {
    json!([[g.a, g.b], [g.c, g.d]])
}

#[derive(Args, Debug)]
pub struct FamilyArgs {
    /// Built-in form: `delta` (level 1, weight 12) or `11a` (level 11, weight 2)
    #[arg(long, default_value = "delta")]
    pub family: String,
    /// Mellin arguments, one letter each [default: 2,6,10 for delta, 1 for 11a]
    #[arg(long, value_delimiter = ',')]
    pub s: Vec<i64>,
    /// Split point `re,im` [default: the Fricke fixed point]
    #[arg(long, allow_hyphen_values = true, value_parser = parse_complex)]
    pub split: Option<C64>,
}

#[derive(Args, Debug)]
pub struct ShuffleArgs {
    #[command(flatten)]
    pub fam: FamilyArgs,
    /// Endpoint `re,im` of the ray from i inf
    #[arg(long, default_value = "0,1", allow_hyphen_values = true, value_parser = parse_complex)]
    pub z: C64,
}

#[derive(Args, Debug)]
pub struct HeckeArgs {
    /// Primes not dividing 11
    #[arg(long, value_delimiter = ',', default_values_t = [2u64, 3])]
    pub p: Vec<u64>,
}

#[derive(Args, Debug)]
pub struct EsArgs {
    /// `sigma`, `tau` or both
    #[arg(long, value_delimiter = ',', default_values = ["sigma", "tau"])]
    pub relation: Vec<EsRelation>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_complex)]
    pub split: Option<C64>,
}

#[derive(Args, Debug)]
pub struct CocycleArgs {
    #[arg(long, default_value_t = 5)]
    pub pairs: usize,
    /// Largest absolute matrix entry
    #[arg(long, default_value_t = 3)]
    pub entries: i64,
    #[arg(long, default_value_t = 10)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct DirichletArgs {
    #[arg(long, default_value = "delta")]
    pub family: String,
    /// Mellin arguments of the letters, outermost first
    #[arg(long, value_delimiter = ',', required = true)]
    pub s: Vec<i64>,
    /// Exponents j_k, ..., j_1, outermost first [default: all zero]
    #[arg(long, value_delimiter = ',')]
    pub j: Vec<u32>,
    #[arg(long, default_value = "0,1", allow_hyphen_values = true, value_parser = parse_complex)]
    pub z: C64,
}

#[derive(Args, Debug)]
pub struct ProductArgs {
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub l: usize,
    /// Data vanish for indices past this cutoff
    #[arg(long, default_value_t = 6)]
    pub cutoff: usize,
    #[arg(long, default_value_t = 20)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct Thm32Args {
    #[command(flatten)]
    pub fam: FamilyArgs,
    /// Endpoints `re,im`; repeat the flag for several
    #[arg(long, allow_hyphen_values = true, value_parser = parse_complex)]
    pub z: Vec<C64>,
}

#[derive(Args, Debug)]
pub struct CfArgs {
    /// Rational cusp `p/q`
    #[arg(long, default_value = "3/7", allow_hyphen_values = true)]
    pub cusp: BoundaryPoint,
}

#[derive(Args, Debug)]
pub struct AssocArgs {
    /// Order of the local power series at 0 and 1
    #[arg(long, default_value_t = 96)]
    pub order: usize,
}

/// Loads forms through the cache when one is configured.
struct Ctx<'a> {
    cfg: &'a RunConfig,
    cache: Option<QexpCache>,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Ctx { cfg, cache: cfg.cache_dir.as_ref().map(QexpCache::new) }
    }

    fn form(&self, id: &str, n_max: usize) -> anyhow::Result<Arc<FourierExpansion>> {
        let f = match &self.cache {
            Some(c) => c.builtin(id, n_max)?,
            None => builtin_form(id, n_max)?,
        };
        Ok(Arc::new(f))
    }

    fn tol(&self, default: f64) -> f64 {
        self.cfg.tolerance(default)
    }

    fn engine(&self) -> EngineOptions {
        EngineOptions::with_steps(self.cfg.steps)
    }

    fn quad(&self) -> QuadOptions {
        QuadOptions { nodes: self.cfg.nodes, ..QuadOptions::default() }
    }

    fn mellin(&self) -> MellinOptions {
        MellinOptions { engine: self.engine(), quad: self.quad(), t_height: self.cfg.height }
    }

    /// Family, level and measured Fricke sign.
    fn family(&self, a: &FamilyArgs) -> anyhow::Result<(OmegaFamily, u64, f64)> {
        let f = self.form(&a.family, self.cfg.n_max)?;
        let s = if a.s.is_empty() {
            match a.family.as_str() {
                "delta" => vec![2, 6, 10],
                _ => vec![1],
            }
        } else {
            a.s.clone()
        };
        let level = f.level;
        let eps = fricke_eigenvalue(&f, level)?;
        Ok((modular_family(f, &s)?, level, eps))
    }

    fn weight12(&self) -> anyhow::Result<OmegaFamily> {
        Ok(modular_family(self.form("delta", self.cfg.n_max)?, &(1..=11).collect::<Vec<_>>())?)
    }
}

pub fn run(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<Report> {
    let ctx = Ctx::new(cfg);
    let mut r = Report::new(cmd.name());
    match cmd {
        Command::Mellin(a) => mellin(&ctx, a, &mut r)?,
        Command::CheckFunceq(a) => check_funceq(&ctx, a, &mut r)?,
        Command::CheckShuffle(a) => check_shuffle(&ctx, a, &mut r)?,
        Command::CheckHecke(a) => check_hecke_cmd(&ctx, a, &mut r)?,
        Command::CheckEs(a) => check_es(&ctx, a, &mut r)?,
        Command::CheckCocycle(a) => check_cocycle(&ctx, a, &mut r)?,
        Command::DirichletEval(a) => dirichlet_eval(&ctx, a, &mut r)?,
        Command::ShuffleCheck(a) => shuffle_check(&ctx, a, &mut r)?,
        Command::Thm32Check(a) => thm32_check(&ctx, a, &mut r)?,
        Command::CfDecompose(a) => cf_decompose(&ctx, a, &mut r)?,
        Command::Assoc(a) => assoc(&ctx, a, &mut r)?,
    }
    Ok(r)
}

fn family_inputs(r: &mut Report, a: &FamilyArgs, fam: &OmegaFamily) {
    let labels: Vec<&str> = fam.alphabet.letters().iter().map(|l| l.label.as_str()).collect();
    r.input("family", &a.family).input("letters", labels);
}

fn mellin(ctx: &Ctx, a: &FamilyArgs, r: &mut Report) -> anyhow::Result<()> {
    let (fam, level, eps) = ctx.family(a)?;
    family_inputs(r, a, &fam);
    let split = a.split.unwrap_or_else(|| fixed_point(level));
    let tm = total_mellin_at(&fam, level, eps, ctx.cfg.depth, split, &ctx.mellin())?;
    let (_, gl) = tm.series.is_group_like(0.0);
    r.check("total Mellin transform is group-like", gl, ctx.tol(1e-8));
    r.payload = json!({ "level": level, "fricke_sign": eps, "split": cjson(split), "series": tm.series.to_json() });
    Ok(())
}

fn check_funceq(ctx: &Ctx, a: &FamilyArgs, r: &mut Report) -> anyhow::Result<()> {
    let (fam, level, eps) = ctx.family(a)?;
    family_inputs(r, a, &fam);
    let opts = ctx.mellin();
    let fe = check_functional_equation(&fam, level, eps, ctx.cfg.depth, &opts)?;
    r.check("TM(s) = c_*(TM(2r - s))^{-1}", fe.residual, ctx.tol(1e-6));
    let other = total_mellin_at(&fam, level, eps, ctx.cfg.depth, fixed_point(level) * 2.0, &opts)?;
    r.check("split at i/sqrt(N) vs 2i/sqrt(N)", fe.tm.series.max_abs_diff(&other.series), ctx.tol(1e-8));
    let scalars: Vec<Value> = fe.scalars.iter().map(|c| cjson(*c)).collect();
    r.payload = json!({ "level": level, "fricke_sign": eps, "scalars": scalars, "total_mellin": fe.tm.series.to_json() });
    Ok(())
}

fn check_shuffle(ctx: &Ctx, a: &ShuffleArgs, r: &mut Report) -> anyhow::Result<()> {
    let (fam, _, _) = ctx.family(&a.fam)?;
    family_inputs(r, &a.fam, &fam);
    r.input("z", cjson(a.z));
    let path = PathSpec::from_infinity(a.z, fam.ray_height(ctx.cfg.height))?;
    let j = total_j(&fam, &path, ctx.cfg.depth, &ctx.engine())?;
    let (_, res) = j.is_group_like(0.0);
    r.check(format!("J_{{i inf}}^z group-like, D = {}", ctx.cfg.depth), res, ctx.tol(1e-8));
    r.payload = json!({ "series": j.to_json() });
    Ok(())
}

fn check_hecke_cmd(ctx: &Ctx, a: &HeckeArgs, r: &mut Report) -> anyhow::Result<()> {
    let f = ctx.form("11a", ctx.cfg.n_max)?;
    r.input("form", "11a").input("primes", &a.p);
    let opts = ctx.mellin();
    let depth = ctx.cfg.depth;
    let results: Vec<anyhow::Result<(f64, f64, f64)>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            a.p.iter()
                .map(|&p| {
                    let (f, opts) = (f.clone(), opts.clone());
                    s.spawn(move || -> anyhow::Result<(f64, f64, f64)> {
                        let setup = HeckeSetup::from_forms(vec![(f, p)])?;
                        let c = check_hecke(&setup, depth, fixed_point(setup.level), &opts)?;
                        Ok((setup.validation_residual, c.residual, c.lhs.max_abs()))
                    })
                })
                .collect();
        handles.into_iter().map(|h| h.join().expect("Hecke worker panicked")).collect()
    });
    let mut scales = Vec::new();
    for (p, res) in a.p.iter().zip(results) {
        let (valid, rel, scale) = res?;
        r.check(format!("p = {p}: pointwise eigen-identity"), valid, ctx.tol(1e-8));
        r.check(format!("p = {p}: l(J_U) = r(J_W), D = {depth}"), rel, ctx.tol(1e-6));
        scales.push(json!({ "p": p, "max_coefficient": scale }));
    }
    r.payload = json!({ "checks": scales });
    Ok(())
}

fn check_es(ctx: &Ctx, a: &EsArgs, r: &mut Report) -> anyhow::Result<()> {
    let fam = ctx.weight12()?;
    let split = a.split.unwrap_or(ES_SPLIT);
    r.input("split", cjson(split));
    let opts = ctx.mellin();
    let depth = ctx.cfg.depth;
    let results: Vec<anyhow::Result<(f64, NcSeries)>> = std::thread::scope(|s| {
        let handles: Vec<_> = a
            .relation
            .iter()
            .map(|&which| {
                let (fam, opts) = (&fam, &opts);
                s.spawn(move || -> anyhow::Result<(f64, NcSeries)> {
                    let c = eichler_shimura_check(fam, which, depth, split, opts)?;
                    Ok((c.residual, c.j))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("Eichler-Shimura worker panicked")).collect()
    });
    let mut j = None;
    for (which, res) in a.relation.iter().zip(results) {
        let (residual, series) = res?;
        let name = match which {
            EsRelation::Sigma => "sigma_*(J) J = 1",
            EsRelation::Tau => "tau_*^2(J) tau_*(J) J = 1",
        };
        r.check(format!("{name}, D = {depth}"), residual, ctx.tol(1e-6));
        j = Some(series);
    }
    r.payload = json!({ "j_0_inf": j.map(|s| s.to_json()) });
    Ok(())
}

fn random_sl2(rng: &mut ChaCha8Rng, bound: i64) -> GL2Z {
    loop {
        let e: Vec<i64> = (0..4).map(|_| rng.gen_range(-bound..=bound)).collect();
        let g = GL2Z::new(e[0], e[1], e[2], e[3]);
        if g.det() == 1 {
            return g;
        }
    }
}

fn check_cocycle(ctx: &Ctx, a: &CocycleArgs, r: &mut Report) -> anyhow::Result<()> {
    if a.entries < 1 {
        bail!(ncmodsym_core::Error::Invalid("--entries must be at least 1".into()));
    }
    r.input("pairs", a.pairs).input("entries", a.entries).input("seed", a.seed);
    let cusps = CuspIntegrals::new(ctx.weight12()?, ctx.cfg.depth, ES_SPLIT, &ctx.mellin())?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let inf = BoundaryPoint::infinity();
    let zero = BoundaryPoint::cusp(0, 1)?;
    let (mut worst, mut worst_cob): (f64, f64) = (0.0, 0.0);
    let mut pairs = Vec::new();
    for _ in 0..a.pairs {
        let (g, h) = (random_sl2(&mut rng, a.entries), random_sl2(&mut rng, a.entries));
        let res = cusps.cocycle_residual(&inf, &g, &h)?;
        worst = worst.max(res);
        worst_cob = worst_cob.max(cusps.coboundary_residual(&inf, &zero, &g)?);
        pairs.push(json!({ "g": mjson(&g), "h": mjson(&h), "residual": res }));
    }
    r.check("zeta(g h) = zeta(g) g_*(zeta(h)) (relative)", worst, ctx.tol(1e-6));
    r.check("zeta_0 = J^0_inf zeta_inf g_*(J^inf_0) (relative)", worst_cob, ctx.tol(1e-6));
    r.payload = json!({ "pairs": pairs });
    Ok(())
}

fn dirichlet_eval(ctx: &Ctx, a: &DirichletArgs, r: &mut Report) -> anyhow::Result<()> {
    let f = ctx.form(&a.family, ctx.cfg.n_max)?;
    let fam = modular_family(f, &a.s)?;
    let letters = series_letters(&fam)?;
    let j = if a.j.is_empty() { vec![0; a.s.len()] } else { a.j.clone() };
    r.input("family", &a.family).input("s", &a.s).input("j", &j).input("z", cjson(a.z));
    let params = LParams::new(letters.clone(), j)?;
    let (value, bound) = l_series(a.z, &params, ctx.cfg.n_max)?;
    r.check("bound on omitted terms", bound, ctx.tol(1e-10));
    let word: Vec<&SeriesLetter> = letters.iter().collect();
    let via_l = word_via_l(&word, a.z)?;
    let direct = ncmodsym_core::mds::word_series(&word, a.z);
    r.check("word integral: j-sum of L vs D-polynomial series", (via_l - direct).norm() / direct.norm().max(1e-300), ctx.tol(1e-8));
    let limit = match l_limit(&params) {
        LLimit::Value { value, bound } => json!({ "kind": "value", "value": cjson(value), "bound": bound }),
        LLimit::Zero => json!({ "kind": "zero" }),
        LLimit::NeedsRegularization => json!({ "kind": "needs_regularization" }),
    };
    r.payload = json!({
        "value": cjson(value),
        "tail_bound": bound,
        "dirichlet_exponents": params.dirichlet_args().into_iter().rev().collect::<Vec<_>>(),
        "limit_at_zero": limit,
        "word_integral": cjson(direct),
    });
    Ok(())
}

fn random_data(rng: &mut ChaCha8Rng, depth: usize, cutoff: usize) -> anyhow::Result<CoefficientsData> {
    let mut d = CoefficientsData::ones(depth, cutoff);
    for j in 1..=depth {
        for i in 0..j {
            for n in 1..=cutoff {
                for m in 0..n {
                    d.set(j, i, n, m, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))?;
                }
            }
        }
    }
    Ok(d)
}

fn shuffle_check(ctx: &Ctx, a: &ProductArgs, r: &mut Report) -> anyhow::Result<()> {
    if a.k == 0 || a.l == 0 || a.cutoff == 0 {
        bail!(ncmodsym_core::Error::Invalid("k, l and cutoff must be positive".into()));
    }
    r.input("k", a.k).input("l", a.l).input("cutoff", a.cutoff).input("seed", a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let c = random_data(&mut rng, a.k, a.cutoff)?;
    let d = random_data(&mut rng, a.l, a.cutoff)?;
    let s: Vec<C64> = (0..a.k).map(|_| C64::new(rng.gen_range(1.0..3.0), rng.gen_range(-1.0..1.0))).collect();
    let t: Vec<C64> = (0..a.l).map(|_| C64::new(rng.gen_range(1.0..3.0), rng.gen_range(-1.0..1.0))).collect();
    let pc = theorem42_check(&c, &d, &s, &t)?;
    r.check(format!("L_C(s) L_D(t) = sum over shuffles, (k, l) = ({}, {})", a.k, a.l), pc.residual, ctx.tol(1e-12));
    let mut bad = 0;
    for k in 0..=a.k {
        for l in 0..=a.l {
            let rec = if k > 0 && l > 0 { shuffle_count(k - 1, l) + shuffle_count(k, l - 1) + shuffle_count(k - 1, l - 1) } else { 1 };
            if enumerate_shuffles(k, l).len() as u64 != rec {
                bad += 1;
            }
        }
    }
    r.check("shuffle counts follow N(k,l) = N(k-1,l) + N(k,l-1) + N(k-1,l-1)", bad as f64, 0.0);
    r.payload = json!({ "lhs": cjson(pc.lhs), "rhs": cjson(pc.rhs), "shuffles": pc.shuffles });
    Ok(())
}

fn max_rel(a: &NcSeries, b: &NcSeries) -> f64 {
    a.terms().filter(|(w, _)| !w.is_empty()).map(|(w, c)| (c - b.coeff(w)).norm() / b.coeff(w).norm().max(1e-300)).fold(0.0, f64::max)
}

fn thm32_check(ctx: &Ctx, a: &Thm32Args, r: &mut Report) -> anyhow::Result<()> {
    let (fam, _, _) = ctx.family(&a.fam)?;
    family_inputs(r, &a.fam, &fam);
    let zs = if a.z.is_empty() { vec![C64::new(0.0, 1.0), C64::new(0.0, 0.5)] } else { a.z.clone() };
    r.input("z", zs.iter().map(|z| cjson(*z)).collect::<Vec<_>>());
    let depth = ctx.cfg.depth;
    let mut out = Vec::new();
    for z in zs {
        let series = j_vertical_series(&fam, z, depth)?;
        let via_l = j_vertical_via_l(&fam, z, depth)?;
        let path = PathSpec::from_infinity(z, fam.ray_height(ctx.cfg.height))?;
        let quad = total_j_quadrature(&fam, &path, depth, &ctx.quad())?;
        r.check(format!("series vs quadrature at z = {z} (relative)"), max_rel(&series, &quad), ctx.tol(1e-7));
        r.check(format!("j-sum of L vs series at z = {z} (relative)"), max_rel(&via_l, &series), ctx.tol(1e-8));
        out.push(json!({ "z": cjson(z), "series": series.to_json() }));
    }
    r.payload = json!({ "points": out });
    Ok(())
}

fn cf_decompose(ctx: &Ctx, a: &CfArgs, r: &mut Report) -> anyhow::Result<()> {
    let BoundaryPoint::Cusp { p, q } = a.cusp else {
        bail!(ncmodsym_core::Error::Invalid("cf-decompose needs a cusp".into()));
    };
    r.input("cusp", a.cusp.to_string());
    if q == 0 {
        r.payload = json!({ "convergents": [[1, 0]], "matrices": [] });
        r.check("nothing to decompose at i inf", 0.0, 0.0);
        return Ok(());
    }
    let chain = convergents(p, q)?;
    let bad = chain.matrices.iter().filter(|g| g.det() != 1).count();
    r.check("every g_k has determinant 1", bad as f64, 0.0);
    let fam = ctx.weight12()?;
    let cusps = CuspIntegrals::new(fam.clone(), ctx.cfg.depth, ES_SPLIT, &ctx.mellin())?;
    let via_cf = cusps.j_inf_to(&a.cusp)?;
    // J_{i inf}^a = g_*(J_{z0}^{i inf}) J_{i inf}^w with g(i inf) = a and w = g(z0) above a
    let g = decompose_to_primitives(&a.cusp)?[0];
    let w = C64::new(p as f64 / q as f64, 1.0 / q as f64);
    let z0 = g.adjugate().act(w);
    let ray = |z: C64| -> anyhow::Result<NcSeries> {
        Ok(total_j(&fam, &PathSpec::from_infinity(z, fam.ray_height(ctx.cfg.height))?, ctx.cfg.depth, &ctx.engine())?)
    };
    let composed = ray(z0)?.inverse()?.apply_letter_map(&fam.letter_map(&g, C64::new(1.0, 0.0))?)?.mul(&ray(w)?)?;
    r.check("primitive chain vs composed path (relative)", relative_diff(&via_cf, &composed), ctx.tol(1e-6));
    r.payload = json!({
        "convergents": chain.convergents,
        "matrices": chain.matrices.iter().map(mjson).collect::<Vec<_>>(),
        "j_inf_to_cusp": via_cf.to_json(),
    });
    Ok(())
}

fn assoc(ctx: &Ctx, a: &AssocArgs, r: &mut Report) -> anyhow::Result<()> {
    r.input("order", a.order);
    let phi = match drinfeld_associator(ctx.cfg.depth, a.order) {
        Ok(phi) => phi,
        Err(ncmodsym_core::Error::EnginesDisagree(x)) => {
            r.check("series at 1/2 vs cutoff extrapolation", x, ctx.tol(1e-6));
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    if ctx.cfg.depth >= 2 {
        let unit = zeta_partial(2, 1_000_000) / (2.0 * std::f64::consts::PI).powi(2);
        r.check("|coefficient of A0 A1| vs zeta(2)/(2 pi)^2", (phi.phi.coeff(&[0, 1]).norm() - unit).abs() / unit, ctx.tol(1e-8));
    }
    let (_, gl) = phi.phi.is_group_like(0.0);
    r.check("group-like", gl, ctx.tol(1e-8));
    r.check("duality swap_*(Phi) Phi = 1", check_duality(&phi.phi)?, ctx.tol(1e-7));
    r.check("series at 1/2 vs cutoff extrapolation", phi.engine_disagreement, ctx.tol(1e-6));
    r.payload = json!({ "phi": phi.phi.to_json(), "tail_bound": phi.tail_bound });
    Ok(())
}

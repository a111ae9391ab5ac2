//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 3 12`.

use std::sync::Arc;
use std::time::Instant;

use ncmodsym_core::hecke::{check_hecke_default, eichler_shimura_check, EsRelation, HeckeSetup, ES_SPLIT};
use ncmodsym_core::itint::{cycle_check, total_j, total_j_multi_lower, total_j_quadrature};
use ncmodsym_core::mds::{enumerate_shuffles, j_vertical_series, shuffle_count, theorem42_check, verify_d_polys, CoefficientsData};
use ncmodsym_core::mellin::{
    check_functional_equation, classical_mellin_split, fixed_point, modular_family, relative_diff, total_mellin, total_mellin_at,
    weight12_family, CuspIntegrals, MellinOptions,
};
use ncmodsym_core::modforms::{delta_qexp, fricke_eigenvalue, level11_qexp};
use ncmodsym_core::regint::{check_duality, drinfeld_associator, zeta_partial};
use ncmodsym_core::{
    Alphabet, BoundaryPoint, CheckRow, EngineOptions, Form, FormOfModularType, NcSeries, NonlinearOmega, PathSpec, QuadOptions, Result,
    C64, GL2Z,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ci(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn delta(n_max: usize) -> Arc<ncmodsym_core::FourierExpansion> {
    Arc::new(delta_qexp(n_max))
}

fn c1_group_like() -> Result<Vec<CheckRow>> {
    let fam = modular_family(delta(96), &[2, 6, 10])?;
    let path = PathSpec::from_infinity(ci(0.0, 1.0), fam.ray_height(12.0))?;
    let j = total_j(&fam, &path, 4, &EngineOptions::default())?;
    let (_, r) = j.is_group_like(1e-8);
    Ok(vec![CheckRow::new("group-like J_{i inf}^{i}, D = 4", r, 1e-8)])
}

fn c2_dual_engine() -> Result<Vec<CheckRow>> {
    let fam = modular_family(delta(96), &[12, 10])?;
    let mut rows = Vec::new();
    for z in [ci(0.0, 1.0), ci(0.0, 0.5)] {
        let series = j_vertical_series(&fam, z, 2)?;
        let quad = total_j_quadrature(&fam, &PathSpec::from_infinity(z, 12.0)?, 2, &QuadOptions::default())?;
        let worst = series
            .terms()
            .filter(|(w, _)| !w.is_empty())
            .map(|(w, c)| (c - quad.coeff(w)).norm() / quad.coeff(w).norm())
            .fold(0.0, f64::max);
        rows.push(CheckRow::new(format!("series vs quadrature at z = {z}"), worst, 1e-7));
    }
    Ok(rows)
}

fn c3_d_polys() -> Result<Vec<CheckRow>> {
    let rep = verify_d_polys(8, 5);
    Ok(vec![
        CheckRow::new(format!("recursion = closed form ({} cases)", rep.cases), rep.mismatches as f64, 0.0),
        CheckRow::new("constant-term specializations", rep.specialization_failures as f64, 0.0),
        CheckRow::new("case count 6^8 - 1", (rep.cases as f64 - 1_679_615.0).abs(), 0.0),
    ])
}

fn c4_classical_fe() -> Result<Vec<CheckRow>> {
    let d = delta(96);
    let opts = MellinOptions::default();
    let mut worst: f64 = 0.0;
    for s in 1..=5i64 {
        // split points differ so the identity is not built in
        let a = classical_mellin_split(&d, ci(s as f64, 0.0), 1, 1.0, fixed_point(1), &opts)?;
        let b = classical_mellin_split(&d, ci((12 - s) as f64, 0.0), 1, 1.0, ci(0.3, 1.2), &opts)?;
        let sign = if (s - 1) % 2 == 0 { 1.0 } else { -1.0 };
        worst = worst.max((a + b * sign).norm() / a.norm());
    }
    Ok(vec![CheckRow::new("Lambda(s) + (-1)^(s-1) Lambda(12 - s), s = 1..5", worst, 1e-10)])
}

fn c5_total_fe() -> Result<Vec<CheckRow>> {
    let opts = MellinOptions::default();
    let fam = modular_family(delta(96), &[2, 6, 10])?;
    let a = check_functional_equation(&fam, 1, 1.0, 3, &opts)?;
    let f = Arc::new(level11_qexp(200));
    let eps = fricke_eigenvalue(&f, 11)?;
    let fam = modular_family(f, &[1])?;
    let b = check_functional_equation(&fam, 11, eps, 2, &opts)?;
    Ok(vec![
        CheckRow::new("Delta, s in {2,6,10}, D = 3", a.residual, 1e-6),
        CheckRow::new(format!("level 11 (eps = {eps}), D = 2"), b.residual, 1e-6),
    ])
}

fn c6_split_independence() -> Result<Vec<CheckRow>> {
    let opts = MellinOptions::default();
    let fam = modular_family(delta(96), &[2, 6, 10])?;
    let a = total_mellin(&fam, 1, 1.0, 3, &opts)?;
    let b = total_mellin_at(&fam, 1, 1.0, 3, fixed_point(1) * 2.0, &opts)?;
    let f = Arc::new(level11_qexp(200));
    let eps = fricke_eigenvalue(&f, 11)?;
    let fam11 = modular_family(f, &[1])?;
    let c = total_mellin(&fam11, 11, eps, 2, &opts)?;
    let d = total_mellin_at(&fam11, 11, eps, 2, fixed_point(11) * 2.0, &opts)?;
    Ok(vec![
        CheckRow::new("Delta: split i vs 2i", a.series.max_abs_diff(&b.series), 1e-8),
        CheckRow::new("level 11: split i/sqrt(11) vs 2i/sqrt(11)", c.series.max_abs_diff(&d.series), 1e-8),
    ])
}

fn random_data(rng: &mut ChaCha8Rng, depth: usize, cutoff: usize) -> Result<CoefficientsData> {
    let mut d = CoefficientsData::ones(depth, cutoff);
    for j in 1..=depth {
        for i in 0..j {
            for n in 1..=cutoff {
                for m in 0..n {
                    d.set(j, i, n, m, ci(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))?;
                }
            }
        }
    }
    Ok(d)
}

fn c7_product_theorem() -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut rows = Vec::new();
    for (k, l) in [(1, 1), (2, 1), (2, 2)] {
        let c = random_data(&mut rng, k, 6)?;
        let d = random_data(&mut rng, l, 6)?;
        let s: Vec<C64> = (0..k).map(|_| ci(rng.gen_range(1.0..3.0), rng.gen_range(-1.0..1.0))).collect();
        let t: Vec<C64> = (0..l).map(|_| ci(rng.gen_range(1.0..3.0), rng.gen_range(-1.0..1.0))).collect();
        rows.push(CheckRow::new(format!("(k, l) = ({k}, {l}), U = 6"), theorem42_check(&c, &d, &s, &t)?.residual, 1e-12));
    }
    let mut bad = 0;
    for k in 0..=5 {
        for l in 0..=5 {
            let mut rec = 1u64;
            if k > 0 && l > 0 {
                rec = shuffle_count(k - 1, l) + shuffle_count(k, l - 1) + shuffle_count(k - 1, l - 1);
            }
            if enumerate_shuffles(k, l).len() as u64 != rec {
                bad += 1;
            }
        }
    }
    rows.push(CheckRow::new("shuffle counts follow the recurrence, k, l <= 5", bad as f64, 0.0));
    Ok(rows)
}

fn c8_hecke() -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for p in [2u64, 3] {
        let setup = HeckeSetup::from_forms(vec![(Arc::new(level11_qexp(400)), p)])?;
        rows.push(CheckRow::new(format!("p = {p}: pointwise eigen-identity"), setup.validation_residual, 1e-8));
        rows.push(CheckRow::new(format!("p = {p}: l(J_U) = r(J_W), D = 2"), check_hecke_default(&setup, 2)?.residual, 1e-6));
    }
    Ok(rows)
}

fn c9_eichler_shimura() -> Result<Vec<CheckRow>> {
    let fam = weight12_family(96)?;
    let opts = MellinOptions::default();
    let s = eichler_shimura_check(&fam, EsRelation::Sigma, 2, ES_SPLIT, &opts)?;
    let t = eichler_shimura_check(&fam, EsRelation::Tau, 2, ES_SPLIT, &opts)?;
    Ok(vec![CheckRow::new("sigma relation, D = 2", s.residual, 1e-6), CheckRow::new("tau relation, D = 2", t.residual, 1e-6)])
}

fn random_sl2(rng: &mut ChaCha8Rng) -> GL2Z {
    loop {
        let e: Vec<i64> = (0..4).map(|_| rng.gen_range(-3..=3)).collect();
        let g = GL2Z::new(e[0], e[1], e[2], e[3]);
        if g.det() == 1 {
            return g;
        }
    }
}

fn c10_cocycle() -> Result<Vec<CheckRow>> {
    let cusps = CuspIntegrals::new(weight12_family(96)?, 2, ES_SPLIT, &MellinOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let inf = BoundaryPoint::infinity();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (g, h) = (random_sl2(&mut rng), random_sl2(&mut rng));
        worst = worst.max(cusps.cocycle_residual(&inf, &g, &h)?);
    }
    Ok(vec![CheckRow::new("zeta(g h) = zeta(g) g_*(zeta(h)), 5 random pairs (relative)", worst, 1e-6)])
}

fn c11_continued_fraction() -> Result<Vec<CheckRow>> {
    let fam = weight12_family(96)?;
    let opts = MellinOptions::default();
    let cusps = CuspIntegrals::new(fam.clone(), 2, ES_SPLIT, &opts)?;
    let via_cf = cusps.j_inf_to(&BoundaryPoint::cusp(3, 7)?)?;
    // J_{i inf}^{3/7} = g_*(J_{z0}^{i inf}) J_{i inf}^{w}, g(i inf) = 3/7, g(z0) = w
    let g = GL2Z::new(3, -1, 7, -2);
    let (z0, w) = (ci(2.0 / 7.0, 1.0 / 7.0), ci(3.0 / 7.0, 1.0 / 7.0));
    let ray =
        |z: C64| -> Result<NcSeries> { total_j(&fam, &PathSpec::from_infinity(z, fam.ray_height(12.0))?, 2, &EngineOptions::default()) };
    let map = fam.letter_map(&g, ci(1.0, 0.0))?;
    let composed = ray(z0)?.inverse()?.apply_letter_map(&map)?.mul(&ray(w)?)?;
    let abs = via_cf.max_abs_diff(&composed);
    Ok(vec![CheckRow::new(
        format!("J_{{i inf}}^{{3/7}}: primitive chain vs composed path (relative; absolute {abs:.2e} at scale {:.2e})", via_cf.max_abs()),
        relative_diff(&via_cf, &composed),
        1e-6,
    )])
}

fn c13_multi_lower() -> Result<Vec<CheckRow>> {
    let q = QuadOptions::default();
    let fam = modular_family(delta(96), &[2, 6])?;
    let (z, a) = (ci(0.2, 1.1), ci(-0.1, 0.9));
    let lower = |pos: usize, v: u16| -> C64 { ci(0.1 * v as f64 - 0.05 * pos as f64, 0.8 + 0.2 * pos as f64) };
    let lhs = total_j_multi_lower(&fam, &lower, z, 2, &q)?;
    let rhs =
        total_j(&fam, &PathSpec::polyline(&[a, z])?, 2, &EngineOptions::default())?.mul(&total_j_multi_lower(&fam, &lower, a, 2, &q)?)?;
    let w12 = weight12_family(96)?;
    let g = GL2Z::new(1, 1, 0, 1).mul(&GL2Z::sigma());
    let pos_lower = |pos: usize, _: u16| -> C64 { ci(0.1 * pos as f64, 1.0 + 0.1 * pos as f64) };
    let moved = |pos: usize, v: u16| -> C64 { g.act(pos_lower(pos, v)) };
    let zz = ci(0.15, 1.2);
    let lhs2 = total_j_multi_lower(&w12, &moved, g.act(zz), 2, &q)?;
    let rhs2 = total_j_multi_lower(&w12, &pos_lower, zz, 2, &q)?.apply_letter_map(&w12.letter_map(&g, ci(1.0, 0.0))?)?;
    let scale = rhs2.max_abs().max(1.0);
    Ok(vec![
        CheckRow::new("J^z_(a.) = J^z_a J^a_(a.), D = 2", lhs.max_abs_diff(&rhs), 1e-6),
        CheckRow::new(
            format!("J^{{gz}}_(g a.) = g_*(J^z_(a.)), D = 2 (relative; scale {scale:.2e})"),
            lhs2.max_abs_diff(&rhs2) / scale,
            1e-6,
        ),
    ])
}

fn c12_associator() -> Result<Vec<CheckRow>> {
    let phi = drinfeld_associator(4, 96)?;
    let unit = zeta_partial(2, 1_000_000) / (2.0 * std::f64::consts::PI).powi(2);
    let (_, gl) = phi.phi.is_group_like(1e-8);
    Ok(vec![
        CheckRow::new("|coefficient of A0 A1| vs zeta(2)/(2 pi)^2", (phi.phi.coeff(&[0, 1]).norm() - unit).abs() / unit, 1e-8),
        CheckRow::new("group-like, weight <= 4", gl, 1e-8),
        CheckRow::new("duality", check_duality(&phi.phi)?, 1e-7),
        CheckRow::new("series at 1/2 vs cutoff extrapolation", phi.engine_disagreement, 1e-6),
    ])
}

fn c14_nonlinear_cycle() -> Result<Vec<CheckRow>> {
    let alphabet = Arc::new(Alphabet::new(["a", "b"])?);
    let d = delta(96);
    let om = NonlinearOmega::new(
        alphabet,
        vec![
            (vec![0], Form::Modular(FormOfModularType::new(d.clone(), 2))),
            (vec![1], Form::Poly(vec![ci(0.5, 0.0), ci(0.0, 1.0)])),
            (vec![0, 1], Form::Modular(FormOfModularType::new(d, 6))),
        ],
    )?;
    let r = cycle_check(&om, &[ci(0.0, 1.0), ci(0.6, 0.9), ci(0.2, 1.6)], 3, &EngineOptions::default())?;
    Ok(vec![CheckRow::new("triangle, two-word Omega, D = 3", r, 1e-8)])
}

type Criterion = (usize, &'static str, fn() -> Result<Vec<CheckRow>>);

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "shuffle / group-like", c1_group_like),
        (2, "dual-engine equivalence", c2_dual_engine),
        (3, "D-polynomials", c3_d_polys),
        (4, "classical functional equation", c4_classical_fe),
        (5, "total Mellin functional equation", c5_total_fe),
        (6, "split-point independence", c6_split_independence),
        (7, "product of multiple Dirichlet series", c7_product_theorem),
        (8, "Hecke relation", c8_hecke),
        (9, "Eichler-Shimura relations", c9_eichler_shimura),
        (10, "cocycle", c10_cocycle),
        (11, "continued fractions", c11_continued_fraction),
        (12, "Drinfeld associator", c12_associator),
        (13, "multiple lower limits", c13_multi_lower),
        (14, "nonlinear Omega cycle", c14_nonlinear_cycle),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(rows) => {
                let pass = rows.iter().all(|r| r.pass);
                let detail = rows
                    .iter()
                    .map(|r| format!("{} {:.2e}/{:.0e}{}", r.name, r.residual, r.tolerance, if r.pass { "" } else { " FAIL" }))
                    .collect::<Vec<_>>()
                    .join("; ");
                (pass, detail)
            }
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {n:2} {} {name} [{:.1}s]: {detail}", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

//! Points of `H` and its cusps, piecewise-smooth integration paths, and the
//! continued-fraction chain of matrices joining `i inf` to a rational cusp.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::modforms::{ext_gcd, GL2Z};
use crate::ncseries::C64;

pub const DEFAULT_RAY_HEIGHT: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryPoint {
    /// `p/q` in lowest terms with `q >= 0`; `i inf` is `1/0`.
    Cusp {
        p: i64,
        q: i64,
    },
    Interior(C64),
}

impl BoundaryPoint {
    pub fn cusp(p: i64, q: i64) -> Result<Self> {
        if p == 0 && q == 0 {
            return Err(Error::Invalid("0/0 is not a cusp".into()));
        }
        let (g, _, _) = ext_gcd(p, q);
        let (mut p, mut q) = (p / g, q / g);
        if q < 0 || (q == 0 && p < 0) {
            p = -p;
            q = -q;
        }
        Ok(BoundaryPoint::Cusp { p, q })
    }

    pub fn infinity() -> Self {
        BoundaryPoint::Cusp { p: 1, q: 0 }
    }

    pub fn interior(z: C64) -> Result<Self> {
        if z.im > 0.0 && z.is_finite() {
            Ok(BoundaryPoint::Interior(z))
        } else {
            Err(Error::NotInUpperHalfPlane(z))
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, BoundaryPoint::Cusp { q: 0, .. })
    }

    pub fn as_interior(&self) -> Option<C64> {
        match self {
            BoundaryPoint::Interior(z) => Some(*z),
            _ => None,
        }
    }
}

impl fmt::Display for BoundaryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryPoint::Cusp { q: 0, .. } => write!(f, "inf"),
            BoundaryPoint::Cusp { p, q: 1 } => write!(f, "{p}"),
            BoundaryPoint::Cusp { p, q } => write!(f, "{p}/{q}"),
            BoundaryPoint::Interior(z) => write!(f, "{}{:+}i", z.re, z.im),
        }
    }
}

impl FromStr for BoundaryPoint {
    type Err = Error;

    /// Accepts `inf`, `p/q` and integers.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "inf" || s == "i_inf" || s == "oo" {
            return Ok(BoundaryPoint::infinity());
        }
        let bad = || Error::Invalid(format!("cannot parse cusp {s:?}"));
        match s.split_once('/') {
            Some((p, q)) => {
                let p = p.trim().parse::<i64>().map_err(|_| bad())?;
                let q = q.trim().parse::<i64>().map_err(|_| bad())?;
                BoundaryPoint::cusp(p, q)
            }
            None => BoundaryPoint::cusp(s.parse::<i64>().map_err(|_| bad())?, 1),
        }
    }
}

/// Fractional linear action, exact on cusps.
pub fn mobius(g: &GL2Z, x: &BoundaryPoint) -> BoundaryPoint {
    match *x {
        BoundaryPoint::Cusp { p, q } => {
            BoundaryPoint::cusp(g.a * p + g.b * q, g.c * p + g.d * q).expect("invertible matrices map cusps to cusps")
        }
        BoundaryPoint::Interior(z) => BoundaryPoint::Interior(g.act(z)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvergentChain {
    /// `p_k/q_k` for `k = -1..=n`.
    pub convergents: Vec<(i64, i64)>,
    /// `g_k` for `k = 0..=n`.
    pub matrices: Vec<GL2Z>,
}

/// Continued-fraction convergents of `p/q` with floor partial quotients, so
/// negative rationals work too (the leading quotient absorbs the translation).
pub fn convergents(p: i64, q: i64) -> Result<ConvergentChain> {
    if q <= 0 {
        return Err(Error::Invalid("convergents need a finite rational p/q with q > 0".into()));
    }
    let (mut num, mut den) = (p, q);
    let (mut pm2, mut qm2, mut pm1, mut qm1) = (0i64, 1i64, 1i64, 0i64);
    let mut convergents = vec![(1, 0)];
    let mut matrices = Vec::new();
    let mut k = 0usize;
    loop {
        let a = num.div_euclid(den);
        let (pk, qk) = (a * pm1 + pm2, a * qm1 + qm2);
        let sign = if k % 2 == 1 { 1 } else { -1 };
        matrices.push(GL2Z::new(pk, sign * pm1, qk, sign * qm1));
        convergents.push((pk, qk));
        (pm2, qm2, pm1, qm1) = (pm1, qm1, pk, qk);
        let r = num.rem_euclid(den);
        if r == 0 {
            break;
        }
        (num, den) = (den, r);
        k += 1;
    }
    Ok(ConvergentChain { convergents, matrices })
}

/// Matrices `g_n, ..., g_0` such that
/// `J_{i inf}^{a} = prod_k g_{k*}(J_0^{i inf})` in this left-to-right order.
pub fn decompose_to_primitives(a: &BoundaryPoint) -> Result<Vec<GL2Z>> {
    match *a {
        BoundaryPoint::Cusp { q: 0, .. } => Ok(Vec::new()),
        BoundaryPoint::Cusp { p, q } => {
            let mut m = convergents(p, q)?.matrices;
            m.reverse();
            Ok(m)
        }
        BoundaryPoint::Interior(_) => Err(Error::Invalid("decomposition needs a rational cusp".into())),
    }
}

/// A smooth piece of a path, parametrized on `[u0, u1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Segment {
    /// `z = a + (b - a) u`, `u` in `[0, 1]`.
    Line { a: C64, b: C64 },
    /// `z = center + dir * e^u`; vertical rays use `dir = i`.
    Radial { center: C64, dir: C64, u0: f64, u1: f64 },
}

impl Segment {
    pub fn u_range(&self) -> (f64, f64) {
        match *self {
            Segment::Line { .. } => (0.0, 1.0),
            Segment::Radial { u0, u1, .. } => (u0, u1),
        }
    }

    pub fn point(&self, u: f64) -> C64 {
        match *self {
            Segment::Line { a, b } => a + (b - a) * u,
            Segment::Radial { center, dir, .. } => center + dir * u.exp(),
        }
    }

    pub fn deriv(&self, u: f64) -> C64 {
        match *self {
            Segment::Line { a, b } => b - a,
            Segment::Radial { dir, .. } => dir * u.exp(),
        }
    }

    pub fn start(&self) -> C64 {
        self.point(self.u_range().0)
    }

    pub fn end(&self) -> C64 {
        self.point(self.u_range().1)
    }

    pub fn reversed(&self) -> Segment {
        match *self {
            Segment::Line { a, b } => Segment::Line { a: b, b: a },
            Segment::Radial { center, dir, u0, u1 } => Segment::Radial { center, dir, u0: u1, u1: u0 },
        }
    }

    /// Length used to size step counts: the larger of the hyperbolic and
    /// Euclidean lengths for lines in `H`, the parameter length for radial pieces.
    pub fn step_length(&self) -> f64 {
        match *self {
            Segment::Line { a, b } => {
                let e = (b - a).norm();
                if a.im > 0.0 && b.im > 0.0 {
                    let h = (1.0 + (a - b).norm_sqr() / (2.0 * a.im * b.im)).acosh();
                    h.max(e)
                } else {
                    e
                }
            }
            Segment::Radial { u0, u1, .. } => (u1 - u0).abs(),
        }
    }

    /// Split into pieces of parameter length at most `max_du`.
    pub fn split(&self, max_du: f64) -> Vec<Segment> {
        let (u0, u1) = self.u_range();
        let n = (((u1 - u0).abs() / max_du).ceil() as usize).max(1);
        if n == 1 {
            return vec![*self];
        }
        (0..n)
            .map(|i| {
                let (s, t) = (u0 + (u1 - u0) * i as f64 / n as f64, u0 + (u1 - u0) * (i + 1) as f64 / n as f64);
                match *self {
                    Segment::Line { a, b } => Segment::Line { a: a + (b - a) * s, b: a + (b - a) * t },
                    Segment::Radial { center, dir, .. } => Segment::Radial { center, dir, u0: s, u1: t },
                }
            })
            .collect()
    }
}

/// An oriented path `from -> to` as a head-to-tail list of segments. A path
/// starting or ending at `i inf` begins or ends with a vertical ray cut at
/// `ray_height`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub from: BoundaryPoint,
    pub to: BoundaryPoint,
    pub segments: Vec<Segment>,
    pub ray_height: Option<f64>,
}

impl PathSpec {
    /// Straight pieces through interior points.
    pub fn polyline(points: &[C64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("polyline needs at least one point".into()));
        }
        for z in points {
            BoundaryPoint::interior(*z)?;
        }
        let segments = points.windows(2).filter(|w| w[0] != w[1]).map(|w| Segment::Line { a: w[0], b: w[1] }).collect();
        Ok(PathSpec {
            from: BoundaryPoint::Interior(points[0]),
            to: BoundaryPoint::Interior(*points.last().unwrap()),
            segments,
            ray_height: None,
        })
    }

    /// The vertical ray from `Re z + i height` down to `z`, standing for the
    /// path from `i inf`.
    pub fn from_infinity(z: C64, height: f64) -> Result<Self> {
        BoundaryPoint::interior(z)?;
        if height <= z.im {
            return Err(Error::Invalid(format!("ray height {height} is below the endpoint {z}")));
        }
        Ok(PathSpec {
            from: BoundaryPoint::infinity(),
            to: BoundaryPoint::Interior(z),
            segments: vec![Segment::Radial { center: C64::new(z.re, 0.0), dir: C64::new(0.0, 1.0), u0: height.ln(), u1: z.im.ln() }],
            ray_height: Some(height),
        })
    }

    /// Path between two points of `H` or `i inf`. Finite cusps are rejected;
    /// those are reached through functoriality instead.
    pub fn between(from: &BoundaryPoint, to: &BoundaryPoint, height: f64) -> Result<Self> {
        match (*from, *to) {
            (BoundaryPoint::Interior(a), BoundaryPoint::Interior(b)) => PathSpec::polyline(&[a, b]),
            (f, BoundaryPoint::Interior(b)) if f.is_infinity() => PathSpec::from_infinity(b, height),
            (BoundaryPoint::Interior(a), t) if t.is_infinity() => Ok(PathSpec::from_infinity(a, height)?.reversed()),
            _ => Err(Error::Invalid(format!("no direct path from {from} to {to}"))),
        }
    }

    pub fn reversed(&self) -> Self {
        PathSpec {
            from: self.to,
            to: self.from,
            segments: self.segments.iter().rev().map(Segment::reversed).collect(),
            ray_height: self.ray_height,
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &PathSpec) -> Result<Self> {
        if self.to != next.from {
            return Err(Error::Invalid(format!("paths do not meet: {} vs {}", self.to, next.from)));
        }
        let mut segments = self.segments.clone();
        segments.extend(next.segments.iter().copied());
        Ok(PathSpec { from: self.from, to: next.to, segments, ray_height: self.ray_height.or(next.ray_height) })
    }
}

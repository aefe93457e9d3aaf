//! Vector fields on the torus: the linear field `(1, α)` and its slowed
//! variant `f · (1, α)` where `f ≥ 0` vanishes exactly on a puncture set.

use serde::Serialize;

use crate::torus::{wrap_unit, TangentVector, TorusPoint};
use crate::{Error, Result};

/// Largest denominator probed by the irrationality check.
pub const Q_MAX: u64 = 1_000_000;
/// A slope closer than this to some `p/q` with `q ≤ Q_MAX` is treated as rational.
pub const TOL_RATIONAL: f64 = 1e-12;
/// Tolerance for deciding that two points lie on one orbit line.
pub const TOL_ORBIT: f64 = 1e-9;
pub const MAX_PUNCTURES: usize = 64;
pub const DEFAULT_R0: f64 = 0.05;

/// `χ(u) / (χ(u) + χ(1 − u))` with `χ(u) = exp(−1/u)` for `u > 0`, else 0.
///
/// Smooth, 0 on `u ≤ 0`, 1 on `u ≥ 1`, strictly increasing in between.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / u).exp();
    let b = (-1.0 / (1.0 - u)).exp();
    a / (a + b)
}

/// Slope of the linear flow together with its continued-fraction convergents.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeParam {
    alpha: f64,
    convergents: Vec<(u64, u64)>,
}

impl SlopeParam {
    /// Accepts `alpha > 0` only if none of its continued-fraction convergents
    /// `p/q` with `q ≤ Q_MAX` lies within [`TOL_RATIONAL`] of it.
    ///
    /// The convergents are taken from the exact binary value of `alpha`.
    /// Since some `q ≤ Q_MAX` always approximates to about `1/(q·Q_MAX)`,
    /// several classic irrationals (√3, e, the golden ratio) are rejected.
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::invalid(format!("slope must be finite and positive, got {alpha}")));
        }
        if alpha < TOL_RATIONAL {
            return Err(Error::invalid(format!("slope {alpha} is within tolerance of 0/1")));
        }
        let partial_quotients = exact_partial_quotients(alpha)
            .ok_or_else(|| Error::invalid(format!("slope {alpha} is an integer or out of range")))?;

        let mut convergents = Vec::new();
        // (p_{k-2}, q_{k-2}), (p_{k-1}, q_{k-1})
        let (mut pp, mut qp): (u128, u128) = (0, 1);
        let (mut p, mut q): (u128, u128) = (1, 0);
        for a in partial_quotients {
            let a = a as u128;
            let pn = a * p + pp;
            let qn = a * q + qp;
            if qn > Q_MAX as u128 {
                break;
            }
            check_rational(alpha, pn, qn)?;
            convergents.push((pn as u64, qn as u64));
            (pp, qp, p, q) = (p, q, pn, qn);
        }
        Ok(SlopeParam { alpha, convergents })
    }

    pub fn sqrt2() -> Self {
        SlopeParam::new(std::f64::consts::SQRT_2).expect("√2 passes the irrationality check")
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Convergents `(p_k, q_k)` with `q_k ≤ Q_MAX`.
    pub fn convergents(&self) -> &[(u64, u64)] {
        &self.convergents
    }
}

fn check_rational(alpha: f64, p: u128, q: u128) -> Result<()> {
    let err = (alpha - p as f64 / q as f64).abs();
    if err < TOL_RATIONAL {
        return Err(Error::invalid(format!(
            "slope {alpha} is within {err:e} of {p}/{q}; not usable as an irrational slope"
        )));
    }
    Ok(())
}

/// Partial quotients of the exact binary rational represented by `v`.
/// `None` for integers or magnitudes whose denominator does not fit `i128`.
fn exact_partial_quotients(v: f64) -> Option<Vec<u64>> {
    let bits = v.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut mant, mut exp) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    if exp >= 0 {
        return None;
    }
    let tz = mant.trailing_zeros().min((-exp) as u32);
    mant >>= tz;
    exp += tz as i32;
    if exp == 0 || -exp > 120 {
        return None;
    }
    let (mut num, mut den) = (mant as u128, 1u128 << (-exp));
    let mut out = Vec::new();
    while den != 0 {
        let a = num / den;
        out.push(u64::try_from(a).ok()?);
        (num, den) = (den, num - a * den);
    }
    Some(out)
}

/// Finite puncture set with a common slowing radius.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PunctureSet {
    points: Vec<TorusPoint>,
    r0: f64,
}

impl PunctureSet {
    pub fn new(points: Vec<TorusPoint>, r0: f64) -> Result<Self> {
        if points.is_empty() || points.len() > MAX_PUNCTURES {
            return Err(Error::invalid(format!(
                "puncture count must be in 1..={MAX_PUNCTURES}, got {}",
                points.len()
            )));
        }
        if !(r0 > 0.0 && r0 < 0.25) {
            return Err(Error::invalid(format!("r0 must lie in (0, 1/4), got {r0}")));
        }
        for (i, p) in points.iter().enumerate() {
            for q in &points[i + 1..] {
                if p.dist(q) <= 2.0 * r0 {
                    return Err(Error::invalid(format!(
                        "punctures {p} and {q} are closer than 2·r0 = {}",
                        2.0 * r0
                    )));
                }
            }
        }
        Ok(PunctureSet { points, r0 })
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn contains(&self, p: &TorusPoint) -> bool {
        self.points.iter().any(|q| q == p)
    }

    /// Distance from `p` to the nearest puncture.
    pub fn nearest_distance(&self, p: &TorusPoint) -> f64 {
        self.points
            .iter()
            .map(|q| p.dist_sq(q))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}

/// `∏_q smooth_step(dist(p, q)² / r0²)`: 0 exactly on the punctures, 1 outside
/// every slowing disk.
pub fn slowing_factor(p: &TorusPoint, punctures: &PunctureSet) -> f64 {
    let r0_sq = punctures.r0 * punctures.r0;
    let mut f = 1.0;
    for q in &punctures.points {
        let d_sq = p.dist_sq(q);
        if d_sq < r0_sq {
            f *= smooth_step(d_sq / r0_sq);
        }
    }
    f
}

/// The field `f · (1, α)`; `f ≡ 1` when there are no punctures.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompositeField {
    slope: SlopeParam,
    punctures: Option<PunctureSet>,
    bound: f64,
}

impl CompositeField {
    /// The unslowed linear field.
    pub fn linear(slope: SlopeParam) -> Self {
        let bound = slope.alpha.hypot(1.0);
        CompositeField {
            slope,
            punctures: None,
            bound,
        }
    }

    pub fn slope(&self) -> &SlopeParam {
        &self.slope
    }

    pub fn alpha(&self) -> f64 {
        self.slope.alpha
    }

    pub fn punctures(&self) -> Option<&PunctureSet> {
        self.punctures.as_ref()
    }

    pub fn puncture_points(&self) -> &[TorusPoint] {
        self.punctures.as_ref().map_or(&[], |f| f.points())
    }

    /// `√(1 + α²)`, an upper bound on the field norm.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_puncture(&self, p: &TorusPoint) -> bool {
        self.punctures.as_ref().is_some_and(|f| f.contains(p))
    }

    #[inline]
    pub fn speed_factor(&self, p: &TorusPoint) -> f64 {
        match &self.punctures {
            Some(f) => slowing_factor(p, f),
            None => 1.0,
        }
    }

    #[inline]
    pub fn eval(&self, p: &TorusPoint) -> TangentVector {
        let f = self.speed_factor(p);
        TangentVector::new(f, f * self.slope.alpha)
    }
}

/// Verdict for one ordered pair of punctures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum PairVerdict {
    SameOrbit {
        first: TorusPoint,
        second: TorusPoint,
        s: f64,
    },
    DistinctWithinDepth {
        first: TorusPoint,
        second: TorusPoint,
    },
}

impl PairVerdict {
    pub fn is_same_orbit(&self) -> bool {
        matches!(self, PairVerdict::SameOrbit { .. })
    }
}

/// A puncture found on the orbit line of a designated special point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpecialHit {
    pub point: TorusPoint,
    pub special: TorusPoint,
    pub s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OrbitDistinctnessReport {
    pub depth: u32,
    pub pairs: Vec<PairVerdict>,
    pub special_hits: Vec<SpecialHit>,
}

impl OrbitDistinctnessReport {
    pub fn all_distinct(&self) -> bool {
        !self.pairs.iter().any(PairVerdict::is_same_orbit)
    }

    pub fn first_same_orbit(&self) -> Option<&PairVerdict> {
        self.pairs.iter().find(|v| v.is_same_orbit())
    }
}

/// Searches `m = 0, 1, −1, 2, −2, …, ±depth` for a flow time
/// `s = (q.x − p.x) + m` such that `q.y − p.y − s·α` is within
/// [`TOL_ORBIT`] of an integer. Returns the first `s` found.
pub fn same_orbit_witness(p: &TorusPoint, q: &TorusPoint, alpha: f64, depth: u32) -> Option<f64> {
    let base = q.x() - p.x();
    let dy = q.y() - p.y();
    let probe = |m: i64| {
        let s = base + m as f64;
        let r = dy - s * alpha;
        ((r - r.round()).abs() < TOL_ORBIT).then_some(s)
    };
    if let Some(s) = probe(0) {
        return Some(s);
    }
    for m in 1..=depth as i64 {
        if let Some(s) = probe(m).or_else(|| probe(-m)) {
            return Some(s);
        }
    }
    None
}

/// Pairwise orbit-line scan over the punctures, plus a check of every
/// puncture against the orbit lines of `special` points (skipping exact
/// coincidences).
pub fn check_distinct_dense_orbits(
    punctures: &PunctureSet,
    slope: &SlopeParam,
    depth: u32,
    special: &[TorusPoint],
) -> Result<OrbitDistinctnessReport> {
    if depth == 0 {
        return Err(Error::invalid("orbit scan depth must be at least 1"));
    }
    let pts = punctures.points();
    let mut pairs = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            pairs.push(match same_orbit_witness(p, q, slope.alpha, depth) {
                Some(s) => PairVerdict::SameOrbit {
                    first: *p,
                    second: *q,
                    s,
                },
                None => PairVerdict::DistinctWithinDepth {
                    first: *p,
                    second: *q,
                },
            });
        }
    }
    let mut special_hits = Vec::new();
    for p in pts {
        for sp in special.iter().filter(|sp| *sp != p) {
            if let Some(s) = same_orbit_witness(sp, p, slope.alpha, depth) {
                special_hits.push(SpecialHit {
                    point: *p,
                    special: *sp,
                    s,
                });
            }
        }
    }
    Ok(OrbitDistinctnessReport {
        depth,
        pairs,
        special_hits,
    })
}

/// Builds the slowed field after verifying that no two punctures share an
/// orbit line up to `depth`.
pub fn build_punctured_field(slope: SlopeParam, punctures: PunctureSet, depth: u32) -> Result<CompositeField> {
    let report = check_distinct_dense_orbits(&punctures, &slope, depth, &[])?;
    if let Some(&PairVerdict::SameOrbit { first, second, s }) = report.first_same_orbit() {
        return Err(Error::ConstructionRejected { first, second, s });
    }
    let bound = slope.alpha.hypot(1.0);
    Ok(CompositeField {
        slope,
        punctures: Some(punctures),
        bound,
    })
}

/// Point reached from `p` after flowing the linear field for time `s`.
pub fn along_line(p: &TorusPoint, alpha: f64, s: f64) -> TorusPoint {
    TorusPoint::wrap_finite(p.x() + s, p.y() + s * alpha)
}

/// Distance from `q` to the orbit line `{p + s(1, α)} + Z²`, measured over
/// lattice windows `|m| ≤ depth` on the x-crossings.
pub fn distance_to_line(p: &TorusPoint, q: &TorusPoint, alpha: f64, depth: u32) -> f64 {
    // For each crossing m, the vertical gap at x = q.x is wrapped into
    // [-1/2, 1/2); the perpendicular distance is gap / √(1 + α²).
    let base = q.x() - p.x();
    let dy = q.y() - p.y();
    let norm = alpha.hypot(1.0);
    let mut best = f64::INFINITY;
    for m in -(depth as i64)..=depth as i64 {
        let s = base + m as f64;
        let gap = wrap_unit(dy - s * alpha + 0.5) - 0.5;
        best = best.min(gap.abs() / norm);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> TorusPoint {
        TorusPoint::wrap(x, y).unwrap()
    }

    #[test]
    fn smooth_step_examples() {
        assert_eq!(smooth_step(-1.0), 0.0);
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(2.0), 1.0);
        assert_eq!(smooth_step(0.5), 0.5);
    }

    #[test]
    fn smooth_step_quarter_matches_closed_form() {
        // exp(-4) / (exp(-4) + exp(-4/3)), evaluated independently.
        let expected = 1.0 / (1.0 + (4.0f64 - 4.0 / 3.0).exp());
        assert!((smooth_step(0.25) - expected).abs() < 1e-15);
        assert!((smooth_step(0.25) - 0.064_969_169_128_664_06).abs() < 1e-12);
    }

    #[test]
    fn slope_sqrt2_convergents() {
        let s = SlopeParam::sqrt2();
        let qs: Vec<u64> = s.convergents().iter().map(|c| c.1).collect();
        assert_eq!(&qs[..8], &[1, 2, 5, 12, 29, 70, 169, 408]);
        assert_eq!(*qs.last().unwrap(), 470_832);
        assert_eq!(s.convergents()[3], (17, 12));
    }

    #[test]
    fn slope_rejects_rationals_and_bad_values() {
        assert!(SlopeParam::new(0.5).is_err());
        assert!(SlopeParam::new(2.0).is_err());
        assert!(SlopeParam::new(355.0 / 113.0).is_err());
        assert!(SlopeParam::new(-1.0).is_err());
        assert!(SlopeParam::new(f64::NAN).is_err());
        assert!(SlopeParam::new(1e-13).is_err());
        // 1/3 is not a binary fraction but sits within an ulp of 1/3.
        assert!(SlopeParam::new(1.0 / 3.0).is_err());
        // A ratio of two denominators near Q_MAX.
        assert!(SlopeParam::new(999_983.0 / 999_979.0).is_err());
    }

    #[test]
    fn slope_accepts_classic_irrationals() {
        for a in [std::f64::consts::SQRT_2, std::f64::consts::PI, 5f64.sqrt()] {
            SlopeParam::new(a).unwrap();
        }
    }

    #[test]
    fn slope_check_rejects_close_convergents() {
        // Convergents with q ≤ 10⁶ inside the 1e-12 tolerance.
        let cases = [
            (std::f64::consts::E, "1084483/398959"),
            (3f64.sqrt(), "978122/564719"),
            ((1.0 + 5f64.sqrt()) / 2.0, "1346269/832040"),
        ];
        for (a, frac) in cases {
            let err = SlopeParam::new(a).unwrap_err();
            assert!(err.to_string().contains(frac), "{err}");
        }
    }

    #[test]
    fn puncture_set_validation() {
        assert!(PunctureSet::new(vec![], 0.05).is_err());
        assert!(PunctureSet::new(vec![p(0.0, 0.0)], 0.0).is_err());
        assert!(PunctureSet::new(vec![p(0.0, 0.0)], 0.25).is_err());
        assert!(PunctureSet::new(vec![p(0.0, 0.0), p(0.95, 0.0)], 0.05).is_err());
        assert!(PunctureSet::new(vec![p(0.0, 0.0), p(0.0, 0.5)], 0.05).is_ok());
    }

    #[test]
    fn slowing_factor_examples() {
        let f = PunctureSet::new(vec![p(0.3, 0.3)], 0.1).unwrap();
        assert_eq!(slowing_factor(&p(0.3, 0.3), &f), 0.0);
        assert_eq!(slowing_factor(&p(0.3, 0.4), &f), 1.0);
        assert_eq!(slowing_factor(&p(0.8, 0.8), &f), 1.0);
        let half = slowing_factor(&p(0.35, 0.3), &f);
        let expected = 1.0 / (1.0 + (4.0f64 - 4.0 / 3.0).exp());
        assert!((half - expected).abs() < 1e-12);
    }

    #[test]
    fn eval_field_examples() {
        let lin = CompositeField::linear(SlopeParam::sqrt2());
        let v = lin.eval(&p(0.123, 0.456));
        assert_eq!((v.dx, v.dy), (1.0, std::f64::consts::SQRT_2));

        let f = PunctureSet::new(vec![p(0.5, 0.5)], 0.1).unwrap();
        let field = build_punctured_field(SlopeParam::sqrt2(), f, 50).unwrap();
        assert!(field.eval(&p(0.5, 0.5)).is_zero());
        let v = field.eval(&p(0.5, 0.55));
        let s = smooth_step(0.25);
        assert!((v.dx - s).abs() < 1e-15);
        assert!((v.dy - s * std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn same_orbit_pair_is_found() {
        let a = std::f64::consts::SQRT_2;
        let q = p(0.5, 0.5 * a);
        assert_eq!(same_orbit_witness(&TorusPoint::ORIGIN, &q, a, 50), Some(0.5));
        assert_eq!(same_orbit_witness(&TorusPoint::ORIGIN, &p(0.0, 0.5), a, 50), None);
    }

    #[test]
    fn distinctness_report() {
        let slope = SlopeParam::sqrt2();
        let single = PunctureSet::new(vec![p(0.2, 0.2)], 0.05).unwrap();
        let r = check_distinct_dense_orbits(&single, &slope, 10, &[]).unwrap();
        assert!(r.pairs.is_empty() && r.all_distinct());

        let two = PunctureSet::new(vec![p(0.0, 0.0), p(0.0, 0.5)], 0.05).unwrap();
        let r = check_distinct_dense_orbits(&two, &slope, 50, &[]).unwrap();
        assert!(r.all_distinct());
        assert!(matches!(
            check_distinct_dense_orbits(&two, &slope, 0, &[]),
            Err(Error::InvalidInput(_))
        ));

        // A special point lying on the orbit line of the first puncture.
        let sp = along_line(&p(0.0, 0.0), slope.alpha(), -2.25);
        let r = check_distinct_dense_orbits(&two, &slope, 50, &[sp]).unwrap();
        assert_eq!(r.special_hits.len(), 1);
        assert_eq!(r.special_hits[0].point, p(0.0, 0.0));
        assert!((r.special_hits[0].s - 2.25).abs() < 1e-12);
    }

    #[test]
    fn build_rejects_same_orbit() {
        let a = std::f64::consts::SQRT_2;
        let f = PunctureSet::new(vec![p(0.0, 0.0), p(0.5, 0.5 * a)], 0.05).unwrap();
        match build_punctured_field(SlopeParam::sqrt2(), f, 50) {
            Err(Error::ConstructionRejected { first, second, s }) => {
                assert_eq!(first, TorusPoint::ORIGIN);
                assert_eq!(s, 0.5);
                assert_eq!(along_line(&first, a, s).dist(&second), 0.0);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn build_accepts_distinct_pair_with_two_zeros() {
        let pts = vec![p(0.0, 0.0), p(0.0, 0.5)];
        let f = PunctureSet::new(pts.clone(), 0.05).unwrap();
        let field = build_punctured_field(SlopeParam::sqrt2(), f, 50).unwrap();
        for q in &pts {
            assert!(field.eval(q).is_zero());
        }
        assert_eq!(field.puncture_points().len(), 2);
        assert!((field.bound() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn line_distance() {
        let a = std::f64::consts::SQRT_2;
        let o = TorusPoint::ORIGIN;
        assert!(distance_to_line(&o, &along_line(&o, a, 7.3), a, 10) < 1e-12);
        let off = p(0.0, 0.1);
        assert!((distance_to_line(&o, &off, a, 0) - 0.1 / 3f64.sqrt()).abs() < 1e-15);
    }
}

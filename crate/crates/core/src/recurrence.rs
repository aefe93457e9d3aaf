//! Conjugated circle actions `g ∘ R_t ∘ g⁻¹` on the torus and their recurrence.
//!
//! `R_t(x, y) = (x + t, y)` is the free period-1 circle action; `g` is a
//! composition of sine shears, each area preserving with a closed-form
//! inverse, so every map evaluation is exact up to rounding.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::torus::TorusPoint;
use crate::{Error, Result};

pub const MAX_AMPLITUDE: f64 = 0.5;
pub const MAX_FREQUENCY: u32 = 32;
pub const MAX_PRIMITIVES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// `X`: `(x, y) ↦ (x, y + a·sin(2πkx))`; `Y`: `(x, y) ↦ (x + a·sin(2πky), y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shear {
    pub axis: Axis,
    pub amplitude: f64,
    pub frequency: u32,
}

impl Shear {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude.abs() <= MAX_AMPLITUDE) {
            return Err(Error::invalid(format!(
                "shear amplitude must satisfy |a| ≤ {MAX_AMPLITUDE}, got {}",
                self.amplitude
            )));
        }
        if self.frequency == 0 || self.frequency > MAX_FREQUENCY {
            return Err(Error::invalid(format!(
                "shear frequency must be in 1..={MAX_FREQUENCY}, got {}",
                self.frequency
            )));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Shear {
        Shear {
            amplitude: -self.amplitude,
            ..*self
        }
    }

    #[inline]
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        apply_shear(self.axis, self.amplitude, self.frequency, p)
    }
}

#[inline]
pub fn apply_shear(axis: Axis, a: f64, k: u32, p: &TorusPoint) -> TorusPoint {
    let w = TAU * k as f64;
    match axis {
        Axis::X => p.translate(0.0, a * (w * p.x()).sin()),
        Axis::Y => p.translate(a * (w * p.y()).sin(), 0.0),
    }
}

/// Conjugating diffeomorphism `g = s_last ∘ … ∘ s_first`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugacySpec {
    pub primitives: Vec<Shear>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ConjugacySpec {
    pub fn identity() -> Self {
        ConjugacySpec::default()
    }

    pub fn new(primitives: Vec<Shear>) -> Result<Self> {
        let spec = ConjugacySpec { primitives, seed: None };
        spec.validate()?;
        Ok(spec)
    }

    /// Seed-derived spec: 1 to 4 shears with random axis, `|a| ≤ 0.2` and
    /// frequency 1 to 3.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(1..=4);
        let primitives = (0..len)
            .map(|_| Shear {
                axis: if rng.gen_bool(0.5) { Axis::X } else { Axis::Y },
                amplitude: rng.gen_range(-0.2..=0.2),
                frequency: rng.gen_range(1..=3),
            })
            .collect();
        ConjugacySpec {
            primitives,
            seed: Some(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.len() > MAX_PRIMITIVES {
            return Err(Error::invalid(format!(
                "at most {MAX_PRIMITIVES} shears allowed, got {}",
                self.primitives.len()
            )));
        }
        self.primitives.iter().try_for_each(Shear::validate)
    }

    /// `g(p)`.
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        self.primitives.iter().fold(*p, |q, s| s.apply(&q))
    }

    /// `g⁻¹(p)`.
    pub fn apply_inverse(&self, p: &TorusPoint) -> TorusPoint {
        self.primitives.iter().rev().fold(*p, |q, s| s.inverse().apply(&q))
    }
}

/// `x ↦ g(R_t(g⁻¹(x)))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjugatedMap {
    spec: ConjugacySpec,
    t: f64,
}

impl ConjugatedMap {
    pub fn spec(&self) -> &ConjugacySpec {
        &self.spec
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    #[inline]
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        let z = self.spec.apply_inverse(p);
        self.spec.apply(&rotate(&z, self.t))
    }

    /// `fⁿ(p)` by repeated application.
    pub fn iterate(&self, p: &TorusPoint, n: u64) -> TorusPoint {
        (0..n).fold(*p, |q, _| self.apply(&q))
    }
}

/// The circle action `R_t(x, y) = (x + t, y)`.
#[inline]
pub fn rotate(p: &TorusPoint, t: f64) -> TorusPoint {
    p.translate(t, 0.0)
}

pub fn build_conjugated_map(spec: ConjugacySpec, t: f64) -> Result<ConjugatedMap> {
    spec.validate()?;
    if !t.is_finite() {
        return Err(Error::invalid(format!("rotation time must be finite, got {t}")));
    }
    Ok(ConjugatedMap { spec, t })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridReturn {
    pub grid_x: usize,
    pub grid_y: usize,
    pub point: TorusPoint,
    /// Least `n ≥ 1` with `dist(fⁿ(x), x) < delta`; `None` if no return
    /// within the budget.
    pub first_return: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceReport {
    pub m: usize,
    pub delta: f64,
    pub n_max: u64,
    pub returns: Vec<GridReturn>,
}

impl RecurrenceReport {
    pub fn failures(&self) -> usize {
        self.returns.iter().filter(|r| r.first_return.is_none()).count()
    }

    pub fn max_return(&self) -> Option<u64> {
        self.returns.iter().filter_map(|r| r.first_return).max()
    }
}

/// Grid point `(i, j)`: the cell centre `((i + ½)/m, (j + ½)/m)`.
pub fn grid_point(i: usize, j: usize, m: usize) -> TorusPoint {
    let m = m as f64;
    TorusPoint::wrap_finite((i as f64 + 0.5) / m, (j as f64 + 0.5) / m)
}

fn first_return(map: &ConjugatedMap, x: &TorusPoint, delta: f64, n_max: u64) -> Option<u64> {
    let mut q = *x;
    for n in 1..=n_max {
        q = map.apply(&q);
        if q.dist(x) < delta {
            return Some(n);
        }
    }
    None
}

/// First return times of the `m²` cell centres into their `delta`-balls.
/// Rows are ordered by `grid_y`, then `grid_x`.
pub fn recurrence_scan(map: &ConjugatedMap, m: usize, delta: f64, n_max: u64) -> Result<RecurrenceReport> {
    if m == 0 {
        return Err(Error::invalid("recurrence grid size must be positive"));
    }
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::invalid(format!("delta must lie in (0, 1/4), got {delta}")));
    }
    if n_max == 0 {
        return Err(Error::invalid("N_max must be at least 1"));
    }
    let returns = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % m, idx / m);
            let point = grid_point(i, j, m);
            let first_return = first_return(map, &point, delta, n_max);
            if let Some(n) = first_return {
                assert!(map.iterate(&point, n).dist(&point) < delta);
            }
            GridReturn {
                grid_x: i,
                grid_y: j,
                point,
                first_return,
            }
        })
        .collect();
    Ok(RecurrenceReport {
        m,
        delta,
        n_max,
        returns,
    })
}

/// A closed ball `Ū` nested in an open ball `V`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallPair {
    pub u_center: TorusPoint,
    pub u_radius: f64,
    pub v_center: TorusPoint,
    pub v_radius: f64,
}

impl BallPair {
    pub fn concentric(center: TorusPoint, u_radius: f64, v_radius: f64) -> Self {
        BallPair {
            u_center: center,
            u_radius,
            v_center: center,
            v_radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_radius >= 0.0 && self.u_radius < self.v_radius) {
            return Err(Error::invalid(format!(
                "need 0 ≤ U radius < V radius, got {} and {}",
                self.u_radius, self.v_radius
            )));
        }
        if self.u_center.dist(&self.v_center) + self.u_radius >= self.v_radius {
            return Err(Error::invalid("closed U-ball is not contained in the V-ball"));
        }
        Ok(())
    }

    pub fn in_v(&self, p: &TorusPoint) -> bool {
        p.dist(&self.v_center) < self.v_radius
    }

    /// Deterministic sample pattern in `Ū`: the centre, then concentric
    /// rings out to the boundary with evenly spaced angles. Exactly `count`
    /// points (at least one).
    pub fn u_samples(&self, count: usize) -> Vec<TorusPoint> {
        let count = count.max(1);
        let mut out = vec![self.u_center];
        let rest = count - 1;
        if rest == 0 {
            return out;
        }
        let rings = rest.div_ceil(8);
        for r in 0..rings {
            let on_ring = rest / rings + usize::from(r < rest % rings);
            let radius = self.u_radius * (r + 1) as f64 / rings as f64;
            for k in 0..on_ring {
                let theta = TAU * k as f64 / on_ring as f64;
                out.push(self.u_center.translate(radius * theta.cos(), radius * theta.sin()));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum CertificateVerdict {
    /// Every sample entered `V`; `max_n` is the slowest entry.
    Pass { max_n: u64 },
    /// The sample that failed to enter `V` within the budget.
    Fail { witness: TorusPoint },
}

impl CertificateVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, CertificateVerdict::Pass { .. })
    }
}

/// For each pair, checks that every sample `x ∈ Ū` has some
/// `1 ≤ n ≤ n_max` with `fⁿ(x) ∈ V`.
pub fn certificate_check(
    map: &ConjugatedMap,
    pairs: &[BallPair],
    samples_per_u: usize,
    n_max: u64,
) -> Result<Vec<CertificateVerdict>> {
    if n_max == 0 {
        return Err(Error::invalid("N_max must be at least 1"));
    }
    pairs.iter().try_for_each(BallPair::validate)?;
    Ok(pairs
        .par_iter()
        .map(|pair| {
            let mut max_n = 0;
            for x in pair.u_samples(samples_per_u) {
                let mut q = x;
                let hit = (1..=n_max).find(|_| {
                    q = map.apply(&q);
                    pair.in_v(&q)
                });
                match hit {
                    Some(n) => max_n = max_n.max(n),
                    None => return CertificateVerdict::Fail { witness: x },
                }
            }
            CertificateVerdict::Pass { max_n }
        })
        .collect())
}

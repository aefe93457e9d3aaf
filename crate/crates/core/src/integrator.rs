//! Orbit integration for [`CompositeField`]s.
//!
//! Steps are taken with the Dormand–Prince 5(4) pair on a planar lift of the
//! torus: each step starts from canonical coordinates and runs in `R²`, so the
//! error estimate never sees the seam. The accepted end point is reduced mod
//! `Z²` before the next step, which is exact in floating point.
//!
//! Besides local error control every step is limited in displacement: by
//! `max_step_len`, and near punctures by the distance to the nearest slowing
//! disk (or a quarter of its radius once inside). The second cap keeps the
//! stages from stepping clean over a small disk.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::field::{CompositeField, SlopeParam};
use crate::torus::TorusPoint;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Attempted steps (accepted and rejected) per integration call.
    pub max_steps: u64,
    /// Upper bound on the displacement of a single step, and therefore on
    /// the spacing of trace samples.
    pub max_step_len: f64,
    /// Speeds below this, with more than `stall_horizon` time left, end the
    /// integration as stalled.
    pub stall_speed: f64,
    pub stall_horizon: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            max_steps: 10_000_000,
            max_step_len: 0.025,
            stall_speed: 1e-8,
            stall_horizon: 1e3,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step_len", self.max_step_len),
            ("stall_speed", self.stall_speed),
            ("stall_horizon", self.stall_horizon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.rel_tol > 1e-6 || self.abs_tol > 1e-6 {
            return Err(Error::invalid("rel_tol and abs_tol must not exceed 1e-6"));
        }
        if self.max_step_len > 0.25 {
            return Err(Error::invalid(format!(
                "max_step_len must not exceed 0.25, got {}",
                self.max_step_len
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Completed,
    StalledNearPuncture,
    StepBudgetExhausted,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Completed => "Completed",
            Status::StalledNearPuncture => "StalledNearPuncture",
            Status::StepBudgetExhausted => "StepBudgetExhausted",
        }
    }
}

/// Result of one integration call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOutcome {
    pub point: TorusPoint,
    pub status: Status,
    /// Signed flow time actually covered.
    pub time: f64,
    pub steps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub p: TorusPoint,
}

/// Time-stamped samples along an orbit.
///
/// Flow traces store signed flow time; map traces store the iterate index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitTrace {
    pub samples: Vec<Sample>,
    pub status: Status,
    pub direction: Direction,
    /// Bound on the displacement between consecutive flow samples; `None` for
    /// map traces, whose consecutive iterates may be far apart.
    pub spacing: Option<f64>,
    pub start_is_puncture: bool,
}

impl OrbitTrace {
    pub fn start(&self) -> TorusPoint {
        self.samples[0].p
    }

    pub fn end(&self) -> TorusPoint {
        self.samples[self.samples.len() - 1].p
    }
}

/// Closed-form flow of the unslowed field: `x0 + t(1, α) mod Z²`.
pub fn exact_linear_flow_map(slope: &SlopeParam, x0: &TorusPoint, t: f64) -> TorusPoint {
    TorusPoint::wrap_finite(x0.x() + t, x0.y() + t * slope.alpha())
}

// Dormand–Prince 5(4) coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

type V2 = [f64; 2];

struct Stepper<'a> {
    field: &'a CompositeField,
    cfg: &'a IntegratorConfig,
    sign: f64,
}

impl Stepper<'_> {
    #[inline]
    fn rhs(&self, y: V2) -> V2 {
        let p = TorusPoint::wrap_finite(y[0], y[1]);
        let f = self.sign * self.field.speed_factor(&p);
        [f, f * self.field.alpha()]
    }

    /// Largest displacement allowed for a step starting at `p`.
    fn displacement_cap(&self, p: &TorusPoint) -> f64 {
        let cap = self.cfg.max_step_len;
        match self.field.punctures() {
            Some(f) => {
                let r0 = f.r0();
                let d = f.nearest_distance(p);
                cap.min((d - r0).max(0.25 * r0))
            }
            None => cap,
        }
    }

    /// Whether the orbit through `p` is about to stall: either it already
    /// moves slower than `stall_speed`, or it is inside a slowing disk heading
    /// for a closest approach where the field is slower than that.
    fn stalls_ahead(&self, p: &TorusPoint, speed: f64) -> bool {
        if speed < self.cfg.stall_speed {
            return true;
        }
        let Some(f) = self.field.punctures() else {
            return false;
        };
        let Some(q) = f
            .points()
            .iter()
            .filter(|q| p.dist(q) < f.r0())
            .min_by(|a, b| p.dist_sq(a).total_cmp(&p.dist_sq(b)))
        else {
            return false;
        };
        let norm = self.field.bound();
        let (ux, uy) = (self.sign / norm, self.sign * self.field.alpha() / norm);
        let (dx, dy) = p.lift_displacement(q);
        let ahead = dx * ux + dy * uy;
        if ahead <= 0.0 {
            return false;
        }
        let closest = p.translate(ahead * ux, ahead * uy);
        norm * self.field.speed_factor(&closest) < self.cfg.stall_speed
    }

    /// One Dormand–Prince step. Returns the end point, its field value and
    /// the scaled error norm.
    fn step(&self, y: V2, k1: V2, h: f64) -> (V2, V2, f64) {
        let stage = |c: &[(f64, &V2)]| -> V2 {
            let mut out = y;
            for (a, k) in c {
                out[0] += h * a * k[0];
                out[1] += h * a * k[1];
            }
            out
        };
        let k2 = self.rhs(stage(&[(A21, &k1)]));
        let k3 = self.rhs(stage(&[(A31, &k1), (A32, &k2)]));
        let k4 = self.rhs(stage(&[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = self.rhs(stage(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = self.rhs(stage(&[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = stage(&[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = self.rhs(y_new);

        let mut acc = 0.0;
        for i in 0..2 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            acc += (e / sc) * (e / sc);
        }
        (y_new, k7, (acc / 2.0).sqrt())
    }

    /// Integrates for `|t|` time units; `observer` sees every accepted step
    /// end point with its signed time and may stop the run early.
    fn run(
        &self,
        x0: &TorusPoint,
        duration: f64,
        mut observer: impl FnMut(f64, &TorusPoint) -> ControlFlow<()>,
    ) -> FlowOutcome {
        let mut y = [x0.x(), x0.y()];
        let mut point = *x0;
        let mut k1 = self.rhs(y);
        let mut elapsed = 0.0;
        let mut steps = 0u64;
        let done = |point, status, elapsed: f64, steps| FlowOutcome {
            point,
            status,
            time: self.sign * elapsed,
            steps,
        };

        if duration == 0.0 || (k1[0] == 0.0 && k1[1] == 0.0) {
            // Rest point: the orbit is constant for all time.
            return done(point, Status::Completed, duration, 0);
        }

        let mut h = duration.min(self.displacement_cap(&point) / k1[0].hypot(k1[1]));
        while elapsed < duration {
            if steps >= self.cfg.max_steps {
                return done(point, Status::StepBudgetExhausted, elapsed, steps);
            }
            steps += 1;

            let remaining = duration - elapsed;
            let cap = self.displacement_cap(&point);
            let speed = k1[0].hypot(k1[1]);
            h = h.min(remaining).min(cap / speed);
            let last = h >= remaining;

            let (y_new, k7, err) = self.step(y, k1, h);
            let disp = (y_new[0] - y[0]).hypot(y_new[1] - y[1]);
            if !(err <= 1.0 && disp <= cap) {
                let mut factor = if err.is_finite() && err > 1.0 {
                    (SAFETY * err.powf(-0.2)).max(MIN_FACTOR)
                } else {
                    1.0
                };
                if disp > cap {
                    factor = factor.min(SAFETY * cap / disp);
                }
                h *= factor;
                continue;
            }

            elapsed = if last { duration } else { elapsed + h };
            point = TorusPoint::wrap_finite(y_new[0], y_new[1]);
            y = [point.x(), point.y()];
            k1 = k7;
            if observer(self.sign * elapsed, &point).is_break() {
                return done(point, Status::Completed, elapsed, steps);
            }

            let speed = k1[0].hypot(k1[1]);
            if speed == 0.0 {
                return done(point, Status::Completed, duration, steps);
            }
            if duration - elapsed > self.cfg.stall_horizon && self.stalls_ahead(&point, speed) {
                return done(point, Status::StalledNearPuncture, elapsed, steps);
            }

            let factor = if err > 0.0 {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            } else {
                MAX_FACTOR
            };
            h *= factor;
        }
        done(point, Status::Completed, elapsed, steps)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("flow time must be finite, got {t}")))
    }
}

/// Time-`t` map of the field; negative `t` integrates the negated field.
pub fn flow_map(field: &CompositeField, x0: &TorusPoint, t: f64, cfg: &IntegratorConfig) -> Result<FlowOutcome> {
    flow_map_observed(field, x0, t, cfg, |_, _| ControlFlow::Continue(()))
}

/// [`flow_map`] with a callback on every accepted step end point.
pub fn flow_map_observed(
    field: &CompositeField,
    x0: &TorusPoint,
    t: f64,
    cfg: &IntegratorConfig,
    observer: impl FnMut(f64, &TorusPoint) -> ControlFlow<()>,
) -> Result<FlowOutcome> {
    cfg.validate()?;
    check_time(t)?;
    let stepper = Stepper {
        field,
        cfg,
        sign: if t < 0.0 { -1.0 } else { 1.0 },
    };
    Ok(stepper.run(x0, t.abs(), observer))
}

/// Samples the orbit of `x0` for `duration` time units in direction `dir`.
///
/// Consecutive samples are at most `cfg.max_step_len` apart. A start on a
/// rest point yields two identical samples.
pub fn trace_orbit(
    field: &CompositeField,
    x0: &TorusPoint,
    duration: f64,
    dir: Direction,
    cfg: &IntegratorConfig,
) -> Result<OrbitTrace> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(format!("trace duration must be positive, got {duration}")));
    }
    let mut samples = vec![Sample { t: 0.0, p: *x0 }];
    let out = flow_map_observed(field, x0, dir.sign() * duration, cfg, |t, p| {
        samples.push(Sample { t, p: *p });
        ControlFlow::Continue(())
    })?;
    if samples.len() == 1 {
        samples.push(Sample {
            t: out.time,
            p: out.point,
        });
    }
    Ok(OrbitTrace {
        samples,
        status: out.status,
        direction: dir,
        spacing: Some(cfg.max_step_len),
        start_is_puncture: field.is_puncture(x0),
    })
}

/// Summary of a run of [`iterate_map_observed`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapRun {
    pub last: TorusPoint,
    /// Number of completed map applications.
    pub iterations: u64,
    pub status: Status,
}

/// Events reported by [`iterate_map_observed`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MapEvent {
    /// The `k`-th iterate `f^k(x0)`.
    Iterate(u64, TorusPoint),
    /// An intermediate flow sample between two iterates.
    Flow(TorusPoint),
}

/// Iterates the time-`t` map up to `n` times from `x0`.
///
/// The observer sees every iterate (starting with `k = 0`) and every flow
/// sample in between; breaking on an iterate stops the run. Stops early on
/// any non-completed integration status.
pub fn iterate_map_observed(
    field: &CompositeField,
    t: f64,
    x0: &TorusPoint,
    n: u64,
    cfg: &IntegratorConfig,
    mut observer: impl FnMut(MapEvent) -> ControlFlow<()>,
) -> Result<MapRun> {
    if n == 0 {
        return Err(Error::invalid("iteration count must be at least 1"));
    }
    cfg.validate()?;
    check_time(t)?;
    let mut p = *x0;
    let mut run = MapRun {
        last: p,
        iterations: 0,
        status: Status::Completed,
    };
    if observer(MapEvent::Iterate(0, p)).is_break() {
        return Ok(run);
    }
    for k in 1..=n {
        let out = flow_map_observed(field, &p, t, cfg, |_, q| {
            // Flow samples never stop the map iteration.
            let _ = observer(MapEvent::Flow(*q));
            ControlFlow::Continue(())
        })?;
        p = out.point;
        run.status = out.status;
        if out.status != Status::Completed {
            break;
        }
        run.last = p;
        run.iterations = k;
        if observer(MapEvent::Iterate(k, p)).is_break() {
            break;
        }
    }
    Ok(run)
}

/// The sequence `x0, f(x0), …, fⁿ(x0)` for the time-`t` map `f`, with the
/// iterate index as sample time.
pub fn iterate_map(
    field: &CompositeField,
    t: f64,
    x0: &TorusPoint,
    n: u64,
    cfg: &IntegratorConfig,
) -> Result<OrbitTrace> {
    let mut samples = Vec::with_capacity(n.min(1 << 20) as usize + 1);
    let run = iterate_map_observed(
        field,
        t,
        x0,
        n,
        cfg,
        |ev| {
            if let MapEvent::Iterate(k, p) = ev {
                samples.push(Sample { t: k as f64, p });
            }
            ControlFlow::Continue(())
        },
    )?;
    Ok(OrbitTrace {
        samples,
        status: run.status,
        direction: if t < 0.0 { Direction::Backward } else { Direction::Forward },
        spacing: None,
        start_is_puncture: field.is_puncture(x0),
    })
}

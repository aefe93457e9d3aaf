//! Empirical density tests.
//!
//! An orbit is called dense at resolution `m` when its samples hit every cell
//! of the `m × m` grid of side `1/m`. Every point of the torus is then within
//! `√2/(2m)` of a sample. Flow traces must be sampled at spacing at most
//! `1/(2m)`; map orbits are counted on their iterates only.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::Serialize;

use crate::field::CompositeField;
use crate::integrator::{
    flow_map_observed, iterate_map_observed, Direction, IntegratorConfig, MapEvent, OrbitTrace, Status,
};
use crate::oracle::{translation_density_oracle, IndependenceVerdict};
use crate::torus::TorusPoint;
use crate::{Error, Result};

pub const DEFAULT_GRID: usize = 20;

/// Occupancy flags of the `m × m` cell grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    m: usize,
    visited: Vec<bool>,
    count: usize,
    first_cover_time: Option<f64>,
}

impl DensityGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m > 4096 {
            return Err(Error::invalid(format!("grid size must be in 1..=4096, got {m}")));
        }
        Ok(DensityGrid {
            m,
            visited: vec![false; m * m],
            count: 0,
            first_cover_time: None,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Column and row index of the cell containing `p`.
    #[inline]
    pub fn cell_of(&self, p: &TorusPoint) -> (usize, usize) {
        let m = self.m as f64;
        let i = ((p.x() * m) as usize).min(self.m - 1);
        let j = ((p.y() * m) as usize).min(self.m - 1);
        (i, j)
    }

    /// Marks the cell of `p`; returns true once the grid is full.
    #[inline]
    pub fn mark(&mut self, t: f64, p: &TorusPoint) -> bool {
        let (i, j) = self.cell_of(p);
        let idx = j * self.m + i;
        if !self.visited[idx] {
            self.visited[idx] = true;
            self.count += 1;
            if self.count == self.visited.len() {
                self.first_cover_time = Some(t);
            }
        }
        self.is_full()
    }

    pub fn is_visited(&self, i: usize, j: usize) -> bool {
        self.visited[j * self.m + i]
    }

    pub fn visited_cells(&self) -> usize {
        self.count
    }

    pub fn covered_fraction(&self) -> f64 {
        self.count as f64 / self.visited.len() as f64
    }

    pub fn is_full(&self) -> bool {
        self.count == self.visited.len()
    }

    pub fn first_cover_time(&self) -> Option<f64> {
        self.first_cover_time
    }

    /// Number of columns (x cells) holding at least one sample.
    pub fn occupied_columns(&self) -> usize {
        (0..self.m)
            .filter(|&i| (0..self.m).any(|j| self.is_visited(i, j)))
            .count()
    }

    /// Number of rows (y cells) holding at least one sample.
    pub fn occupied_rows(&self) -> usize {
        (0..self.m)
            .filter(|&j| (0..self.m).any(|i| self.is_visited(i, j)))
            .count()
    }

    /// Binary PGM (P5) raster, 255 for visited cells and 0 otherwise. The
    /// first image row is the top row of the torus (largest y).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.m, self.m).into_bytes();
        for j in (0..self.m).rev() {
            for i in 0..self.m {
                out.push(if self.is_visited(i, j) { 255 } else { 0 });
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    Dense,
    AsymptoticToPuncture,
    Fixed,
    Undetermined,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Dense => "Dense",
            Classification::AsymptoticToPuncture => "AsymptoticToPuncture",
            Classification::Fixed => "Fixed",
            Classification::Undetermined => "Undetermined",
        }
    }
}

fn classify(start_is_puncture: bool, status: Status, full: bool) -> Classification {
    if start_is_puncture {
        Classification::Fixed
    } else if status == Status::StalledNearPuncture {
        Classification::AsymptoticToPuncture
    } else if full {
        Classification::Dense
    } else {
        Classification::Undetermined
    }
}

/// Budget a report was computed under.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Budget {
    /// Flow time horizon, for flow orbits.
    pub horizon: Option<f64>,
    /// Map time and iteration budget, for map orbits.
    pub map_time: Option<f64>,
    pub iterations: Option<u64>,
    pub integrator: Option<IntegratorConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityReport {
    pub m: usize,
    pub covered_fraction: f64,
    pub visited_cells: usize,
    pub first_cover_time: Option<f64>,
    pub classification: Classification,
    pub direction: Direction,
    pub status: Status,
    pub budget: Budget,
    #[serde(skip)]
    pub grid: DensityGrid,
}

impl DensityReport {
    fn from_grid(grid: DensityGrid, classification: Classification, direction: Direction, status: Status, budget: Budget) -> Self {
        DensityReport {
            m: grid.m(),
            covered_fraction: grid.covered_fraction(),
            visited_cells: grid.visited_cells(),
            first_cover_time: grid.first_cover_time(),
            classification,
            direction,
            status,
            budget,
            grid,
        }
    }

    pub fn is_dense(&self) -> bool {
        self.classification == Classification::Dense
    }
}

fn check_spacing(spacing: f64, m: usize) -> Result<()> {
    let limit = 0.5 / m as f64;
    if spacing > limit {
        return Err(Error::invalid(format!(
            "sample spacing {spacing} exceeds 1/(2m) = {limit}; coverage could skip cells"
        )));
    }
    Ok(())
}

/// Grid coverage of a stored trace.
///
/// Flow traces must have spacing at most `1/(2m)`. Map traces are counted
/// on their iterates, with the iterate index as cover time.
pub fn epsilon_density_test(trace: &OrbitTrace, m: usize) -> Result<DensityReport> {
    if let Some(spacing) = trace.spacing {
        check_spacing(spacing, m)?;
    }
    let mut grid = DensityGrid::new(m)?;
    for s in &trace.samples {
        if grid.mark(s.t, &s.p) {
            break;
        }
    }
    let class = classify(trace.start_is_puncture, trace.status, grid.is_full());
    let budget = match trace.spacing {
        Some(_) => Budget {
            horizon: trace.samples.last().map(|s| s.t.abs()),
            map_time: None,
            iterations: None,
            integrator: None,
        },
        None => Budget {
            horizon: None,
            map_time: None,
            iterations: Some(trace.samples.len() as u64 - 1),
            integrator: None,
        },
    };
    Ok(DensityReport::from_grid(grid, class, trace.direction, trace.status, budget))
}

/// Streams one flow direction into a grid, stopping at full coverage.
fn flow_density(
    field: &CompositeField,
    x0: &TorusPoint,
    horizon: f64,
    m: usize,
    dir: Direction,
    cfg: &IntegratorConfig,
) -> Result<DensityReport> {
    let mut grid = DensityGrid::new(m)?;
    grid.mark(0.0, x0);
    let out = flow_map_observed(field, x0, dir.sign() * horizon, cfg, |t, p| {
        if grid.mark(t, p) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    let class = classify(field.is_puncture(x0), out.status, grid.is_full());
    let budget = Budget {
        horizon: Some(horizon),
        map_time: None,
        iterations: None,
        integrator: Some(*cfg),
    };
    Ok(DensityReport::from_grid(grid, class, dir, out.status, budget))
}

/// Forward and backward coverage of the flow orbit through `x0`, each up to
/// flow time `horizon` (stopping early at full coverage).
pub fn double_density_test(
    field: &CompositeField,
    x0: &TorusPoint,
    horizon: f64,
    m: usize,
    cfg: &IntegratorConfig,
) -> Result<(DensityReport, DensityReport)> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    check_spacing(cfg.max_step_len, m)?;
    let fwd = flow_density(field, x0, horizon, m, Direction::Forward, cfg)?;
    let bwd = flow_density(field, x0, horizon, m, Direction::Backward, cfg)?;
    Ok((fwd, bwd))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartClassification {
    pub start: TorusPoint,
    pub forward: DensityReport,
    pub backward: DensityReport,
}

impl StartClassification {
    /// Neither half-orbit was found dense.
    pub fn is_exceptional(&self) -> bool {
        !self.forward.is_dense() && !self.backward.is_dense()
    }

    /// Exceptional, but not for a decisive reason (neither a rest point nor
    /// an orbit stalled at a puncture in some direction).
    pub fn is_undetermined(&self) -> bool {
        self.is_exceptional()
            && self.forward.classification == Classification::Undetermined
            && self.backward.classification == Classification::Undetermined
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExceptionalScan {
    pub entries: Vec<StartClassification>,
}

impl ExceptionalScan {
    /// Starts with no dense half-orbit, in input order.
    pub fn exceptional(&self) -> Vec<TorusPoint> {
        self.entries.iter().filter(|e| e.is_exceptional()).map(|e| e.start).collect()
    }

    pub fn undetermined(&self) -> Vec<TorusPoint> {
        self.entries.iter().filter(|e| e.is_undetermined()).map(|e| e.start).collect()
    }
}

/// Runs [`double_density_test`] on every start concurrently; entries keep
/// input order.
pub fn exceptional_set_scan(
    field: &CompositeField,
    starts: &[TorusPoint],
    horizon: f64,
    m: usize,
    cfg: &IntegratorConfig,
) -> Result<ExceptionalScan> {
    if starts.is_empty() {
        return Err(Error::invalid("exceptional-set scan needs at least one start"));
    }
    let entries = starts
        .par_iter()
        .map(|s| {
            double_density_test(field, s, horizon, m, cfg).map(|(forward, backward)| StartClassification {
                start: *s,
                forward,
                backward,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExceptionalScan { entries })
}

/// One row of a time-t scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeTEntry {
    pub t: f64,
    /// Coverage by the map iterates alone; this decides the classification.
    pub discrete: DensityReport,
    /// Coverage by iterates plus the flow path between them.
    pub refined_fraction: f64,
    /// Present only for the unslowed field.
    pub oracle: Option<IndependenceVerdict>,
    /// Whether the empirical verdict matches a decisive oracle.
    pub agrees: Option<bool>,
}

/// Coverage of the map orbit `x0, Φ_t(x0), …` for a single `t`.
pub fn map_density(
    field: &CompositeField,
    t: f64,
    x0: &TorusPoint,
    n: u64,
    m: usize,
    cfg: &IntegratorConfig,
) -> Result<(DensityReport, DensityGrid)> {
    check_spacing(cfg.max_step_len, m)?;
    let mut discrete = DensityGrid::new(m)?;
    let mut refined = DensityGrid::new(m)?;
    let mut last_k = 0.0;
    let run = iterate_map_observed(
        field,
        t,
        x0,
        n,
        cfg,
        |ev| match ev {
            MapEvent::Iterate(k, p) => {
                last_k = k as f64;
                refined.mark(last_k, &p);
                if discrete.mark(last_k, &p) {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            }
            MapEvent::Flow(p) => {
                refined.mark(last_k, &p);
                ControlFlow::Continue(())
            }
        },
    )?;
    let class = classify(field.is_puncture(x0), run.status, discrete.is_full());
    let budget = Budget {
        horizon: None,
        map_time: Some(t),
        iterations: Some(n),
        integrator: Some(*cfg),
    };
    let dir = if t < 0.0 { Direction::Backward } else { Direction::Forward };
    Ok((DensityReport::from_grid(discrete, class, dir, run.status, budget), refined))
}

/// Scans time-t maps of `field`, one work item per `t` (run concurrently,
/// results in input order). For the unslowed field each row carries the
/// oracle verdict for the translation vector `(t, tα)`.
pub fn time_t_scan(
    field: &CompositeField,
    t_values: &[f64],
    x0: &TorusPoint,
    n: u64,
    m: usize,
    cfg: &IntegratorConfig,
    oracle_bound: u32,
) -> Result<Vec<TimeTEntry>> {
    if t_values.is_empty() {
        return Err(Error::invalid("time-t scan needs at least one t value"));
    }
    let unslowed = field.punctures().is_none();
    t_values
        .par_iter()
        .map(|&t| {
            let (discrete, refined) = map_density(field, t, x0, n, m, cfg)?;
            let oracle = unslowed.then(|| translation_density_oracle(t, t * field.alpha(), oracle_bound));
            let agrees = oracle.map(|v| v.dependent != discrete.is_dense());
            Ok(TimeTEntry {
                t,
                refined_fraction: refined.covered_fraction(),
                discrete,
                oracle,
                agrees,
            })
        })
        .collect()
}

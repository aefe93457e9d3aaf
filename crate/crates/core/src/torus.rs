//! Flat torus `R²/Z²` with canonical coordinates in `[0, 1)²`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lattice offsets in lexicographic order; ties in [`TorusPoint::lift_displacement`]
/// resolve to the first entry reaching the minimum.
const OFFSETS: [(f64, f64); 9] = [
    (-1.0, -1.0),
    (-1.0, 0.0),
    (-1.0, 1.0),
    (0.0, -1.0),
    (0.0, 0.0),
    (0.0, 1.0),
    (1.0, -1.0),
    (1.0, 0.0),
    (1.0, 1.0),
];

/// Reduce a finite real to `[0, 1)`.
#[inline]
pub(crate) fn wrap_unit(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    // Tiny negative inputs round up to exactly 1.0.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of the flat torus. Both coordinates always lie in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

impl TorusPoint {
    pub const ORIGIN: TorusPoint = TorusPoint { x: 0.0, y: 0.0 };

    /// Canonical representative of `(rx, ry) mod Z²`.
    pub fn wrap(rx: f64, ry: f64) -> Result<Self> {
        if !rx.is_finite() || !ry.is_finite() {
            return Err(Error::invalid(format!("non-finite coordinates ({rx}, {ry})")));
        }
        Ok(Self::wrap_finite(rx, ry))
    }

    /// Same as [`TorusPoint::wrap`] for inputs already known to be finite.
    #[inline]
    pub(crate) fn wrap_finite(rx: f64, ry: f64) -> Self {
        debug_assert!(rx.is_finite() && ry.is_finite());
        TorusPoint {
            x: wrap_unit(rx),
            y: wrap_unit(ry),
        }
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    /// `self + (dx, dy)` reduced mod `Z²`.
    #[inline]
    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::wrap_finite(self.x + dx, self.y + dy)
    }

    /// Shortest displacement `d` with `self + d ≡ other (mod Z²)`.
    ///
    /// Among the nine lattice offsets `(m, n) ∈ {-1, 0, 1}²` the one with the
    /// smallest norm wins; exact ties go to the lexicographically smallest
    /// `(m, n)`.
    pub fn lift_displacement(&self, other: &TorusPoint) -> (f64, f64) {
        let bx = other.x - self.x;
        let by = other.y - self.y;
        let mut best = (bx, by);
        let mut best_sq = f64::INFINITY;
        for &(m, n) in &OFFSETS {
            let dx = bx + m;
            let dy = by + n;
            let sq = dx * dx + dy * dy;
            if sq < best_sq {
                best_sq = sq;
                best = (dx, dy);
            }
        }
        best
    }

    /// Squared flat distance.
    #[inline]
    pub fn dist_sq(&self, other: &TorusPoint) -> f64 {
        let (dx, dy) = self.lift_displacement(other);
        dx * dx + dy * dy
    }

    /// Flat distance: minimum Euclidean distance over lattice translates.
    /// Never exceeds `√2 / 2`.
    #[inline]
    pub fn dist(&self, other: &TorusPoint) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

impl TryFrom<[f64; 2]> for TorusPoint {
    type Error = Error;

    fn try_from([x, y]: [f64; 2]) -> Result<Self> {
        TorusPoint::wrap(x, y)
    }
}

impl From<TorusPoint> for [f64; 2] {
    fn from(p: TorusPoint) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A tangent vector (velocity) on the torus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub dx: f64,
    pub dy: f64,
}

impl TangentVector {
    pub const ZERO: TangentVector = TangentVector { dx: 0.0, dy: 0.0 };

    pub fn new(dx: f64, dy: f64) -> Self {
        TangentVector { dx, dy }
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.dx == 0.0 && self.dy == 0.0
    }
}

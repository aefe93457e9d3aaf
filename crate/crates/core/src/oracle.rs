//! Integer-relation search for translation vectors.
//!
//! The translation `(x, y) ↦ (x + β, y + γ)` of the torus is minimal exactly
//! when `1, β, γ` are linearly independent over `Q`. The search below looks
//! for integers `(a, b, c) ≠ 0` with `|a + bβ + cγ| < TOL_RELATION` and all
//! coefficients bounded; finding none is evidence of independence up to that
//! height.

use serde::Serialize;

pub const TOL_RELATION: f64 = 1e-9;
pub const DEFAULT_BOUND: u32 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IndependenceVerdict {
    pub dependent: bool,
    pub relation: Option<(i64, i64, i64)>,
    pub bound: u32,
}

impl IndependenceVerdict {
    pub fn label(&self) -> &'static str {
        if self.dependent {
            "dependent"
        } else {
            "independent"
        }
    }
}

/// Exhaustive search for a small integer relation among `1, β, γ`.
///
/// For each `(b, c)` the only candidate `a` is `−round(bβ + cγ)`, which makes
/// the scan complete in `O(bound²)`. Pairs are visited in shells of
/// increasing `max(|b|, |c|)`, within a shell lexicographically in `(b, c)`,
/// restricted to `b > 0` or `b = 0, c > 0` (one sign per relation). The first
/// hit with `|a| ≤ bound` is returned.
pub fn translation_density_oracle(beta: f64, gamma: f64, bound: u32) -> IndependenceVerdict {
    let bound = bound.max(1);
    let limit = bound as f64;
    let probe = |b: i64, c: i64| -> Option<(i64, i64, i64)> {
        let v = b as f64 * beta + c as f64 * gamma;
        let a = -v.round();
        ((a + v).abs() < TOL_RELATION && a.abs() <= limit).then_some((a as i64, b, c))
    };
    let h_max = bound as i64;
    for h in 1..=h_max {
        // b = 0: only c = h.
        if let Some(r) = probe(0, h) {
            return found(r, bound);
        }
        for b in 1..h {
            for c in [-h, h] {
                if let Some(r) = probe(b, c) {
                    return found(r, bound);
                }
            }
        }
        for c in -h..=h {
            if let Some(r) = probe(h, c) {
                return found(r, bound);
            }
        }
    }
    IndependenceVerdict {
        dependent: false,
        relation: None,
        bound,
    }
}

fn found(r: (i64, i64, i64), bound: u32) -> IndependenceVerdict {
    IndependenceVerdict {
        dependent: true,
        relation: Some(r),
        bound,
    }
}

//! Numerical laboratory for minimal and quasi-minimal dynamics on the
//! punctured flat torus.
//!
//! The building blocks are:
//!
//! - [`torus`]: canonical coordinates and the flat metric on `R²/Z²`.
//! - [`field`]: the linear field `(1, α)` multiplied by a smooth factor that
//!   vanishes exactly on a finite puncture set.
//! - [`integrator`]: adaptive Dormand–Prince integration of those fields,
//!   time-t maps and orbit traces, plus the closed-form linear flow.
//! - [`density`]: ε-grid coverage, orbit classification, exceptional-set
//!   scans and time-t scans.
//! - [`oracle`]: integer-relation search deciding when a torus translation
//!   is minimal.
//! - [`recurrence`]: conjugated rotations `g ∘ R_t ∘ g⁻¹` built from sine
//!   shears, with return-time scans and ball certificates.

pub mod density;
pub mod field;
pub mod integrator;
pub mod oracle;
pub mod recurrence;
pub mod torus;

mod error;

pub use error::{Error, Result};
pub use torus::{TangentVector, TorusPoint};

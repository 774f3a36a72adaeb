//! Numerical laboratory for Collet–Eckmann type conditions of rational maps
//! on the Riemann sphere.
//!
//! The crate is organized bottom-up:
//!
//! * [`sphere`]: chordal metric, charts, rotations and chordal disks;
//! * [`ratmap`]: rational maps, root finding, critical points, preimages;
//! * [`orbit`]: forward orbits, the CE exponent, slow recurrence and the
//!   first-return constant;
//! * [`backward`]: preimage trees, the CE2 exponent, shrinking neighbourhoods
//!   and type-1 orbits;
//! * [`cover`]: pullback components via inverse-branch curve lifting,
//!   exponential shrinking, the TCE counting test and related diagnostics.

pub mod backward;
pub mod cover;
pub mod orbit;
pub mod ratmap;
pub mod rng;
pub mod sphere;

pub use ratmap::{critical_points, julia_classify, CriticalSet, MapError, Polynomial, RationalMap};
pub use sphere::{chordal_dist, ChordalDisk, Complex, SpherePoint};

//! Grid-based numerics for BMO-type spaces attached to Schrödinger operators
//! `L = -Δ + V` with nonnegative reverse-Hölder potentials.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`] and [`family`]: uniform grids, balls, dyadic cubes, compensated
//!   summed-area tables, ball families and sup-over-scale curves.
//! - [`potential`]: potentials, the critical radius `rho` and reverse-Hölder
//!   diagnostics.
//! - [`semigroup`]: spectral discretization of `L` in one dimension with heat
//!   and Poisson semigroups.
//! - [`oscillation`] and [`tent`]: mean-oscillation norms, tent-space and
//!   Carleson functionals and their limiting curves.
//! - [`approx`]: mollification and dyadic (Uchiyama-type) averaging.
//! - [`experiments`]: configuration-driven scenarios with CSV/JSON reports.

pub mod approx;
pub mod error;
pub mod experiments;
pub mod family;
pub mod grid;
pub mod io;
pub mod numeric;
pub mod oscillation;
pub mod potential;
pub mod semigroup;
pub mod tent;

pub use error::{Channel, Error, Result};
pub use family::{bucketed_sup, BallFamily, CurveMode, FamilyPolicy, LimitCurve, RadiusSpec};
pub use grid::{Ball, DyadicCube, Grid, GridFunction, MomentTable, Region};
pub use oscillation::{bmo_l_norm, bmo_norm, tilde_gamma_curves, vanishing_verdict, OscillationReport, Verdict};
pub use potential::{critical_radius, CriticalRadiusField, Potential, Rho, RhoOptions};
pub use semigroup::{discretize, heat, poisson, HalfSpaceFunction, SpectralOperator, TLadder};

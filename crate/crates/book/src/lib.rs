//! Compiles and runs the Rust snippets of the guide under `book/` as doc
//! tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/grids.md")]
pub mod grids {}

#[doc = include_str!("../../../book/src/potentials.md")]
pub mod potentials {}

#[doc = include_str!("../../../book/src/semigroups.md")]
pub mod semigroups {}

#[doc = include_str!("../../../book/src/oscillation.md")]
pub mod oscillation {}

#[doc = include_str!("../../../book/src/tent.md")]
pub mod tent {}

#[doc = include_str!("../../../book/src/approximation.md")]
pub mod approximation {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/acceptance.md")]
pub mod acceptance {}

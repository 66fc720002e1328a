//! Numerical laboratory for collapsing continuity-method metrics on fibered
//! Fano surfaces with fiberwise circle symmetry.
//!
//! The crate reduces the twisted Kähler-Ricci continuity path
//! `w(t) = w0 - (1 - e^{-t}) Ric(w(t))` on a Hirzebruch surface or on
//! P1 x P1 to a one-dimensional Monge-Ampere problem for a radial potential,
//! marches it toward the collapsed limit, builds the limiting metric on the
//! base curve, and measures the convergence rates that the collapse theory
//! predicts.

pub mod diagnostics;
pub mod harness;
pub mod limit;
pub mod mesh;
pub mod newton;
pub mod path;
pub mod radial;

pub use nalgebra;

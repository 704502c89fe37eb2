//! Solvers and a verification harness for stratified high-contrast elliptic
//! problems.
//!
//! A layered medium on a cylinder `(0, L) x Omega'` is described by a shear
//! profile `mu_eps(x1)` whose reciprocal and direct densities converge to a
//! pair of Radon measures `(nu, m)` on `[0, L]`. This crate
//!
//! * represents such measures exactly (piecewise-constant density plus a
//!   finite atom list) and checks the compatibility inequalities they must
//!   satisfy ([`measures`]),
//! * generates soft / stiff / nested layer families and their limit
//!   measures ([`media`]),
//! * computes the effective tensors `a_perp`, `a_par`, the interface matrix
//!   and the bulk tensor, and verifies the rearrangement identities behind
//!   them ([`tensors`]),
//! * solves the fine-scale problem by multilinear finite elements on
//!   layer-conforming tensor grids ([`finescale`]),
//! * assembles and solves the limit problem with doubled node sheets and
//!   spring couplings at `nu`-atoms and tangential interface stiffness at
//!   `m`-atoms ([`effective`]),
//! * provides closed-form 1-D solutions used as exact ground truth
//!   ([`oracle`]), and
//! * runs convergence experiments and emits CSV / table / plot data
//!   ([`harness`]).

// index loops over small tensor/stencil ranges are the house style here
#![allow(clippy::needless_range_loop)]

pub mod effective;
pub mod exact;
pub mod finescale;
pub mod grid;
pub mod harness;
pub mod measures;
pub mod media;
pub mod oracle;
pub mod poly;
pub mod sparse;
pub mod tensors;

pub use exact::Exact;
pub use measures::{Measure1D, MeasurePair};
pub use media::{CoefficientField, LayeredProfile};
pub use tensors::{EffectiveLaw, IsotropicLaw, SystemTensor};

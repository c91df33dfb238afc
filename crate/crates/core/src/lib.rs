//! Exact dyadic Haar analysis for lower bounds on the star discrepancy.
//!
//! The crate is organised bottom-up:
//!
//! * [`dyadic`]: dyadic intervals, boxes, signed Haar atoms and the product rule.
//! * [`gridfn`]: piecewise-constant functions on dyadic grids, norms, inner
//!   products, square functions and a seeded Monte-Carlo norm estimator.
//! * [`pointset`]: point-set generators, exact star and L2 discrepancy, closed-form
//!   Haar coefficients of the discrepancy function.
//! * [`riesz`]: hyperbolic vectors, r-functions, Riesz products in two and three
//!   dimensions and duality certificates.
//! * [`graphs`]: two-colored coincidence graphs and the tuple sets they describe.
//! * [`constants`]: Lambert W, composition inequalities, Stirling numbers and the
//!   closed-form exponent optimisation.

pub mod constants;
pub mod dyadic;
pub mod graphs;
pub mod gridfn;
pub mod pointset;
pub mod riesz;

pub use dyadic::{
    make_interval, product_reduce, DyadicBox, DyadicError, DyadicInterval, Sign, SignedHaarAtom,
};
pub use gridfn::{Grid, GridError, GridFunction, Lp, NormEstimate, NormMode};
pub use pointset::{DiscrepancyReport, PointSet, PointSetError};

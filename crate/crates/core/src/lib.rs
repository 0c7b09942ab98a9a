//! Joint planning of PEV fast-charging stations and distributed PV plants on
//! coupled transportation and distribution networks.
//!
//! The planning problem is a two-stage stochastic mixed-binary second-order
//! cone program. First-stage decisions site and size stations, PV plants and
//! substation expansions; second-stage problems dispatch a branch-flow model
//! of the distribution grid for every (scenario, hour). [`benders::run`]
//! solves it by generalized Benders decomposition with a relaxed-master warm
//! phase; [`model::build_extensive_form`] with [`mip::solve_mib`] solves the
//! monolithic equivalent.

pub mod benders;
pub mod cli;
pub mod conic;
pub mod error;
pub mod grid;
pub mod io;
pub mod mip;
pub mod model;
pub mod station;
pub mod transport;

pub use error::{Error, Result};

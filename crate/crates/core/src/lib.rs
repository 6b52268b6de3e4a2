//! Ageing potential of lithium-ion cells under rippled load.
//!
//! The crate simulates a Randles equivalent circuit whose charge-transfer
//! element follows the full Butler-Volmer relation, measures how much a
//! superimposed AC current accelerates the over-potential driven side
//! reactions (SEI growth, lithium plating), and fits the closed-form model
//! `AP(f) = a·exp(b/√(c + f²))` to the result.
//!
//! The modules build on each other:
//!
//! - [`electrochem`]: interface kinetics as pure functions.
//! - [`circuit`]: the equivalent circuit, its steady state and impedance.
//! - [`simulator`]: RK4 time integration under load profiles.
//! - [`ageing`]: ageing potential extraction and frequency sweeps.
//! - [`regression`]: fitting the ageing potential model and identifying
//!   circuit parameters from voltage/current traces.
//!
//! ```
//! use ripple_ageing::circuit::{dc_steady_state, CellParams};
//!
//! let cell = CellParams::default();
//! let state = dc_steady_state(5.0, &cell).unwrap();
//! assert!((state.eta_ct() - 0.12528).abs() < 1e-5);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ageing;
pub mod circuit;
pub mod electrochem;
mod error;
pub mod regression;
pub mod simulator;

pub use error::{Error, Result};

pub use ageing::{
    ageing_potential_at, ageing_sweep, ap_model_eval, log_frequency_grid, ApCurve, ApMeta, ApModel,
    ApPoint, SweepOptions,
};
pub use circuit::{CellParams, CellState};
pub use electrochem::{ElectrochemParams, SideReactionParams};
pub use regression::{
    fit_ap_model, fit_ap_points, fit_circuit_params, r_squared, ApFit, FitParam, IdentOptions,
    IdentResult, MeasuredTrace,
};
pub use simulator::{LoadProfile, ProfileKind, SimOptions, SimulationTrace};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/kinetics.md")]
    pub mod kinetics {}
    #[doc = include_str!("../../../book/src/circuit.md")]
    pub mod circuit {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub mod simulation {}
    #[doc = include_str!("../../../book/src/ageing-potential.md")]
    pub mod ageing_potential {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    pub mod fitting {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}

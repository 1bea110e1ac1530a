//! Oscillator and network definitions, right-hand sides and the
//! heterogeneity bound.

mod bound;
mod model;
mod network;
mod reference;

pub use bound::{heterogeneity_bound, GridSpec, HeterogeneityBound, StateBox};
pub use model::{
    eval_intrinsic, fast_jacobian, fd_jacobian, validate_params, ClosureModel, Component, Model,
    OscillatorParams, State, TimeScales, U, V, X, Y, Z,
};
pub use network::{coupling_term, network_rhs, NetworkConfig, NetworkState, NetworkSystem};
pub use reference::{make_reference_network, ReferenceCoefficients, ReferenceModel, REFERENCE_ID};

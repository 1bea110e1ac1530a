//! Fast critical manifolds, folds, slow manifolds and canard points of the
//! uncoupled oscillators.
//!
//! The slow manifold is parameterized as `v = psi_v(y, z)`, `u = psi_u(y, z)`,
//! `x = psi_x(y, z)`.

mod canard;
mod export;
mod fast;
mod fold;
mod newton;
mod slow;

pub use canard::{find_canard_point, locate_jump_point, CanardPoint, CanardSelection, ReducedFlow};
pub use export::{write_fast_csv, write_slow_csv};
pub use fast::{
    attracting_root, classify, fast_spectrum, nearest_node, solve_fast_manifold, Axes, Branch, ChartGrid,
    FastManifoldChart, FastNode, FastOptions, Region,
};
pub use fold::{find_all_folds, find_fold_curve, find_fold_curve_with, polish_fold, FoldPoint};
pub use newton::{newton, ROOT_TOL};
pub use slow::{
    attracting_slow_manifold, solve_slow_manifold, solve_slow_point, total_dfdx, SlowManifoldChart,
    SlowNode,
};

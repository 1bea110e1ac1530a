//! Synchronization error of the fast variable, the coupling threshold, the
//! Gronwall envelope and simulation-based checks of the bounds.

mod identity;
mod threshold;
mod trace;
mod verify;

pub use identity::{check_variance_identity, IdentityCheck};
pub use threshold::{coupling_threshold, gronwall_envelope, threshold_terms, Threshold, ThresholdInputs};
pub use trace::{sync_trace, variance, variance_of, SyncTrace};
pub use verify::{
    branch_monitor, on_attracting_branch, trajectory_box_bound, verify_theorem, BranchCheck, BranchExit,
    MSource, Verdict, Verification, VerificationReport, VerifySettings,
};

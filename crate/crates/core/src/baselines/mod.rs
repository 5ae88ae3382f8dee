//! Comparison methods: full-covariance and diagonal EKFs, replay SGD, and
//! iterated (relinearizing) EKF / LO-FI updates with a line search.

mod ekf;
mod iterated;
mod replay;

pub use ekf::{fcekf_predict, fcekf_step, fcekf_update, fdekf_step, fdekf_update, vdekf_step, vdekf_update, DiagonalBelief};
pub use iterated::{iterated_ekf_update, iterated_lofi_update, Iterated, IteratedConfig};
pub use replay::{negative_log_likelihood, nll_gradient, output_nll_gradient, Example, Optimizer, ReplayBuffer, SgdReplay};

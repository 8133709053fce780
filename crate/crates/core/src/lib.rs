//! Information-aware hierarchical motion planning for a planar free-flyer
//! carrying an uncertain payload.
//!
//! The crate is layered bottom-up:
//!
//! * [`dynamics`]: offset-CM rigid-body model, RK4 integration and Jacobians.
//! * [`information`]: parameter sensitivities and the Fisher information matrix.
//! * [`estimation`]: joint state/parameter extended Kalman filter.
//! * [`world`] and [`global_plan`]: obstacle worlds and kinodynamic RRT.
//! * [`local_plan`]: receding-horizon information-weighted trajectory optimizer.
//! * [`control`]: nonlinear MPC tracking of local plans.
//! * [`harness`]: closed-loop simulator, Monte Carlo and comparison studies.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod estimation;
pub mod global_plan;
pub mod harness;
pub mod information;
pub mod local_plan;
pub mod optim;
pub mod shooting;
pub mod world;

pub use dynamics::{BodyWrench, FreeflyerModel, FreeflyerState, InertialParams};

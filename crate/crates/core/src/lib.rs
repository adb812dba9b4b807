//! Solutions of Poisson's equation `(P - I) g = -r_c` for stochastically
//! monotone Markov chains on `Z+` and `R+`.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its arguments: kernels are immutable, randomness comes from
//! explicitly seeded [`UniformStream`]s, and the same seed always reproduces
//! the same numbers.
//!
//! Layout:
//!
//! * [`kernel`] and [`reward`]: the transition-kernel abstraction (CDF,
//!   generalized inverse, optional matrix), validation, monotonicity
//!   certification and stationary distributions.
//! * [`models`]: M/M/1 and two-point Lindley recursions, birth-death chains,
//!   reflected AR(1).
//! * [`coupling`]: the shared-uniform inverse-CDF coupling, forward and
//!   backward.
//! * [`discrete`]: exact solvers on truncated `Z+` (linear, first-return,
//!   series) and the certificates built on them.
//! * [`split`]: minorization, split-chain regeneration, ratio estimation of
//!   `pi r`, Monte Carlo `g`, and the modified coupling for regenerative
//!   cycles.
//! * [`contractive`]: chains that are contractive on average, with the
//!   geometric tail bound and Lipschitz certificate.
//! * [`diagnostics`]: KS tests, binomial checks, martingale checks and the
//!   time-average variance constant.
#![no_std]
#![deny(unsafe_code)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod contractive;
pub mod coupling;
pub mod diagnostics;
pub mod discrete;
mod error;
pub mod kernel;
mod linalg;
pub mod math;
pub mod models;
pub mod reward;
pub mod rng;
pub mod split;

pub use error::{Error, Result};
pub use kernel::{
    StateSpace, Tolerances, TransitionKernel, TransitionMatrix, FIXED_POINT_TOL, MASS_TOL,
    MONOTONE_SLACK,
};
pub use reward::{CenteredReward, RewardForm, RewardFunction};
pub use rng::UniformStream;

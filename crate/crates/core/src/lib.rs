//! Closed-loop voltage control algorithms for battery storage on three-phase
//! radial distribution feeders.
//!
//! The crate is split along the control loop:
//!
//! * [`feeder`] — feeder topology, LinDist3Flow sensitivity matrices, and the
//!   exact backward/forward-sweep plant solver,
//! * [`storage`] — battery state-of-charge dynamics with converter losses,
//! * [`ofo`] — the online-feedback-optimization (primal-dual) controller,
//! * [`benchmark`] — the Volt/VAR-inspired incremental PI controller,
//! * [`sim`] — the deterministic closed-loop simulation engine and metrics.
//!
//! Everything here is `no_std` (with `alloc`) and free of I/O; file formats
//! and the command line live in the companion `voltsmooth` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod benchmark;
pub mod feeder;
pub mod fleet;
pub mod mat;
pub mod ofo;
pub mod sim;
pub mod storage;

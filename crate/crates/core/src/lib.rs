//! Robust feedback linearization of uncertain nonlinear MIMO plants and
//! minimax LQG output-feedback synthesis on the resulting linear model.
//!
//! The pipeline implemented here:
//!
//! 1. model an uncertain control-affine plant symbolically ([`plant`]),
//! 2. feedback-linearize the nominal part exactly via Lie-derivative
//!    chains and an integrator-augmented coordinate change ([`feedlin`]),
//! 3. bound the residual uncertainty of the transformed model with a
//!    mean-value linearization over a hyper-rectangle ([`meanval`]),
//! 4. synthesize a minimax LQG output-feedback controller from the
//!    resulting uncertain linear model ([`minimax`], [`riccati`]),
//! 5. verify the design by closed-loop nonlinear simulation ([`sim`]).
//!
//! An air-breathing hypersonic flight vehicle case study lives in
//! [`ahfv`]; configuration files, JSON/CSV artifacts and the command line
//! front end live in the companion `robolin` crate.
//!
//! The crate is `no_std`-compatible (requires `alloc`): disable the
//! default `std` feature for embedded or sandboxed use.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod ahfv;
pub mod expr;
pub mod feedlin;
pub mod math;
pub mod meanval;
pub mod minimax;
pub mod plant;
pub mod riccati;
pub mod sample;
pub mod sim;

pub use expr::{Expr, VarId, VariableSpace};


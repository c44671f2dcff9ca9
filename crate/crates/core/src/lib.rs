//! Parameter-asymptotic physics-informed neural networks for two-parameter
//! singularly perturbed boundary-value problems.
//!
//! The crate is organised bottom-up:
//!
//! * [`network`] holds the fully connected tanh network and its parameters.
//! * [`jets`] propagates first and pure second input derivatives through the
//!   network and back-propagates parameter gradients.
//! * [`problems`] is the registry of the six benchmark problems with their
//!   closed-form solutions.
//! * [`sampling`] generates Latin hypercube collocation sets and performs
//!   residual-driven refinement.
//! * [`optim`] and [`training`] implement L-BFGS and the PINN loss.
//! * [`continuation`] drives training through a decreasing sequence of
//!   perturbation parameters.
//! * [`fdm`] is the upwind finite-difference baseline on Shishkin meshes.
//! * [`metrics`], [`config`] and [`experiment`] evaluate, configure and
//!   persist experiments.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod continuation;
pub mod error;
pub mod experiment;
pub mod fdm;
pub mod jets;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod problems;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
pub use jets::{eval_jet, Jet2, LossGrad};
pub use network::{MlpParams, NetworkShape};
pub use problems::{PerturbationPair, ProblemId, ProblemSpec, RegimeLabel};

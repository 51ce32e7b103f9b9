//! Penalized spline logistic regression and a one-hidden-layer network.

pub mod gam;
pub mod nn;

pub use gam::{gam_objective, spline_mask, GamModel, GamParams, Penalty, RIDGE_FLOOR};
pub use nn::{standardization, NnModel, NnObjective, NnParams, PatternObjective};

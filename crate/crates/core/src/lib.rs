//! Visual-servoing stack for a desk-scale digital-twin quadrotor:
//! an analytical reduced-IBVS teacher with a stabilized keypoint pipeline,
//! a fixed-altitude kinematic simulator with campaign tooling, and a
//! compact learned student controller distilled from teacher rollouts.

pub mod camgeo;
pub mod config;
pub mod evalkit;
pub mod perception;
pub mod servo;
pub mod simkit;
pub mod student;

//! Risk-averse stochastic dual dynamic programming for finite-horizon
//! stochastic optimal control with polyhedral costs and dynamics.
//!
//! Lower bounds come from nested cutting-plane approximations of the
//! value functions ([`engine`], [`qfactor`]); upper bounds from Monte-Carlo
//! evaluation of a policy-dependent recursion ([`ubound`]); small instances
//! can be solved exactly by scenario-tree enumeration ([`oracle`]).

// `!(a <= b)` is used on purpose to reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod polyhedral;
pub mod qfactor;
pub mod risk;
pub mod ubound;

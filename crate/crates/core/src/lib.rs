//! Learning and computing Stackelberg equilibria in iterated 2×2 matrix games.
//!
//! The crate is organised bottom-up:
//!
//! - [`game`]: the iterated matrix game family with deterministic one-step-memory dynamics.
//! - [`policy`]: tabular, softmax, Q-table and context-conditioned follower policies.
//! - [`oracle`]: follower best-response oracles that only touch the leader through queries.
//! - [`composer`]: the leader's learning problem, a query segment followed by a play segment.
//! - [`learners`]: Q-learning, REINFORCE, clipped-surrogate and evolutionary leader learners.
//! - [`solver`]: exhaustive Stackelberg search, policy evaluation and equilibrium verification.
//! - [`harness`]: experiment configuration, figure presets and CSV emission.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod composer;
pub mod error;
pub mod game;
pub mod harness;
pub mod learners;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use game::{Action, GameState, MatrixGameSpec, MemoryMode, ObservationId, PayoffMatrix, Role};

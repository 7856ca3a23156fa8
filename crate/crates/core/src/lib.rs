//! VQEL: a desk-scale laboratory for emergent symbolic communication.
//!
//! Agents invent a discrete language over a vector-quantized codebook by
//! playing a referential game with themselves (self-play), then align it with
//! a partner over a non-differentiable symbolic channel (mutual play).
//! REINFORCE and Gumbel-Softmax straight-through senders are included as
//! baselines, along with the Synthetic Objects dataset, evaluation metrics,
//! and a reproducible experiment runner.

pub mod agent;
pub mod baselines;
pub mod data;
pub mod exp;
pub mod games;
pub mod metrics;
pub mod numcore;
pub mod vq;

pub use numcore::{NumError, Tape, Var};

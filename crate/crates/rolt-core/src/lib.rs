//! Desk-scale laboratory for a robust locomotion transformer: a tape-based
//! autodiff engine, a body-tokenized multi-modal policy with consistent
//! feature/PE dropout, a deterministic planar legged-walker simulator with
//! fault injection, a PPO trainer that reuses rollout dropout masks at update
//! time, observation-corruption models, and the evaluation protocols
//! (stiffness, damage, noise sweeps, attention maps) built on top.

pub mod adam;
pub mod corrupt;
pub mod error;
pub mod harness;
pub mod model;
pub mod obs;
pub mod ppo;
pub mod rng;
pub mod sim;
pub mod tape;
pub mod tensor;

pub use error::{Result, RoltError};

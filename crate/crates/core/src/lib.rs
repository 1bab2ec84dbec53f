//! Semantic-aware downlink scheduling and beamforming simulator.

pub mod aois;
pub mod beamformer;
pub mod channel;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod qcqp;
pub mod rate;
pub mod rng;
pub mod sca;
pub mod scheduler;
pub mod semantics;
pub mod zf;

pub use beamformer::BeamformerSet;
pub use channel::ChannelState;
pub use error::{Error, Result};

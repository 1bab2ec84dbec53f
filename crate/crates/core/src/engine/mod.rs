//! Episode driver, configuration, outputs, sweeps and self-checks.

pub mod config;
pub mod episode;
pub mod output;
pub mod sweep;
pub mod verify;

pub use config::{Mode, SystemConfig};
pub use episode::{run_episode, EpisodeResult};

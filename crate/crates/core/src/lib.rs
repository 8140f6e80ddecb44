//! Imaging of a low-altitude region through reconfigurable intelligent
//! surfaces: a cascaded free-space forward model, greedy sparse recovery,
//! Cramér–Rao bound analysis and system power accounting.

pub mod channel;
pub mod config;
pub mod crlb;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod power;
pub mod recovery;
pub mod risconfig;
pub mod scene;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use forward::{build_sensing_matrix, SensingMatrix, SparseImage};
pub use risconfig::{draw_schedule, PhaseSchedule, RisMode};
pub use scene::{Scene, Vec3};

//! HTTP generation service and the shared plumbing behind the `ftg` command.

pub mod api;
pub mod engine;
pub mod error;
pub mod request;
pub mod store;
pub mod workflows;

pub use api::{router, serve, AppState};
pub use engine::{generate, Audit, GenerationResponse};
pub use error::{ErrorKind, ServiceError};
pub use request::{ChordUnit, GenerationRequest, ResolvedRequest, RhythmInput, SamplerMode, SamplerRequest, StepsInput};
pub use store::{CheckpointInfo, CheckpointStore, CHECKPOINT_DIR_ENV, CHECKPOINT_EXTENSION};

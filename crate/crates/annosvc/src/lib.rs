//! Agreement-gated annotation workflow for collecting personal-entity gold data,
//! persisted as an event log and exposed over an HTTP JSON API.

pub mod build;
pub mod model;
pub mod project;
pub mod report;
pub mod server;
pub mod workflow;

pub use build::{build_init, Stoplist};
pub use model::{Event, Hit, HitOption, HitStatus};
pub use project::{Project, ProjectError};
pub use workflow::{ConversationStatus, ProjectState, WorkflowError};

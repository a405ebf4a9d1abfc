//! Teacher-initiated, real-time 1:1 help for large online courses.
//!
//! A teacher with spare minutes opens a ticket; the matchmaker offers help
//! to one online, actively working student at a time until somebody
//! accepts, then hosts the session. Every state change is an
//! [`EventRecord`] in an append-only log, and everything else (replay,
//! analytics, the simulator) is a function of that log.

pub mod analytics;
pub mod audit;
pub mod config;
pub mod eligibility;
pub mod engine;
pub mod error;
pub mod event;
pub mod hash;
pub mod ids;
pub mod matchmaker;
pub mod num;
pub mod presence;
pub mod session;
pub mod sim;
pub mod state;

pub use config::CourseConfig;
pub use eligibility::{assign_group, ExperimentAssignment, Group, NudgableQuery};
pub use engine::Engine;
pub use error::{ConfigError, CoreError, LogError};
pub use event::{Event, EventRecord, EventSink, JsonlSink, MemoryLog, NullSink};
pub use ids::{AssignmentId, NudgeId, SessionId, StudentId, TeacherId, TicketId, Timestamp, DAY_MS, MINUTE_MS};
pub use matchmaker::{Nudge, NudgeOutcome, NudgeTicket, Response, SelectionPolicy, TicketState};
pub use num::Real;
pub use presence::{ActivityContext, ContextKind, PresenceRecord};
pub use session::{Author, Participant, Session, SessionEventKind};
pub use state::{replay, State};

/// Double-precision analytics outputs.
pub type CohortCurves = analytics::CohortCurves<f64>;
pub type CohortSeries = analytics::CohortSeries<f64>;
pub type Table1Aggregates = analytics::Table1Aggregates<f64>;
pub type TimelineMatrix = analytics::TimelineMatrix<f64>;
pub type CaptureComparison = analytics::CaptureComparison<f64>;

use thiserror::Error;

use crate::ids::{AssignmentId, NudgeId, SessionId, TeacherId, TicketId, Timestamp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{name} must be positive, got {value}")]
    NonPositiveWindow { name: &'static str, value: i64 },
    #[error("experiment fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("assignment {0} listed twice")]
    DuplicateAssignment(AssignmentId),
}

/// Errors surfaced by commands against the live state.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("heartbeat at {got} is older than stored heartbeat at {stored}")]
    StaleHeartbeat { stored: Timestamp, got: Timestamp },
    #[error("IDE context requires an assignment id, other contexts must not carry one")]
    MalformedContext,
    #[error("command time {now} precedes log clock {clock}")]
    ClockRegression { clock: Timestamp, now: Timestamp },
    #[error("unknown assignment {0}")]
    UnknownAssignment(AssignmentId),
    #[error("teacher {0} already has a live ticket or session")]
    TeacherBusy(TeacherId),
    #[error("ticket {0} not found")]
    TicketNotFound(TicketId),
    #[error("ticket {0} is terminal")]
    TicketTerminal(TicketId),
    #[error("nudge {0} not found")]
    NudgeNotFound(NudgeId),
    #[error("nudge {0} passed its response deadline")]
    NudgeExpired(NudgeId),
    #[error("nudge {0} is no longer pending")]
    NudgeNotPending(NudgeId),
    #[error("ticket {0} already has a session")]
    DuplicateSession(TicketId),
    #[error("session {0} not found")]
    SessionNotFound(SessionId),
    #[error("only the student may edit code in session {0}")]
    EditForbidden(SessionId),
    #[error("session {0} has ended")]
    SessionClosed(SessionId),
    #[error("session {0} is still live")]
    SessionLive(SessionId),
    #[error("caller is not a participant of session {0}")]
    NotParticipant(SessionId),
    #[error("already recorded for session {0}")]
    AlreadyRecorded(SessionId),
    #[error("rating {0} outside 1..=5")]
    ScoreOutOfRange(u8),
    #[error(transparent)]
    InvalidConfig(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Errors reading, validating or replaying an event log.
#[derive(Debug, Error)]
pub enum LogError {
    #[error("corrupt log: expected seq {expected}, found {found}")]
    SeqGap { expected: u64, found: u64 },
    #[error("corrupt log: ts {ts} at seq {seq} precedes {previous}")]
    TsRegression { seq: u64, ts: Timestamp, previous: Timestamp },
    #[error("corrupt log: record {seq} inconsistent with prior state: {reason}")]
    Inconsistent { seq: u64, reason: String },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LogError {
    pub fn is_corrupt(&self) -> bool {
        matches!(self, LogError::SeqGap { .. } | LogError::TsRegression { .. } | LogError::Inconsistent { .. })
    }
}

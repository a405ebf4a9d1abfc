//! Outcome measurement as pure functions of the event log: progress and
//! retention, counterfactual control groups at each accept instant, cohort
//! curves around sessions, usage aggregates, and teacher activity timelines.
//!
//! Everything is computed from a [`CourseLog`], an index built by a single
//! replay of the records.

mod controls;
mod curves;
mod ledger;
pub mod report;
mod table1;
mod timeline;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::error::LogError;
use crate::event::{Event, EventRecord};
use crate::ids::{NudgeId, SessionId, StudentId, TeacherId, Timestamp};
use crate::matchmaker::NudgeOutcome;
use crate::presence::ActivityContext;
use crate::state::State;

pub use controls::{ControlGroup, ProgressBand};
pub use curves::{CohortCurves, CohortSeries, DEFAULT_OFFSETS};
pub use ledger::ProgressLedger;
pub use table1::Table1Aggregates;
pub use timeline::{ActivityLabel, ActivityTimeline, CaptureComparison, TimelineMatrix, TIMELINE_MINUTES};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("course has no assignments configured")]
    NoAssignmentsConfigured,
    #[error("session {0} not found")]
    SessionNotFound(SessionId),
    #[error("no session has a non-empty control group ({skipped} skipped)")]
    NoSessionsWithControls { skipped: usize },
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Everything the analytics need, extracted in one pass over the log.
#[derive(Debug, Clone)]
pub struct CourseLog {
    state: State,
    ledger: ProgressLedger,
    last_activity: BTreeMap<StudentId, Timestamp>,
    teacher_beats: BTreeMap<TeacherId, Vec<(Timestamp, ActivityContext)>>,
    /// Restricted-and-nudgable snapshot taken just before each acceptance.
    snapshots: BTreeMap<NudgeId, controls::Snapshot>,
    band: ProgressBand,
}

impl CourseLog {
    pub fn from_records(records: &[EventRecord]) -> Result<Self, AnalyticsError> {
        let mut state = State::default();
        let mut ledger = ProgressLedger::default();
        let mut last_activity = BTreeMap::new();
        let mut teacher_beats: BTreeMap<TeacherId, Vec<_>> = BTreeMap::new();
        let mut snapshots = BTreeMap::new();

        for rec in records {
            let mut touch = |s: &StudentId| {
                last_activity.insert(s.clone(), rec.ts);
            };
            match &rec.event {
                Event::CourseConfigured { config } => ledger.set_total(config.assignment_ids.len()),
                Event::StudentHeartbeat { student, .. } => touch(student),
                Event::AssignmentCompleted { student, assignment } => {
                    touch(student);
                    ledger.record(student, assignment, rec.ts);
                }
                Event::NudgeResolved { nudge, outcome } => {
                    if matches!(outcome, NudgeOutcome::Accepted | NudgeOutcome::Declined) {
                        if let Some(n) = state.nudge(*nudge) {
                            touch(&n.student_id.clone());
                        }
                    }
                    if *outcome == NudgeOutcome::Accepted {
                        snapshots.insert(*nudge, controls::Snapshot::capture(&state, *nudge, rec.ts));
                    }
                }
                Event::SessionStarted { student, .. } => touch(student),
                Event::SessionEventAppended { session, author, .. } => {
                    if *author == crate::session::Author::Student {
                        if let Some(s) = state.session(*session) {
                            touch(&s.student_id.clone());
                        }
                    }
                }
                Event::TeacherHeartbeat { teacher, context } => {
                    teacher_beats.entry(teacher.clone()).or_default().push((rec.ts, context.clone()));
                }
                _ => {}
            }
            state.apply(rec)?;
        }
        Ok(Self { state, ledger, last_activity, teacher_beats, snapshots, band: ProgressBand::default() })
    }

    /// Replaces the ±1% progress band used for control matching.
    pub fn with_band(mut self, band: ProgressBand) -> Self {
        self.band = band;
        self
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn ledger(&self) -> &ProgressLedger {
        &self.ledger
    }

    /// Fraction of course assignments completed at or before `t`.
    pub fn progress<T: crate::num::Real>(&self, student: &StudentId, t: Timestamp) -> Result<T, AnalyticsError> {
        self.ledger.progress(student, t)
    }

    /// Whether the student has any logged activity at or after `day_ts`.
    pub fn is_retained(&self, student: &StudentId, day_ts: Timestamp) -> bool {
        self.last_activity.get(student).is_some_and(|last| *last >= day_ts)
    }

    pub fn last_activity(&self, student: &StudentId) -> Option<Timestamp> {
        self.last_activity.get(student).copied()
    }
}

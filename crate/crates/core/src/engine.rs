//! Command side: validates requests against the current state, emits
//! records, and applies them. Every mutation goes through [`Engine::emit`].

use std::mem;

use crate::config::CourseConfig;
use crate::error::CoreError;
use crate::event::{Event, EventRecord, EventSink, MemoryLog};
use crate::ids::{AssignmentId, StudentId, TeacherId, Timestamp};
use crate::matchmaker::NudgeOutcome;
use crate::presence::{ActivityContext, PresenceRecord};
use crate::session::EndedBy;
use crate::state::State;

pub struct Engine<S: EventSink = MemoryLog> {
    pub(crate) state: State,
    pub(crate) sink: S,
    outbox: Vec<EventRecord>,
}

impl<S: EventSink> Engine<S> {
    /// Starts a fresh log whose first record configures the course.
    pub fn new(config: CourseConfig, sink: S, now: Timestamp) -> Result<Self, CoreError> {
        config.validate()?;
        let mut engine = Self::from_state(State::default(), sink);
        engine.emit(now, Event::CourseConfigured { config })?;
        Ok(engine)
    }

    /// Continues from replayed state. `sink` receives only new records.
    pub fn from_state(state: State, sink: S) -> Self {
        Self { state, sink, outbox: Vec::new() }
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }

    pub fn into_parts(self) -> (State, S) {
        (self.state, self.sink)
    }

    /// Records emitted since the last call, in log order.
    pub fn take_emitted(&mut self) -> Vec<EventRecord> {
        mem::take(&mut self.outbox)
    }

    pub(crate) fn emit(&mut self, now: Timestamp, event: Event) -> Result<(), CoreError> {
        let record = EventRecord { seq: self.state.seq + 1, ts: now, event };
        self.sink.append(&record).map_err(crate::error::LogError::from)?;
        self.state.apply(&record)?;
        self.sink.applied(&record, &self.state);
        self.outbox.push(record);
        Ok(())
    }

    /// Rejects commands from the past, then fires every timer that fell due
    /// strictly before `now`. A deadline equal to `now` is still open, so a
    /// response arriving exactly at the deadline is honoured.
    pub(crate) fn begin(&mut self, now: Timestamp) -> Result<(), CoreError> {
        if self.state.seq > 0 && now < self.state.clock {
            return Err(CoreError::ClockRegression { clock: self.state.clock, now });
        }
        self.fire_timers(now, false)
    }

    /// Fires every timer due at or before `now`: response deadlines and idle
    /// session timeouts.
    pub fn tick(&mut self, now: Timestamp) -> Result<(), CoreError> {
        if self.state.seq > 0 && now < self.state.clock {
            return Err(CoreError::ClockRegression { clock: self.state.clock, now });
        }
        self.fire_timers(now, true)
    }

    fn fire_timers(&mut self, now: Timestamp, inclusive: bool) -> Result<(), CoreError> {
        let due = |at: Timestamp| if inclusive { at <= now } else { at < now };
        while let Some((deadline, nudge)) = self.state.next_nudge_deadline() {
            if !due(deadline) {
                break;
            }
            // Timers fire at their own instant so the log reads in causal order.
            let at = deadline.max(self.state.clock);
            self.emit(at, Event::NudgeResolved { nudge, outcome: NudgeOutcome::TimedOut })?;
            let ticket = self.state.nudges[&nudge].ticket_id;
            self.advance_search(ticket, at)?;
        }
        let idle = self.state.config.session_idle_timeout_ms;
        let mut stale: Vec<_> = self
            .state
            .live_session_by_teacher
            .values()
            .filter_map(|id| {
                let s = &self.state.sessions[id];
                let at = s.last_activity.plus(idle);
                due(at).then_some((at, *id))
            })
            .collect();
        stale.sort();
        for (at, session) in stale {
            let at = at.max(self.state.clock);
            self.emit(at, Event::SessionEnded { session, ended_by: EndedBy::IdleTimeout })?;
        }
        Ok(())
    }

    /// Replaces the course configuration from `now` on, e.g. widening the
    /// experiment fraction once a trial period ends.
    pub fn configure(&mut self, config: CourseConfig, now: Timestamp) -> Result<(), CoreError> {
        config.validate()?;
        self.begin(now)?;
        self.emit(now, Event::CourseConfigured { config })
    }

    pub fn record_heartbeat(
        &mut self,
        student: StudentId,
        now: Timestamp,
        context: ActivityContext,
    ) -> Result<PresenceRecord<StudentId>, CoreError> {
        self.begin(now)?;
        self.state.students.check_heartbeat(&student, now, &context)?;
        self.emit(now, Event::StudentHeartbeat { student: student.clone(), context })?;
        Ok(self.state.students.get(&student).expect("just recorded"))
    }

    pub fn record_teacher_heartbeat(
        &mut self,
        teacher: TeacherId,
        now: Timestamp,
        context: ActivityContext,
    ) -> Result<PresenceRecord<TeacherId>, CoreError> {
        self.begin(now)?;
        self.state.teachers.check_heartbeat(&teacher, now, &context)?;
        self.emit(now, Event::TeacherHeartbeat { teacher: teacher.clone(), context })?;
        Ok(self.state.teachers.get(&teacher).expect("just recorded"))
    }

    /// Marks an assignment as passed. Returns `false` when it already was;
    /// completion never reverts.
    pub fn record_completion(
        &mut self,
        student: StudentId,
        assignment: AssignmentId,
        now: Timestamp,
    ) -> Result<bool, CoreError> {
        if !self.state.config.has_assignment(&assignment) {
            return Err(CoreError::UnknownAssignment(assignment));
        }
        self.begin(now)?;
        if self.state.has_completed(&student, &assignment) {
            return Ok(false);
        }
        self.emit(now, Event::AssignmentCompleted { student, assignment })?;
        Ok(true)
    }
}

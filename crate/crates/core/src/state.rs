//! The aggregate rebuilt from the log. `State::apply` is the only place
//! where protocol state changes; the engine emits records and applies them
//! through here, and replay does the same.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::CourseConfig;
use crate::error::LogError;
use crate::event::{Event, EventRecord};
use crate::ids::{AssignmentId, NudgeId, SessionId, StudentId, TeacherId, TicketId, Timestamp};
use crate::matchmaker::{Nudge, NudgeOutcome, NudgeTicket, TicketState};
use crate::presence::PresenceTable;
use crate::session::{Author, Session, SessionEvent, SessionEventKind};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub(crate) seq: u64,
    pub(crate) clock: Timestamp,
    pub(crate) config: CourseConfig,
    pub(crate) students: PresenceTable<StudentId>,
    pub(crate) teachers: PresenceTable<TeacherId>,
    pub(crate) completions: BTreeMap<StudentId, BTreeSet<AssignmentId>>,
    pub(crate) tickets: BTreeMap<TicketId, NudgeTicket>,
    pub(crate) nudges: BTreeMap<NudgeId, Nudge>,
    pub(crate) sessions: BTreeMap<SessionId, Session>,
    pub(crate) last_nudged: BTreeMap<StudentId, Timestamp>,
    pub(crate) pending_by_student: BTreeMap<StudentId, NudgeId>,
    pub(crate) live_ticket_by_teacher: BTreeMap<TeacherId, TicketId>,
    pub(crate) live_session_by_student: BTreeMap<StudentId, SessionId>,
    pub(crate) live_session_by_teacher: BTreeMap<TeacherId, SessionId>,
    pub(crate) session_by_ticket: BTreeMap<TicketId, SessionId>,
    pub(crate) nudge_timers: BTreeSet<(Timestamp, NudgeId)>,
}

/// Rebuilds state from a record sequence.
pub fn replay<'a, I>(records: I) -> Result<State, LogError>
where
    I: IntoIterator<Item = &'a EventRecord>,
{
    let mut state = State::default();
    for record in records {
        state.apply(record)?;
    }
    Ok(state)
}

fn inconsistent(seq: u64, reason: impl Into<String>) -> LogError {
    LogError::Inconsistent { seq, reason: reason.into() }
}

impl State {
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn clock(&self) -> Timestamp {
        self.clock
    }

    pub fn config(&self) -> &CourseConfig {
        &self.config
    }

    pub fn students(&self) -> &PresenceTable<StudentId> {
        &self.students
    }

    pub fn teachers(&self) -> &PresenceTable<TeacherId> {
        &self.teachers
    }

    pub fn ticket(&self, id: TicketId) -> Option<&NudgeTicket> {
        self.tickets.get(&id)
    }

    pub fn tickets(&self) -> impl Iterator<Item = &NudgeTicket> {
        self.tickets.values()
    }

    pub fn nudge(&self, id: NudgeId) -> Option<&Nudge> {
        self.nudges.get(&id)
    }

    pub fn nudges(&self) -> impl Iterator<Item = &Nudge> {
        self.nudges.values()
    }

    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.get(&id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn session_for_ticket(&self, id: TicketId) -> Option<&Session> {
        self.session_by_ticket.get(&id).and_then(|s| self.sessions.get(s))
    }

    pub fn live_ticket_of(&self, teacher: &TeacherId) -> Option<&NudgeTicket> {
        self.live_ticket_by_teacher.get(teacher).and_then(|t| self.tickets.get(t))
    }

    pub fn live_session_of_teacher(&self, teacher: &TeacherId) -> Option<&Session> {
        self.live_session_by_teacher.get(teacher).and_then(|s| self.sessions.get(s))
    }

    pub fn live_session_of_student(&self, student: &StudentId) -> Option<&Session> {
        self.live_session_by_student.get(student).and_then(|s| self.sessions.get(s))
    }

    pub fn pending_nudge_of(&self, student: &StudentId) -> Option<&Nudge> {
        self.pending_by_student.get(student).and_then(|n| self.nudges.get(n))
    }

    pub fn teacher_busy(&self, teacher: &TeacherId) -> bool {
        self.live_ticket_by_teacher.contains_key(teacher) || self.live_session_by_teacher.contains_key(teacher)
    }

    /// Completed assignments counted against the configured course.
    pub fn completed_count(&self, student: &StudentId) -> usize {
        self.completions.get(student).map_or(0, |done| done.iter().filter(|a| self.config.has_assignment(a)).count())
    }

    pub fn has_completed(&self, student: &StudentId, assignment: &AssignmentId) -> bool {
        self.completions.get(student).is_some_and(|done| done.contains(assignment))
    }

    /// Earliest pending response deadline, if any.
    pub fn next_nudge_deadline(&self) -> Option<(Timestamp, NudgeId)> {
        self.nudge_timers.first().copied()
    }

    pub(crate) fn next_ticket_id(&self) -> TicketId {
        TicketId(self.tickets.last_key_value().map_or(1, |(k, _)| k.0 + 1))
    }

    pub(crate) fn next_nudge_id(&self) -> NudgeId {
        NudgeId(self.nudges.last_key_value().map_or(1, |(k, _)| k.0 + 1))
    }

    pub(crate) fn next_session_id(&self) -> SessionId {
        // Matched tickets reserve their session id before the session record.
        let from_sessions = self.sessions.last_key_value().map_or(0, |(k, _)| k.0);
        let from_tickets = self
            .tickets
            .values()
            .filter_map(|t| match t.state {
                TicketState::Matched(s) => Some(s.0),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        SessionId(from_sessions.max(from_tickets) + 1)
    }

    /// Hex SHA-256 over the canonical serialization of the whole aggregate.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state always serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn apply(&mut self, record: &EventRecord) -> Result<(), LogError> {
        let expected = self.seq + 1;
        if record.seq != expected {
            return Err(LogError::SeqGap { expected, found: record.seq });
        }
        if self.seq > 0 && record.ts < self.clock {
            return Err(LogError::TsRegression { seq: record.seq, ts: record.ts, previous: self.clock });
        }
        self.apply_event(record.seq, record.ts, &record.event)?;
        self.seq = record.seq;
        self.clock = record.ts;
        Ok(())
    }

    fn apply_event(&mut self, seq: u64, ts: Timestamp, event: &Event) -> Result<(), LogError> {
        let bad = |reason: &str| inconsistent(seq, reason);
        match event {
            Event::CourseConfigured { config } => {
                config.validate().map_err(|e| bad(&e.to_string()))?;
                self.config = config.clone();
            }
            Event::StudentHeartbeat { student, context } => {
                self.students
                    .record_heartbeat(student.clone(), ts, context.clone())
                    .map_err(|e| bad(&e.to_string()))?;
            }
            Event::TeacherHeartbeat { teacher, context } => {
                self.teachers
                    .record_heartbeat(teacher.clone(), ts, context.clone())
                    .map_err(|e| bad(&e.to_string()))?;
            }
            Event::AssignmentCompleted { student, assignment } => {
                if !self.config.has_assignment(assignment) {
                    return Err(bad("completion of unknown assignment"));
                }
                if !self.completions.entry(student.clone()).or_default().insert(assignment.clone()) {
                    return Err(bad("assignment completed twice"));
                }
            }
            Event::TicketOpened { ticket, teacher, policy, search_deadline } => {
                if *ticket != self.next_ticket_id() {
                    return Err(bad("ticket id out of order"));
                }
                if self.teacher_busy(teacher) {
                    return Err(bad("ticket opened for busy teacher"));
                }
                self.tickets.insert(
                    *ticket,
                    NudgeTicket {
                        ticket_id: *ticket,
                        teacher_id: teacher.clone(),
                        created_at: ts,
                        state: TicketState::Searching,
                        nudged: Vec::new(),
                        search_deadline: *search_deadline,
                        policy: *policy,
                        closed_at: None,
                    },
                );
                self.live_ticket_by_teacher.insert(teacher.clone(), *ticket);
            }
            Event::NudgeSent { nudge, ticket, student, deadline } => {
                if *nudge != self.next_nudge_id() {
                    return Err(bad("nudge id out of order"));
                }
                if self.pending_by_student.contains_key(student) {
                    return Err(bad("student already has a pending nudge"));
                }
                let t = self.tickets.get_mut(ticket).ok_or_else(|| bad("unknown ticket"))?;
                if t.state != TicketState::Searching {
                    return Err(bad("nudge sent by ticket that is not searching"));
                }
                if t.nudged.contains(student) {
                    return Err(bad("student nudged twice by one ticket"));
                }
                t.state = TicketState::NudgePending(*nudge);
                t.nudged.push(student.clone());
                self.nudges.insert(
                    *nudge,
                    Nudge {
                        nudge_id: *nudge,
                        ticket_id: *ticket,
                        student_id: student.clone(),
                        sent_at: ts,
                        deadline: *deadline,
                        outcome: NudgeOutcome::Pending,
                        resolved_at: None,
                    },
                );
                self.last_nudged.insert(student.clone(), ts);
                self.pending_by_student.insert(student.clone(), *nudge);
                self.nudge_timers.insert((*deadline, *nudge));
            }
            Event::NudgeResolved { nudge, outcome } => {
                let n = self.nudges.get_mut(nudge).ok_or_else(|| bad("unknown nudge"))?;
                if n.outcome != NudgeOutcome::Pending {
                    return Err(bad("nudge resolved twice"));
                }
                match outcome {
                    NudgeOutcome::Pending => return Err(bad("resolution to pending")),
                    NudgeOutcome::Accepted | NudgeOutcome::Declined if ts > n.deadline => {
                        return Err(bad("response after deadline"))
                    }
                    NudgeOutcome::TimedOut if ts < n.deadline => return Err(bad("timeout before deadline")),
                    _ => {}
                }
                n.outcome = *outcome;
                n.resolved_at = Some(ts);
                let (ticket_id, student, deadline) = (n.ticket_id, n.student_id.clone(), n.deadline);
                self.pending_by_student.remove(&student);
                self.nudge_timers.remove(&(deadline, *nudge));
                let t = self.tickets.get_mut(&ticket_id).ok_or_else(|| bad("unknown ticket"))?;
                if t.state != TicketState::NudgePending(*nudge) {
                    return Err(bad("resolved nudge is not the ticket's pending nudge"));
                }
                if matches!(outcome, NudgeOutcome::Declined | NudgeOutcome::TimedOut) {
                    t.state = TicketState::Searching;
                }
            }
            Event::TicketMatched { ticket, session } => {
                let t = self.tickets.get_mut(ticket).ok_or_else(|| bad("unknown ticket"))?;
                let TicketState::NudgePending(n) = t.state else {
                    return Err(bad("matched ticket had no pending nudge"));
                };
                if self.nudges.get(&n).map(|n| n.outcome) != Some(NudgeOutcome::Accepted) {
                    return Err(bad("matched ticket without accepted nudge"));
                }
                t.state = TicketState::Matched(*session);
                t.closed_at = Some(ts);
                self.live_ticket_by_teacher.remove(&t.teacher_id);
            }
            Event::TicketExhausted { ticket } => {
                let t = self.tickets.get_mut(ticket).ok_or_else(|| bad("unknown ticket"))?;
                if t.state != TicketState::Searching {
                    return Err(bad("exhausted ticket was not searching"));
                }
                t.state = TicketState::Exhausted;
                t.closed_at = Some(ts);
                self.live_ticket_by_teacher.remove(&t.teacher_id);
            }
            Event::TicketCancelled { ticket } => {
                let t = self.tickets.get_mut(ticket).ok_or_else(|| bad("unknown ticket"))?;
                match t.state {
                    TicketState::Searching => {}
                    TicketState::NudgePending(n) => {
                        if self.nudges.get(&n).map(|n| n.outcome) != Some(NudgeOutcome::Cancelled) {
                            return Err(bad("cancelled ticket still has a live nudge"));
                        }
                    }
                    _ => return Err(bad("cancelled a terminal ticket")),
                }
                t.state = TicketState::Cancelled;
                t.closed_at = Some(ts);
                self.live_ticket_by_teacher.remove(&t.teacher_id);
            }
            Event::SessionStarted { session, ticket, nudge, teacher, student, assignment } => {
                if self.sessions.contains_key(session) || self.session_by_ticket.contains_key(ticket) {
                    return Err(bad("duplicate session"));
                }
                let t = self.tickets.get(ticket).ok_or_else(|| bad("unknown ticket"))?;
                if t.state != TicketState::Matched(*session) || &t.teacher_id != teacher {
                    return Err(bad("session does not match its ticket"));
                }
                let n = self.nudges.get(nudge).ok_or_else(|| bad("unknown nudge"))?;
                if n.outcome != NudgeOutcome::Accepted || n.ticket_id != *ticket || &n.student_id != student {
                    return Err(bad("session does not match its accepted nudge"));
                }
                if self.live_session_by_student.contains_key(student)
                    || self.live_session_by_teacher.contains_key(teacher)
                {
                    return Err(bad("participant already in a live session"));
                }
                self.sessions.insert(
                    *session,
                    Session::new(*session, *ticket, *nudge, teacher.clone(), student.clone(), assignment.clone(), ts),
                );
                self.session_by_ticket.insert(*ticket, *session);
                self.live_session_by_student.insert(student.clone(), *session);
                self.live_session_by_teacher.insert(teacher.clone(), *session);
            }
            Event::MediaPrefsSet { session, author, prefs } => {
                let s = self.live_session_mut(*session).ok_or_else(|| bad("session not live"))?;
                match author {
                    Author::Teacher => s.media_prefs.teacher = *prefs,
                    Author::Student => s.media_prefs.student = *prefs,
                }
                s.last_activity = ts;
            }
            Event::SessionEventAppended { session, seq: event_seq, author, event, payload } => {
                let s = self.live_session_mut(*session).ok_or_else(|| bad("session not live"))?;
                if *event_seq != s.events.len() as u64 + 1 {
                    return Err(bad("session event seq out of order"));
                }
                if *event == SessionEventKind::CodeEdit {
                    if *author != Author::Student {
                        return Err(bad("code edit by teacher"));
                    }
                    s.code = Some(payload.clone());
                }
                s.events.push(SessionEvent {
                    seq: *event_seq,
                    ts,
                    author: *author,
                    kind: *event,
                    payload: payload.clone(),
                });
                s.last_activity = ts;
            }
            Event::SessionEnded { session, ended_by } => {
                let s = self.live_session_mut(*session).ok_or_else(|| bad("session not live"))?;
                s.ended_at = Some(ts);
                s.ended_by = Some(*ended_by);
                let (student, teacher) = (s.student_id.clone(), s.teacher_id.clone());
                self.live_session_by_student.remove(&student);
                self.live_session_by_teacher.remove(&teacher);
            }
            Event::GratitudeRecorded { session, thanked, message } => {
                let s = self.sessions.get_mut(session).ok_or_else(|| bad("unknown session"))?;
                if s.ended_at.is_none() || s.gratitude.is_some() {
                    return Err(bad("gratitude on live session or recorded twice"));
                }
                s.gratitude = Some(crate::session::Gratitude {
                    thanked: *thanked,
                    message: message.clone(),
                    released_to_teacher: false,
                });
            }
            Event::GratitudeReleased { session } => {
                let g = self
                    .sessions
                    .get_mut(session)
                    .and_then(|s| s.gratitude.as_mut())
                    .ok_or_else(|| bad("release without gratitude"))?;
                g.released_to_teacher = true;
            }
            Event::RatingRecorded { session, score, comment } => {
                let s = self.sessions.get_mut(session).ok_or_else(|| bad("unknown session"))?;
                if s.ended_at.is_none() || s.rating.is_some() || !(1..=5).contains(score) {
                    return Err(bad("invalid rating"));
                }
                s.rating = Some(crate::session::Rating { score: *score, comment: comment.clone() });
            }
        }
        Ok(())
    }

    fn live_session_mut(&mut self, id: SessionId) -> Option<&mut Session> {
        self.sessions.get_mut(&id).filter(|s| s.ended_at.is_none())
    }
}

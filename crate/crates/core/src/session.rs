//! The 1:1 help session that follows an accepted nudge.

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::CoreError;
use crate::event::{Event, EventSink};
use crate::ids::{AssignmentId, NudgeId, SessionId, StudentId, TeacherId, TicketId, Timestamp};
use crate::matchmaker::{NudgeOutcome, TicketState};
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Author {
    Teacher,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionEventKind {
    Chat,
    CodeEdit,
    CodeRun,
    Join,
    Leave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EndedBy {
    Teacher,
    Student,
    IdleTimeout,
}

impl From<Author> for EndedBy {
    fn from(a: Author) -> Self {
        match a {
            Author::Teacher => EndedBy::Teacher,
            Author::Student => EndedBy::Student,
        }
    }
}

/// The caller of a session command.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "role", content = "id", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Participant {
    Teacher(TeacherId),
    Student(StudentId),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MediaPrefs {
    pub video: bool,
    pub audio: bool,
    pub chat_only: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantPrefs {
    pub teacher: MediaPrefs,
    pub student: MediaPrefs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub ts: Timestamp,
    pub author: Author,
    pub kind: SessionEventKind,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gratitude {
    pub thanked: bool,
    pub message: Option<String>,
    /// Messages stay hidden from the teacher until a moderator releases them.
    pub released_to_teacher: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub score: u8,
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub ticket_id: TicketId,
    pub nudge_id: NudgeId,
    pub teacher_id: TeacherId,
    pub student_id: StudentId,
    pub assignment_id: Option<AssignmentId>,
    pub started_at: Timestamp,
    pub ended_at: Option<Timestamp>,
    pub ended_by: Option<EndedBy>,
    pub last_activity: Timestamp,
    pub media_prefs: ParticipantPrefs,
    pub events: Vec<SessionEvent>,
    /// Latest student edit; one author, so last writer wins.
    pub code: Option<String>,
    pub gratitude: Option<Gratitude>,
    pub rating: Option<Rating>,
}

impl Session {
    pub(crate) fn new(
        session_id: SessionId,
        ticket_id: TicketId,
        nudge_id: NudgeId,
        teacher_id: TeacherId,
        student_id: StudentId,
        assignment_id: Option<AssignmentId>,
        started_at: Timestamp,
    ) -> Self {
        Self {
            session_id,
            ticket_id,
            nudge_id,
            teacher_id,
            student_id,
            assignment_id,
            started_at,
            ended_at: None,
            ended_by: None,
            last_activity: started_at,
            media_prefs: ParticipantPrefs::default(),
            events: Vec::new(),
            code: None,
            gratitude: None,
            rating: None,
        }
    }

    pub fn is_live(&self) -> bool {
        self.ended_at.is_none()
    }

    pub fn duration_ms(&self) -> Option<i64> {
        self.ended_at.map(|end| end.since(self.started_at))
    }

    pub fn author_of(&self, who: &Participant) -> Option<Author> {
        match who {
            Participant::Teacher(t) if *t == self.teacher_id => Some(Author::Teacher),
            Participant::Student(s) if *s == self.student_id => Some(Author::Student),
            _ => None,
        }
    }

    /// Transcript as JSON lines, one session event per line.
    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            out.push_str(&serde_json::to_string(ev).expect("session events serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GratitudeSummary {
    pub thank_count: usize,
    pub released_messages: Vec<String>,
}

impl State {
    pub fn teacher_gratitude_summary(&self, teacher: &TeacherId) -> GratitudeSummary {
        let mut summary = GratitudeSummary::default();
        for g in self.sessions.values().filter(|s| s.teacher_id == *teacher).filter_map(|s| s.gratitude.as_ref()) {
            if g.thanked {
                summary.thank_count += 1;
            }
            if g.released_to_teacher {
                summary.released_messages.extend(g.message.clone());
            }
        }
        summary
    }

    fn live_session(&self, id: SessionId) -> Result<&Session, CoreError> {
        let s = self.sessions.get(&id).ok_or(CoreError::SessionNotFound(id))?;
        if !s.is_live() {
            return Err(CoreError::SessionClosed(id));
        }
        Ok(s)
    }

    fn ended_session(&self, id: SessionId) -> Result<&Session, CoreError> {
        let s = self.sessions.get(&id).ok_or(CoreError::SessionNotFound(id))?;
        if s.is_live() {
            return Err(CoreError::SessionLive(id));
        }
        Ok(s)
    }
}

impl<S: EventSink> Engine<S> {
    /// Opens the session for a matched ticket. The assignment is taken from
    /// the student's IDE context at this instant.
    pub fn create_session(
        &mut self,
        ticket_id: TicketId,
        nudge_id: NudgeId,
        now: Timestamp,
    ) -> Result<Session, CoreError> {
        self.begin(now)?;
        if self.state.session_by_ticket.contains_key(&ticket_id) {
            return Err(CoreError::DuplicateSession(ticket_id));
        }
        let ticket = self.state.tickets.get(&ticket_id).ok_or(CoreError::TicketNotFound(ticket_id))?;
        let nudge = self.state.nudges.get(&nudge_id).ok_or(CoreError::NudgeNotFound(nudge_id))?;
        let TicketState::Matched(session) = ticket.state else {
            return Err(CoreError::TicketNotFound(ticket_id));
        };
        if nudge.outcome != NudgeOutcome::Accepted || nudge.ticket_id != ticket_id {
            return Err(CoreError::NudgeNotPending(nudge_id));
        }
        let teacher = ticket.teacher_id.clone();
        let student = nudge.student_id.clone();
        let assignment = self.state.active_assignment(&student, now).cloned();
        self.emit(
            now,
            Event::SessionStarted { session, ticket: ticket_id, nudge: nudge_id, teacher, student, assignment },
        )?;
        Ok(self.state.sessions[&session].clone())
    }

    /// Returns the new event's sequence number within the session.
    pub fn append_session_event(
        &mut self,
        session: SessionId,
        who: &Participant,
        kind: SessionEventKind,
        payload: String,
        now: Timestamp,
    ) -> Result<u64, CoreError> {
        self.begin(now)?;
        let s = self.state.live_session(session)?;
        let author = s.author_of(who).ok_or(CoreError::NotParticipant(session))?;
        if kind == SessionEventKind::CodeEdit && author != Author::Student {
            return Err(CoreError::EditForbidden(session));
        }
        let seq = s.events.len() as u64 + 1;
        self.emit(now, Event::SessionEventAppended { session, seq, author, event: kind, payload })?;
        Ok(seq)
    }

    pub fn set_media_prefs(
        &mut self,
        session: SessionId,
        who: &Participant,
        prefs: MediaPrefs,
        now: Timestamp,
    ) -> Result<Session, CoreError> {
        self.begin(now)?;
        let author = self.state.live_session(session)?.author_of(who).ok_or(CoreError::NotParticipant(session))?;
        self.emit(now, Event::MediaPrefsSet { session, author, prefs })?;
        Ok(self.state.sessions[&session].clone())
    }

    /// Either participant may end the session.
    pub fn end_session(
        &mut self,
        session: SessionId,
        now: Timestamp,
        ended_by: &Participant,
    ) -> Result<Session, CoreError> {
        self.begin(now)?;
        let author = self.state.live_session(session)?.author_of(ended_by).ok_or(CoreError::NotParticipant(session))?;
        self.emit(now, Event::SessionEnded { session, ended_by: author.into() })?;
        Ok(self.state.sessions[&session].clone())
    }

    pub fn record_gratitude(
        &mut self,
        session: SessionId,
        thanked: bool,
        message: Option<String>,
        now: Timestamp,
    ) -> Result<Session, CoreError> {
        self.begin(now)?;
        if self.state.ended_session(session)?.gratitude.is_some() {
            return Err(CoreError::AlreadyRecorded(session));
        }
        self.emit(now, Event::GratitudeRecorded { session, thanked, message })?;
        Ok(self.state.sessions[&session].clone())
    }

    /// Moderator approval: the student's message becomes visible to the teacher.
    pub fn release_gratitude(&mut self, session: SessionId, now: Timestamp) -> Result<Session, CoreError> {
        self.begin(now)?;
        let s = self.state.sessions.get(&session).ok_or(CoreError::SessionNotFound(session))?;
        match &s.gratitude {
            None => return Err(CoreError::SessionNotFound(session)),
            Some(g) if g.released_to_teacher => return Err(CoreError::AlreadyRecorded(session)),
            Some(_) => {}
        }
        self.emit(now, Event::GratitudeReleased { session })?;
        Ok(self.state.sessions[&session].clone())
    }

    pub fn record_rating(
        &mut self,
        session: SessionId,
        score: u8,
        comment: Option<String>,
        now: Timestamp,
    ) -> Result<Session, CoreError> {
        self.begin(now)?;
        let s = self.state.ended_session(session)?;
        if !(1..=5).contains(&score) {
            return Err(CoreError::ScoreOutOfRange(score));
        }
        if s.rating.is_some() {
            return Err(CoreError::AlreadyRecorded(session));
        }
        self.emit(now, Event::RatingRecorded { session, score, comment })?;
        Ok(self.state.sessions[&session].clone())
    }
}

//! The ticket state machine: a teacher presses the button, students are
//! offered help one at a time until someone accepts, the pool runs dry, the
//! search deadline passes, or the teacher gives up.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eligibility::NudgableQuery;
use crate::engine::Engine;
use crate::error::CoreError;
use crate::event::{Event, EventSink};
use crate::hash::{stable_hash, stable_hash_u64};
use crate::ids::{NudgeId, SessionId, StudentId, TeacherId, TicketId, Timestamp};
use crate::state::State;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SelectionPolicy {
    #[default]
    Random,
    /// Lowest course progress first.
    MostBehind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "id", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TicketState {
    Searching,
    NudgePending(NudgeId),
    Matched(SessionId),
    Exhausted,
    Cancelled,
}

impl TicketState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TicketState::Matched(_) | TicketState::Exhausted | TicketState::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NudgeTicket {
    pub ticket_id: TicketId,
    pub teacher_id: TeacherId,
    pub created_at: Timestamp,
    pub state: TicketState,
    /// Students offered help by this ticket, in order. Never repeats.
    pub nudged: Vec<StudentId>,
    pub search_deadline: Timestamp,
    pub policy: SelectionPolicy,
    pub closed_at: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NudgeOutcome {
    Pending,
    Accepted,
    Declined,
    TimedOut,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nudge {
    pub nudge_id: NudgeId,
    pub ticket_id: TicketId,
    pub student_id: StudentId,
    pub sent_at: Timestamp,
    pub deadline: Timestamp,
    pub outcome: NudgeOutcome,
    pub resolved_at: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Response {
    Accept,
    Decline,
}

impl State {
    /// Picks the next student for a searching ticket. Uniform over the
    /// nudgable pool under `Random`; least progress under `MostBehind`, ties
    /// going to the smaller `stable_hash(student, ticket)`.
    pub fn select_candidate(&self, ticket: &NudgeTicket, now: Timestamp, rng_seed: u64) -> Option<StudentId> {
        let query =
            NudgableQuery { now, exclude: ticket.nudged.iter().cloned().collect::<BTreeSet<_>>(), ignore_group: false };
        let pool = self.nudgable_set(&query);
        if pool.is_empty() {
            return None;
        }
        match ticket.policy {
            SelectionPolicy::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                let idx = rng.random_range(0..pool.len());
                pool.into_iter().nth(idx)
            }
            SelectionPolicy::MostBehind => {
                pool.into_iter().min_by_key(|s| (self.completed_count(s), stable_hash(s.as_str(), ticket.ticket_id.0)))
            }
        }
    }

    pub(crate) fn draw_seed(&self, ticket: &NudgeTicket) -> u64 {
        let per_ticket = stable_hash_u64(ticket.ticket_id.0, self.config.selection_seed);
        stable_hash_u64(ticket.nudged.len() as u64, per_ticket)
    }
}

impl<S: EventSink> Engine<S> {
    pub fn initiate_ticket(
        &mut self,
        teacher: TeacherId,
        now: Timestamp,
        policy: SelectionPolicy,
    ) -> Result<NudgeTicket, CoreError> {
        self.begin(now)?;
        if self.state.teacher_busy(&teacher) {
            return Err(CoreError::TeacherBusy(teacher));
        }
        let ticket = self.state.next_ticket_id();
        let search_deadline = now.plus(self.state.config.search_window_ms);
        self.emit(now, Event::TicketOpened { ticket, teacher, policy, search_deadline })?;
        self.advance_search(ticket, now)
    }

    /// Nudges the next candidate, or closes the ticket when the deadline has
    /// passed or nobody is left. A ticket that is not searching is returned
    /// unchanged.
    pub fn advance_search(&mut self, id: TicketId, now: Timestamp) -> Result<NudgeTicket, CoreError> {
        let ticket = self.state.tickets.get(&id).ok_or(CoreError::TicketNotFound(id))?;
        if ticket.state != TicketState::Searching {
            return Ok(ticket.clone());
        }
        let candidate = if now >= ticket.search_deadline {
            None
        } else {
            self.state.select_candidate(ticket, now, self.state.draw_seed(ticket))
        };
        match candidate {
            Some(student) => {
                let nudge = self.state.next_nudge_id();
                let deadline = now.plus(self.state.config.response_window_ms);
                self.emit(now, Event::NudgeSent { nudge, ticket: id, student, deadline })?;
            }
            None => self.emit(now, Event::TicketExhausted { ticket: id })?,
        }
        Ok(self.state.tickets[&id].clone())
    }

    pub fn respond_nudge(&mut self, id: NudgeId, response: Response, now: Timestamp) -> Result<NudgeTicket, CoreError> {
        self.begin(now)?;
        let nudge = self.state.nudges.get(&id).ok_or(CoreError::NudgeNotFound(id))?;
        if now > nudge.deadline {
            return Err(CoreError::NudgeExpired(id));
        }
        if nudge.outcome != NudgeOutcome::Pending {
            return Err(CoreError::NudgeNotPending(id));
        }
        let ticket = nudge.ticket_id;
        match response {
            Response::Accept => {
                self.emit(now, Event::NudgeResolved { nudge: id, outcome: NudgeOutcome::Accepted })?;
                let session = self.state.next_session_id();
                self.emit(now, Event::TicketMatched { ticket, session })?;
                self.create_session(ticket, id, now)?;
                Ok(self.state.tickets[&ticket].clone())
            }
            Response::Decline => {
                self.emit(now, Event::NudgeResolved { nudge: id, outcome: NudgeOutcome::Declined })?;
                self.advance_search(ticket, now)
            }
        }
    }

    /// Times out a pending nudge. Before its deadline this is a no-op that
    /// returns the ticket unchanged.
    pub fn expire_nudge(&mut self, id: NudgeId, now: Timestamp) -> Result<NudgeTicket, CoreError> {
        self.begin(now)?;
        let nudge = self.state.nudges.get(&id).ok_or(CoreError::NudgeNotFound(id))?;
        if nudge.outcome != NudgeOutcome::Pending {
            return Err(CoreError::NudgeNotPending(id));
        }
        let ticket = nudge.ticket_id;
        if now < nudge.deadline {
            return Ok(self.state.tickets[&ticket].clone());
        }
        self.emit(now, Event::NudgeResolved { nudge: id, outcome: NudgeOutcome::TimedOut })?;
        self.advance_search(ticket, now)
    }

    pub fn cancel_ticket(&mut self, id: TicketId, now: Timestamp) -> Result<NudgeTicket, CoreError> {
        self.begin(now)?;
        let ticket = self.state.tickets.get(&id).ok_or(CoreError::TicketNotFound(id))?;
        match ticket.state {
            TicketState::Searching => {}
            TicketState::NudgePending(nudge) => {
                self.emit(now, Event::NudgeResolved { nudge, outcome: NudgeOutcome::Cancelled })?;
            }
            _ => return Err(CoreError::TicketTerminal(id)),
        }
        self.emit(now, Event::TicketCancelled { ticket: id })?;
        Ok(self.state.tickets[&id].clone())
    }
}

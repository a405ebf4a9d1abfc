//! Scripted course whose usage aggregates come out at fixed values:
//! 102 teachers, 679 tickets, 411 matched, median 4 tickets per teacher,
//! 1056 students nudged and 375 helped.
//!
//! Each ticket gets its own ten-minute slot. Only the students scripted for
//! that slot are online, so every draw is forced: decliners come online
//! before the ticket opens, and the acceptor only after the last decliner's
//! nudge has gone out.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::CourseConfig;
use crate::engine::Engine;
use crate::error::CoreError;
use crate::event::{EventRecord, MemoryLog};
use crate::ids::{StudentId, TeacherId, Timestamp, MINUTE_MS, SECOND_MS};
use crate::matchmaker::{Response, SelectionPolicy, TicketState};
use crate::presence::ActivityContext;
use crate::session::Participant;

/// (teachers, tickets each)
pub const TEACHER_LOAD: [(usize, usize); 4] = [(40, 2), (30, 4), (31, 15), (1, 14)];
pub const MATCHED: usize = 411;
pub const UNIQUE_HELPED: usize = 375;
/// Matched tickets that needed two declines instead of one.
pub const DOUBLE_DECLINES: usize = 2;
const SLOT_MS: i64 = 10 * MINUTE_MS;
const ASSIGNMENTS: usize = 10;

pub fn table1_log() -> Result<Vec<EventRecord>, CoreError> {
    let config = CourseConfig { experiment_fraction: 1.0, ..CourseConfig::with_numbered_assignments(ASSIGNMENTS) };
    let mut engine = Engine::new(config, MemoryLog::default(), Timestamp::ZERO)?;

    let mut slot_teachers: Vec<TeacherId> = TEACHER_LOAD
        .iter()
        .scan(0, |next, &(n, each)| {
            let ids: Vec<_> = (*next..*next + n).collect();
            *next += n;
            Some(ids.into_iter().flat_map(move |t| std::iter::repeat_n(t, each)))
        })
        .flatten()
        .map(|t| TeacherId(format!("t{t:03}")))
        .collect();
    slot_teachers.shuffle(&mut ChaCha8Rng::seed_from_u64(1));

    let mut next_student = 0usize;
    let mut fresh = || {
        next_student += 1;
        StudentId(format!("s{:04}", next_student - 1))
    };
    let mut acceptors = Vec::new();

    for (slot, teacher) in slot_teachers.into_iter().enumerate() {
        let mut t = Timestamp((slot as i64 + 1) * SLOT_MS);
        let matched = slot < MATCHED;
        let decliners: Vec<_> = (0..if slot < DOUBLE_DECLINES { 2 } else { 1 }).map(|_| fresh()).collect();
        let context = ActivityContext::ide(format!("a{}", slot % ASSIGNMENTS));

        engine.record_teacher_heartbeat(teacher.clone(), t, ActivityContext::forum())?;
        for d in &decliners {
            engine.record_heartbeat(d.clone(), t, context.clone())?;
        }
        let ticket = engine.initiate_ticket(teacher.clone(), t, SelectionPolicy::Random)?.ticket_id;
        for k in 0..decliners.len() {
            if matched && k + 1 == decliners.len() {
                let acceptor = if slot < UNIQUE_HELPED {
                    let s = fresh();
                    acceptors.push(s.clone());
                    s
                } else {
                    acceptors[slot - UNIQUE_HELPED].clone()
                };
                t = t.plus(SECOND_MS);
                engine.record_heartbeat(acceptor, t, context.clone())?;
            }
            t = t.plus(SECOND_MS);
            let TicketState::NudgePending(nudge) = engine.state().ticket(ticket).expect("open").state else {
                unreachable!("a scripted decliner is always pending");
            };
            engine.respond_nudge(nudge, Response::Decline, t)?;
        }
        let state = engine.state().ticket(ticket).expect("open").state;
        if let TicketState::NudgePending(nudge) = state {
            t = t.plus(SECOND_MS);
            let ticket = engine.respond_nudge(nudge, Response::Accept, t)?;
            let TicketState::Matched(session) = ticket.state else { unreachable!("accepted") };
            t = t.plus(MINUTE_MS);
            engine.end_session(session, t, &Participant::Teacher(teacher))?;
        }
    }
    Ok(engine.into_parts().1.records)
}

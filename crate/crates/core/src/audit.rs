//! Protocol invariant checker that works on raw records only. It shares no
//! code with [`crate::state`], so it can catch mistakes there.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::event::{Event, EventRecord};
use crate::ids::{NudgeId, SessionId, StudentId, TicketId, Timestamp};
use crate::matchmaker::NudgeOutcome;
use crate::session::{Author, SessionEventKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub seq: u64,
    pub rule: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AuditReport {
    pub records: usize,
    pub tickets: usize,
    pub nudges: usize,
    pub sessions: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Searching,
    Pending,
    Matched,
    Exhausted,
    Cancelled,
}

#[derive(Default)]
struct TicketFacts {
    phase: Option<Phase>,
    nudged: BTreeSet<StudentId>,
    accepted: usize,
    sessions: usize,
}

struct NudgeFacts {
    ticket: TicketId,
    student: StudentId,
    deadline: Timestamp,
    outcome: NudgeOutcome,
}

struct SessionFacts {
    ticket: TicketId,
    nudge: NudgeId,
    student: StudentId,
    events: u64,
    ended: bool,
}

pub fn audit(records: &[EventRecord]) -> AuditReport {
    let mut report = AuditReport { records: records.len(), ..AuditReport::default() };
    let mut flag = |seq: u64, rule: &'static str, detail: String| {
        report.violations.push(Violation { seq, rule, detail });
    };

    let mut cooldown_ms = i64::MAX;
    let mut tickets: BTreeMap<TicketId, TicketFacts> = BTreeMap::new();
    let mut nudges: BTreeMap<NudgeId, NudgeFacts> = BTreeMap::new();
    let mut sessions: BTreeMap<SessionId, SessionFacts> = BTreeMap::new();
    let mut pending_per_ticket: BTreeMap<TicketId, usize> = BTreeMap::new();
    let mut pending_per_student: BTreeMap<StudentId, usize> = BTreeMap::new();
    let mut last_sent: BTreeMap<StudentId, Timestamp> = BTreeMap::new();
    let mut live_student_sessions: BTreeMap<StudentId, usize> = BTreeMap::new();
    let mut prev: Option<(u64, Timestamp)> = None;

    for rec in records {
        let seq = rec.seq;
        match prev {
            None if seq != 1 => flag(seq, "framing", format!("log starts at seq {seq}")),
            Some((p, _)) if seq != p + 1 => flag(seq, "framing", format!("seq gap after {p}")),
            Some((_, ts)) if rec.ts < ts => flag(seq, "framing", "timestamp decreased".into()),
            _ => {}
        }
        prev = Some((seq, rec.ts));

        let mut transition =
            |id: TicketId, from: &[Phase], to: Phase, flag: &mut dyn FnMut(u64, &'static str, String)| {
                let t = tickets.entry(id).or_default();
                match t.phase {
                    Some(p) if from.contains(&p) => t.phase = Some(to),
                    other => flag(seq, "ticket-transition", format!("ticket {id}: {other:?} -> {to:?}")),
                }
            };

        match &rec.event {
            Event::CourseConfigured { config } => cooldown_ms = config.cooldown_ms,
            Event::TicketOpened { ticket, .. } => {
                let t = tickets.entry(*ticket).or_default();
                if t.phase.is_some() {
                    flag(seq, "ticket-transition", format!("ticket {ticket} opened twice"));
                }
                t.phase = Some(Phase::Searching);
            }
            Event::NudgeSent { nudge, ticket, student, deadline } => {
                transition(*ticket, &[Phase::Searching], Phase::Pending, &mut flag);
                let t = tickets.entry(*ticket).or_default();
                if !t.nudged.insert(student.clone()) {
                    flag(seq, "no-repeat-in-ticket", format!("{student} nudged twice by ticket {ticket}"));
                }
                if let Some(last) = last_sent.get(student) {
                    if rec.ts.since(*last) < cooldown_ms {
                        flag(seq, "cooldown", format!("{student} re-nudged {} ms after previous", rec.ts.since(*last)));
                    }
                }
                last_sent.insert(student.clone(), rec.ts);
                let per_ticket = pending_per_ticket.entry(*ticket).or_default();
                *per_ticket += 1;
                if *per_ticket > 1 {
                    flag(seq, "one-pending-per-ticket", format!("ticket {ticket} has {per_ticket} pending"));
                }
                let per_student = pending_per_student.entry(student.clone()).or_default();
                *per_student += 1;
                if *per_student > 1 {
                    flag(seq, "one-pending-per-student", format!("{student} has {per_student} pending"));
                }
                if live_student_sessions.get(student).copied().unwrap_or(0) > 0 {
                    flag(seq, "nudge-while-in-session", format!("{student} nudged during a live session"));
                }
                if nudges
                    .insert(
                        *nudge,
                        NudgeFacts {
                            ticket: *ticket,
                            student: student.clone(),
                            deadline: *deadline,
                            outcome: NudgeOutcome::Pending,
                        },
                    )
                    .is_some()
                {
                    flag(seq, "nudge-identity", format!("nudge {nudge} sent twice"));
                }
            }
            Event::NudgeResolved { nudge, outcome } => {
                let Some(n) = nudges.get_mut(nudge) else {
                    flag(seq, "nudge-identity", format!("unknown nudge {nudge}"));
                    continue;
                };
                if n.outcome != NudgeOutcome::Pending {
                    flag(seq, "nudge-terminal", format!("nudge {nudge} resolved twice"));
                    continue;
                }
                n.outcome = *outcome;
                *pending_per_ticket.entry(n.ticket).or_default() -= 1;
                *pending_per_student.entry(n.student.clone()).or_default() -= 1;
                match outcome {
                    NudgeOutcome::Accepted | NudgeOutcome::Declined if rec.ts > n.deadline => {
                        flag(seq, "response-deadline", format!("nudge {nudge} answered after deadline"));
                    }
                    NudgeOutcome::TimedOut if rec.ts < n.deadline => {
                        flag(seq, "response-deadline", format!("nudge {nudge} timed out early"));
                    }
                    _ => {}
                }
                let ticket = n.ticket;
                match outcome {
                    NudgeOutcome::Accepted => tickets.entry(ticket).or_default().accepted += 1,
                    NudgeOutcome::Declined | NudgeOutcome::TimedOut => {
                        transition(ticket, &[Phase::Pending], Phase::Searching, &mut flag)
                    }
                    _ => {}
                }
            }
            Event::TicketMatched { ticket, .. } => transition(*ticket, &[Phase::Pending], Phase::Matched, &mut flag),
            Event::TicketExhausted { ticket } => transition(*ticket, &[Phase::Searching], Phase::Exhausted, &mut flag),
            Event::TicketCancelled { ticket } => {
                transition(*ticket, &[Phase::Searching, Phase::Pending], Phase::Cancelled, &mut flag)
            }
            Event::SessionStarted { session, ticket, nudge, student, .. } => {
                tickets.entry(*ticket).or_default().sessions += 1;
                match nudges.get(nudge) {
                    Some(n) if n.outcome == NudgeOutcome::Accepted && n.ticket == *ticket && n.student == *student => {}
                    _ => flag(seq, "session-integrity", format!("session {session} lacks a matching accepted nudge")),
                }
                let live = live_student_sessions.entry(student.clone()).or_default();
                *live += 1;
                if *live > 1 {
                    flag(seq, "one-live-session", format!("{student} in two live sessions"));
                }
                sessions.insert(
                    *session,
                    SessionFacts { ticket: *ticket, nudge: *nudge, student: student.clone(), events: 0, ended: false },
                );
            }
            Event::SessionEventAppended { session, seq: ev_seq, author, event, .. } => {
                let Some(s) = sessions.get_mut(session) else {
                    flag(seq, "session-integrity", format!("event for unknown session {session}"));
                    continue;
                };
                if s.ended || *ev_seq != s.events + 1 {
                    flag(seq, "session-events", format!("session {session} event {ev_seq} out of order"));
                }
                if *event == SessionEventKind::CodeEdit && *author != Author::Student {
                    flag(seq, "edit-permission", format!("teacher edit in session {session}"));
                }
                s.events = *ev_seq;
            }
            Event::SessionEnded { session, .. } => {
                if let Some(s) = sessions.get_mut(session) {
                    if s.ended {
                        flag(seq, "session-events", format!("session {session} ended twice"));
                    } else {
                        s.ended = true;
                        *live_student_sessions.entry(s.student.clone()).or_default() -= 1;
                    }
                }
            }
            _ => {}
        }
    }

    let end = prev.map_or(0, |(s, _)| s);
    for (id, t) in &tickets {
        let matched = t.phase == Some(Phase::Matched);
        if matched && (t.accepted != 1 || t.sessions != 1) {
            flag(
                end,
                "matched-iff-accepted-iff-session",
                format!("matched ticket {id}: {} accepted, {} sessions", t.accepted, t.sessions),
            );
        }
        if !matched && (t.accepted > 0 || t.sessions > 0) {
            flag(
                end,
                "matched-iff-accepted-iff-session",
                format!("ticket {id} in {:?} with {} accepted, {} sessions", t.phase, t.accepted, t.sessions),
            );
        }
    }
    for (id, s) in &sessions {
        if nudges.get(&s.nudge).map(|n| n.ticket) != Some(s.ticket) {
            flag(end, "session-integrity", format!("session {id} nudge/ticket mismatch"));
        }
    }
    report.tickets = tickets.len();
    report.nudges = nudges.len();
    report.sessions = sessions.len();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CourseConfig;
    use crate::matchmaker::SelectionPolicy;

    fn rec(seq: u64, ts: i64, event: Event) -> EventRecord {
        EventRecord { seq, ts: Timestamp(ts), event }
    }

    fn opened(ticket: u64, teacher: &str) -> Event {
        Event::TicketOpened {
            ticket: TicketId(ticket),
            teacher: teacher.into(),
            policy: SelectionPolicy::Random,
            search_deadline: Timestamp(1_000_000),
        }
    }

    fn sent(nudge: u64, ticket: u64, student: &str, deadline: i64) -> Event {
        Event::NudgeSent {
            nudge: NudgeId(nudge),
            ticket: TicketId(ticket),
            student: student.into(),
            deadline: Timestamp(deadline),
        }
    }

    fn rules(records: &[EventRecord]) -> Vec<&'static str> {
        audit(records).violations.iter().map(|v| v.rule).collect()
    }

    fn config() -> EventRecord {
        rec(1, 0, Event::CourseConfigured { config: CourseConfig::with_numbered_assignments(1) })
    }

    #[test]
    fn flags_second_pending_nudge_for_student() {
        let log = vec![
            config(),
            rec(2, 0, opened(1, "t1")),
            rec(3, 0, opened(2, "t2")),
            rec(4, 0, sent(1, 1, "s1", 30_000)),
            rec(5, 0, sent(2, 2, "s1", 30_000)),
        ];
        let r = rules(&log);
        assert!(r.contains(&"one-pending-per-student"));
        assert!(r.contains(&"cooldown"));
    }

    #[test]
    fn flags_late_response_and_cooldown_breach() {
        let log = vec![
            config(),
            rec(2, 0, opened(1, "t1")),
            rec(3, 0, sent(1, 1, "s1", 30_000)),
            rec(4, 30_001, Event::NudgeResolved { nudge: NudgeId(1), outcome: NudgeOutcome::Declined }),
            rec(5, 30_001, sent(2, 1, "s2", 60_001)),
            rec(6, 40_000, Event::NudgeResolved { nudge: NudgeId(2), outcome: NudgeOutcome::TimedOut }),
        ];
        let r = rules(&log);
        assert!(r.contains(&"response-deadline"));
        assert_eq!(r.iter().filter(|x| **x == "response-deadline").count(), 2);
        assert!(!r.contains(&"cooldown"));
    }

    #[test]
    fn flags_match_without_session() {
        let log = vec![
            config(),
            rec(2, 0, opened(1, "t1")),
            rec(3, 0, sent(1, 1, "s1", 30_000)),
            rec(4, 5, Event::NudgeResolved { nudge: NudgeId(1), outcome: NudgeOutcome::Accepted }),
            rec(5, 5, Event::TicketMatched { ticket: TicketId(1), session: SessionId(1) }),
        ];
        assert_eq!(rules(&log), vec!["matched-iff-accepted-iff-session"]);
    }

    #[test]
    fn flags_framing_and_illegal_transition() {
        let log = vec![config(), rec(3, 0, opened(1, "t1")), rec(4, 0, Event::TicketExhausted { ticket: TicketId(1) })];
        assert_eq!(rules(&log), vec!["framing"]);
        let log = vec![config(), rec(2, 0, Event::TicketExhausted { ticket: TicketId(9) })];
        assert_eq!(rules(&log), vec!["ticket-transition"]);
    }

    #[test]
    fn clean_engine_log() {
        let records = crate::sim::table1::table1_log().unwrap();
        let r = audit(&records);
        assert!(r.is_clean());
        assert_eq!((r.tickets, r.sessions), (679, 411));
    }
}

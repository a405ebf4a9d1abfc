use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use teachnow_core::{Event, EventRecord, NudgeOutcome, Timestamp};
use tokio::sync::broadcast::error::RecvError;

use crate::app::App;
use crate::auth::{Auth, Principal};

/// One log record as the stream sees it: who is told, and what.
#[derive(Debug, Clone)]
pub struct Notice {
    pub seq: u64,
    pub ts: Timestamp,
    pub audience: Vec<Principal>,
    /// Stream event name for participants; empty when nobody but admins sees it.
    pub kind: &'static str,
    pub data: Value,
    pub record: EventRecord,
}

impl Notice {
    /// Decides the audience of a record. Ticket and nudge ownership never
    /// changes, so any state at or after the record answers the lookups.
    pub(crate) fn route(record: &EventRecord, state: &teachnow_core::State) -> Self {
        let student = |id| Principal::Student { id };
        let teacher = |id| Principal::Teacher { id };
        let ticket_owner = |t| state.ticket(t).map(|t| teacher(t.teacher_id.clone()));
        let pair = |session| {
            state
                .session(session)
                .map(|s| vec![teacher(s.teacher_id.clone()), student(s.student_id.clone())])
                .unwrap_or_default()
        };
        let (kind, audience, data) = match &record.event {
            Event::NudgeSent { nudge, ticket, student: s, deadline } => {
                let by = state.ticket(*ticket).map(|t| t.teacher_id.to_string());
                (
                    "offer",
                    vec![student(s.clone())],
                    json!({ "nudge_id": nudge, "ticket_id": ticket, "teacher_id": by, "deadline_ts": deadline }),
                )
            }
            Event::NudgeResolved { nudge, outcome: outcome @ (NudgeOutcome::Cancelled | NudgeOutcome::TimedOut) } => (
                "retract",
                state.nudge(*nudge).map(|n| student(n.student_id.clone())).into_iter().collect(),
                json!({ "nudge_id": nudge, "reason": outcome }),
            ),
            Event::TicketOpened { ticket, teacher: t, search_deadline, .. } => (
                "ticket",
                vec![teacher(t.clone())],
                json!({ "ticket_id": ticket, "state": "SEARCHING", "search_deadline": search_deadline }),
            ),
            Event::TicketExhausted { ticket } => (
                "ticket",
                ticket_owner(*ticket).into_iter().collect(),
                json!({ "ticket_id": ticket, "state": "EXHAUSTED" }),
            ),
            Event::TicketCancelled { ticket } => (
                "ticket",
                ticket_owner(*ticket).into_iter().collect(),
                json!({ "ticket_id": ticket, "state": "CANCELLED" }),
            ),
            Event::SessionStarted { session, ticket, teacher: t, student: s, assignment, .. } => (
                "match",
                vec![teacher(t.clone()), student(s.clone())],
                json!({
                    "session_id": session, "ticket_id": ticket, "teacher_id": t,
                    "student_id": s, "assignment_id": assignment,
                }),
            ),
            Event::MediaPrefsSet { session, author, prefs } => {
                ("media", pair(*session), json!({ "session_id": session, "author": author, "prefs": prefs }))
            }
            Event::SessionEventAppended { session, seq, author, event, payload } => (
                "session_event",
                pair(*session),
                json!({
                    "session_id": session, "session_seq": seq, "author": author,
                    "event": event, "payload": payload,
                }),
            ),
            Event::SessionEnded { session, ended_by } => {
                ("session_ended", pair(*session), json!({ "session_id": session, "ended_by": ended_by }))
            }
            Event::GratitudeRecorded { session, thanked, .. } => (
                "gratitude",
                pair(*session).into_iter().take(1).collect(),
                json!({ "session_id": session, "thanked": thanked }),
            ),
            Event::GratitudeReleased { session } => {
                let message = state.session(*session).and_then(|s| s.gratitude.as_ref()?.message.clone());
                (
                    "gratitude_released",
                    pair(*session).into_iter().take(1).collect(),
                    json!({ "session_id": session, "message": message }),
                )
            }
            _ => ("", Vec::new(), Value::Null),
        };
        Self { seq: record.seq, ts: record.ts, audience, kind, data, record: record.clone() }
    }

    /// Stream event name and JSON body for `who`, if they may see it.
    /// Admins see every raw record.
    pub fn view(&self, who: &Principal) -> Option<(&'static str, Value)> {
        if *who == Principal::Admin {
            return Some(("record", serde_json::to_value(&self.record).ok()?));
        }
        if !self.audience.contains(who) {
            return None;
        }
        let mut body = json!({ "seq": self.seq, "ts": self.ts, "type": self.kind });
        if let (Value::Object(out), Value::Object(data)) = (&mut body, &self.data) {
            out.extend(data.clone());
        }
        Some((self.kind, body))
    }
}

#[derive(Deserialize)]
pub(crate) struct StreamQuery {
    last_seq: Option<u64>,
}

/// `GET /stream`: the caller's notices after `last_seq` (or the
/// `Last-Event-ID` header), then live ones. Each SSE id is the log seq, so a
/// client that reconnects with its last id misses nothing and can drop
/// repeats by seq. A subscriber that falls too far behind is disconnected
/// and resumes the same way.
pub(crate) async fn stream(
    State(app): State<App>,
    Auth(who): Auth,
    Query(q): Query<StreamQuery>,
    headers: HeaderMap,
) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let header_seq = headers.get("last-event-id").and_then(|v| v.to_str().ok()?.parse().ok());
    let last = q.last_seq.or(header_seq).unwrap_or(0);
    let (backlog, rx) = app.subscribe(last);
    let init = (VecDeque::from(backlog), rx, last, who);
    let events = futures::stream::unfold(init, |(mut backlog, mut rx, mut last, who)| async move {
        loop {
            let notice: Arc<Notice> = match backlog.pop_front() {
                Some(n) => n,
                None => match rx.recv().await {
                    Ok(n) => n,
                    Err(RecvError::Lagged(_) | RecvError::Closed) => return None,
                },
            };
            if notice.seq <= last {
                continue;
            }
            last = notice.seq;
            if let Some((name, body)) = notice.view(&who) {
                let ev = SseEvent::default().id(notice.seq.to_string()).event(name).data(body.to_string());
                return Some((Ok(ev), (backlog, rx, last, who)));
            }
        }
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

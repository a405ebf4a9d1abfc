//! The append-only event log: record format, sinks, reading and validation.
//!
//! One JSON object per line with exactly the fields `seq`, `ts`, `kind` and
//! `payload`. Sequence numbers start at 1 and have no gaps; timestamps never
//! decrease.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::CourseConfig;
use crate::error::LogError;
use crate::ids::{AssignmentId, NudgeId, SessionId, StudentId, TeacherId, TicketId, Timestamp};
use crate::matchmaker::{NudgeOutcome, SelectionPolicy};
use crate::presence::ActivityContext;
use crate::session::{Author, EndedBy, MediaPrefs, SessionEventKind};
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    CourseConfigured {
        config: CourseConfig,
    },
    StudentHeartbeat {
        student: StudentId,
        context: ActivityContext,
    },
    TeacherHeartbeat {
        teacher: TeacherId,
        context: ActivityContext,
    },
    AssignmentCompleted {
        student: StudentId,
        assignment: AssignmentId,
    },
    TicketOpened {
        ticket: TicketId,
        teacher: TeacherId,
        policy: SelectionPolicy,
        search_deadline: Timestamp,
    },
    NudgeSent {
        nudge: NudgeId,
        ticket: TicketId,
        student: StudentId,
        deadline: Timestamp,
    },
    NudgeResolved {
        nudge: NudgeId,
        outcome: NudgeOutcome,
    },
    TicketMatched {
        ticket: TicketId,
        session: SessionId,
    },
    TicketExhausted {
        ticket: TicketId,
    },
    TicketCancelled {
        ticket: TicketId,
    },
    SessionStarted {
        session: SessionId,
        ticket: TicketId,
        nudge: NudgeId,
        teacher: TeacherId,
        student: StudentId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        assignment: Option<AssignmentId>,
    },
    MediaPrefsSet {
        session: SessionId,
        author: Author,
        prefs: MediaPrefs,
    },
    SessionEventAppended {
        session: SessionId,
        seq: u64,
        author: Author,
        event: SessionEventKind,
        payload: String,
    },
    SessionEnded {
        session: SessionId,
        ended_by: EndedBy,
    },
    GratitudeRecorded {
        session: SessionId,
        thanked: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        message: Option<String>,
    },
    GratitudeReleased {
        session: SessionId,
    },
    RatingRecorded {
        session: SessionId,
        score: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comment: Option<String>,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::CourseConfigured { .. } => "course_configured",
            Event::StudentHeartbeat { .. } => "student_heartbeat",
            Event::TeacherHeartbeat { .. } => "teacher_heartbeat",
            Event::AssignmentCompleted { .. } => "assignment_completed",
            Event::TicketOpened { .. } => "ticket_opened",
            Event::NudgeSent { .. } => "nudge_sent",
            Event::NudgeResolved { .. } => "nudge_resolved",
            Event::TicketMatched { .. } => "ticket_matched",
            Event::TicketExhausted { .. } => "ticket_exhausted",
            Event::TicketCancelled { .. } => "ticket_cancelled",
            Event::SessionStarted { .. } => "session_started",
            Event::MediaPrefsSet { .. } => "media_prefs_set",
            Event::SessionEventAppended { .. } => "session_event_appended",
            Event::SessionEnded { .. } => "session_ended",
            Event::GratitudeRecorded { .. } => "gratitude_recorded",
            Event::GratitudeReleased { .. } => "gratitude_released",
            Event::RatingRecorded { .. } => "rating_recorded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts: Timestamp,
    #[serde(flatten)]
    pub event: Event,
}

impl EventRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event records always serialize")
    }
}

/// Where the engine persists records. `append` runs before the record is
/// applied to state; `applied` runs after.
pub trait EventSink {
    fn append(&mut self, record: &EventRecord) -> io::Result<()>;

    fn applied(&mut self, _record: &EventRecord, _state: &State) {}
}

impl<S: EventSink + ?Sized> EventSink for Box<S> {
    fn append(&mut self, record: &EventRecord) -> io::Result<()> {
        (**self).append(record)
    }

    fn applied(&mut self, record: &EventRecord, state: &State) {
        (**self).applied(record, state)
    }
}

/// Keeps every record in memory.
#[derive(Debug, Default, Clone)]
pub struct MemoryLog {
    pub records: Vec<EventRecord>,
}

impl EventSink for MemoryLog {
    fn append(&mut self, record: &EventRecord) -> io::Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl EventSink for NullSink {
    fn append(&mut self, _record: &EventRecord) -> io::Result<()> {
        Ok(())
    }
}

/// Appends JSON lines to a writer, flushing after every record.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl JsonlSink<BufWriter<File>> {
    pub fn append_to(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = File::options().create(true).append(true).open(path)?;
        Ok(Self::new(BufWriter::new(file)))
    }
}

impl<W: Write> EventSink for JsonlSink<W> {
    fn append(&mut self, record: &EventRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

/// Checks the seq/ts framing of a record sequence.
#[derive(Debug, Default, Clone)]
pub struct FrameCheck {
    last_seq: u64,
    last_ts: Option<Timestamp>,
}

impl FrameCheck {
    pub fn check(&mut self, record: &EventRecord) -> Result<(), LogError> {
        let expected = self.last_seq + 1;
        if record.seq != expected {
            return Err(LogError::SeqGap { expected, found: record.seq });
        }
        if let Some(prev) = self.last_ts {
            if record.ts < prev {
                return Err(LogError::TsRegression { seq: record.seq, ts: record.ts, previous: prev });
            }
        }
        self.last_seq = record.seq;
        self.last_ts = Some(record.ts);
        Ok(())
    }
}

pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<EventRecord>, LogError> {
    let mut frame = FrameCheck::default();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord =
            serde_json::from_str(&line).map_err(|source| LogError::Parse { line: idx + 1, source })?;
        frame.check(&record)?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_log_file(path: impl AsRef<Path>) -> Result<Vec<EventRecord>, LogError> {
    read_log(BufReader::new(File::open(path)?))
}

pub fn write_log<W: Write>(mut out: W, records: &[EventRecord]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_log_file(path: impl AsRef<Path>, records: &[EventRecord]) -> io::Result<()> {
    write_log(BufWriter::new(File::create(path)?), records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hb(seq: u64, ts: i64) -> EventRecord {
        EventRecord {
            seq,
            ts: Timestamp(ts),
            event: Event::StudentHeartbeat { student: StudentId::new("s1"), context: ActivityContext::ide("a1") },
        }
    }

    #[test]
    fn line_format_has_exactly_four_fields() {
        let line = hb(1, 5).to_json_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 4);
        for k in ["seq", "ts", "kind", "payload"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
        assert_eq!(v["kind"], "student_heartbeat");
        assert_eq!(v["payload"]["context"]["kind"], "IDE_ASSIGNMENT");
        assert_eq!(
            line,
            r#"{"seq":1,"ts":5,"kind":"student_heartbeat","payload":{"student":"s1","context":{"kind":"IDE_ASSIGNMENT","assignment_id":"a1"}}}"#
        );
    }

    #[test]
    fn kind_matches_serialized_tag() {
        let rec = hb(1, 0);
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        assert_eq!(v["kind"], rec.event.kind());
    }

    #[test]
    fn read_rejects_gap_and_ts_regression() {
        let text = format!("{}\n{}\n", hb(1, 0).to_json_line(), hb(3, 1).to_json_line());
        let err = read_log(text.as_bytes()).unwrap_err();
        assert!(matches!(err, LogError::SeqGap { expected: 2, found: 3 }));

        let text = format!("{}\n{}\n", hb(1, 10).to_json_line(), hb(2, 9).to_json_line());
        assert!(matches!(read_log(text.as_bytes()), Err(LogError::TsRegression { .. })));

        let text = format!("{}\n", hb(2, 0).to_json_line());
        assert!(read_log(text.as_bytes()).unwrap_err().is_corrupt());
    }

    #[test]
    fn empty_log_reads_empty() {
        assert!(read_log(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn round_trip_through_writer() {
        let recs = vec![hb(1, 0), hb(2, 0), hb(3, 7)];
        let mut buf = Vec::new();
        write_log(&mut buf, &recs).unwrap();
        assert_eq!(read_log(&buf[..]).unwrap(), recs);
    }
}

use serde::Serialize;

use super::CourseLog;
use crate::ids::{TeacherId, Timestamp, MINUTE_MS};
use crate::matchmaker::TicketState;
use crate::num::Real;
use crate::presence::ContextKind;

/// Minute buckets relative to the ticket's creation: `[-30, 60)`.
pub const TIMELINE_MINUTES: std::ops::Range<i32> = -30..60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivityLabel {
    Offline,
    Forum,
    Ide,
    Section,
    Helping1To1,
    Other,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 6] = [
        ActivityLabel::Offline,
        ActivityLabel::Forum,
        ActivityLabel::Ide,
        ActivityLabel::Section,
        ActivityLabel::Helping1To1,
        ActivityLabel::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityLabel::Offline => "OFFLINE",
            ActivityLabel::Forum => "FORUM",
            ActivityLabel::Ide => "IDE",
            ActivityLabel::Section => "SECTION",
            ActivityLabel::Helping1To1 => "HELPING_1_1",
            ActivityLabel::Other => "OTHER",
        }
    }

    fn from_context(kind: ContextKind) -> Self {
        match kind {
            ContextKind::IdeAssignment => ActivityLabel::Ide,
            ContextKind::Forum => ActivityLabel::Forum,
            ContextKind::SectionPage => ActivityLabel::Section,
            ContextKind::OtherPage => ActivityLabel::Other,
        }
    }
}

/// One label per minute. Bucket `m` is labelled by the teacher's state at
/// `anchor + m minutes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActivityTimeline {
    pub teacher_id: TeacherId,
    pub anchor_ts: Timestamp,
    pub first_minute: i32,
    pub labels: Vec<ActivityLabel>,
}

/// Per-minute label proportions over a set of tickets. `proportions` is
/// empty when there are no tickets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineMatrix<T> {
    pub tickets: usize,
    pub minutes: Vec<i32>,
    /// Indexed by minute, then by [`ActivityLabel::index`].
    pub proportions: Vec<[T; 6]>,
}

impl<T: Real> TimelineMatrix<T> {
    fn from_timelines(timelines: &[ActivityTimeline]) -> Self {
        let minutes: Vec<i32> = TIMELINE_MINUTES.collect();
        if timelines.is_empty() {
            return Self { tickets: 0, minutes, proportions: Vec::new() };
        }
        let n = T::of_count(timelines.len());
        let proportions = (0..minutes.len())
            .map(|i| {
                let mut counts = [0usize; 6];
                for tl in timelines {
                    counts[tl.labels[i].index()] += 1;
                }
                counts.map(|c| T::of_count(c) / n)
            })
            .collect();
        Self { tickets: timelines.len(), minutes, proportions }
    }

    pub fn proportion(&self, minute: i32, label: ActivityLabel) -> Option<T> {
        let i = self.minutes.iter().position(|m| *m == minute)?;
        self.proportions.get(i).map(|row| row[label.index()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptureComparison<T> {
    pub matched: TimelineMatrix<T>,
    pub unmatched: TimelineMatrix<T>,
}

impl CourseLog {
    pub fn activity_timeline(&self, teacher: &TeacherId, anchor: Timestamp) -> ActivityTimeline {
        let window = self.state.config().online_window_ms;
        let beats = self.teacher_beats.get(teacher).map(Vec::as_slice).unwrap_or(&[]);
        let sessions: Vec<_> =
            self.state.sessions().filter(|s| s.teacher_id == *teacher).map(|s| (s.started_at, s.ended_at)).collect();
        let labels = TIMELINE_MINUTES
            .map(|m| {
                let t = anchor.plus(i64::from(m) * MINUTE_MS);
                let helping = sessions.iter().any(|(start, end)| *start <= t && end.is_none_or(|e| t < e));
                if helping {
                    return ActivityLabel::Helping1To1;
                }
                let idx = beats.partition_point(|(ts, _)| *ts <= t);
                match idx.checked_sub(1).map(|i| &beats[i]) {
                    Some((ts, ctx)) if t.since(*ts) <= window => ActivityLabel::from_context(ctx.kind),
                    _ => ActivityLabel::Offline,
                }
            })
            .collect();
        ActivityTimeline {
            teacher_id: teacher.clone(),
            anchor_ts: anchor,
            first_minute: TIMELINE_MINUTES.start,
            labels,
        }
    }

    /// Timelines around every matched ticket versus every exhausted one.
    pub fn matched_vs_unmatched<T: Real>(&self) -> CaptureComparison<T> {
        let mut matched = Vec::new();
        let mut unmatched = Vec::new();
        for t in self.state.tickets() {
            let bucket = match t.state {
                TicketState::Matched(_) => &mut matched,
                TicketState::Exhausted => &mut unmatched,
                _ => continue,
            };
            bucket.push(self.activity_timeline(&t.teacher_id, t.created_at));
        }
        CaptureComparison {
            matched: TimelineMatrix::from_timelines(&matched),
            unmatched: TimelineMatrix::from_timelines(&unmatched),
        }
    }
}

//! Heartbeat ingestion and "who is online, working on what" queries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::ids::{AssignmentId, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContextKind {
    IdeAssignment,
    Forum,
    SectionPage,
    OtherPage,
}

/// Where a user currently is. `assignment_id` is present exactly when the
/// user is in the IDE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityContext {
    pub kind: ContextKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment_id: Option<AssignmentId>,
}

impl ActivityContext {
    pub fn ide(assignment: impl Into<String>) -> Self {
        Self { kind: ContextKind::IdeAssignment, assignment_id: Some(AssignmentId::new(assignment)) }
    }

    pub fn forum() -> Self {
        Self::page(ContextKind::Forum)
    }

    pub fn section() -> Self {
        Self::page(ContextKind::SectionPage)
    }

    pub fn other() -> Self {
        Self::page(ContextKind::OtherPage)
    }

    fn page(kind: ContextKind) -> Self {
        Self { kind, assignment_id: None }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let is_ide = self.kind == ContextKind::IdeAssignment;
        if is_ide != self.assignment_id.is_some() {
            return Err(CoreError::MalformedContext);
        }
        Ok(())
    }

    pub fn assignment(&self) -> Option<&AssignmentId> {
        match self.kind {
            ContextKind::IdeAssignment => self.assignment_id.as_ref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceRecord<K> {
    pub user: K,
    pub last_heartbeat: Timestamp,
    pub context: ActivityContext,
}

/// Latest heartbeat per user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound(serialize = "K: Ord + Serialize", deserialize = "K: Ord + Deserialize<'de>"))]
pub struct PresenceTable<K> {
    latest: BTreeMap<K, (Timestamp, ActivityContext)>,
}

impl<K> Default for PresenceTable<K> {
    fn default() -> Self {
        Self { latest: BTreeMap::new() }
    }
}

impl<K: Ord + Clone> PresenceTable<K> {
    /// Equal timestamps are accepted so redelivered beats are harmless.
    pub fn check_heartbeat(&self, user: &K, ts: Timestamp, context: &ActivityContext) -> Result<(), CoreError> {
        context.validate()?;
        if let Some((stored, _)) = self.latest.get(user) {
            if ts < *stored {
                return Err(CoreError::StaleHeartbeat { stored: *stored, got: ts });
            }
        }
        Ok(())
    }

    pub fn record_heartbeat(
        &mut self,
        user: K,
        ts: Timestamp,
        context: ActivityContext,
    ) -> Result<PresenceRecord<K>, CoreError> {
        self.check_heartbeat(&user, ts, &context)?;
        self.latest.insert(user.clone(), (ts, context.clone()));
        Ok(PresenceRecord { user, last_heartbeat: ts, context })
    }

    pub fn get(&self, user: &K) -> Option<PresenceRecord<K>> {
        self.latest.get(user).map(|(ts, ctx)| PresenceRecord {
            user: user.clone(),
            last_heartbeat: *ts,
            context: ctx.clone(),
        })
    }

    pub fn is_online(&self, user: &K, now: Timestamp, window_ms: i64) -> bool {
        self.latest.get(user).is_some_and(|(ts, _)| now.since(*ts) <= window_ms)
    }

    pub fn active_assignment(&self, user: &K, now: Timestamp, window_ms: i64) -> Option<&AssignmentId> {
        let (ts, ctx) = self.latest.get(user)?;
        if now.since(*ts) > window_ms {
            return None;
        }
        ctx.assignment()
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, Timestamp, &ActivityContext)> {
        self.latest.iter().map(|(k, (ts, ctx))| (k, *ts, ctx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::StudentId;
    use proptest::prelude::*;

    const WINDOW: i64 = 60_000;

    fn s(id: &str) -> StudentId {
        StudentId::new(id)
    }

    #[test]
    fn first_beat_is_recorded() {
        let mut t = PresenceTable::default();
        let rec = t.record_heartbeat(s("s1"), Timestamp(1000), ActivityContext::ide("a3")).unwrap();
        assert_eq!(rec.last_heartbeat, Timestamp(1000));
        assert_eq!(rec.context.assignment_id, Some(AssignmentId::new("a3")));
    }

    #[test]
    fn stale_beat_rejected_equal_accepted() {
        let mut t = PresenceTable::default();
        t.record_heartbeat(s("s1"), Timestamp(1000), ActivityContext::ide("a3")).unwrap();
        let err = t.record_heartbeat(s("s1"), Timestamp(900), ActivityContext::forum());
        assert!(matches!(err, Err(CoreError::StaleHeartbeat { .. })));
        assert!(t.record_heartbeat(s("s1"), Timestamp(1000), ActivityContext::forum()).is_ok());
    }

    #[test]
    fn malformed_context() {
        let mut t = PresenceTable::default();
        let bad = ActivityContext { kind: ContextKind::IdeAssignment, assignment_id: None };
        assert!(matches!(t.record_heartbeat(s("s1"), Timestamp(0), bad), Err(CoreError::MalformedContext)));
        let bad = ActivityContext { kind: ContextKind::Forum, assignment_id: Some(AssignmentId::new("a1")) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn online_window_boundaries() {
        let mut t = PresenceTable::default();
        t.record_heartbeat(s("s1"), Timestamp(100_000), ActivityContext::ide("a3")).unwrap();
        assert!(t.is_online(&s("s1"), Timestamp(159_000), WINDOW));
        assert!(t.is_online(&s("s1"), Timestamp(160_000), WINDOW));
        assert!(!t.is_online(&s("s1"), Timestamp(161_000), WINDOW));
        assert!(!t.is_online(&s("nobody"), Timestamp(0), WINDOW));
    }

    #[test]
    fn active_assignment_requires_online_ide() {
        let mut t = PresenceTable::default();
        t.record_heartbeat(s("s1"), Timestamp(0), ActivityContext::ide("a3")).unwrap();
        t.record_heartbeat(s("s2"), Timestamp(0), ActivityContext::forum()).unwrap();
        assert_eq!(t.active_assignment(&s("s1"), Timestamp(10), WINDOW), Some(&AssignmentId::new("a3")));
        assert_eq!(t.active_assignment(&s("s2"), Timestamp(10), WINDOW), None);
        assert_eq!(t.active_assignment(&s("s1"), Timestamp(WINDOW + 1), WINDOW), None);
    }

    proptest! {
        #[test]
        fn online_is_monotone_between_beats(last in 0i64..1_000_000, a in 0i64..200_000, b in 0i64..200_000) {
            let mut t = PresenceTable::default();
            t.record_heartbeat(s("x"), Timestamp(last), ActivityContext::forum()).unwrap();
            let (early, late) = (a.min(b), a.max(b));
            let at = |d: i64| t.is_online(&s("x"), Timestamp(last + d), WINDOW);
            prop_assert!(!at(late) || at(early));
        }
    }
}

use std::collections::BTreeMap;

use serde::Serialize;

use super::AnalyticsError;
use crate::ids::{AssignmentId, StudentId, Timestamp};
use crate::num::Real;

/// Timestamped assignment completions per student. Completions never revert,
/// so progress is non-decreasing in time.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ProgressLedger {
    total: usize,
    completions: BTreeMap<StudentId, Vec<(Timestamp, AssignmentId)>>,
}

impl ProgressLedger {
    pub(crate) fn set_total(&mut self, total: usize) {
        self.total = total;
    }

    pub(crate) fn record(&mut self, student: &StudentId, assignment: &AssignmentId, ts: Timestamp) {
        self.completions.entry(student.clone()).or_default().push((ts, assignment.clone()));
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Number of assignments completed at or before `t`.
    pub fn completed_at(&self, student: &StudentId, t: Timestamp) -> usize {
        self.completions.get(student).map_or(0, |done| done.partition_point(|(ts, _)| *ts <= t))
    }

    pub fn progress<T: Real>(&self, student: &StudentId, t: Timestamp) -> Result<T, AnalyticsError> {
        if self.total == 0 {
            return Err(AnalyticsError::NoAssignmentsConfigured);
        }
        Ok(T::of_count(self.completed_at(student, t)) / T::of_count(self.total))
    }
}

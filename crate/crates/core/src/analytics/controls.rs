use std::collections::BTreeSet;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, CourseLog};
use crate::eligibility::{Group, NudgableQuery};
use crate::ids::{AssignmentId, NudgeId, SessionId, StudentId, Timestamp};
use crate::state::State;

/// Maximum absolute progress difference between a helped student and a
/// control, as an exact fraction of the course. Defaults to 1/100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressBand(pub Ratio<u64>);

impl Default for ProgressBand {
    fn default() -> Self {
        Self(Ratio::new(1, 100))
    }
}

impl ProgressBand {
    /// `|a - b| / total <= band`, evaluated in integers.
    pub fn admits(&self, a: usize, b: usize, total: usize) -> bool {
        let diff = a.abs_diff(b) as u128;
        diff * u128::from(*self.0.denom()) <= u128::from(*self.0.numer()) * total as u128
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ControlGroup {
    pub session_id: SessionId,
    pub helped: StudentId,
    /// Accept instant.
    pub anchor_ts: Timestamp,
    pub assignment: Option<AssignmentId>,
    pub members: BTreeSet<StudentId>,
}

/// Restricted students who were nudgable (ignoring the group filter) just
/// before an acceptance, with what they were working on.
#[derive(Debug, Clone)]
pub(crate) struct Snapshot {
    anchor: Timestamp,
    helped: StudentId,
    helped_assignment: Option<AssignmentId>,
    candidates: Vec<(StudentId, AssignmentId)>,
}

impl Snapshot {
    pub(crate) fn capture(state: &State, nudge: NudgeId, anchor: Timestamp) -> Self {
        let helped = state.nudge(nudge).map(|n| n.student_id.clone()).unwrap_or_else(|| StudentId::new(""));
        let query = NudgableQuery { now: anchor, exclude: [helped.clone()].into(), ignore_group: true };
        let candidates = state
            .nudgable_set(&query)
            .into_iter()
            .filter(|s| state.group_of(s) == Group::Restricted)
            .filter_map(|s| {
                let a = state.active_assignment(&s, anchor)?.clone();
                Some((s, a))
            })
            .collect();
        Self { anchor, helped_assignment: state.active_assignment(&helped, anchor).cloned(), helped, candidates }
    }
}

impl CourseLog {
    /// Counterfactual students for one session: in the restricted group,
    /// nudgable at the accept instant apart from the group filter, on the
    /// same assignment, and within the progress band of the helped student.
    pub fn control_group(&self, session: SessionId) -> Result<ControlGroup, AnalyticsError> {
        let s = self.state.session(session).ok_or(AnalyticsError::SessionNotFound(session))?;
        let snap = self.snapshots.get(&s.nudge_id).ok_or(AnalyticsError::SessionNotFound(session))?;
        let total = self.ledger.total();
        let mut members = BTreeSet::new();
        if let Some(assignment) = &snap.helped_assignment {
            let helped_done = self.ledger.completed_at(&snap.helped, snap.anchor);
            for (student, working_on) in &snap.candidates {
                if working_on != assignment {
                    continue;
                }
                let done = self.ledger.completed_at(student, snap.anchor);
                if total > 0 && self.band.admits(done, helped_done, total) {
                    members.insert(student.clone());
                }
            }
        }
        Ok(ControlGroup {
            session_id: session,
            helped: snap.helped.clone(),
            anchor_ts: snap.anchor,
            assignment: snap.helped_assignment.clone(),
            members,
        })
    }

    pub fn control_groups(&self) -> Vec<ControlGroup> {
        self.state.sessions().filter_map(|s| self.control_group(s.session_id).ok()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_is_exact_at_the_edge() {
        let band = ProgressBand::default();
        // 50/100 vs 49/100: float subtraction gives 0.010000000000000009.
        assert!(band.admits(50, 49, 100));
        assert!(!band.admits(50, 48, 100));
        assert!(band.admits(3, 3, 10));
        assert!(!band.admits(3, 4, 10));
        assert!(band.admits(0, 2, 200));
    }
}

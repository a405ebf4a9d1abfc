//! Who may be nudged right now, and the randomized experiment split.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::hash::{stable_hash, unit_interval};
use crate::ids::{StudentId, Timestamp};
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Group {
    Eligible,
    Restricted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentAssignment {
    pub student_id: StudentId,
    pub group: Group,
    pub seed: u64,
    pub fraction: f64,
}

/// Deterministic split: a student is eligible when their hash, mapped onto
/// `[0, 1)`, falls below `fraction`. Raising the fraction only ever adds
/// students to the eligible group.
pub fn assign_group(student: &StudentId, seed: u64, fraction: f64) -> ExperimentAssignment {
    let group =
        if unit_interval(stable_hash(student.as_str(), seed)) < fraction { Group::Eligible } else { Group::Restricted };
    ExperimentAssignment { student_id: student.clone(), group, seed, fraction }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NudgableQuery {
    pub now: Timestamp,
    /// Students already nudged by the ticket asking.
    pub exclude: BTreeSet<StudentId>,
    /// Skip the experiment-group filter (counterfactual construction).
    pub ignore_group: bool,
}

impl NudgableQuery {
    pub fn at(now: Timestamp) -> Self {
        Self { now, ..Self::default() }
    }
}

impl State {
    pub fn group_of(&self, student: &StudentId) -> Group {
        let cfg = &self.config;
        assign_group(student, cfg.experiment_seed, cfg.experiment_fraction).group
    }

    /// True while the student's most recent nudge is younger than the cooldown,
    /// whatever its outcome was.
    pub fn cooldown_active(&self, student: &StudentId, now: Timestamp) -> bool {
        self.last_nudged.get(student).is_some_and(|sent| *sent > now.minus(self.config.cooldown_ms))
    }

    pub fn is_online(&self, student: &StudentId, now: Timestamp) -> bool {
        self.students.is_online(student, now, self.config.online_window_ms)
    }

    pub fn active_assignment(&self, student: &StudentId, now: Timestamp) -> Option<&crate::ids::AssignmentId> {
        self.students.active_assignment(student, now, self.config.online_window_ms)
    }

    /// Every criterion except the caller-specific exclusion list.
    pub fn is_nudgable(&self, student: &StudentId, now: Timestamp, ignore_group: bool) -> bool {
        self.active_assignment(student, now).is_some()
            && !self.cooldown_active(student, now)
            && (ignore_group || self.group_of(student) == Group::Eligible)
            && !self.live_session_by_student.contains_key(student)
            && !self.pending_by_student.contains_key(student)
    }

    pub fn nudgable_set(&self, query: &NudgableQuery) -> BTreeSet<StudentId> {
        self.students
            .iter()
            .map(|(s, _, _)| s)
            .filter(|s| !query.exclude.contains(*s))
            .filter(|s| self.is_nudgable(s, query.now, query.ignore_group))
            .cloned()
            .collect()
    }
}

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::matchmaker::TicketState;
use crate::num::Real;
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Aggregates<T> {
    pub teachers_tried: usize,
    pub tickets_initiated: usize,
    /// Tickets that ended matched.
    pub tickets_accepted: usize,
    /// Zero when no teacher has a ticket.
    pub median_tickets_per_teacher: T,
    pub unique_students_nudged: usize,
    pub unique_students_helped: usize,
}

impl<T: Real> Table1Aggregates<T> {
    pub fn from_state(state: &State) -> Self {
        let mut per_teacher: BTreeMap<_, usize> = BTreeMap::new();
        let mut accepted = 0;
        for t in state.tickets() {
            *per_teacher.entry(&t.teacher_id).or_default() += 1;
            if matches!(t.state, TicketState::Matched(_)) {
                accepted += 1;
            }
        }
        let mut counts: Vec<_> = per_teacher.values().copied().collect();
        counts.sort_unstable();
        let median = match counts.len() {
            0 => T::zero(),
            n if n % 2 == 1 => T::of_count(counts[n / 2]),
            n => (T::of_count(counts[n / 2 - 1]) + T::of_count(counts[n / 2])) / T::two(),
        };
        let nudged: BTreeSet<_> = state.nudges().map(|n| &n.student_id).collect();
        let helped: BTreeSet<_> = state.sessions().map(|s| &s.student_id).collect();
        Self {
            teachers_tried: per_teacher.len(),
            tickets_initiated: counts.iter().sum(),
            tickets_accepted: accepted,
            median_tickets_per_teacher: median,
            unique_students_nudged: nudged.len(),
            unique_students_helped: helped.len(),
        }
    }
}

impl super::CourseLog {
    pub fn table1<T: Real>(&self) -> Table1Aggregates<T> {
        Table1Aggregates::from_state(&self.state)
    }
}

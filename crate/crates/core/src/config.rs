use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::ids::{AssignmentId, DAY_MS, MINUTE_MS, SECOND_MS};

/// Per-course protocol parameters. Recorded in the log so replays and
/// analytics see the values that were in force at every instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CourseConfig {
    pub assignment_ids: Vec<AssignmentId>,
    /// A student is online when their last heartbeat is at most this old.
    pub online_window_ms: i64,
    /// No second nudge to a student while their last nudge is younger than this.
    pub cooldown_ms: i64,
    /// How long a nudged student has to answer.
    pub response_window_ms: i64,
    /// How long a ticket keeps looking before it gives up.
    pub search_window_ms: i64,
    pub experiment_fraction: f64,
    pub experiment_seed: u64,
    /// Seeds the uniform candidate draw. Draws are recorded in the log, so
    /// replay never needs it.
    pub selection_seed: u64,
    /// Live sessions without any activity for this long are force-ended.
    pub session_idle_timeout_ms: i64,
}

impl Default for CourseConfig {
    fn default() -> Self {
        Self {
            assignment_ids: Vec::new(),
            online_window_ms: MINUTE_MS,
            cooldown_ms: DAY_MS,
            response_window_ms: 30 * SECOND_MS,
            search_window_ms: 5 * MINUTE_MS,
            experiment_fraction: 0.35,
            experiment_seed: 0,
            selection_seed: 0,
            session_idle_timeout_ms: 60 * MINUTE_MS,
        }
    }
}

impl CourseConfig {
    pub fn with_assignments<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { assignment_ids: ids.into_iter().map(|s| AssignmentId(s.into())).collect(), ..Self::default() }
    }

    /// `a0 .. a{n-1}`
    pub fn with_numbered_assignments(n: usize) -> Self {
        Self::with_assignments((0..n).map(|i| format!("a{i}")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let windows = [
            ("online_window_ms", self.online_window_ms),
            ("cooldown_ms", self.cooldown_ms),
            ("response_window_ms", self.response_window_ms),
            ("search_window_ms", self.search_window_ms),
            ("session_idle_timeout_ms", self.session_idle_timeout_ms),
        ];
        for (name, value) in windows {
            if value <= 0 {
                return Err(ConfigError::NonPositiveWindow { name, value });
            }
        }
        if !(0.0..=1.0).contains(&self.experiment_fraction) {
            return Err(ConfigError::FractionOutOfRange(self.experiment_fraction));
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &self.assignment_ids {
            if !seen.insert(id) {
                return Err(ConfigError::DuplicateAssignment(id.clone()));
            }
        }
        Ok(())
    }

    pub fn has_assignment(&self, id: &AssignmentId) -> bool {
        self.assignment_ids.iter().any(|a| a == id)
    }
}

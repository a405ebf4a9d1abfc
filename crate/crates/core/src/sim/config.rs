use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::config::CourseConfig;
use crate::ids::{DAY_MS, HOUR_MS, MINUTE_MS, SECOND_MS};
use crate::matchmaker::SelectionPolicy;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseDelay {
    /// Students answer the instant they are nudged.
    Instant,
    /// Uniform on `0..=response_delay_max_ms`.
    #[default]
    Uniform,
}

/// Simulator parameters. Deliberately flat so a config file is a plain list
/// of `key = value` lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_students: usize,
    pub n_teachers: usize,
    pub horizon_ms: i64,
    /// Teachers arrive and students follow on/off sessions until this
    /// instant; afterwards students only check in once a day. Defaults to the
    /// horizon.
    pub active_phase_ms: Option<i64>,

    pub accept_prob: f64,
    pub response_delay: ResponseDelay,
    pub response_delay_max_ms: i64,
    /// Share of nudges that are never answered.
    pub timeout_weight: f64,

    /// Long-run share of time a student is online.
    pub online_fraction: f64,
    pub mean_online_minutes: f64,
    pub heartbeat_interval_ms: i64,
    /// Chance an online period is spent in the IDE rather than the forum.
    pub ide_fraction: f64,
    /// Per-hour chance of passing the current assignment while in the IDE.
    pub completion_rate_per_hour: f64,
    /// Students in the IDE work on their next unfinished assignment or up to
    /// this many beyond it.
    pub assignment_jitter: usize,

    /// Tickets per hour, summed over all teachers.
    pub teacher_arrival_rate: f64,
    pub teacher_heartbeat_interval_ms: i64,
    /// Minutes a teacher browses before pressing the button.
    pub teacher_lead_minutes: i64,
    /// Minutes a teacher stays after the ticket or session is over.
    pub teacher_linger_minutes: i64,
    /// Chance a teacher leaves immediately after an unmatched ticket.
    pub teacher_offline_after_miss: f64,
    pub cancel_prob: f64,
    pub session_minutes_min: f64,
    pub session_minutes_max: f64,
    pub policy: SelectionPolicy,

    /// Per-day dropout hazard. Zero disables dropout.
    pub dropout_base_per_day: f64,
    /// Hazard multiplier applied from the moment a student is helped.
    pub helped_multiplier: f64,

    pub n_assignments: usize,
    pub online_window_ms: i64,
    pub cooldown_ms: i64,
    pub response_window_ms: i64,
    pub search_window_ms: i64,
    pub experiment_fraction: f64,
    pub experiment_seed: u64,
    pub selection_seed: u64,
    pub session_idle_timeout_ms: i64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let course = CourseConfig::default();
        Self {
            seed: 0,
            n_students: 200,
            n_teachers: 10,
            horizon_ms: DAY_MS,
            active_phase_ms: None,
            accept_prob: 0.24,
            response_delay: ResponseDelay::Uniform,
            response_delay_max_ms: 30 * SECOND_MS,
            timeout_weight: 0.1,
            online_fraction: 0.3,
            mean_online_minutes: 40.0,
            heartbeat_interval_ms: MINUTE_MS,
            ide_fraction: 0.7,
            completion_rate_per_hour: 0.5,
            assignment_jitter: 0,
            teacher_arrival_rate: 4.0,
            teacher_heartbeat_interval_ms: MINUTE_MS,
            teacher_lead_minutes: 30,
            teacher_linger_minutes: 60,
            teacher_offline_after_miss: 0.5,
            cancel_prob: 0.05,
            session_minutes_min: 5.0,
            session_minutes_max: 30.0,
            policy: SelectionPolicy::Random,
            dropout_base_per_day: 0.0,
            helped_multiplier: 1.0,
            n_assignments: 20,
            online_window_ms: course.online_window_ms,
            cooldown_ms: course.cooldown_ms,
            response_window_ms: course.response_window_ms,
            search_window_ms: course.search_window_ms,
            experiment_fraction: course.experiment_fraction,
            experiment_seed: course.experiment_seed,
            selection_seed: course.selection_seed,
            session_idle_timeout_ms: course.session_idle_timeout_ms,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(s).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Named starting points. `protocol` is the default world; `cohort` and
    /// `cohort-null` generate logs with a known dropout effect; `timeline`
    /// generates teacher activity around matched and unmatched tickets.
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self::default();
        Some(match name {
            "protocol" => base,
            "cohort" => Self {
                seed: 11,
                n_students: 2500,
                n_teachers: 80,
                horizon_ms: 21 * DAY_MS,
                active_phase_ms: Some(4 * DAY_MS),
                accept_prob: 0.6,
                timeout_weight: 0.0,
                online_fraction: 0.3,
                mean_online_minutes: 45.0,
                heartbeat_interval_ms: 15 * MINUTE_MS,
                online_window_ms: 15 * MINUTE_MS,
                ide_fraction: 0.8,
                completion_rate_per_hour: 0.4,
                n_assignments: 100,
                teacher_arrival_rate: 40.0,
                teacher_heartbeat_interval_ms: 15 * MINUTE_MS,
                teacher_lead_minutes: 0,
                teacher_linger_minutes: 0,
                cancel_prob: 0.0,
                session_minutes_min: 5.0,
                session_minutes_max: 20.0,
                dropout_base_per_day: 0.08,
                helped_multiplier: 0.5,
                ..base
            },
            "cohort-null" => Self { helped_multiplier: 1.0, ..Self::preset("cohort")? },
            "timeline" => Self {
                seed: 5,
                n_students: 60,
                n_teachers: 40,
                horizon_ms: 10 * DAY_MS,
                accept_prob: 0.5,
                timeout_weight: 0.2,
                online_fraction: 0.1,
                mean_online_minutes: 30.0,
                ide_fraction: 0.6,
                search_window_ms: 2 * MINUTE_MS,
                cooldown_ms: HOUR_MS,
                teacher_arrival_rate: 12.0,
                teacher_offline_after_miss: 0.7,
                cancel_prob: 0.0,
                ..base
            },
            _ => return None,
        })
    }

    pub fn course(&self) -> CourseConfig {
        CourseConfig {
            online_window_ms: self.online_window_ms,
            cooldown_ms: self.cooldown_ms,
            response_window_ms: self.response_window_ms,
            search_window_ms: self.search_window_ms,
            experiment_fraction: self.experiment_fraction,
            experiment_seed: self.experiment_seed,
            selection_seed: self.selection_seed,
            session_idle_timeout_ms: self.session_idle_timeout_ms,
            ..CourseConfig::with_numbered_assignments(self.n_assignments)
        }
    }

    pub fn active_phase_end(&self) -> i64 {
        self.active_phase_ms.unwrap_or(self.horizon_ms).min(self.horizon_ms)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidConfig(what.to_string()));
        for (name, p) in [
            ("accept_prob", self.accept_prob),
            ("timeout_weight", self.timeout_weight),
            ("online_fraction", self.online_fraction),
            ("ide_fraction", self.ide_fraction),
            ("teacher_offline_after_miss", self.teacher_offline_after_miss),
            ("cancel_prob", self.cancel_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.horizon_ms <= 0 {
            return bad("horizon_ms must be positive");
        }
        if self.active_phase_ms.is_some_and(|a| a < 0) {
            return bad("active_phase_ms must not be negative");
        }
        if self.heartbeat_interval_ms <= 0 || self.teacher_heartbeat_interval_ms <= 0 {
            return bad("heartbeat intervals must be positive");
        }
        if self.response_delay_max_ms < 0 {
            return bad("response_delay_max_ms must not be negative");
        }
        if self.mean_online_minutes.is_nan() || self.mean_online_minutes <= 0.0 {
            return bad("mean_online_minutes must be positive");
        }
        if !(self.teacher_arrival_rate >= 0.0 && self.teacher_arrival_rate.is_finite()) {
            return bad("teacher_arrival_rate must be a finite non-negative rate");
        }
        if self.teacher_arrival_rate > 0.0 && self.n_teachers == 0 {
            return bad("teacher arrivals need at least one teacher");
        }
        if self.completion_rate_per_hour.is_nan() || self.completion_rate_per_hour < 0.0 {
            return bad("completion_rate_per_hour must not be negative");
        }
        if self.teacher_lead_minutes < 0 || self.teacher_linger_minutes < 0 {
            return bad("teacher lead and linger must not be negative");
        }
        if !(self.session_minutes_min > 0.0 && self.session_minutes_min <= self.session_minutes_max) {
            return bad("session minutes must satisfy 0 < min <= max");
        }
        if !(self.dropout_base_per_day >= 0.0 && self.helped_multiplier >= 0.0) {
            return bad("dropout hazards must not be negative");
        }
        self.course().validate().map_err(|e| SimError::InvalidConfig(e.to_string()))
    }
}

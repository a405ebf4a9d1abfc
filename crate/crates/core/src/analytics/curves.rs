use serde::Serialize;

use super::{AnalyticsError, CourseLog};
use crate::ids::{SessionId, DAY_MS};
use crate::num::{Estimate, Real};

/// Day offsets relative to the accept instant: three days before to fifteen after.
pub const DEFAULT_OFFSETS: std::ops::RangeInclusive<i32> = -3..=15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSeries<T> {
    /// Mean course progress at each offset.
    pub progress: Vec<Estimate<T>>,
    /// Fraction with no activity at or after each offset.
    pub dropout: Vec<Estimate<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortCurves<T> {
    pub offsets: Vec<i32>,
    pub helped: CohortSeries<T>,
    /// Pooled over every (session, control member) pair.
    pub control: CohortSeries<T>,
    /// Per-session `control mean - helped` dropout, averaged over sessions.
    /// Each session is one observation, so a control student reused across
    /// many sessions does not shrink the standard error.
    pub paired_dropout_gap: Vec<Estimate<T>>,
    /// Per-session `helped - control mean` progress, averaged over sessions.
    pub paired_progress_gap: Vec<Estimate<T>>,
    pub sessions_used: usize,
    /// Sessions left out because their control group was empty.
    pub sessions_skipped: usize,
}

impl<T: Real> CohortCurves<T> {
    pub fn offset_index(&self, day: i32) -> Option<usize> {
        self.offsets.iter().position(|d| *d == day)
    }

    /// `control - helped` dropout at the given day.
    pub fn dropout_gap(&self, day: i32) -> Option<T> {
        let i = self.offset_index(day)?;
        Some(self.control.dropout[i].mean - self.helped.dropout[i].mean)
    }
}

impl CourseLog {
    pub fn cohort_curves<T: Real>(
        &self,
        sessions: &[SessionId],
        offsets: &[i32],
    ) -> Result<CohortCurves<T>, AnalyticsError> {
        if self.ledger.total() == 0 {
            return Err(AnalyticsError::NoAssignmentsConfigured);
        }
        let k = offsets.len();
        let mut helped_p = vec![Vec::new(); k];
        let mut helped_d = vec![Vec::new(); k];
        let mut control_p = vec![Vec::new(); k];
        let mut control_d = vec![Vec::new(); k];
        let mut paired_d = vec![Vec::new(); k];
        let mut paired_p = vec![Vec::new(); k];
        let (mut used, mut skipped) = (0, 0);

        for id in sessions {
            let group = self.control_group(*id)?;
            if group.members.is_empty() {
                skipped += 1;
                continue;
            }
            used += 1;
            for (i, day) in offsets.iter().enumerate() {
                let at = group.anchor_ts.plus(i64::from(*day) * DAY_MS);
                let sample = |who, p: &mut Vec<Vec<T>>, d: &mut Vec<Vec<T>>| -> Result<(), AnalyticsError> {
                    p[i].push(self.progress::<T>(who, at)?);
                    d[i].push(if self.is_retained(who, at) { T::zero() } else { T::one() });
                    Ok(())
                };
                sample(&group.helped, &mut helped_p, &mut helped_d)?;
                let first = control_p[i].len();
                for m in &group.members {
                    sample(m, &mut control_p, &mut control_d)?;
                }
                let mean = |xs: &[T]| xs.iter().copied().sum::<T>() / T::of_count(xs.len());
                let helped_p_now = *helped_p[i].last().expect("just pushed");
                let helped_d_now = *helped_d[i].last().expect("just pushed");
                paired_d[i].push(mean(&control_d[i][first..]) - helped_d_now);
                paired_p[i].push(helped_p_now - mean(&control_p[i][first..]));
            }
        }
        if used == 0 {
            return Err(AnalyticsError::NoSessionsWithControls { skipped });
        }
        let est = |v: Vec<Vec<T>>| v.iter().map(|xs| Estimate::from_samples(xs)).collect();
        Ok(CohortCurves {
            offsets: offsets.to_vec(),
            helped: CohortSeries { progress: est(helped_p), dropout: est(helped_d) },
            control: CohortSeries { progress: est(control_p), dropout: est(control_d) },
            paired_dropout_gap: est(paired_d),
            paired_progress_gap: est(paired_p),
            sessions_used: used,
            sessions_skipped: skipped,
        })
    }

    /// Curves over every session in the log at the default offsets.
    pub fn cohort_curves_all<T: Real>(&self) -> Result<CohortCurves<T>, AnalyticsError> {
        let ids: Vec<_> = self.state.sessions().map(|s| s.session_id).collect();
        let offsets: Vec<_> = DEFAULT_OFFSETS.collect();
        self.cohort_curves(&ids, &offsets)
    }
}

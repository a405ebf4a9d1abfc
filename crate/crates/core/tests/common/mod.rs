//! Brute-force oracles that read raw records only. They share no code with
//! the crate's state, eligibility or analytics modules.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_rational::Ratio;
use teachnow_core::{ContextKind, CourseConfig, Event, EventRecord, NudgeOutcome};

/// Group hash written out from its definition: FNV-1a, then a SplitMix64
/// finalizer keyed by a mixed seed; top 53 bits as a fraction of 1.
pub fn eligible(student: &str, seed: u64, fraction: f64) -> bool {
    fn mix(x: u64) -> u64 {
        let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in student.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3);
    }
    let u = (mix(h ^ mix(seed)) >> 11) as f64 / (1u64 << 53) as f64;
    u < fraction
}

/// What the raw log says about each student up to some record.
#[derive(Default, Clone)]
pub struct Scan {
    pub config: CourseConfig,
    pub beats: HashMap<String, (i64, ContextKind, Option<String>)>,
    pub last_sent: HashMap<String, i64>,
    pub pending: HashMap<u64, String>,
    pub live: HashMap<u64, String>,
}

impl Scan {
    pub fn feed(&mut self, rec: &EventRecord) {
        match &rec.event {
            Event::CourseConfigured { config } => self.config = config.clone(),
            Event::StudentHeartbeat { student, context } => {
                self.beats.insert(
                    student.to_string(),
                    (rec.ts.0, context.kind, context.assignment_id.as_ref().map(|a| a.to_string())),
                );
            }
            Event::NudgeSent { nudge, student, .. } => {
                self.last_sent.insert(student.to_string(), rec.ts.0);
                self.pending.insert(nudge.0, student.to_string());
            }
            Event::NudgeResolved { nudge, .. } => {
                self.pending.remove(&nudge.0);
            }
            Event::SessionStarted { session, student, .. } => {
                self.live.insert(session.0, student.to_string());
            }
            Event::SessionEnded { session, .. } => {
                self.live.remove(&session.0);
            }
            _ => {}
        }
    }

    /// Assignment the student is working on at `t`, if online in the IDE.
    pub fn working_on(&self, student: &str, t: i64) -> Option<&str> {
        let (ts, kind, assignment) = self.beats.get(student)?;
        let online = *ts <= t && t - ts <= self.config.online_window_ms;
        if online && *kind == ContextKind::IdeAssignment {
            assignment.as_deref()
        } else {
            None
        }
    }

    pub fn nudgable(&self, student: &str, t: i64, ignore_group: bool) -> bool {
        let cfg = &self.config;
        self.working_on(student, t).is_some()
            && self.last_sent.get(student).is_none_or(|sent| *sent <= t - cfg.cooldown_ms)
            && (ignore_group || eligible(student, cfg.experiment_seed, cfg.experiment_fraction))
            && !self.pending.values().any(|s| s == student)
            && !self.live.values().any(|s| s == student)
    }

    pub fn nudgable_set(&self, t: i64, ignore_group: bool) -> BTreeSet<String> {
        self.beats.keys().filter(|s| self.nudgable(s, t, ignore_group)).cloned().collect()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleStats {
    pub sessions: usize,
    pub members: usize,
    /// Members whose progress difference sits exactly on the band edge.
    pub on_edge: usize,
    /// Otherwise-eligible candidates rejected only by the band.
    pub outside_band: usize,
}

/// Control group of every session, by full scan.
pub fn control_groups(records: &[EventRecord]) -> (BTreeMap<u64, BTreeSet<String>>, OracleStats) {
    let mut completions: HashMap<String, Vec<i64>> = HashMap::new();
    for rec in records {
        if let Event::AssignmentCompleted { student, .. } = &rec.event {
            completions.entry(student.to_string()).or_default().push(rec.ts.0);
        }
    }
    let done_by = |s: &str, t: i64| completions.get(s).map_or(0, |v| v.iter().filter(|ts| **ts <= t).count());

    let mut stats = OracleStats::default();
    let mut scan = Scan::default();
    let mut by_nudge: HashMap<u64, BTreeSet<String>> = HashMap::new();
    let mut out = BTreeMap::new();
    let band = Ratio::new(1u64, 100);
    for rec in records {
        match &rec.event {
            Event::NudgeResolved { nudge, outcome: NudgeOutcome::Accepted } => {
                let t = rec.ts.0;
                let helped = scan.pending[&nudge.0].clone();
                let total = scan.config.assignment_ids.len() as u64;
                let mut members = BTreeSet::new();
                if let Some(target) = scan.working_on(&helped, t).map(str::to_string) {
                    let mine = done_by(&helped, t) as u64;
                    for s in scan.beats.keys() {
                        if *s == helped
                            || eligible(s, scan.config.experiment_seed, scan.config.experiment_fraction)
                            || !scan.nudgable(s, t, true)
                            || scan.working_on(s, t) != Some(target.as_str())
                        {
                            continue;
                        }
                        let theirs = done_by(s, t) as u64;
                        let diff = Ratio::new(mine.abs_diff(theirs), total);
                        if diff <= band {
                            if diff == band {
                                stats.on_edge += 1;
                            }
                            members.insert(s.clone());
                        } else {
                            stats.outside_band += 1;
                        }
                    }
                }
                stats.members += members.len();
                by_nudge.insert(nudge.0, members);
            }
            Event::SessionStarted { session, nudge, .. } => {
                stats.sessions += 1;
                out.insert(session.0, by_nudge.remove(&nudge.0).unwrap_or_default());
            }
            _ => {}
        }
        scan.feed(rec);
    }
    (out, stats)
}

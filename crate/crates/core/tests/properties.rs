mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use teachnow_core::audit::audit;
use teachnow_core::sim::{run_sim_with_sink, SimConfig};
use teachnow_core::{
    replay, ActivityContext, CourseConfig, Engine, Event, EventRecord, EventSink, MemoryLog, NudgableQuery,
    NudgeOutcome, Participant, Response, SelectionPolicy, SessionEventKind, State, Timestamp, MINUTE_MS,
};

/// Nudgable sets as the engine saw them the moment each ticket opened.
#[derive(Default)]
struct OpenProbe {
    records: Vec<EventRecord>,
    seen: Vec<(u64, BTreeSet<String>, BTreeSet<String>)>,
}

impl EventSink for OpenProbe {
    fn append(&mut self, record: &EventRecord) -> std::io::Result<()> {
        self.records.push(record.clone());
        Ok(())
    }

    fn applied(&mut self, record: &EventRecord, state: &State) {
        if let Event::TicketOpened { .. } = record.event {
            let names = |ignore_group| {
                let q = NudgableQuery { ignore_group, ..NudgableQuery::at(record.ts) };
                state.nudgable_set(&q).into_iter().map(|s| s.to_string()).collect()
            };
            self.seen.push((record.seq, names(false), names(true)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nudgable_set_matches_raw_scan(
        seed in any::<u64>(),
        n_students in 5usize..60,
        online in 0.2f64..1.0,
        fraction in 0.0f64..=1.0,
        beat_minutes in 1i64..4,
        cooldown_minutes in 10i64..600,
    ) {
        let cfg = SimConfig {
            seed,
            n_students,
            n_teachers: 4,
            horizon_ms: 8 * 60 * MINUTE_MS,
            online_fraction: online,
            heartbeat_interval_ms: beat_minutes * MINUTE_MS,
            online_window_ms: 2 * MINUTE_MS,
            cooldown_ms: cooldown_minutes * MINUTE_MS,
            experiment_fraction: fraction,
            experiment_seed: seed.rotate_left(17),
            teacher_arrival_rate: 10.0,
            ..SimConfig::default()
        };
        let (_, probe) = run_sim_with_sink(&cfg, OpenProbe::default()).unwrap();
        let mut scan = common::Scan::default();
        let mut at = 0;
        for (seq, ours, ours_all) in &probe.seen {
            while at < *seq as usize {
                scan.feed(&probe.records[at]);
                at += 1;
            }
            let t = probe.records[at - 1].ts.0;
            prop_assert_eq!(ours, &scan.nudgable_set(t, false), "seq {}", seq);
            prop_assert_eq!(ours_all, &scan.nudgable_set(t, true), "seq {}", seq);
        }
    }
}

#[derive(Debug, Clone)]
enum Cmd {
    Beat { student: u8, ide: Option<u8> },
    TeacherBeat { teacher: u8 },
    Complete { student: u8, assignment: u8 },
    Open { teacher: u8, behind: bool },
    Respond { pick: u8, accept: bool },
    Cancel { pick: u8 },
    Say { pick: u8, by_student: bool, kind: u8 },
    End { pick: u8, by_student: bool },
    Thank { pick: u8 },
    Rate { pick: u8, score: u8 },
    Widen { fraction: f64 },
    Tick,
}

fn cmd() -> impl Strategy<Value = Cmd> {
    prop_oneof![
        4 => (0u8..6, proptest::option::weighted(0.8, 0u8..3)).prop_map(|(student, ide)| Cmd::Beat { student, ide }),
        1 => (0u8..3).prop_map(|teacher| Cmd::TeacherBeat { teacher }),
        1 => (0u8..6, 0u8..3).prop_map(|(student, assignment)| Cmd::Complete { student, assignment }),
        2 => (0u8..3, any::<bool>()).prop_map(|(teacher, behind)| Cmd::Open { teacher, behind }),
        3 => (any::<u8>(), any::<bool>()).prop_map(|(pick, accept)| Cmd::Respond { pick, accept }),
        1 => any::<u8>().prop_map(|pick| Cmd::Cancel { pick }),
        2 => (any::<u8>(), any::<bool>(), 0u8..5).prop_map(|(pick, by_student, kind)| Cmd::Say { pick, by_student, kind }),
        1 => (any::<u8>(), any::<bool>()).prop_map(|(pick, by_student)| Cmd::End { pick, by_student }),
        1 => any::<u8>().prop_map(|pick| Cmd::Thank { pick }),
        1 => (any::<u8>(), 0u8..7).prop_map(|(pick, score)| Cmd::Rate { pick, score }),
        1 => (0.0f64..=1.0).prop_map(|fraction| Cmd::Widen { fraction }),
        1 => Just(Cmd::Tick),
    ]
}

fn nth<T: Copy>(items: impl Iterator<Item = T>, pick: u8) -> Option<T> {
    let all: Vec<T> = items.collect();
    (!all.is_empty()).then(|| all[pick as usize % all.len()])
}

/// Applies one command; refusals are expected and ignored. Responses
/// usually go to a pending nudge, sometimes to any nudge at all.
fn apply(e: &mut Engine<MemoryLog>, cmd: &Cmd, now: Timestamp) {
    let student = |i: u8| format!("s{i}");
    let kinds = [
        SessionEventKind::Chat,
        SessionEventKind::CodeEdit,
        SessionEventKind::CodeRun,
        SessionEventKind::Join,
        SessionEventKind::Leave,
    ];
    let session = |e: &Engine<MemoryLog>, pick| nth(e.state().sessions().map(|s| s.session_id), pick);
    let who = |e: &Engine<MemoryLog>, id, by_student: bool| {
        let s = e.state().session(id).unwrap();
        if by_student {
            Participant::Student(s.student_id.clone())
        } else {
            Participant::Teacher(s.teacher_id.clone())
        }
    };
    let _ = match *cmd {
        Cmd::Beat { student: s, ide } => {
            let ctx = ide.map_or_else(ActivityContext::forum, |a| ActivityContext::ide(format!("a{a}")));
            e.record_heartbeat(student(s).into(), now, ctx).map(drop)
        }
        Cmd::TeacherBeat { teacher } => {
            e.record_teacher_heartbeat(format!("t{teacher}").into(), now, ActivityContext::forum()).map(drop)
        }
        Cmd::Complete { student: s, assignment } => {
            e.record_completion(student(s).into(), format!("a{assignment}").into(), now).map(drop)
        }
        Cmd::Open { teacher, behind } => {
            let policy = if behind { SelectionPolicy::MostBehind } else { SelectionPolicy::Random };
            e.initiate_ticket(format!("t{teacher}").into(), now, policy).map(drop)
        }
        Cmd::Respond { pick, accept } => {
            match nth(e.state().nudges().map(|n| n.nudge_id), pick).filter(|_| pick % 4 == 0).or_else(|| {
                nth(e.state().nudges().filter(|n| n.outcome == NudgeOutcome::Pending).map(|n| n.nudge_id), pick)
            }) {
                Some(id) => {
                    let r = if accept { Response::Accept } else { Response::Decline };
                    e.respond_nudge(id, r, now).map(drop)
                }
                None => Ok(()),
            }
        }
        Cmd::Cancel { pick } => match nth(e.state().tickets().map(|t| t.ticket_id), pick) {
            Some(id) => e.cancel_ticket(id, now).map(drop),
            None => Ok(()),
        },
        Cmd::Say { pick, by_student, kind } => match session(e, pick) {
            Some(id) => {
                let p = who(e, id, by_student);
                e.append_session_event(id, &p, kinds[kind as usize], "x".into(), now).map(drop)
            }
            None => Ok(()),
        },
        Cmd::End { pick, by_student } => match session(e, pick) {
            Some(id) => {
                let p = who(e, id, by_student);
                e.end_session(id, now, &p).map(drop)
            }
            None => Ok(()),
        },
        Cmd::Thank { pick } => match session(e, pick) {
            Some(id) => e.record_gratitude(id, true, Some("thanks".into()), now).map(drop),
            None => Ok(()),
        },
        Cmd::Rate { pick, score } => match session(e, pick) {
            Some(id) => e.record_rating(id, score, None, now).map(drop),
            None => Ok(()),
        },
        Cmd::Widen { fraction } => {
            let cfg = CourseConfig { experiment_fraction: fraction, ..e.state().config().clone() };
            e.configure(cfg, now)
        }
        Cmd::Tick => e.tick(now),
    };
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn command_sequences_keep_every_invariant(
        steps in proptest::collection::vec((cmd(), prop_oneof![4 => 0i64..5_000, 1 => 0i64..400_000]), 1..160),
    ) {
        let cfg = CourseConfig {
            experiment_fraction: 0.7,
            cooldown_ms: 10 * MINUTE_MS,
            session_idle_timeout_ms: 5 * MINUTE_MS,
            ..CourseConfig::with_numbered_assignments(3)
        };
        let mut e = Engine::new(cfg, MemoryLog::default(), Timestamp::ZERO).unwrap();
        let mut now = Timestamp::ZERO;
        for (cmd, dt) in &steps {
            now = now.plus(*dt);
            apply(&mut e, cmd, now);
        }
        let live = e.state().hash();
        let records = e.into_parts().1.records;
        let report = audit(&records);
        prop_assert!(report.is_clean(), "{:?}", report.violations);
        prop_assert_eq!(replay(&records).unwrap().hash(), live);
    }
}

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::config::{ResponseDelay, SimConfig};
use super::report::{LatencyQuantiles, SimReport};
use super::SimError;
use crate::engine::Engine;
use crate::error::CoreError;
use crate::event::{Event, EventSink};
use crate::hash::stable_hash_u64;
use crate::ids::{
    AssignmentId, NudgeId, SessionId, StudentId, TeacherId, TicketId, Timestamp, DAY_MS, HOUR_MS, MINUTE_MS,
};
use crate::matchmaker::{NudgeOutcome, Response};
use crate::presence::ActivityContext;
use crate::session::{Author, Participant, SessionEventKind};

// Order of actions sharing a timestamp. Responses come first so an answer
// landing exactly on the deadline beats the timeout.
const P_RESPOND: u8 = 0;
const P_CANCEL: u8 = 1;
const P_STUDENT: u8 = 2;
const P_TEACHER: u8 = 3;
const P_SESSION: u8 = 4;
const P_TICK: u8 = 5;

#[derive(Debug, Clone)]
enum Action {
    PresenceOn(usize),
    PresenceBeat(usize),
    PresenceOff(usize),
    Checkin(usize),
    Farewell { student: usize, generation: u32 },
    NextArrival,
    TeacherBeat { teacher: usize, episode: u32 },
    OpenTicket { teacher: usize, episode: u32 },
    EpisodeEnd { teacher: usize, episode: u32 },
    Respond { nudge: NudgeId, student: usize, accept: bool },
    Cancel(TicketId),
    SessionAct { session: SessionId, author: Author, kind: SessionEventKind },
    EndSession { session: SessionId, author: Author },
    Feedback(SessionId),
    Tick,
}

impl Action {
    /// Actions still processed after the horizon while tickets are open.
    fn settles_tickets(&self) -> bool {
        matches!(self, Action::Respond { .. } | Action::Cancel(_) | Action::Tick)
    }
}

struct Item {
    at: Timestamp,
    priority: u8,
    order: u64,
    action: Action,
}

impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.priority, other.order).cmp(&(self.at, self.priority, self.order))
    }
}

struct Student {
    id: StudentId,
    online: bool,
    off_at: Timestamp,
    in_ide: bool,
    progress: usize,
    current: usize,
    gone_at: Option<Timestamp>,
    generation: u32,
}

impl Student {
    fn gone(&self, t: Timestamp) -> bool {
        self.gone_at.is_some_and(|g| t >= g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Browsing,
    Engaged,
    Lingering,
}

struct Teacher {
    id: TeacherId,
    episode: u32,
    phase: Phase,
}

struct Streams {
    presence: ChaCha8Rng,
    behaviour: ChaCha8Rng,
    teachers: ChaCha8Rng,
    dropout: ChaCha8Rng,
}

#[derive(Default)]
struct Tally {
    tickets: u64,
    matched: u64,
    exhausted: u64,
    cancelled: u64,
    nudges: u64,
    accepted: u64,
    declined: u64,
    timed_out: u64,
    nudges_cancelled: u64,
    late_responses: u64,
    skipped_arrivals: u64,
    sessions: u64,
    matched_nudges: u64,
    latencies: Vec<i64>,
}

pub(super) struct World<'c, S: EventSink> {
    cfg: &'c SimConfig,
    engine: Engine<S>,
    queue: BinaryHeap<Item>,
    order: u64,
    students: Vec<Student>,
    student_index: HashMap<StudentId, usize>,
    teachers: Vec<Teacher>,
    teacher_index: HashMap<TeacherId, usize>,
    rng: Streams,
    tally: Tally,
    opened_at: HashMap<TicketId, Timestamp>,
    nudges_per_ticket: HashMap<TicketId, u64>,
    active_end: Timestamp,
    horizon: Timestamp,
}

fn minutes(m: f64) -> i64 {
    ((m * MINUTE_MS as f64).round() as i64).max(1)
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash_u64(k, seed))
}

impl<'c, S: EventSink> World<'c, S> {
    pub(super) fn new(cfg: &'c SimConfig, sink: S) -> Result<Self, SimError> {
        cfg.validate()?;
        let engine = Engine::new(cfg.course(), sink, Timestamp::ZERO)?;
        let students: Vec<_> = (0..cfg.n_students)
            .map(|i| Student {
                id: StudentId(format!("s{i}")),
                online: false,
                off_at: Timestamp::ZERO,
                in_ide: false,
                progress: 0,
                current: 0,
                gone_at: None,
                generation: 0,
            })
            .collect();
        let teachers: Vec<_> = (0..cfg.n_teachers)
            .map(|i| Teacher { id: TeacherId(format!("t{i}")), episode: 0, phase: Phase::Idle })
            .collect();
        Ok(Self {
            cfg,
            engine,
            queue: BinaryHeap::new(),
            order: 0,
            student_index: students.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect(),
            teacher_index: teachers.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect(),
            students,
            teachers,
            rng: Streams {
                presence: stream(cfg.seed, 1),
                behaviour: stream(cfg.seed, 2),
                teachers: stream(cfg.seed, 3),
                dropout: stream(cfg.seed, 4),
            },
            tally: Tally::default(),
            opened_at: HashMap::new(),
            nudges_per_ticket: HashMap::new(),
            active_end: Timestamp(cfg.active_phase_end()),
            horizon: Timestamp(cfg.horizon_ms),
        })
    }

    fn schedule(&mut self, at: Timestamp, priority: u8, action: Action) {
        self.order += 1;
        self.queue.push(Item { at, priority, order: self.order, action });
    }

    fn open_tickets(&self) -> u64 {
        self.tally.tickets - self.tally.matched - self.tally.exhausted - self.tally.cancelled
    }

    pub(super) fn run(mut self) -> Result<(SimReport, S), SimError> {
        self.seed_agents();
        while let Some(item) = self.queue.pop() {
            if item.at > self.horizon && (!item.action.settles_tickets() || self.open_tickets() == 0) {
                continue;
            }
            self.handle(item.at, item.action)?;
        }
        let end = self.horizon.max(self.engine.state().clock());
        let result = self.engine.tick(end);
        self.observe(result)?;
        Ok(self.finish())
    }

    fn seed_agents(&mut self) {
        let cfg = self.cfg;
        let t0 = Timestamp::ZERO;
        for i in 0..self.students.len() {
            if cfg.online_fraction >= 1.0 {
                self.schedule(t0, P_STUDENT, Action::PresenceOn(i));
            } else if cfg.online_fraction > 0.0 {
                if self.rng.presence.random_bool(cfg.online_fraction) {
                    self.schedule(t0, P_STUDENT, Action::PresenceOn(i));
                } else {
                    let wait = self.offline_duration();
                    self.schedule(t0.plus(wait), P_STUDENT, Action::PresenceOn(i));
                }
            } else if self.active_end < self.horizon {
                self.schedule(self.active_end, P_STUDENT, Action::Checkin(i));
            }
            if cfg.dropout_base_per_day > 0.0 {
                self.resample_dropout(i, t0, cfg.dropout_base_per_day);
            }
        }
        if cfg.teacher_arrival_rate > 0.0 {
            let gap = self.arrival_gap();
            self.schedule(t0.plus(gap), P_TEACHER, Action::NextArrival);
        }
    }

    fn online_duration(&mut self) -> i64 {
        if self.cfg.online_fraction >= 1.0 {
            return i64::MAX / 4;
        }
        let m = Exp::new(1.0 / self.cfg.mean_online_minutes).expect("positive rate").sample(&mut self.rng.presence);
        minutes(m)
    }

    fn offline_duration(&mut self) -> i64 {
        let f = self.cfg.online_fraction;
        let mean_off = self.cfg.mean_online_minutes * (1.0 - f) / f;
        let m = Exp::new(1.0 / mean_off).expect("positive rate").sample(&mut self.rng.presence);
        minutes(m)
    }

    fn arrival_gap(&mut self) -> i64 {
        let hours = Exp::new(self.cfg.teacher_arrival_rate).expect("positive rate").sample(&mut self.rng.teachers);
        ((hours * HOUR_MS as f64).round() as i64).max(1)
    }

    fn resample_dropout(&mut self, i: usize, from: Timestamp, per_day: f64) {
        let s = &mut self.students[i];
        s.generation += 1;
        s.gone_at = None;
        if per_day <= 0.0 {
            return;
        }
        let days = Exp::new(per_day).expect("positive rate").sample(&mut self.rng.dropout);
        let at = from.plus(((days * DAY_MS as f64).round() as i64).max(1));
        if at <= self.horizon {
            s.gone_at = Some(at);
            let generation = s.generation;
            self.schedule(at, P_STUDENT, Action::Farewell { student: i, generation });
        }
    }

    fn handle(&mut self, t: Timestamp, action: Action) -> Result<(), SimError> {
        match action {
            Action::PresenceOn(i) => self.presence_on(i, t),
            Action::PresenceBeat(i) => self.presence_beat(i, t),
            Action::PresenceOff(i) => self.presence_off(i, t),
            Action::Checkin(i) => {
                if self.students[i].gone(t) || t > self.horizon {
                    return Ok(());
                }
                self.student_beat(i, t, ActivityContext::other())?;
                self.schedule(t.plus(DAY_MS), P_STUDENT, Action::Checkin(i));
                Ok(())
            }
            Action::Farewell { student, generation } => {
                if self.students[student].generation != generation {
                    return Ok(());
                }
                self.students[student].online = false;
                self.student_beat(student, t, ActivityContext::other())
            }
            Action::NextArrival => self.arrival(t),
            Action::TeacherBeat { teacher, episode } => self.teacher_beat(teacher, episode, t),
            Action::OpenTicket { teacher, episode } => self.open_ticket(teacher, episode, t),
            Action::EpisodeEnd { teacher, episode } => {
                let tc = &mut self.teachers[teacher];
                if tc.episode == episode {
                    tc.phase = Phase::Idle;
                }
                Ok(())
            }
            Action::Respond { nudge, student, accept } => {
                if self.students[student].gone(t) {
                    return Ok(());
                }
                let response = if accept { Response::Accept } else { Response::Decline };
                let result = self.engine.respond_nudge(nudge, response, t);
                match result {
                    Err(CoreError::NudgeExpired(_)) => {
                        self.tally.late_responses += 1;
                        self.observe(Ok(()))
                    }
                    Err(CoreError::NudgeNotPending(_)) => self.observe(Ok(())),
                    other => self.observe(other.map(drop)),
                }
            }
            Action::Cancel(ticket) => match self.engine.cancel_ticket(ticket, t) {
                Err(CoreError::TicketTerminal(_)) => self.observe(Ok(())),
                other => self.observe(other.map(drop)),
            },
            Action::SessionAct { session, author, kind } => {
                let Some(who) = self.participant(session, author, t) else {
                    return Ok(());
                };
                let payload = format!("{kind:?}").to_lowercase();
                match self.engine.append_session_event(session, &who, kind, payload, t) {
                    Err(CoreError::SessionClosed(_)) => self.observe(Ok(())),
                    other => self.observe(other.map(drop)),
                }
            }
            Action::EndSession { session, author } => {
                // A student who has left the course cannot end the session.
                let who = self
                    .participant(session, author, t)
                    .or_else(|| self.participant(session, Author::Teacher, t))
                    .expect("teachers never leave");
                match self.engine.end_session(session, t, &who) {
                    Err(CoreError::SessionClosed(_)) => self.observe(Ok(())),
                    other => self.observe(other.map(drop)),
                }
            }
            Action::Feedback(session) => self.feedback(session, t),
            Action::Tick => {
                let result = self.engine.tick(t);
                self.observe(result)
            }
        }
    }

    fn participant(&self, session: SessionId, author: Author, t: Timestamp) -> Option<Participant> {
        let s = self.engine.state().session(session)?;
        match author {
            Author::Teacher => Some(Participant::Teacher(s.teacher_id.clone())),
            Author::Student => {
                let i = self.student_index[&s.student_id];
                (!self.students[i].gone(t)).then(|| Participant::Student(s.student_id.clone()))
            }
        }
    }

    fn current_context(&self, i: usize) -> ActivityContext {
        let s = &self.students[i];
        if s.in_ide && s.current < self.cfg.n_assignments {
            ActivityContext::ide(format!("a{}", s.current))
        } else {
            ActivityContext::forum()
        }
    }

    fn student_beat(&mut self, i: usize, t: Timestamp, context: ActivityContext) -> Result<(), SimError> {
        let id = self.students[i].id.clone();
        let result = self.engine.record_heartbeat(id, t, context);
        self.observe(result.map(drop))
    }

    fn presence_on(&mut self, i: usize, t: Timestamp) -> Result<(), SimError> {
        if self.students[i].gone(t) {
            return Ok(());
        }
        if t >= self.active_end {
            self.schedule(t, P_STUDENT, Action::Checkin(i));
            return Ok(());
        }
        let on = self.online_duration();
        let in_ide = self.rng.presence.random_bool(self.cfg.ide_fraction);
        self.pick_assignment(i);
        let s = &mut self.students[i];
        s.online = true;
        s.off_at = t.plus(on);
        s.in_ide = in_ide;
        let off_at = s.off_at;
        let ctx = self.current_context(i);
        self.student_beat(i, t, ctx)?;
        let next = t.plus(self.cfg.heartbeat_interval_ms);
        if next < off_at {
            self.schedule(next, P_STUDENT, Action::PresenceBeat(i));
        }
        if self.cfg.online_fraction < 1.0 {
            self.schedule(off_at, P_STUDENT, Action::PresenceOff(i));
        }
        Ok(())
    }

    fn presence_beat(&mut self, i: usize, t: Timestamp) -> Result<(), SimError> {
        let s = &self.students[i];
        if s.gone(t) || !s.online || t >= s.off_at {
            return Ok(());
        }
        if t >= self.active_end {
            self.students[i].online = false;
            self.schedule(t, P_STUDENT, Action::Checkin(i));
            return Ok(());
        }
        let ctx = self.current_context(i);
        if let Some(assignment) = ctx.assignment().cloned() {
            let hours = self.cfg.heartbeat_interval_ms as f64 / HOUR_MS as f64;
            let p = 1.0 - (-self.cfg.completion_rate_per_hour * hours).exp();
            if self.rng.presence.random_bool(p) {
                self.complete(i, assignment, t)?;
            }
        }
        let ctx = self.current_context(i);
        self.student_beat(i, t, ctx)?;
        let next = t.plus(self.cfg.heartbeat_interval_ms);
        if next < self.students[i].off_at {
            self.schedule(next, P_STUDENT, Action::PresenceBeat(i));
        }
        Ok(())
    }

    fn complete(&mut self, i: usize, assignment: AssignmentId, t: Timestamp) -> Result<(), SimError> {
        let id = self.students[i].id.clone();
        let result = self.engine.record_completion(id, assignment, t);
        self.observe(result.map(drop))?;
        self.students[i].progress = self.engine.state().completed_count(&self.students[i].id);
        self.pick_assignment(i);
        Ok(())
    }

    /// Works on the next unfinished assignment, or up to
    /// `assignment_jitter` beyond it.
    fn pick_assignment(&mut self, i: usize) {
        let jitter = match self.cfg.assignment_jitter {
            0 => 0,
            j => self.rng.presence.random_range(0..=j),
        };
        let s = &mut self.students[i];
        s.current = s.progress + jitter;
    }

    fn presence_off(&mut self, i: usize, t: Timestamp) -> Result<(), SimError> {
        let s = &mut self.students[i];
        if s.gone(t) || !s.online {
            return Ok(());
        }
        s.online = false;
        if t >= self.active_end {
            self.schedule(t, P_STUDENT, Action::Checkin(i));
        } else {
            let wait = self.offline_duration();
            self.schedule(t.plus(wait), P_STUDENT, Action::PresenceOn(i));
        }
        Ok(())
    }

    fn arrival(&mut self, t: Timestamp) -> Result<(), SimError> {
        if t >= self.active_end {
            return Ok(());
        }
        let i = self.rng.teachers.random_range(0..self.teachers.len());
        let tc = &mut self.teachers[i];
        if tc.phase == Phase::Idle {
            tc.episode += 1;
            tc.phase = Phase::Browsing;
            let episode = tc.episode;
            self.schedule(t, P_TEACHER, Action::TeacherBeat { teacher: i, episode });
            let open_at = t.plus(self.cfg.teacher_lead_minutes * MINUTE_MS);
            self.schedule(open_at, P_TEACHER, Action::OpenTicket { teacher: i, episode });
        } else {
            self.tally.skipped_arrivals += 1;
        }
        let gap = self.arrival_gap();
        self.schedule(t.plus(gap), P_TEACHER, Action::NextArrival);
        Ok(())
    }

    fn teacher_beat(&mut self, i: usize, episode: u32, t: Timestamp) -> Result<(), SimError> {
        let tc = &self.teachers[i];
        if tc.episode != episode || tc.phase == Phase::Idle {
            return Ok(());
        }
        let context = if tc.phase == Phase::Browsing {
            let roll: f64 = self.rng.teachers.random();
            match roll {
                r if r < 0.5 => ActivityContext::forum(),
                r if r < 0.75 => ActivityContext::section(),
                r if r < 0.9 => ActivityContext::other(),
                _ => ActivityContext::ide("a0"),
            }
        } else {
            ActivityContext::forum()
        };
        let result = self.engine.record_teacher_heartbeat(tc.id.clone(), t, context);
        self.observe(result.map(drop))?;
        self.schedule(
            t.plus(self.cfg.teacher_heartbeat_interval_ms),
            P_TEACHER,
            Action::TeacherBeat { teacher: i, episode },
        );
        Ok(())
    }

    fn open_ticket(&mut self, i: usize, episode: u32, t: Timestamp) -> Result<(), SimError> {
        let tc = &mut self.teachers[i];
        if tc.episode != episode || tc.phase != Phase::Browsing {
            return Ok(());
        }
        tc.phase = Phase::Engaged;
        let id = tc.id.clone();
        let result = self.engine.initiate_ticket(id, t, self.cfg.policy);
        let ticket = match &result {
            Ok(ticket) => Some(ticket.ticket_id),
            Err(_) => None,
        };
        self.observe(result.map(drop))?;
        if let Some(ticket) = ticket {
            if self.cfg.cancel_prob > 0.0 && self.rng.teachers.random_bool(self.cfg.cancel_prob) {
                let after = self.rng.teachers.random_range(0..self.cfg.search_window_ms.max(1));
                self.schedule(t.plus(after), P_CANCEL, Action::Cancel(ticket));
            }
        }
        Ok(())
    }

    fn feedback(&mut self, session: SessionId, t: Timestamp) -> Result<(), SimError> {
        let rng = &mut self.rng.behaviour;
        if rng.random_bool(0.6) {
            let message = rng.random_bool(0.5).then(|| "thank you!".to_string());
            match self.engine.record_gratitude(session, true, message, t) {
                Err(CoreError::SessionLive(_) | CoreError::AlreadyRecorded(_)) => self.observe(Ok(()))?,
                other => self.observe(other.map(drop))?,
            }
        }
        let rng = &mut self.rng.behaviour;
        if rng.random_bool(0.5) {
            let score = rng.random_range(3..=5);
            match self.engine.record_rating(session, score, None, t) {
                Err(CoreError::SessionLive(_) | CoreError::AlreadyRecorded(_)) => self.observe(Ok(()))?,
                other => self.observe(other.map(drop))?,
            }
        }
        Ok(())
    }

    fn teacher_of_ticket(&self, ticket: TicketId) -> usize {
        let id = &self.engine.state().ticket(ticket).expect("ticket exists").teacher_id;
        self.teacher_index[id]
    }

    fn wind_down(&mut self, teacher: usize, t: Timestamp, leave_now: bool) {
        let tc = &mut self.teachers[teacher];
        tc.phase = Phase::Lingering;
        let episode = tc.episode;
        let until = if leave_now { t } else { t.plus(self.cfg.teacher_linger_minutes * MINUTE_MS) };
        self.schedule(until, P_TEACHER, Action::EpisodeEnd { teacher, episode });
    }

    /// Reacts to whatever the engine emitted during the last command, then
    /// surfaces the command's own result.
    fn observe(&mut self, result: Result<(), CoreError>) -> Result<(), SimError> {
        for rec in self.engine.take_emitted() {
            let t = rec.ts;
            match rec.event {
                Event::TicketOpened { ticket, .. } => {
                    self.tally.tickets += 1;
                    self.opened_at.insert(ticket, t);
                }
                Event::NudgeSent { nudge, ticket, student, deadline } => {
                    self.tally.nudges += 1;
                    *self.nudges_per_ticket.entry(ticket).or_default() += 1;
                    self.schedule(deadline, P_TICK, Action::Tick);
                    let rng = &mut self.rng.behaviour;
                    if !rng.random_bool(self.cfg.timeout_weight) {
                        let delay = match self.cfg.response_delay {
                            ResponseDelay::Instant => 0,
                            ResponseDelay::Uniform => rng.random_range(0..=self.cfg.response_delay_max_ms),
                        };
                        let accept = rng.random_bool(self.cfg.accept_prob);
                        let student = self.student_index[&student];
                        self.schedule(t.plus(delay), P_RESPOND, Action::Respond { nudge, student, accept });
                    }
                }
                Event::NudgeResolved { outcome, .. } => match outcome {
                    NudgeOutcome::Accepted => self.tally.accepted += 1,
                    NudgeOutcome::Declined => self.tally.declined += 1,
                    NudgeOutcome::TimedOut => self.tally.timed_out += 1,
                    NudgeOutcome::Cancelled => self.tally.nudges_cancelled += 1,
                    NudgeOutcome::Pending => {}
                },
                Event::TicketMatched { ticket, .. } => {
                    self.tally.matched += 1;
                    self.tally.latencies.push(t.since(self.opened_at[&ticket]));
                    self.tally.matched_nudges += self.nudges_per_ticket.get(&ticket).copied().unwrap_or(0);
                }
                Event::TicketExhausted { ticket } => {
                    self.tally.exhausted += 1;
                    let teacher = self.teacher_of_ticket(ticket);
                    let leave = self.rng.teachers.random_bool(self.cfg.teacher_offline_after_miss);
                    self.wind_down(teacher, t, leave);
                }
                Event::TicketCancelled { ticket } => {
                    self.tally.cancelled += 1;
                    let teacher = self.teacher_of_ticket(ticket);
                    self.wind_down(teacher, t, true);
                }
                Event::SessionStarted { session, student, .. } => {
                    self.tally.sessions += 1;
                    self.session_started(session, &student, t);
                }
                Event::SessionEnded { session, .. } => {
                    let id = &self.engine.state().session(session).expect("session exists").teacher_id;
                    let teacher = self.teacher_index[id];
                    self.wind_down(teacher, t, false);
                    self.schedule(t.plus(MINUTE_MS), P_SESSION, Action::Feedback(session));
                }
                _ => {}
            }
        }
        result.map_err(SimError::from)
    }

    fn session_started(&mut self, session: SessionId, student: &StudentId, t: Timestamp) {
        let i = self.student_index[student];
        if self.cfg.dropout_base_per_day > 0.0 {
            self.resample_dropout(i, t, self.cfg.dropout_base_per_day * self.cfg.helped_multiplier);
        }
        let rng = &mut self.rng.behaviour;
        let length = minutes(rng.random_range(self.cfg.session_minutes_min..=self.cfg.session_minutes_max));
        let ender = if rng.random_bool(0.5) { Author::Teacher } else { Author::Student };
        let script = [
            (0.0, Author::Student, SessionEventKind::Join),
            (0.2, Author::Teacher, SessionEventKind::Chat),
            (0.4, Author::Student, SessionEventKind::CodeEdit),
            (0.6, Author::Teacher, SessionEventKind::CodeRun),
            (0.8, Author::Student, SessionEventKind::Chat),
        ];
        for (frac, author, kind) in script {
            let at = t.plus((length as f64 * frac) as i64);
            self.schedule(at, P_SESSION, Action::SessionAct { session, author, kind });
        }
        self.schedule(t.plus(length), P_SESSION, Action::EndSession { session, author: ender });
    }

    fn finish(self) -> (SimReport, S) {
        let mut tally = self.tally;
        tally.latencies.sort_unstable();
        let report = SimReport {
            tickets: tally.tickets,
            matched: tally.matched,
            exhausted: tally.exhausted,
            cancelled: tally.cancelled,
            nudges: tally.nudges,
            accepted: tally.accepted,
            declined: tally.declined,
            timed_out: tally.timed_out,
            nudges_cancelled: tally.nudges_cancelled,
            late_responses: tally.late_responses,
            skipped_arrivals: tally.skipped_arrivals,
            sessions: tally.sessions,
            mean_nudges_per_match: (tally.matched > 0).then(|| tally.matched_nudges as f64 / tally.matched as f64),
            match_latency_ms: LatencyQuantiles::nearest_rank(&tally.latencies),
            events: self.engine.state().seq(),
            state_hash: self.engine.state().hash(),
            event_log_path: None,
        };
        let (_, sink) = self.engine.into_parts();
        (report, sink)
    }
}

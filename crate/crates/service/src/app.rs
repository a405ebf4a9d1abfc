use std::collections::HashMap;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use teachnow_core::{CoreError, CourseConfig, Engine, EventRecord, EventSink, State, Timestamp};
use tokio::sync::broadcast;

use crate::auth::Principal;
use crate::config::TokenEntry;
use crate::error::ApiError;
use crate::stream::Notice;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

/// Wall-clock milliseconds since the Unix epoch.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as i64);
        Timestamp(ms)
    }
}

/// A clock that only moves when told to. Shared by clone.
#[derive(Debug, Default, Clone)]
pub struct ManualClock(Arc<AtomicI64>);

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self(Arc::new(AtomicI64::new(start.0)))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t.0, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: i64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.0.load(Ordering::SeqCst))
    }
}

pub(crate) type Sink = Box<dyn EventSink + Send>;

pub(crate) struct Core {
    pub engine: Engine<Sink>,
    /// Every notice so far, in seq order, for stream resumption.
    pub notices: Vec<Arc<Notice>>,
}

struct Inner {
    core: Mutex<Core>,
    clock: Box<dyn Clock>,
    tokens: HashMap<String, Principal>,
    tx: broadcast::Sender<Arc<Notice>>,
}

/// Shared service state. Every mutation goes through [`App::execute`], which
/// holds one lock for the whole command, so commands form a single order.
#[derive(Clone)]
pub struct App {
    inner: Arc<Inner>,
}

const STREAM_BUFFER: usize = 4096;

impl App {
    /// Continues from `history` (already replayed into `state`), or starts a
    /// new log with `course` when there is none. A changed course
    /// configuration is logged as a reconfiguration.
    pub fn start(
        history: &[EventRecord],
        course: CourseConfig,
        sink: Sink,
        clock: Box<dyn Clock>,
        tokens: Vec<TokenEntry>,
    ) -> Result<Self, ApiError> {
        let state = teachnow_core::replay(history).map_err(|e| ApiError::from(CoreError::Log(e)))?;
        let now = clock.now().max(state.clock());
        let mut engine = if history.is_empty() {
            Engine::new(course, sink, now)?
        } else {
            let mut engine = Engine::from_state(state, sink);
            if *engine.state().config() != course {
                engine.configure(course, now)?;
            }
            engine
        };
        let fresh = engine.take_emitted();
        let notices = history.iter().chain(&fresh).map(|r| Arc::new(Notice::route(r, engine.state()))).collect();
        let (tx, _) = broadcast::channel(STREAM_BUFFER);
        let tokens = tokens.into_iter().map(|t| (t.token, t.principal)).collect();
        Ok(Self { inner: Arc::new(Inner { core: Mutex::new(Core { engine, notices }), clock, tokens, tx }) })
    }

    pub fn principal(&self, token: &str) -> Option<Principal> {
        self.inner.tokens.get(token).cloned()
    }

    pub fn now(&self) -> Timestamp {
        self.inner.clock.now()
    }

    pub(crate) fn lock(&self) -> MutexGuard<'_, Core> {
        self.inner.core.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs one command at the current instant (never earlier than the log
    /// clock) and publishes whatever it emitted, success or not.
    pub fn execute<T>(
        &self,
        f: impl FnOnce(&mut Engine<Sink>, Timestamp) -> Result<T, CoreError>,
    ) -> Result<T, ApiError> {
        let mut core = self.lock();
        let now = self.now().max(core.engine.state().clock());
        let out = f(&mut core.engine, now);
        self.publish(&mut core);
        Ok(out?)
    }

    /// Fires due response deadlines and idle-session timeouts.
    pub fn tick(&self) -> Result<(), ApiError> {
        self.execute(|e, now| e.tick(now))
    }

    /// Read-only access to a consistent snapshot.
    pub fn read<T>(&self, f: impl FnOnce(&State) -> T) -> T {
        f(self.lock().engine.state())
    }

    /// Notices after `last_seq`, plus a receiver for everything later. Taken
    /// under the command lock so nothing falls between the two.
    pub(crate) fn subscribe(&self, last_seq: u64) -> (Vec<Arc<Notice>>, broadcast::Receiver<Arc<Notice>>) {
        let core = self.lock();
        let start = core.notices.partition_point(|n| n.seq <= last_seq);
        (core.notices[start..].to_vec(), self.inner.tx.subscribe())
    }

    fn publish(&self, core: &mut Core) {
        for record in core.engine.take_emitted() {
            let notice = Arc::new(Notice::route(&record, core.engine.state()));
            core.notices.push(notice.clone());
            // No subscribers is fine.
            let _ = self.inner.tx.send(notice);
        }
    }
}

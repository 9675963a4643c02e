//! Injectable clocks and id generators.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use uuid::Uuid;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub trait IdSource: Send + Sync {
    fn next_id(&self) -> Uuid;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RandomIds;

impl IdSource for RandomIds {
    fn next_id(&self) -> Uuid {
        Uuid::new_v4()
    }
}

/// Returns `start`, `start + step`, `start + 2*step`, ... on successive reads.
#[derive(Debug)]
pub struct SteppingClock {
    start: DateTime<Utc>,
    step: TimeDelta,
    reads: AtomicU64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step: TimeDelta) -> Self {
        Self {
            start,
            step,
            reads: AtomicU64::new(0),
        }
    }
}

impl SteppingClock {
    /// A clock that behaves as if it had already been read `reads` times.
    pub fn resumed(start: DateTime<Utc>, step: TimeDelta, reads: u64) -> Self {
        Self {
            start,
            step,
            reads: AtomicU64::new(reads),
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let n = self.reads.fetch_add(1, Ordering::SeqCst);
        self.start + self.step * n as i32
    }
}

/// Hands out `00000000-0000-0000-0000-000000000001`, `...0002`, and so on.
#[derive(Debug, Default)]
pub struct SequentialIds {
    next: AtomicU64,
}

impl SequentialIds {
    /// Continues after `issued` ids have already been handed out.
    pub fn after(issued: u64) -> Self {
        Self {
            next: AtomicU64::new(issued),
        }
    }
}

impl IdSource for SequentialIds {
    fn next_id(&self) -> Uuid {
        Uuid::from_u128(u128::from(self.next.fetch_add(1, Ordering::SeqCst)) + 1)
    }
}

#[derive(Clone)]
pub struct Sources {
    pub clock: Arc<dyn Clock>,
    pub ids: Arc<dyn IdSource>,
}

impl Sources {
    pub fn system() -> Self {
        Self {
            clock: Arc::new(SystemClock),
            ids: Arc::new(RandomIds),
        }
    }

    /// Clock starting at 2024-01-01T00:00:00Z advancing one second per read,
    /// with sequential ids.
    pub fn deterministic() -> Self {
        Self::deterministic_after(0)
    }

    /// The deterministic sources after `issued` ids and clock reads, which
    /// is where they stand once a session with `issued - 1` ideas exists.
    pub fn deterministic_after(issued: u64) -> Self {
        let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        Self {
            clock: Arc::new(SteppingClock::resumed(start, TimeDelta::seconds(1), issued)),
            ids: Arc::new(SequentialIds::after(issued)),
        }
    }
}

impl Default for Sources {
    fn default() -> Self {
        Self::system()
    }
}

impl fmt::Debug for Sources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sources").finish_non_exhaustive()
    }
}

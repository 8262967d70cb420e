//! Deterministic discrete-event kernel.
//!
//! A [`Simulation`] owns a set of entities and a future-event list. Events are
//! delivered in ascending `(time, sequence)` order, where the sequence number
//! is assigned at enqueue, so events scheduled for the same instant are
//! delivered first-in first-out.
//!
//! Every registered entity receives an [`EventTag::EntityCreation`] event
//! before anything else. When the future-event list drains, each entity that
//! is still running receives one [`EventTag::Termination`] event, after which
//! nothing more may be delivered to it.

use std::any::Any;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("invalid time value {0}: must be finite and non-negative")]
    InvalidTime(f64),
    #[error("invalid delay {0}: must be finite and non-negative")]
    InvalidDelay(f64),
    #[error("unknown destination entity {0}")]
    UnknownEntity(EntityId),
    #[error("simulation already terminated")]
    Terminated,
    #[error("no entities registered")]
    NoEntities,
    #[error("event {tag} dispatched to finished entity {entity}")]
    DispatchToFinished { entity: EntityId, tag: EventTag },
    #[error("entity {entity} received {tag} before its creation event")]
    NotCreated { entity: EntityId, tag: EventTag },
    #[error("entity {0} received a second creation event")]
    DuplicateCreation(EntityId),
    #[error("event at {event} is earlier than the clock {clock}")]
    TimeRegression { clock: f64, event: f64 },
    #[error("unknown event tag `{0}`")]
    UnknownTag(String),
}

/// Simulation time in seconds. Always finite and non-negative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn new(seconds: f64) -> Result<Self, KernelError> {
        if seconds.is_finite() && seconds >= 0.0 {
            Ok(SimTime(seconds))
        } else {
            Err(KernelError::InvalidTime(seconds))
        }
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventTag {
    EntityCreation,
    Acknowledge,
    CharacteristicSetting,
    JobSubmit,
    TaskSubmit,
    TaskComplete,
    DataFetchComplete,
    ShuffleComplete,
    Termination,
    /// Accepted and logged, never delivered.
    Pause,
    /// Accepted and logged, never delivered.
    Move,
    /// Accepted and logged, never delivered.
    Migration,
}

impl EventTag {
    pub const ALL: [EventTag; 12] = [
        EventTag::EntityCreation,
        EventTag::Acknowledge,
        EventTag::CharacteristicSetting,
        EventTag::JobSubmit,
        EventTag::TaskSubmit,
        EventTag::TaskComplete,
        EventTag::DataFetchComplete,
        EventTag::ShuffleComplete,
        EventTag::Termination,
        EventTag::Pause,
        EventTag::Move,
        EventTag::Migration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventTag::EntityCreation => "entity-creation",
            EventTag::Acknowledge => "acknowledge",
            EventTag::CharacteristicSetting => "characteristic-setting",
            EventTag::JobSubmit => "job-submit",
            EventTag::TaskSubmit => "task-submit",
            EventTag::TaskComplete => "task-complete",
            EventTag::DataFetchComplete => "data-fetch-complete",
            EventTag::ShuffleComplete => "shuffle-complete",
            EventTag::Termination => "termination",
            EventTag::Pause => "pause",
            EventTag::Move => "move",
            EventTag::Migration => "migration",
        }
    }

    fn is_inert(self) -> bool {
        matches!(self, EventTag::Pause | EventTag::Move | EventTag::Migration)
    }
}

impl fmt::Display for EventTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventTag {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| KernelError::UnknownTag(s.to_string()))
    }
}

/// A timestamped message between two entities. Immutable once enqueued.
#[derive(Clone, Debug)]
pub struct SimEvent<P> {
    time: SimTime,
    sequence: u64,
    source: Option<EntityId>,
    destination: EntityId,
    tag: EventTag,
    payload: P,
}

impl<P> SimEvent<P> {
    pub fn time(&self) -> SimTime {
        self.time
    }

    pub fn sequence(&self) -> u64 {
        self.sequence
    }

    /// `None` for events originated by the kernel itself.
    pub fn source(&self) -> Option<EntityId> {
        self.source
    }

    pub fn destination(&self) -> EntityId {
        self.destination
    }

    pub fn tag(&self) -> EventTag {
        self.tag
    }

    pub fn payload(&self) -> &P {
        &self.payload
    }

    fn key(&self) -> (SimTime, u64) {
        (self.time, self.sequence)
    }
}

// BinaryHeap is a max-heap, so the ordering is reversed.
struct Queued<P>(SimEvent<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.key() == other.0.key()
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.key().cmp(&self.0.key())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EventHandle {
    pub time: SimTime,
    pub sequence: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityState {
    Created,
    Running,
    Finished,
}

/// One dispatched event, as written to the dispatch trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub sequence: u64,
    pub source: Option<EntityId>,
    pub destination: EntityId,
    pub tag: EventTag,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},", self.time, self.sequence)?;
        match self.source {
            Some(id) => write!(f, "{id}")?,
            None => f.write_str("kernel")?,
        }
        write!(f, ",{},{}", self.destination, self.tag)
    }
}

/// The scheduling half of the kernel, handed to entity handlers.
pub struct Scheduler<P> {
    clock: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Queued<P>>,
    states: Vec<EntityState>,
    current: Option<EntityId>,
    terminated: bool,
}

impl<P> Scheduler<P> {
    fn new() -> Self {
        Self {
            clock: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            states: Vec::new(),
            current: None,
            terminated: false,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    /// The entity whose handler is currently running, if any.
    pub fn current(&self) -> Option<EntityId> {
        self.current
    }

    pub fn state(&self, id: EntityId) -> Option<EntityState> {
        self.states.get(id.0 as usize).copied()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Enqueues an event for `destination` at `now + delay`. The source is the
    /// entity currently being dispatched.
    pub fn schedule(
        &mut self,
        destination: EntityId,
        delay: f64,
        tag: EventTag,
        payload: P,
    ) -> Result<EventHandle, KernelError> {
        if self.terminated {
            return Err(KernelError::Terminated);
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(KernelError::InvalidDelay(delay));
        }
        if (destination.0 as usize) >= self.states.len() {
            return Err(KernelError::UnknownEntity(destination));
        }
        let time = SimTime::new(self.clock.0 + delay)?;
        Ok(self.push(self.current, destination, time, tag, payload))
    }

    fn push(
        &mut self,
        source: Option<EntityId>,
        destination: EntityId,
        time: SimTime,
        tag: EventTag,
        payload: P,
    ) -> EventHandle {
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Queued(SimEvent { time, sequence, source, destination, tag, payload }));
        EventHandle { time, sequence }
    }
}

/// An addressable actor in the simulation.
pub trait Entity<P>: Any {
    fn name(&self) -> &str;

    fn handle(&mut self, event: &SimEvent<P>, scheduler: &mut Scheduler<P>) -> crate::Result<()>;
}

struct Slot<P> {
    entity: Box<dyn Entity<P>>,
}

pub struct Simulation<P> {
    scheduler: Scheduler<P>,
    entities: Vec<Slot<P>>,
    trace: Option<Vec<TraceRecord>>,
}

impl<P: Default + 'static> Default for Simulation<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Default + 'static> Simulation<P> {
    pub fn new() -> Self {
        Self { scheduler: Scheduler::new(), entities: Vec::new(), trace: None }
    }

    /// Records every dispatched event; see [`Simulation::trace`].
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.take().unwrap_or_default()
    }

    /// Registers an entity and enqueues its creation event at the current clock.
    pub fn register(&mut self, entity: impl Entity<P>) -> Result<EntityId, KernelError> {
        if self.scheduler.terminated {
            return Err(KernelError::Terminated);
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(Slot { entity: Box::new(entity) });
        self.scheduler.states.push(EntityState::Created);
        let now = self.scheduler.clock;
        self.scheduler.push(None, id, now, EventTag::EntityCreation, P::default());
        Ok(id)
    }

    /// Schedules an event from outside any entity (source "kernel").
    pub fn schedule(
        &mut self,
        destination: EntityId,
        delay: f64,
        tag: EventTag,
        payload: P,
    ) -> Result<EventHandle, KernelError> {
        self.scheduler.schedule(destination, delay, tag, payload)
    }

    pub fn peek_clock(&self) -> SimTime {
        self.scheduler.clock
    }

    pub fn state(&self, id: EntityId) -> Option<EntityState> {
        self.scheduler.state(id)
    }

    pub fn entity<T: Entity<P>>(&self, id: EntityId) -> Option<&T> {
        let slot = self.entities.get(id.0 as usize)?;
        (slot.entity.as_ref() as &dyn Any).downcast_ref::<T>()
    }

    /// Runs until no events remain and every entity has been terminated.
    /// Returns the final clock value.
    pub fn run(&mut self) -> crate::Result<SimTime> {
        if self.scheduler.terminated {
            return Err(KernelError::Terminated.into());
        }
        if self.entities.is_empty() {
            return Err(KernelError::NoEntities.into());
        }
        loop {
            while let Some(Queued(event)) = self.scheduler.queue.pop() {
                self.dispatch(event)?;
            }
            let live: Vec<EntityId> = (0..self.entities.len() as u32)
                .map(EntityId)
                .filter(|id| self.scheduler.states[id.0 as usize] == EntityState::Running)
                .collect();
            if live.is_empty() {
                break;
            }
            let now = self.scheduler.clock;
            for id in live {
                self.scheduler.push(None, id, now, EventTag::Termination, P::default());
            }
        }
        self.scheduler.terminated = true;
        Ok(self.scheduler.clock)
    }

    fn dispatch(&mut self, event: SimEvent<P>) -> crate::Result<()> {
        let sched = &mut self.scheduler;
        if event.time < sched.clock {
            return Err(KernelError::TimeRegression {
                clock: sched.clock.seconds(),
                event: event.time.seconds(),
            }
            .into());
        }
        sched.clock = event.time;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                time: event.time,
                sequence: event.sequence,
                source: event.source,
                destination: event.destination,
                tag: event.tag,
            });
        }

        let dst = event.destination;
        let idx = dst.0 as usize;
        let state = sched.states[idx];
        match (state, event.tag) {
            (EntityState::Finished, tag) => {
                return Err(KernelError::DispatchToFinished { entity: dst, tag }.into())
            }
            (EntityState::Created, EventTag::EntityCreation) => {
                sched.states[idx] = EntityState::Running;
            }
            (EntityState::Created, tag) => return Err(KernelError::NotCreated { entity: dst, tag }.into()),
            (EntityState::Running, EventTag::EntityCreation) => {
                return Err(KernelError::DuplicateCreation(dst).into())
            }
            (EntityState::Running, tag) if tag.is_inert() => {
                log::debug!("t={} entity {dst}: ignoring {tag}", event.time);
                return Ok(());
            }
            (EntityState::Running, _) => {}
        }

        sched.current = Some(dst);
        let result = self.entities[idx].entity.handle(&event, sched);
        sched.current = None;
        if event.tag == EventTag::Termination {
            sched.states[idx] = EntityState::Finished;
        }
        result
    }
}

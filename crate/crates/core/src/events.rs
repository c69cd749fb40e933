//! Thread-safe publish-subscribe bus for session progress events.
//!
//! A search session publishes what it is doing; anyone who wants to watch
//! (the CLI's progress printer, a test) subscribes and receives every event
//! in publication order. Publishing never blocks on slow consumers because
//! channels are unbounded, and a dropped subscriber is silently pruned, so
//! quiet mode can simply not subscribe while the session keeps publishing.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::edit::Edit;

/// Everything a session announces while it runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Started {
        session_id: String,
        algorithm: String,
        seed: u64,
    },
    ProposalMade {
        sequence: u64,
        edit: Edit,
    },
    EditAccepted {
        sequence: u64,
        overall_after: f64,
    },
    EditRejected {
        sequence: u64,
        overall_after: f64,
    },
    StagnationTick {
        count: u32,
        k: u32,
    },
    Stopped {
        reason: String,
        final_overall: f64,
    },
}

/// The bus. Safe for concurrent publishers and any number of subscribers;
/// each subscriber sees the full event stream in publication order.
#[derive(Default)]
pub struct EventBus {
    subscribers: Mutex<Vec<Sender<SessionEvent>>>,
}

impl EventBus {
    pub fn new() -> EventBus {
        EventBus::default()
    }

    /// Registers a new subscriber and returns its receiving end. Events
    /// published before the call are not replayed.
    pub fn subscribe(&self) -> Receiver<SessionEvent> {
        let (tx, rx) = channel();
        self.subscribers.lock().expect("bus lock").push(tx);
        rx
    }

    /// Delivers an event to every live subscriber, pruning dropped ones.
    pub fn publish(&self, event: SessionEvent) {
        let mut subs = self.subscribers.lock().expect("bus lock");
        subs.retain(|tx| tx.send(event.clone()).is_ok());
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers.lock().expect("bus lock").len()
    }
}

//! Bounded in-process task broker.
//!
//! Requests that miss the L1 cache are published here and picked up by
//! worker threads. The queue is bounded: when it is full the publisher gets
//! `QueueFull` immediately instead of building an invisible backlog. Each
//! task carries its own reply channel plus a correlation id for logs.

use crate::backend::{GenerationOutput, GenerationRequest};
use crate::error::ServeError;
use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};

pub struct QueuedTask {
    pub request: GenerationRequest,
    pub reply: Sender<Result<GenerationOutput, ServeError>>,
    pub correlation_id: u64,
    pub enqueued_s: f64,
}

pub struct Broker {
    tx: std::sync::Mutex<Option<Sender<QueuedTask>>>,
    rx: Receiver<QueuedTask>,
}

impl Broker {
    pub fn new(capacity: usize) -> Self {
        let (tx, rx) = bounded(capacity.max(1));
        Self { tx: std::sync::Mutex::new(Some(tx)), rx }
    }

    pub fn publish(&self, task: QueuedTask) -> Result<(), ServeError> {
        let guard = self.tx.lock().unwrap();
        let tx = guard
            .as_ref()
            .ok_or(ServeError::Internal { detail: "broker closed".into() })?;
        match tx.try_send(task) {
            Ok(()) => Ok(()),
            Err(TrySendError::Full(_)) => Err(ServeError::QueueFull),
            Err(TrySendError::Disconnected(_)) => {
                Err(ServeError::Internal { detail: "broker disconnected".into() })
            }
        }
    }

    pub fn receiver(&self) -> Receiver<QueuedTask> {
        self.rx.clone()
    }

    pub fn depth(&self) -> usize {
        self.rx.len()
    }

    /// Close the queue: workers drain what is left and exit.
    pub fn close(&self) {
        self.tx.lock().unwrap().take();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(reply: Sender<Result<GenerationOutput, ServeError>>) -> QueuedTask {
        QueuedTask {
            request: GenerationRequest {
                model_id: "m".into(),
                params: serde_json::Value::Null,
                prompt: "p".into(),
            },
            reply,
            correlation_id: 1,
            enqueued_s: 0.0,
        }
    }

    #[test]
    fn overflow_reports_queue_full() {
        let broker = Broker::new(2);
        let (tx, _rx) = crossbeam_channel::bounded(1);
        broker.publish(task(tx.clone())).unwrap();
        broker.publish(task(tx.clone())).unwrap();
        assert_eq!(broker.depth(), 2);
        assert!(matches!(broker.publish(task(tx)), Err(ServeError::QueueFull)));
    }

    #[test]
    fn close_disconnects_publishers_and_drains_workers() {
        let broker = Broker::new(2);
        let (tx, _rx) = crossbeam_channel::bounded(1);
        broker.publish(task(tx.clone())).unwrap();
        broker.close();
        assert!(matches!(broker.publish(task(tx)), Err(ServeError::Internal { .. })));
        let rx = broker.receiver();
        assert!(rx.recv().is_ok(), "queued task still drains");
        assert!(rx.recv().is_err(), "then the channel closes");
    }
}

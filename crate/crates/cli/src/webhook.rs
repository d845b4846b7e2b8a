//! Fire-and-forget alert delivery over HTTP.
//!
//! Events are queued to a background worker and POSTed as
//! `application/json`. Each delivery is retried once; failures are logged and
//! counted, never propagated. A full queue drops the event.

use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use threatwatch_core::AlertEvent;

const QUEUE_DEPTH: usize = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeliveryStats {
    pub delivered: u64,
    pub failed: u64,
    pub dropped: u64,
}

pub struct WebhookNotifier {
    url: String,
    tx: Option<SyncSender<String>>,
    done: Receiver<DeliveryStats>,
    dropped: u64,
}

impl WebhookNotifier {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let url = url.into();
        let (tx, rx) = mpsc::sync_channel::<String>(QUEUE_DEPTH);
        let (done_tx, done) = mpsc::channel();
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(timeout)
            .timeout(timeout)
            .build();
        let target = url.clone();
        thread::Builder::new()
            .name("webhook".into())
            .spawn(move || {
                let mut stats = DeliveryStats::default();
                for body in rx {
                    if deliver(&agent, &target, &body) {
                        stats.delivered += 1;
                    } else {
                        stats.failed += 1;
                    }
                }
                let _ = done_tx.send(stats);
            })
            .expect("spawn webhook worker");
        Self {
            url,
            tx: Some(tx),
            done,
            dropped: 0,
        }
    }

    /// Queues `event` without blocking.
    pub fn notify(&mut self, event: &AlertEvent) {
        let Some(tx) = &self.tx else { return };
        match tx.try_send(event.to_json_line()) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) => {
                self.dropped += 1;
                warn!("webhook queue full, dropping {:?} event {}", event.kind, event.alert_id);
            }
            Err(TrySendError::Disconnected(_)) => {
                self.dropped += 1;
            }
        }
    }

    /// Stops accepting events and waits up to `grace` for queued deliveries.
    pub fn finish(mut self, grace: Duration) -> DeliveryStats {
        self.tx.take();
        let mut stats = match self.done.recv_timeout(grace) {
            Ok(stats) => stats,
            Err(_) => {
                warn!("webhook {}: deliveries still pending, abandoning", self.url);
                DeliveryStats::default()
            }
        };
        stats.dropped += self.dropped;
        stats
    }
}

fn deliver(agent: &ureq::Agent, url: &str, body: &str) -> bool {
    for attempt in 1..=2 {
        match agent
            .post(url)
            .set("Content-Type", "application/json")
            .send_string(body)
        {
            Ok(_) => {
                debug!("webhook delivered on attempt {attempt}");
                return true;
            }
            Err(e) => warn!("webhook {url} attempt {attempt} failed: {e}"),
        }
    }
    false
}

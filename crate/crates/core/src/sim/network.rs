//! Event-scheduled message delivery with latency and loss.
//!
//! Every message travels as its wire encoding and is decoded on delivery.

use crate::ids::{MsspId, ScId};
use crate::protocol::{decode, encode, Message};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Sc(ScId),
    Mssp(MsspId),
    Cloud,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Sc(s) => s.fmt(f),
            Endpoint::Mssp(m) => m.fmt(f),
            Endpoint::Cloud => f.write_str("cloud"),
        }
    }
}

#[derive(Debug)]
struct InFlight {
    deliver_at: f64,
    seq: u64,
    from: Endpoint,
    to: Endpoint,
    bytes: Vec<u8>,
}

impl PartialEq for InFlight {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for InFlight {}
impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for InFlight {
    // Reversed so the max-heap pops the earliest delivery first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.deliver_at.total_cmp(&self.deliver_at).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub from: Endpoint,
    pub to: Endpoint,
    pub message: Message,
}

/// The result of `Network::send`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendReceipt {
    pub seq: u64,
    pub lost: bool,
    pub bytes: usize,
}

#[derive(Debug)]
pub struct Network {
    latency: f64,
    loss: f64,
    queue: BinaryHeap<InFlight>,
    next_seq: u64,
}

impl Network {
    pub fn new(latency: f64, loss: f64) -> Self {
        Self { latency, loss, queue: BinaryHeap::new(), next_seq: 0 }
    }

    /// Queues a message. Links that involve an SC are lossy; MSSP-to-MSSP and
    /// cloud links are not. One uniform draw is consumed per lossy send.
    pub fn send<R: Rng + ?Sized>(
        &mut self,
        from: Endpoint,
        to: Endpoint,
        msg: &Message,
        now: f64,
        rng: &mut R,
    ) -> SendReceipt {
        let seq = self.next_seq;
        self.next_seq += 1;
        let bytes = encode(msg);
        let lossy = matches!(from, Endpoint::Sc(_)) || matches!(to, Endpoint::Sc(_));
        let lost = lossy && rng.random::<f64>() < self.loss;
        let receipt = SendReceipt { seq, lost, bytes: bytes.len() };
        if !lost {
            self.queue.push(InFlight { deliver_at: now + self.latency, seq, from, to, bytes });
        }
        receipt
    }

    /// Removes and decodes every message due by `now`, in delivery order.
    pub fn deliver_due(&mut self, now: f64) -> Vec<Delivery> {
        let mut out = Vec::new();
        while self.queue.peek().is_some_and(|m| m.deliver_at <= now + 1e-9) {
            let m = self.queue.pop().expect("peeked");
            let message = decode(&m.bytes).expect("locally encoded messages decode");
            out.push(Delivery { from: m.from, to: m.to, message });
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}

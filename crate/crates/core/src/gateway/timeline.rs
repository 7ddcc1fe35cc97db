//! Concurrent ingestion queue feeding an append-only fused timeline.
//!
//! Producers call [`Gateway::ingest`] from any thread. Packets are mapped to
//! unified time on arrival and held in a reorder buffer; [`Gateway::flush`]
//! commits everything older than the reordering horizon in
//! (unified_ts, source_id, arrival seq) order. A packet that arrives after its
//! slot has been committed is dropped and counted.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Mutex;

use super::clock::ClockRegistry;
use super::packet::{GazeRecord, Modality, Payload, PerceptionEvent, SensorPacket};
use super::GatewayError;
use crate::Millis;

pub const REORDER_HORIZON_MS: Millis = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRecord {
    pub ts_ms: Millis,
    pub source: String,
    pub modality: Modality,
    pub payload: Payload,
}

/// Ordered, append-only view of everything the gateway has committed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedTimeline {
    records: Vec<TimelineRecord>,
}

impl FusedTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append one record; rejects anything that would break ordering.
    pub fn append(&mut self, rec: TimelineRecord) -> Result<(), GatewayError> {
        if let Some(last) = self.records.last() {
            if rec.ts_ms < last.ts_ms {
                return Err(GatewayError::Late {
                    source_id: rec.source,
                    ts: rec.ts_ms,
                    watermark: last.ts_ms,
                });
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[TimelineRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TimelineRecord> {
        self.records.iter()
    }

    pub fn of_modality(&self, m: Modality) -> impl Iterator<Item = &TimelineRecord> {
        self.records.iter().filter(move |r| r.modality == m)
    }

    /// Records with `from <= ts < to` (binary search on the sorted log).
    pub fn range(&self, from: Millis, to: Millis) -> &[TimelineRecord] {
        let a = self.records.partition_point(|r| r.ts_ms < from);
        let b = self.records.partition_point(|r| r.ts_ms < to);
        &self.records[a..b.max(a)]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestMetrics {
    pub accepted: u64,
    pub rejected: BTreeMap<String, u64>,
    pub late_dropped: u64,
    pub committed: u64,
}

/// What the producer gets back for an accepted packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub seq: u64,
    pub unified_ts: Millis,
}

#[derive(Debug)]
struct Pending {
    ts: Millis,
    seq: u64,
    record: TimelineRecord,
}

#[derive(Debug, Default)]
struct State {
    pending: Vec<Pending>,
    timeline: FusedTimeline,
    next_seq: u64,
    high_water: Option<Millis>,
    /// Greatest unified timestamp already committed.
    watermark: Option<Millis>,
    metrics: IngestMetrics,
}

pub struct Gateway {
    clocks: ClockRegistry,
    state: Mutex<State>,
}

impl Gateway {
    pub fn new(clocks: ClockRegistry) -> Self {
        Self {
            clocks,
            state: Mutex::new(State::default()),
        }
    }

    pub fn clocks(&self) -> &ClockRegistry {
        &self.clocks
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Validate, synchronize and queue one packet. Safe under concurrent
    /// producers; each accepted packet is queued exactly once.
    pub fn ingest(&self, packet: SensorPacket) -> Result<Ack, GatewayError> {
        let checked = self.check(&packet);
        let mut st = self.lock();
        let ts = match checked {
            Ok(ts) => ts,
            Err(e) => {
                let key = match &e {
                    GatewayError::UnknownSource(_) => "unknown_source".to_string(),
                    GatewayError::Rejected(r) => r.clone(),
                    other => other.to_string(),
                };
                *st.metrics.rejected.entry(key).or_insert(0) += 1;
                return Err(e);
            }
        };
        if let Some(w) = st.watermark {
            if ts < w {
                st.metrics.late_dropped += 1;
                return Err(GatewayError::Late {
                    source_id: packet.source_id,
                    ts,
                    watermark: w,
                });
            }
        }
        let seq = st.next_seq;
        st.next_seq += 1;
        st.metrics.accepted += 1;
        st.high_water = Some(st.high_water.map_or(ts, |h| h.max(ts)));
        let SensorPacket {
            source_id,
            modality,
            mut payload,
            ..
        } = packet;
        retime(&mut payload, ts);
        st.pending.push(Pending {
            ts,
            seq,
            record: TimelineRecord {
                ts_ms: ts,
                source: source_id,
                modality,
                payload,
            },
        });
        Ok(Ack { seq, unified_ts: ts })
    }

    fn check(&self, packet: &SensorPacket) -> Result<Millis, GatewayError> {
        if packet.payload.modality() != packet.modality {
            return Err(GatewayError::Rejected("modality_mismatch".into()));
        }
        packet
            .payload
            .check()
            .map_err(|_| GatewayError::Rejected("malformed_payload".into()))?;
        self.clocks.synchronize(&packet.source_id, packet.device_timestamp)
    }

    /// Commit queued records older than the reordering horizon.
    pub fn flush(&self) -> usize {
        let mut st = self.lock();
        match st.high_water {
            Some(h) => commit(&mut st, Some(h - REORDER_HORIZON_MS)),
            None => 0,
        }
    }

    /// Commit everything queued (end of stream).
    pub fn flush_all(&self) -> usize {
        commit(&mut self.lock(), None)
    }

    pub fn pending(&self) -> usize {
        self.lock().pending.len()
    }

    pub fn metrics(&self) -> IngestMetrics {
        self.lock().metrics.clone()
    }

    /// Immutable snapshot of the committed timeline.
    pub fn snapshot(&self) -> FusedTimeline {
        self.lock().timeline.clone()
    }

    /// Hand over the committed timeline, leaving an empty one behind.
    pub fn take_timeline(&self) -> FusedTimeline {
        std::mem::take(&mut self.lock().timeline)
    }
}

fn commit(st: &mut State, upto: Option<Millis>) -> usize {
    let mut ready: Vec<Pending> = Vec::new();
    let mut keep = Vec::new();
    for p in st.pending.drain(..) {
        if upto.map_or(true, |u| p.ts <= u) {
            ready.push(p);
        } else {
            keep.push(p);
        }
    }
    st.pending = keep;
    ready.sort_by(|a, b| {
        a.ts.cmp(&b.ts)
            .then_with(|| a.record.source.cmp(&b.record.source))
            .then(a.seq.cmp(&b.seq))
    });
    let n = ready.len();
    for p in ready {
        st.watermark = Some(p.ts);
        st.timeline
            .append(p.record)
            .expect("commit order is nondecreasing by construction");
    }
    st.metrics.committed += n as u64;
    n
}

/// Rewrite device-clock timestamps embedded in payloads to unified time.
fn retime(payload: &mut Payload, ts: Millis) {
    match payload {
        Payload::Pressure(f) => f.timestamp = ts as f64,
        Payload::Physio(p) => p.timestamp = ts,
        Payload::Ambient(a) => a.timestamp = ts,
        Payload::Gaze(GazeRecord::Sample(g)) => g.timestamp = ts,
        Payload::Gaze(GazeRecord::Blink(b)) => b.timestamp = ts,
        Payload::Perception(PerceptionEvent::Action(a)) => a.timestamp = ts,
        Payload::Perception(_) | Payload::Voice(_) => {}
    }
}

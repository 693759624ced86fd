//! Line-delimited JSON record of everything a run did.
//!
//! The digest is SHA-256 over the exact bytes `write_jsonl` emits, so two runs
//! agree on the digest exactly when their logs are identical.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::AttackKind;
use crate::basestation::VerdictClass;
use crate::error::Error;
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Unicast failed on every attempt.
    LinkRetries,
    QueueOverflow,
    /// No parent at the node holding the packet.
    Detached,
    HopLimit,
    /// Second rank inconsistency on the same packet.
    Loop,
    /// Discarded by a blackhole attacker.
    Blackhole,
    /// Held by a node at the moment it was revoked.
    Revoked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntOutcome {
    Delivered,
    /// Lost to link failure, queue overflow or revocation of its holder.
    Lost,
    /// Timed out in a buffer at a node without a route.
    Expired,
    /// Still travelling when the run ended.
    InFlight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// Full configuration as `key = value` text.
    pub config: String,
    pub node_count: usize,
    pub seed: u64,
    pub root: NodeId,
    pub attack_kind: AttackKind,
    pub attackers: Vec<NodeId>,
    pub attack_start: Option<f64>,
    /// Topological neighbours of each attacker, root and other attackers excluded.
    pub attacker_neighbors: Vec<Vec<NodeId>>,
    pub alpha: f64,
    pub slot_seconds: f64,
    pub sim_duration: f64,
    pub measure_start: f64,
    pub defense: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum Record {
    Meta(RunMeta),
    Sent {
        id: u64,
        src: NodeId,
        time: f64,
    },
    Delivered {
        id: u64,
        time: f64,
        hops: u32,
    },
    Dropped {
        id: u64,
        time: f64,
        node: NodeId,
        reason: DropReason,
    },
    /// A neighbour scored above the threshold.
    Flag {
        slot: u32,
        observer: NodeId,
        suspect: NodeId,
        eta: f64,
        tau: f64,
    },
    /// Number of evaluations in this slot that could have raised a flag on a
    /// non-attacker (past bootstrap and warm-up, outside refractory).
    Assessed {
        slot: u32,
        observer: NodeId,
        honest: u32,
    },
    ParentChange {
        time: f64,
        node: NodeId,
        old: Option<NodeId>,
        new: Option<NodeId>,
        old_tau: f64,
    },
    AntSpawned {
        time: f64,
        suspect: NodeId,
        reporter: NodeId,
    },
    AntDelivered {
        time: f64,
        slot: u32,
        suspect: NodeId,
        reporter: NodeId,
    },
    AntFinal {
        time: f64,
        suspect: NodeId,
        reporter: NodeId,
        outcome: AntOutcome,
        unicast: u32,
        broadcast: u32,
    },
    Verdict {
        slot: u32,
        suspect: NodeId,
        verdict: VerdictClass,
    },
    Revoked {
        time: f64,
        node: NodeId,
    },
    AttackOnset {
        time: f64,
        attackers: Vec<NodeId>,
    },
    /// Frames first put on the air during one slot, by class.
    SlotStats {
        slot: u32,
        data: u32,
        beacon: u32,
        hello: u32,
        ant: u32,
        notice: u32,
        spawn: u32,
    },
    End {
        time: f64,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<Record>,
}

impl RunLog {
    pub fn new() -> Self {
        RunLog::default()
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn meta(&self) -> Option<&RunMeta> {
        self.records.iter().find_map(|r| match r {
            Record::Meta(m) => Some(m),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, Error> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| Error::Log {
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(RunLog { records })
    }

    /// Hex SHA-256 of the serialized log.
    pub fn digest(&self) -> String {
        struct HashWriter(Sha256);
        impl Write for HashWriter {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.update(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let mut h = HashWriter(Sha256::new());
        self.write_jsonl(&mut h).expect("hashing cannot fail");
        hex::encode(h.0.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunLog {
        let mut log = RunLog::new();
        log.push(Record::Sent {
            id: 1,
            src: NodeId(3),
            time: 0.1 + 0.2,
        });
        log.push(Record::Verdict {
            slot: 4,
            suspect: NodeId(3),
            verdict: VerdictClass::CompromisedAnt { culprit: NodeId(8) },
        });
        log.push(Record::Dropped {
            id: 1,
            time: 1.0 / 3.0,
            node: NodeId(3),
            reason: DropReason::Blackhole,
        });
        log
    }

    #[test]
    fn round_trip_is_exact() {
        let log = sample();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let back = RunLog::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.digest(), log.digest());
    }

    #[test]
    fn digest_changes_with_content() {
        let a = sample();
        let mut b = sample();
        b.push(Record::End { time: 5.0 });
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn malformed_line_is_located() {
        let err = RunLog::read_jsonl("{\"t\":\"end\",\"time\":1}\nnot json\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Log { line: 2, .. }));
    }
}

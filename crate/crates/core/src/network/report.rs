use std::path::Path;

use serde::Serialize;

use crate::blockchain::{KeyRegistry, Ledger, NodeId};
use crate::nonce::NetworkFeatures;
use crate::regressors::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RoundOutcome {
    /// Votes still outstanding.
    Pending,
    Committed { index: u64 },
    Rejected { reason: String },
    Cached,
}

/// One mining attempt by one partition group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: u64,
    pub time_ms: u64,
    pub miner: NodeId,
    pub coordinator: NodeId,
    pub group: Vec<NodeId>,
    pub n_txs: usize,
    pub telemetry: NetworkFeatures,
    pub nonce: u64,
    pub prediction_mbps: f64,
    pub duplicate_nonce: bool,
    /// Nodes whose approval counted, the miner included.
    pub approvers: Vec<NodeId>,
    pub rejections: usize,
    pub quorum_needed: usize,
    /// Nodes reachable from the miner when the round was decided.
    pub reachable: usize,
    #[serde(flatten)]
    pub outcome: RoundOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub role: super::Role,
    pub up: bool,
    pub ledger_len: usize,
    pub tip_hash: String,
    pub pending_txs: usize,
    pub cached_blocks: usize,
    pub ledger_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub n_nodes: u32,
    pub master_id: u32,
    pub seed: u64,
    pub model_kind: ModelKind,
    pub rounds_run: u64,
    pub committed: usize,
    pub rejected: usize,
    pub cached: usize,
    pub duplicate_nonces: usize,
    /// Every proposed nonce in proposal order.
    pub nonce_stream: Vec<u64>,
    pub nonce_rate_pct: Option<f64>,
    pub nonce_entropy: Option<f64>,
    pub all_valid: bool,
    pub converged: bool,
    pub nodes: Vec<NodeSummary>,
    pub rounds: Vec<RoundRecord>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub time_ms: u64,
    pub event_kind: String,
    pub sender: Option<NodeId>,
    pub receiver: Option<NodeId>,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: SimReport,
    pub ledgers: Vec<Ledger>,
    pub trace: Vec<TraceEvent>,
    pub registry: KeyRegistry,
}

impl SimOutput {
    pub fn trace_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for ev in &self.trace {
            w.serialize(ev).expect("trace row serializes");
        }
        if self.trace.is_empty() {
            w.write_record(["time_ms", "event_kind", "sender", "receiver", "detail"])
                .expect("header");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Writes `report.json`, `node_<id>.jsonl`, `trace.csv` and
    /// `public_keys.json` into `dir`, creating it if needed.
    pub fn write_to_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report.to_json() + "\n")?;
        for (i, l) in self.ledgers.iter().enumerate() {
            l.save_jsonl(&dir.join(format!("node_{i}.jsonl")))?;
        }
        std::fs::write(dir.join("trace.csv"), self.trace_csv())?;
        std::fs::write(dir.join("public_keys.json"), self.registry.to_json() + "\n")?;
        Ok(())
    }
}

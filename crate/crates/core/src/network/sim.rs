use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, DuplicatePolicy, FailureKind, LinkParams, SimConfig};
use super::report::{NodeSummary, RoundOutcome, RoundRecord, SimOutput, SimReport, TraceEvent};
use crate::blockchain::{
    build_candidate_block, keygen, validate_block, verify_chain, Block, KeyRegistry, Ledger, NodeId, NodeKeys,
    PriorityClass, SmartEnergyContract, Transaction, Violation,
};
use crate::dataset::generate_synthetic;
use crate::nonce::{derive_nonce, screen_duplicates, NetworkFeatures, NonceWindow, Screening};
use crate::randomness::{randomness_rate, shannon_entropy};
use crate::regressors::{fit, FittedModel};
use crate::rng::{self, streams, SimRng};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("training the nonce model failed: {0}")]
    Training(String),
    #[error("no pending transactions")]
    NoPendingTransactions,
    #[error("nonce derivation failed: {0}")]
    Nonce(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum SubmitError {
    #[error("unknown contract {0}")]
    UnknownContract(u64),
    #[error("producer and consumer are the same party")]
    SameParty,
    #[error("contract {0} does not cover this producer/consumer pair")]
    ContractMismatch(u64),
    #[error("energy_kwh {0} must be finite and > 0")]
    InvalidEnergy(f64),
    #[error("no base station is up")]
    NoStation,
}

/// Message kinds exchanged on the control plane, as named in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    EnergyTradingRequest,
    TelemetryReport,
    CandidateBlockProposal,
    Vote,
    Commit,
    LedgerSyncRequest,
    LedgerSyncResponse,
}

impl MessageKind {
    fn name(self) -> &'static str {
        match self {
            Self::EnergyTradingRequest => "energy_trading_request",
            Self::TelemetryReport => "telemetry_report",
            Self::CandidateBlockProposal => "candidate_block_proposal",
            Self::Vote => "vote",
            Self::Commit => "commit",
            Self::LedgerSyncRequest => "ledger_sync_request",
            Self::LedgerSyncResponse => "ledger_sync_response",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Master,
    Slave,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingTx {
    pub tx: Transaction,
    pub priority: PriorityClass,
}

#[derive(Debug, Clone)]
pub struct BaseStationNode {
    pub id: NodeId,
    pub role: Role,
    keys: NodeKeys,
    pub ledger: Ledger,
    pub pending: VecDeque<PendingTx>,
    /// Blocks mined while the node's partition lacked quorum.
    pub cached_blocks: Vec<Block>,
    pub nonce_window: NonceWindow,
}

impl BaseStationNode {
    /// Block a new candidate must extend: the last cached block, else the
    /// ledger tip.
    pub fn validation_tip(&self) -> &Block {
        self.cached_blocks
            .last()
            .or_else(|| self.ledger.tip())
            .expect("ledger holds genesis")
    }

    fn oldest_pending(&self) -> Option<(u64, u128)> {
        self.pending.iter().map(|p| (p.tx.created_at_ms, p.tx.tx_id)).min()
    }

    /// Removes up to `max` transactions: critical ones first, FIFO within
    /// each class.
    fn take_batch(&mut self, max: usize) -> Vec<PendingTx> {
        let (mut queue, normal): (Vec<PendingTx>, Vec<PendingTx>) =
            self.pending.drain(..).partition(|p| p.priority == PriorityClass::Critical);
        queue.extend(normal);
        let rest = queue.split_off(max.min(queue.len()));
        self.pending = rest.into();
        queue
    }

    fn requeue_front(&mut self, txs: Vec<PendingTx>) {
        for p in txs.into_iter().rev() {
            self.pending.push_front(p);
        }
    }
}

/// Samples one telemetry reading for a link.
pub fn telemetry_sample<R: Rng>(link: &LinkParams, rng: &mut R) -> NetworkFeatures {
    let noise = Normal::new(0.0, link.jitter_sigma_ms).expect("validated sigma");
    let delay_ms = link.base_delay_ms + noise.sample(rng).abs();
    let jitter_ms = noise.sample(rng).abs();
    // Percentage of 100 probes lost, i.e. the lost-probe count itself.
    let lost = Binomial::new(100, link.loss_prob).expect("validated loss").sample(rng);
    NetworkFeatures {
        delay_ms,
        jitter_ms,
        loss_pct: lost as f64,
    }
}

#[derive(Debug, Clone)]
enum Msg {
    Proposal { round: usize, block: Box<Block> },
    Vote { round: usize, approve: bool, violations: Vec<Violation> },
}

#[derive(Debug, Clone)]
enum Event {
    Failure(FailureKind),
    Deliver { from: NodeId, to: NodeId, msg: Msg },
    VoteTimeout { round: usize },
}

struct InFlight {
    miner: NodeId,
    block: Block,
    txs: Vec<PendingTx>,
    peers: usize,
    replies: usize,
    approvals: BTreeSet<NodeId>,
    rejections: BTreeMap<NodeId, Vec<Violation>>,
}

pub struct Simulation {
    cfg: SimConfig,
    model: Arc<FittedModel>,
    contracts: BTreeMap<u64, SmartEnergyContract>,
    nodes: Vec<BaseStationNode>,
    registry: KeyRegistry,
    up: Vec<bool>,
    label: Vec<u64>,
    next_label: u64,
    now: u64,
    tick: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Event>,
    in_flight: BTreeMap<usize, InFlight>,
    rounds: Vec<RoundRecord>,
    trace: Vec<TraceEvent>,
    telemetry_rng: SimRng,
    network_rng: SimRng,
    workload_rng: SimRng,
    tx_salt: u64,
    tx_counter: u64,
    committed: usize,
    rejected: usize,
    cached: usize,
    duplicates: usize,
}

/// Trains the configured nonce model on the configured synthetic data.
pub fn train_model(cfg: &SimConfig) -> Result<FittedModel, SimError> {
    let ds = generate_synthetic(&cfg.training).map_err(|e| SimError::Training(e.to_string()))?;
    fit(&cfg.model_spec, &ds).map_err(|e| SimError::Training(e.to_string()))
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let model = Arc::new(train_model(&cfg)?);
        Self::with_model(cfg, model)
    }

    /// Builds the world around an already trained model, shared by all nodes.
    pub fn with_model(cfg: SimConfig, model: Arc<FittedModel>) -> Result<Self, SimError> {
        cfg.validate()?;
        let n = cfg.n_nodes as usize;
        let mut key_rng = rng::stream(cfg.seed, streams::KEYS);
        let keys: Vec<NodeKeys> = (0..n).map(|_| keygen(key_rng.next_u64())).collect();
        let mut registry = KeyRegistry::default();
        for (i, k) in keys.iter().enumerate() {
            registry.insert(NodeId(i as u32), k.public());
        }
        let master = NodeId(cfg.master_id);
        let genesis = Block::genesis(master, &keys[cfg.master_id as usize], cfg.model_spec.kind());
        let nodes = keys
            .into_iter()
            .enumerate()
            .map(|(i, keys)| BaseStationNode {
                id: NodeId(i as u32),
                role: if i as u32 == cfg.master_id { Role::Master } else { Role::Slave },
                keys,
                ledger: Ledger::new(genesis.clone()),
                pending: VecDeque::new(),
                cached_blocks: Vec::new(),
                nonce_window: NonceWindow::new(cfg.nonce_window),
            })
            .collect();
        let mut workload_rng = rng::stream(cfg.seed, streams::WORKLOAD);
        let tx_salt = workload_rng.next_u64();
        let mut sim = Self {
            contracts: cfg.contracts.iter().map(|c| (c.contract_id, c.clone())).collect(),
            model,
            nodes,
            registry,
            up: vec![true; n],
            label: vec![0; n],
            next_label: 1,
            now: 0,
            tick: 0,
            seq: 0,
            queue: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            rounds: Vec::new(),
            trace: Vec::new(),
            telemetry_rng: rng::stream(cfg.seed, streams::TELEMETRY),
            network_rng: rng::stream(cfg.seed, streams::NETWORK),
            workload_rng,
            tx_salt,
            tx_counter: 0,
            committed: 0,
            rejected: 0,
            cached: 0,
            duplicates: 0,
            cfg,
        };
        for ev in sim.cfg.failure_schedule.clone() {
            sim.schedule(ev.at_ms, Event::Failure(ev.kind));
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Arc<FittedModel> {
        &self.model
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn nodes(&self) -> &[BaseStationNode] {
        &self.nodes
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn is_up(&self, node: NodeId) -> bool {
        self.up[node.0 as usize]
    }

    pub fn reachable(&self, a: NodeId, b: NodeId) -> bool {
        let (a, b) = (a.0 as usize, b.0 as usize);
        self.up[a] && self.up[b] && self.label[a] == self.label[b]
    }

    /// Mutually reachable sets of up nodes, ordered by lowest member.
    pub fn groups(&self) -> Vec<Vec<NodeId>> {
        let mut by_label: BTreeMap<u64, Vec<NodeId>> = BTreeMap::new();
        for i in 0..self.nodes.len() {
            if self.up[i] {
                by_label.entry(self.label[i]).or_default().push(NodeId(i as u32));
            }
        }
        let mut groups: Vec<Vec<NodeId>> = by_label.into_values().collect();
        groups.sort_by_key(|g| g[0]);
        groups
    }

    pub fn quorum_needed(&self) -> usize {
        self.cfg.quorum.needed(self.up.iter().filter(|&&u| u).count())
    }

    /// The master when it is in `group`, otherwise the group's lowest id.
    pub fn coordinator(&self, group: &[NodeId]) -> NodeId {
        let master = NodeId(self.cfg.master_id);
        if group.contains(&master) {
            master
        } else {
            group[0]
        }
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        self.queue.insert((at, self.seq), ev);
        self.seq += 1;
    }

    fn log(&mut self, kind: &str, sender: Option<NodeId>, receiver: Option<NodeId>, detail: String) {
        self.trace.push(TraceEvent {
            time_ms: self.now,
            event_kind: kind.to_string(),
            sender,
            receiver,
            detail,
        });
    }

    fn priority_of(&self, contract_id: u64) -> PriorityClass {
        self.contracts
            .get(&contract_id)
            .map_or(PriorityClass::Normal, |c| c.priority_class)
    }

    /// Queues a trading request at the producer's home station
    /// (`producer_id mod n_nodes`, or the lowest-id station that is up).
    pub fn submit_trading_request(
        &mut self,
        consumer_id: u32,
        producer_id: u32,
        energy_kwh: f64,
        contract_id: u64,
    ) -> Result<(NodeId, u128), SubmitError> {
        let contract = self
            .contracts
            .get(&contract_id)
            .ok_or(SubmitError::UnknownContract(contract_id))?;
        if producer_id == consumer_id {
            return Err(SubmitError::SameParty);
        }
        if (contract.producer_id, contract.consumer_id) != (producer_id, consumer_id) {
            return Err(SubmitError::ContractMismatch(contract_id));
        }
        if !(energy_kwh.is_finite() && energy_kwh > 0.0) {
            return Err(SubmitError::InvalidEnergy(energy_kwh));
        }
        let home = (producer_id % self.cfg.n_nodes) as usize;
        let station = if self.up[home] {
            home
        } else {
            self.up.iter().position(|&u| u).ok_or(SubmitError::NoStation)?
        };
        self.tx_counter += 1;
        let tx = Transaction {
            tx_id: ((self.tx_salt as u128) << 64) | self.tx_counter as u128,
            producer_id,
            consumer_id,
            energy_kwh,
            unit_price: contract.unit_price,
            contract_id,
            created_at_ms: self.now,
        };
        let priority = contract.priority_class;
        let detail = format!(
            "tx={:032x} contract={contract_id} kwh={energy_kwh} price={}",
            tx.tx_id,
            tx.total_price()
        );
        let tx_id = tx.tx_id;
        let station = NodeId(station as u32);
        self.nodes[station.0 as usize].pending.push_back(PendingTx { tx, priority });
        self.log(MessageKind::EnergyTradingRequest.name(), None, Some(station), detail);
        Ok((station, tx_id))
    }

    /// Submits the configured number of random requests under random contracts.
    pub fn submit_workload(&mut self) {
        let w = self.cfg.workload.clone();
        let ids: Vec<u64> = self.contracts.keys().copied().collect();
        for _ in 0..w.txs_per_round {
            let id = ids[self.workload_rng.random_range(0..ids.len())];
            let energy = if w.energy_kwh_min < w.energy_kwh_max {
                self.workload_rng.random_range(w.energy_kwh_min..w.energy_kwh_max)
            } else {
                w.energy_kwh_min
            };
            let c = &self.contracts[&id];
            let (consumer, producer) = (c.consumer_id, c.producer_id);
            if let Err(e) = self.submit_trading_request(consumer, producer, energy, id) {
                self.log("request_rejected", None, None, e.to_string());
            }
        }
    }

    /// Processes every queued event due at or before `t`, then sets the clock
    /// to `t`.
    pub fn advance_to(&mut self, t: u64) {
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let ((at, _), ev) = entry.remove_entry();
            self.now = at;
            self.handle(ev);
        }
        self.now = self.now.max(t);
    }

    fn drain_events(&mut self) {
        while let Some(((at, _), ev)) = self.queue.pop_first() {
            self.now = at;
            self.handle(ev);
        }
    }

    /// Starts one mining round in every group that holds pending
    /// transactions and runs the event loop until all of them are decided.
    pub fn run_round(&mut self) -> Result<Vec<RoundRecord>, SimError> {
        let has_pending = |s: &Self, g: &[NodeId]| g.iter().any(|n| !s.nodes[n.0 as usize].pending.is_empty());
        let groups: Vec<Vec<NodeId>> = self.groups().into_iter().filter(|g| has_pending(self, g)).collect();
        if groups.is_empty() {
            return Err(SimError::NoPendingTransactions);
        }
        self.tick += 1;
        let mut started = Vec::new();
        for g in groups {
            started.push(self.start_round(&g)?);
        }
        while started.iter().any(|r| self.in_flight.contains_key(r)) {
            let ((at, _), ev) = self.queue.pop_first().expect("in-flight rounds hold a timeout");
            self.now = at;
            self.handle(ev);
        }
        Ok(started.iter().map(|&r| self.rounds[r].clone()).collect())
    }

    fn start_round(&mut self, group: &[NodeId]) -> Result<usize, SimError> {
        let miner = *group
            .iter()
            .filter_map(|n| self.nodes[n.0 as usize].oldest_pending().map(|k| (k, n)))
            .min()
            .expect("group has pending transactions")
            .1;
        let coordinator = self.coordinator(group);
        // A coordinator that mines itself sends no control messages.
        let remote = (miner != coordinator).then_some(coordinator);
        self.log("mining_assignment", Some(coordinator), remote.map(|_| miner), format!("round {}", self.tick));
        let link = if miner == coordinator {
            self.cfg.links.default
        } else {
            *self.cfg.links.get(miner.0, coordinator.0)
        };
        let features = telemetry_sample(&link, &mut self.telemetry_rng);
        self.log(
            MessageKind::TelemetryReport.name(),
            Some(miner),
            remote,
            format!(
                "delay_ms={} jitter_ms={} loss_pct={}",
                features.delay_ms, features.jitter_ms, features.loss_pct
            ),
        );
        let candidate = derive_nonce(&self.model, &features, self.cfg.whitening, self.now)
            .map_err(|e| SimError::Nonce(e.to_string()))?;
        let m = miner.0 as usize;
        let duplicate = screen_duplicates(&candidate, &self.nodes[m].nonce_window) == Screening::Reject;
        self.nodes[m].nonce_window.push(candidate.nonce);
        if duplicate {
            self.duplicates += 1;
            self.log("duplicate_nonce", Some(miner), None, format!("nonce={:#018x}", candidate.nonce));
        }
        let txs = self.nodes[m].take_batch(self.cfg.workload.max_txs_per_block);
        let record = self.rounds.len();
        self.rounds.push(RoundRecord {
            round: self.tick,
            time_ms: self.now,
            miner,
            coordinator,
            group: group.to_vec(),
            n_txs: txs.len(),
            telemetry: features,
            nonce: candidate.nonce,
            prediction_mbps: candidate.prediction_mbps,
            duplicate_nonce: duplicate,
            approvers: Vec::new(),
            rejections: 0,
            quorum_needed: self.quorum_needed(),
            reachable: group.len(),
            outcome: RoundOutcome::Pending,
        });
        if duplicate && self.cfg.duplicate_policy == DuplicatePolicy::Reject {
            self.nodes[m].requeue_front(txs);
            self.finish_rejected(record, "duplicate nonce".into());
            return Ok(record);
        }
        let prev = self.nodes[m].validation_tip().clone();
        let built = build_candidate_block(
            txs.iter().map(|p| p.tx.clone()).collect(),
            &candidate,
            &prev,
            self.now,
            miner,
            &self.nodes[m].keys,
        );
        let block = match built {
            Ok(b) => b,
            Err(e) => {
                self.nodes[m].requeue_front(txs);
                self.finish_rejected(record, format!("block construction failed: {e}"));
                return Ok(record);
            }
        };
        if group.len() < self.quorum_needed() {
            self.log(
                "block_cached",
                Some(miner),
                None,
                format!("index={} hash={}", block.index, block.hash_hex()),
            );
            self.nodes[m].cached_blocks.push(block);
            self.cached += 1;
            self.rounds[record].outcome = RoundOutcome::Cached;
            self.rounds[record].approvers = vec![miner];
            return Ok(record);
        }
        let peers: Vec<NodeId> = group.iter().copied().filter(|&n| n != miner).collect();
        let mut flight = InFlight {
            miner,
            block: block.clone(),
            txs,
            peers: peers.len(),
            replies: 0,
            approvals: BTreeSet::new(),
            rejections: BTreeMap::new(),
        };
        let own_key = *self.registry.get(miner).expect("registered");
        if validate_block(&block, &prev, &own_key).is_ok() {
            flight.approvals.insert(miner);
        }
        self.in_flight.insert(record, flight);
        if peers.is_empty() {
            self.decide(record);
            return Ok(record);
        }
        let tamper = self.cfg.tamper_rounds.contains(&self.tick);
        let mut mean_rtt = 0.0;
        for &p in &peers {
            mean_rtt += 2.0 * self.cfg.links.get(miner.0, p.0).mean_delay_ms();
            let mut sent = block.clone();
            if tamper {
                corrupt(&mut sent);
            }
            self.send(
                miner,
                p,
                Msg::Proposal {
                    round: record,
                    block: Box::new(sent),
                },
            );
        }
        mean_rtt /= peers.len() as f64;
        let timeout = ((self.cfg.vote_timeout_rtt_factor * mean_rtt).ceil() as u64).max(1);
        self.schedule(self.now + timeout, Event::VoteTimeout { round: record });
        Ok(record)
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Msg) {
        let link = *self.cfg.links.get(from.0, to.0);
        let kind = match &msg {
            Msg::Proposal { .. } => MessageKind::CandidateBlockProposal,
            Msg::Vote { .. } => MessageKind::Vote,
        };
        let lost = self.network_rng.random_bool(link.loss_prob);
        let jitter = Normal::new(0.0, link.jitter_sigma_ms)
            .expect("validated sigma")
            .sample(&mut self.network_rng)
            .abs();
        if lost {
            self.log(kind.name(), Some(from), Some(to), "lost".into());
            return;
        }
        let delay = ((link.base_delay_ms + jitter).round() as u64).max(1);
        self.log(kind.name(), Some(from), Some(to), format!("sent, arrives +{delay} ms"));
        self.schedule(self.now + delay, Event::Deliver { from, to, msg });
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Failure(kind) => self.apply_failure(&kind),
            Event::VoteTimeout { round } => {
                if self.in_flight.contains_key(&round) {
                    self.log("vote_timeout", None, None, format!("round record {round}"));
                    self.decide(round);
                }
            }
            Event::Deliver { from, to, msg } => {
                if !self.reachable(from, to) {
                    self.log("dropped", Some(from), Some(to), "receiver unreachable".into());
                    return;
                }
                match msg {
                    Msg::Proposal { round, block } => {
                        if !self.in_flight.contains_key(&round) {
                            return;
                        }
                        let peer = &self.nodes[to.0 as usize];
                        let result = match self.registry.get(block.payload.signer_id) {
                            Some(key) => validate_block(&block, peer.validation_tip(), key),
                            None => Err(vec![Violation::UnknownSigner {
                                signer: block.payload.signer_id,
                            }]),
                        };
                        let (approve, violations) = match result {
                            Ok(()) => (true, Vec::new()),
                            Err(v) => (false, v),
                        };
                        self.send(to, from, Msg::Vote { round, approve, violations });
                    }
                    Msg::Vote { round, approve, violations } => {
                        let Some(f) = self.in_flight.get_mut(&round) else {
                            return;
                        };
                        if approve {
                            f.approvals.insert(from);
                        } else {
                            f.rejections.insert(from, violations);
                        }
                        f.replies += 1;
                        let done = f.replies == f.peers;
                        let detail = if approve { "approve" } else { "reject" };
                        self.log("vote_received", Some(from), Some(to), detail.into());
                        if done {
                            self.decide(round);
                        }
                    }
                }
            }
        }
    }

    fn decide(&mut self, record: usize) {
        let f = self.in_flight.remove(&record).expect("round in flight");
        let members: Vec<NodeId> = (0..self.nodes.len() as u32)
            .map(NodeId)
            .filter(|&n| self.reachable(f.miner, n))
            .collect();
        let approvers: Vec<NodeId> = f.approvals.iter().copied().filter(|n| members.contains(n)).collect();
        let needed = self.quorum_needed();
        let r = &mut self.rounds[record];
        r.approvers = approvers.clone();
        r.rejections = f.rejections.len();
        r.quorum_needed = needed;
        r.reachable = members.len();
        if approvers.len() >= needed {
            for &n in &members {
                if let Err(v) = self.nodes[n.0 as usize].ledger.append(f.block.clone(), &self.registry) {
                    self.log("append_failed", Some(f.miner), Some(n), format!("{v:?}"));
                } else if n != f.miner {
                    self.log(MessageKind::Commit.name(), Some(f.miner), Some(n), f.block.hash_hex());
                }
            }
            self.committed += 1;
            self.rounds[record].outcome = RoundOutcome::Committed { index: f.block.index };
            self.log(
                "block_committed",
                Some(f.miner),
                None,
                format!("index={} approvals={}/{needed}", f.block.index, approvers.len()),
            );
        } else {
            let reason = if f.rejections.is_empty() {
                format!("insufficient approvals: {}/{needed}", approvers.len())
            } else {
                let kinds: BTreeSet<String> = f
                    .rejections
                    .values()
                    .flatten()
                    .map(|v| serde_json::to_value(v).expect("violation")["violation"].to_string())
                    .collect();
                format!(
                    "rejected by {} peer(s): {}",
                    f.rejections.len(),
                    kinds.into_iter().map(|k| k.trim_matches('"').to_string()).collect::<Vec<_>>().join(", ")
                )
            };
            self.nodes[f.miner.0 as usize].requeue_front(f.txs);
            self.finish_rejected(record, reason);
        }
    }

    fn finish_rejected(&mut self, record: usize, reason: String) {
        self.rejected += 1;
        let miner = self.rounds[record].miner;
        self.log("block_rejected", Some(miner), None, reason.clone());
        self.rounds[record].outcome = RoundOutcome::Rejected { reason };
    }

    /// Applies a failure event at the current time, aborts rounds in flight
    /// and synchronizes ledgers within each new group.
    pub fn inject_failure(&mut self, kind: &FailureKind) -> Result<(), SimError> {
        if let FailureKind::Partition { nodes } = kind {
            if nodes.is_empty() || nodes.iter().any(|&n| n >= self.cfg.n_nodes) {
                return Err(ConfigError {
                    field: "partition".into(),
                    reason: format!("unknown node ids in {nodes:?}"),
                }
                .into());
            }
        }
        self.apply_failure(kind);
        Ok(())
    }

    fn apply_failure(&mut self, kind: &FailureKind) {
        let master = self.cfg.master_id as usize;
        match kind {
            FailureKind::MasterDown => self.up[master] = false,
            FailureKind::MasterUp => self.up[master] = true,
            FailureKind::Partition { nodes } => {
                let l = self.next_label;
                self.next_label += 1;
                for &n in nodes {
                    if let Some(slot) = self.label.get_mut(n as usize) {
                        *slot = l;
                    }
                }
            }
            FailureKind::Heal => self.label.fill(0),
        }
        self.log("failure", None, None, format!("{kind:?}"));
        let aborted: Vec<usize> = self.in_flight.keys().copied().collect();
        for record in aborted {
            let f = self.in_flight.remove(&record).expect("listed");
            self.nodes[f.miner.0 as usize].requeue_front(f.txs);
            self.finish_rejected(record, "aborted: reachability changed".into());
        }
        self.ledger_sync();
    }

    /// Within each group, every node adopts the longest valid ledger (ties go
    /// to the smallest tip hash). Transactions from cached or orphaned blocks
    /// that are not on the adopted chain return to the holder's pending queue.
    pub fn ledger_sync(&mut self) {
        for group in self.groups() {
            let mut best: Option<(usize, [u8; 32], NodeId)> = None;
            for &n in &group {
                let ledger = &self.nodes[n.0 as usize].ledger;
                if verify_chain(ledger, &self.registry).is_err() {
                    continue;
                }
                let key = (ledger.len(), ledger.tip().expect("genesis").block_hash, n);
                best = match best {
                    Some(b) if b.0 > key.0 || (b.0 == key.0 && b.1 <= key.1) => Some(b),
                    _ => Some(key),
                };
            }
            let Some((_, _, source)) = best else { continue };
            let adopted = self.nodes[source.0 as usize].ledger.clone();
            let on_chain: BTreeSet<u128> = adopted
                .blocks()
                .iter()
                .flat_map(|b| b.payload.txs.iter().map(|t| t.tx_id))
                .collect();
            let mut seen: BTreeSet<u128> = group
                .iter()
                .flat_map(|n| self.nodes[n.0 as usize].pending.iter().map(|p| p.tx.tx_id))
                .collect();
            let mut changed = false;
            for &n in &group {
                let node = &self.nodes[n.0 as usize];
                let common = node
                    .ledger
                    .blocks()
                    .iter()
                    .zip(adopted.blocks())
                    .take_while(|(a, b)| a.block_hash == b.block_hash)
                    .count();
                let orphaned = node.ledger.blocks()[common..].iter().chain(&node.cached_blocks);
                let mut requeue = Vec::new();
                for tx in orphaned.flat_map(|b| &b.payload.txs) {
                    if !on_chain.contains(&tx.tx_id) && seen.insert(tx.tx_id) {
                        requeue.push(PendingTx {
                            tx: tx.clone(),
                            priority: self.priority_of(tx.contract_id),
                        });
                    }
                }
                let replaced = node.ledger != adopted;
                let n_cached = node.cached_blocks.len();
                if replaced || n_cached > 0 || !requeue.is_empty() {
                    changed = true;
                    let detail = format!(
                        "adopted len={} from node {source}; dropped {n_cached} cached; requeued {} tx",
                        adopted.len(),
                        requeue.len()
                    );
                    if n != source {
                        self.log(MessageKind::LedgerSyncRequest.name(), Some(n), Some(source), String::new());
                    }
                    self.log(MessageKind::LedgerSyncResponse.name(), Some(source), Some(n), detail);
                }
                let node = &mut self.nodes[n.0 as usize];
                if replaced {
                    node.ledger = adopted.clone();
                }
                node.cached_blocks.clear();
                node.requeue_front(requeue);
            }
            if !changed {
                self.log("ledger_sync", None, None, format!("group {group:?} already consistent"));
            }
        }
    }

    pub fn report(&self) -> SimReport {
        let predictions: Vec<f64> = self.rounds.iter().map(|r| r.prediction_mbps).collect();
        let valid: Vec<bool> = self
            .nodes
            .iter()
            .map(|n| verify_chain(&n.ledger, &self.registry).is_ok())
            .collect();
        let first = self.nodes[0].ledger.to_jsonl();
        SimReport {
            n_nodes: self.cfg.n_nodes,
            master_id: self.cfg.master_id,
            seed: self.cfg.seed,
            model_kind: self.model.kind(),
            rounds_run: self.tick,
            committed: self.committed,
            rejected: self.rejected,
            cached: self.cached,
            duplicate_nonces: self.duplicates,
            nonce_stream: self.rounds.iter().map(|r| r.nonce).collect(),
            nonce_rate_pct: randomness_rate(&predictions).ok().map(|r| r.rate_pct),
            nonce_entropy: shannon_entropy(&predictions).ok().map(|e| e.normalized),
            all_valid: valid.iter().all(|&v| v),
            converged: self.nodes.iter().all(|n| n.ledger.to_jsonl() == first),
            nodes: self
                .nodes
                .iter()
                .zip(&valid)
                .map(|(n, &v)| NodeSummary {
                    id: n.id,
                    role: n.role,
                    up: self.up[n.id.0 as usize],
                    ledger_len: n.ledger.len(),
                    tip_hash: n.ledger.tip().map(|b| b.hash_hex()).unwrap_or_default(),
                    pending_txs: n.pending.len(),
                    cached_blocks: n.cached_blocks.len(),
                    ledger_valid: v,
                })
                .collect(),
            rounds: self.rounds.clone(),
        }
    }

    pub fn into_output(self) -> SimOutput {
        SimOutput {
            report: self.report(),
            ledgers: self.nodes.iter().map(|n| n.ledger.clone()).collect(),
            trace: self.trace,
            registry: self.registry,
        }
    }

    /// Runs `max_rounds` ticks, then any failure events still scheduled.
    pub fn run(mut self) -> Result<SimOutput, SimError> {
        for r in 1..=self.cfg.max_rounds {
            let t = (r * self.cfg.round_interval_ms).max(self.now + 1);
            self.advance_to(t);
            self.submit_workload();
            match self.run_round() {
                Ok(_) | Err(SimError::NoPendingTransactions) => {}
                Err(e) => return Err(e),
            }
        }
        self.drain_events();
        Ok(self.into_output())
    }
}

/// Flips one bit of the first transaction's energy amount.
fn corrupt(block: &mut Block) {
    if let Some(tx) = block.payload.txs.first_mut() {
        tx.energy_kwh = f64::from_bits(tx.energy_kwh.to_bits() ^ 1);
    } else {
        block.payload.signature[0] ^= 1;
    }
}

pub fn run_simulation(cfg: SimConfig) -> Result<SimOutput, SimError> {
    Simulation::new(cfg)?.run()
}

//! One simulation run: the event loop tying the medium, AODV-lite routing,
//! CBR traffic and the detection schemes together.
//!
//! A run owns all mutable state and is strictly single-threaded; everything
//! it does derives from (scenario, seed), so repeated runs are bit-identical.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::{aggregate, RunAccounting, RunMetrics, CSV_HEADER};
use crate::error::{Error, Result};
use crate::ids::{
    build_suspect_plans, check_alarm, cluster_partition, cluster_qualify, evaluate_segment,
    fallback_sweep_plans, AlarmReport, Cluster, MonitorRecord, Scheme, Segment, SegmentPlan,
    SegmentVerdict, ThresholdState, ACK_EVERY,
};
use crate::routing::{
    handle_rreq, select_route, AckPayload, DataPayload, NodeBehavior, NodeRouting, Packet,
    PacketKind, RouteEntry, RouteKey, RouteReplyRecord, RouteRequest, RreqAction, SeqNo,
};
use crate::scenario::{IdsMode, ScenarioSpec};
use crate::sim::{
    Destination, Engine, EventKind, MediumConfig, NodeId, Position, SimTime, Topology, TraceKind,
    TraceRecord, TimerKind,
};

/// Salt mixed into the seed for random node placement so placement draws
/// do not consume from the same stream as in-run loss draws.
const PLACEMENT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

struct FlowState {
    src: NodeId,
    dst: NodeId,
    interval: f64,
    count: u64,
    originated: u64,
    /// Data packets actually transmitted by the source.
    sent_on_air: u64,
    queue: VecDeque<Packet>,
    next_broadcast_id: u32,
    discovering: Option<u32>,
    retries_left: u32,
    /// Replies cached for the current discovery epoch.
    cache: Vec<RouteReplyRecord>,
    cache_bid: u32,
    route: Option<Vec<NodeId>>,
    route_key: Option<RouteKey>,
    excluded: BTreeSet<NodeId>,
    stalled: bool,
    dest_received: u64,
    last_ack_time: Option<SimTime>,
    /// Freshest destination sequence number the source has authenticated.
    requested_dest_seq: SeqNo,
}

struct IdsRuntime {
    records: BTreeMap<(NodeId, NodeId), MonitorRecord>,
    /// Watcher -> watched pairs currently listening (selective scheme).
    active_pairs: BTreeSet<(NodeId, NodeId)>,
    listen_events: u64,
    alarms: Vec<AlarmReport>,
    threshold: ThresholdState,
    in_episode: bool,
    plans: Vec<SegmentPlan>,
    active_segment: Option<usize>,
    round: u32,
    clusters: Vec<Cluster>,
}

#[derive(Default)]
struct Counters {
    delivered: u64,
    dropped_adversary: u64,
    dropped_baseline: u64,
}

/// Trace, metrics and human summary of one completed run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace_text: String,
    pub summary_text: String,
}

impl RunOutput {
    /// Write `trace.txt`, `metrics.csv` and `summary.txt` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trace.txt"), &self.trace_text)?;
        let mut csv = String::from(CSV_HEADER);
        csv.push('\n');
        csv.push_str(&self.metrics.csv_row());
        csv.push('\n');
        std::fs::write(dir.join("metrics.csv"), csv)?;
        std::fs::write(dir.join("summary.txt"), &self.summary_text)?;
        Ok(())
    }
}

/// A configured simulation ready to run.
pub struct Simulation {
    spec: ScenarioSpec,
    topo: Topology,
    medium: MediumConfig,
    engine: Engine,
    nodes: Vec<NodeRouting>,
    flow: FlowState,
    ids: IdsRuntime,
    counters: Counters,
    next_packet_id: u64,
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        let diagnostics = spec.validate();
        if !diagnostics.is_empty() {
            let joined = diagnostics
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::Config(joined));
        }
        let positions = if spec.nodes.is_empty() {
            let count = spec.placement.as_ref().expect("validated").count;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ PLACEMENT_SALT);
            (0..count)
                .map(|_| {
                    Position::new(
                        rng.random_range(0.0..spec.grid.side),
                        rng.random_range(0.0..spec.grid.side),
                    )
                })
                .collect()
        } else {
            spec.explicit_positions()
        };
        let medium = MediumConfig {
            range: spec.medium.range,
            per_hop_latency: spec.medium.per_hop_latency,
            baseline_loss: spec.medium.baseline_loss,
        };
        let topo = Topology::new(spec.grid.side, medium.range, positions.clone());
        let adversaries: BTreeSet<u32> = spec.adversary.nodes.iter().copied().collect();
        let nodes = (0..positions.len())
            .map(|i| {
                let behavior = if adversaries.contains(&(i as u32)) {
                    NodeBehavior::BlackHole
                } else {
                    NodeBehavior::Honest
                };
                NodeRouting::new(behavior, spec.adversary.forge_offset)
            })
            .collect();
        let clusters = cluster_partition(&positions, spec.grid.side, spec.ids.cluster_size as usize);
        let mut engine = Engine::new(spec.seed);
        if spec.traffic.count > 0 {
            engine.schedule(spec.traffic.start, EventKind::AppSend)?;
        }
        Ok(Self {
            flow: FlowState {
                src: NodeId(spec.traffic.source),
                dst: NodeId(spec.traffic.dest),
                interval: spec.traffic.interval,
                count: spec.traffic.count,
                originated: 0,
                sent_on_air: 0,
                queue: VecDeque::new(),
                next_broadcast_id: 0,
                discovering: None,
                retries_left: spec.discovery.retries,
                cache: Vec::new(),
                cache_bid: 0,
                route: None,
                route_key: None,
                excluded: BTreeSet::new(),
                stalled: false,
                dest_received: 0,
                last_ack_time: None,
                requested_dest_seq: 0,
            },
            ids: IdsRuntime {
                records: BTreeMap::new(),
                active_pairs: BTreeSet::new(),
                listen_events: 0,
                alarms: Vec::new(),
                threshold: ThresholdState::new(spec.ids.threshold_slack),
                in_episode: false,
                plans: Vec::new(),
                active_segment: None,
                round: 0,
                clusters,
            },
            counters: Counters::default(),
            next_packet_id: 0,
            spec: spec.clone(),
            topo,
            medium,
            engine,
            nodes,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    /// Run until the event queue drains (or `until`, when given) and audit
    /// the result.
    pub fn run_until(mut self, until: Option<SimTime>) -> Result<RunOutput> {
        while let Some((time, event)) = self.engine.pop() {
            if let Some(limit) = until {
                if time > limit {
                    break;
                }
            }
            self.dispatch(event)?;
        }
        self.finalize()
    }

    pub fn run(self) -> Result<RunOutput> {
        self.run_until(None)
    }

    fn alloc_packet_id(&mut self) -> u64 {
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        id
    }

    fn ack_timeout(&self) -> f64 {
        self.spec.ids.ack_timeout.unwrap_or_else(|| {
            let hops = self
                .flow
                .route
                .as_ref()
                .map(|r| r.len().saturating_sub(1))
                .unwrap_or(2) as f64;
            2.0 * (ACK_EVERY as f64 * self.flow.interval
                + 2.0 * hops * self.medium.per_hop_latency)
        })
    }

    fn dispatch(&mut self, event: EventKind) -> Result<()> {
        match event {
            EventKind::AppSend => self.on_app_send(),
            EventKind::Deliver { from, to, packet } => {
                self.engine.record(TraceRecord {
                    time: self.engine.now(),
                    kind: TraceKind::Deliver,
                    src: from,
                    dst: Some(to),
                    pkt_type: packet.kind.type_label(),
                    pkt_id: packet.id,
                    seq_no: packet.kind.seq_label(),
                });
                self.on_deliver(from, to, packet)
            }
            EventKind::Overhear {
                transmitter,
                listener,
                packet,
            } => {
                self.engine.record(TraceRecord {
                    time: self.engine.now(),
                    kind: TraceKind::Overhear,
                    src: transmitter,
                    dst: Some(listener),
                    pkt_type: packet.kind.type_label(),
                    pkt_id: packet.id,
                    seq_no: packet.kind.seq_label(),
                });
                self.on_overhear(transmitter, listener, &packet);
                Ok(())
            }
            EventKind::Timer { node, timer } => {
                self.engine.record(TraceRecord {
                    time: self.engine.now(),
                    kind: TraceKind::Timer,
                    src: node,
                    dst: Some(node),
                    pkt_type: timer.tag(),
                    pkt_id: 0,
                    seq_no: 0,
                });
                self.on_timer(node, timer)
            }
        }
    }

    // ---- traffic ----------------------------------------------------------

    fn on_app_send(&mut self) -> Result<()> {
        let data_seq = self.flow.originated;
        self.flow.originated += 1;
        if self.flow.originated < self.flow.count {
            self.engine
                .schedule(self.engine.now() + self.flow.interval, EventKind::AppSend)?;
        }
        // Ambient loss is an end-to-end property of the data plane, drawn
        // once per packet; a lost packet never makes it onto the air.
        if self.medium.baseline_loss > 0.0
            && self.engine.rng.random::<f64>() < self.medium.baseline_loss
        {
            self.counters.dropped_baseline += 1;
            return Ok(());
        }
        let id = self.alloc_packet_id();
        self.flow.queue.push_back(Packet {
            id,
            kind: PacketKind::Data(DataPayload {
                flow_src: self.flow.src,
                flow_dst: self.flow.dst,
                data_seq,
                route_key: (self.flow.src, 0, self.flow.src),
            }),
        });
        self.pump_flow()
    }

    /// Send every queued data packet once a route is available; otherwise
    /// kick off (or wait for) discovery.
    fn pump_flow(&mut self) -> Result<()> {
        if self.flow.stalled {
            return Ok(());
        }
        let Some(route_key) = self.flow.route_key else {
            if self.flow.discovering.is_none() && !self.flow.queue.is_empty() {
                self.start_discovery()?;
            }
            return Ok(());
        };
        while let Some(mut packet) = self.flow.queue.pop_front() {
            if let PacketKind::Data(payload) = &mut packet.kind {
                payload.route_key = route_key;
            }
            self.forward_data(self.flow.src, packet)?;
            self.flow.sent_on_air += 1;
            if self.spec.ids.mode == IdsMode::Selective
                && self.flow.sent_on_air.is_multiple_of(ACK_EVERY)
            {
                let deadline = self.engine.now() + self.ack_timeout();
                self.engine.schedule(
                    deadline,
                    EventKind::Timer {
                        node: self.flow.src,
                        timer: TimerKind::AckDeadline {
                            window: self.flow.sent_on_air,
                            sent_at: self.engine.now(),
                        },
                    },
                )?;
            }
        }
        Ok(())
    }

    /// Transmit a data packet toward its next hop, entrusting it to the
    /// watchdog machinery when monitoring applies.
    fn forward_data(&mut self, node: NodeId, packet: Packet) -> Result<()> {
        let route_key = match &packet.kind {
            PacketKind::Data(p) => p.route_key,
            _ => unreachable!("forward_data only handles data packets"),
        };
        let Some(entry) = self.nodes[node.index()].forward_route.get(&route_key).copied() else {
            // Pinned routes install an entry at every hop that relayed the
            // reply, so a miss means the epoch was torn down mid-flight.
            return Ok(());
        };
        let packet_id = packet.id;
        self.engine
            .transmit(&self.topo, &self.medium, node, packet, Destination::Unicast(entry.next_hop))?;
        self.maybe_entrust(node, entry.next_hop, packet_id)
    }

    fn maybe_entrust(&mut self, watcher: NodeId, watched: NodeId, packet_id: u64) -> Result<()> {
        if watched == self.flow.dst || watched == self.flow.src {
            return Ok(());
        }
        let deadline_len = match self.spec.ids.mode {
            IdsMode::Watchdog => self.spec.ids.forward_timeout,
            IdsMode::Selective if self.ids.active_pairs.contains(&(watcher, watched)) => {
                self.ack_timeout()
            }
            _ => return Ok(()),
        };
        let record = self
            .ids
            .records
            .entry((watcher, watched))
            .or_insert_with(|| MonitorRecord::new(watcher, watched));
        let deadline = self.engine.now() + deadline_len;
        record.entrust(packet_id, deadline);
        self.engine.schedule(
            deadline,
            EventKind::Timer {
                node: watcher,
                timer: TimerKind::Maturation {
                    watcher,
                    watched,
                    packet_id,
                },
            },
        )
    }

    // ---- route discovery --------------------------------------------------

    fn start_discovery(&mut self) -> Result<()> {
        if self.flow.stalled || self.flow.discovering.is_some() {
            return Ok(());
        }
        let bid = self.flow.next_broadcast_id;
        self.flow.next_broadcast_id += 1;
        self.flow.discovering = Some(bid);
        self.flow.cache.clear();
        self.flow.cache_bid = bid;
        let src = self.flow.src;
        self.nodes[src.index()].own_seq += 1;
        self.nodes[src.index()].seen_rreq.insert((src, bid));
        let rreq = RouteRequest {
            origin: src,
            target: self.flow.dst,
            broadcast_id: bid,
            hop_count: 0,
            origin_seq: self.nodes[src.index()].own_seq,
            requested_dest_seq: self.flow.requested_dest_seq,
            path: vec![src],
        };
        let packet = Packet {
            id: self.alloc_packet_id(),
            kind: PacketKind::Rreq(rreq),
        };
        self.engine
            .transmit(&self.topo, &self.medium, src, packet, Destination::Broadcast)?;
        self.engine.schedule(
            self.engine.now() + self.spec.discovery.timeout,
            EventKind::Timer {
                node: src,
                timer: TimerKind::DiscoveryTimeout {
                    origin: src,
                    broadcast_id: bid,
                },
            },
        )
    }

    /// Cache a reply at the source (unless it rides through an excluded
    /// node) and re-select the active route.
    fn source_receive_rrep(&mut self, from: NodeId, reply: &crate::routing::RouteReply) -> Result<()> {
        if reply.route.iter().any(|n| self.flow.excluded.contains(n)) {
            return Ok(());
        }
        if reply.broadcast_id != self.flow.cache_bid {
            return Ok(());
        }
        let src = self.flow.src;
        self.nodes[src.index()].forward_route.insert(
            (reply.origin, reply.broadcast_id, reply.replier),
            RouteEntry {
                destination: reply.target,
                next_hop: from,
                dest_seq: reply.dest_seq,
                hop_count: reply.hop_count,
            },
        );
        self.flow.cache.push(RouteReplyRecord {
            replier: reply.replier,
            dest_seq: reply.dest_seq,
            hop_count: reply.hop_count,
            route: reply.route.clone(),
        });
        let best = select_route(&self.flow.cache)?;
        let key = (src, self.flow.cache_bid, best.replier);
        if self.flow.route_key != Some(key) {
            self.flow.route = Some(best.route.clone());
            self.flow.route_key = Some(key);
        }
        self.pump_flow()
    }

    fn exclude_and_rediscover(&mut self, accused: NodeId) -> Result<()> {
        if accused == self.flow.src || accused == self.flow.dst {
            return Ok(());
        }
        self.flow.excluded.insert(accused);
        self.flow
            .cache
            .retain(|r| !r.route.contains(&accused));
        self.flow.route = None;
        self.flow.route_key = None;
        self.flow.retries_left = self.spec.discovery.retries;
        if self.flow.discovering.is_none() {
            self.start_discovery()?;
        }
        Ok(())
    }

    // ---- event handlers ----------------------------------------------------

    fn on_deliver(&mut self, from: NodeId, to: NodeId, packet: Packet) -> Result<()> {
        match &packet.kind {
            PacketKind::Rreq(rreq) => {
                let rreq = rreq.clone();
                let action = handle_rreq(to, &mut self.nodes[to.index()], &rreq);
                match action {
                    RreqAction::Drop => Ok(()),
                    RreqAction::Rebroadcast(next) => {
                        self.nodes[to.index()]
                            .reverse_route
                            .insert((rreq.origin, rreq.broadcast_id), from);
                        let relay = Packet {
                            id: packet.id,
                            kind: PacketKind::Rreq(next),
                        };
                        self.engine
                            .transmit(&self.topo, &self.medium, to, relay, Destination::Broadcast)
                    }
                    RreqAction::Reply(reply) => {
                        self.nodes[to.index()]
                            .reverse_route
                            .insert((rreq.origin, rreq.broadcast_id), from);
                        let pkt = Packet {
                            id: self.alloc_packet_id(),
                            kind: PacketKind::Rrep(reply),
                        };
                        self.engine
                            .transmit(&self.topo, &self.medium, to, pkt, Destination::Unicast(from))
                    }
                }
            }
            PacketKind::Rrep(reply) => {
                if self.nodes[to.index()].behavior == NodeBehavior::BlackHole {
                    // The black hole relays nothing.
                    return Ok(());
                }
                if to == reply.origin {
                    let reply = reply.clone();
                    self.source_receive_rrep(from, &reply)
                } else {
                    self.nodes[to.index()].forward_route.insert(
                        (reply.origin, reply.broadcast_id, reply.replier),
                        RouteEntry {
                            destination: reply.target,
                            next_hop: from,
                            dest_seq: reply.dest_seq,
                            hop_count: reply.hop_count,
                        },
                    );
                    let rev = self.nodes[to.index()]
                        .reverse_route
                        .get(&(reply.origin, reply.broadcast_id))
                        .copied();
                    match rev {
                        Some(prev_hop) => self.engine.transmit(
                            &self.topo,
                            &self.medium,
                            to,
                            packet.clone(),
                            Destination::Unicast(prev_hop),
                        ),
                        None => Ok(()),
                    }
                }
            }
            PacketKind::Data(payload) => {
                if to == payload.flow_dst {
                    self.counters.delivered += 1;
                    self.flow.dest_received += 1;
                    if self.spec.ids.mode == IdsMode::Selective
                        && self.flow.dest_received.is_multiple_of(ACK_EVERY)
                    {
                        self.emit_ack(to, payload.route_key)?;
                    }
                    Ok(())
                } else if self.nodes[to.index()].behavior == NodeBehavior::BlackHole {
                    self.counters.dropped_adversary += 1;
                    Ok(())
                } else {
                    self.forward_data(to, packet.clone())
                }
            }
            PacketKind::Ack(ack) => {
                if to == ack.flow_src {
                    self.flow.last_ack_time = Some(self.engine.now());
                    self.ids.in_episode = false;
                    self.flow.requested_dest_seq =
                        self.flow.requested_dest_seq.max(ack.dest_seq);
                    self.ids.threshold.update(ack.dest_seq);
                    Ok(())
                } else if self.nodes[to.index()].behavior == NodeBehavior::BlackHole {
                    Ok(())
                } else {
                    let rev = self.nodes[to.index()]
                        .reverse_route
                        .get(&(ack.route_key.0, ack.route_key.1))
                        .copied();
                    match rev {
                        Some(prev_hop) => self.engine.transmit(
                            &self.topo,
                            &self.medium,
                            to,
                            packet.clone(),
                            Destination::Unicast(prev_hop),
                        ),
                        None => Ok(()),
                    }
                }
            }
        }
    }

    fn emit_ack(&mut self, dest: NodeId, route_key: RouteKey) -> Result<()> {
        let rev = self.nodes[dest.index()]
            .reverse_route
            .get(&(route_key.0, route_key.1))
            .copied();
        let Some(prev_hop) = rev else {
            return Ok(());
        };
        let ack = Packet {
            id: self.alloc_packet_id(),
            kind: PacketKind::Ack(AckPayload {
                flow_src: self.flow.src,
                flow_dst: self.flow.dst,
                received_count: self.flow.dest_received,
                dest_seq: self.nodes[dest.index()].own_seq,
                route_key,
            }),
        };
        self.engine
            .transmit(&self.topo, &self.medium, dest, ack, Destination::Unicast(prev_hop))
    }

    fn on_overhear(&mut self, transmitter: NodeId, listener: NodeId, packet: &Packet) {
        if self.spec.ids.mode == IdsMode::None {
            return;
        }
        if !matches!(packet.kind, PacketKind::Data(_)) {
            return;
        }
        let key = (listener, transmitter);
        let active = match self.spec.ids.mode {
            IdsMode::Watchdog => self.ids.records.contains_key(&key),
            IdsMode::Selective => self.ids.active_pairs.contains(&key),
            IdsMode::None => false,
        };
        if !active {
            return;
        }
        // One promiscuous-listen event per overheard-packet evaluation by an
        // active watcher; this is the experimental cost counter.
        self.ids.listen_events += 1;
        let credited = self
            .ids
            .records
            .get_mut(&key)
            .map(|rec| rec.note_overhear(packet.id))
            .unwrap_or(false);
        if credited && self.spec.ids.mode == IdsMode::Selective {
            self.evaluate_active_segment();
        }
    }

    fn on_timer(&mut self, _node: NodeId, timer: TimerKind) -> Result<()> {
        match timer {
            TimerKind::DiscoveryTimeout {
                origin,
                broadcast_id,
            } => {
                if origin == self.flow.src && self.flow.discovering == Some(broadcast_id) {
                    self.flow.discovering = None;
                    if self.flow.route_key.is_none() {
                        if self.flow.retries_left > 0 {
                            self.flow.retries_left -= 1;
                            self.start_discovery()?;
                        } else {
                            self.flow.stalled = true;
                        }
                    }
                }
                Ok(())
            }
            TimerKind::AckDeadline { window: _, sent_at } => {
                if self.spec.ids.mode == IdsMode::Selective && !self.flow.stalled {
                    let acked = self.flow.last_ack_time.is_some_and(|t| t >= sent_at);
                    if !acked && !self.ids.in_episode {
                        self.trigger_selective_ids()?;
                    }
                }
                Ok(())
            }
            TimerKind::Maturation {
                watcher,
                watched,
                packet_id,
            } => {
                let matured = self
                    .ids
                    .records
                    .get_mut(&(watcher, watched))
                    .map(|rec| rec.mature(packet_id))
                    .unwrap_or(false);
                if matured {
                    match self.spec.ids.mode {
                        IdsMode::Watchdog => {
                            let min_obs = self.spec.ids.min_observations;
                            let now = self.engine.now();
                            let alarm = self
                                .ids
                                .records
                                .get_mut(&(watcher, watched))
                                .and_then(|rec| check_alarm(rec, min_obs, now, Scheme::Watchdog));
                            if let Some(alarm) = alarm {
                                self.raise_alarm(alarm)?;
                            }
                        }
                        IdsMode::Selective => self.evaluate_active_segment(),
                        IdsMode::None => {}
                    }
                }
                Ok(())
            }
            TimerKind::SegmentDeadline { round, index } => {
                if self.spec.ids.mode == IdsMode::Selective
                    && self.ids.round == round
                    && self.ids.active_segment == Some(index)
                {
                    // No verdict in time: treat as all-clear and move on.
                    self.advance_segment()?;
                }
                Ok(())
            }
        }
    }

    // ---- selective scheme --------------------------------------------------

    /// A missing acknowledgement starts the selective IDS: build the suspect
    /// list from the cached replies, fall back to a full-route sweep when it
    /// is empty, and start monitoring the first segment.
    fn trigger_selective_ids(&mut self) -> Result<()> {
        self.ids.in_episode = true;
        let Some(route) = self.flow.route.clone() else {
            return Ok(());
        };
        let threshold = self.ids.threshold.current();
        let mut plans = build_suspect_plans(
            &self.flow.cache,
            threshold,
            &route,
            self.flow.src,
            self.flow.dst,
        );
        if plans.is_empty() {
            plans = fallback_sweep_plans(&route, self.flow.src, self.flow.dst);
        }
        self.ids.plans = plans;
        self.ids.active_segment = None;
        self.activate_next_segment()
    }

    fn segments_of_plans(&self) -> Vec<Segment> {
        self.ids.plans.iter().map(|p| p.segment).collect()
    }

    fn activate_next_segment(&mut self) -> Result<()> {
        let next = match self.ids.active_segment {
            None => 0,
            Some(i) => i + 1,
        };
        self.ids.active_pairs.clear();
        if next >= self.ids.plans.len() {
            self.ids.active_segment = None;
            return Ok(());
        }
        self.ids.active_segment = Some(next);
        self.ids.round += 1;
        let segments = self.segments_of_plans();
        let plan = self.ids.plans[next].clone();
        for (watcher, watched) in plan.pairs {
            // Monitoring only activates inside qualifying clusters; segment
            // membership is what qualifies a cluster.
            let qualified = self
                .ids
                .clusters
                .iter()
                .any(|c| c.members.contains(&watched) && cluster_qualify(c, &segments));
            if qualified {
                self.ids.active_pairs.insert((watcher, watched));
                self.ids
                    .records
                    .entry((watcher, watched))
                    .or_insert_with(|| MonitorRecord::new(watcher, watched));
            }
        }
        self.engine.schedule(
            self.engine.now() + self.spec.ids.segment_timeout,
            EventKind::Timer {
                node: self.flow.src,
                timer: TimerKind::SegmentDeadline {
                    round: self.ids.round,
                    index: next,
                },
            },
        )?;
        if self.ids.plans[next].eval_order.is_empty() {
            // Nothing watchable in this segment (trusted endpoints only).
            return self.advance_segment();
        }
        Ok(())
    }

    fn advance_segment(&mut self) -> Result<()> {
        self.activate_next_segment()
    }

    fn evaluate_active_segment(&mut self) {
        let Some(index) = self.ids.active_segment else {
            return;
        };
        let plan = self.ids.plans[index].clone();
        let verdict = evaluate_segment(
            &plan,
            &self.ids.records,
            self.spec.ids.min_observations,
            self.spec.ids.tolerance,
        );
        match verdict {
            SegmentVerdict::Accuse(accused) => {
                let loss_percent = plan
                    .pairs
                    .iter()
                    .find(|&&(_, w)| w == accused)
                    .and_then(|key| self.ids.records.get(key))
                    .and_then(|rec| {
                        let resolved = rec.resolved();
                        (resolved > 0).then(|| rec.failed as f64 / resolved as f64 * 100.0)
                    })
                    .unwrap_or(100.0);
                let alarm = AlarmReport {
                    accused,
                    loss_percent,
                    detection_time: self.engine.now(),
                    scheme: Scheme::Selective,
                };
                self.ids.active_pairs.clear();
                self.ids.active_segment = None;
                self.ids.plans.clear();
                self.ids.round += 1;
                // Verdict reached: monitoring for this episode stops here.
                let _ = self.raise_alarm(alarm);
            }
            SegmentVerdict::AllClear => {
                let _ = self.advance_segment();
            }
            SegmentVerdict::Pending => {}
        }
    }

    fn raise_alarm(&mut self, alarm: AlarmReport) -> Result<()> {
        let accused = alarm.accused;
        self.ids.alarms.push(alarm);
        // Alarm delivery to the source is out of band; reputation
        // propagation is out of scope, exclusion is immediate.
        self.exclude_and_rediscover(accused)
    }

    // ---- finalization ------------------------------------------------------

    fn finalize(self) -> Result<RunOutput> {
        let adversaries: BTreeSet<NodeId> = self
            .spec
            .adversary
            .nodes
            .iter()
            .map(|&id| NodeId(id))
            .collect();
        let accounting = RunAccounting {
            scheme: self.spec.ids.mode.label().to_string(),
            n: self.topo.len(),
            cluster_size: self.spec.ids.cluster_size,
            seed: self.spec.seed,
            sent: self.flow.originated,
            delivered: self.counters.delivered,
            dropped_adversary: self.counters.dropped_adversary,
            dropped_baseline: self.counters.dropped_baseline,
            queued_at_end: self.flow.queue.len() as u64,
            listen_events: self.ids.listen_events,
            detection_time: self.ids.alarms.first().map(|a| a.detection_time),
            alarms: self.ids.alarms.clone(),
            stalled: self.flow.stalled,
            flow_src: self.flow.src,
            flow_dst: self.flow.dst,
            adversaries,
        };
        let metrics = aggregate(&self.engine.trace, accounting)?;
        let trace_text = crate::sim::render_trace(&self.engine.trace);
        let summary_text = render_summary(&self.spec, &metrics);
        Ok(RunOutput {
            metrics,
            trace_text,
            summary_text,
        })
    }
}

fn render_summary(spec: &ScenarioSpec, metrics: &RunMetrics) -> String {
    let mut out = String::new();
    let name = if spec.name.is_empty() {
        "(unnamed)"
    } else {
        &spec.name
    };
    out.push_str(&format!("scenario: {name}\n"));
    out.push_str(&format!("scheme: {}\n", metrics.scheme));
    out.push_str(&format!("nodes: {}\n", metrics.n));
    out.push_str(&format!("cluster_size: {}\n", metrics.cluster_size));
    out.push_str(&format!("seed: {}\n", metrics.seed));
    out.push_str(&format!("sent: {}\n", metrics.sent));
    out.push_str(&format!("delivered: {}\n", metrics.delivered));
    out.push_str(&format!("dropped_adversary: {}\n", metrics.dropped_adversary));
    out.push_str(&format!("dropped_baseline: {}\n", metrics.dropped_baseline));
    out.push_str(&format!("in_flight: {}\n", metrics.in_flight));
    match metrics.pdr() {
        Some(p) => out.push_str(&format!("pdr: {p:.2}\n")),
        None => out.push_str("pdr: none\n"),
    }
    match metrics.drop_percent() {
        Some(p) => out.push_str(&format!("drop_percent: {p:.2}\n")),
        None => out.push_str("drop_percent: none\n"),
    }
    out.push_str(&format!("listen_events: {}\n", metrics.listen_events));
    match metrics.detection_time {
        Some(t) => out.push_str(&format!("detection_time: {t:.6}\n")),
        None => out.push_str("detection_time: none\n"),
    }
    out.push_str(&format!("stalled: {}\n", metrics.stalled));
    out.push_str("conservation: ok\n");
    for alarm in &metrics.alarms {
        out.push_str(&alarm.console_line());
        out.push('\n');
    }
    out
}

/// Build and run a scenario to quiescence.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunOutput> {
    Simulation::new(spec)?.run()
}

/// Same, with the seed replaced.
pub fn run_scenario_with_seed(spec: &ScenarioSpec, seed: u64) -> Result<RunOutput> {
    let mut spec = spec.clone();
    spec.seed = seed;
    run_scenario(&spec)
}

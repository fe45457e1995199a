//! Intrusion detection: baseline Watchdog and the selective scheme.
//!
//! Both schemes share the promiscuous monitor-record machinery: a watcher
//! counts packets it entrusted to a neighbor and credits them back when it
//! overhears the retransmission. The baseline watchdog keeps every
//! forwarding node listening for the whole run and raises an alarm when a
//! neighbor's matured loss fraction strictly exceeds 20%. The selective
//! scheme stays silent until an end-to-end acknowledgement goes missing,
//! then monitors only route segments around repliers whose advertised
//! sequence numbers exceed a dynamic threshold, inside qualifying clusters.

use std::collections::{BTreeMap, BTreeSet};

use crate::routing::{RouteReplyRecord, SeqNo};
use crate::sim::{NodeId, Position, SimTime};

/// Alarm rule from the console output: "not forward more than 20% packets".
/// Strictly greater than this loss fraction is required.
pub const ALARM_LOSS_THRESHOLD: f64 = 0.20;

/// Destination acknowledges after every 10th data packet received.
pub const ACK_EVERY: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Watchdog,
    Selective,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Watchdog => "watchdog",
            Scheme::Selective => "selective",
        }
    }
}

/// Per-watcher promiscuous-listening ledger for one watched neighbor.
#[derive(Debug, Clone)]
pub struct MonitorRecord {
    pub watcher: NodeId,
    pub watched: NodeId,
    /// Packets the watcher saw handed to `watched`.
    pub entrusted: u64,
    /// Packets the watcher later overheard `watched` retransmit.
    pub forwarded: u64,
    /// Entrusted packets whose forward deadline expired unanswered.
    pub failed: u64,
    /// Packets awaiting the forward deadline: packet id -> deadline.
    pub pending: BTreeMap<u64, SimTime>,
    pub alarmed: bool,
}

impl MonitorRecord {
    pub fn new(watcher: NodeId, watched: NodeId) -> Self {
        Self {
            watcher,
            watched,
            entrusted: 0,
            forwarded: 0,
            failed: 0,
            pending: BTreeMap::new(),
            alarmed: false,
        }
    }

    pub fn entrust(&mut self, packet_id: u64, deadline: SimTime) {
        self.entrusted += 1;
        self.pending.insert(packet_id, deadline);
    }

    /// Credit an overheard retransmission. Duplicate or unmatched overhears
    /// are ignored.
    pub fn note_overhear(&mut self, packet_id: u64) -> bool {
        if self.pending.remove(&packet_id).is_some() {
            self.forwarded += 1;
            true
        } else {
            false
        }
    }

    /// Expire one pending entry into a failure. Returns false when the
    /// packet was already credited.
    pub fn mature(&mut self, packet_id: u64) -> bool {
        if self.pending.remove(&packet_id).is_some() {
            self.failed += 1;
            true
        } else {
            false
        }
    }

    /// (entrusted - forwarded - pending) / entrusted.
    pub fn loss_fraction(&self) -> Option<f64> {
        if self.entrusted == 0 {
            return None;
        }
        Some(self.failed as f64 / self.entrusted as f64)
    }

    /// Entrustments with a settled outcome (forwarded or failed).
    pub fn resolved(&self) -> u64 {
        self.forwarded + self.failed
    }
}

/// Emitted when a watched node crosses the alarm threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmReport {
    pub accused: NodeId,
    /// Loss percentage at emission time.
    pub loss_percent: f64,
    /// Seconds since the neighbour-detection clock started (run start).
    pub detection_time: SimTime,
    pub scheme: Scheme,
}

impl AlarmReport {
    /// Console line in the format the schemes print at detection time.
    pub fn console_line(&self) -> String {
        format!(
            "Alarm! node {} not forward more than 20% packets: {:.2}% loss, {:.2} secs from neighbour detection",
            self.accused, self.loss_percent, self.detection_time
        )
    }
}

/// Baseline watchdog alarm rule, checked on deadline expiry: enough
/// observations and a matured loss fraction strictly above the threshold.
pub fn check_alarm(
    record: &mut MonitorRecord,
    min_observations: u64,
    now: SimTime,
    scheme: Scheme,
) -> Option<AlarmReport> {
    if record.alarmed || record.entrusted < min_observations {
        return None;
    }
    let loss = record.loss_fraction()?;
    if loss > ALARM_LOSS_THRESHOLD {
        record.alarmed = true;
        Some(AlarmReport {
            accused: record.watched,
            loss_percent: loss * 100.0,
            detection_time: now,
            scheme,
        })
    } else {
        None
    }
}

/// Dynamic suspicion threshold: anything advertised above the last
/// authenticated destination sequence number plus a slack margin is treated
/// as a forgery candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdState {
    pub last_authenticated: SeqNo,
    pub slack: SeqNo,
}

impl ThresholdState {
    pub fn new(slack: SeqNo) -> Self {
        Self {
            last_authenticated: 0,
            slack,
        }
    }

    pub fn current(&self) -> SeqNo {
        self.last_authenticated + self.slack
    }

    /// Feed a destination sequence number learned from an authenticated
    /// end-to-end event (an ACK, or a discovery confirmed by one).
    pub fn update(&mut self, observed: SeqNo) {
        self.last_authenticated = self.last_authenticated.max(observed);
    }
}

/// Consecutive route triple around a suspect; the unit of selective
/// monitoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Segment {
    pub prev: NodeId,
    pub node: NodeId,
    pub next: NodeId,
}

/// A segment plus the (watcher, watched) pairs that instrument it.
///
/// Each watched position is observed by its route predecessor; trusted flow
/// endpoints are never watched. `eval_order` lists watched nodes in the
/// order the verdict inspects them: the suspect first, then its successor,
/// then its predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub segment: Segment,
    pub pairs: Vec<(NodeId, NodeId)>,
    pub eval_order: Vec<NodeId>,
}

/// Build the suspect list: one segment per cached replier whose advertised
/// sequence number exceeds the threshold, positioned on that replier's own
/// claimed route. Segments come out ordered along the active route.
pub fn build_suspect_list(
    cache: &[RouteReplyRecord],
    threshold: SeqNo,
    active_route: &[NodeId],
) -> Vec<Segment> {
    let mut segments = Vec::new();
    for record in cache {
        if record.dest_seq <= threshold {
            continue;
        }
        let Some(idx) = record.route.iter().position(|&n| n == record.replier) else {
            continue;
        };
        if idx == 0 {
            continue;
        }
        let prev = record.route[idx - 1];
        let next = record
            .route
            .get(idx + 1)
            .copied()
            .unwrap_or(*record.route.last().expect("route is non-empty"));
        let seg = Segment {
            prev,
            node: record.replier,
            next,
        };
        if !segments.contains(&seg) {
            segments.push(seg);
        }
    }
    segments.sort_by_key(|seg| {
        let pos = active_route
            .iter()
            .position(|&n| n == seg.node)
            .unwrap_or(usize::MAX);
        (pos, seg.node)
    });
    segments
}

/// Fallback when an acknowledgement went missing but no reply exceeded the
/// threshold: sweep every interior node of the active route, in route order.
pub fn fallback_sweep_segments(active_route: &[NodeId]) -> Vec<Segment> {
    let mut segments = Vec::new();
    if active_route.len() < 3 {
        return segments;
    }
    for i in 1..active_route.len() - 1 {
        segments.push(Segment {
            prev: active_route[i - 1],
            node: active_route[i],
            next: active_route[i + 1],
        });
    }
    segments
}

/// Resolve a segment into watch pairs on the route it came from.
pub fn plan_segment(
    segment: Segment,
    route: &[NodeId],
    flow_src: NodeId,
    flow_dst: NodeId,
) -> SegmentPlan {
    let endpoint = |n: NodeId| n == flow_src || n == flow_dst;
    let mut pairs = Vec::new();
    let mut eval_order = Vec::new();
    // Node2, the suspect itself, watched by its predecessor.
    if !endpoint(segment.node) {
        pairs.push((segment.prev, segment.node));
        eval_order.push(segment.node);
    }
    // Node3, the successor, watched by the suspect's position.
    if !endpoint(segment.next) {
        pairs.push((segment.node, segment.next));
        eval_order.push(segment.next);
    }
    // Node1, the predecessor, watched by its own predecessor on the route.
    if !endpoint(segment.prev) {
        if let Some(idx) = route.iter().position(|&n| n == segment.prev) {
            if idx > 0 {
                pairs.push((route[idx - 1], segment.prev));
                eval_order.push(segment.prev);
            }
        }
    }
    SegmentPlan {
        segment,
        pairs,
        eval_order,
    }
}

/// Suspect list resolved into monitoring plans, each positioned on the
/// claimed route of the reply that raised the suspicion.
pub fn build_suspect_plans(
    cache: &[RouteReplyRecord],
    threshold: SeqNo,
    active_route: &[NodeId],
    flow_src: NodeId,
    flow_dst: NodeId,
) -> Vec<SegmentPlan> {
    let segments = build_suspect_list(cache, threshold, active_route);
    segments
        .into_iter()
        .map(|seg| {
            let route = cache
                .iter()
                .find(|r| r.replier == seg.node && r.dest_seq > threshold)
                .map(|r| r.route.as_slice())
                .unwrap_or(active_route);
            plan_segment(seg, route, flow_src, flow_dst)
        })
        .collect()
}

/// Fallback sweep resolved into monitoring plans on the active route.
pub fn fallback_sweep_plans(
    active_route: &[NodeId],
    flow_src: NodeId,
    flow_dst: NodeId,
) -> Vec<SegmentPlan> {
    fallback_sweep_segments(active_route)
        .into_iter()
        .map(|seg| plan_segment(seg, active_route, flow_src, flow_dst))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentVerdict {
    Accuse(NodeId),
    AllClear,
    /// Not enough settled observations yet; keep monitoring.
    Pending,
}

/// Evaluate a monitored segment: the first watched node (in evaluation
/// order) that settled at least `min_observations` entrustments and forwarded
/// less than the tolerated share is accused. All-clear only once every
/// watched node has enough settled observations and none violates.
pub fn evaluate_segment(
    plan: &SegmentPlan,
    records: &BTreeMap<(NodeId, NodeId), MonitorRecord>,
    min_observations: u64,
    tolerance: f64,
) -> SegmentVerdict {
    let mut all_sufficient = true;
    for &watched in &plan.eval_order {
        let Some(&(watcher, _)) = plan.pairs.iter().find(|&&(_, w)| w == watched) else {
            continue;
        };
        let Some(record) = records.get(&(watcher, watched)) else {
            all_sufficient = false;
            continue;
        };
        let resolved = record.resolved();
        if resolved < min_observations {
            all_sufficient = false;
            continue;
        }
        if (record.forwarded as f64) < resolved as f64 * (1.0 - tolerance) {
            return SegmentVerdict::Accuse(watched);
        }
    }
    if plan.eval_order.is_empty() || all_sufficient {
        SegmentVerdict::AllClear
    } else {
        SegmentVerdict::Pending
    }
}

/// Partition cell of the network; monitoring only activates inside
/// qualifying clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub members: BTreeSet<NodeId>,
}

/// Geographic partition into ceil(n / l) clusters of target size l.
///
/// Nodes are bucketed by grid cell (row-major sweep over cells sized for a
/// mean occupancy of l) and then chunked, so the split is deterministic for
/// a fixed topology and the remainder is absorbed by the last cluster.
pub fn cluster_partition(positions: &[Position], grid_side: f64, l: usize) -> Vec<Cluster> {
    let n = positions.len();
    if n == 0 {
        return Vec::new();
    }
    let l = l.max(1);
    let k = n.div_ceil(l);
    if k <= 1 {
        return vec![Cluster {
            members: (0..n).map(|i| NodeId(i as u32)).collect(),
        }];
    }
    let cols = (k as f64).sqrt().ceil() as usize;
    let rows = k.div_ceil(cols);
    let cell_w = grid_side / cols as f64;
    let cell_h = grid_side / rows as f64;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| {
        let p = positions[i];
        let cx = ((p.x / cell_w) as usize).min(cols - 1);
        let cy = ((p.y / cell_h) as usize).min(rows - 1);
        (cy * cols + cx, i)
    });
    let mut clusters = Vec::with_capacity(k);
    for chunk in order.chunks(l) {
        clusters.push(Cluster {
            members: chunk.iter().map(|&i| NodeId(i as u32)).collect(),
        });
    }
    // A short trailing chunk merges into its predecessor only when chunking
    // produced more than the target cluster count.
    while clusters.len() > k {
        let extra = clusters.pop().expect("len > k >= 1");
        clusters
            .last_mut()
            .expect("len >= 1")
            .members
            .extend(extra.members);
    }
    clusters
}

/// A cluster qualifies for monitoring when any segment node is a member.
pub fn cluster_qualify(cluster: &Cluster, segments: &[Segment]) -> bool {
    segments.iter().any(|seg| {
        cluster.members.contains(&seg.prev)
            || cluster.members.contains(&seg.node)
            || cluster.members.contains(&seg.next)
    })
}

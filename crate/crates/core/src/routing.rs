//! AODV-lite route discovery and the black-hole adversary model.
//!
//! Route requests flood with an accumulated path; replies travel the reverse
//! path and install per-epoch forwarding entries. A black-hole node answers
//! every request immediately with a forged, maximally fresh destination
//! sequence number and drops every data packet entrusted to it.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::sim::NodeId;

/// AODV destination sequence number; honest nodes only ever increase theirs.
pub type SeqNo = u64;

/// Offset added by the adversary on top of the freshest sequence number it
/// has observed, keeping forgeries strictly ahead of every honest value
/// without overflowing across repeated discoveries.
pub const DEFAULT_FORGE_OFFSET: SeqNo = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeBehavior {
    Honest,
    BlackHole,
}

/// Flooded route request. `path` accumulates the nodes traversed so the
/// reply can report the full origin-to-target route it vouches for.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteRequest {
    pub origin: NodeId,
    pub target: NodeId,
    pub broadcast_id: u32,
    pub hop_count: u32,
    pub origin_seq: SeqNo,
    /// Freshest destination sequence number known to the origin; the
    /// adversary reads this to stay ahead of it.
    pub requested_dest_seq: SeqNo,
    pub path: Vec<NodeId>,
}

/// Unicast route reply travelling the reverse request path.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteReply {
    pub replier: NodeId,
    pub origin: NodeId,
    pub target: NodeId,
    pub broadcast_id: u32,
    pub dest_seq: SeqNo,
    pub hop_count: u32,
    /// Claimed full route origin -> target. For honest replies this is the
    /// path the request actually travelled; the adversary fabricates the
    /// final link to the target.
    pub route: Vec<NodeId>,
}

/// Cached reply as the source saw it; raw material for the suspect list.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteReplyRecord {
    pub replier: NodeId,
    pub dest_seq: SeqNo,
    pub hop_count: u32,
    pub route: Vec<NodeId>,
}

/// Forwarding entry installed along a reply's path, keyed by discovery epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub dest_seq: SeqNo,
    pub hop_count: u32,
}

/// Discovery epoch: a (origin, broadcast_id) pair names one flood.
pub type Epoch = (NodeId, u32);

/// Identifies one cached reply's path: (origin, broadcast_id, replier).
/// Data packets are pinned to the path of the reply the source selected, so
/// a fresher forged claim at an intermediate hop cannot divert them after
/// the source has excluded the forger.
pub type RouteKey = (NodeId, u32, NodeId);

#[derive(Debug, Clone, PartialEq)]
pub struct DataPayload {
    pub flow_src: NodeId,
    pub flow_dst: NodeId,
    pub data_seq: u64,
    pub route_key: RouteKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AckPayload {
    pub flow_src: NodeId,
    pub flow_dst: NodeId,
    /// Cumulative data packets received at the destination.
    pub received_count: u64,
    /// Destination's own sequence number, an authenticated freshness sample.
    pub dest_seq: SeqNo,
    pub route_key: RouteKey,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PacketKind {
    Rreq(RouteRequest),
    Rrep(RouteReply),
    Data(DataPayload),
    Ack(AckPayload),
}

impl PacketKind {
    pub fn type_label(&self) -> &'static str {
        match self {
            PacketKind::Rreq(_) => "RREQ",
            PacketKind::Rrep(_) => "RREP",
            PacketKind::Data(_) => "DATA",
            PacketKind::Ack(_) => "ACK",
        }
    }

    /// Value for the trace's seq-no column: broadcast id for requests,
    /// destination sequence for replies, flow sequence for data, cumulative
    /// count for acknowledgements.
    pub fn seq_label(&self) -> u64 {
        match self {
            PacketKind::Rreq(r) => r.broadcast_id as u64,
            PacketKind::Rrep(r) => r.dest_seq,
            PacketKind::Data(d) => d.data_seq,
            PacketKind::Ack(a) => a.received_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub kind: PacketKind,
}

/// Per-node routing state, owned by the engine.
#[derive(Debug, Clone)]
pub struct NodeRouting {
    pub behavior: NodeBehavior,
    pub own_seq: SeqNo,
    /// Duplicate-suppression for the RREQ flood.
    pub seen_rreq: BTreeSet<Epoch>,
    /// Next hop toward the origin of each seen discovery.
    pub reverse_route: BTreeMap<Epoch, NodeId>,
    /// Forwarding entries toward the flow target, keyed per reply path so a
    /// forged claim can never shadow the path the source actually selected.
    pub forward_route: BTreeMap<RouteKey, RouteEntry>,
    /// Freshest destination sequence number this node has observed; the
    /// black hole forges from this base.
    pub observed_dest_seq: SeqNo,
    pub forge_offset: SeqNo,
}

impl NodeRouting {
    pub fn new(behavior: NodeBehavior, forge_offset: SeqNo) -> Self {
        Self {
            behavior,
            own_seq: 0,
            seen_rreq: BTreeSet::new(),
            reverse_route: BTreeMap::new(),
            forward_route: BTreeMap::new(),
            observed_dest_seq: 0,
            forge_offset,
        }
    }

    /// Sequence number a black hole advertises: strictly fresher than
    /// anything it has seen.
    pub fn forged_seq(&self) -> SeqNo {
        self.observed_dest_seq + self.forge_offset
    }
}

/// What a node does with a received route request.
#[derive(Debug, Clone, PartialEq)]
pub enum RreqAction {
    /// Already seen this (origin, broadcast_id); do nothing.
    Drop,
    /// Honest relay: rebroadcast with an extended path and bumped hop count.
    Rebroadcast(RouteRequest),
    /// Answer with a reply (honest target or forging black hole).
    Reply(RouteReply),
}

/// Classify a freshly received route request at `node`.
///
/// The black hole replies instantly with a forged freshness claim and a
/// fabricated final hop, and never relays the flood. Duplicate suppression
/// must be applied by the caller via `seen_rreq` before calling.
pub fn handle_rreq(node: NodeId, state: &mut NodeRouting, rreq: &RouteRequest) -> RreqAction {
    if state.seen_rreq.contains(&(rreq.origin, rreq.broadcast_id)) {
        return RreqAction::Drop;
    }
    state.seen_rreq.insert((rreq.origin, rreq.broadcast_id));
    state.observed_dest_seq = state.observed_dest_seq.max(rreq.requested_dest_seq);
    match state.behavior {
        NodeBehavior::BlackHole => {
            let mut route = rreq.path.clone();
            route.push(node);
            route.push(rreq.target);
            RreqAction::Reply(RouteReply {
                replier: node,
                origin: rreq.origin,
                target: rreq.target,
                broadcast_id: rreq.broadcast_id,
                dest_seq: state.forged_seq(),
                hop_count: 1,
                route,
            })
        }
        NodeBehavior::Honest if node == rreq.target => {
            state.own_seq += 1;
            let mut route = rreq.path.clone();
            route.push(node);
            let hop_count = (route.len() - 1) as u32;
            RreqAction::Reply(RouteReply {
                replier: node,
                origin: rreq.origin,
                target: rreq.target,
                broadcast_id: rreq.broadcast_id,
                dest_seq: state.own_seq,
                hop_count,
                route,
            })
        }
        NodeBehavior::Honest => {
            let mut path = rreq.path.clone();
            path.push(node);
            RreqAction::Rebroadcast(RouteRequest {
                hop_count: rreq.hop_count + 1,
                path,
                ..rreq.clone()
            })
        }
    }
}

/// Pick the winning reply: highest destination sequence number, ties broken
/// by fewest hops, then lowest replier id. This is exactly the freshness
/// preference the black hole exploits.
pub fn select_route(cache: &[RouteReplyRecord]) -> Result<&RouteReplyRecord> {
    cache
        .iter()
        .max_by(|a, b| {
            a.dest_seq
                .cmp(&b.dest_seq)
                .then_with(|| b.hop_count.cmp(&a.hop_count))
                .then_with(|| b.replier.cmp(&a.replier))
        })
        .ok_or(Error::NoRoute)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(replier: u32, dest_seq: SeqNo, hop_count: u32) -> RouteReplyRecord {
        RouteReplyRecord {
            replier: NodeId(replier),
            dest_seq,
            hop_count,
            route: vec![NodeId(0), NodeId(replier), NodeId(9)],
        }
    }

    #[test]
    fn forged_reply_wins_selection() {
        let cache = vec![record(5, 17, 3), record(3, 4113, 1)];
        let chosen = select_route(&cache).unwrap();
        assert_eq!(chosen.replier, NodeId(3));
        assert_eq!(chosen.dest_seq, 4113);
    }

    #[test]
    fn equal_seq_prefers_fewer_hops() {
        let cache = vec![record(5, 17, 3), record(4, 17, 2)];
        assert_eq!(select_route(&cache).unwrap().replier, NodeId(4));
    }

    #[test]
    fn equal_seq_and_hops_prefers_lowest_replier() {
        let cache = vec![record(5, 17, 2), record(4, 17, 2)];
        assert_eq!(select_route(&cache).unwrap().replier, NodeId(4));
    }

    #[test]
    fn single_record_is_selected() {
        let cache = vec![record(2, 1, 4)];
        assert_eq!(select_route(&cache).unwrap().replier, NodeId(2));
    }

    #[test]
    fn empty_cache_is_no_route() {
        assert_eq!(select_route(&[]), Err(Error::NoRoute));
    }

    #[test]
    fn honest_target_replies_with_own_seq() {
        let mut state = NodeRouting::new(NodeBehavior::Honest, DEFAULT_FORGE_OFFSET);
        state.own_seq = 16;
        let rreq = RouteRequest {
            origin: NodeId(0),
            target: NodeId(6),
            broadcast_id: 1,
            hop_count: 3,
            origin_seq: 1,
            requested_dest_seq: 0,
            path: vec![NodeId(0), NodeId(1), NodeId(2)],
        };
        match handle_rreq(NodeId(6), &mut state, &rreq) {
            RreqAction::Reply(rep) => {
                assert_eq!(rep.dest_seq, 17);
                assert_eq!(rep.route, vec![NodeId(0), NodeId(1), NodeId(2), NodeId(6)]);
                assert_eq!(rep.hop_count, 3);
            }
            other => panic!("expected reply, got {other:?}"),
        }
    }

    #[test]
    fn black_hole_forges_ahead_of_observed_seq() {
        let mut state = NodeRouting::new(NodeBehavior::BlackHole, DEFAULT_FORGE_OFFSET);
        let rreq = RouteRequest {
            origin: NodeId(0),
            target: NodeId(6),
            broadcast_id: 1,
            hop_count: 1,
            origin_seq: 1,
            requested_dest_seq: 17,
            path: vec![NodeId(0), NodeId(1)],
        };
        match handle_rreq(NodeId(3), &mut state, &rreq) {
            RreqAction::Reply(rep) => {
                assert_eq!(rep.dest_seq, 4113);
                assert_eq!(rep.hop_count, 1);
                assert_eq!(
                    rep.route,
                    vec![NodeId(0), NodeId(1), NodeId(3), NodeId(6)]
                );
            }
            other => panic!("expected forged reply, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_rreq_is_dropped() {
        let mut state = NodeRouting::new(NodeBehavior::Honest, DEFAULT_FORGE_OFFSET);
        let rreq = RouteRequest {
            origin: NodeId(0),
            target: NodeId(6),
            broadcast_id: 1,
            hop_count: 0,
            origin_seq: 1,
            requested_dest_seq: 0,
            path: vec![NodeId(0)],
        };
        assert!(matches!(
            handle_rreq(NodeId(2), &mut state, &rreq),
            RreqAction::Rebroadcast(_)
        ));
        assert_eq!(handle_rreq(NodeId(2), &mut state, &rreq), RreqAction::Drop);
    }
}

//! Shared helpers for integration tests: a parser for the documented trace
//! line format and a ground-truth dropper oracle derived from it. The oracle
//! deliberately works on the rendered text, independent of the simulator's
//! internal counters.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub time: f64,
    pub kind: String,
    pub src: u32,
    pub dst: Option<u32>,
    pub ptype: String,
    pub pid: u64,
    pub seq: u64,
}

pub fn parse_trace(text: &str) -> Vec<TraceLine> {
    text.lines()
        .map(|line| {
            let fields: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(fields.len(), 7, "malformed trace line: {line}");
            TraceLine {
                time: fields[0].parse().expect("time"),
                kind: fields[1].to_string(),
                src: fields[2].parse().expect("src"),
                dst: if fields[3] == "*" {
                    None
                } else {
                    Some(fields[3].parse().expect("dst"))
                },
                ptype: fields[4].to_string(),
                pid: fields[5].parse().expect("pkt id"),
                seq: fields[6].parse().expect("seq no"),
            }
        })
        .collect()
}

/// Ground truth from the trace: the node (excluding the flow destination)
/// that received data packets and never retransmitted them. Returns the
/// unique such node and its drop count.
pub fn ground_truth_dropper(lines: &[TraceLine], flow_dst: u32) -> Option<(u32, u64)> {
    let mut received: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
    let mut transmitted: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
    for line in lines {
        if line.ptype != "DATA" {
            continue;
        }
        match line.kind.as_str() {
            "deliver" => {
                received
                    .entry(line.dst.expect("deliver has dst"))
                    .or_default()
                    .insert(line.pid);
            }
            "transmit" => {
                transmitted.entry(line.src).or_default().insert(line.pid);
            }
            _ => {}
        }
    }
    let mut droppers: Vec<(u32, u64)> = received
        .iter()
        .filter(|&(&node, _)| node != flow_dst)
        .filter_map(|(&node, ids)| {
            let sent = transmitted.get(&node).cloned().unwrap_or_default();
            let dropped = ids.difference(&sent).count() as u64;
            (dropped > 0).then_some((node, dropped))
        })
        .collect();
    droppers.sort_by_key(|&(node, dropped)| (std::cmp::Reverse(dropped), node));
    match droppers.as_slice() {
        [] => None,
        [single] => Some(*single),
        [first, second, ..] => {
            assert!(
                first.1 > second.1,
                "ambiguous ground truth: {droppers:?}"
            );
            Some(*first)
        }
    }
}

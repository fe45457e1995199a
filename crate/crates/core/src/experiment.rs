//! Experiment harness: seeded topology generation for sweep cells and the
//! (n, l, seed, scheme) sweep with CSV assembly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::{RunMetrics, CSV_HEADER};
use crate::error::{Error, Result};
use crate::runner::run_scenario;
use crate::scenario::{
    AdversarySection, DiscoverySection, GridSection, IdsMode, IdsSection, MediumSection,
    NodeEntry, ScenarioSpec, TrafficSection, SCHEMA_VERSION,
};
use crate::sim::{NodeId, Position, Topology};

const SWEEP_GRID_SIDE: f64 = 500.0;
const SWEEP_RANGE: f64 = 170.0;
const MAX_PLACEMENT_ATTEMPTS: u64 = 64;

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(b)
        .wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Source and destination still connected when `skip` is removed?
fn connected_without(topo: &Topology, src: NodeId, dst: NodeId, skip: NodeId) -> bool {
    let mut seen = vec![false; topo.len()];
    let mut frontier = vec![src];
    seen[src.index()] = true;
    while let Some(node) = frontier.pop() {
        if node == dst {
            return true;
        }
        for &next in topo.neighbors(node).expect("node exists").iter() {
            if next != skip && !seen[next.index()] {
                seen[next.index()] = true;
                frontier.push(next);
            }
        }
    }
    false
}

/// Deterministically place `n` nodes so the unit-disk graph is connected and
/// carries a multi-hop flow with one black hole that leaves an honest
/// alternate path. Placement depends only on (n, seed), so runs across
/// schemes and cluster sizes stay matched.
pub fn generate_sweep_topology(n: u32, seed: u64) -> Result<(Vec<NodeEntry>, u32, u32, u32)> {
    for attempt in 0..MAX_PLACEMENT_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(n as u64, mix(seed, attempt)));
        let positions: Vec<Position> = (0..n)
            .map(|_| {
                Position::new(
                    rng.random_range(0.0..SWEEP_GRID_SIDE),
                    rng.random_range(0.0..SWEEP_GRID_SIDE),
                )
            })
            .collect();
        let topo = Topology::new(SWEEP_GRID_SIDE, SWEEP_RANGE, positions.clone());
        if !topo.is_connected() {
            continue;
        }
        // Flow endpoints: the hop-farthest pair, lexicographically smallest.
        let mut best: Option<(u32, NodeId, NodeId)> = None;
        for i in 0..n {
            let dists = topo.hop_distances(NodeId(i));
            for j in (i + 1)..n {
                if let Some(d) = dists[j as usize] {
                    let candidate = (d, NodeId(i), NodeId(j));
                    if best.is_none_or(|(bd, bi, bj)| {
                        d > bd || (d == bd && (NodeId(i), NodeId(j)) < (bi, bj))
                    }) {
                        best = Some(candidate);
                    }
                }
            }
        }
        let Some((hops, src, dst)) = best else {
            continue;
        };
        if hops < 3 {
            continue;
        }
        // Black hole: an interior node whose removal keeps the flow
        // connected, preferably not adjacent to the source so its watcher is
        // a relay rather than the source itself.
        let src_neighbors = topo.neighbors(src).expect("src exists").clone();
        let candidates: Vec<NodeId> = (0..n)
            .map(NodeId)
            .filter(|&h| h != src && h != dst && connected_without(&topo, src, dst, h))
            .collect();
        let black_hole = candidates
            .iter()
            .copied()
            .find(|h| !src_neighbors.contains(h))
            .or_else(|| candidates.first().copied());
        let Some(black_hole) = black_hole else {
            continue;
        };
        let nodes = positions
            .iter()
            .enumerate()
            .map(|(id, p)| NodeEntry {
                id: id as u32,
                x: p.x,
                y: p.y,
            })
            .collect();
        return Ok((nodes, src.0, dst.0, black_hole.0));
    }
    Err(Error::Config(format!(
        "no viable topology for n={n}, seed={seed} after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )))
}

/// Scenario for one sweep cell.
pub fn sweep_scenario(n: u32, l: u64, seed: u64, mode: IdsMode) -> Result<ScenarioSpec> {
    let (nodes, source, dest, black_hole) = generate_sweep_topology(n, seed)?;
    Ok(ScenarioSpec {
        schema_version: SCHEMA_VERSION,
        name: format!("sweep-n{n}-l{l}-s{seed}-{}", mode.label()),
        seed,
        grid: GridSection {
            side: SWEEP_GRID_SIDE,
        },
        medium: MediumSection {
            range: SWEEP_RANGE,
            per_hop_latency: 0.002,
            baseline_loss: 0.0,
        },
        nodes,
        placement: None,
        traffic: TrafficSection {
            source,
            dest,
            packet_size: 512,
            interval: 0.25,
            count: 1000,
            start: 0.25,
        },
        adversary: AdversarySection {
            nodes: vec![black_hole],
            forge_offset: crate::routing::DEFAULT_FORGE_OFFSET,
        },
        ids: IdsSection {
            mode,
            cluster_size: l,
            ..IdsSection::default()
        },
        discovery: DiscoverySection::default(),
    })
}

#[derive(Debug, Clone)]
pub struct SweepParams {
    pub n_values: Vec<u32>,
    pub l_values: Vec<u64>,
    pub seeds: Vec<u64>,
    pub schemes: Vec<IdsMode>,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            n_values: vec![12, 24, 36],
            l_values: vec![3, 4, 6],
            seeds: (1..=10).collect(),
            schemes: vec![IdsMode::Watchdog, IdsMode::Selective],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<RunMetrics>,
    pub csv: String,
    /// Per-cell failures; the sweep continues past them.
    pub failures: Vec<String>,
}

/// Run every (n, l, seed, scheme) cell and assemble the CSV, appending one
/// mean row per (scheme, n, l) group.
pub fn sweep(params: &SweepParams) -> Result<SweepOutput> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for &n in &params.n_values {
        for &l in &params.l_values {
            for &seed in &params.seeds {
                for &mode in &params.schemes {
                    let cell = format!("n={n} l={l} seed={seed} scheme={}", mode.label());
                    let outcome = sweep_scenario(n, l, seed, mode).and_then(|s| run_scenario(&s));
                    match outcome {
                        Ok(output) => {
                            csv.push_str(&output.metrics.csv_row());
                            csv.push('\n');
                            rows.push(output.metrics);
                        }
                        Err(e) => {
                            csv.push_str(&format!("{},{n},{l},{seed},0,0,,0,\n", mode.label()));
                            failures.push(format!("{cell}: {e}"));
                        }
                    }
                }
            }
        }
    }
    for &mode in &params.schemes {
        for &n in &params.n_values {
            for &l in &params.l_values {
                let group: Vec<&RunMetrics> = rows
                    .iter()
                    .filter(|m| {
                        m.scheme == mode.label() && m.n == n as usize && m.cluster_size == l
                    })
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let count = group.len() as f64;
                let mean = |f: &dyn Fn(&RunMetrics) -> f64| -> f64 {
                    group.iter().map(|m| f(m)).sum::<f64>() / count
                };
                let sent = mean(&|m| m.sent as f64);
                let delivered = mean(&|m| m.delivered as f64);
                let pdr = mean(&|m| m.pdr().unwrap_or(0.0));
                let listens = mean(&|m| m.listen_events as f64);
                let detections: Vec<f64> =
                    group.iter().filter_map(|m| m.detection_time).collect();
                let detection = if detections.is_empty() {
                    String::new()
                } else {
                    format!(
                        "{:.6}",
                        detections.iter().sum::<f64>() / detections.len() as f64
                    )
                };
                csv.push_str(&format!(
                    "{},{},{},mean,{:.2},{:.2},{:.2},{:.2},{}\n",
                    mode.label(),
                    n,
                    l,
                    sent,
                    delivered,
                    pdr,
                    listens,
                    detection
                ));
            }
        }
    }
    Ok(SweepOutput {
        rows,
        csv,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_topologies_are_reproducible_and_valid() {
        for &n in &[12u32, 24, 36] {
            let (nodes_a, src_a, dst_a, bh_a) = generate_sweep_topology(n, 1).unwrap();
            let (nodes_b, src_b, dst_b, bh_b) = generate_sweep_topology(n, 1).unwrap();
            assert_eq!(nodes_a, nodes_b);
            assert_eq!((src_a, dst_a, bh_a), (src_b, dst_b, bh_b));
            assert_ne!(src_a, dst_a);
            assert_ne!(bh_a, src_a);
            assert_ne!(bh_a, dst_a);
            let spec = sweep_scenario(n, 3, 1, IdsMode::Watchdog).unwrap();
            assert_eq!(spec.validate(), Vec::new());
        }
    }

    #[test]
    fn single_cell_sweep_emits_one_row_plus_mean() {
        let params = SweepParams {
            n_values: vec![12],
            l_values: vec![3],
            seeds: vec![1],
            schemes: vec![IdsMode::Watchdog],
        };
        let out = sweep(&params).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(out.failures.is_empty());
        let lines: Vec<&str> = out.csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 3, "header + row + mean, got: {:?}", lines);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[2].starts_with("watchdog,12,3,mean,"));
    }
}

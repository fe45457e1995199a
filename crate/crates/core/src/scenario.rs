//! Scenario configuration schema, validation, and the shipped presets.
//!
//! Configs are versioned TOML with a closed schema: unknown keys are parse
//! errors so a typo cannot silently corrupt an experiment. Presets pin
//! explicit coordinates so every run is reproducible from the repository
//! alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Position;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdsMode {
    None,
    Watchdog,
    Selective,
}

impl IdsMode {
    pub fn label(self) -> &'static str {
        match self {
            IdsMode::None => "none",
            IdsMode::Watchdog => "watchdog",
            IdsMode::Selective => "selective",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    pub range: f64,
    #[serde(default = "default_per_hop_latency")]
    pub per_hop_latency: f64,
    #[serde(default)]
    pub baseline_loss: f64,
}

fn default_per_hop_latency() -> f64 {
    0.002
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPlacement {
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub source: u32,
    pub dest: u32,
    #[serde(default = "default_packet_size")]
    pub packet_size: u32,
    #[serde(default = "default_interval")]
    pub interval: f64,
    #[serde(default = "default_count")]
    pub count: u64,
    #[serde(default = "default_start")]
    pub start: f64,
}

fn default_packet_size() -> u32 {
    512
}
fn default_interval() -> f64 {
    0.25
}
fn default_count() -> u64 {
    1000
}
fn default_start() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    #[serde(default)]
    pub nodes: Vec<u32>,
    #[serde(default = "default_forge_offset")]
    pub forge_offset: u64,
}

fn default_forge_offset() -> u64 {
    crate::routing::DEFAULT_FORGE_OFFSET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdsSection {
    pub mode: IdsMode,
    #[serde(default = "default_cluster_size")]
    pub cluster_size: u64,
    #[serde(default = "default_threshold_slack")]
    pub threshold_slack: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_min_observations")]
    pub min_observations: u64,
    /// Forward deadline for the always-on watchdog's pending entries.
    #[serde(default = "default_forward_timeout")]
    pub forward_timeout: f64,
    /// Missing-ACK patience; when absent it is derived as
    /// 2 * (10 * packet interval + 2 * hops * per-hop latency).
    #[serde(default)]
    pub ack_timeout: Option<f64>,
    /// Give up on a monitored segment after this long without a verdict.
    #[serde(default = "default_segment_timeout")]
    pub segment_timeout: f64,
}

fn default_cluster_size() -> u64 {
    3
}
fn default_threshold_slack() -> u64 {
    10
}
fn default_tolerance() -> f64 {
    0.05
}
fn default_min_observations() -> u64 {
    20
}
fn default_forward_timeout() -> f64 {
    20.0
}
fn default_segment_timeout() -> f64 {
    30.0
}

impl Default for IdsSection {
    fn default() -> Self {
        Self {
            mode: IdsMode::None,
            cluster_size: default_cluster_size(),
            threshold_slack: default_threshold_slack(),
            tolerance: default_tolerance(),
            min_observations: default_min_observations(),
            forward_timeout: default_forward_timeout(),
            ack_timeout: None,
            segment_timeout: default_segment_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverySection {
    #[serde(default = "default_discovery_timeout")]
    pub timeout: f64,
    #[serde(default = "default_discovery_retries")]
    pub retries: u32,
}

fn default_discovery_timeout() -> f64 {
    1.0
}
fn default_discovery_retries() -> u32 {
    3
}

impl Default for DiscoverySection {
    fn default() -> Self {
        Self {
            timeout: default_discovery_timeout(),
            retries: default_discovery_retries(),
        }
    }
}

/// A complete simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub grid: GridSection,
    pub medium: MediumSection,
    #[serde(default)]
    pub nodes: Vec<NodeEntry>,
    #[serde(default)]
    pub placement: Option<RandomPlacement>,
    pub traffic: TrafficSection,
    #[serde(default)]
    pub adversary: AdversarySection,
    pub ids: IdsSection,
    #[serde(default)]
    pub discovery: DiscoverySection,
}

/// A named validation problem; an empty diagnostic list means runnable.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn node_count(&self) -> usize {
        if self.nodes.is_empty() {
            self.placement.as_ref().map(|p| p.count as usize).unwrap_or(0)
        } else {
            self.nodes.len()
        }
    }

    /// Check every structural constraint; diagnostics name the offending
    /// field and the violated rule.
    pub fn validate(&self) -> Vec<Diagnostic> {
        fn positive(x: f64) -> bool {
            x.is_finite() && x > 0.0
        }
        let mut out = Vec::new();
        let mut diag = |field: &str, message: String| {
            out.push(Diagnostic {
                field: field.to_string(),
                message,
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            diag(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            );
        }
        if !positive(self.grid.side) {
            diag("grid.side", "grid side must be positive".into());
        }
        if !positive(self.medium.range) {
            diag("medium.range", "transmission range must be positive".into());
        }
        if !positive(self.medium.per_hop_latency) {
            diag(
                "medium.per_hop_latency",
                "per-hop latency must be positive".into(),
            );
        }
        if !(0.0..1.0).contains(&self.medium.baseline_loss) {
            diag(
                "medium.baseline_loss",
                "loss probability must lie in [0, 1)".into(),
            );
        }
        match (!self.nodes.is_empty(), &self.placement) {
            (true, Some(_)) => diag(
                "nodes",
                "give either explicit nodes or random placement, not both".into(),
            ),
            (false, None) => diag("nodes", "no node placement given".into()),
            (false, Some(p)) if p.count < 2 => {
                diag("placement.count", "need at least two nodes".into())
            }
            _ => {}
        }
        let n = self.node_count() as u32;
        if !self.nodes.is_empty() {
            let mut ids: Vec<u32> = self.nodes.iter().map(|e| e.id).collect();
            ids.sort_unstable();
            let expected: Vec<u32> = (0..n).collect();
            if ids != expected {
                diag("nodes.id", format!("node ids must be exactly 0..{}", n - 1));
            }
            for entry in &self.nodes {
                if !(0.0..=self.grid.side).contains(&entry.x)
                    || !(0.0..=self.grid.side).contains(&entry.y)
                {
                    diag(
                        "nodes",
                        format!("node {} lies outside the grid", entry.id),
                    );
                }
            }
        }
        let exists = |id: u32| id < n;
        if !exists(self.traffic.source) {
            diag("traffic.source", format!("node {} does not exist", self.traffic.source));
        }
        if !exists(self.traffic.dest) {
            diag("traffic.dest", format!("node {} does not exist", self.traffic.dest));
        }
        if self.traffic.source == self.traffic.dest {
            diag("traffic.dest", "flow endpoints must differ".into());
        }
        if !positive(self.traffic.interval) {
            diag("traffic.interval", "packet interval must be positive".into());
        }
        for &adv in &self.adversary.nodes {
            if !exists(adv) {
                diag("adversary.nodes", format!("node {adv} does not exist"));
            }
            if adv == self.traffic.source || adv == self.traffic.dest {
                diag(
                    "adversary.nodes",
                    format!(
                        "node {adv} is a flow endpoint; sender and receiver are trusted nodes"
                    ),
                );
            }
        }
        if self.ids.cluster_size < 3 {
            diag(
                "ids.cluster_size",
                "a monitoring segment needs three nodes, so cluster size must be at least 3"
                    .into(),
            );
        }
        if !(0.0..1.0).contains(&self.ids.tolerance) {
            diag("ids.tolerance", "tolerance must lie in [0, 1)".into());
        }
        if self.ids.min_observations == 0 {
            diag(
                "ids.min_observations",
                "at least one observation is required before a verdict".into(),
            );
        }
        if !positive(self.ids.forward_timeout) {
            diag("ids.forward_timeout", "forward timeout must be positive".into());
        }
        if !positive(self.discovery.timeout) {
            diag("discovery.timeout", "discovery timeout must be positive".into());
        }
        out
    }

    /// Explicit node positions in id order. Empty when placement is random.
    pub fn explicit_positions(&self) -> Vec<Position> {
        let mut entries = self.nodes.clone();
        entries.sort_by_key(|e| e.id);
        entries
            .into_iter()
            .map(|e| Position::new(e.x, e.y))
            .collect()
    }
}

/// Geometry shared by the four paper presets: ten nodes on a 500 x 500 grid,
/// a four-hop honest route 0-1-2-4-6, and node 3 parked off that path,
/// adjacent only to node 1.
fn preset_nodes() -> Vec<NodeEntry> {
    let coords: [(f64, f64); 10] = [
        (50.0, 250.0),  // 0: flow source
        (150.0, 250.0), // 1
        (250.0, 250.0), // 2
        (150.0, 140.0), // 3: black hole in the adversary presets
        (350.0, 250.0), // 4
        (100.0, 350.0), // 5
        (450.0, 250.0), // 6: flow destination
        (200.0, 350.0), // 7
        (300.0, 350.0), // 8
        (400.0, 350.0), // 9
    ];
    coords
        .iter()
        .enumerate()
        .map(|(id, &(x, y))| NodeEntry {
            id: id as u32,
            x,
            y,
        })
        .collect()
}

fn paper_preset(name: &str, adversary: Vec<u32>, mode: IdsMode, baseline_loss: f64) -> ScenarioSpec {
    ScenarioSpec {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        seed: 1,
        grid: GridSection { side: 500.0 },
        medium: MediumSection {
            range: 120.0,
            per_hop_latency: 0.002,
            baseline_loss,
        },
        nodes: preset_nodes(),
        placement: None,
        traffic: TrafficSection {
            source: 0,
            dest: 6,
            packet_size: 512,
            interval: 0.25,
            count: 1000,
            start: 0.25,
        },
        adversary: AdversarySection {
            nodes: adversary,
            forge_offset: default_forge_offset(),
        },
        ids: IdsSection {
            mode,
            ..IdsSection::default()
        },
        discovery: DiscoverySection::default(),
    }
}

pub const PRESET_NAMES: [&str; 4] = [
    "paper-baseline",
    "paper-blackhole-noids",
    "paper-blackhole-watchdog",
    "paper-blackhole-selective",
];

/// Look up a shipped preset by name.
pub fn preset(name: &str) -> Option<ScenarioSpec> {
    match name {
        "paper-baseline" => Some(paper_preset(name, vec![], IdsMode::None, 0.003)),
        "paper-blackhole-noids" => Some(paper_preset(name, vec![3], IdsMode::None, 0.003)),
        "paper-blackhole-watchdog" => Some(paper_preset(name, vec![3], IdsMode::Watchdog, 0.003)),
        "paper-blackhole-selective" => {
            Some(paper_preset(name, vec![3], IdsMode::Selective, 0.003))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_cleanly() {
        for name in PRESET_NAMES {
            let spec = preset(name).unwrap();
            assert_eq!(spec.validate(), Vec::new(), "{name}");
        }
    }

    #[test]
    fn preset_round_trips_through_toml() {
        let spec = preset("paper-blackhole-selective").unwrap();
        let text = spec.to_toml().unwrap();
        let parsed = ScenarioSpec::from_toml(&text).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = preset("paper-baseline").unwrap().to_toml().unwrap();
        text.push_str("\nmystery_knob = 4\n");
        let err = ScenarioSpec::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("mystery_knob"));
    }

    #[test]
    fn adversarial_source_is_diagnosed() {
        let mut spec = preset("paper-blackhole-noids").unwrap();
        spec.adversary.nodes = vec![spec.traffic.source];
        let diags = spec.validate();
        assert!(diags.iter().any(|d| d.field == "adversary.nodes"
            && d.message.contains("trusted")));
    }

    #[test]
    fn tiny_cluster_is_diagnosed() {
        let mut spec = preset("paper-blackhole-selective").unwrap();
        spec.ids.cluster_size = 2;
        let diags = spec.validate();
        assert!(diags.iter().any(|d| d.field == "ids.cluster_size"));
    }

    #[test]
    fn preset_geometry_gives_the_intended_adjacency() {
        let spec = preset("paper-blackhole-selective").unwrap();
        let topo = crate::sim::Topology::new(
            spec.grid.side,
            spec.medium.range,
            spec.explicit_positions(),
        );
        use crate::sim::NodeId;
        // Node 3 hangs off the honest route, adjacent to node 1 only.
        assert_eq!(
            topo.neighbors(NodeId(3)).unwrap().iter().copied().collect::<Vec<_>>(),
            vec![NodeId(1)]
        );
        // The honest chain 0-1-2-4-6 exists and the topology is connected.
        for (a, b) in [(0, 1), (1, 2), (2, 4), (4, 6)] {
            assert!(topo.are_neighbors(NodeId(a), NodeId(b)).unwrap());
        }
        assert!(topo.is_connected());
        // Destination is 4 hops from the source.
        assert_eq!(topo.hop_distances(NodeId(0))[6], Some(4));
    }
}

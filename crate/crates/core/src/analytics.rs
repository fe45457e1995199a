//! Closed-form promiscuous-listening cost model and per-run statistics.
//!
//! Two closed forms ship side by side on purpose. The published formula
//! l*(n/l - 2) + 2*(l - 2) algebraically collapses to n - 4 for every valid
//! cluster size, which reproduces the published L=3 row but contradicts the
//! published L=4 and L=6 rows. A separate descriptive fit,
//! 3*(n/l) + 2*(l - 2) - 6, reproduces all nine published selective cells
//! exactly. Surfacing that discrepancy is part of this module's job.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::ids::AlarmReport;
use crate::sim::{NodeId, SimTime, TraceKind, TraceRecord};

/// Fixed header for every CSV this crate emits.
pub const CSV_HEADER: &str = "scheme,n,l,seed,sent,delivered,pdr,listen_events,detection_time";

/// Published selective-scheme listening counts, indexed by (n, l).
pub const TABLE1_SELECTIVE: [(u64, u64, i64); 9] = [
    (12, 3, 8),
    (24, 3, 20),
    (36, 3, 32),
    (12, 4, 7),
    (24, 4, 16),
    (36, 4, 25),
    (12, 6, 8),
    (24, 6, 14),
    (36, 6, 20),
];

/// Published watchdog listening counts, indexed by n.
pub const TABLE1_WATCHDOG: [(u64, i64); 3] = [(12, 10), (24, 22), (36, 34)];

/// Watchdog cost: every node monitors its next neighbor except the source
/// (monitored by nobody) and the destination (monitors nobody), so n - 2.
pub fn watchdog_listens(n: u64) -> Result<i64> {
    if n < 2 {
        return Err(Error::InvalidCostInput(format!(
            "watchdog cost needs n >= 2, got {n}"
        )));
    }
    Ok(n as i64 - 2)
}

/// The published selective cost formula l*(n/l - 2) + 2*(l - 2).
///
/// Expanding gives n - 2l + 2l - 4 = n - 4 for every l dividing n; the
/// published table only agrees with this on its L=3 row.
pub fn selective_listens_published_formula(n: u64, l: u64) -> Result<i64> {
    if l < 2 {
        return Err(Error::InvalidCostInput(format!(
            "cluster size must be at least 2, got {l}"
        )));
    }
    if n == 0 || !n.is_multiple_of(l) {
        return Err(Error::InvalidCostInput(format!(
            "cluster size {l} does not divide node count {n}"
        )));
    }
    let n = n as i64;
    let l = l as i64;
    Ok(l * (n / l - 2) + 2 * (l - 2))
}

/// Descriptive fit 3*(n/l) + 2*(l - 2) - 6 reproducing all nine published
/// selective cells; validated against the full table in this module's tests
/// before anything else relies on it.
pub fn selective_listens_table_fit(n: u64, l: u64) -> Result<i64> {
    if l == 0 || n == 0 || !n.is_multiple_of(l) {
        return Err(Error::InvalidCostInput(format!(
            "cluster size {l} does not divide node count {n}"
        )));
    }
    let n = n as i64;
    let l = l as i64;
    Ok(3 * (n / l) + 2 * (l - 2) - 6)
}

/// One cell of the analytic comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticCell {
    pub n: u64,
    pub l: u64,
    pub published: i64,
    pub published_formula: i64,
    pub table_fit: i64,
    pub published_formula_matches: bool,
    pub table_fit_matches: bool,
}

/// Evaluate both closed forms against every published selective cell.
pub fn analytic_table() -> Vec<AnalyticCell> {
    TABLE1_SELECTIVE
        .iter()
        .map(|&(n, l, published)| {
            let published_formula = selective_listens_published_formula(n, l).expect("table cells valid");
            let table_fit = selective_listens_table_fit(n, l).expect("table cells valid");
            AnalyticCell {
                n,
                l,
                published,
                published_formula,
                table_fit,
                published_formula_matches: published_formula == published,
                table_fit_matches: table_fit == published,
            }
        })
        .collect()
}

/// Render the analytic comparison, flagging each cell where the published
/// formula disagrees with the published table.
pub fn render_analytic_table(explain: bool) -> String {
    let mut out = String::new();
    out.push_str("promiscuous listening cost model\n");
    out.push_str("n   l   published  formula  fit  formula-match  fit-match\n");
    for cell in analytic_table() {
        out.push_str(&format!(
            "{:<3} {:<3} {:<10} {:<8} {:<4} {:<14} {}\n",
            cell.n,
            cell.l,
            cell.published,
            cell.published_formula,
            cell.table_fit,
            if cell.published_formula_matches {
                "match"
            } else {
                "MISMATCH"
            },
            if cell.table_fit_matches {
                "match"
            } else {
                "MISMATCH"
            },
        ));
    }
    out.push_str("watchdog: n - 2 ->");
    for (n, published) in TABLE1_WATCHDOG {
        let v = watchdog_listens(n).expect("n >= 2");
        out.push_str(&format!(" n={n}: {v} (published {published})"));
    }
    out.push('\n');
    if explain {
        out.push_str(
            "\nThe published formula l*(n/l - 2) + 2*(l - 2) expands to\n\
             n - 2l + 2l - 4 = n - 4 for every cluster size l dividing n,\n\
             so it cannot depend on l. It reproduces the published L=3 row\n\
             (and coincidentally the L=6 cell at n=12, where n - 4 = 8) but\n\
             disagrees with the other published L=4 and L=6 cells. The\n\
             descriptive fit 3*(n/l) + 2*(l - 2) - 6 reproduces all nine\n\
             published selective cells; it is a least-structure fit to the\n\
             table, not a published derivation.\n",
        );
    }
    out
}

/// Round half away from zero to two decimals; documented because the
/// published 99.69% for 997/1000 is the source's own rounding artifact
/// (this rule prints 99.70).
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Delivery/drop counters, monitoring cost and alarm log for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub scheme: String,
    pub n: usize,
    pub cluster_size: u64,
    pub seed: u64,
    pub sent: u64,
    pub delivered: u64,
    pub dropped_adversary: u64,
    pub dropped_baseline: u64,
    /// Originated packets still queued or airborne when the run ended.
    pub in_flight: u64,
    pub listen_events: u64,
    pub detection_time: Option<SimTime>,
    pub alarms: Vec<AlarmReport>,
    pub stalled: bool,
}

impl RunMetrics {
    /// Packet delivery ratio as a percentage, two decimals, half-up.
    /// Undefined for an empty run.
    pub fn pdr(&self) -> Option<f64> {
        if self.sent == 0 {
            None
        } else {
            Some(round2(self.delivered as f64 / self.sent as f64 * 100.0))
        }
    }

    pub fn drop_percent(&self) -> Option<f64> {
        self.pdr().map(|p| round2(100.0 - p))
    }

    pub fn csv_row(&self) -> String {
        let pdr = self
            .pdr()
            .map(|p| format!("{p:.2}"))
            .unwrap_or_default();
        let detection = self
            .detection_time
            .map(|t| format!("{t:.6}"))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.n,
            self.cluster_size,
            self.seed,
            self.sent,
            self.delivered,
            pdr,
            self.listen_events,
            detection
        )
    }
}

/// Raw counters handed over by the engine for auditing.
#[derive(Debug, Clone)]
pub struct RunAccounting {
    pub scheme: String,
    pub n: usize,
    pub cluster_size: u64,
    pub seed: u64,
    pub sent: u64,
    pub delivered: u64,
    pub dropped_adversary: u64,
    pub dropped_baseline: u64,
    /// Originated data packets still waiting for a route at the end.
    pub queued_at_end: u64,
    pub listen_events: u64,
    pub detection_time: Option<SimTime>,
    pub alarms: Vec<AlarmReport>,
    pub stalled: bool,
    pub flow_src: NodeId,
    pub flow_dst: NodeId,
    pub adversaries: BTreeSet<NodeId>,
}

/// Re-derive the data-packet ledger from the trace and audit it against the
/// engine's counters. Sent packets must be accounted for as delivered,
/// consumed by an adversary, dropped by ambient loss, or still in flight;
/// any mismatch is a hard failure.
pub fn aggregate(trace: &[TraceRecord], acc: RunAccounting) -> Result<RunMetrics> {
    let mut first_transmit: BTreeSet<u64> = BTreeSet::new();
    let mut delivered_ids: BTreeSet<u64> = BTreeSet::new();
    let mut adversary_receipts: BTreeSet<(NodeId, u64)> = BTreeSet::new();
    let mut transmitted_by: BTreeSet<(NodeId, u64)> = BTreeSet::new();
    for rec in trace {
        if rec.pkt_type != "DATA" {
            continue;
        }
        match rec.kind {
            TraceKind::Transmit => {
                if rec.src == acc.flow_src {
                    first_transmit.insert(rec.pkt_id);
                }
                transmitted_by.insert((rec.src, rec.pkt_id));
            }
            TraceKind::Deliver => {
                let to = rec.dst.expect("deliver records carry a destination");
                if to == acc.flow_dst {
                    delivered_ids.insert(rec.pkt_id);
                } else if acc.adversaries.contains(&to) {
                    adversary_receipts.insert((to, rec.pkt_id));
                }
            }
            _ => {}
        }
    }
    // A packet swallowed by the black hole is one it received and never
    // itself retransmitted.
    let adversary_drops = adversary_receipts
        .iter()
        .filter(|&&(node, id)| !transmitted_by.contains(&(node, id)) && !delivered_ids.contains(&id))
        .count() as u64;

    let on_air = first_transmit.len() as u64;
    if acc.sent != on_air + acc.dropped_baseline + acc.queued_at_end {
        return Err(Error::ConservationViolation(format!(
            "sent {} != transmitted {} + baseline drops {} + queued {}",
            acc.sent, on_air, acc.dropped_baseline, acc.queued_at_end
        )));
    }
    if acc.delivered != delivered_ids.len() as u64 {
        return Err(Error::ConservationViolation(format!(
            "delivered counter {} != trace deliveries {}",
            acc.delivered,
            delivered_ids.len()
        )));
    }
    if acc.dropped_adversary != adversary_drops {
        return Err(Error::ConservationViolation(format!(
            "adversary counter {} != trace-derived drops {}",
            acc.dropped_adversary, adversary_drops
        )));
    }
    let resolved = acc.delivered + acc.dropped_adversary + acc.dropped_baseline;
    if resolved > acc.sent {
        return Err(Error::ConservationViolation(format!(
            "resolved {} exceeds sent {}",
            resolved, acc.sent
        )));
    }
    Ok(RunMetrics {
        scheme: acc.scheme,
        n: acc.n,
        cluster_size: acc.cluster_size,
        seed: acc.seed,
        sent: acc.sent,
        delivered: acc.delivered,
        dropped_adversary: acc.dropped_adversary,
        dropped_baseline: acc.dropped_baseline,
        in_flight: acc.sent - resolved,
        listen_events: acc.listen_events,
        detection_time: acc.detection_time,
        alarms: acc.alarms,
        stalled: acc.stalled,
    })
}

/// Side-by-side comparison of runs of the same scenario under different
/// detection schemes.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<RunMetrics>,
    /// listen_events of the first run over each other run.
    pub listen_ratios: Vec<f64>,
}

pub fn compare(runs: &[RunMetrics]) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::MismatchedScenarios(
            "need at least two runs to compare".into(),
        ));
    }
    let base = &runs[0];
    for run in &runs[1..] {
        if run.n != base.n || run.seed != base.seed || run.sent != base.sent {
            return Err(Error::MismatchedScenarios(format!(
                "run ({}, n={}, seed={}) does not match ({}, n={}, seed={})",
                run.scheme, run.n, run.seed, base.scheme, base.n, base.seed
            )));
        }
    }
    let listen_ratios = runs
        .iter()
        .map(|r| base.listen_events as f64 / (r.listen_events.max(1)) as f64)
        .collect();
    Ok(Comparison {
        runs: runs.to_vec(),
        listen_ratios,
    })
}

impl Comparison {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for run in &self.runs {
            out.push_str(&run.csv_row());
            out.push('\n');
        }
        out.push_str("listen ratios vs first:");
        for r in &self.listen_ratios {
            out.push_str(&format!(" {r:.2}"));
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn watchdog_cost_matches_published_row() {
        for (n, published) in TABLE1_WATCHDOG {
            assert_eq!(watchdog_listens(n).unwrap(), published);
        }
        assert_eq!(watchdog_listens(2).unwrap(), 0);
        assert!(watchdog_listens(1).is_err());
    }

    #[test]
    fn published_formula_published_examples() {
        assert_eq!(selective_listens_published_formula(12, 3).unwrap(), 8);
        assert_eq!(selective_listens_published_formula(36, 3).unwrap(), 32);
        // The documented finding: the formula gives n - 4 = 20 at (24, 6),
        // while the published table prints 14.
        assert_eq!(selective_listens_published_formula(24, 6).unwrap(), 20);
        assert!(selective_listens_published_formula(25, 6).is_err());
    }

    #[test]
    fn published_formula_collapses_to_n_minus_4() {
        for n in 6..=600u64 {
            for l in 2..=n {
                if !n.is_multiple_of(l) {
                    continue;
                }
                assert_eq!(
                    selective_listens_published_formula(n, l).unwrap(),
                    n as i64 - 4,
                    "n={n} l={l}"
                );
            }
        }
    }

    // The oracle for the descriptive fit: it must reproduce every published
    // selective cell exactly before anything else relies on it.
    #[test]
    fn table_fit_reproduces_all_nine_cells() {
        for (n, l, published) in TABLE1_SELECTIVE {
            assert_eq!(
                selective_listens_table_fit(n, l).unwrap(),
                published,
                "cell n={n} l={l}"
            );
        }
    }

    #[test]
    fn both_forms_stay_below_watchdog_with_multiple_clusters() {
        for n in (6..=600u64).step_by(2) {
            for l in 3..=n / 2 {
                if !n.is_multiple_of(l) {
                    continue;
                }
                let wd = watchdog_listens(n).unwrap();
                assert!(selective_listens_published_formula(n, l).unwrap() <= wd);
                assert!(
                    selective_listens_table_fit(n, l).unwrap() <= wd,
                    "n={n} l={l}"
                );
            }
        }
    }

    #[test]
    fn analytic_table_flags_the_expected_mismatches() {
        let cells = analytic_table();
        assert!(cells.iter().all(|c| c.table_fit_matches));
        for cell in &cells {
            let expect_match = cell.l == 3 || (cell.n == 12 && cell.l == 6);
            assert_eq!(cell.published_formula_matches, expect_match, "{cell:?}");
        }
    }

    fn metrics(sent: u64, delivered: u64) -> RunMetrics {
        RunMetrics {
            scheme: "none".into(),
            n: 10,
            cluster_size: 3,
            seed: 1,
            sent,
            delivered,
            dropped_adversary: 0,
            dropped_baseline: sent - delivered,
            in_flight: 0,
            listen_events: 0,
            detection_time: None,
            alarms: Vec::new(),
            stalled: false,
        }
    }

    #[test]
    fn pdr_rounds_half_up_to_two_decimals() {
        assert_eq!(metrics(1000, 997).pdr(), Some(99.70));
        assert_eq!(metrics(1000, 3).pdr(), Some(0.30));
        assert_eq!(metrics(0, 0).pdr(), None);
    }

    #[test]
    fn csv_row_shape_is_stable() {
        let m = metrics(1000, 997);
        assert_eq!(m.csv_row(), "none,10,3,1,1000,997,99.70,0,");
        assert_eq!(CSV_HEADER.split(',').count(), m.csv_row().split(',').count());
    }

    #[test]
    fn compare_rejects_mismatched_scenarios() {
        let a = metrics(1000, 997);
        let mut b = metrics(1000, 990);
        b.seed = 2;
        assert!(compare(&[a, b]).is_err());
    }

    #[test]
    fn conservation_violation_is_a_hard_failure() {
        use crate::sim::{NodeId, TraceKind, TraceRecord};
        let trace = vec![TraceRecord {
            time: 0.25,
            kind: TraceKind::Transmit,
            src: NodeId(0),
            dst: Some(NodeId(1)),
            pkt_type: "DATA",
            pkt_id: 1,
            seq_no: 0,
        }];
        let acc = RunAccounting {
            scheme: "none".into(),
            n: 2,
            cluster_size: 3,
            seed: 1,
            sent: 5,
            delivered: 0,
            dropped_adversary: 0,
            dropped_baseline: 0,
            queued_at_end: 0,
            listen_events: 0,
            detection_time: None,
            alarms: Vec::new(),
            stalled: false,
            flow_src: NodeId(0),
            flow_dst: NodeId(1),
            adversaries: BTreeSet::new(),
        };
        let err = aggregate(&trace, acc).unwrap_err();
        assert!(matches!(err, Error::ConservationViolation(_)));
    }

    #[test]
    fn compare_of_identical_runs_has_unit_ratio() {
        let mut a = metrics(1000, 997);
        a.listen_events = 50;
        let cmp = compare(&[a.clone(), a]).unwrap();
        assert_eq!(cmp.listen_ratios, vec![1.0, 1.0]);
    }
}

//! Rejection and occupancy metrics, phase aggregates and their text forms.
//!
//! Rejections are attributed to the round in which they happen, not the
//! round the request arrived. A preempted service counts as a rejection of
//! its remaining `r x d` mass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::requests::{Mode, Operator, ServiceKind};
use crate::scenario::{Phase, Scenario};

pub type Key = (Operator, ServiceKind);

/// Every `(operator, service)` pair, PS first.
pub fn keys() -> impl Iterator<Item = Key> {
    Operator::ALL
        .into_iter()
        .flat_map(|o| ServiceKind::ALL.into_iter().map(move |s| (o, s)))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyMetrics {
    /// `r x d` of requests arriving this round.
    pub generated_mass: u64,
    /// `r x d` of requests embedded or rejected this round.
    pub resolved_mass: u64,
    pub rejected_mass: u64,
    /// Remaining `r x d` of active services dropped by a repack.
    pub preempted_mass: u64,
    pub occupied_cells: usize,
    pub buffer_depth: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: u32,
    pub mode: Mode,
    pub capacity: usize,
    pub per_key: BTreeMap<Key, KeyMetrics>,
    pub occupied_cells: usize,
    pub preempted_count: usize,
    /// Sum over placements of priority level x area.
    pub weighted_area: u64,
}

impl RoundMetrics {
    pub fn new(round: u32, mode: Mode, capacity: usize) -> Self {
        RoundMetrics {
            round,
            mode,
            capacity,
            per_key: keys().map(|k| (k, KeyMetrics::default())).collect(),
            occupied_cells: 0,
            preempted_count: 0,
            weighted_area: 0,
        }
    }

    pub fn key(&self, key: Key) -> &KeyMetrics {
        &self.per_key[&key]
    }

    pub fn key_mut(&mut self, key: Key) -> &mut KeyMetrics {
        self.per_key.get_mut(&key).expect("all keys present")
    }

    pub fn occupancy(&self, key: Key) -> f64 {
        self.key(key).occupied_cells as f64 / self.capacity as f64
    }

    pub fn total_occupancy(&self) -> f64 {
        self.occupied_cells as f64 / self.capacity as f64
    }

    /// Per-round rejection rate including preempted mass.
    pub fn rejection_rate(&self, key: Key) -> Option<f64> {
        let k = self.key(key);
        rejection_rate(k.rejected_mass + k.preempted_mass, k.resolved_mass)
    }
}

/// `rejected / resolved`, absent when nothing was resolved.
pub fn rejection_rate(rejected_mass: u64, resolved_mass: u64) -> Option<f64> {
    (resolved_mass > 0).then(|| rejected_mass as f64 / resolved_mass as f64)
}

/// Centered moving average over `window` rounds, skipping absent values.
/// Windows near the ends are truncated; output length equals input length.
pub fn smooth(series: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    assert!(window >= 1, "smoothing window must be at least 1");
    let before = (window - 1) / 2;
    let after = window / 2;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(series.len());
            let (sum, n) = series[lo..hi]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}

/// Aggregation target: one operator, one service, or both wildcarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Group {
    pub operator: Option<Operator>,
    pub service: Option<ServiceKind>,
}

impl Group {
    pub const ALL: Group = Group {
        operator: None,
        service: None,
    };

    pub fn new(operator: Option<Operator>, service: Option<ServiceKind>) -> Self {
        Group { operator, service }
    }

    pub fn operator(op: Operator) -> Self {
        Group::new(Some(op), None)
    }

    pub fn service(svc: ServiceKind) -> Self {
        Group::new(None, Some(svc))
    }

    pub fn matches(&self, key: Key) -> bool {
        self.operator.is_none_or(|o| o == key.0) && self.service.is_none_or(|s| s == key.1)
    }

    /// All twelve groups: each operator and "all", crossed with each service and "all".
    pub fn every() -> impl Iterator<Item = Group> {
        [None, Some(Operator::PublicSafety), Some(Operator::Commercial)]
            .into_iter()
            .flat_map(|o| {
                [
                    None,
                    Some(ServiceKind::Voice),
                    Some(ServiceKind::Video),
                    Some(ServiceKind::Msg),
                ]
                .into_iter()
                .map(move |s| Group::new(o, s))
            })
    }

    /// Stable `vo.service` label, e.g. `ps.video` or `all.all`.
    pub fn label(&self) -> String {
        let vo = match self.operator {
            None => "all",
            Some(Operator::PublicSafety) => "ps",
            Some(Operator::Commercial) => "commercial",
        };
        let svc = self.service.map_or("all", ServiceKind::as_str);
        format!("{vo}.{svc}")
    }
}

/// Sums of one group over one phase.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhaseStats {
    pub rounds: u64,
    pub generated_mass: u64,
    pub resolved_mass: u64,
    pub rejected_mass: u64,
    pub preempted_mass: u64,
    pub occupied_cell_rounds: u64,
    pub capacity_rounds: u64,
}

impl PhaseStats {
    /// Mass-weighted rejection rate, preemptions included.
    pub fn rejection_rate(&self) -> Option<f64> {
        rejection_rate(self.rejected_mass + self.preempted_mass, self.resolved_mass)
    }

    /// Mean fraction of the substrate held by this group.
    pub fn mean_occupancy(&self) -> f64 {
        if self.capacity_rounds == 0 {
            0.0
        } else {
            self.occupied_cell_rounds as f64 / self.capacity_rounds as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSummary {
    pub stats: BTreeMap<(Phase, Group), PhaseStats>,
    pub weighted_area: BTreeMap<Phase, u64>,
}

impl PhaseSummary {
    pub fn get(&self, phase: Phase, group: Group) -> &PhaseStats {
        &self.stats[&(phase, group)]
    }

    pub fn rejection_rate(&self, phase: Phase, group: Group) -> Option<f64> {
        self.get(phase, group).rejection_rate()
    }

    pub fn mean_occupancy(&self, phase: Phase, group: Group) -> f64 {
        self.get(phase, group).mean_occupancy()
    }

    /// Share of occupied cells held by `group`.
    pub fn served_share(&self, phase: Phase, group: Group) -> Option<f64> {
        let all = self.get(phase, Group::ALL).occupied_cell_rounds;
        (all > 0).then(|| self.get(phase, group).occupied_cell_rounds as f64 / all as f64)
    }

    /// Share of generated `r x d` mass requested by `group`.
    pub fn requested_share(&self, phase: Phase, group: Group) -> Option<f64> {
        let all = self.get(phase, Group::ALL).generated_mass;
        (all > 0).then(|| self.get(phase, group).generated_mass as f64 / all as f64)
    }

    /// Flattened `phase.vo.service.metric` values; absent rates map to `None`.
    pub fn values(&self) -> BTreeMap<String, Option<f64>> {
        let mut out = BTreeMap::new();
        for phase in Phase::ALL {
            for group in Group::every() {
                let s = self.get(phase, group);
                let prefix = format!("{phase}.{}", group.label());
                out.insert(format!("{prefix}.rejection_rate"), s.rejection_rate());
                out.insert(format!("{prefix}.mean_occupancy"), Some(s.mean_occupancy()));
                out.insert(format!("{prefix}.served_share"), self.served_share(phase, group));
                out.insert(format!("{prefix}.requested_share"), self.requested_share(phase, group));
                out.insert(format!("{prefix}.generated_mass"), Some(s.generated_mass as f64));
                out.insert(format!("{prefix}.resolved_mass"), Some(s.resolved_mass as f64));
                out.insert(format!("{prefix}.rejected_mass"), Some(s.rejected_mass as f64));
                out.insert(format!("{prefix}.preempted_mass"), Some(s.preempted_mass as f64));
            }
            out.insert(
                format!("{phase}.rounds"),
                Some(self.get(phase, Group::ALL).rounds as f64),
            );
            out.insert(
                format!("{phase}.weighted_area"),
                Some(self.weighted_area[&phase] as f64),
            );
        }
        out
    }
}

/// Per-phase, per-group aggregates of a run.
pub fn phase_summary(metrics: &[RoundMetrics], scenario: &Scenario) -> PhaseSummary {
    let mut stats: BTreeMap<(Phase, Group), PhaseStats> = Phase::ALL
        .into_iter()
        .flat_map(|p| Group::every().map(move |g| ((p, g), PhaseStats::default())))
        .collect();
    let mut weighted_area: BTreeMap<Phase, u64> = Phase::ALL.into_iter().map(|p| (p, 0)).collect();

    for m in metrics {
        let phase = scenario.phase_at(m.round);
        *weighted_area.get_mut(&phase).unwrap() += m.weighted_area;
        for group in Group::every() {
            let s = stats.get_mut(&(phase, group)).unwrap();
            s.rounds += 1;
            s.capacity_rounds += m.capacity as u64;
            for (key, k) in &m.per_key {
                if group.matches(*key) {
                    s.generated_mass += k.generated_mass;
                    s.resolved_mass += k.resolved_mass;
                    s.rejected_mass += k.rejected_mass;
                    s.preempted_mass += k.preempted_mass;
                    s.occupied_cell_rounds += k.occupied_cells as u64;
                }
            }
        }
    }
    PhaseSummary { stats, weighted_area }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

pub const CSV_HEADER: &str =
    "round,mode,vo,service,rejected_mass,resolved_mass,rejection_rate,occupancy,buffer_depth,preempted_mass";

/// One row per `(round, operator, service)`.
pub fn metrics_csv(metrics: &[RoundMetrics]) -> String {
    let mut out = String::with_capacity(metrics.len() * 6 * 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for m in metrics {
        for (key, k) in &m.per_key {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6},{},{}",
                m.round,
                m.mode,
                key.0,
                key.1,
                k.rejected_mass,
                k.resolved_mass,
                fmt_opt(m.rejection_rate(*key)),
                m.occupancy(*key),
                k.buffer_depth,
                k.preempted_mass,
            );
        }
    }
    out
}

/// `key = value` lines, sorted by key.
pub fn summary_text(meta: &[(&str, String)], summary: &PhaseSummary) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "meta.{k} = {v}");
    }
    for (k, v) in summary.values() {
        let _ = writeln!(out, "{k} = {}", fmt_opt(v));
    }
    out
}

/// Mean and sample standard deviation of one metric over replications.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

pub fn aggregate(values: &[Option<f64>]) -> Aggregate {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let n = present.len();
    if n == 0 {
        return Aggregate {
            n,
            mean: None,
            sd: None,
        };
    }
    let mean = present.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some(var.sqrt())
    } else {
        Some(0.0)
    };
    Aggregate {
        n,
        mean: Some(mean),
        sd,
    }
}

pub fn format_value(v: Option<f64>) -> String {
    fmt_opt(v)
}

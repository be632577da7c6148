//! Karnaugh-map style embedding engines.
//!
//! Requests are served in priority order, largest first. Each request goes
//! into the smallest maximal free rectangle that can hold one of its shapes,
//! at whichever corner of that rectangle leaves the lowest Embedding Density
//! Index. The static engine never moves what is already placed; the dynamic
//! engine clears the substrate every round and re-embeds active services
//! together with the new requests.

mod oracle;

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{EdiBorder, PlacementId, Rect, Substrate};
use crate::requests::{Mode, PriorityPolicy, Shape, Vrr, VrrId};

pub use oracle::{embed_oracle, OracleSolution, ORACLE_MAX_CELLS, ORACLE_MAX_REQUESTS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Static,
    Dynamic,
    Oracle,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Static => "static",
            Algorithm::Dynamic => "dynamic",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(Algorithm::Static),
            "dynamic" => Ok(Algorithm::Dynamic),
            "oracle" => Ok(Algorithm::Oracle),
            _ => Err(format!("unknown algorithm `{s}` (expected static, dynamic or oracle)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error(
        "exhaustive search limited to {max_cells} cells and {max_requests} requests, got {cells} cells and {requests} requests"
    )]
    TooLarge {
        cells: usize,
        requests: usize,
        max_cells: usize,
        max_requests: usize,
    },
}

/// A request with the priority level it holds this round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueueEntry {
    pub vrr: Vrr,
    pub priority: u32,
}

impl QueueEntry {
    pub fn new(vrr: Vrr, priority: u32) -> Self {
        QueueEntry { vrr, priority }
    }

    fn sort_key(&self) -> (Reverse<u32>, Reverse<usize>, u32, VrrId) {
        (
            Reverse(self.priority),
            Reverse(self.vrr.area()),
            self.vrr.arrival_round,
            self.vrr.id,
        )
    }
}

/// Requests sorted by priority (desc), shaped area (desc), arrival, id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmbedQueue {
    entries: Vec<QueueEntry>,
}

impl EmbedQueue {
    pub fn from_entries(mut entries: Vec<QueueEntry>) -> Self {
        entries.sort_by_key(QueueEntry::sort_key);
        EmbedQueue { entries }
    }

    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueueEntry> {
        self.entries.iter()
    }
}

pub fn order_queue<'a>(vrrs: impl IntoIterator<Item = &'a Vrr>, mode: Mode, policy: &PriorityPolicy) -> EmbedQueue {
    EmbedQueue::from_entries(
        vrrs.into_iter()
            .map(|v| QueueEntry::new(v.clone(), policy.priority_of(v.owner, v.service, mode)))
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Embedded(Rect),
    Deferred,
    Rejected,
    Preempted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbedDecision {
    pub vrr: VrrId,
    pub outcome: Outcome,
}

impl EmbedDecision {
    pub fn rect(&self) -> Option<Rect> {
        match self.outcome {
            Outcome::Embedded(r) => Some(r),
            _ => None,
        }
    }
}

/// The four corner placements of an `shape` inside `region`, in tie-break
/// order: top-left, top-right, bottom-left, bottom-right.
pub fn corners(region: &Rect, shape: Shape) -> [Rect; 4] {
    let right = region.f_end() - shape.f;
    let bottom = region.t_end() - shape.t;
    [
        Rect::new(region.f0, region.t0, shape.f, shape.t),
        Rect::new(right, region.t0, shape.f, shape.t),
        Rect::new(region.f0, bottom, shape.f, shape.t),
        Rect::new(right, bottom, shape.f, shape.t),
    ]
}

/// Smallest maximal free rectangle admitting any of `shapes`, and the shape.
pub fn choose_region(substrate: &Substrate, shapes: &[Shape]) -> Option<(Rect, Shape)> {
    let mut best: Option<(Rect, Shape)> = None;
    for region in substrate.maximal_free_rectangles() {
        if best.is_some_and(|(b, _)| b.area() <= region.area()) {
            continue;
        }
        if let Some(shape) = shapes.iter().find(|s| s.f <= region.f && s.t <= region.t) {
            best = Some((region, *shape));
        }
    }
    best
}

/// Where one request would go on `substrate`, or `None` if no free region
/// can hold any of its shapes.
pub fn try_embed_one(substrate: &Substrate, shapes: &[Shape]) -> Option<Rect> {
    let (region, shape) = choose_region(substrate, shapes)?;
    // the EDI before placement is common to all corners, so compare deltas
    corners(&region, shape)
        .into_iter()
        .enumerate()
        .min_by_key(|(i, rect)| (substrate.edi_delta(rect), *i))
        .map(|(_, rect)| rect)
}

/// Embed `queue` in order on top of the existing placements, which never move.
pub fn embed_static(substrate: &mut Substrate, queue: &EmbedQueue) -> Vec<EmbedDecision> {
    queue
        .iter()
        .map(|entry| {
            let outcome = match try_embed_one(substrate, &entry.vrr.shapes) {
                Some(rect) => {
                    substrate
                        .place(rect, PlacementId(entry.vrr.id.0))
                        .expect("free-region search returned an occupied rectangle");
                    Outcome::Embedded(rect)
                }
                None => Outcome::Deferred,
            };
            EmbedDecision {
                vrr: entry.vrr.id,
                outcome,
            }
        })
        .collect()
}

/// Repack active services and new requests onto an empty substrate.
///
/// Within a priority level, active services go before new requests. An
/// active service that no longer fits is [`Outcome::Preempted`]; a new
/// request that does not fit is [`Outcome::Deferred`].
pub fn embed_dynamic(
    active: &[QueueEntry],
    queue: &EmbedQueue,
    dims: (usize, usize),
    border: EdiBorder,
) -> (Vec<EmbedDecision>, Substrate) {
    let mut combined: Vec<(&QueueEntry, bool)> = active
        .iter()
        .map(|e| (e, true))
        .chain(queue.iter().map(|e| (e, false)))
        .collect();
    combined.sort_by_key(|(e, is_active)| {
        let (p, area, arrival, id) = e.sort_key();
        (p, !is_active, area, arrival, id)
    });

    let mut substrate = Substrate::with_border(dims.0, dims.1, border);
    let decisions = combined
        .into_iter()
        .map(|(entry, is_active)| {
            let outcome = match try_embed_one(&substrate, &entry.vrr.shapes) {
                Some(rect) => {
                    substrate
                        .place(rect, PlacementId(entry.vrr.id.0))
                        .expect("free-region search returned an occupied rectangle");
                    Outcome::Embedded(rect)
                }
                None if is_active => Outcome::Preempted,
                None => Outcome::Deferred,
            };
            EmbedDecision {
                vrr: entry.vrr.id,
                outcome,
            }
        })
        .collect();
    (decisions, substrate)
}

/// Embedded area per distinct priority level, highest level first. Two
/// objectives over the same request set compare lexicographically.
pub fn priority_objective(entries: &[QueueEntry], embedded: impl Fn(VrrId) -> bool) -> Vec<usize> {
    let mut levels: Vec<u32> = entries.iter().map(|e| e.priority).collect();
    levels.sort_unstable_by(|a, b| b.cmp(a));
    levels.dedup();
    levels
        .iter()
        .map(|&level| {
            entries
                .iter()
                .filter(|e| e.priority == level && embedded(e.vrr.id))
                .map(|e| e.vrr.area())
                .sum()
        })
        .collect()
}

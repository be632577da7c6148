//! Virtual resource requests, their owners and services, and priority policy.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    Voice,
    Video,
    Msg,
}

impl ServiceKind {
    pub const ALL: [ServiceKind; 3] = [ServiceKind::Voice, ServiceKind::Video, ServiceKind::Msg];

    pub fn as_str(self) -> &'static str {
        match self {
            ServiceKind::Voice => "voice",
            ServiceKind::Video => "video",
            ServiceKind::Msg => "msg",
        }
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ServiceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ServiceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown service `{s}`"))
    }
}

/// A virtual operator sharing the substrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "PS")]
    PublicSafety,
    Commercial,
}

impl Operator {
    pub const ALL: [Operator; 2] = [Operator::PublicSafety, Operator::Commercial];

    pub fn as_str(self) -> &'static str {
        match self {
            Operator::PublicSafety => "PS",
            Operator::Commercial => "Commercial",
        }
    }

    pub fn is_public_safety(self) -> bool {
        self == Operator::PublicSafety
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}

/// Hypervisor operating mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Normal,
    Emergency,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Normal => "normal",
            Mode::Emergency => "emergency",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Traffic model of one service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub kind: ServiceKind,
    /// Mean lifetime in rounds.
    pub mean_duration: f64,
    pub size_min: usize,
    pub size_max: usize,
    /// Rounds a request may wait in the buffer.
    pub max_delay: u32,
}

impl ServiceSpec {
    pub fn standard(kind: ServiceKind) -> Self {
        let (mean_duration, size_min, size_max, max_delay) = match kind {
            ServiceKind::Voice => (30.0, 1, 2, 1),
            ServiceKind::Video => (10.0, 8, 25, 2),
            ServiceKind::Msg => (3.0, 1, 8, 4),
        };
        ServiceSpec {
            kind,
            mean_duration,
            size_min,
            size_max,
            max_delay,
        }
    }
}

/// Width and height of a candidate rectangle for a request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shape {
    pub f: usize,
    pub t: usize,
}

impl Shape {
    pub const fn new(f: usize, t: usize) -> Self {
        Shape { f, t }
    }

    pub fn area(&self) -> usize {
        self.f * self.t
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RequestError {
    #[error("request for {r} PRBs cannot be shaped on a {f}x{t} substrate")]
    Infeasible { r: usize, f: usize, t: usize },
}

/// All rectangles of the smallest area covering at least `r` PRBs that fit
/// an `f x t` substrate, most-square first, then by width.
pub fn shape_candidates(r: usize, f: usize, t: usize) -> Result<Vec<Shape>, RequestError> {
    if r == 0 || r > f * t {
        return Err(RequestError::Infeasible { r, f, t });
    }
    let best = (1..=f)
        .filter_map(|w| {
            let h = r.div_ceil(w);
            (h <= t).then_some(w * h)
        })
        .min()
        .ok_or(RequestError::Infeasible { r, f, t })?;
    let mut shapes: Vec<Shape> = (1..=f)
        .filter(|w| best % w == 0 && best / w <= t)
        .map(|w| Shape::new(w, best / w))
        .collect();
    shapes.sort_by_key(|s| (s.f.abs_diff(s.t), s.f));
    Ok(shapes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VrrId(pub u64);

impl fmt::Display for VrrId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A virtual resource request. Its priority is not stored; it depends on the
/// operating mode and is looked up from the [`PriorityPolicy`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vrr {
    pub id: VrrId,
    pub owner: Operator,
    pub service: ServiceKind,
    /// Requested PRBs.
    pub r: usize,
    /// Candidate rectangles, all of the same (minimal) area.
    pub shapes: Vec<Shape>,
    /// Lifetime in rounds.
    pub duration: u32,
    pub arrival_round: u32,
    /// Rounds spent in the buffer without being embedded.
    pub waited: u32,
}

impl Vrr {
    /// Build a request, deriving its shapes from the substrate dimensions.
    pub fn new(
        id: VrrId,
        owner: Operator,
        service: ServiceKind,
        r: usize,
        duration: u32,
        arrival_round: u32,
        dims: (usize, usize),
    ) -> Result<Self, RequestError> {
        Ok(Vrr {
            id,
            owner,
            service,
            r,
            shapes: shape_candidates(r, dims.0, dims.1)?,
            duration,
            arrival_round,
            waited: 0,
        })
    }

    /// Area of the shaped rectangle.
    pub fn area(&self) -> usize {
        self.shapes.first().map_or(0, Shape::area)
    }

    /// `r x d`, the weight used by the rejection metric.
    pub fn mass(&self) -> u64 {
        self.r as u64 * u64::from(self.duration)
    }
}

/// Integer priority levels per mode; higher is served first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriorityPolicy {
    levels: BTreeMap<(Mode, Operator, ServiceKind), u32>,
}

impl PriorityPolicy {
    /// Build from explicit levels. Returns the first missing
    /// `(mode, operator, service)` triple if the table is incomplete.
    pub fn from_levels(
        levels: impl IntoIterator<Item = ((Mode, Operator, ServiceKind), u32)>,
    ) -> Result<Self, (Mode, Operator, ServiceKind)> {
        let levels: BTreeMap<_, _> = levels.into_iter().collect();
        for mode in [Mode::Normal, Mode::Emergency] {
            for op in Operator::ALL {
                for svc in ServiceKind::ALL {
                    if !levels.contains_key(&(mode, op, svc)) {
                        return Err((mode, op, svc));
                    }
                }
            }
        }
        Ok(PriorityPolicy { levels })
    }

    /// Normal: service order voice > video > msg for both operators.
    /// Emergency: every PS service above every commercial one; commercial
    /// messaging moves above commercial video.
    pub fn standard() -> Self {
        use Operator::*;
        use ServiceKind::*;
        let mut levels = Vec::new();
        for op in Operator::ALL {
            levels.push(((Mode::Normal, op, Voice), 3));
            levels.push(((Mode::Normal, op, Video), 2));
            levels.push(((Mode::Normal, op, Msg), 1));
        }
        levels.extend([
            ((Mode::Emergency, PublicSafety, Voice), 6),
            ((Mode::Emergency, PublicSafety, Video), 5),
            ((Mode::Emergency, PublicSafety, Msg), 4),
            ((Mode::Emergency, Commercial, Voice), 3),
            ((Mode::Emergency, Commercial, Msg), 2),
            ((Mode::Emergency, Commercial, Video), 1),
        ]);
        Self::from_levels(levels).expect("default policy is complete")
    }

    pub fn priority_of(&self, owner: Operator, service: ServiceKind, mode: Mode) -> u32 {
        self.levels[&(mode, owner, service)]
    }

    pub fn levels(&self) -> impl Iterator<Item = ((Mode, Operator, ServiceKind), u32)> + '_ {
        self.levels.iter().map(|(k, v)| (*k, *v))
    }
}

impl Default for PriorityPolicy {
    fn default() -> Self {
        Self::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_min_area(r: usize, f: usize, t: usize) -> Option<usize> {
        let mut best = None;
        for w in 1..=f {
            for h in 1..=t {
                if w * h >= r && best.is_none_or(|b| w * h < b) {
                    best = Some(w * h);
                }
            }
        }
        best
    }

    #[test]
    fn shape_examples() {
        assert_eq!(shape_candidates(1, 20, 20).unwrap(), vec![Shape::new(1, 1)]);
        assert_eq!(
            shape_candidates(5, 20, 20).unwrap(),
            vec![Shape::new(1, 5), Shape::new(5, 1)]
        );
        assert_eq!(shape_candidates(25, 20, 20).unwrap(), vec![Shape::new(5, 5)]);
        assert_eq!(
            shape_candidates(401, 20, 20),
            Err(RequestError::Infeasible { r: 401, f: 20, t: 20 })
        );
        assert!(shape_candidates(0, 20, 20).is_err());
        // prime beyond the substrate side rounds up
        assert_eq!(
            shape_candidates(23, 20, 20).unwrap(),
            vec![
                Shape::new(4, 6),
                Shape::new(6, 4),
                Shape::new(3, 8),
                Shape::new(8, 3),
                Shape::new(2, 12),
                Shape::new(12, 2)
            ]
        );
    }

    #[test]
    fn shapes_are_minimal_for_all_sizes() {
        for dim in [1usize, 3, 7, 20] {
            for (f, t) in [(dim, dim), (dim, 20 - dim.min(19))] {
                for r in 1..=f * t {
                    let shapes = shape_candidates(r, f, t).unwrap();
                    let best = brute_min_area(r, f, t).unwrap();
                    assert!(!shapes.is_empty());
                    for s in &shapes {
                        assert_eq!(s.area(), best, "r={r} on {f}x{t}");
                        assert!(s.f <= f && s.t <= t);
                    }
                    let count = (1..=f).filter(|w| best.is_multiple_of(*w) && best / w <= t).count();
                    assert_eq!(shapes.len(), count);
                }
            }
        }
    }

    #[test]
    fn default_priorities() {
        use Operator::*;
        use ServiceKind::*;
        let p = PriorityPolicy::standard();
        assert_eq!(p.priority_of(PublicSafety, Voice, Mode::Normal), 3);
        assert_eq!(p.priority_of(Commercial, Voice, Mode::Normal), 3);
        assert_eq!(p.priority_of(PublicSafety, Msg, Mode::Emergency), 4);
        assert_eq!(p.priority_of(Commercial, Voice, Mode::Emergency), 3);
        assert_eq!(p.priority_of(Commercial, Msg, Mode::Emergency), 2);
        assert_eq!(p.priority_of(Commercial, Video, Mode::Emergency), 1);
    }

    #[test]
    fn emergency_is_total_order_normal_ties_only_across_operators() {
        let p = PriorityPolicy::standard();
        let pairs: Vec<_> = Operator::ALL
            .into_iter()
            .flat_map(|o| ServiceKind::ALL.into_iter().map(move |s| (o, s)))
            .collect();
        for (i, a) in pairs.iter().enumerate() {
            for b in &pairs[i + 1..] {
                let (ea, eb) = (
                    p.priority_of(a.0, a.1, Mode::Emergency),
                    p.priority_of(b.0, b.1, Mode::Emergency),
                );
                assert_ne!(ea, eb);
                let (na, nb) = (
                    p.priority_of(a.0, a.1, Mode::Normal),
                    p.priority_of(b.0, b.1, Mode::Normal),
                );
                assert_eq!(na == nb, a.1 == b.1 && a.0 != b.0);
            }
        }
        for s in ServiceKind::ALL {
            let ps = Operator::PublicSafety;
            let c = Operator::Commercial;
            assert!(p.priority_of(ps, s, Mode::Emergency) >= p.priority_of(ps, s, Mode::Normal));
            for s2 in ServiceKind::ALL {
                assert!(p.priority_of(ps, s, Mode::Emergency) > p.priority_of(c, s2, Mode::Emergency));
            }
        }
    }

    #[test]
    fn incomplete_policy_is_rejected() {
        let err = PriorityPolicy::from_levels([((Mode::Normal, Operator::PublicSafety, ServiceKind::Voice), 1)]);
        assert_eq!(err, Err((Mode::Normal, Operator::PublicSafety, ServiceKind::Video)));
    }
}

//! The per-round hypervisor loop.
//!
//! Each round: set the mode, take arrivals into the buffer, order the buffer
//! by priority, run the configured engine, move embedded requests to the
//! active set, age what is left (rejecting requests that already waited
//! `max_delay` rounds), snapshot metrics, then count down lifetimes and free
//! expired services.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::embedder::{
    embed_dynamic, embed_oracle, embed_static, order_queue, Algorithm, EmbedDecision, EmbedError, Outcome, QueueEntry,
};
use crate::grid::{PlacementId, Rect, Substrate};
use crate::metrics::{metrics_csv, phase_summary, summary_text, PhaseSummary, RoundMetrics};
use crate::requests::{Mode, Operator, RequestError, ServiceKind, Vrr, VrrId};
use crate::scenario::{Scenario, ScenarioError};
use crate::traffic::TrafficGenerator;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ScenarioError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Request(#[from] RequestError),
    #[error("simulation already ran all {0} rounds")]
    Finished(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrived,
    Embedded,
    Deferred,
    Rejected,
    Preempted,
    Expired,
    ActiveAtHorizon,
    PendingAtHorizon,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrived => "arrived",
            EventKind::Embedded => "embedded",
            EventKind::Deferred => "deferred",
            EventKind::Rejected => "rejected",
            EventKind::Preempted => "preempted",
            EventKind::Expired => "expired",
            EventKind::ActiveAtHorizon => "active_at_horizon",
            EventKind::PendingAtHorizon => "pending_at_horizon",
        }
    }

    /// Whether this event ends a request's life in the log.
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            EventKind::Rejected
                | EventKind::Preempted
                | EventKind::Expired
                | EventKind::ActiveAtHorizon
                | EventKind::PendingAtHorizon
        )
    }
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub round: u32,
    pub vrr: VrrId,
    pub owner: Operator,
    pub service: ServiceKind,
    pub kind: EventKind,
    pub r: usize,
    pub d: u32,
    pub rect: Option<Rect>,
}

impl Event {
    fn of(round: u32, vrr: &Vrr, kind: EventKind, rect: Option<Rect>) -> Self {
        Event {
            round,
            vrr: vrr.id,
            owner: vrr.owner,
            service: vrr.service,
            kind,
            r: vrr.r,
            d: vrr.duration,
            rect,
        }
    }
}

pub const EVENT_LOG_HEADER: &str = "round,vrr,owner,service,event,r,d,rect";

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},",
            self.round,
            self.vrr,
            self.owner,
            self.service,
            self.kind.as_str(),
            self.r,
            self.d
        )?;
        match self.rect {
            Some(r) => write!(f, "{r}"),
            None => f.write_str("-"),
        }
    }
}

/// An embedded request and the rounds it still holds resources.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveService {
    pub vrr: Vrr,
    pub remaining: u32,
    pub rect: Rect,
}

/// Full state of one run.
#[derive(Clone, Debug)]
pub struct Simulation {
    scenario: Scenario,
    seed: u64,
    round: u32,
    substrate: Substrate,
    buffer: Vec<Vrr>,
    /// Arrivals held back one round when same-round eligibility is off.
    incoming: Vec<Vrr>,
    injected: Vec<Vrr>,
    active: BTreeMap<VrrId, ActiveService>,
    traffic: TrafficGenerator,
    events: Vec<Event>,
    metrics: Vec<RoundMetrics>,
}

impl Simulation {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        let substrate = Substrate::with_border(scenario.f, scenario.t, scenario.options.edi_border);
        let traffic = TrafficGenerator::new(seed, scenario.dims(), scenario.options.fixed_duration);
        Ok(Simulation {
            scenario,
            seed,
            round: 0,
            substrate,
            buffer: Vec::new(),
            incoming: Vec::new(),
            injected: Vec::new(),
            active: BTreeMap::new(),
            traffic,
            events: Vec::new(),
            metrics: Vec::new(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.scenario.horizon
    }

    pub fn substrate(&self) -> &Substrate {
        &self.substrate
    }

    pub fn buffer(&self) -> &[Vrr] {
        &self.buffer
    }

    pub fn active(&self) -> impl Iterator<Item = &ActiveService> {
        self.active.values()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn metrics(&self) -> &[RoundMetrics] {
        &self.metrics
    }

    /// Queue a scripted request that arrives with the next round's traffic.
    pub fn inject(
        &mut self,
        owner: Operator,
        service: ServiceKind,
        r: usize,
        duration: u32,
    ) -> Result<VrrId, SimError> {
        let id = self.traffic.next_id();
        let vrr = Vrr::new(id, owner, service, r, duration.max(1), self.round, self.scenario.dims())?;
        self.injected.push(vrr);
        Ok(id)
    }

    fn priority(&self, vrr: &Vrr, mode: Mode) -> u32 {
        self.scenario.policy.priority_of(vrr.owner, vrr.service, mode)
    }

    /// Advance one round.
    pub fn step(&mut self) -> Result<&RoundMetrics, SimError> {
        if self.is_finished() {
            return Err(SimError::Finished(self.scenario.horizon));
        }
        let round = self.round;
        let mode = self.scenario.mode_at(round);
        let mut rm = RoundMetrics::new(round, mode, self.scenario.capacity());

        // arrivals
        self.buffer.append(&mut self.incoming);
        let mut arrivals = self.traffic.generate_round(&self.scenario, round, mode);
        arrivals.append(&mut self.injected);
        for v in &arrivals {
            rm.key_mut((v.owner, v.service)).generated_mass += v.mass();
            self.events.push(Event::of(round, v, EventKind::Arrived, None));
        }
        if self.scenario.options.same_round_eligibility {
            self.buffer.extend(arrivals);
        } else {
            self.incoming = arrivals;
        }

        // embedding
        let queue = order_queue(&self.buffer, mode, &self.scenario.policy);
        let decisions = match self.scenario.algorithm {
            Algorithm::Static => embed_static(&mut self.substrate, &queue),
            Algorithm::Dynamic => {
                let entries = self.active_entries(mode);
                let (decisions, substrate) =
                    embed_dynamic(&entries, &queue, self.scenario.dims(), self.scenario.options.edi_border);
                self.substrate = substrate;
                decisions
            }
            Algorithm::Oracle => self.embed_with_oracle(mode, queue.entries())?,
        };
        self.apply_decisions(round, &decisions, &mut rm);

        // aging
        let mut kept = Vec::with_capacity(self.buffer.len());
        for mut v in std::mem::take(&mut self.buffer) {
            let max_delay = self.scenario.service(v.service).max_delay;
            if v.waited >= max_delay {
                let k = rm.key_mut((v.owner, v.service));
                k.resolved_mass += v.mass();
                k.rejected_mass += v.mass();
                self.events.push(Event::of(round, &v, EventKind::Rejected, None));
            } else {
                v.waited += 1;
                self.events.push(Event::of(round, &v, EventKind::Deferred, None));
                kept.push(v);
            }
        }
        self.buffer = kept;
        for v in self.buffer.iter().chain(&self.incoming) {
            rm.key_mut((v.owner, v.service)).buffer_depth += 1;
        }

        // resources in use this round
        for a in self.active.values() {
            let area = a.rect.area();
            rm.key_mut((a.vrr.owner, a.vrr.service)).occupied_cells += area;
            rm.occupied_cells += area;
            rm.weighted_area += u64::from(self.priority(&a.vrr, mode)) * area as u64;
        }

        // expiry
        let mut expired = Vec::new();
        for (id, a) in self.active.iter_mut() {
            a.remaining -= 1;
            if a.remaining == 0 {
                expired.push(*id);
            }
        }
        for id in expired {
            let a = self.active.remove(&id).expect("expired id is active");
            self.substrate
                .remove(PlacementId(id.0))
                .expect("active services are registered on the substrate");
            self.events
                .push(Event::of(round, &a.vrr, EventKind::Expired, Some(a.rect)));
        }

        self.metrics.push(rm);
        self.round += 1;
        Ok(self.metrics.last().expect("just pushed"))
    }

    fn active_entries(&self, mode: Mode) -> Vec<QueueEntry> {
        self.active
            .values()
            .map(|a| QueueEntry::new(a.vrr.clone(), self.priority(&a.vrr, mode)))
            .collect()
    }

    fn embed_with_oracle(&mut self, mode: Mode, queue: &[QueueEntry]) -> Result<Vec<EmbedDecision>, SimError> {
        let active = self.active_entries(mode);
        let mut entries = active.clone();
        entries.extend_from_slice(queue);
        let solution = embed_oracle(&entries, self.scenario.dims())?;
        let placed: BTreeMap<VrrId, Rect> = solution.placements.iter().copied().collect();

        let mut substrate = self.substrate.cleared();
        for (id, rect) in &placed {
            substrate
                .place(*rect, PlacementId(id.0))
                .expect("oracle placements are disjoint");
        }
        self.substrate = substrate;

        let decision = |e: &QueueEntry, missing: Outcome| EmbedDecision {
            vrr: e.vrr.id,
            outcome: placed.get(&e.vrr.id).map_or(missing, |r| Outcome::Embedded(*r)),
        };
        Ok(active
            .iter()
            .map(|e| decision(e, Outcome::Preempted))
            .chain(queue.iter().map(|e| decision(e, Outcome::Deferred)))
            .collect())
    }

    fn apply_decisions(&mut self, round: u32, decisions: &[EmbedDecision], rm: &mut RoundMetrics) {
        let mut embedded_new = BTreeSet::new();
        for d in decisions {
            if let Some(a) = self.active.get_mut(&d.vrr) {
                match d.outcome {
                    Outcome::Embedded(rect) => a.rect = rect,
                    Outcome::Preempted => {
                        let a = self.active.remove(&d.vrr).expect("present");
                        let k = rm.key_mut((a.vrr.owner, a.vrr.service));
                        k.preempted_mass += a.vrr.r as u64 * u64::from(a.remaining);
                        rm.preempted_count += 1;
                        self.events
                            .push(Event::of(round, &a.vrr, EventKind::Preempted, Some(a.rect)));
                    }
                    Outcome::Deferred | Outcome::Rejected => unreachable!("active services are embedded or preempted"),
                }
            } else if let Outcome::Embedded(_) = d.outcome {
                embedded_new.insert(d.vrr);
            }
        }
        if embedded_new.is_empty() {
            return;
        }
        let rects: BTreeMap<VrrId, Rect> = decisions
            .iter()
            .filter_map(|d| d.rect().filter(|_| embedded_new.contains(&d.vrr)).map(|r| (d.vrr, r)))
            .collect();
        let mut kept = Vec::with_capacity(self.buffer.len());
        for v in std::mem::take(&mut self.buffer) {
            match rects.get(&v.id) {
                Some(&rect) => {
                    rm.key_mut((v.owner, v.service)).resolved_mass += v.mass();
                    self.events.push(Event::of(round, &v, EventKind::Embedded, Some(rect)));
                    self.active.insert(
                        v.id,
                        ActiveService {
                            remaining: v.duration,
                            vrr: v,
                            rect,
                        },
                    );
                }
                None => kept.push(v),
            }
        }
        self.buffer = kept;
    }

    /// Cross-check the substrate against the active set. Returns a
    /// description of the first inconsistency found.
    pub fn audit(&self) -> Result<(), String> {
        let s = &self.substrate;
        let mut area = 0;
        for (id, a) in &self.active {
            let rect = s
                .placement(PlacementId(id.0))
                .ok_or_else(|| format!("active {id} missing from substrate"))?;
            if rect != a.rect {
                return Err(format!("active {id} at {} but substrate has {rect}", a.rect));
            }
            if rect.f_end() > s.width() || rect.t_end() > s.height() {
                return Err(format!("active {id} out of bounds at {rect}"));
            }
            if let Some((f, t)) = rect.cells().find(|&(f, t)| s.owner(f, t) != Some(PlacementId(id.0))) {
                return Err(format!("cell ({f},{t}) of {id} owned by {:?}", s.owner(f, t)));
            }
            if a.remaining == 0 {
                return Err(format!("active {id} has no remaining rounds"));
            }
            area += rect.area();
        }
        if s.len() != self.active.len() {
            return Err(format!(
                "{} placements for {} active services",
                s.len(),
                self.active.len()
            ));
        }
        if s.occupied_cells() != area {
            return Err(format!("{} occupied cells, {area} active area", s.occupied_cells()));
        }
        for v in &self.buffer {
            if v.waited > self.scenario.service(v.service).max_delay {
                return Err(format!("buffered {} waited {} rounds", v.id, v.waited));
            }
        }
        Ok(())
    }

    /// Close the event log and summarise.
    pub fn finish(mut self) -> SimResult {
        let horizon = self.round;
        let active_at_horizon = self.active.len();
        for a in self.active.values() {
            self.events
                .push(Event::of(horizon, &a.vrr, EventKind::ActiveAtHorizon, Some(a.rect)));
        }
        let pending: Vec<Vrr> = self.buffer.drain(..).chain(self.incoming.drain(..)).collect();
        for v in &pending {
            self.events
                .push(Event::of(horizon, v, EventKind::PendingAtHorizon, None));
        }
        let summary = phase_summary(&self.metrics, &self.scenario);
        SimResult {
            seed: self.seed,
            active_at_horizon,
            pending_at_horizon: pending.len(),
            summary,
            metrics: self.metrics,
            events: self.events,
            scenario: self.scenario,
        }
    }
}

/// Outputs of a completed run.
#[derive(Clone, Debug)]
pub struct SimResult {
    pub scenario: Scenario,
    pub seed: u64,
    pub metrics: Vec<RoundMetrics>,
    pub events: Vec<Event>,
    pub summary: PhaseSummary,
    pub active_at_horizon: usize,
    pub pending_at_horizon: usize,
}

impl SimResult {
    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.metrics)
    }

    pub fn events_log(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 32);
        out.push_str(EVENT_LOG_HEADER);
        out.push('\n');
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let s = &self.scenario;
        let meta = [
            ("algorithm", s.algorithm.to_string()),
            ("seed", self.seed.to_string()),
            ("substrate", format!("{}x{}", s.f, s.t)),
            ("horizon", s.horizon.to_string()),
            ("emergency", format!("{}..{}", s.emergency_start, s.emergency_end)),
            ("rejection_attribution", "round_of_rejection".to_string()),
            ("preemption", "counted_as_rejection_of_remaining_mass".to_string()),
            ("active_at_horizon", self.active_at_horizon.to_string()),
            ("pending_at_horizon", self.pending_at_horizon.to_string()),
        ];
        summary_text(&meta, &self.summary)
    }
}

/// Run `scenario` for its full horizon.
pub fn run(scenario: Scenario, seed: u64) -> Result<SimResult, SimError> {
    let mut sim = Simulation::new(scenario, seed)?;
    while !sim.is_finished() {
        sim.step()?;
    }
    Ok(sim.finish())
}

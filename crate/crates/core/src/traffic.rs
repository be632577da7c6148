//! Stochastic workload: Poisson arrivals per operator and service, uniform
//! request sizes and geometric (rounded-up exponential) lifetimes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::requests::{Mode, Operator, ServiceKind, ServiceSpec, Vrr, VrrId};
use crate::scenario::Scenario;

/// Mean arrivals per round in each mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub normal: f64,
    pub emergency: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    rates: BTreeMap<(Operator, ServiceKind), Rates>,
}

impl RateTable {
    pub fn zero() -> Self {
        let rates = Operator::ALL
            .into_iter()
            .flat_map(|o| ServiceKind::ALL.into_iter().map(move |s| (o, s)))
            .map(|k| {
                (
                    k,
                    Rates {
                        normal: 0.0,
                        emergency: 0.0,
                    },
                )
            })
            .collect();
        RateTable { rates }
    }

    /// Commercial base rates 1.4 / 1.4 / 3 (voice / video / msg), PS at a
    /// tenth of that. In an emergency PS rates are multiplied by 5 and
    /// commercial voice and messaging by 2.5; commercial video is unchanged.
    pub fn standard() -> Self {
        let mut table = Self::zero();
        for (owner, svc, normal, emergency) in [
            (Operator::PublicSafety, ServiceKind::Voice, 0.14, 0.7),
            (Operator::PublicSafety, ServiceKind::Video, 0.14, 0.7),
            (Operator::PublicSafety, ServiceKind::Msg, 0.3, 1.5),
            (Operator::Commercial, ServiceKind::Voice, 1.4, 3.5),
            (Operator::Commercial, ServiceKind::Video, 1.4, 1.4),
            (Operator::Commercial, ServiceKind::Msg, 3.0, 7.5),
        ] {
            table.set(owner, svc, Rates { normal, emergency });
        }
        table
    }

    pub fn set(&mut self, owner: Operator, service: ServiceKind, rates: Rates) {
        self.rates.insert((owner, service), rates);
    }

    pub fn rates(&self, owner: Operator, service: ServiceKind) -> Rates {
        self.rates[&(owner, service)]
    }

    pub fn rate(&self, owner: Operator, service: ServiceKind, mode: Mode) -> f64 {
        let r = self.rates(owner, service);
        match mode {
            Mode::Normal => r.normal,
            Mode::Emergency => r.emergency,
        }
    }
}

impl Default for RateTable {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Purpose {
    Arrivals,
    Size,
    Duration,
}

/// One independent ChaCha stream per `(operator, service, purpose)`, all
/// derived from a single 64-bit seed.
#[derive(Clone, Debug)]
pub struct TrafficRng {
    seed: u64,
    streams: BTreeMap<(Operator, ServiceKind, Purpose), ChaCha8Rng>,
}

impl TrafficRng {
    pub fn new(seed: u64) -> Self {
        let mut streams = BTreeMap::new();
        for (oi, op) in Operator::ALL.into_iter().enumerate() {
            for (si, svc) in ServiceKind::ALL.into_iter().enumerate() {
                for (pi, purpose) in [Purpose::Arrivals, Purpose::Size, Purpose::Duration]
                    .into_iter()
                    .enumerate()
                {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((oi * 9 + si * 3 + pi) as u64);
                    streams.insert((op, svc, purpose), rng);
                }
            }
        }
        TrafficRng { seed, streams }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&mut self, owner: Operator, service: ServiceKind, purpose: Purpose) -> &mut ChaCha8Rng {
        self.streams
            .get_mut(&(owner, service, purpose))
            .expect("all streams are created up front")
    }
}

/// Poisson-distributed arrival count with mean `lambda`.
pub fn arrivals<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(lambda).expect("finite positive rate").sample(rng);
    draw as u32
}

/// Lifetime in whole rounds with mean `mean` (>= 1): the ceiling of an
/// exponential draw, whose rate is chosen so the rounded-up value is
/// geometric on {1, 2, ...} with exactly that mean.
pub fn sample_duration<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 1.0 {
        return 1;
    }
    let rate = -(1.0 - 1.0 / mean).ln();
    let x: f64 = Exp::new(rate).expect("positive rate").sample(rng);
    (x.ceil().max(1.0)).min(f64::from(u32::MAX)) as u32
}

/// Generates the requests of each round from a [`Scenario`].
#[derive(Clone, Debug)]
pub struct TrafficGenerator {
    rng: TrafficRng,
    next_id: u64,
    dims: (usize, usize),
    fixed_duration: bool,
}

impl TrafficGenerator {
    pub fn new(seed: u64, dims: (usize, usize), fixed_duration: bool) -> Self {
        TrafficGenerator {
            rng: TrafficRng::new(seed),
            next_id: 0,
            dims,
            fixed_duration,
        }
    }

    pub fn next_id(&mut self) -> VrrId {
        let id = VrrId(self.next_id);
        self.next_id += 1;
        id
    }

    /// One request: `r` uniform on `[size_min, size_max]`, lifetime from
    /// [`sample_duration`] (or the rounded mean when durations are fixed).
    pub fn sample_vrr(&mut self, owner: Operator, spec: &ServiceSpec, round: u32) -> Vrr {
        let r = self
            .rng
            .stream(owner, spec.kind, Purpose::Size)
            .random_range(spec.size_min..=spec.size_max);
        let duration = if self.fixed_duration {
            (spec.mean_duration.round() as u32).max(1)
        } else {
            sample_duration(spec.mean_duration, self.rng.stream(owner, spec.kind, Purpose::Duration))
        };
        let id = self.next_id();
        Vrr::new(id, owner, spec.kind, r, duration, round, self.dims)
            .expect("validated service sizes fit the substrate")
    }

    /// All arrivals of `round`, PS before commercial, voice, video, msg.
    pub fn generate_round(&mut self, scenario: &Scenario, round: u32, mode: Mode) -> Vec<Vrr> {
        let mut out = Vec::new();
        for owner in Operator::ALL {
            for service in ServiceKind::ALL {
                let lambda = scenario.rates.rate(owner, service, mode);
                let count = arrivals(lambda, self.rng.stream(owner, service, Purpose::Arrivals));
                let spec = scenario.service(service);
                for _ in 0..count {
                    out.push(self.sample_vrr(owner, spec, round));
                }
            }
        }
        out
    }
}

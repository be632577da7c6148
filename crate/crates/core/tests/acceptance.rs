//! Acceptance gate. Prints one PASS/FAIL line per criterion. Runs without
//! the test harness so the report is never captured.
//!
//! Criteria 1 to 8 compare seed means of the bundled scenario against the
//! reference figures and are reported without failing the test run.
//! Criteria 9 and 10 are correctness properties and must hold.

use std::collections::BTreeMap;

use psvo_core::embedder::{
    embed_dynamic, embed_oracle, embed_static, priority_objective, EmbedQueue, QueueEntry, ORACLE_MAX_CELLS,
};
use psvo_core::metrics::aggregate;
use psvo_core::scenario::BUNDLED_SCENARIO;
use psvo_core::{
    Algorithm, EdiBorder, EventKind, Group, Operator, Outcome, Phase, PlacementId, Rect, Scenario, ServiceKind,
    SimResult, Simulation, Substrate, Vrr, VrrId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;

const PS_REJECTION_DYNAMIC_MAX: f64 = 0.01;
const PS_REJECTION_STATIC: (f64, f64) = (0.10, 0.05);
const COMMERCIAL_REJECTION: (f64, f64) = (0.30, 0.10);
const COMMERCIAL_VIDEO_REJECTION: (f64, f64) = (0.70, 0.10);
const VOICE_REJECTION_MAX: f64 = 0.01;
const DYNAMIC_OCCUPANCY_MIN: f64 = 0.95;
const PS_SERVED_SHARE: (f64, f64) = (0.40, 0.10);
const PS_REQUESTED_SHARE: (f64, f64) = (0.10, 0.02);
const VOICE_CAPACITY_SHARE: (f64, f64) = (0.50, 0.10);
const VIDEO_SERVED_SHARE: (f64, f64) = (0.25, 0.08);

const EDI_CASES: usize = 10_000;
const MFR_CASES: usize = 1_000;
const ORACLE_CASES: usize = 200;

struct Run {
    result: SimResult,
    audit: Result<(), String>,
}

fn run_audited(scenario: Scenario, seed: u64) -> Run {
    let mut sim = Simulation::new(scenario, seed).expect("valid scenario");
    let mut audit = Ok(());
    while !sim.is_finished() {
        sim.step().expect("step");
        if audit.is_ok() {
            audit = sim
                .audit()
                .map_err(|e| format!("seed {seed} round {}: {e}", sim.round()));
        }
    }
    let result = sim.finish();
    if audit.is_ok() {
        audit = conservation(&result).map_err(|e| format!("seed {seed}: {e}"));
    }
    Run { result, audit }
}

/// Generated mass equals resolved mass plus mass still waiting at the
/// horizon, and every request ends in exactly one terminal event.
fn conservation(res: &SimResult) -> Result<(), String> {
    let mut generated = 0u64;
    let mut resolved = 0u64;
    let mut rejected = 0u64;
    for m in &res.metrics {
        for k in m.per_key.values() {
            generated += k.generated_mass;
            resolved += k.resolved_mass;
            rejected += k.rejected_mass;
        }
    }
    let mass = |e: &psvo_core::Event| e.r as u64 * u64::from(e.d);
    let pending: u64 = res
        .events
        .iter()
        .filter(|e| e.kind == EventKind::PendingAtHorizon)
        .map(mass)
        .sum();
    if generated != resolved + pending {
        return Err(format!(
            "generated {generated} != resolved {resolved} + pending {pending}"
        ));
    }
    let logged_rejected: u64 = res
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Rejected)
        .map(mass)
        .sum();
    if logged_rejected != rejected {
        return Err(format!("rejected mass {rejected} but event log has {logged_rejected}"));
    }
    let mut terminal: BTreeMap<VrrId, (usize, usize)> = BTreeMap::new();
    for e in &res.events {
        let entry = terminal.entry(e.vrr).or_default();
        if e.kind == EventKind::Arrived {
            entry.0 += 1;
        }
        if e.kind.is_terminal() {
            entry.1 += 1;
        }
    }
    if let Some((id, c)) = terminal.iter().find(|(_, c)| **c != (1, 1)) {
        return Err(format!("{id}: {} arrivals, {} terminal events", c.0, c.1));
    }
    Ok(())
}

struct Gate {
    lines: Vec<String>,
    hard_failures: Vec<usize>,
}

impl Gate {
    fn report(&mut self, n: usize, pass: bool, detail: String, hard: bool) {
        let line = format!("criterion {n:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push(line);
        if hard && !pass {
            self.hard_failures.push(n);
        }
    }
}

fn within(v: Option<f64>, (target, tol): (f64, f64)) -> bool {
    v.is_some_and(|v| (v - target).abs() <= tol + 1e-12)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{:.2}%", 100.0 * v))
}

fn mean_of(runs: &[Run], f: impl Fn(&SimResult) -> Option<f64>) -> Option<f64> {
    let vals: Vec<Option<f64>> = runs.iter().map(|r| f(&r.result)).collect();
    aggregate(&vals).mean
}

fn run_all(algorithm: Algorithm) -> Vec<Run> {
    let scenario = Scenario::from_toml_str(BUNDLED_SCENARIO)
        .expect("bundled scenario")
        .with_algorithm(algorithm);
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    let mut slots: Vec<Option<Run>> = (0..SEEDS).map(|_| None).collect();
    std::thread::scope(|scope| {
        for chunk in slots.chunks_mut(SEEDS.div_ceil(threads as u64) as usize).enumerate() {
            let (ci, chunk) = chunk;
            let scenario = &scenario;
            scope.spawn(move || {
                let per = chunk.len();
                for (i, slot) in chunk.iter_mut().enumerate() {
                    let seed = (ci * per + i) as u64;
                    *slot = Some(run_audited(scenario.clone(), seed));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every seed ran")).collect()
}

fn brute_edi(s: &Substrate) -> u64 {
    let (w, h) = (s.width(), s.height());
    let occ = |f: usize, t: usize| s.is_occupied(f, t);
    let mut n = 0;
    for t in 0..h {
        for f in 0..w {
            if f + 1 < w && occ(f, t) != occ(f + 1, t) {
                n += 1;
            }
            if t + 1 < h && occ(f, t) != occ(f, t + 1) {
                n += 1;
            }
        }
    }
    n
}

fn brute_mfr(s: &Substrate) -> Vec<Rect> {
    let (w, h) = (s.width(), s.height());
    let free = |r: &Rect| r.cells().all(|(f, t)| !s.is_occupied(f, t));
    let mut all = Vec::new();
    for t0 in 0..h {
        for f0 in 0..w {
            for t in 1..=h - t0 {
                for f in 1..=w - f0 {
                    let r = Rect::new(f0, t0, f, t);
                    if free(&r) {
                        all.push(r);
                    }
                }
            }
        }
    }
    let mut out: Vec<Rect> = all
        .iter()
        .filter(|r| !all.iter().any(|o| o != *r && o.contains(r)))
        .copied()
        .collect();
    out.sort_by_key(|r| (r.t0, r.f0, r.f, r.t));
    out
}

fn random_cells(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> Substrate {
    let mut s = Substrate::new(w, h);
    let mut id = 0;
    for t in 0..h {
        for f in 0..w {
            if rng.random_bool(p) {
                s.place(Rect::new(f, t, 1, 1), PlacementId(id)).unwrap();
                id += 1;
            }
        }
    }
    s
}

fn oracle_instance(rng: &mut ChaCha8Rng) -> ((usize, usize), Vec<QueueEntry>, usize) {
    let (f, t) = loop {
        let f = rng.random_range(2..=6);
        let t = rng.random_range(2..=6);
        if f * t <= ORACLE_MAX_CELLS {
            break (f, t);
        }
    };
    let n = rng.random_range(1..=6);
    let services = ServiceKind::ALL;
    let entries: Vec<QueueEntry> = (0..n)
        .map(|i| {
            let r = rng.random_range(1..=(f * t).min(12));
            let owner = if rng.random_bool(0.5) {
                Operator::PublicSafety
            } else {
                Operator::Commercial
            };
            let svc = services[rng.random_range(0..3)];
            let vrr = Vrr::new(VrrId(i as u64), owner, svc, r, 3, 0, (f, t)).unwrap();
            QueueEntry::new(vrr, rng.random_range(1..=3))
        })
        .collect();
    let actives = rng.random_range(0..=n);
    ((f, t), entries, actives)
}

fn criterion_9(gate: &mut Gate, static_runs: &[Run], dynamic_runs: &[Run]) {
    let mut failures: Vec<String> = static_runs
        .iter()
        .chain(dynamic_runs)
        .filter_map(|r| r.audit.clone().err())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0xED1);
    for case in 0..EDI_CASES {
        let (w, h) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let p = rng.random_range(0.0..1.0);
        let s = random_cells(&mut rng, w, h, p);
        if s.edi() != brute_edi(&s) {
            failures.push(format!("edi case {case}"));
            break;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x3F5);
    for case in 0..MFR_CASES {
        let (w, h) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let p = rng.random_range(0.0..0.6);
        let s = random_cells(&mut rng, w, h, p);
        if s.maximal_free_rectangles() != brute_mfr(&s) {
            failures.push(format!("maximal free rectangles case {case}"));
            break;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC);
    for case in 0..ORACLE_CASES {
        let (dims, entries, actives) = oracle_instance(&mut rng);
        let best = embed_oracle(&entries, dims).expect("oracle-sized").objective;

        let mut sub = Substrate::new(dims.0, dims.1);
        let queue = EmbedQueue::from_entries(entries.clone());
        let st = embed_static(&mut sub, &queue);
        let st_obj = priority_objective(&entries, |id| st.iter().any(|d| d.vrr == id && d.rect().is_some()));

        let (active, new) = entries.split_at(actives);
        let (dy, _) = embed_dynamic(
            active,
            &EmbedQueue::from_entries(new.to_vec()),
            dims,
            EdiBorder::Ignored,
        );
        let dy_obj = priority_objective(&entries, |id| {
            dy.iter()
                .any(|d| d.vrr == id && matches!(d.outcome, Outcome::Embedded(_)))
        });
        if st_obj > best || dy_obj > best {
            failures.push(format!(
                "oracle case {case}: static {st_obj:?} dynamic {dy_obj:?} optimum {best:?}"
            ));
        }
    }

    let total_area = |r: &Run| r.result.summary.weighted_area.values().sum::<u64>();
    for (s, d) in static_runs.iter().zip(dynamic_runs) {
        if total_area(d) < total_area(s) {
            failures.push(format!(
                "seed {}: dynamic weighted area {} < static {}",
                d.result.seed,
                total_area(d),
                total_area(s)
            ));
        }
    }

    let scenario = Scenario::standard();
    for alg in [Algorithm::Static, Algorithm::Dynamic] {
        let a = run_audited(scenario.clone().with_algorithm(alg), 7).result;
        let b = run_audited(scenario.clone().with_algorithm(alg), 7).result;
        if a.metrics_csv() != b.metrics_csv()
            || a.events_log() != b.events_log()
            || a.summary_text() != b.summary_text()
        {
            failures.push(format!("{alg} not deterministic"));
        }
    }

    let detail = if failures.is_empty() {
        format!(
            "audits and conservation on {} runs, {EDI_CASES} EDI, {MFR_CASES} MFR, {ORACLE_CASES} oracle cases, paired area, determinism",
            static_runs.len() + dynamic_runs.len()
        )
    } else {
        failures.join("; ")
    };
    gate.report(9, failures.is_empty(), detail, true);
}

fn criterion_10(gate: &mut Gate) {
    // 2x2 blocks on a checkerboard: 200 free cells, no 5x5 hole anywhere
    let dims = (20, 20);
    let mut sub = Substrate::new(dims.0, dims.1);
    let mut active = Vec::new();
    let mut id = 0u64;
    for bt in 0..10 {
        for bf in 0..10 {
            if (bf + bt) % 2 == 0 {
                let rect = Rect::new(bf * 2, bt * 2, 2, 2);
                sub.place(rect, PlacementId(id)).unwrap();
                let vrr = Vrr::new(VrrId(id), Operator::Commercial, ServiceKind::Msg, 4, 5, 0, dims).unwrap();
                active.push(QueueEntry::new(vrr, 1));
                id += 1;
            }
        }
    }
    let free = sub.capacity() - sub.occupied_cells();
    let request = Vrr::new(VrrId(id), Operator::Commercial, ServiceKind::Video, 25, 5, 0, dims).unwrap();
    let queue = EmbedQueue::from_entries(vec![QueueEntry::new(request, 2)]);

    let st = embed_static(&mut sub, &queue);
    let (dy, _) = embed_dynamic(&active, &queue, dims, EdiBorder::Ignored);
    let deferred_static = st[0].outcome == Outcome::Deferred;
    let embedded_dynamic = dy.iter().all(|d| matches!(d.outcome, Outcome::Embedded(_)));
    gate.report(
        10,
        free >= 25 && deferred_static && embedded_dynamic,
        format!(
            "free {free} cells, static {:?}, dynamic {}",
            st[0].outcome,
            if embedded_dynamic { "embeds all" } else { "fails" }
        ),
        true,
    );
}

fn main() {
    let static_runs = run_all(Algorithm::Static);
    let dynamic_runs = run_all(Algorithm::Dynamic);
    let mut gate = Gate {
        lines: Vec::new(),
        hard_failures: Vec::new(),
    };
    let e = Phase::Emergency;
    let ps = Group::operator(Operator::PublicSafety);
    let comm = Group::operator(Operator::Commercial);
    let comm_video = Group::new(Some(Operator::Commercial), Some(ServiceKind::Video));
    let voice = Group::service(ServiceKind::Voice);
    let video = Group::service(ServiceKind::Video);

    let dy_ps = mean_of(&dynamic_runs, |r| r.summary.rejection_rate(e, ps));
    gate.report(
        1,
        dy_ps.is_some_and(|v| v < PS_REJECTION_DYNAMIC_MAX),
        format!("dynamic emergency PS rejection {} (< 1%)", pct(dy_ps)),
        false,
    );

    let st_ps = mean_of(&static_runs, |r| r.summary.rejection_rate(e, ps));
    gate.report(
        2,
        within(st_ps, PS_REJECTION_STATIC),
        format!("static emergency PS rejection {} (10% +/- 5)", pct(st_ps)),
        false,
    );

    let st_c = mean_of(&static_runs, |r| r.summary.rejection_rate(e, comm));
    let dy_c = mean_of(&dynamic_runs, |r| r.summary.rejection_rate(e, comm));
    gate.report(
        3,
        within(st_c, COMMERCIAL_REJECTION) && within(dy_c, COMMERCIAL_REJECTION),
        format!(
            "emergency commercial rejection static {} dynamic {} (30% +/- 10)",
            pct(st_c),
            pct(dy_c)
        ),
        false,
    );

    let st_cv = mean_of(&static_runs, |r| r.summary.rejection_rate(e, comm_video));
    let dy_cv = mean_of(&dynamic_runs, |r| r.summary.rejection_rate(e, comm_video));
    gate.report(
        4,
        within(st_cv, COMMERCIAL_VIDEO_REJECTION) || within(dy_cv, COMMERCIAL_VIDEO_REJECTION),
        format!(
            "emergency commercial video rejection static {} dynamic {} (70% +/- 10, either)",
            pct(st_cv),
            pct(dy_cv)
        ),
        false,
    );

    let voice_rates: Vec<(String, Option<f64>)> = [("static", &static_runs), ("dynamic", &dynamic_runs)]
        .into_iter()
        .flat_map(|(name, runs)| {
            [Operator::PublicSafety, Operator::Commercial]
                .into_iter()
                .map(move |op| {
                    let g = Group::new(Some(op), Some(ServiceKind::Voice));
                    (
                        format!("{name} {op}"),
                        mean_of(runs, |r| r.summary.rejection_rate(e, g)),
                    )
                })
        })
        .collect();
    gate.report(
        5,
        voice_rates
            .iter()
            .all(|(_, v)| v.is_some_and(|v| v < VOICE_REJECTION_MAX)),
        format!(
            "emergency voice rejection {} (< 1%)",
            voice_rates
                .iter()
                .map(|(k, v)| format!("{k} {}", pct(*v)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        false,
    );

    let occ = |r: &SimResult| Some(r.summary.mean_occupancy(e, Group::ALL));
    let dy_occ = mean_of(&dynamic_runs, occ);
    let st_occ = mean_of(&static_runs, occ);
    let lower_every_seed = static_runs
        .iter()
        .zip(&dynamic_runs)
        .filter(|(s, d)| occ(&s.result) < occ(&d.result))
        .count();
    gate.report(
        6,
        dy_occ.is_some_and(|v| v >= DYNAMIC_OCCUPANCY_MIN) && lower_every_seed == static_runs.len(),
        format!(
            "emergency occupancy dynamic {} (>= 95%), static {}, static lower on {lower_every_seed}/{} seeds",
            pct(dy_occ),
            pct(st_occ),
            static_runs.len()
        ),
        false,
    );

    let served = mean_of(&dynamic_runs, |r| r.summary.served_share(e, ps));
    let requested = mean_of(&dynamic_runs, |r| {
        let g = |p| r.summary.get(p, ps).generated_mass;
        let all = |p| r.summary.get(p, Group::ALL).generated_mass;
        let (num, den) = (g(Phase::Pre) + g(Phase::Post), all(Phase::Pre) + all(Phase::Post));
        (den > 0).then(|| num as f64 / den as f64)
    });
    gate.report(
        7,
        within(served, PS_SERVED_SHARE) && within(requested, PS_REQUESTED_SHARE),
        format!(
            "dynamic emergency PS served share {} (40% +/- 10), normal-phase PS requested share {} (10% +/- 2)",
            pct(served),
            pct(requested)
        ),
        false,
    );

    let voice_cap = |runs: &[Run]| mean_of(runs, |r| Some(r.summary.mean_occupancy(e, voice)));
    let (st_voice, dy_voice) = (voice_cap(&static_runs), voice_cap(&dynamic_runs));
    let video_share = |runs: &[Run]| mean_of(runs, |r| r.summary.served_share(e, video));
    let (st_video, dy_video) = (video_share(&static_runs), video_share(&dynamic_runs));
    gate.report(
        8,
        within(st_voice, VOICE_CAPACITY_SHARE)
            && within(dy_voice, VOICE_CAPACITY_SHARE)
            && within(dy_video, VIDEO_SERVED_SHARE)
            && dy_video > st_video,
        format!(
            "emergency voice capacity static {} dynamic {} (50% +/- 10); video served share dynamic {} (25% +/- 8) vs static {}",
            pct(st_voice),
            pct(dy_voice),
            pct(dy_video),
            pct(st_video)
        ),
        false,
    );

    criterion_9(&mut gate, &static_runs, &dynamic_runs);
    criterion_10(&mut gate);

    let passed = gate.lines.iter().filter(|l| l.contains("PASS")).count();
    println!("acceptance: {passed}/{} criteria pass", gate.lines.len());
    assert!(
        gate.hard_failures.is_empty(),
        "correctness criteria failed: {:?}",
        gate.hard_failures
    );
}

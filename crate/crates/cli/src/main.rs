mod plot;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use psvo_core::metrics::{aggregate, format_value};
use psvo_core::scenario::BUNDLED_SCENARIO;
use psvo_core::{load_scenario, run, Algorithm, Group, Operator, Phase, Scenario, SimResult};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "psvo", version, about = "Shared-spectrum hypervisor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed and write metrics.csv, events.log, summary.txt and charts.
    Run(RunArgs),
    /// Run every (algorithm, seed) cell and aggregate across seeds.
    Replicate(ReplicateArgs),
    /// Re-render charts from an existing metrics.csv.
    Plot(PlotArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file; the bundled scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "PSVO_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Moving-average window for charts; the scenario's value when omitted.
    #[arg(long)]
    smoothing: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the scenario's engine.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct ReplicateArgs {
    #[command(flatten)]
    common: Common,
    /// A count N (seeds 0..N), a range A..B, or a comma-separated list.
    #[arg(long, default_value = "20", value_parser = parse_seeds)]
    seeds: Seeds,
    #[arg(long, value_delimiter = ',', default_value = "static,dynamic")]
    algorithm: Vec<Algorithm>,
    /// Worker threads; all available cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// A metrics.csv file or a directory containing one.
    input: PathBuf,
    /// Where to write the charts; next to the input when omitted.
    #[arg(long, env = "PSVO_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    smoothing: usize,
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed {x:?}: {e}"));
    let seeds: Vec<u64> = if s.contains(',') {
        s.split(',')
            .filter(|x| !x.trim().is_empty())
            .map(num)
            .collect::<Result<_, _>>()?
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        (0..num(s)?).collect()
    };
    if seeds.is_empty() {
        return Err("at least one seed is required".into());
    }
    Ok(Seeds(seeds))
}

/// Usage and configuration problems exit with 2, everything else with 1.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn scenario_from(common: &Common, algorithm: Option<Algorithm>) -> Result<Scenario, Failure> {
    let mut scenario = match &common.config {
        Some(path) => load_scenario(path).map_err(|e| Failure::Usage(anyhow::Error::new(e)))?,
        None => Scenario::from_toml_str(BUNDLED_SCENARIO).map_err(|e| Failure::Usage(e.into()))?,
    };
    if let Some(a) = algorithm {
        scenario = scenario.with_algorithm(a);
    }
    if let Some(w) = common.smoothing {
        if w == 0 {
            return Err(Failure::Usage(anyhow::anyhow!("--smoothing must be at least 1")));
        }
        scenario.smoothing_window = w;
    }
    scenario
        .validate()
        .map_err(|e| Failure::Usage(anyhow::Error::new(e).context("invalid scenario")))?;
    Ok(scenario)
}

fn write_run(dir: &Path, res: &SimResult, plots: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let metrics = res.metrics_csv();
    fs::write(dir.join("metrics.csv"), &metrics)?;
    fs::write(dir.join("events.log"), res.events_log())?;
    fs::write(dir.join("summary.txt"), res.summary_text())?;
    if plots {
        plot::render(&metrics, res.scenario.smoothing_window, dir)?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let scenario = scenario_from(&args.common, args.algorithm)?;
    let algorithm = scenario.algorithm;
    let res = run(scenario, args.seed).context("simulation failed")?;
    write_run(&args.common.out_dir, &res, !args.no_plots)?;

    let s = &res.summary;
    let e = Phase::Emergency;
    println!(
        "{algorithm} seed {}: emergency rejection PS {} commercial {}, occupancy {:.4}; wrote {}",
        args.seed,
        format_value(s.rejection_rate(e, Group::operator(Operator::PublicSafety))),
        format_value(s.rejection_rate(e, Group::operator(Operator::Commercial))),
        s.mean_occupancy(e, Group::ALL),
        args.common.out_dir.display()
    );
    Ok(())
}

type Values = BTreeMap<String, Option<f64>>;

fn cell_values(res: &SimResult) -> Values {
    let mut v = res.summary.values();
    let total: u64 = res.summary.weighted_area.values().sum();
    v.insert("total.weighted_area".into(), Some(total as f64));
    v
}

const PAIRED_METRICS: [&str; 5] = [
    "emergency.ps.all.rejection_rate",
    "emergency.commercial.all.rejection_rate",
    "emergency.commercial.video.rejection_rate",
    "emergency.all.all.mean_occupancy",
    "total.weighted_area",
];

fn cmd_replicate(args: ReplicateArgs) -> Result<(), Failure> {
    let base = scenario_from(&args.common, None)?;
    let mut algorithms: Vec<Algorithm> = Vec::new();
    for &a in &args.algorithm {
        if !algorithms.contains(&a) {
            algorithms.push(a);
        }
    }
    for &a in &algorithms {
        base.clone()
            .with_algorithm(a)
            .validate()
            .map_err(|e| Failure::Usage(anyhow::Error::new(e).context(format!("algorithm {a}"))))?;
    }
    let cells: Vec<(Algorithm, u64)> = algorithms
        .iter()
        .flat_map(|&a| args.seeds.0.iter().map(move |&s| (a, s)))
        .collect();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(Failure::Usage(anyhow::anyhow!("--jobs must be at least 1")));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().context("building thread pool")?;
    let out = &args.common.out_dir;
    let results: Vec<((Algorithm, u64), Result<Values>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(a, seed)| {
                let res = run(base.clone().with_algorithm(a), seed)
                    .map_err(anyhow::Error::new)
                    .and_then(|res| {
                        write_run(&out.join(a.as_str()).join(format!("seed-{seed}")), &res, false)?;
                        Ok(cell_values(&res))
                    });
                ((a, seed), res)
            })
            .collect()
    });

    let mut ok: BTreeMap<(Algorithm, u64), Values> = BTreeMap::new();
    let mut failed = Vec::new();
    for (cell, res) in results {
        match res {
            Ok(v) => {
                ok.insert(cell, v);
            }
            Err(e) => failed.push(format!("{} seed {}: {e:#}", cell.0, cell.1)),
        }
    }

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("aggregate.csv"), aggregate_csv(&algorithms, &ok))?;
    let paired = paired_csv(&args.seeds.0, &ok);
    if let Some((csv, ps_ok, n)) = &paired {
        fs::write(out.join("paired.csv"), csv)?;
        println!("dynamic emergency PS rejection <= static on {ps_ok}/{n} seeds");
    }
    println!(
        "{} of {} cells completed; wrote {}",
        ok.len(),
        cells.len(),
        out.display()
    );

    if !failed.is_empty() {
        let mut msg = format!("{} cells failed:", failed.len());
        for f in &failed {
            let _ = write!(msg, "\n  {f}");
        }
        return Err(Failure::Runtime(anyhow::anyhow!(msg)));
    }
    Ok(())
}

fn aggregate_csv(algorithms: &[Algorithm], ok: &BTreeMap<(Algorithm, u64), Values>) -> String {
    let mut out = String::from("metric,algorithm,n,mean,sd\n");
    let Some(first) = ok.values().next() else {
        return out;
    };
    for metric in first.keys() {
        for &a in algorithms {
            let vals: Vec<Option<f64>> = ok
                .iter()
                .filter(|((alg, _), _)| *alg == a)
                .map(|(_, v)| v.get(metric).copied().flatten())
                .collect();
            let agg = aggregate(&vals);
            let _ = writeln!(
                out,
                "{metric},{a},{},{},{}",
                agg.n,
                format_value(agg.mean),
                format_value(agg.sd)
            );
        }
    }
    out
}

/// Per-seed static vs dynamic table, with the count of seeds on which
/// dynamic's emergency PS rejection is at most static's.
fn paired_csv(seeds: &[u64], ok: &BTreeMap<(Algorithm, u64), Values>) -> Option<(String, usize, usize)> {
    let mut out = String::from("seed,metric,static,dynamic,dynamic_minus_static\n");
    let (mut ps_ok, mut n) = (0, 0);
    for &seed in seeds {
        let (Some(s), Some(d)) = (ok.get(&(Algorithm::Static, seed)), ok.get(&(Algorithm::Dynamic, seed))) else {
            continue;
        };
        for metric in PAIRED_METRICS {
            let (sv, dv) = (s.get(metric).copied().flatten(), d.get(metric).copied().flatten());
            let diff = sv.zip(dv).map(|(sv, dv)| dv - sv);
            let _ = writeln!(
                out,
                "{seed},{metric},{},{},{}",
                format_value(sv),
                format_value(dv),
                format_value(diff)
            );
        }
        let get = |v: &Values| v.get(PAIRED_METRICS[0]).copied().flatten().unwrap_or(0.0);
        n += 1;
        if get(d) <= get(s) {
            ps_ok += 1;
        }
    }
    (n > 0).then_some((out, ps_ok, n))
}

fn cmd_plot(args: PlotArgs) -> Result<(), Failure> {
    if args.smoothing == 0 {
        return Err(Failure::Usage(anyhow::anyhow!("--smoothing must be at least 1")));
    }
    let file = if args.input.is_dir() {
        args.input.join("metrics.csv")
    } else {
        args.input.clone()
    };
    let text = fs::read_to_string(&file)
        .with_context(|| format!("reading {}", file.display()))
        .map_err(Failure::Usage)?;
    let dir = match args.out_dir {
        Some(d) => d,
        None => file.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let written = plot::render(&text, args.smoothing, &dir)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Replicate(a) => cmd_replicate(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

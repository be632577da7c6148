//! SVG line charts rebuilt from a metrics.csv file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use plotters::prelude::*;
use psvo_core::metrics::smooth;
use psvo_core::{Mode, Operator, ServiceKind};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct CsvRow {
    round: u32,
    mode: String,
    vo: String,
    service: String,
    rejected_mass: u64,
    resolved_mass: u64,
    occupancy: f64,
    #[serde(default)]
    preempted_mass: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Cell {
    rejected: u64,
    resolved: u64,
    occupancy: f64,
}

/// Per-round metrics keyed by `(operator, service)`.
struct Table {
    rounds: Vec<u32>,
    emergency: Vec<bool>,
    cells: BTreeMap<(Operator, ServiceKind), Vec<Cell>>,
}

type RoundCells = (bool, BTreeMap<(Operator, ServiceKind), Cell>);

fn parse(text: &str) -> Result<Table> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut by_round: BTreeMap<u32, RoundCells> = BTreeMap::new();
    for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row.with_context(|| format!("metrics row {}", line + 2))?;
        let op: Operator = row.vo.parse().map_err(anyhow::Error::msg)?;
        let svc: ServiceKind = row.service.parse().map_err(anyhow::Error::msg)?;
        let entry = by_round.entry(row.round).or_default();
        entry.0 = row.mode == Mode::Emergency.as_str();
        entry.1.insert(
            (op, svc),
            Cell {
                rejected: row.rejected_mass + row.preempted_mass,
                resolved: row.resolved_mass,
                occupancy: row.occupancy,
            },
        );
    }
    let mut table = Table {
        rounds: Vec::new(),
        emergency: Vec::new(),
        cells: BTreeMap::new(),
    };
    for (round, (emergency, cells)) in by_round {
        table.rounds.push(round);
        table.emergency.push(emergency);
        for op in Operator::ALL {
            for svc in ServiceKind::ALL {
                let cell = cells.get(&(op, svc)).copied().unwrap_or_default();
                table.cells.entry((op, svc)).or_default().push(cell);
            }
        }
    }
    Ok(table)
}

impl Table {
    fn sum(&self, keep: impl Fn(Operator, ServiceKind) -> bool) -> Vec<Cell> {
        let mut out = vec![Cell::default(); self.rounds.len()];
        for (&(op, svc), cells) in &self.cells {
            if keep(op, svc) {
                for (acc, c) in out.iter_mut().zip(cells) {
                    acc.rejected += c.rejected;
                    acc.resolved += c.resolved;
                    acc.occupancy += c.occupancy;
                }
            }
        }
        out
    }

    fn emergency_span(&self) -> Option<(f64, f64)> {
        let first = self.emergency.iter().position(|&e| e)?;
        let last = self.emergency.iter().rposition(|&e| e)?;
        Some((f64::from(self.rounds[first]), f64::from(self.rounds[last]) + 1.0))
    }

    fn x_range(&self) -> std::ops::Range<f64> {
        let end = self.rounds.last().map_or(1.0, |&r| f64::from(r) + 1.0);
        0.0..end
    }
}

fn rejection(cells: &[Cell]) -> Vec<Option<f64>> {
    cells
        .iter()
        .map(|c| (c.resolved > 0).then(|| c.rejected as f64 / c.resolved as f64))
        .collect()
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

type Chart<'a> = ChartContext<
    'a,
    SVGBackend<'a>,
    Cartesian2d<plotters::coord::types::RangedCoordf64, plotters::coord::types::RangedCoordf64>,
>;

fn with_chart(
    path: &Path,
    title: &str,
    y_desc: &str,
    table: &Table,
    body: impl FnOnce(&mut Chart) -> Result<()>,
) -> Result<()> {
    let root = SVGBackend::new(path, (960, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(52)
        .build_cartesian_2d(table.x_range(), 0.0..1.0)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("round")
        .y_desc(y_desc)
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    if let Some((s, e)) = table.emergency_span() {
        chart
            .draw_series(std::iter::once(Rectangle::new(
                [(s, 0.0), (e, 1.0)],
                RGBColor(250, 228, 228).filled(),
            )))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    body(&mut chart)?;
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperRight)
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}

fn rejection_chart(
    path: &Path,
    title: &str,
    table: &Table,
    series: &[(String, Vec<Cell>)],
    window: usize,
) -> Result<()> {
    with_chart(path, title, "rejection rate", table, |chart| {
        for (i, (name, cells)) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let raw = rejection(cells);
            let smoothed = smooth(&raw, window);
            let points = |vals: &[Option<f64>]| -> Vec<(f64, f64)> {
                table
                    .rounds
                    .iter()
                    .zip(vals)
                    .filter_map(|(&r, v)| v.map(|v| (f64::from(r), v.min(1.0))))
                    .collect()
            };
            chart
                .draw_series(LineSeries::new(points(&raw), color.mix(0.2)))
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            chart
                .draw_series(LineSeries::new(points(&smoothed), color.stroke_width(2)))
                .map_err(|e| anyhow::anyhow!("{e}"))?
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        Ok(())
    })
}

fn stacked_chart(path: &Path, title: &str, table: &Table, series: &[(String, Vec<Cell>)], window: usize) -> Result<()> {
    with_chart(path, title, "share of substrate", table, |chart| {
        let mut cumulative = vec![0.0; table.rounds.len()];
        let mut layers = Vec::new();
        for (name, cells) in series {
            let occ: Vec<Option<f64>> = cells.iter().map(|c| Some(c.occupancy)).collect();
            for (acc, v) in cumulative.iter_mut().zip(smooth(&occ, window)) {
                *acc += v.unwrap_or(0.0);
            }
            layers.push((name.clone(), cumulative.clone()));
        }
        // top layer first so lower ones paint over it
        for (i, (name, top)) in layers.iter().enumerate().rev() {
            let color = PALETTE[i % PALETTE.len()];
            let points: Vec<(f64, f64)> = table
                .rounds
                .iter()
                .zip(top)
                .map(|(&r, &v)| (f64::from(r), v.min(1.0)))
                .collect();
            chart
                .draw_series(AreaSeries::new(points, 0.0, color.mix(0.75)).border_style(color))
                .map_err(|e| anyhow::anyhow!("{e}"))?
                .label(name.as_str())
                .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 18, y + 5)], color.mix(0.75).filled()));
        }
        Ok(())
    })
}

/// Render the standard charts for one run into `out_dir`.
pub fn render(metrics_csv: &str, window: usize, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let table = parse(metrics_csv)?;
    let by_vo: Vec<(String, Vec<Cell>)> = Operator::ALL
        .into_iter()
        .map(|op| (op.to_string(), table.sum(|o, _| o == op)))
        .collect();
    let by_service: Vec<(String, Vec<Cell>)> = ServiceKind::ALL
        .into_iter()
        .map(|svc| (svc.to_string(), table.sum(|_, s| s == svc)))
        .collect();

    let outputs = [
        "rejection_by_vo.svg",
        "rejection_by_service.svg",
        "occupancy_by_vo.svg",
        "occupancy_by_service.svg",
    ]
    .map(|name| out_dir.join(name));
    let suffix = format!("({window}-round moving average)");
    rejection_chart(
        &outputs[0],
        &format!("Rejection rate by operator {suffix}"),
        &table,
        &by_vo,
        window,
    )?;
    rejection_chart(
        &outputs[1],
        &format!("Rejection rate by service {suffix}"),
        &table,
        &by_service,
        window,
    )?;
    stacked_chart(
        &outputs[2],
        &format!("Occupancy by operator {suffix}"),
        &table,
        &by_vo,
        window,
    )?;
    stacked_chart(
        &outputs[3],
        &format!("Occupancy by service {suffix}"),
        &table,
        &by_service,
        window,
    )?;
    Ok(outputs.to_vec())
}

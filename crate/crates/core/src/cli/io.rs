//! File formats: the iterates table, the batch summary, measurement tables
//! and spec files. Every writer has a reader that returns identical data.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back compares equal to the value written.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::{convergence_iteration, CampaignLog, ExperimentRecord};
use crate::bounds::LipschitzSpec;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::plants::Plant;
use crate::uncertainty::{Measurement, MeasurementTag};

/// Bins used for the Δφ_ave histogram.
pub const HISTOGRAM_BINS: usize = 20;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {what} from {field:?}")))
}

fn parse_usize(field: &str, what: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {what} from {field:?}")))
}

/// Row of the iterates table, tagged with the realization it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRow {
    pub realization: usize,
    /// `"trimmed"` when the campaign refined and trimmed measurements, `"plain"` otherwise.
    pub variant: String,
    pub record: ExperimentRecord,
}

fn variant(log: &CampaignLog) -> &'static str {
    if log.config.trim {
        "trimmed"
    } else {
        "plain"
    }
}

fn iterates_header(n_u: usize, n_g: usize) -> Vec<String> {
    let mut h: Vec<String> = ["realization", "variant", "index", "iteration", "tag"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=n_u).map(|i| format!("u{i}")));
    h.push("measured_cost".into());
    h.extend((1..=n_g).map(|j| format!("measured_g{j}")));
    h.push("true_cost".into());
    h.extend((1..=n_g).map(|j| format!("true_g{j}")));
    h.push("guard_margin".into());
    h.push("cost_lower".into());
    h.push("cost_upper".into());
    for j in 1..=n_g {
        h.push(format!("g{j}_lower"));
        h.push(format!("g{j}_upper"));
    }
    h
}

/// One row per applied experiment across the given `(realization, log)` pairs.
/// All logs must come from the same plant.
pub fn iterates_csv(logs: &[(usize, &CampaignLog)]) -> Result<String> {
    let (n_u, n_g) = logs
        .iter()
        .flat_map(|(_, l)| l.records.first())
        .map(|r| (r.point.len(), r.true_constraints.len()))
        .next()
        .unwrap_or((0, 0));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(iterates_header(n_u, n_g)).map_err(csv_err)?;
    for (realization, log) in logs {
        for r in &log.records {
            if r.point.len() != n_u || r.true_constraints.len() != n_g {
                return Err(Error::DimensionMismatch {
                    expected: n_u,
                    actual: r.point.len(),
                });
            }
            let mut row = vec![
                realization.to_string(),
                variant(log).to_string(),
                r.index.to_string(),
                r.iteration.to_string(),
                r.tag.as_str().to_string(),
            ];
            row.extend(r.point.iter().map(f64::to_string));
            row.push(r.measured_cost.to_string());
            row.extend(r.measured_constraints.iter().map(f64::to_string));
            row.push(r.true_cost.to_string());
            row.extend(r.true_constraints.iter().map(f64::to_string));
            row.push(r.guard_margin.map(|m| m.to_string()).unwrap_or_default());
            row.push(r.cost_lower.to_string());
            row.push(r.cost_upper.to_string());
            for j in 0..n_g {
                row.push(r.constraint_lower[j].to_string());
                row.push(r.constraint_upper[j].to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Inverse of [`iterates_csv`].
pub fn read_iterates_csv(text: &str) -> Result<Vec<IterateRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_err)?.clone();
    let n_u = headers.iter().filter(|h| h.starts_with('u') && h[1..].parse::<usize>().is_ok()).count();
    let n_g = headers.iter().filter(|h| h.starts_with("true_g")).count();
    if headers.len() != iterates_header(n_u, n_g).len() {
        return Err(Error::Config("unrecognised iterates header".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let mut it = rec.iter();
        let mut next = || it.next().unwrap_or("");
        let realization = parse_usize(next(), "realization")?;
        let variant = next().to_string();
        let index = parse_usize(next(), "index")?;
        let iteration = parse_usize(next(), "iteration")?;
        let tag: MeasurementTag = next().parse()?;
        let mut floats = |n: usize, what: &str| -> Result<Vec<f64>> { (0..n).map(|_| parse_f64(next(), what)).collect() };
        let point = floats(n_u, "coordinate")?;
        let measured_cost = floats(1, "measured cost")?[0];
        let measured_constraints = floats(n_g, "measured constraint")?;
        let true_cost = floats(1, "true cost")?[0];
        let true_constraints = floats(n_g, "true constraint")?;
        let margin = next();
        let guard_margin = if margin.is_empty() {
            None
        } else {
            Some(parse_f64(margin, "guard margin")?)
        };
        let cost_lower = parse_f64(next(), "cost lower")?;
        let cost_upper = parse_f64(next(), "cost upper")?;
        let (mut constraint_lower, mut constraint_upper) = (Vec::new(), Vec::new());
        for _ in 0..n_g {
            constraint_lower.push(parse_f64(next(), "constraint lower")?);
            constraint_upper.push(parse_f64(next(), "constraint upper")?);
        }
        rows.push(IterateRow {
            realization,
            variant,
            record: ExperimentRecord {
                index,
                iteration,
                tag,
                point,
                measured_cost,
                measured_constraints,
                true_cost,
                true_constraints,
                guard_margin,
                cost_lower,
                cost_upper,
                constraint_lower,
                constraint_upper,
            },
        });
    }
    Ok(rows)
}

/// Per-campaign line of the batch summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub realization: usize,
    pub variant: String,
    pub seed: u64,
    pub iterate_violations: usize,
    pub probe_violations: usize,
    pub held_iterations: usize,
    pub repairs: usize,
    /// First iteration after which the true cost stays within 1% of the optimum.
    pub convergence_iteration: Option<usize>,
    pub final_cost_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn of(values: &[f64], bins: usize) -> Histogram {
        let bins = bins.max(1);
        if values.is_empty() {
            return Histogram {
                edges: vec![0.0, 0.0],
                counts: vec![0],
            };
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return Histogram {
                edges: vec![lo, hi],
                counts: vec![values.len()],
            };
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStats {
    pub converged: usize,
    pub mean_iteration: Option<f64>,
    pub mean_final_cost_gap: f64,
    pub max_final_cost_gap: f64,
}

/// Aggregates over a batch; totals are plain sums over `runs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub plant: String,
    pub optimal_cost: f64,
    pub campaigns: usize,
    pub iterate_violations: usize,
    pub probe_violations: usize,
    pub runs: Vec<RunSummary>,
    pub convergence: ConvergenceStats,
    /// Δφ_ave per realization (untrimmed minus trimmed), for paired comparisons.
    pub delta_phi_ave: Option<Vec<f64>>,
    pub delta_phi_stats: Option<DeltaStats>,
    pub histogram: Option<Histogram>,
}

impl BatchSummary {
    pub fn from_logs(plant: &Plant, logs: &[(usize, &CampaignLog)], deltas: Option<&[f64]>) -> BatchSummary {
        let runs: Vec<RunSummary> = logs
            .iter()
            .map(|(realization, log)| RunSummary {
                realization: *realization,
                variant: variant(log).to_string(),
                seed: log.config.seed,
                iterate_violations: log.iterate_violations,
                probe_violations: log.probe_violations,
                held_iterations: log.held_iterations.len(),
                repairs: log.repairs,
                convergence_iteration: convergence_iteration(log, plant.optimal_cost),
                final_cost_gap: plant.true_cost(log.final_point()) - plant.optimal_cost,
            })
            .collect();
        let iters: Vec<f64> = runs.iter().filter_map(|r| r.convergence_iteration).map(|k| k as f64).collect();
        let gaps: Vec<f64> = runs.iter().map(|r| r.final_cost_gap).collect();
        let convergence = ConvergenceStats {
            converged: iters.len(),
            mean_iteration: (!iters.is_empty()).then(|| iters.iter().sum::<f64>() / iters.len() as f64),
            mean_final_cost_gap: if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 },
            max_final_cost_gap: gaps.iter().copied().fold(0.0, f64::max),
        };
        let delta_phi_stats = deltas.filter(|d| !d.is_empty()).map(|d| {
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let var = if d.len() > 1 {
                d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            DeltaStats {
                mean,
                std_dev: var.sqrt(),
                min: d.iter().copied().fold(f64::INFINITY, f64::min),
                max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                positive: d.iter().filter(|x| **x > 0.0).count(),
            }
        });
        BatchSummary {
            plant: plant.id.to_string(),
            optimal_cost: plant.optimal_cost,
            campaigns: runs.len(),
            iterate_violations: runs.iter().map(|r| r.iterate_violations).sum(),
            probe_violations: runs.iter().map(|r| r.probe_violations).sum(),
            runs,
            convergence,
            delta_phi_ave: deltas.map(<[f64]>::to_vec),
            delta_phi_stats,
            histogram: deltas.map(|d| Histogram::of(d, HISTOGRAM_BINS)),
        }
    }
}

pub fn summary_json(summary: &BatchSummary) -> Result<String> {
    serde_json::to_string_pretty(summary).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_summary_json(text: &str) -> Result<BatchSummary> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Measurement table: `index,tag,u1..un,value,noise_lower,noise_upper`.
pub fn measurements_csv(data: &[Measurement]) -> Result<String> {
    let n_u = data.first().map_or(0, |m| m.at.dim());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string(), "tag".to_string()];
    header.extend((1..=n_u).map(|i| format!("u{i}")));
    header.extend(["value", "noise_lower", "noise_upper"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for m in data {
        crate::geometry::check_dim(n_u, m.at.dim())?;
        let mut row = vec![m.index.to_string(), m.tag.as_str().to_string()];
        row.extend(m.at.coords().iter().map(f64::to_string));
        row.extend([m.value, m.noise_lower, m.noise_upper].map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_measurements_csv(text: &str) -> Result<Vec<Measurement>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let n_cols = r.headers().map_err(csv_err)?.len();
    if n_cols < 6 {
        return Err(Error::Config(
            "measurement table needs index,tag,u1..un,value,noise_lower,noise_upper".into(),
        ));
    }
    let n_u = n_cols - 5;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let f: Vec<&str> = rec.iter().collect();
        let coords = (0..n_u)
            .map(|i| parse_f64(f[2 + i], "coordinate"))
            .collect::<Result<Vec<f64>>>()?;
        out.push(Measurement::new(
            Point::new(coords)?,
            parse_f64(f[2 + n_u], "value")?,
            parse_f64(f[3 + n_u], "noise lower")?,
            parse_f64(f[4 + n_u], "noise upper")?,
            f[1].parse()?,
            parse_usize(f[0], "index")?,
        )?);
    }
    Ok(out)
}

/// How a spec file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    /// Plant id and function, or the data file the estimate came from.
    pub source: String,
    pub grid_per_dim: Option<usize>,
    pub fit_form: Option<String>,
    pub repaired: bool,
    pub inflation: Option<f64>,
    pub inflation_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecFile {
    pub provenance: Provenance,
    pub spec: LipschitzSpec,
}

pub fn spec_json(file: &SpecFile) -> Result<String> {
    serde_json::to_string_pretty(file).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_spec_json(text: &str) -> Result<SpecFile> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn read_spec_file(path: &Path) -> Result<SpecFile> {
    read_spec_json(&std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?)
}

//! Experiment driver: repeated runs, parameter sweeps and CSV output.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{oblivious_cost, static_optimal_cost};
use crate::error::{Error, Result};
use crate::metrics::{MruAudit, RankTracker};
use crate::metrics::CostLedger;
use crate::traces::{generate_trace, ingest_trace, Trace, TraceFormat};
use crate::tree::{CheckStats, SeedTree, TreeConfig};

pub const MAX_CAPACITY: usize = 64;

/// Divisor used for plotted costs; rows stay raw.
pub const PLOT_DIVISOR: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceSpec {
    Generated { n_items: u64, requests: usize, locality: f64 },
    File { path: PathBuf, format: TraceFormat },
}

impl TraceSpec {
    pub fn locality(&self) -> Option<f64> {
        match self {
            TraceSpec::Generated { locality, .. } => Some(*locality),
            TraceSpec::File { .. } => None,
        }
    }

    /// Generated traces take `seed` so each repeat sees a fresh sequence.
    pub fn load(&self, seed: u64) -> Result<Trace> {
        match self {
            TraceSpec::Generated { n_items, requests, locality } => generate_trace(*n_items, *requests, *locality, seed),
            TraceSpec::File { path, format } => ingest_trace(path, *format),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub capacity: usize,
    pub occupancy: f64,
    pub trace: TraceSpec,
    pub seed: u64,
    pub repeats: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_CAPACITY).contains(&self.capacity) {
            return Err(Error::InvalidCapacity(self.capacity));
        }
        if !(self.occupancy > 0.0 && self.occupancy < 1.0) {
            return Err(Error::InvalidOccupancy(self.occupancy));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub fn tree_config(&self, seed: u64) -> TreeConfig {
        TreeConfig::new(self.capacity, self.occupancy, seed)
    }

    fn label(&self) -> String {
        match self.trace.locality() {
            Some(p) => format!("c={} f={} locality={}", self.capacity, self.occupancy, p),
            None => format!("c={} f={} trace=file", self.capacity, self.occupancy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: usize,
    pub c: usize,
    pub f: f64,
    pub locality: Option<f64>,
    pub m: usize,
    pub access_cost: u64,
    pub reconfig_cost: u64,
    pub total_cost: u64,
    pub mean_attempts: f64,
    pub mean_mru_slack: f64,
    pub lower_bound: f64,
    pub ratio: f64,
    pub oblivious_cost: u64,
    pub static_opt_cost: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Simulation {
    pub ledger: CostLedger,
    pub audit: MruAudit,
    pub checks: CheckStats,
}

/// Serves `trace` with a fresh tree built from `config`.
pub fn simulate(trace: &Trace, config: TreeConfig, self_check: bool) -> Result<Simulation> {
    let mut tree = SeedTree::init(&trace.items(), config)?;
    tree.set_self_check(self_check);
    let mut ranks = RankTracker::with_capacity(trace.n_items(), trace.len());
    let mut sim = Simulation::default();
    for &v in trace.requests() {
        let rank = ranks.observe(v);
        let rec = tree.access(v)?;
        sim.audit.push(rec.level_found, rank, config.capacity);
        sim.ledger.record(&rec, rank, config.capacity);
    }
    sim.checks = tree.check_stats();
    Ok(sim)
}

/// One run: trace (seeded by `seed` when generated), SeedTree and both
/// baselines.
pub fn run_once(config: &ExperimentConfig, run_id: usize) -> Result<ResultRow> {
    let seed = config.seed.wrapping_add(run_id as u64);
    let trace = config.trace.load(seed)?;
    let tree_config = config.tree_config(seed);
    let sim = simulate(&trace, tree_config, false)?;
    let oblivious = oblivious_cost(&trace, tree_config)?;
    let lower_bound = sim.ledger.lower_bound();
    let total = sim.ledger.total();
    Ok(ResultRow {
        run_id,
        c: config.capacity,
        f: config.occupancy,
        locality: config.trace.locality(),
        m: trace.len(),
        access_cost: sim.ledger.access,
        reconfig_cost: sim.ledger.reconfig,
        total_cost: total,
        mean_attempts: sim.ledger.mean_attempts(),
        mean_mru_slack: sim.audit.mean(),
        lower_bound,
        ratio: if lower_bound > 0.0 { total as f64 / lower_bound } else { f64::NAN },
        oblivious_cost: oblivious.total(),
        static_opt_cost: static_optimal_cost(trace.requests(), config.capacity),
    })
}

/// `repeats` independent runs, seeds `seed + run_id`, in run order.
pub fn run(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    (0..config.repeats).into_par_iter().map(|r| run_once(config, r)).collect()
}

fn row_key(r: &ResultRow) -> (usize, f64, f64, usize) {
    (r.c, r.f, r.locality.unwrap_or(f64::NEG_INFINITY), r.run_id)
}

/// Runs every cell; rows sorted by `(c, f, locality, run)`.
pub fn sweep(configs: &[ExperimentConfig]) -> Result<Vec<ResultRow>> {
    if configs.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    for cfg in configs {
        cfg.validate().map_err(|e| Error::SweepCell { cell: cfg.label(), source: Box::new(e) })?;
    }
    let cells: Vec<Vec<ResultRow>> = configs
        .par_iter()
        .map(|cfg| run(cfg).map_err(|e| Error::SweepCell { cell: cfg.label(), source: Box::new(e) }))
        .collect::<Result<_>>()?;
    let mut rows: Vec<ResultRow> = cells.into_iter().flatten().collect();
    rows.sort_by(|a, b| row_key(a).partial_cmp(&row_key(b)).expect("finite sweep keys"));
    Ok(rows)
}

/// Cross product of value lists sharing one trace shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub capacities: Vec<usize>,
    pub occupancies: Vec<f64>,
    pub localities: Vec<f64>,
    pub n_items: u64,
    pub requests: usize,
    pub seed: u64,
    pub repeats: usize,
}

impl SweepGrid {
    pub fn configs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &capacity in &self.capacities {
            for &occupancy in &self.occupancies {
                for &locality in &self.localities {
                    out.push(ExperimentConfig {
                        capacity,
                        occupancy,
                        trace: TraceSpec::Generated { n_items: self.n_items, requests: self.requests, locality },
                        seed: self.seed,
                        repeats: self.repeats,
                    });
                }
            }
        }
        out
    }
}

/// `#`-prefixed metadata lines, then a header row and one line per row.
pub fn write_csv<W: Write>(rows: &[ResultRow], metadata: &[String], mut w: W) -> Result<()> {
    writeln!(w, "# seedtree {}", env!("CARGO_PKG_VERSION"))?;
    for line in metadata {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# costs are raw edge counts; divide by {PLOT_DIVISOR} for plots")?;
    let mut csv = csv::WriterBuilder::new().has_headers(true).from_writer(w);
    if rows.is_empty() {
        csv.write_record(RESULT_COLUMNS)?;
    }
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub const RESULT_COLUMNS: [&str; 14] = [
    "run_id",
    "c",
    "f",
    "locality",
    "m",
    "access_cost",
    "reconfig_cost",
    "total_cost",
    "mean_attempts",
    "mean_mru_slack",
    "lower_bound",
    "ratio",
    "oblivious_cost",
    "static_opt_cost",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn small(capacity: usize, occupancy: f64, locality: f64, repeats: usize) -> ExperimentConfig {
        ExperimentConfig {
            capacity,
            occupancy,
            trace: TraceSpec::Generated { n_items: 127, requests: 3000, locality },
            seed: 11,
            repeats,
        }
    }

    #[test]
    fn validation() {
        assert!(small(0, 0.5, 0.0, 1).validate().is_err());
        assert!(small(65, 0.5, 0.0, 1).validate().is_err());
        assert!(small(2, 1.0, 0.0, 1).validate().is_err());
        assert!(small(2, 0.5, 0.0, 0).validate().is_err());
        assert!(small(64, 0.5, 0.0, 1).validate().is_ok());
    }

    #[test]
    fn rows_are_consistent() {
        for row in run(&small(2, 0.5, 0.6, 3)).unwrap() {
            assert_eq!(row.total_cost, row.access_cost + row.reconfig_cost);
            assert!((row.ratio - row.total_cost as f64 / row.lower_bound).abs() < 1e-9);
            assert_eq!(row.m, 3000);
        }
    }

    #[test]
    fn repeats_use_distinct_seeds_and_rerun_identically() {
        let cfg = small(2, 0.5, 0.3, 2);
        let a = run(&cfg).unwrap();
        assert_eq!(a.iter().map(|r| r.run_id).collect::<Vec<_>>(), vec![0, 1]);
        assert_ne!(a[0].total_cost, a[1].total_cost);
        let mut x = Vec::new();
        let mut y = Vec::new();
        write_csv(&a, &[], &mut x).unwrap();
        write_csv(&run(&cfg).unwrap(), &[], &mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn one_cell_sweep_equals_run() {
        let cfg = small(3, 0.5, 0.6, 2);
        assert_eq!(sweep(std::slice::from_ref(&cfg)).unwrap(), run(&cfg).unwrap());
    }

    #[test]
    fn grid_counts_and_order() {
        let grid = SweepGrid {
            capacities: vec![4, 2, 3],
            occupancies: vec![0.5, 0.25, 0.75],
            localities: vec![0.3],
            n_items: 63,
            requests: 500,
            seed: 1,
            repeats: 2,
        };
        let rows = sweep(&grid.configs()).unwrap();
        assert_eq!(rows.len(), 18);
        let keys: Vec<_> = rows.iter().map(row_key).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
    }

    #[test]
    fn failing_cell_is_named() {
        let bad = ExperimentConfig {
            trace: TraceSpec::File { path: "/nonexistent/trace.txt".into(), format: TraceFormat::Canonical },
            ..small(2, 0.5, 0.0, 1)
        };
        let err = sweep(&[small(2, 0.5, 0.0, 1), bad]).unwrap_err();
        assert!(matches!(err, Error::SweepCell { ref cell, .. } if cell.contains("trace=file")), "{err}");
    }

    #[test]
    fn csv_layout() {
        let rows = run(&small(2, 0.5, 0.6, 1)).unwrap();
        let mut out = Vec::new();
        write_csv(&rows, &["c=2 f=0.5".into()], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# seedtree "));
        assert_eq!(lines[1], "# c=2 f=0.5");
        assert!(lines[2].contains("divide by 1000000"));
        assert_eq!(lines[3], RESULT_COLUMNS.join(","));
        assert_eq!(lines.len(), 5);
    }
}

//! Rejection-probability experiments over grids of pmfs, sample sizes and
//! calibration methods.
//!
//! Seeds are hierarchical: the master seed and a cell's `(pmf, n)` give the
//! cell seed, replication `r` uses child `r` of it, and inside a replication
//! child 0 draws the sample while child 1 seeds the Monte Carlo draws. The
//! method is deliberately not part of the seed, so every method in a plan
//! sees the same samples and the same Gaussian draws.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationConfig, Method, VnRule};
use crate::error::{invalid, Error, Result};
use crate::pmf::{
    alternative_poisson, null_mixture, null_triangular, perturbed_triangular, sample_from, Pmf,
};
use crate::projection::KKT_TOL;
use crate::rng::{derive_seed, label_hash, RngStream};
use crate::stats::binomial_se;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PmfChoice {
    /// Triangular pmf on `{0..5}`.
    P0_1,
    /// Triangular mixture with knots at 2, 3, 5.
    P0_2,
    /// Poisson(1.5) truncated to `{0..5}`.
    P1_1,
    /// Triangular pmf with a kink at 2.
    P1_2,
    Custom { name: String, mass: Vec<f64> },
}

impl PmfChoice {
    pub fn name(&self) -> &str {
        match self {
            PmfChoice::P0_1 => "p0_1",
            PmfChoice::P0_2 => "p0_2",
            PmfChoice::P1_1 => "p1_1",
            PmfChoice::P1_2 => "p1_2",
            PmfChoice::Custom { name, .. } => name,
        }
    }

    pub fn pmf(&self) -> Result<Pmf> {
        Ok(match self {
            PmfChoice::P0_1 => null_triangular(),
            PmfChoice::P0_2 => null_mixture(),
            PmfChoice::P1_1 => alternative_poisson(),
            PmfChoice::P1_2 => perturbed_triangular(),
            PmfChoice::Custom { mass, .. } => Pmf::new(mass.clone())?,
        })
    }

    pub fn benchmarks() -> Vec<PmfChoice> {
        vec![PmfChoice::P0_1, PmfChoice::P0_2, PmfChoice::P1_1, PmfChoice::P1_2]
    }
}

/// A calibration method together with its threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vn: Option<VnRule>,
}

impl MethodSpec {
    pub fn lfh() -> Self {
        Self {
            method: Method::Lfh,
            vn: None,
        }
    }

    pub fn knot(vn: VnRule) -> Self {
        Self {
            method: Method::Knot,
            vn: Some(vn),
        }
    }

    fn vn_label(&self) -> String {
        match (self.method, self.vn) {
            (Method::Knot, Some(v)) => v.to_string(),
            _ => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub pmfs: Vec<PmfChoice>,
    pub sample_sizes: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    /// Replications per cell.
    pub replications: usize,
    /// Monte Carlo draws per replication.
    pub draws: usize,
    pub alpha: f64,
    pub master_seed: u64,
}

pub const PAPER_SAMPLE_SIZES: [usize; 3] = [500, 5000, 50_000];

impl ExperimentPlan {
    /// Knot-method grid: four benchmark pmfs, three sample sizes, three
    /// threshold rules.
    pub fn table1(replications: usize, draws: usize, master_seed: u64) -> Self {
        Self {
            pmfs: PmfChoice::benchmarks(),
            sample_sizes: PAPER_SAMPLE_SIZES.to_vec(),
            methods: vec![
                MethodSpec::knot(VnRule::Zero),
                MethodSpec::knot(VnRule::SqrtLogLog),
                MethodSpec::knot(VnRule::Quarter),
            ],
            replications,
            draws,
            alpha: 0.05,
            master_seed,
        }
    }

    /// Least-favorable calibration grid.
    pub fn table2(replications: usize, draws: usize, master_seed: u64) -> Self {
        Self {
            methods: vec![MethodSpec::lfh()],
            ..Self::table1(replications, draws, master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("replications must be >= 1"));
        }
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n < 3) {
            return Err(invalid(format!("sample size {n} is below 3")));
        }
        if self.pmfs.is_empty() || self.sample_sizes.is_empty() || self.methods.is_empty() {
            return Err(invalid("plan has an empty axis"));
        }
        for m in &self.methods {
            if m.method == Method::Knot && m.vn.is_none() {
                return Err(invalid("knot method needs a vn rule"));
            }
        }
        for p in &self.pmfs {
            p.pmf()?;
        }
        CalibrationConfig {
            alpha: self.alpha,
            draws: self.draws,
            ..Default::default()
        }
        .validate()
    }
}

/// Seed shared by every method for the cell `(pmf, n)`.
pub fn cell_seed(master_seed: u64, pmf_name: &str, n: usize) -> u64 {
    derive_seed(derive_seed(master_seed, label_hash(pmf_name)), n as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub pmf: String,
    pub n: usize,
    pub method: Method,
    /// Threshold rule label; empty for the least-favorable method.
    pub vn: String,
    pub rate: f64,
    pub se: f64,
    #[serde(rename = "N")]
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub rejections: usize,
    /// Replications whose convex fit or any projection missed the KKT
    /// tolerance.
    pub kkt_violations: usize,
    pub max_kkt_residual: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub plan: ExperimentPlan,
    pub elapsed_secs: f64,
    pub diagnostics: Vec<CellDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTable {
    pub cells: Vec<SimCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<TableMetadata>,
}

impl SimTable {
    pub fn cell(&self, pmf: &str, n: usize, method: Method, vn: &str) -> Option<&SimCell> {
        self.cells
            .iter()
            .find(|c| c.pmf == pmf && c.n == n && c.method == method && c.vn == vn)
    }

    pub fn total_kkt_violations(&self) -> usize {
        self.metadata
            .as_ref()
            .map(|m| m.diagnostics.iter().map(|d| d.kkt_violations).sum())
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub rate: f64,
    pub se: f64,
    pub rejections: usize,
    pub kkt_violations: usize,
    pub max_kkt_residual: f64,
}

/// Runs `replications` independent tests of samples of size `n` from `pmf`.
/// `cfg.seed` is ignored; every replication derives its own seeds from
/// `seed`.
pub fn run_cell(
    pmf: &Pmf,
    n: usize,
    cfg: &CalibrationConfig,
    replications: usize,
    seed: u64,
) -> Result<CellOutcome> {
    if replications == 0 {
        return Err(invalid("replications must be >= 1"));
    }
    cfg.validate()?;
    let root = RngStream::new(seed);
    let per_rep: Vec<Result<(bool, f64)>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let rep = root.child(r as u64);
            let sample = sample_from(pmf, n, &mut rep.child(0))?;
            let cfg = CalibrationConfig {
                seed: rep.child(1).seed(),
                ..cfg.clone()
            };
            let report = calibrate(&sample, &cfg)?;
            Ok((report.reject, report.max_kkt_residual))
        })
        .collect();
    let mut rejections = 0;
    let mut kkt_violations = 0;
    let mut max_kkt_residual = 0.0f64;
    for rep in per_rep {
        let (reject, kkt) = rep?;
        rejections += usize::from(reject);
        if kkt > KKT_TOL {
            kkt_violations += 1;
        }
        max_kkt_residual = max_kkt_residual.max(kkt);
    }
    let rate = rejections as f64 / replications as f64;
    Ok(CellOutcome {
        rate,
        se: binomial_se(rate, replications),
        rejections,
        kkt_violations,
        max_kkt_residual,
    })
}

pub fn run_plan(plan: &ExperimentPlan) -> Result<SimTable> {
    plan.validate()?;
    let start = Instant::now();
    let mut coords = Vec::new();
    for choice in &plan.pmfs {
        for &n in &plan.sample_sizes {
            for m in &plan.methods {
                coords.push((choice, n, *m));
            }
        }
    }
    let results: Vec<(SimCell, CellDiagnostics)> = coords
        .par_iter()
        .map(|&(choice, n, m)| {
            let cfg = CalibrationConfig {
                alpha: plan.alpha,
                draws: plan.draws,
                method: m.method,
                vn: m.vn.unwrap_or(VnRule::Zero),
                seed: 0,
            };
            let seed = cell_seed(plan.master_seed, choice.name(), n);
            let outcome = choice
                .pmf()
                .and_then(|p| run_cell(&p, n, &cfg, plan.replications, seed));
            let mut cell = SimCell {
                pmf: choice.name().to_string(),
                n,
                method: m.method,
                vn: m.vn_label(),
                rate: f64::NAN,
                se: f64::NAN,
                replications: plan.replications,
            };
            let diag = match outcome {
                Ok(o) => {
                    cell.rate = o.rate;
                    cell.se = o.se;
                    CellDiagnostics {
                        rejections: o.rejections,
                        kkt_violations: o.kkt_violations,
                        max_kkt_residual: o.max_kkt_residual,
                        error: None,
                    }
                }
                Err(e) => CellDiagnostics {
                    rejections: 0,
                    kkt_violations: 0,
                    max_kkt_residual: 0.0,
                    error: Some(e.to_string()),
                },
            };
            (cell, diag)
        })
        .collect();
    let (cells, diagnostics) = results.into_iter().unzip();
    Ok(SimTable {
        cells,
        metadata: Some(TableMetadata {
            plan: plan.clone(),
            elapsed_secs: start.elapsed().as_secs_f64(),
            diagnostics,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "text" => Ok(TableFormat::Text),
            other => Err(invalid(format!("unknown table format `{other}`"))),
        }
    }
}

pub fn emit_table(t: &SimTable, format: TableFormat) -> Result<Vec<u8>> {
    match format {
        TableFormat::Csv => to_csv(t),
        TableFormat::Json => {
            let mut out = serde_json::to_vec_pretty(t).map_err(|e| invalid(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        TableFormat::Text => Ok(to_text(t).into_bytes()),
    }
}

const CSV_HEADER: [&str; 7] = ["pmf", "n", "method", "vn", "rate", "se", "N"];

fn to_csv(t: &SimTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| invalid(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for c in &t.cells {
        w.write_record([
            c.pmf.clone(),
            c.n.to_string(),
            c.method.to_string(),
            c.vn.clone(),
            c.rate.to_string(),
            c.se.to_string(),
            c.replications.to_string(),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| invalid(e.to_string()))
}

/// Reads the csv written by [`emit_table`]. Metadata is not part of the csv.
pub fn parse_csv(data: &[u8]) -> Result<SimTable> {
    let mut r = csv::Reader::from_reader(data);
    let parse = |e: csv::Error| Error::Parse(e.to_string());
    let header = r.headers().map_err(parse)?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected csv header {header:?}")));
    }
    let mut cells = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(parse)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{}`", &rec[i])))
        };
        let int = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| Error::Parse(format!("bad integer `{}`", &rec[i])))
        };
        cells.push(SimCell {
            pmf: rec[0].to_string(),
            n: int(1)?,
            method: rec[2].parse()?,
            vn: rec[3].to_string(),
            rate: num(4)?,
            se: num(5)?,
            replications: int(6)?,
        });
    }
    Ok(SimTable {
        cells,
        metadata: None,
    })
}

/// One row per pmf, one column per `(n, method)` pair.
fn to_text(t: &SimTable) -> String {
    let mut columns: Vec<(usize, String)> = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    let mut grid: BTreeMap<(String, usize, String), f64> = BTreeMap::new();
    for c in &t.cells {
        let label = match c.method {
            Method::Lfh => "lfh".to_string(),
            Method::Knot => format!("vn={}", c.vn),
        };
        if !columns.contains(&(c.n, label.clone())) {
            columns.push((c.n, label.clone()));
        }
        if !rows.contains(&c.pmf) {
            rows.push(c.pmf.clone());
        }
        grid.insert((c.pmf.clone(), c.n, label), c.rate);
    }
    let width = columns
        .iter()
        .map(|(n, l)| format!("n={n} {l}").len())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<8}", "pmf");
    for (n, l) in &columns {
        let _ = write!(out, " | {:>width$}", format!("n={n} {l}"));
    }
    out.push('\n');
    for pmf in &rows {
        let _ = write!(out, "{pmf:<8}");
        for (n, l) in &columns {
            let cell = match grid.get(&(pmf.clone(), *n, l.clone())) {
                Some(r) if r.is_finite() => format!("{r:.3}"),
                Some(_) => "error".to_string(),
                None => "-".to_string(),
            };
            let _ = write!(out, " | {cell:>width$}");
        }
        out.push('\n');
    }
    if let Some(m) = &t.metadata {
        let _ = writeln!(
            out,
            "\nN={} B={} alpha={} seed={} elapsed={:.1}s",
            m.plan.replications, m.plan.draws, m.plan.alpha, m.plan.master_seed, m.elapsed_secs
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plan(replications: usize) -> ExperimentPlan {
        ExperimentPlan {
            pmfs: vec![PmfChoice::P0_1, PmfChoice::P1_1],
            sample_sizes: vec![200],
            methods: vec![MethodSpec::lfh(), MethodSpec::knot(VnRule::Zero)],
            replications,
            draws: 50,
            alpha: 0.05,
            master_seed: 4,
        }
    }

    #[test]
    fn preset_layouts() {
        let t1 = ExperimentPlan::table1(500, 1000, 1);
        assert_eq!(t1.pmfs.len() * t1.sample_sizes.len() * t1.methods.len(), 36);
        let t2 = ExperimentPlan::table2(500, 1000, 1);
        assert_eq!(t2.pmfs.len() * t2.sample_sizes.len() * t2.methods.len(), 12);
    }

    #[test]
    fn smoke_plan_single_replication() {
        let t = run_plan(&tiny_plan(1)).unwrap();
        assert_eq!(t.cells.len(), 4);
        for c in &t.cells {
            assert!(c.rate == 0.0 || c.rate == 1.0);
            assert_eq!(c.se, 0.0);
        }
    }

    #[test]
    fn rates_and_errors_are_consistent() {
        let t = run_plan(&tiny_plan(20)).unwrap();
        let meta = t.metadata.as_ref().unwrap();
        for (c, d) in t.cells.iter().zip(&meta.diagnostics) {
            assert!(d.error.is_none());
            assert_eq!(c.rate, d.rejections as f64 / 20.0);
            assert_eq!(c.se, (c.rate * (1.0 - c.rate) / 20.0).sqrt());
            assert_eq!(d.kkt_violations, 0);
        }
        // Shared seeds: the least-favorable test never rejects more often.
        for pmf in ["p0_1", "p1_1"] {
            let lfh = t.cell(pmf, 200, Method::Lfh, "").unwrap();
            let knot = t.cell(pmf, 200, Method::Knot, "zero").unwrap();
            assert!(lfh.rate <= knot.rate);
        }
    }

    #[test]
    fn cell_in_isolation_matches_plan() {
        let plan = tiny_plan(10);
        let t = run_plan(&plan).unwrap();
        let cfg = CalibrationConfig {
            alpha: 0.05,
            draws: 50,
            method: Method::Knot,
            vn: VnRule::Zero,
            seed: 0,
        };
        let seed = cell_seed(plan.master_seed, "p0_1", 200);
        let alone = run_cell(&null_triangular(), 200, &cfg, 10, seed).unwrap();
        assert_eq!(t.cell("p0_1", 200, Method::Knot, "zero").unwrap().rate, alone.rate);
    }

    #[test]
    fn per_cell_errors_do_not_abort() {
        let mut plan = tiny_plan(3);
        plan.pmfs.push(PmfChoice::Custom {
            name: "dirac".into(),
            mass: vec![1.0],
        });
        let t = run_plan(&plan).unwrap();
        let meta = t.metadata.unwrap();
        let errors = meta.diagnostics.iter().filter(|d| d.error.is_some()).count();
        assert_eq!(errors, 2);
        assert_eq!(t.cells.iter().filter(|c| c.rate.is_nan()).count(), 2);
    }

    #[test]
    fn invalid_plans() {
        let mut p = tiny_plan(0);
        assert!(run_plan(&p).is_err());
        p.replications = 1;
        p.sample_sizes = vec![2];
        assert!(p.validate().is_err());
        p.sample_sizes = vec![100];
        p.methods = vec![MethodSpec {
            method: Method::Knot,
            vn: None,
        }];
        assert!(p.validate().is_err());
    }

    #[test]
    fn csv_round_trip_and_empty() {
        let t = run_plan(&tiny_plan(5)).unwrap();
        let csv = emit_table(&t, TableFormat::Csv).unwrap();
        let back = parse_csv(&csv).unwrap();
        assert_eq!(back.cells, t.cells);

        let empty = SimTable {
            cells: vec![],
            metadata: None,
        };
        let csv = emit_table(&empty, TableFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "pmf,n,method,vn,rate,se,N\n");
    }

    #[test]
    fn text_and_json_render() {
        let t = run_plan(&tiny_plan(2)).unwrap();
        let text = String::from_utf8(emit_table(&t, TableFormat::Text).unwrap()).unwrap();
        assert!(text.lines().next().unwrap().contains("n=200 lfh"));
        assert!(text.contains("p1_1"));
        let json = emit_table(&t, TableFormat::Json).unwrap();
        let back: SimTable = serde_json::from_slice(&json).unwrap();
        assert_eq!(back.cells, t.cells);
        assert!("xml".parse::<TableFormat>().is_err());
    }

    #[test]
    fn plan_serde_round_trip() {
        let plan = ExperimentPlan::table1(10, 20, 3);
        let json = serde_json::to_string(&plan).unwrap();
        let back: ExperimentPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
    }
}

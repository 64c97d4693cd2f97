//! Command implementations behind the `pmfconvex` binary.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use convexity::calibration::{calibrate, CalibrationConfig, Method, TestReport, VnRule};
use convexity::pmf::Sample;
use convexity::sim::{emit_table, run_plan, ExperimentPlan, SimTable, TableFormat};

#[derive(Debug, Parser)]
#[command(name = "pmfconvex", version, about = "Test convexity of a discrete distribution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a dataset for convexity. Exit code 0 keeps H0, 1 rejects it.
    Test(TestArgs),
    /// Estimate rejection probabilities over a grid of pmfs and sample sizes.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// One nonnegative integer per line.
    Raw,
    /// `value,count` per line.
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliMethod {
    Knot,
    Lfh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Table1,
    Table2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    /// Data file; standard input when omitted or `-`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "raw")]
    pub format: InputFormat,
    #[arg(long, value_enum, default_value = "lfh")]
    pub method: CliMethod,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Monte Carlo draws.
    #[arg(long = "B", default_value_t = 1000)]
    pub draws: usize,
    /// Knot threshold: zero, loglog, quarter or a constant.
    #[arg(long, default_value = "quarter")]
    pub vn: String,
    /// Seed; drawn from system entropy when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    pub output: ReportFormat,
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["preset", "plan"])))]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Experiment plan (json, or toml by extension).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Replications per cell [default: 500, or the plan's value].
    #[arg(long = "N")]
    pub replications: Option<usize>,
    /// Monte Carlo draws per replication [default: 1000, or the plan's value].
    #[arg(long = "B")]
    pub draws: Option<usize>,
    /// Master seed; drawn from system entropy when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutFormat,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn entropy_seed() -> u64 {
    rand::random()
}

pub fn parse_dataset(text: &str, format: InputFormat) -> Result<Sample> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let sample = match format {
        InputFormat::Raw => {
            let values = lines
                .map(|(i, l)| {
                    l.parse::<usize>()
                        .with_context(|| format!("line {i}: `{l}` is not a nonnegative integer"))
                })
                .collect::<Result<Vec<_>>>()?;
            Sample::new(values)?
        }
        InputFormat::Histogram => {
            let pairs = lines
                .map(|(i, l)| {
                    let (v, c) = l
                        .split_once(',')
                        .with_context(|| format!("line {i}: expected `value,count`"))?;
                    let v = v.trim().parse::<usize>().with_context(|| {
                        format!("line {i}: `{v}` is not a nonnegative integer")
                    })?;
                    let c = c
                        .trim()
                        .parse::<usize>()
                        .with_context(|| format!("line {i}: `{c}` is not a count"))?;
                    Ok((v, c))
                })
                .collect::<Result<Vec<_>>>()?;
            Sample::from_histogram(&pairs)?
        }
    };
    Ok(sample)
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => {
            fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
        }
        _ => {
            let mut buf = String::new();
            io::stdin()
                .read_to_string(&mut buf)
                .context("cannot read standard input")?;
            Ok(buf)
        }
    }
}

pub fn test_config(args: &TestArgs) -> Result<CalibrationConfig> {
    let cfg = CalibrationConfig {
        alpha: args.alpha,
        draws: args.draws,
        method: match args.method {
            CliMethod::Knot => Method::Knot,
            CliMethod::Lfh => Method::Lfh,
        },
        vn: args.vn.parse::<VnRule>()?,
        seed: args.seed.unwrap_or_else(entropy_seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the test on already-loaded data.
pub fn run_test(text: &str, args: &TestArgs) -> Result<TestReport> {
    let cfg = test_config(args)?;
    let sample = parse_dataset(text, args.format)?;
    Ok(calibrate(&sample, &cfg)?)
}

pub fn render_report(report: &TestReport, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Text => {
            let positions: Vec<String> = report
                .constrained_positions
                .iter()
                .map(|x| x.to_string())
                .collect();
            let mut out = String::new();
            out.push_str(&format!("method:               {}\n", report.method));
            if let (Some(rule), Some(v)) = (report.vn_rule, report.vn_value) {
                out.push_str(&format!("vn:                   {rule} ({v:.6})\n"));
            }
            out.push_str(&format!("n:                    {}\n", report.n));
            out.push_str(&format!("max observation:      {}\n", report.s_n));
            out.push_str(&format!("statistic:            {:.6}\n", report.statistic));
            out.push_str(&format!(
                "critical value:       {:.6} (alpha {}, B {})\n",
                report.critical_value, report.alpha, report.draws
            ));
            out.push_str(&format!("p-value:              {:.6}\n", report.p_value));
            out.push_str(&format!("constrained positions: {{{}}}\n", positions.join(", ")));
            out.push_str(&format!("seed:                 {}\n", report.seed));
            out.push_str(&format!(
                "decision:             {}\n",
                if report.reject {
                    "reject convexity"
                } else {
                    "do not reject convexity"
                }
            ));
            out
        }
    })
}

/// Runs `test` and returns the exit code with the rendered report.
pub fn cmd_test(args: &TestArgs) -> Result<(i32, String)> {
    let text = read_input(args.input.as_deref())?;
    let report = run_test(&text, args)?;
    let rendered = render_report(&report, args.output)?;
    Ok((i32::from(report.reject), rendered))
}

pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let plan: ExperimentPlan = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("invalid plan {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("invalid plan {}", path.display()))?
    };
    plan.validate()?;
    Ok(plan)
}

pub fn simulation_plan(args: &SimulateArgs) -> Result<ExperimentPlan> {
    let mut plan = match (&args.preset, &args.plan) {
        (Some(preset), None) => {
            let replications = args.replications.unwrap_or(500);
            let draws = args.draws.unwrap_or(1000);
            let seed = args.seed.unwrap_or_else(entropy_seed);
            match preset {
                Preset::Table1 => ExperimentPlan::table1(replications, draws, seed),
                Preset::Table2 => ExperimentPlan::table2(replications, draws, seed),
            }
        }
        (None, Some(path)) => load_plan(path)?,
        _ => bail!("exactly one of --preset and --plan is required"),
    };
    if args.plan.is_some() {
        if let Some(n) = args.replications {
            plan.replications = n;
        }
        if let Some(b) = args.draws {
            plan.draws = b;
        }
        if let Some(s) = args.seed {
            plan.master_seed = s;
        }
    }
    plan.validate()?;
    Ok(plan)
}

pub fn run_simulation(args: &SimulateArgs) -> Result<(SimTable, Vec<u8>)> {
    let plan = simulation_plan(args)?;
    let table = run_plan(&plan)?;
    let format = match args.format {
        OutFormat::Csv => TableFormat::Csv,
        OutFormat::Json => TableFormat::Json,
        OutFormat::Text => TableFormat::Text,
    };
    let bytes = emit_table(&table, format)?;
    Ok((table, bytes))
}

/// Runs `simulate`, writing to `--out` when given. Returns the bytes that
/// go to standard output.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<u8>> {
    let (_, bytes) = run_simulation(args)?;
    match &args.out {
        Some(path) => {
            fs::write(path, &bytes).with_context(|| format!("cannot write {}", path.display()))?;
            Ok(Vec::new())
        }
        None => Ok(bytes),
    }
}

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use convexity::calibration::{calibrate, test_statistic, CalibrationConfig, Method, VnRule};
use convexity::oracle::{cone_project_enumerate, convex_lse_enumerate};
use convexity::pmf::{
    empirical_pmf, knots, mixture_to_pmf, null_mixture, null_triangular, sample_from, Pmf,
    TriangularMixture,
};
use convexity::projection::{
    convex_lse, dispersion_matrix, factor_psd, rank_diagnostic, sample_gaussian, sq_distance,
    ConeProjector, ConeSpec,
};
use convexity::sim::SimTable;
use convexity::stats::{ks_critical, ks_two_sample};
use convexity::RngStream;
use convexity_cli::{run_simulation, OutFormat, Preset, SimulateArgs};

const SEED: u64 = 1;
const REFERENCE_REPLICATIONS: usize = 500;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

fn simulate(preset: Preset) -> (SimTable, Vec<u8>) {
    let args = SimulateArgs {
        preset: Some(preset),
        plan: None,
        replications: Some(500),
        draws: Some(1000),
        seed: Some(SEED),
        format: OutFormat::Csv,
        out: None,
    };
    run_simulation(&args).expect("simulation runs")
}

fn tolerance(estimate: f64, replications: usize, reference: f64) -> f64 {
    3.0 * (estimate * (1.0 - estimate) / replications as f64
        + reference * (1.0 - reference) / REFERENCE_REPLICATIONS as f64)
        .sqrt()
}

/// Compares cells against reference rates; `floor` adds a strict lower bound.
fn check_cells(
    table: &SimTable,
    method: Method,
    cells: &[(&str, &str, usize, f64)],
    floor: Option<(&str, &str, f64)>,
) -> (usize, Vec<String>) {
    let mut failed = 0;
    let mut details = Vec::new();
    for &(pmf, vn, n, reference) in cells {
        let Some(cell) = table.cell(pmf, n, method, vn) else {
            failed += 1;
            details.push(format!("{pmf} n={n} vn={vn}: missing"));
            continue;
        };
        let tol = tolerance(cell.rate, cell.replications, reference);
        let mut ok = (cell.rate - reference).abs() <= tol;
        let mut note = String::new();
        if let Some((fp, fvn, bound)) = floor {
            if fp == pmf && fvn == vn && cell.rate <= bound {
                ok = false;
                note = format!(", not above {bound}");
            }
        }
        if !ok {
            failed += 1;
            details.push(format!(
                "{pmf} n={n} {method}{}: rate {:.3} vs {reference:.3} (tol {tol:.3}){note}",
                if vn.is_empty() { String::new() } else { format!(" vn={vn}") },
                cell.rate
            ));
        }
    }
    (failed, details)
}

fn criterion_1(table2: &SimTable) -> Outcome {
    let mut cells = Vec::new();
    let rows = [
        ("p0_1", [0.048, 0.044, 0.058]),
        ("p0_2", [0.014, 0.032, 0.020]),
        ("p1_1", [1.0, 1.0, 1.0]),
        ("p1_2", [0.042, 0.060, 0.678]),
    ];
    for (pmf, refs) in rows {
        for (n, r) in [500, 5000, 50_000].into_iter().zip(refs) {
            cells.push((pmf, "", n, r));
        }
    }
    let (failed, details) = check_cells(table2, Method::Lfh, &cells, None);
    Outcome {
        pass: failed == 0,
        summary: format!("least-favorable test rates, {}/{} cells within 3 SE", cells.len() - failed, cells.len()),
        details,
    }
}

fn criterion_2(table1: &SimTable) -> Outcome {
    let cells = [
        ("p0_1", "quarter", 500, 0.054),
        ("p0_1", "quarter", 5000, 0.062),
        ("p0_1", "quarter", 50_000, 0.050),
        ("p0_1", "zero", 500, 0.226),
        ("p0_1", "zero", 5000, 0.286),
        ("p0_1", "zero", 50_000, 0.256),
        ("p1_2", "zero", 50_000, 0.932),
    ];
    let (failed, details) = check_cells(table1, Method::Knot, &cells, Some(("p0_1", "zero", 0.15)));
    Outcome {
        pass: failed == 0,
        summary: format!("knot test anchor rates, {}/{} cells within 3 SE", cells.len() - failed, cells.len()),
        details,
    }
}

fn random_pmf(rng: &mut RngStream, max_len: usize) -> Pmf {
    let len = rng.random_range(2..=max_len);
    let mut mass: Vec<f64> = (0..len)
        .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random::<f64>() })
        .collect();
    mass[len - 1] += 0.05;
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    Pmf::new(mass).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_3() -> Outcome {
    let mut rng = RngStream::new(SEED).child(3);
    let mut cone_worst = 0.0f64;
    let mut cone_bad = 0;
    for _ in 0..1000 {
        let dim = rng.random_range(3..=8);
        let constrained: Vec<usize> = (1..=dim - 2).filter(|_| rng.random_bool(0.6)).collect();
        let cone = ConeSpec::new(dim, constrained).unwrap();
        let g: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let fast = ConeProjector::new(&cone).project(&g).unwrap();
        let err = max_abs_diff(&fast, &cone_project_enumerate(&g, &cone));
        cone_worst = cone_worst.max(err);
        cone_bad += usize::from(err > 1e-8);
    }
    let mut lse_worst = 0.0f64;
    let mut lse_bad = 0;
    for i in 0..1000 {
        let p = if i % 2 == 0 {
            random_pmf(&mut rng, 8)
        } else {
            let truth = random_pmf(&mut rng, 8);
            let n = rng.random_range(5..500);
            empirical_pmf(&sample_from(&truth, n, &mut rng).unwrap())
        };
        let slow = convex_lse_enumerate(&p);
        let fast = convex_lse(&p).fit.padded(slow.len());
        let err = max_abs_diff(&fast, &slow);
        lse_worst = lse_worst.max(err);
        lse_bad += usize::from(err > 1e-6);
    }
    Outcome {
        pass: cone_bad == 0 && lse_bad == 0,
        summary: format!(
            "oracle agreement, cone max err {cone_worst:.1e} ({cone_bad}/1000 over 1e-8), \
             convex fit max err {lse_worst:.1e} ({lse_bad}/1000 over 1e-6)"
        ),
        details: Vec::new(),
    }
}

fn criterion_4(tables: &[&SimTable]) -> Outcome {
    let mut violations = 0;
    let mut errors = 0;
    let mut worst = 0.0f64;
    for t in tables {
        violations += t.total_kkt_violations();
        for d in &t.metadata.as_ref().unwrap().diagnostics {
            errors += usize::from(d.error.is_some());
            worst = worst.max(d.max_kkt_residual);
        }
    }
    Outcome {
        pass: violations == 0 && errors == 0,
        summary: format!(
            "optimality certificates over both tables, {violations} violations, {errors} failed cells, \
             worst residual {worst:.1e}"
        ),
        details: Vec::new(),
    }
}

fn random_positive_convex(rng: &mut RngStream, s: usize) -> Pmf {
    // A positive weight on T_{S+1} makes the pmf positive on {0..S}.
    let mut w: Vec<f64> = (0..=s)
        .map(|_| if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 })
        .collect();
    w[s] += 0.1;
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    mixture_to_pmf(&TriangularMixture::new(w).unwrap())
}

fn criterion_5() -> Outcome {
    let mut rng = RngStream::new(SEED).child(5);
    let mut cases = vec![null_triangular(), null_mixture()];
    for _ in 0..100 {
        let s = rng.random_range(1..=10);
        cases.push(random_positive_convex(&mut rng, s));
    }
    let mut details = Vec::new();
    for p in &cases {
        let rank = rank_diagnostic(p).unwrap();
        if rank != p.support_end() {
            details.push(format!("{:?}: rank {rank}, expected {}", p.mass(), p.support_end()));
        }
    }
    Outcome {
        pass: details.is_empty(),
        summary: format!("rank of the limiting covariance, {}/{} cases equal S", cases.len() - details.len(), cases.len()),
        details,
    }
}

fn criterion_6() -> Outcome {
    let p0 = null_triangular();
    let n = 50_000;
    let reps = 2000;
    let root = RngStream::new(SEED).child(6);
    let statistics: Vec<f64> = (0..reps)
        .map(|r| {
            let sample = sample_from(&p0, n, &mut root.child(0).child(r)).unwrap();
            test_statistic(&sample).0
        })
        .collect();

    let s = p0.support_end();
    let dim = s + 2;
    let knot_set = knots(&p0);
    let cone = ConeSpec::new(dim, (1..=s).filter(|x| !knot_set.contains(x))).unwrap();
    let factor = factor_psd(&dispersion_matrix(&p0, dim)).unwrap();
    let projector = ConeProjector::new(&cone);
    let mut rng = root.child(1);
    let limit: Vec<f64> = (0..reps)
        .map(|_| {
            let g = sample_gaussian(&factor, &mut rng);
            sq_distance(&g, &projector.project(&g).unwrap())
        })
        .collect();

    let ks = ks_two_sample(&statistics, &limit);
    let critical = ks_critical(0.01, reps as usize, reps as usize);
    Outcome {
        pass: ks < critical,
        summary: format!(
            "statistic vs limiting law for T6 at n=50000, KS {ks:.4} vs 1% critical {critical:.4}"
        ),
        details: Vec::new(),
    }
}

fn criterion_7() -> Outcome {
    let mut rng = RngStream::new(SEED).child(7);
    let mut details = Vec::new();
    for i in 0..200 {
        let truth = random_pmf(&mut rng, 7);
        let n = rng.random_range(20..5000);
        let sample = sample_from(&truth, n, &mut rng).unwrap();
        if sample.max() == 0 {
            continue;
        }
        let seed = rng.random();
        let cfg = |method, vn| CalibrationConfig { alpha: 0.05, draws: 1000, method, vn, seed };
        let lfh = calibrate(&sample, &cfg(Method::Lfh, VnRule::Quarter)).unwrap();
        for vn in [VnRule::Zero, VnRule::Quarter] {
            let knot = calibrate(&sample, &cfg(Method::Knot, vn)).unwrap();
            if lfh.critical_value < knot.critical_value {
                details.push(format!(
                    "sample {i} vn={vn}: lfh {} < knot {}",
                    lfh.critical_value, knot.critical_value
                ));
            }
        }
        let huge = calibrate(&sample, &cfg(Method::Knot, VnRule::Constant(1e6))).unwrap();
        let same = huge.statistic == lfh.statistic
            && huge.critical_value == lfh.critical_value
            && huge.p_value == lfh.p_value
            && huge.reject == lfh.reject
            && huge.mc_statistics == lfh.mc_statistics
            && huge.constrained_positions == lfh.constrained_positions;
        if !same {
            details.push(format!("sample {i}: threshold 1e6 differs from lfh"));
        }
    }
    Outcome {
        pass: details.is_empty(),
        summary: format!("dominance and reduction on 200 samples, {} violations", details.len()),
        details,
    }
}

fn criterion_8(first: &[u8], second: &[u8]) -> Outcome {
    Outcome {
        pass: first == second && !first.is_empty(),
        summary: format!(
            "two seeded table2 runs, {} and {} bytes, {}",
            first.len(),
            second.len(),
            if first == second { "identical" } else { "different" }
        ),
        details: Vec::new(),
    }
}

fn report(id: usize, start: Instant, o: &Outcome) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("{verdict} [{id}] {} ({:.1}s)", o.summary, start.elapsed().as_secs_f64());
    for d in &o.details {
        println!("       {d}");
    }
}

fn main() -> ExitCode {
    let mut results = Vec::new();

    let t = Instant::now();
    let (table2, csv_a) = simulate(Preset::Table2);
    let (_, csv_b) = simulate(Preset::Table2);
    let table2_time = t.elapsed();
    let t = Instant::now();
    let (table1, _) = simulate(Preset::Table1);
    let table1_time = t.elapsed();
    println!(
        "simulations: table2 twice {:.1}s, table1 {:.1}s (N=500, B=1000, seed {SEED})",
        table2_time.as_secs_f64(),
        table1_time.as_secs_f64()
    );

    let checks: Vec<(usize, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(|| criterion_1(&table2))),
        (2, Box::new(|| criterion_2(&table1))),
        (3, Box::new(criterion_3)),
        (4, Box::new(|| criterion_4(&[&table1, &table2]))),
        (5, Box::new(criterion_5)),
        (6, Box::new(criterion_6)),
        (7, Box::new(criterion_7)),
        (8, Box::new(|| criterion_8(&csv_a, &csv_b))),
    ];
    for (id, check) in checks {
        let start = Instant::now();
        let outcome = check();
        report(id, start, &outcome);
        results.push(outcome.pass);
    }
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

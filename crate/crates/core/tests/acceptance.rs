//! Acceptance suite: one PASS/FAIL line per criterion, every tolerance pinned
//! below. Exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use blockspin_core::checks::{
    algebra_checks, lemma_suite, remainder_checks, SuiteCheck, SuiteConfig, IDENTITY_TOLERANCE,
};
use blockspin_core::fields::{sample_configs, sup_distance, CoarseConfig, VectorConfig};
use blockspin_core::green::{box_neumann_spectrum, decay_fit, window_operator, GreenPack, Window};
use blockspin_core::images::{coarse_image_check, fine_image_check, CoarseFreeInverse, TruncatedFreeGreen};
use blockspin_core::linalg::Csr;
use blockspin_core::oracle::{oracle_minimize, GradientMethod, OracleConfig};
use blockspin_core::randomwalk::{rw_inverse, BoxCover, Expansion};
use blockspin_core::solver::{
    estimate_contraction, sample_admissible, solve_critical, solve_from, verify_critical, SolveReport, SolverConfig,
    VerifyTolerances,
};
use blockspin_core::{LatticeGeometry, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SPECTRAL_TOLERANCE: f64 = 1e-10;
const SOLVE_SEEDS: u64 = 20;
const SOLVE_RESIDUAL: f64 = 1e-12;
const EVENTUAL_RATIO: f64 = 0.9;
const SOLVE_SECONDS: f64 = 10.0;
const ORACLE_SEEDS: u64 = 10;
const ORACLE_AGREEMENT: f64 = 1e-6;
const ORACLE_SECONDS: f64 = 120.0;
const UNIQUENESS_STARTS: u64 = 5;
const UNIQUENESS_TOLERANCE: f64 = 1e-10;
const REMAINDER_ENSEMBLES: usize = 1000;
const DECAY_AGREEMENT: f64 = 0.25;
const IMAGE_TOLERANCE: f64 = 1e-6;
/// Allowed growth on the last doubling, where the fine deviation already
/// sits at roundoff.
const IMAGE_ROUNDOFF: f64 = 1e-14;
const RW_RADIUS: i64 = 24;
const RW_HALF_SIZE: i64 = 6;
const RW_ORDER: usize = 40;
const RW_TOLERANCE: f64 = 1e-8;
const RW_SECONDS: f64 = 30.0;
const CONTRACTION_PAIRS: usize = 50;
const ITERATION_RATIO: f64 = 1.5;
const ALGEBRA_DRAWS: usize = 100;
const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn spectral_gap() -> Result<Outcome> {
    let ev = box_neumann_spectrum(3);
    let gap = ev.iter().copied().find(|&e| e > 1e-8).unwrap_or(0.0);
    outcome(
        (gap - 1.0).abs() <= SPECTRAL_TOLERANCE,
        format!("smallest nonzero eigenvalue {gap:.15} (target 1, tol {SPECTRAL_TOLERANCE:e})"),
    )
}

/// From the second iteration on, every residual above roundoff shrinks by
/// at least `EVENTUAL_RATIO`.
fn geometric(report: &SolveReport) -> bool {
    report
        .ratios
        .iter()
        .zip(report.residuals.iter().skip(1))
        .skip(1)
        .all(|(&q, &r)| q < EVENTUAL_RATIO || r < 1e-14)
}

struct Solved {
    v: CoarseConfig,
    a: VectorConfig,
    report: SolveReport,
    seconds: f64,
}

fn solve_seeds(pack: &GreenPack, cfg: &SolverConfig, seeds: u64) -> Result<Vec<Solved>> {
    (0..seeds)
        .map(|seed| {
            let t = Instant::now();
            let (v, _) = sample_configs(&pack.geom, cfg.eps1(), cfg.eps, SEED + seed)?;
            let (a, report) = solve_critical(pack, &v, cfg)?;
            Ok(Solved {
                v,
                a,
                report,
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

fn convergence(solved: &[Solved]) -> Result<Outcome> {
    let ok = |s: &Solved| {
        s.report.converged
            && s.report.final_residual <= SOLVE_RESIDUAL
            && geometric(&s.report)
            && s.seconds < SOLVE_SECONDS
    };
    let failures = solved.iter().filter(|s| !ok(s)).count();
    let worst = solved.iter().map(|s| s.report.final_residual).fold(0.0, f64::max);
    let worst_ratio = solved
        .iter()
        .flat_map(|s| s.report.ratios.iter().skip(1))
        .fold(0.0f64, |m, &q| m.max(q));
    let iters = solved.iter().map(|s| s.report.iterations).max().unwrap_or(0);
    let slowest = solved.iter().map(|s| s.seconds).fold(0.0, f64::max);
    outcome(
        failures == 0 && solved.len() == SOLVE_SEEDS as usize,
        format!(
            "{} seeds, {failures} failures; worst residual {worst:.2e} (tol {SOLVE_RESIDUAL:e}), \
             worst later ratio {worst_ratio:.1e} (< {EVENTUAL_RATIO}), max {iters} iterations, slowest {slowest:.2} s",
            solved.len()
        ),
    )
}

fn verification(pack: &GreenPack, cfg: &SolverConfig, solved: &[Solved]) -> Result<Outcome> {
    let tol = VerifyTolerances::default();
    let mut failures = 0;
    let (mut c, mut s, mut l, mut f): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for sol in solved.iter().filter(|s| s.report.converged) {
        let r = verify_critical(&pack.geom, &sol.a, &sol.v, cfg.eps, &tol)?;
        failures += usize::from(!r.pass);
        c = c.max(r.constraint.value);
        s = s.max(r.conservation.value);
        l = l.max(r.lie_derivative.value);
        f = f.max(r.small_field.value);
    }
    outcome(
        failures == 0,
        format!(
            "{failures} failures; constraint {c:.1e} (tol {:e}), conservation {s:.1e} (tol {:e}), \
             Lie derivative {l:.1e} (tol {:e}), small field {f:.4} (≤ ε = {})",
            tol.constraint, tol.conservation, tol.lie, cfg.eps
        ),
    )
}

fn oracle_agreement(pack: &GreenPack, cfg: &SolverConfig, solved: &[Solved]) -> Result<Outcome> {
    let ocfg = OracleConfig {
        method: GradientMethod::FiniteDifference,
        ..OracleConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut failures = 0;
    for sol in solved.iter().take(ORACLE_SEEDS as usize) {
        let t = Instant::now();
        let (b, rep) = oracle_minimize(&pack.geom, &sol.v, cfg.eps, &ocfg)?;
        let secs = t.elapsed().as_secs_f64();
        let d = sup_distance(&sol.a.values, &b.values);
        worst = worst.max(d);
        slowest = slowest.max(secs);
        failures += usize::from(!rep.converged || d > ORACLE_AGREEMENT || secs >= ORACLE_SECONDS);
    }
    outcome(
        failures == 0,
        format!(
            "{ORACLE_SEEDS} seeds, finite-difference gradients; max distance {worst:.2e} (tol {ORACLE_AGREEMENT:e}), \
             slowest {slowest:.1} s (< {ORACLE_SECONDS} s)"
        ),
    )
}

fn uniqueness(pack: &GreenPack, cfg: &SolverConfig, reference: &Solved) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut starts = Vec::new();
    for _ in 0..UNIQUENESS_STARTS {
        let start = sample_admissible(&pack.geom, &reference.v, cfg.eps, &mut rng)?;
        let (a, rep) = solve_from(pack, &reference.v, cfg, start.clone())?;
        let d = sup_distance(&a.values, &reference.a.values);
        worst = worst.max(d);
        failures += usize::from(!rep.converged || d > UNIQUENESS_TOLERANCE);
        starts.push(start);
    }
    let spread = starts
        .iter()
        .flat_map(|s| starts.iter().map(move |t| sup_distance(&s.values, &t.values)))
        .fold(0.0, f64::max);
    outcome(
        failures == 0 && spread > 0.0,
        format!(
            "{UNIQUENESS_STARTS} admissible starts (spread {spread:.2e}); max distance to the zero-start \
             fixed point {worst:.2e} (tol {UNIQUENESS_TOLERANCE:e})"
        ),
    )
}

fn describe(c: &SuiteCheck) -> String {
    format!("{} {}/{} ({:.3} of {:.3})", c.name, c.violations, c.samples, c.statistic, c.limit)
}

fn remainder(geom: &LatticeGeometry) -> Result<Outcome> {
    let r = remainder_checks(geom, REMAINDER_ENSEMBLES, SEED)?;
    outcome(
        r.bound.pass && r.lipschitz.pass && r.bound.samples == REMAINDER_ENSEMBLES,
        format!("violations/samples (worst ratio): {}; {}", describe(&r.bound), describe(&r.lipschitz)),
    )
}

fn decay(packs: &[GreenPack; 2]) -> Result<Outcome> {
    let mut rates = Vec::new();
    for pack in packs {
        rates.push((decay_fit(&pack.green)?.rate, decay_fit(&pack.coarse.inverse)?.rate));
    }
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
    let (g, c) = (rel(rates[0].0, rates[1].0), rel(rates[0].1, rates[1].1));
    let positive = rates.iter().all(|&(a, b)| a > 0.0 && b > 0.0);
    outcome(
        positive && g <= DECAY_AGREEMENT && c <= DECAY_AGREEMENT,
        format!(
            "G rate {:.3} / {:.3} (rel {g:.3}), (QGQ*)⁻¹ rate {:.3} / {:.3} (rel {c:.3}), tol {DECAY_AGREEMENT}",
            rates[0].0, rates[1].0, rates[0].1, rates[1].1
        ),
    )
}

fn images(pack: &GreenPack) -> Result<Outcome> {
    let geom = &pack.geom;
    let n = geom.n() as i64;
    let l = geom.l() as i64;
    let radii = [n, 2 * n, 4 * n, 8 * n];
    let free = TruncatedFreeGreen::new(8 * n + n, geom.l())?;
    let cfi = CoarseFreeInverse::new(&free, 12, (8 * n + n) / l)?;
    let mut fine = Vec::new();
    let mut coarse = Vec::new();
    for &r in &radii {
        fine.push(fine_image_check(geom, &free, &pack.green, r, None)?.max_deviation);
        coarse.push(coarse_image_check(geom, &cfi, &pack.coarse.inverse, r, None)?.max_deviation);
    }
    let shrinks = |d: &[f64]| d[1] < d[0] && d[2] < d[1] && d[3] <= d[2] + IMAGE_ROUNDOFF;
    let fmt = |d: &[f64]| d.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(" → ");
    outcome(
        fine[3] <= IMAGE_TOLERANCE && coarse[3] <= IMAGE_TOLERANCE && shrinks(&fine) && shrinks(&coarse),
        format!(
            "radius n..8n exhaustive; fine {}; coarse {} (tol {IMAGE_TOLERANCE:e} at 8n)",
            fmt(&fine),
            fmt(&coarse)
        ),
    )
}

fn random_walk() -> Result<Outcome> {
    let t = Instant::now();
    let w = Window {
        lo: [-RW_RADIUS, -RW_RADIUS],
        side: [2 * RW_RADIUS as usize + 3, 2 * RW_RADIUS as usize + 3],
    };
    let a = window_operator(&w, 3)?;
    let exp = rw_inverse(&a, w, 2, RW_HALF_SIZE, RW_ORDER, &[[0, 0], [-RW_RADIUS, -RW_RADIUS], [13, -7]])?;
    let id = Csr::identity(w.len());
    let id_exp = Expansion::new(&id, BoxCover::new(RW_HALF_SIZE, 2, w)?)?;
    let v: Vec<f64> = (0..w.len()).map(|i| ((i * 37) % 23) as f64 - 11.0).collect();
    let id_zero = id_exp.apply_r(&v).iter().all(|&x| x == 0.0);
    let id_rw = rw_inverse(&id, w, 2, RW_HALF_SIZE, 0, &[[0, 0]])?;
    let identity_ok = id_zero && id_rw.r_norm == 0.0 && id_rw.max_reference_error == 0.0;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        exp.max_reference_error <= RW_TOLERANCE && exp.r_norm < 1.0 && identity_ok && secs < RW_SECONDS,
        format!(
            "window radius {RW_RADIUS}, half-size {RW_HALF_SIZE}, order {RW_ORDER}: error {:.1e} (tol {RW_TOLERANCE:e}), \
             ‖R‖ ≈ {:.3}, identity R = 0: {identity_ok}, {secs:.1} s (< {RW_SECONDS} s)",
            exp.max_reference_error, exp.r_norm
        ),
    )
}

fn contraction(packs: &[GreenPack; 2], cfg: &SolverConfig, solved: &[Solved]) -> Result<Outcome> {
    let cfg = SolverConfig {
        contraction_samples: CONTRACTION_PAIRS,
        ..cfg.clone()
    };
    let mut qs = Vec::new();
    for pack in packs {
        let (v, _) = sample_configs(&pack.geom, cfg.eps1(), cfg.eps, SEED)?;
        qs.push(estimate_contraction(pack, &v, &cfg, SEED)?.q);
    }
    let small = solved.first().map_or(0, |s| s.report.iterations) as f64;
    let large_runs = solve_seeds(&packs[1], &cfg, 1)?;
    let large = large_runs[0].report.iterations as f64;
    let ratio = small.max(large) / small.min(large).max(1.0);
    outcome(
        qs.iter().all(|&q| q < 1.0) && large_runs[0].report.converged && ratio <= ITERATION_RATIO,
        format!(
            "q = {:.3} at m=1, {:.3} at m=2 over {CONTRACTION_PAIRS} pairs; iterations {small} vs {large} \
             (ratio {ratio:.2} ≤ {ITERATION_RATIO})",
            qs[0], qs[1]
        ),
    )
}

fn lemmas(pack: &GreenPack) -> Result<Outcome> {
    let rep = lemma_suite(pack, &SuiteConfig { seed: SEED, ..SuiteConfig::default() })?;
    let failed: Vec<String> = rep.checks.iter().filter(|c| !c.pass).map(describe).collect();
    outcome(
        rep.pass,
        format!(
            "{} checks, c_1/2 = {:.4}; failing: [{}]",
            rep.checks.len(),
            rep.sqrt_constant,
            failed.join("; ")
        ),
    )
}

fn algebra(packs: &[GreenPack; 2]) -> Result<Outcome> {
    let mut checks = Vec::new();
    for pack in packs {
        checks.extend(algebra_checks(&pack.geom, ALGEBRA_DRAWS / 5, SEED)?);
    }
    checks.push(remainder_checks(&packs[0].geom, ALGEBRA_DRAWS, SEED + 1)?.identity);
    let worst = checks.iter().map(|c| c.statistic).fold(0.0, f64::max);
    outcome(
        checks.iter().all(|c| c.pass),
        format!("{} identities on (3,1) and (3,2); worst residual {worst:.1e} (tol {IDENTITY_TOLERANCE:e})", checks.len()),
    )
}

fn report(index: usize, title: &str, t: Instant, result: Result<Outcome>) -> bool {
    let secs = t.elapsed().as_secs_f64();
    match result {
        Ok(o) => {
            println!("{} criterion {index:2} {title}: {} [{secs:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            o.pass
        }
        Err(e) => {
            println!("FAIL criterion {index:2} {title}: error: {e} [{secs:.1} s]");
            false
        }
    }
}

fn main() -> ExitCode {
    let cfg = SolverConfig::default();
    let packs = match (|| -> Result<[GreenPack; 2]> {
        Ok([
            GreenPack::new(&LatticeGeometry::new(3, 1)?)?,
            GreenPack::new(&LatticeGeometry::new(3, 2)?)?,
        ])
    })() {
        Ok(p) => p,
        Err(e) => {
            println!("FAIL setup: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut all = true;

    let t = Instant::now();
    all &= report(1, "spectral gap of one box", t, spectral_gap());

    let t = Instant::now();
    let solved = solve_seeds(&packs[0], &cfg, SOLVE_SEEDS);
    let solved = match solved {
        Ok(s) => s,
        Err(e) => {
            report(2, "fixed-point convergence", t, Err(e));
            println!("FAIL criteria 3-5, 10: no solutions to check");
            return ExitCode::FAILURE;
        }
    };
    all &= report(2, "fixed-point convergence", t, convergence(&solved));
    let t = Instant::now();
    all &= report(3, "criticality verification", t, verification(&packs[0], &cfg, &solved));
    let t = Instant::now();
    all &= report(4, "oracle agreement", t, oracle_agreement(&packs[0], &cfg, &solved));
    let t = Instant::now();
    all &= report(5, "uniqueness from distinct starts", t, uniqueness(&packs[0], &cfg, &solved[0]));
    let t = Instant::now();
    all &= report(6, "remainder bounds", t, remainder(&packs[0].geom));
    let t = Instant::now();
    all &= report(7, "kernel decay", t, decay(&packs));
    let t = Instant::now();
    all &= report(8, "method of images", t, images(&packs[0]));
    let t = Instant::now();
    all &= report(9, "random-walk expansion", t, random_walk());
    let t = Instant::now();
    all &= report(10, "contraction and n-uniformity", t, contraction(&packs, &cfg, &solved));
    let t = Instant::now();
    all &= report(11, "lemma suites", t, lemmas(&packs[0]));
    let t = Instant::now();
    all &= report(12, "adjointness and algebra", t, algebra(&packs));

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! One function per subcommand. Each writes its artifacts and returns the
//! report body together with the names of failed checks.

use anyhow::Result;
use blockspin_core::checks::lemma_suite;
use blockspin_core::fields::{sample_configs, sup_distance, CoarseConfig, VectorConfig};
use blockspin_core::green::{decay_fit, linf_operator_norm, window_operator, DecayFit, GreenPack, Window};
use blockspin_core::images::{coarse_image_check, fine_image_check, CoarseFreeInverse, TruncatedFreeGreen};
use blockspin_core::linalg::Csr;
use blockspin_core::oracle::oracle_minimize;
use blockspin_core::randomwalk::{rw_inverse, srl_check, BoxCover, Expansion, SrlReport};
use blockspin_core::solver::{estimate_contraction, solve_critical, verify_critical, SolveReport};
use blockspin_core::{LatticeGeometry, Level, Site};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::output::Artifacts;

pub struct Outcome {
    pub result: Value,
    pub failures: Vec<String>,
}

fn fail_unless(failures: &mut Vec<String>, ok: bool, name: &str) {
    if !ok {
        failures.push(name.to_string());
    }
}

#[derive(Serialize)]
struct SiteVector {
    x0: i64,
    x1: i64,
    a0: f64,
    a1: f64,
    a2: f64,
}

fn site_rows<'a>(geom: &'a LatticeGeometry, a: &'a VectorConfig) -> impl Iterator<Item = SiteVector> + 'a {
    a.values.iter().enumerate().map(|(i, v)| {
        let x = geom.site(i);
        SiteVector {
            x0: x[0],
            x1: x[1],
            a0: v[0],
            a1: v[1],
            a2: v[2],
        }
    })
}

#[derive(Serialize)]
struct HistoryRow {
    iteration: usize,
    residual: f64,
    ratio: Option<f64>,
}

fn solve_history(report: &SolveReport) -> impl Iterator<Item = HistoryRow> + '_ {
    report.residuals.iter().enumerate().map(|(k, &r)| HistoryRow {
        iteration: k + 1,
        residual: r,
        ratio: k.checked_sub(1).map(|p| report.ratios[p]),
    })
}

fn solve_point(pack: &GreenPack, cfg: &RunConfig) -> Result<(CoarseConfig, VectorConfig, SolveReport)> {
    let (v, _) = sample_configs(&pack.geom, cfg.solver.eps1(), cfg.solver.eps, cfg.seed)?;
    let (a, report) = solve_critical(pack, &v, &cfg.solver)?;
    Ok((v, a, report))
}

pub fn solve(cfg: &RunConfig, geom: &LatticeGeometry, out: &mut Artifacts) -> Result<Outcome> {
    let pack = GreenPack::new(geom)?;
    let (v, a, report) = solve_point(&pack, cfg)?;
    let verification = verify_critical(geom, &a, &v, cfg.solver.eps, &cfg.verify)?;
    let contraction = if cfg.solver.contraction_samples > 0 {
        Some(estimate_contraction(&pack, &v, &cfg.solver, cfg.seed)?)
    } else {
        None
    };
    out.csv("history.csv", solve_history(&report))?;
    out.csv("solution.csv", site_rows(geom, &a))?;
    let mut failures = Vec::new();
    fail_unless(&mut failures, report.converged, "convergence");
    for c in [
        &verification.constraint,
        &verification.conservation,
        &verification.lie_derivative,
        &verification.small_field,
    ] {
        fail_unless(&mut failures, c.pass, &c.name);
    }
    if let Some(c) = &contraction {
        fail_unless(&mut failures, c.q < 1.0, "contraction");
    }
    Ok(Outcome {
        result: serde_json::json!({
            "solve": {
                "iterations": report.iterations,
                "residuals": report.residuals,
                "ratios": report.ratios,
                "final_residual": report.final_residual,
                "converged": report.converged,
            },
            "verification": verification,
            "contraction": contraction.map(|c| c.q),
        }),
        failures,
    })
}

pub fn oracle_compare(cfg: &RunConfig, geom: &LatticeGeometry, out: &mut Artifacts) -> Result<Outcome> {
    let pack = GreenPack::new(geom)?;
    let (v, a, report) = solve_point(&pack, cfg)?;
    let (b, oracle) = oracle_minimize(geom, &v, cfg.solver.eps, &cfg.oracle)?;
    let distance = sup_distance(&a.values, &b.values);
    out.csv("oracle_history.csv", oracle.history.iter().copied())?;
    out.csv("oracle_solution.csv", site_rows(geom, &b))?;
    let mut failures = Vec::new();
    fail_unless(&mut failures, report.converged, "solver convergence");
    fail_unless(&mut failures, oracle.converged, "oracle convergence");
    fail_unless(&mut failures, distance <= cfg.oracle_agreement, "agreement");
    Ok(Outcome {
        result: serde_json::json!({
            "solver_iterations": report.iterations,
            "oracle_steps": oracle.steps,
            "oracle_final_action": oracle.final_action,
            "oracle_final_grad_norm": oracle.final_grad_norm,
            "distance": distance,
            "tolerance": cfg.oracle_agreement,
        }),
        failures,
    })
}

#[derive(Serialize)]
struct KernelSummary {
    rows: usize,
    cols: usize,
    linf_norm: f64,
    decay: Option<DecayFit>,
}

fn summarize(k: &blockspin_core::green::OperatorKernel) -> KernelSummary {
    KernelSummary {
        rows: k.matrix.nrows(),
        cols: k.matrix.ncols(),
        linf_norm: linf_operator_norm(k),
        decay: decay_fit(k).ok(),
    }
}

pub fn green_report(cfg: &RunConfig, geom: &LatticeGeometry, out: &mut Artifacts) -> Result<Outcome> {
    let pack = GreenPack::new(geom)?;
    let fine = summarize(&pack.green);
    let coarse = summarize(&pack.coarse.inverse);
    out.kernel_csv("green.csv", &pack.green)?;
    out.kernel_csv("coarse_inverse.csv", &pack.coarse.inverse)?;
    if cfg.green.binary {
        out.kernel_binary("green", &pack.green)?;
        out.kernel_binary("coarse_inverse", &pack.coarse.inverse)?;
    }
    let mut failures = Vec::new();
    fail_unless(&mut failures, fine.decay.is_some_and(|d| d.rate > 0.0), "green decay");
    fail_unless(&mut failures, coarse.decay.is_some_and(|d| d.rate > 0.0), "coarse inverse decay");
    fail_unless(&mut failures, pack.coarse.min_eigenvalue > 0.0, "coarse positivity");
    Ok(Outcome {
        result: serde_json::json!({
            "green": fine,
            "coarse_inverse": coarse,
            "coarse_min_eigenvalue": pack.coarse.min_eigenvalue,
        }),
        failures,
    })
}

#[derive(Serialize)]
struct ProbeRow {
    x0: i64,
    x1: i64,
    value: f64,
}

pub fn rw_report(cfg: &RunConfig, geom: &LatticeGeometry, out: &mut Artifacts) -> Result<Outcome> {
    let opts = &cfg.random_walk;
    let l = geom.l() as i64;
    let lo = -((opts.radius + l - 1) / l) * l;
    let side = (l - 2 * lo) as usize;
    let w = Window {
        lo: [lo, lo],
        side: [side, side],
    };
    let a = window_operator(&w, geom.l())?;
    let source: Site = [0, 0];
    let exp = rw_inverse(&a, w, 2, opts.half_size, opts.order, &[source])?;
    let id = Csr::identity(w.len());
    let id_exp = Expansion::new(&id, BoxCover::new(opts.half_size, 2, w)?)?;
    let probe: Vec<f64> = (0..w.len()).map(|i| (i % 7) as f64 - 3.0).collect();
    let identity_zero = id_exp.apply_r(&probe).iter().all(|&x| x == 0.0);
    let srl: Option<SrlReport> = match exp.decay {
        Some(d) => Some(srl_check(&|r| (-d.rate * r).exp(), 2, opts.delta, opts.epsilon, opts.srl_range)?),
        None => None,
    };
    let column = &exp.probes[0].column;
    out.csv(
        "probe.csv",
        (0..w.len()).map(|i| {
            let x = w.site(i);
            ProbeRow {
                x0: x[0],
                x1: x[1],
                value: column[i],
            }
        }),
    )?;
    #[derive(Serialize)]
    struct Residual {
        order: usize,
        residual: f64,
    }
    out.csv(
        "residuals.csv",
        exp.residuals.iter().enumerate().map(|(k, &r)| Residual { order: k, residual: r }),
    )?;
    let mut failures = Vec::new();
    fail_unless(&mut failures, exp.r_norm < 1.0, "remainder norm");
    fail_unless(&mut failures, exp.max_reference_error <= opts.tolerance, "reference inverse");
    fail_unless(&mut failures, identity_zero, "identity remainder");
    fail_unless(&mut failures, srl.as_ref().is_some_and(|s| s.pass), "localization");
    Ok(Outcome {
        result: serde_json::json!({
            "window": { "lo": w.lo, "side": w.side },
            "half_size": exp.half_size,
            "order": exp.order,
            "num_cubes": exp.num_cubes,
            "mass_sq": exp.mass_sq,
            "r_norm": exp.r_norm,
            "r_certificate": exp.r_certificate,
            "max_diagonal_block": exp.max_diagonal_block,
            "max_offdiagonal_block": exp.max_offdiagonal_block,
            "residual_rate": exp.residual_rate,
            "reference_error": exp.max_reference_error,
            "tolerance": opts.tolerance,
            "decay": exp.decay,
            "identity_remainder_zero": identity_zero,
            "localization": srl,
        }),
        failures,
    })
}

pub fn images_report(cfg: &RunConfig, geom: &LatticeGeometry, out: &mut Artifacts) -> Result<Outcome> {
    let opts = &cfg.images;
    let pack = GreenPack::new(geom)?;
    let n = geom.n() as i64;
    let l = geom.l() as i64;
    let largest = opts.radius_multiples.iter().copied().max().unwrap_or(1) * n;
    let free = TruncatedFreeGreen::new(largest + n, geom.l())?;
    let cfi = CoarseFreeInverse::new(&free, opts.stencil_radius, (largest + n) / l)?;
    let samples = opts.samples.map(|s| (s, cfg.seed));
    let mut levels = Vec::new();
    for &k in &opts.radius_multiples {
        levels.push(fine_image_check(geom, &free, &pack.green, k * n, samples)?);
        levels.push(coarse_image_check(geom, &cfi, &pack.coarse.inverse, k * n, samples)?);
    }
    #[derive(Serialize)]
    struct Row {
        level: Level,
        image_radius: i64,
        pairs: usize,
        max_deviation: f64,
    }
    out.csv(
        "images.csv",
        levels.iter().map(|d| Row {
            level: d.level,
            image_radius: d.image_radius,
            pairs: d.pairs,
            max_deviation: d.max_deviation,
        }),
    )?;
    let mut failures = Vec::new();
    for level in [Level::Fine, Level::Coarse] {
        let devs: Vec<f64> = levels.iter().filter(|d| d.level == level).map(|d| d.max_deviation).collect();
        let name = if level == Level::Fine { "fine" } else { "coarse" };
        fail_unless(
            &mut failures,
            devs.last().is_some_and(|&d| d <= opts.tolerance),
            &format!("{name} images at the largest radius"),
        );
        let shrinking = devs.windows(2).all(|p| p[1] <= p[0] + opts.roundoff);
        fail_unless(&mut failures, shrinking, &format!("{name} images shrink"));
    }
    Ok(Outcome {
        result: serde_json::json!({
            "free_radius": free.radius,
            "coarse_stencil_edge": cfi.stencil_edge,
            "deviations": levels,
            "tolerance": opts.tolerance,
        }),
        failures,
    })
}

pub fn lemma_suite_report(cfg: &RunConfig, geom: &LatticeGeometry, out: &mut Artifacts) -> Result<Outcome> {
    let pack = GreenPack::new(geom)?;
    let report = lemma_suite(&pack, &cfg.suite)?;
    out.csv("checks.csv", report.checks.iter())?;
    let failures = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Ok(Outcome {
        result: serde_json::to_value(&report)?,
        failures,
    })
}

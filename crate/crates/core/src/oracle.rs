//! Brute-force cross-check of the solver: direct minimization of the action
//! over block-mean-zero fluctuations.
//!
//! Only the action, the assembly `U = [A]V` and the box projection are shared
//! with the main path. The Green function, the rotations, the remainder and
//! the fixed-point map are not used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::{
    action, assemble_fine, bond_action, lift, project_block_mean_zero, sup_norm, CoarseConfig, FineConfig,
    VectorConfig,
};
use crate::lattice::LatticeGeometry;
use crate::solver::sample_admissible;
use crate::su2::{Su2, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    /// Central differences of the action in each coordinate.
    FiniteDifference,
    /// Exact derivative of the action in the ambient coordinates.
    AlgebraicAmbient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub method: GradientMethod,
    pub max_steps: usize,
    /// Stop once the projected gradient has sup-norm at most this.
    pub grad_tolerance: f64,
    pub fd_step: f64,
    /// First trial step of every line search.
    pub initial_step: f64,
    /// Factor applied to a rejected trial step.
    pub backtrack: f64,
    /// Number of stored curvature pairs in the quasi-Newton direction.
    pub memory: usize,
    /// Random admissible start instead of `A = 0` when set.
    pub seed: Option<u64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            method: GradientMethod::FiniteDifference,
            max_steps: 5000,
            grad_tolerance: 1e-9,
            fd_step: 1e-6,
            initial_step: 1.0,
            backtrack: 0.5,
            memory: 8,
            seed: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HistoryRow {
    pub step: usize,
    pub action: f64,
    pub grad_norm: f64,
    pub step_size: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub steps: usize,
    pub converged: bool,
    /// Line search could not keep the iterate inside `|A| < 1`.
    pub diverged: bool,
    pub final_action: f64,
    pub final_grad_norm: f64,
    pub history: Vec<HistoryRow>,
}

struct Problem<'a> {
    geom: &'a LatticeGeometry,
    v: &'a CoarseConfig,
}

impl Problem<'_> {
    fn assemble(&self, a: &[Vec3]) -> Option<FineConfig> {
        let cfg = VectorConfig { values: a.to_vec() };
        assemble_fine(self.geom, &cfg, self.v).ok()
    }

    fn value(&self, a: &[Vec3]) -> Option<f64> {
        if a.iter().any(|x| !(x.norm() < 1.0)) {
            return None;
        }
        self.assemble(a).map(|u| action(self.geom, &u))
    }

    /// Action restricted to the bonds touching `s`, with `U(s)` replaced.
    fn local(&self, u: &FineConfig, s: usize, us: &Su2) -> f64 {
        self.geom
            .incident(s)
            .iter()
            .map(|&(b, _)| {
                let bd = self.geom.bonds()[b];
                let lo = if bd.minus == s { us } else { &u.sites[bd.minus] };
                let hi = if bd.plus == s { us } else { &u.sites[bd.plus] };
                bond_action(&lo.mul_conj(hi))
            })
            .sum()
    }

    fn gradient(&self, a: &[Vec3], method: GradientMethod, h: f64) -> Result<Vec<Vec3>> {
        let u = self
            .assemble(a)
            .ok_or_else(|| invalid("A", "fluctuation leaves the unit ball"))?;
        let mut g = vec![Vec3::zeros(); a.len()];
        match method {
            GradientMethod::FiniteDifference => {
                for s in 0..a.len() {
                    let vs = self.v.sites[self.geom.box_index(s)];
                    for c in 0..3 {
                        let mut e = Vec3::zeros();
                        e[c] = h;
                        let up = lift(&(a[s] + e))?.mul(&vs);
                        let down = lift(&(a[s] - e))?.mul(&vs);
                        g[s][c] = (self.local(&u, s, &up) - self.local(&u, s, &down)) / (2.0 * h);
                    }
                }
            }
            GradientMethod::AlgebraicAmbient => {
                for bd in self.geom.bonds() {
                    // W = [A₋] B [A₊]* with B = V₋V₊*; bond action 2(1 − W₀)
                    let b = self.v.sites[self.geom.box_index(bd.minus)]
                        .mul_conj(&self.v.sites[self.geom.box_index(bd.plus)])
                        .components();
                    let lo = lift(&a[bd.minus])?.components();
                    let hi = lift(&a[bd.plus])?.components();
                    let hi_conj = conj(hi);
                    let right = qmul(b, hi_conj);
                    let left = qmul(lo, b);
                    for c in 0..3 {
                        let d_lo = tangent(&a[bd.minus], lo[0], c);
                        let d_hi = conj(tangent(&a[bd.plus], hi[0], c));
                        g[bd.minus][c] -= 2.0 * qmul(d_lo, right)[0];
                        g[bd.plus][c] -= 2.0 * qmul(left, d_hi)[0];
                    }
                }
            }
        }
        project_block_mean_zero(self.geom, &mut g);
        Ok(g)
    }
}

fn qmul(p: [f64; 4], q: [f64; 4]) -> [f64; 4] {
    [
        p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
        p[0] * q[1] + q[0] * p[1] - (p[2] * q[3] - p[3] * q[2]),
        p[0] * q[2] + q[0] * p[2] - (p[3] * q[1] - p[1] * q[3]),
        p[0] * q[3] + q[0] * p[3] - (p[1] * q[2] - p[2] * q[1]),
    ]
}

fn conj(q: [f64; 4]) -> [f64; 4] {
    [q[0], -q[1], -q[2], -q[3]]
}

/// Derivative of the lift `(√(1−|A|²), A)` along coordinate `c`.
fn tangent(a: &Vec3, a0: f64, c: usize) -> [f64; 4] {
    let mut d = [-a[c] / a0, 0.0, 0.0, 0.0];
    d[c + 1] = 1.0;
    d
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Projected quasi-Newton descent on the action with a monotone backtracking
/// line search.
pub fn oracle_minimize(
    geom: &LatticeGeometry,
    v: &CoarseConfig,
    eps: f64,
    cfg: &OracleConfig,
) -> Result<(VectorConfig, OracleReport)> {
    if !(cfg.grad_tolerance > 0.0) {
        return Err(invalid("grad_tolerance", "must be positive"));
    }
    if !(cfg.backtrack > 0.0 && cfg.backtrack < 1.0) {
        return Err(invalid("backtrack", "must lie in (0, 1)"));
    }
    let problem = Problem { geom, v };
    let mut a = match cfg.seed {
        Some(seed) => sample_admissible(geom, v, eps, &mut ChaCha8Rng::seed_from_u64(seed))?.values,
        None => vec![Vec3::zeros(); geom.num_sites()],
    };
    let mut f = problem
        .value(&a)
        .ok_or_else(|| invalid("A", "start point leaves the unit ball"))?;
    let mut g = problem.gradient(&a, cfg.method, cfg.fd_step)?;
    let mut pairs: Vec<(Vec<Vec3>, Vec<Vec3>, f64)> = Vec::new();
    let mut report = OracleReport {
        steps: 0,
        converged: false,
        diverged: false,
        final_action: f,
        final_grad_norm: sup_norm(&g),
        history: vec![HistoryRow {
            step: 0,
            action: f,
            grad_norm: sup_norm(&g),
            step_size: 0.0,
        }],
    };
    while report.steps < cfg.max_steps {
        if sup_norm(&g) <= cfg.grad_tolerance {
            report.converged = true;
            break;
        }
        // two-loop recursion
        let mut d: Vec<Vec3> = g.iter().map(|x| -x).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let al = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= yi * al);
            alphas.push(al);
        }
        if let Some((s, y, _)) = pairs.last() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|x| *x *= gamma);
        }
        for ((s, y, rho), al) in pairs.iter().zip(alphas.iter().rev()) {
            let be = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += si * (al - be));
        }
        project_block_mean_zero(geom, &mut d);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|x| -x).collect();
            slope = dot(&g, &d);
            pairs.clear();
        }
        let mut step = cfg.initial_step;
        let mut accepted = None;
        let mut escaped = true;
        for _ in 0..60 {
            let trial: Vec<Vec3> = a.iter().zip(&d).map(|(x, di)| x + di * step).collect();
            if let Some(ft) = problem.value(&trial) {
                escaped = false;
                if ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= cfg.backtrack;
        }
        let Some((mut next, f_next)) = accepted else {
            report.diverged = escaped;
            break;
        };
        project_block_mean_zero(geom, &mut next);
        let g_next = problem.gradient(&next, cfg.method, cfg.fd_step)?;
        let s: Vec<Vec3> = next.iter().zip(&a).map(|(p, q)| p - q).collect();
        let y: Vec<Vec3> = g_next.iter().zip(&g).map(|(p, q)| p - q).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            pairs.push((s, y, 1.0 / sy));
            if pairs.len() > cfg.memory {
                pairs.remove(0);
            }
        }
        a = next;
        f = f_next;
        g = g_next;
        report.steps += 1;
        report.history.push(HistoryRow {
            step: report.steps,
            action: f,
            grad_norm: sup_norm(&g),
            step_size: step,
        });
    }
    report.final_action = f;
    report.final_grad_norm = sup_norm(&g);
    report.converged = report.final_grad_norm <= cfg.grad_tolerance;
    Ok((VectorConfig { values: a }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sample_configs;

    #[test]
    fn constant_field_needs_no_steps() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let v = CoarseConfig::constant(&geom, Su2::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), 0.2));
        let (a, report) = oracle_minimize(&geom, &v, 0.05, &OracleConfig::default()).unwrap();
        assert_eq!(report.steps, 0);
        assert!(report.converged && a.sup_norm() == 0.0);
    }

    #[test]
    fn gradients_agree() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let (v, a) = sample_configs(&geom, 0.01, 0.1, 2).unwrap();
        let p = Problem { geom: &geom, v: &v };
        let fd = p.gradient(&a.values, GradientMethod::FiniteDifference, 1e-6).unwrap();
        let ex = p.gradient(&a.values, GradientMethod::AlgebraicAmbient, 0.0).unwrap();
        let diff = fd.iter().zip(&ex).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn descent_is_monotone_and_converges() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let (v, _) = sample_configs(&geom, 0.00125, 0.05, 6).unwrap();
        let (_, report) = oracle_minimize(&geom, &v, 0.05, &OracleConfig::default()).unwrap();
        assert!(report.converged, "{:?}", report.history.last());
        assert!(report.history.windows(2).all(|w| w[1].action <= w[0].action));
    }
}

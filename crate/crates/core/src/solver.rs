//! The fixed-point map whose fixed points are the constrained critical
//! points, its Banach iteration, and an independent verification of the
//! critical-point conditions.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    bond_w_field, d_adjoint, lie_derivative_from_divergence, q_average, remainder_field, tangent_basis,
    RotationField,
};
use crate::error::{invalid, Error, Result};
use crate::fields::{
    assemble_fine, coarse_small_field_sup, random_in_ball, project_block_mean_zero, small_field_sup,
    sup_distance, sup_norm, CoarseConfig, VectorConfig,
};
use crate::green::GreenPack;
use crate::lattice::LatticeGeometry;
use crate::su2::{sqrt_lemma_constant, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Fine small-field bound ε.
    pub eps: f64,
    /// Coarse small-field bound ε₁; `None` means `ε²/2`.
    pub eps1: Option<f64>,
    pub max_iter: usize,
    /// Stop once `‖A − T(A)‖∞` is at most this.
    pub tolerance: f64,
    pub contraction_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps: 0.05,
            eps1: None,
            max_iter: 50,
            tolerance: 1e-12,
            contraction_samples: 50,
        }
    }
}

impl SolverConfig {
    pub fn eps1(&self) -> f64 {
        self.eps1.unwrap_or(self.eps * self.eps / 2.0)
    }

    /// Checks ranges; returns warnings for admissible but unusual settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(invalid("eps", format!("must lie in (0, 1], got {}", self.eps)));
        }
        let eps1 = self.eps1();
        if !(eps1 > 0.0 && eps1 <= 1.0) {
            return Err(invalid("eps1", format!("must lie in (0, 1], got {eps1}")));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        let mut warnings = Vec::new();
        if eps1 > self.eps * self.eps {
            warnings.push(format!(
                "eps1 = {eps1} exceeds eps^2 = {}; the fixed point may leave the small-field set",
                self.eps * self.eps
            ));
        }
        Ok(warnings)
    }
}

/// Per-site vectors as an `N × 3` matrix.
fn to_matrix(f: &[Vec3]) -> DMatrix<f64> {
    DMatrix::from_fn(f.len(), 3, |i, c| f[i][c])
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec3> {
    (0..m.nrows())
        .map(|i| Vec3::new(m[(i, 0)], m[(i, 1)], m[(i, 2)]))
        .collect()
}

/// `T(A) = (G R*_A Q* D_A⁻¹ Q − 1) G ∂* r_A`.
pub fn t_map(pack: &GreenPack, a: &VectorConfig, v: &CoarseConfig) -> Result<VectorConfig> {
    let geom = &pack.geom;
    if let Some((i, x)) = a.values.iter().enumerate().find(|(_, x)| !(x.norm() < 1.0)) {
        return Err(invalid(
            "A",
            format!("|A| = {} at site {i} is not below 1", x.norm()),
        ));
    }
    let rot = RotationField::new(a)?;
    let r = remainder_field(geom, a, v)?;
    let u = pack.g() * to_matrix(&d_adjoint(geom, &r));
    let qu = q_average(geom, &from_matrix(&u));
    let rhs = nalgebra::DVector::from_iterator(3 * qu.len(), qu.iter().flat_map(|v| v.iter().copied()));
    let z = pack
        .d_matrix(&rot)
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularOperator("D_A is singular".into()))?;
    let twisted: Vec<Vec3> = (0..geom.num_sites())
        .map(|x| {
            let k = geom.box_index(x);
            rot.adjoint(x, &Vec3::new(z[3 * k], z[3 * k + 1], z[3 * k + 2]))
        })
        .collect();
    let t = pack.g() * to_matrix(&twisted) - u;
    Ok(VectorConfig {
        values: from_matrix(&t),
    })
}

/// Diagnostics of one iterate against the small-field set.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Membership {
    /// `sup |QA|`.
    pub constraint: f64,
    /// Fine small-field sup of the assembled configuration.
    pub fine_sup: f64,
    pub sup_vector: f64,
    pub constraint_ok: bool,
    pub small_field_ok: bool,
    /// `sup |A| ≤ 4 c L² ε`.
    pub within_l2_bound: bool,
    /// `sup |A| ≤ 4 c L ε`.
    pub within_l_bound: bool,
}

/// Tolerance for the constraint part of the membership flags.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-10;

pub fn membership(geom: &LatticeGeometry, a: &VectorConfig, v: &CoarseConfig, eps: f64) -> Result<Membership> {
    let constraint = sup_norm(&q_average(geom, &a.values));
    let fine_sup = small_field_sup(geom, &assemble_fine(geom, a, v)?);
    let sup_vector = a.sup_norm();
    let c = sqrt_lemma_constant();
    let l = geom.l() as f64;
    Ok(Membership {
        constraint,
        fine_sup,
        sup_vector,
        constraint_ok: constraint <= CONSTRAINT_TOLERANCE,
        small_field_ok: fine_sup <= eps,
        within_l2_bound: sup_vector <= 4.0 * c * l * l * eps,
        within_l_bound: sup_vector <= 4.0 * c * l * eps,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖A_{k+1} − A_k‖∞` for every step.
    pub residuals: Vec<f64>,
    /// Ratios of successive residuals.
    pub ratios: Vec<f64>,
    pub final_residual: f64,
    pub converged: bool,
    pub membership: Vec<Membership>,
}

/// Banach iteration from `A = 0`.
pub fn solve_critical(pack: &GreenPack, v: &CoarseConfig, cfg: &SolverConfig) -> Result<(VectorConfig, SolveReport)> {
    solve_from(pack, v, cfg, VectorConfig::zeros(&pack.geom))
}

/// Banach iteration from a given start.
pub fn solve_from(
    pack: &GreenPack,
    v: &CoarseConfig,
    cfg: &SolverConfig,
    start: VectorConfig,
) -> Result<(VectorConfig, SolveReport)> {
    cfg.validate()?;
    let geom = &pack.geom;
    let coarse = coarse_small_field_sup(geom, v);
    if coarse > cfg.eps1() {
        return Err(Error::Precondition(format!(
            "coarse configuration has small-field sup {coarse:.3e} above eps1 = {:.3e}",
            cfg.eps1()
        )));
    }
    let mut a = start;
    let mut report = SolveReport {
        iterations: 0,
        residuals: Vec::new(),
        ratios: Vec::new(),
        final_residual: f64::INFINITY,
        converged: false,
        membership: vec![membership(geom, &a, v, cfg.eps)?],
    };
    while report.iterations < cfg.max_iter {
        let next = t_map(pack, &a, v)?;
        let res = sup_distance(&next.values, &a.values);
        report.iterations += 1;
        if let Some(prev) = report.residuals.last() {
            report.ratios.push(if *prev > 0.0 { res / prev } else { 0.0 });
        }
        report.residuals.push(res);
        report.final_residual = res;
        if res <= cfg.tolerance {
            // `a` already satisfies ‖a − T(a)‖∞ ≤ tolerance
            report.converged = true;
            break;
        }
        a = next;
        report.membership.push(membership(geom, &a, v, cfg.eps)?);
    }
    Ok((a, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyTolerances {
    pub constraint: f64,
    pub conservation: f64,
    pub lie: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        VerifyTolerances {
            constraint: 1e-10,
            conservation: 1e-8,
            lie: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub constraint: Check,
    pub conservation: Check,
    pub lie_derivative: Check,
    pub small_field: Check,
    pub tangent_vectors: usize,
    pub pass: bool,
}

/// Evaluates the critical-point conditions without using the fixed-point
/// map: the constraint, constancy of `(R⁻¹)*∂*w` on boxes, vanishing Lie
/// derivatives along every tangent vector, and the small-field bound.
pub fn verify_critical(
    geom: &LatticeGeometry,
    a: &VectorConfig,
    v: &CoarseConfig,
    eps: f64,
    tol: &VerifyTolerances,
) -> Result<VerificationReport> {
    let constraint = sup_norm(&q_average(geom, &a.values));
    let rot = RotationField::new(a)?;
    let w = bond_w_field(geom, a, v)?;
    let div = d_adjoint(geom, &w.w);
    let conserved = (0..geom.num_sites())
        .map(|x| rot.inverse_adjoint(geom, x, &div[x]))
        .collect::<Result<Vec<_>>>()?;
    let mut spread: f64 = 0.0;
    let mut lie: f64 = 0.0;
    let mut count = 0;
    for k in 0..geom.num_boxes() {
        let sites = geom.box_sites(k);
        for &x in sites {
            for &y in sites {
                spread = spread.max((conserved[x] - conserved[y]).norm());
            }
        }
        for t in tangent_basis(geom, &rot, k)? {
            lie = lie.max(lie_derivative_from_divergence(&t, &div).abs());
            count += 1;
        }
    }
    let fine_sup = small_field_sup(geom, &assemble_fine(geom, a, v)?);
    let constraint = Check::at_most("constraint", constraint, tol.constraint);
    let conservation = Check::at_most("conservation", spread, tol.conservation);
    let lie_derivative = Check::at_most("lie_derivative", lie, tol.lie);
    let small_field = Check::at_most("small_field", fine_sup, eps);
    let pass = constraint.pass && conservation.pass && lie_derivative.pass && small_field.pass;
    Ok(VerificationReport {
        constraint,
        conservation,
        lie_derivative,
        small_field,
        tangent_vectors: count,
        pass,
    })
}

/// Block-mean-zero vectors whose assembled configuration lies in the fine
/// small-field set: uniform in a ball of radius `eps/2`, shrunk by 0.9 until
/// the bond bound `eps` holds.
pub fn sample_admissible(
    geom: &LatticeGeometry,
    v: &CoarseConfig,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<VectorConfig> {
    let mut values: Vec<Vec3> = (0..geom.num_sites()).map(|_| random_in_ball(rng, eps / 2.0)).collect();
    project_block_mean_zero(geom, &mut values);
    loop {
        let a = VectorConfig {
            values: values.clone(),
        };
        if small_field_sup(geom, &assemble_fine(geom, &a, v)?) <= eps {
            return Ok(a);
        }
        values.iter_mut().for_each(|x| *x *= 0.9);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionEstimate {
    /// Largest sampled `‖T(A₁) − T(A₂)‖∞ / ‖A₁ − A₂‖∞`.
    pub q: f64,
    pub quotients: Vec<f64>,
}

/// Empirical Lipschitz constant of `T` over sampled pairs of admissible
/// fluctuations.
pub fn estimate_contraction(
    pack: &GreenPack,
    v: &CoarseConfig,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<ContractionEstimate> {
    let geom = &pack.geom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quotients = Vec::with_capacity(cfg.contraction_samples);
    for _ in 0..cfg.contraction_samples {
        let a1 = sample_admissible(geom, v, cfg.eps, &mut rng)?;
        let a2 = sample_admissible(geom, v, cfg.eps, &mut rng)?;
        let num = sup_distance(&t_map(pack, &a1, v)?.values, &t_map(pack, &a2, v)?.values);
        let den = sup_distance(&a1.values, &a2.values);
        if den > 0.0 {
            quotients.push(num / den);
        }
    }
    let q = quotients.iter().copied().fold(0.0, f64::max);
    Ok(ContractionEstimate { q, quotients })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sample_configs;
    use crate::su2::Su2;

    #[test]
    fn constant_coarse_field_has_zero_fixed_point() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let pack = GreenPack::new(&geom).unwrap();
        let v = CoarseConfig::constant(&geom, Su2::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 0.4));
        let t = t_map(&pack, &VectorConfig::zeros(&geom), &v).unwrap();
        assert!(t.sup_norm() < 1e-15);
        let (a, report) = solve_critical(&pack, &v, &SolverConfig::default()).unwrap();
        assert!(report.converged && report.iterations == 1);
        assert!(a.sup_norm() == 0.0);
        let check = verify_critical(&geom, &a, &v, 0.05, &VerifyTolerances::default()).unwrap();
        assert!(check.pass);
    }

    #[test]
    fn t_map_output_is_block_mean_zero() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let pack = GreenPack::new(&geom).unwrap();
        let (v, a) = sample_configs(&geom, 0.01, 0.1, 21).unwrap();
        let t = t_map(&pack, &a, &v).unwrap();
        assert!(sup_norm(&q_average(&geom, &t.values)) < 1e-12);
    }

    #[test]
    fn solve_converges_and_verifies() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let pack = GreenPack::new(&geom).unwrap();
        let cfg = SolverConfig::default();
        let (v, _) = sample_configs(&geom, cfg.eps1(), cfg.eps, 3).unwrap();
        let (a, report) = solve_critical(&pack, &v, &cfg).unwrap();
        assert!(report.converged, "{report:?}");
        let check = verify_critical(&geom, &a, &v, cfg.eps, &VerifyTolerances::default()).unwrap();
        assert!(check.pass, "{check:?}");
        assert_eq!(check.tangent_vectors, 9 * 24);
    }

    #[test]
    fn random_point_is_not_critical() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let (v, _) = sample_configs(&geom, 0.001, 0.05, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = sample_admissible(&geom, &v, 0.05, &mut rng).unwrap();
        let check = verify_critical(&geom, &a, &v, 0.05, &VerifyTolerances::default()).unwrap();
        assert!(check.lie_derivative.value > 1e-4);
    }

    #[test]
    fn rejects_rough_coarse_field() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let pack = GreenPack::new(&geom).unwrap();
        let (v, _) = sample_configs(&geom, 0.5, 0.05, 3).unwrap();
        let err = solve_critical(&pack, &v, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}

//! Configurations on the fine and coarse lattices, the action, block
//! averaging, small-field diagnostics and seeded random configurations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::lattice::LatticeGeometry;
use crate::su2::{weighted_sum, Sign, Su2, Vec3, WeightedSum};

/// One group element per fine site (the field `U`, or the fluctuation `U′`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FineConfig {
    pub sites: Vec<Su2>,
}

/// One group element per box (the prescribed coarse field `V`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoarseConfig {
    pub sites: Vec<Su2>,
}

/// One vector of length at most one per fine site (the fluctuation vectors).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorConfig {
    pub values: Vec<Vec3>,
}

fn check_len(name: &'static str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(invalid(name, format!("expected {want} entries, got {got}")));
    }
    Ok(())
}

impl FineConfig {
    pub fn new(geom: &LatticeGeometry, sites: Vec<Su2>) -> Result<Self> {
        check_len("sites", sites.len(), geom.num_sites())?;
        Ok(FineConfig { sites })
    }

    pub fn constant(geom: &LatticeGeometry, u: Su2) -> Self {
        FineConfig {
            sites: vec![u; geom.num_sites()],
        }
    }

    /// `x ↦ u·U(x)·v`.
    pub fn transformed(&self, u: &Su2, v: &Su2) -> Self {
        FineConfig {
            sites: self.sites.iter().map(|s| u.mul(s).mul(v)).collect(),
        }
    }
}

impl CoarseConfig {
    pub fn new(geom: &LatticeGeometry, sites: Vec<Su2>) -> Result<Self> {
        check_len("sites", sites.len(), geom.num_boxes())?;
        Ok(CoarseConfig { sites })
    }

    pub fn constant(geom: &LatticeGeometry, u: Su2) -> Self {
        CoarseConfig {
            sites: vec![u; geom.num_boxes()],
        }
    }
}

impl VectorConfig {
    pub fn new(geom: &LatticeGeometry, values: Vec<Vec3>) -> Result<Self> {
        check_len("values", values.len(), geom.num_sites())?;
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.norm() <= 1.0)) {
            return Err(invalid(
                "values",
                format!("vector at site {i} has length {} > 1", v.norm()),
            ));
        }
        Ok(VectorConfig { values })
    }

    pub fn zeros(geom: &LatticeGeometry) -> Self {
        VectorConfig {
            values: vec![Vec3::zeros(); geom.num_sites()],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }
}

/// `sup_x |f(x)|` with the Euclidean length at each site.
pub fn sup_norm(f: &[Vec3]) -> f64 {
    f.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `sup_x |f(x) − g(x)|`.
pub fn sup_distance(f: &[Vec3], g: &[Vec3]) -> f64 {
    f.iter()
        .zip(g)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// Subtracts the per-box mean so that every box sums to zero.
pub fn project_block_mean_zero(geom: &LatticeGeometry, f: &mut [Vec3]) {
    for k in 0..geom.num_boxes() {
        let sites = geom.box_sites(k);
        let mean = sites.iter().map(|&i| f[i]).sum::<Vec3>() / sites.len() as f64;
        for &i in sites {
            f[i] -= mean;
        }
    }
}

/// Contribution `Re Tr(1 − W) = 2(1 − W₀)` of one bond variable `W`.
pub fn bond_action(w: &Su2) -> f64 {
    2.0 * w.one_minus_scalar()
}

/// `Σ_b Re Tr(1 − U(b₋)U(b₊)*)`.
pub fn action(geom: &LatticeGeometry, u: &FineConfig) -> f64 {
    geom.bonds()
        .iter()
        .map(|b| bond_action(&u.sites[b.minus].mul_conj(&u.sites[b.plus])))
        .sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockAverage {
    /// Unnormalized box means `c·u`.
    pub raw: Vec<WeightedSum>,
    /// Polar parts `u`, identity where `c = 0`.
    pub avg: CoarseConfig,
}

pub fn block_average(geom: &LatticeGeometry, u: &FineConfig) -> BlockAverage {
    let weight = 1.0 / (geom.l() * geom.l()) as f64;
    let raw: Vec<WeightedSum> = (0..geom.num_boxes())
        .map(|k| {
            let terms: Vec<(f64, Su2)> =
                geom.box_sites(k).iter().map(|&i| (weight, u.sites[i])).collect();
            weighted_sum(&terms).expect("box weights are positive")
        })
        .collect();
    let avg = CoarseConfig {
        sites: raw.iter().map(|r| r.u).collect(),
    };
    BlockAverage { raw, avg }
}

/// `sup_b ‖U(b₋)U(b₊)* − 1‖` over fine bonds.
pub fn small_field_sup(geom: &LatticeGeometry, u: &FineConfig) -> f64 {
    geom.bonds()
        .iter()
        .map(|b| u.sites[b.minus].mul_conj(&u.sites[b.plus]).dist_to_identity())
        .fold(0.0, f64::max)
}

/// Pairs of neighbouring boxes `(k, k')` with `k'` one step up in direction μ.
pub fn coarse_bonds(geom: &LatticeGeometry) -> Vec<(usize, usize, usize)> {
    let side = geom.coarse_side();
    let mut out = Vec::new();
    for a in 0..side {
        for b in 0..side {
            let k = a * side + b;
            if a + 1 < side {
                out.push((k, k + side, 0));
            }
            if b + 1 < side {
                out.push((k, k + 1, 1));
            }
        }
    }
    out
}

/// `sup ‖V(y)V(y')* − 1‖` over neighbouring boxes.
pub fn coarse_small_field_sup(geom: &LatticeGeometry, v: &CoarseConfig) -> f64 {
    coarse_bonds(geom)
        .iter()
        .map(|&(k, k2, _)| v.sites[k].mul_conj(&v.sites[k2]).dist_to_identity())
        .fold(0.0, f64::max)
}

/// The `s = +1` lift `A ↦ (√(1−|A|²), A)`.
pub fn lift(a: &Vec3) -> Result<Su2> {
    Su2::from_vector(*a, Sign::Plus)
}

/// `U(x) = [A(x)]·V(y_x)`.
pub fn assemble_fine(geom: &LatticeGeometry, a: &VectorConfig, v: &CoarseConfig) -> Result<FineConfig> {
    check_len("values", a.values.len(), geom.num_sites())?;
    let sites = a
        .values
        .iter()
        .enumerate()
        .map(|(i, ai)| Ok(lift(ai)?.mul(&v.sites[geom.box_index(i)])))
        .collect::<Result<Vec<_>>>()?;
    Ok(FineConfig { sites })
}

/// Fluctuation `U′(x) = U(x)V(y_x)*`.
pub fn fluctuation(geom: &LatticeGeometry, u: &FineConfig, v: &CoarseConfig) -> FineConfig {
    FineConfig {
        sites: u
            .sites
            .iter()
            .enumerate()
            .map(|(i, ui)| ui.mul_conj(&v.sites[geom.box_index(i)]))
            .collect(),
    }
}

/// Vector parts of the fluctuation, i.e. the inverse of [`assemble_fine`] in
/// the `s = +1` regime.
pub fn extract_vectors(geom: &LatticeGeometry, u: &FineConfig, v: &CoarseConfig) -> VectorConfig {
    VectorConfig {
        values: fluctuation(geom, u, v).sites.iter().map(Su2::vector).collect(),
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let r = v.norm();
        if r > 1e-3 && r <= 1.0 {
            return v / r;
        }
    }
}

/// Uniform sample from the closed ball of radius `r`.
pub fn random_in_ball(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        if v.norm() <= 1.0 {
            return v * r;
        }
    }
}

/// Haar-distributed element: a uniform point of the 4-ball, normalized.
pub fn random_su2(rng: &mut ChaCha8Rng) -> Su2 {
    loop {
        let q = [0; 4].map(|_| rng.random_range(-1.0..=1.0f64));
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return Su2::new(q.map(|c| c / n)).expect("normalized");
        }
    }
}

/// Coarse field with neighbouring boxes at most `eps1` apart: independent
/// per-box rotations with angle uniform in `[0, θ]`, `θ` shrunk until the bound
/// holds, times one global random rotation.
pub fn sample_coarse(geom: &LatticeGeometry, eps1: f64, rng: &mut ChaCha8Rng) -> CoarseConfig {
    let axes: Vec<Vec3> = (0..geom.num_boxes()).map(|_| random_unit(rng)).collect();
    let fracs: Vec<f64> = (0..geom.num_boxes()).map(|_| rng.random_range(0.0..=1.0)).collect();
    let global = random_su2(rng);
    let mut theta = eps1;
    loop {
        let v = CoarseConfig {
            sites: axes
                .iter()
                .zip(&fracs)
                .map(|(n, f)| Su2::from_axis_angle(*n, f * theta).mul(&global))
                .collect(),
        };
        if coarse_small_field_sup(geom, &v) <= eps1 {
            return v;
        }
        theta *= 0.9;
    }
}

/// Block-mean-zero fluctuation vectors with `sup |A| ≤ eps`.
pub fn sample_fluctuation(geom: &LatticeGeometry, eps: f64, rng: &mut ChaCha8Rng) -> VectorConfig {
    let mut values: Vec<Vec3> = (0..geom.num_sites()).map(|_| random_in_ball(rng, eps)).collect();
    project_block_mean_zero(geom, &mut values);
    let sup = sup_norm(&values);
    if sup > eps {
        let s = eps / sup;
        values.iter_mut().for_each(|v| *v *= s);
    }
    VectorConfig { values }
}

/// Deterministic pair `(V, A)` with `V` in the coarse `eps1` small-field set
/// and `A` block-mean-zero with `sup |A| ≤ eps`.
pub fn sample_configs(
    geom: &LatticeGeometry,
    eps1: f64,
    eps: f64,
    seed: u64,
) -> Result<(CoarseConfig, VectorConfig)> {
    if !(0.0..=1.0).contains(&eps1) {
        return Err(invalid("eps1", format!("must lie in [0, 1], got {eps1}")));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(invalid("eps", format!("must lie in [0, 1], got {eps}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = sample_coarse(geom, eps1, &mut rng);
    let a = sample_fluctuation(geom, eps, &mut rng);
    Ok((v, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> LatticeGeometry {
        LatticeGeometry::new(3, 1).unwrap()
    }

    #[test]
    fn action_examples() {
        let g = geom();
        let u = Su2::from_axis_angle(Vec3::new(0.3, -1.0, 0.2), 0.7);
        assert_eq!(action(&g, &FineConfig::constant(&g, u)), 0.0);
        let mut cfg = FineConfig::constant(&g, Su2::identity());
        cfg.sites[g.index([4, 4]).unwrap()] = Su2::new([-1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((action(&g, &cfg) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn block_average_of_constant_block() {
        let g = geom();
        let u = Su2::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.4);
        let avg = block_average(&g, &FineConfig::constant(&g, u));
        for r in &avg.raw {
            assert!((r.c - 1.0).abs() < 1e-12);
            let d: f64 = (0..4).map(|k| (r.u.components()[k] - u.components()[k]).abs()).sum();
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn block_average_of_balanced_box_is_identity() {
        // four U, four U*, one identity: the matrix sum is (1 + 8 cos a)·1
        let g = geom();
        let u = Su2::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), 0.8);
        let mut cfg = FineConfig::constant(&g, Su2::identity());
        for (j, &i) in g.box_sites(0).iter().enumerate().skip(1) {
            cfg.sites[i] = if j % 2 == 0 { u } else { u.conj() };
        }
        let avg = block_average(&g, &cfg);
        let q = avg.avg.sites[0].components();
        assert!((q[0] - 1.0).abs() < 1e-12 && q[1..].iter().all(|c| c.abs() < 1e-12));
        assert!((avg.raw[0].c - (1.0 + 8.0 * 0.8f64.cos()) / 9.0).abs() < 1e-12);
    }

    #[test]
    fn small_field_sup_examples() {
        let g = geom();
        assert_eq!(small_field_sup(&g, &FineConfig::constant(&g, Su2::identity())), 0.0);
        let mut cfg = FineConfig::constant(&g, Su2::identity());
        let a: f64 = 0.37;
        cfg.sites[g.index([4, 4]).unwrap()] = Su2::new([a.cos(), 0.0, 0.0, a.sin()]).unwrap();
        // eigenvalues of exp(iaσ₃) − 1 are e^{±ia} − 1, of modulus 2|sin(a/2)|
        let expected = 2.0 * (a / 2.0).sin().abs();
        assert!((small_field_sup(&g, &cfg) - expected).abs() < 1e-12);
    }

    #[test]
    fn sampling_contract() {
        let g = geom();
        let (v, a) = sample_configs(&g, 0.0, 0.2, 5).unwrap();
        assert!(v.sites.windows(2).all(|w| w[0] == w[1]));
        let (v1, a1) = sample_configs(&g, 0.01, 0.2, 9).unwrap();
        let (v2, a2) = sample_configs(&g, 0.01, 0.2, 9).unwrap();
        assert_eq!((&v1, &a1), (&v2, &a2));
        assert!(coarse_small_field_sup(&g, &v1) <= 0.01);
        assert!(a.sup_norm() <= 0.2 + 1e-15);
        for k in 0..g.num_boxes() {
            let s: Vec3 = g.box_sites(k).iter().map(|&i| a1.values[i]).sum();
            assert!(s.norm() / 9.0 < 1e-15);
        }
        assert!(sample_configs(&g, 0.1, 1.5, 0).is_err());
    }

    #[test]
    fn assemble_round_trip() {
        let g = geom();
        let (v, a) = sample_configs(&g, 0.05, 0.3, 11).unwrap();
        let u = assemble_fine(&g, &a, &v).unwrap();
        let back = extract_vectors(&g, &u, &v);
        assert!(sup_distance(&back.values, &a.values) < 1e-12);
        let id = CoarseConfig::constant(&g, Su2::identity());
        let u0 = assemble_fine(&g, &a, &id).unwrap();
        for (ui, ai) in u0.sites.iter().zip(&a.values) {
            assert!((ui.vector() - ai).norm() < 1e-15);
        }
        let bad = VectorConfig {
            values: vec![Vec3::new(1.1, 0.0, 0.0); g.num_sites()],
        };
        assert!(assemble_fine(&g, &bad, &v).is_err());
    }
}

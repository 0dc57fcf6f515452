//! Randomized checks of the analytic estimates the solver relies on: SU(2)
//! algebra, small-field chains, remainder and operator bounds, and the linear
//! algebra identities of the lattice calculus.
//!
//! Every check reports a statistic and a limit. Bound checks use the ratio
//! `measured / bound` against the limit 1; identity checks use the residual
//! against a tolerance.

use nalgebra::{Complex, DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    bond_w_field, d_adjoint, d_forward, inner_coarse, inner_fine, q_adjoint, q_average, remainder_field,
    RotationField,
};
use crate::error::{invalid, Result};
use crate::fields::{
    block_average, fluctuation, random_in_ball, random_su2, sample_configs, small_field_sup, sup_distance, sup_norm,
    CoarseConfig, FineConfig, VectorConfig,
};
use crate::green::{assemble_green, block_row_sum, d_operator_inverse, linf_operator_norm, GreenPack, InverseMethod};
use crate::lattice::LatticeGeometry;
use crate::linalg::max_row_sum;
use crate::solver::sample_admissible;
use crate::su2::{sqrt_lemma_constant, weighted_sum, Su2, Vec3};

/// Relative slack granted to bound checks for floating-point rounding.
pub const BOUND_SLACK: f64 = 1e-12;

/// Residual tolerance for the algebraic identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteCheck {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Worst ratio to the bound, or worst residual.
    pub statistic: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Accumulates per-sample outcomes of one check.
struct Tally {
    name: String,
    samples: usize,
    violations: usize,
    statistic: f64,
    limit: f64,
}

impl Tally {
    fn bound(name: &str) -> Self {
        Tally {
            name: name.into(),
            samples: 0,
            violations: 0,
            statistic: 0.0,
            limit: 1.0,
        }
    }

    fn identity(name: &str, tolerance: f64) -> Self {
        Tally {
            limit: tolerance,
            ..Tally::bound(name)
        }
    }

    /// Records `measured ≤ bound`.
    fn le(&mut self, measured: f64, bound: f64) {
        self.samples += 1;
        if measured > bound * (1.0 + BOUND_SLACK) + 1e-300 {
            self.violations += 1;
        }
        let ratio = if bound > 0.0 {
            measured / bound
        } else if measured > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        self.statistic = self.statistic.max(ratio);
    }

    /// Records a residual against the tolerance.
    fn residual(&mut self, r: f64) {
        self.samples += 1;
        if !(r <= self.limit) {
            self.violations += 1;
        }
        self.statistic = self.statistic.max(r);
    }

    /// Records a yes/no outcome.
    fn holds(&mut self, ok: bool) {
        self.samples += 1;
        if !ok {
            self.violations += 1;
            self.statistic = 1.0;
        }
    }

    fn finish(self) -> SuiteCheck {
        SuiteCheck {
            pass: self.violations == 0 && self.samples > 0,
            name: self.name,
            samples: self.samples,
            violations: self.violations,
            statistic: self.statistic,
            limit: self.limit,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = random_in_ball(rng, 1.0);
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

// ---------------------------------------------------------------- SU(2)

/// `‖Σ cᵢUᵢ − c·u‖` in the 2×2 matrix realization, for random nonnegative
/// weights and 2 to 9 random group elements.
pub fn weighted_sum_closure(draws: usize, seed: u64) -> Result<SuiteCheck> {
    let mut rng = rng_for(seed, 1);
    let mut tally = Tally::identity("weighted-sum closure", IDENTITY_TOLERANCE);
    for _ in 0..draws {
        let k = rng.random_range(2..=9);
        let terms: Vec<(f64, Su2)> = (0..k).map(|_| (rng.random_range(0.0..=1.0), random_su2(&mut rng))).collect();
        let sum = weighted_sum(&terms)?;
        let mut m = sum.u.to_matrix() * Complex::new(-sum.c, 0.0);
        for (c, u) in &terms {
            m += u.to_matrix() * Complex::new(*c, 0.0);
        }
        tally.residual(m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
    }
    Ok(tally.finish())
}

fn hermitian_sqrt(m: &DMatrix<Complex<f64>>) -> Option<DMatrix<Complex<f64>>> {
    // Denman–Beavers iteration
    let n = m.nrows();
    let mut y = m.clone();
    let mut z = DMatrix::<Complex<f64>>::identity(n, n);
    for _ in 0..60 {
        let yi = y.clone().try_inverse()?;
        let zi = z.clone().try_inverse()?;
        let half = Complex::new(0.5, 0.0);
        let y_next = (&y + zi) * half;
        z = (&z + yi) * half;
        let change = (&y_next - &y).iter().map(|c| c.norm()).fold(0.0, f64::max);
        y = y_next;
        if change < 1e-16 {
            break;
        }
    }
    Some(y)
}

fn complex_op_norm(m: &DMatrix<Complex<f64>>) -> f64 {
    m.clone().singular_values().max()
}

/// `‖(1+M)^{1/2} − 1‖ ≤ c‖M‖` for random Hermitian `M` of size 2 to 6 with
/// `‖M‖ < 1/2`, where `c` is [`sqrt_lemma_constant`].
pub fn square_root_bound(draws: usize, seed: u64) -> Result<SuiteCheck> {
    let mut rng = rng_for(seed, 2);
    let c = sqrt_lemma_constant();
    let mut tally = Tally::bound("square-root bound");
    for _ in 0..draws {
        let n = rng.random_range(2..=6);
        let raw = DMatrix::from_fn(n, n, |_, _| {
            Complex::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
        });
        let herm = (&raw + raw.adjoint()) * Complex::new(0.5, 0.0);
        let target = rng.random_range(0.0..0.5);
        let m = &herm * Complex::new(target / complex_op_norm(&herm), 0.0);
        let id = DMatrix::<Complex<f64>>::identity(n, n);
        let root = hermitian_sqrt(&(&id + &m)).ok_or_else(|| invalid("M", "1 + M is singular"))?;
        tally.le(complex_op_norm(&(root - id)), c * complex_op_norm(&m));
    }
    Ok(tally.finish())
}

fn pauli_matrix(v0: f64, v: &Vec3) -> Matrix2<Complex<f64>> {
    Matrix2::new(
        Complex::new(v0, v.z),
        Complex::new(v.y, v.x),
        Complex::new(-v.y, v.x),
        Complex::new(v0, -v.z),
    )
}

/// `‖v₀ + i v·σ‖² ≤ 2(v₀² + |v|²)` and
/// `‖(√(1−w₁²) − √(1−w₂²)) + i(w₁−w₂)·σ‖² ≤ 6(|w₁|² + |w₂|²)` for `|v|, |wᵢ| ≤ 1`.
pub fn pauli_bounds(draws: usize, seed: u64) -> Result<[SuiteCheck; 2]> {
    let mut rng = rng_for(seed, 3);
    let mut first = Tally::bound("Pauli norm bound, constant 2");
    let mut second = Tally::bound("Pauli difference bound, constant 6");
    for _ in 0..draws {
        let v0 = rng.random_range(-1.0..=1.0);
        let v = random_in_ball(&mut rng, 1.0);
        let norm = pauli_matrix(v0, &v).singular_values().max();
        first.le(norm * norm, 2.0 * (v0 * v0 + v.norm_squared()));
        let (w1, w2) = (random_in_ball(&mut rng, 1.0), random_in_ball(&mut rng, 1.0));
        let d0 = (1.0 - w1.norm_squared()).sqrt() - (1.0 - w2.norm_squared()).sqrt();
        let norm = pauli_matrix(d0, &(w1 - w2)).singular_values().max();
        second.le(norm * norm, 6.0 * (w1.norm_squared() + w2.norm_squared()));
    }
    Ok([first.finish(), second.finish()])
}

/// A group element within distance one of the identity has `s = +1` and
/// `|A| ≤ ‖U − 1‖`.
pub fn sign_from_distance(draws: usize, seed: u64) -> Result<SuiteCheck> {
    let mut rng = rng_for(seed, 4);
    let mut tally = Tally::bound("sign and vector part near the identity");
    for _ in 0..draws {
        // ‖e^{iaσ} − 1‖ = 2 sin(a/2) ≤ 1 for a ≤ π/3
        let angle = rng.random_range(-std::f64::consts::FRAC_PI_3..=std::f64::consts::FRAC_PI_3);
        let u = Su2::from_axis_angle(random_unit(&mut rng), angle);
        let dist = u.dist_to_identity();
        if u.sign().value() < 0.0 {
            tally.holds(false);
        } else {
            tally.le(u.vector().norm(), dist);
        }
    }
    Ok(tally.finish())
}

// ---------------------------------------------------------------- small fields

/// Shapes of random fine configurations used to populate small-field sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfigFamily {
    /// Independent rotations per site.
    Independent,
    /// A rotation angle growing linearly across the lattice.
    Ramp,
    /// Rotations accumulated along a path through the sites.
    Walk,
}

/// Random fine configuration with `small_field_sup ≤ eps`. The amplitude
/// starts at `eps` and shrinks by 0.9 until the bound holds.
pub fn sample_fine(geom: &LatticeGeometry, eps: f64, family: ConfigFamily, rng: &mut ChaCha8Rng) -> FineConfig {
    let global = random_su2(rng);
    let n = geom.num_sites();
    let axes: Vec<Vec3> = (0..n).map(|_| random_unit(rng)).collect();
    let fracs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let slope = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
    let build = |theta: f64| -> FineConfig {
        let sites = match family {
            ConfigFamily::Independent => (0..n)
                .map(|i| Su2::from_axis_angle(axes[i], fracs[i] * theta).mul(&global))
                .collect(),
            ConfigFamily::Ramp => (0..n)
                .map(|i| {
                    let x = geom.site(i);
                    let angle = theta * (slope[0] * x[0] as f64 + slope[1] * x[1] as f64);
                    Su2::from_axis_angle(axes[0], angle).mul(&global)
                })
                .collect(),
            ConfigFamily::Walk => {
                let mut out = vec![global; n];
                let mut current = global;
                for (step, i) in (0..n).enumerate() {
                    if step > 0 {
                        current = Su2::from_axis_angle(axes[i], fracs[i] * theta).mul(&current);
                    }
                    out[i] = current;
                }
                out
            }
        };
        FineConfig { sites }
    };
    let mut theta = eps;
    loop {
        let u = build(theta);
        if small_field_sup(geom, &u) <= eps {
            return u;
        }
        theta *= 0.9;
    }
}

const FAMILIES: [ConfigFamily; 3] = [ConfigFamily::Independent, ConfigFamily::Ramp, ConfigFamily::Walk];

/// Results of the small-field checks on sampled fine configurations.
#[derive(Clone, Debug, Serialize)]
pub struct SmallFieldChecks {
    pub chain: SuiteCheck,
    pub positivity: SuiteCheck,
    pub fluctuation_l: SuiteCheck,
    pub fluctuation_l2: SuiteCheck,
    /// Largest `sup‖U′ − 1‖ / (Lε)` seen; the two bounds above are `4c` and
    /// `4cL` times this scale.
    pub fluctuation_scale: f64,
}

/// For `U` with small-field sup `ε`:
/// `‖U(x)U(x′)* − 1‖ ≤ 2Lε` inside each box; raw block averages are nonzero
/// when `ε ≤ 1/(4L)`; and the fluctuation `U′ = U·C(U)*` satisfies
/// `sup‖U′ − 1‖ ≤ 4cLε` (and the weaker `4cL²ε`).
pub fn small_field_checks(geom: &LatticeGeometry, draws: usize, seed: u64) -> Result<SmallFieldChecks> {
    let mut rng = rng_for(seed, 5);
    let l = geom.l() as f64;
    let c = sqrt_lemma_constant();
    let mut chain = Tally::bound("chain bound 2Lε within a box");
    let mut positivity = Tally::bound("block average nonzero for ε ≤ 1/(4L)");
    let mut fl = Tally::bound("fluctuation bound 4cLε");
    let mut fl2 = Tally::bound("fluctuation bound 4cL²ε");
    let mut scale: f64 = 0.0;
    for draw in 0..draws {
        let family = FAMILIES[draw % 3];
        let target = rng.random_range(0.0..=0.3);
        let u = sample_fine(geom, target, family, &mut rng);
        let eps = small_field_sup(geom, &u);
        for k in 0..geom.num_boxes() {
            let sites = geom.box_sites(k);
            for &x in sites {
                for &y in sites {
                    chain.le(u.sites[x].mul_conj(&u.sites[y]).dist_to_identity(), 2.0 * l * eps);
                }
            }
        }
        let small = sample_fine(geom, 1.0 / (4.0 * l), family, &mut rng);
        let eps = small_field_sup(geom, &small);
        let avg = block_average(geom, &small);
        // a zero small-field sup makes every raw average exactly one
        positivity.holds(avg.raw.iter().all(|r| r.c > 0.0));
        let prime = fluctuation(geom, &small, &avg.avg);
        let sup = prime.sites.iter().map(Su2::dist_to_identity).fold(0.0, f64::max);
        if eps > 0.0 {
            scale = scale.max(sup / (l * eps));
        }
        fl.le(sup, 4.0 * c * l * eps);
        fl2.le(sup, 4.0 * c * l * l * eps);
    }
    Ok(SmallFieldChecks {
        chain: chain.finish(),
        positivity: positivity.finish(),
        fluctuation_l: fl.finish(),
        fluctuation_l2: fl2.finish(),
        fluctuation_scale: scale,
    })
}

// ---------------------------------------------------------------- operators

fn rotation(geom: &LatticeGeometry, values: Vec<Vec3>) -> Result<RotationField> {
    RotationField::new(&VectorConfig::new(geom, values)?)
}

/// `sup_x ‖R*_A(x)‖ ≤ 2` for `|A| ≤ 1`, and
/// `sup_x ‖R*_{A₁}(x) − R*_{A₂}(x)‖ ≤ 2‖A₁ − A₂‖∞` for `|Aᵢ| ≤ 1/2`.
pub fn rotation_bounds(geom: &LatticeGeometry, draws: usize, seed: u64) -> Result<[SuiteCheck; 2]> {
    let mut rng = rng_for(seed, 6);
    let mut norm = Tally::bound("R* sup-norm bound 2");
    let mut lip = Tally::bound("R* Lipschitz bound 2");
    let n = geom.num_sites();
    for _ in 0..draws {
        let a: Vec<Vec3> = (0..n).map(|_| random_in_ball(&mut rng, 1.0)).collect();
        let rot = rotation(geom, a)?;
        let sup = (0..n).map(|x| spectral3(&rot, x)).fold(0.0, f64::max);
        norm.le(sup, 2.0);
        let radius = rng.random_range(0.0..=0.5);
        let a1: Vec<Vec3> = (0..n).map(|_| random_in_ball(&mut rng, radius)).collect();
        let a2: Vec<Vec3> = if rng.random_bool(0.5) {
            (0..n).map(|_| random_in_ball(&mut rng, radius)).collect()
        } else {
            // nearby pair
            a1.iter()
                .map(|v| {
                    let w = v + random_in_ball(&mut rng, 1e-3);
                    if w.norm() > radius { w * (radius / w.norm()) } else { w }
                })
                .collect()
        };
        let dist = sup_distance(&a1, &a2);
        let (r1, r2) = (rotation(geom, a1)?, rotation(geom, a2)?);
        let diff = (0..n)
            .map(|x| (r1.adjoint_matrix(x) - r2.adjoint_matrix(x)).singular_values().max())
            .fold(0.0, f64::max);
        lip.le(diff, 2.0 * dist);
    }
    Ok([norm.finish(), lip.finish()])
}

fn spectral3(rot: &RotationField, x: usize) -> f64 {
    rot.adjoint_matrix(x).singular_values().max()
}

/// Largest `|B(b)|` over bonds, `B = ∂V(y_b)`.
fn coarse_bond_sup(geom: &LatticeGeometry, v: &CoarseConfig) -> f64 {
    geom.bonds()
        .iter()
        .map(|b| {
            v.sites[geom.box_index(b.minus)]
                .mul_conj(&v.sites[geom.box_index(b.plus)])
                .vector()
                .norm()
        })
        .fold(0.0, f64::max)
}

/// Results of the remainder checks.
#[derive(Clone, Debug, Serialize)]
pub struct RemainderChecks {
    pub bound: SuiteCheck,
    pub lipschitz: SuiteCheck,
    pub identity: SuiteCheck,
}

/// `‖∂*r‖∞ ≤ 24(ε² + ε₁)` and `‖∂*r_{A₁} − ∂*r_{A₂}‖∞ ≤ 96(ε + ε₁)‖A₁ − A₂‖∞`
/// over random ensembles with `ε, ε₁ ≤ 1/2`, where `ε` is the largest `|A|`
/// and `ε₁` the largest `|B|` actually drawn. Also checks `w = ∂A + r`.
pub fn remainder_checks(geom: &LatticeGeometry, draws: usize, seed: u64) -> Result<RemainderChecks> {
    let mut rng = rng_for(seed, 7);
    let mut bound = Tally::bound("remainder divergence bound 24(ε²+ε₁)");
    let mut lip = Tally::bound("remainder Lipschitz bound 96(ε+ε₁)");
    let mut ident = Tally::identity("bond field equals ∂A + r", IDENTITY_TOLERANCE);
    for _ in 0..draws {
        let eps = rng.random_range(0.0..=0.5);
        let eps1 = rng.random_range(0.0..=0.5);
        let (v, a1) = sample_configs(geom, eps1, eps, rng.random())?;
        let a2 = if rng.random_bool(0.5) {
            sample_configs(geom, 0.0, eps, rng.random())?.1
        } else {
            let values = a1
                .values
                .iter()
                .map(|x| {
                    let w = x + random_in_ball(&mut rng, 1e-3 * eps.max(1e-6));
                    if w.norm() > eps { w * (eps / w.norm()) } else { w }
                })
                .collect();
            VectorConfig::new(geom, values)?
        };
        let eps_b = coarse_bond_sup(geom, &v);
        let eps_a = a1.sup_norm().max(a2.sup_norm());
        let r1 = remainder_field(geom, &a1, &v)?;
        let r2 = remainder_field(geom, &a2, &v)?;
        let (d1, d2) = (d_adjoint(geom, &r1), d_adjoint(geom, &r2));
        bound.le(sup_norm(&d1), 24.0 * (a1.sup_norm().powi(2) + eps_b));
        lip.le(sup_distance(&d1, &d2), 96.0 * (eps_a + eps_b) * sup_distance(&a1.values, &a2.values));
        let w = bond_w_field(geom, &a1, &v)?;
        let da = d_forward(geom, &a1.values);
        let res = (0..geom.num_bonds()).map(|b| (w.w[b] - da[b] - r1[b]).norm()).fold(0.0, f64::max);
        ident.residual(res);
    }
    Ok(RemainderChecks {
        bound: bound.finish(),
        lipschitz: lip.finish(),
        identity: ident.finish(),
    })
}

/// For `|Aⱼ| ≤ ε ≤ 1/2`, `|Cⱼ| ≤ ε̃ ≤ 1/2` with `δ(A₀C₀) = 1 − A₀C₀`:
/// `δ ≤ ε² + ε̃²` and `|δ₂ − δ₁| ≤ 2ε|A₂−A₁| + 2ε̃|C₂−C₁|`.
pub fn delta_estimates(draws: usize, seed: u64) -> Result<[SuiteCheck; 2]> {
    let mut rng = rng_for(seed, 8);
    let mut first = Tally::bound("δ bound ε²+ε̃²");
    let mut second = Tally::bound("δ Lipschitz bound");
    let delta = |a: &Vec3, c: &Vec3| 1.0 - (1.0 - a.norm_squared()).sqrt() * (1.0 - c.norm_squared()).sqrt();
    for _ in 0..draws {
        let (e, et) = (rng.random_range(0.0..=0.5), rng.random_range(0.0..=0.5));
        let a = [random_in_ball(&mut rng, e), random_in_ball(&mut rng, e)];
        let c = [random_in_ball(&mut rng, et), random_in_ball(&mut rng, et)];
        for aj in &a {
            for cj in &c {
                first.le(delta(aj, cj), e * e + et * et);
            }
        }
        second.le(
            (delta(&a[1], &c[1]) - delta(&a[0], &c[0])).abs(),
            2.0 * e * (a[1] - a[0]).norm() + 2.0 * et * (c[1] - c[0]).norm(),
        );
    }
    Ok([first.finish(), second.finish()])
}

/// Results of the checks on `D_A = QGR*_AQ*`.
#[derive(Clone, Debug, Serialize)]
pub struct OperatorChecks {
    /// `‖D_A⁻¹‖ ≤ ‖D_0⁻¹‖ / (1 − q_A)` with `q_A` the series contraction.
    pub inverse_bound: SuiteCheck,
    pub resolvent: SuiteCheck,
    /// Largest and smallest sampled `‖D_A⁻¹‖∞`.
    pub inverse_norm_range: (f64, f64),
    pub d0_inverse_norm: f64,
    pub green_norm: f64,
}

/// Uniform bound on `‖D_A⁻¹‖∞` over sampled admissible `A`, and the
/// resolvent-difference bound
/// `‖D_{A₁}⁻¹ − D_{A₂}⁻¹‖ ≤ 2‖G‖‖D_{A₁}⁻¹‖‖D_{A₂}⁻¹‖‖A₁ − A₂‖∞`.
pub fn operator_checks(pack: &GreenPack, eps: f64, draws: usize, seed: u64) -> Result<OperatorChecks> {
    let geom = &pack.geom;
    let mut rng = rng_for(seed, 9);
    let mut inv = Tally::bound("D_A inverse within the series bound");
    let mut res = Tally::bound("resolvent difference bound");
    let identity_v = CoarseConfig::constant(geom, Su2::identity());
    let d0 = block_row_sum(&pack.d0_inverse_vector(), 3);
    let g = max_row_sum(pack.g());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut previous: Option<(Vec<Vec3>, DMatrix<f64>, f64)> = None;
    for _ in 0..draws {
        let a = sample_admissible(geom, &identity_v, eps, &mut rng)?;
        let rot = RotationField::new(&a)?;
        let direct = d_operator_inverse(pack, &rot, InverseMethod::Direct)?;
        let series = d_operator_inverse(pack, &rot, InverseMethod::Neumann)?;
        let q = series.contraction.unwrap_or(1.0);
        let norm = linf_operator_norm(&direct.kernel);
        lo = lo.min(norm);
        hi = hi.max(norm);
        inv.le(norm, d0 / (1.0 - q));
        if let Some((prev_a, prev_inv, prev_norm)) = &previous {
            let diff = block_row_sum(&(&direct.kernel.matrix - prev_inv), 3);
            res.le(diff, 2.0 * g * norm * prev_norm * sup_distance(&a.values, prev_a));
        }
        previous = Some((a.values, direct.kernel.matrix, norm));
    }
    Ok(OperatorChecks {
        inverse_bound: inv.finish(),
        resolvent: res.finish(),
        inverse_norm_range: (lo, hi),
        d0_inverse_norm: d0,
        green_norm: g,
    })
}

/// `‖G(Ω)‖∞` at `m` and `m + 1` agree within `tolerance` (relative).
pub fn green_norm_stability(l: usize, m: usize, tolerance: f64) -> Result<(SuiteCheck, [f64; 2])> {
    let g1 = linf_operator_norm(&assemble_green(&LatticeGeometry::new(l, m)?)?);
    let g2 = linf_operator_norm(&assemble_green(&LatticeGeometry::new(l, m + 1)?)?);
    let mut tally = Tally::identity("G sup-norm stable under refinement", tolerance);
    tally.residual((g1 - g2).abs() / g1);
    Ok((tally.finish(), [g1, g2]))
}

// ---------------------------------------------------------------- algebra

fn random_field(rng: &mut ChaCha8Rng, len: usize) -> Vec<Vec3> {
    (0..len)
        .map(|_| Vec3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
        .collect()
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Adjointness of `∂` and `Q` (with the `L²` coarse weight), `QQ* = 1`, the
/// Neumann stencil of `−∂*∂`, on random fields.
pub fn algebra_checks(geom: &LatticeGeometry, draws: usize, seed: u64) -> Result<Vec<SuiteCheck>> {
    let mut rng = rng_for(seed, 10);
    let mut d_adj = Tally::identity("⟨∂f, g⟩ = ⟨f, ∂*g⟩", IDENTITY_TOLERANCE);
    let mut q_adj = Tally::identity("⟨Qf, g⟩ = ⟨f, Q*g⟩ with L² weight", IDENTITY_TOLERANCE);
    let mut qq = Tally::identity("QQ* = 1", IDENTITY_TOLERANCE);
    let mut stencil = Tally::identity("−∂*∂ matches the Neumann stencil", IDENTITY_TOLERANCE);
    let n = geom.n() as i64;
    for _ in 0..draws {
        let f = random_field(&mut rng, geom.num_sites());
        let g = random_field(&mut rng, geom.num_bonds());
        let lhs = d_forward(geom, &f).iter().zip(&g).map(|(a, b)| a.dot(b)).sum::<f64>();
        d_adj.residual(relative(lhs, inner_fine(&f, &d_adjoint(geom, &g))));

        let h = random_field(&mut rng, geom.num_boxes());
        q_adj.residual(relative(inner_coarse(geom, &q_average(geom, &f), &h), inner_fine(&f, &q_adjoint(geom, &h))));
        qq.residual(sup_distance(&q_average(geom, &q_adjoint(geom, &h)), &h));

        let lap = d_adjoint(geom, &d_forward(geom, &f));
        let mut worst: f64 = 0.0;
        for i in 0..geom.num_sites() {
            let x = geom.site(i);
            let mut s = Vec3::zeros();
            for d in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
                let y = [x[0] + d[0], x[1] + d[1]];
                if (0..n).contains(&y[0]) && (0..n).contains(&y[1]) {
                    s += f[i] - f[geom.index(y).unwrap()];
                }
            }
            worst = worst.max((lap[i] - s).norm());
        }
        stencil.residual(worst);
    }
    Ok(vec![d_adj.finish(), q_adj.finish(), qq.finish(), stencil.finish()])
}

// ---------------------------------------------------------------- suite

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub weighted_sum_draws: usize,
    pub sqrt_draws: usize,
    pub pauli_draws: usize,
    pub config_draws: usize,
    pub remainder_draws: usize,
    pub operator_draws: usize,
    pub algebra_draws: usize,
    /// Small-field radius for the `D_A` samples.
    pub eps: f64,
    /// Relative tolerance for the `‖G‖∞` refinement comparison.
    pub green_stability: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            weighted_sum_draws: 10_000,
            sqrt_draws: 1_000,
            pauli_draws: 10_000,
            config_draws: 300,
            remainder_draws: 1_000,
            operator_draws: 100,
            algebra_draws: 20,
            eps: 0.05,
            green_stability: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub sqrt_constant: f64,
    pub fluctuation_scale: f64,
    pub d_inverse_norm_range: (f64, f64),
    pub d0_inverse_norm: f64,
    pub green_norms: [f64; 2],
    pub checks: Vec<SuiteCheck>,
    pub pass: bool,
}

/// Runs every check on the geometry `(L, m)`; the refinement comparison uses
/// `(L, m)` and `(L, m + 1)`.
pub fn lemma_suite(pack: &GreenPack, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let geom = &pack.geom;
    let seed = cfg.seed;
    let mut checks = vec![
        weighted_sum_closure(cfg.weighted_sum_draws, seed)?,
        square_root_bound(cfg.sqrt_draws, seed)?,
    ];
    checks.extend(pauli_bounds(cfg.pauli_draws, seed)?);
    checks.push(sign_from_distance(cfg.pauli_draws, seed)?);
    let small = small_field_checks(geom, cfg.config_draws, seed)?;
    checks.extend([small.chain, small.positivity, small.fluctuation_l, small.fluctuation_l2]);
    checks.extend(rotation_bounds(geom, cfg.config_draws, seed)?);
    let rem = remainder_checks(geom, cfg.remainder_draws, seed)?;
    checks.extend([rem.bound, rem.lipschitz, rem.identity]);
    checks.extend(delta_estimates(cfg.pauli_draws, seed)?);
    let ops = operator_checks(pack, cfg.eps, cfg.operator_draws, seed)?;
    checks.extend([ops.inverse_bound, ops.resolvent]);
    let (stability, green_norms) = green_norm_stability(geom.l(), geom.m(), cfg.green_stability)?;
    checks.push(stability);
    checks.extend(algebra_checks(geom, cfg.algebra_draws, seed)?);
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport {
        sqrt_constant: sqrt_lemma_constant(),
        fluctuation_scale: small.fluctuation_scale,
        d_inverse_norm_range: ops.inverse_norm_range,
        d0_inverse_norm: ops.d0_inverse_norm,
        green_norms,
        checks,
        pass,
    })
}

//! Random walk expansions on truncated lattices in one or two dimensions.
//!
//! A strictly positive operator `A` is approximately inverted by gluing local
//! inverses on overlapping cubes with a smooth partition of unity,
//! `C = Σ_j h_j C_j h_j`. Writing `AC = 1 − R`, the inverse is the series
//! `A⁻¹ = Σ_k C R^k`, convergent once `‖R‖ < 1`. Everything here is
//! matrix-free apart from the small dense cube inverses.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::green::{decay_fit, log_linear_fit, DecayFit, OperatorKernel, Window};
use crate::lattice::Site;
use crate::linalg::{power_iteration, spectral_norm, BandedCholesky, Csr};

/// Profile `h` with `h = 1` on `|t| ≤ 1/3`, `h = 0` on `|t| ≥ 2/3` and
/// `Σ_j h(t − j)² = 1`, built from the cubic smoothstep.
pub fn profile(t: f64) -> f64 {
    let u = (3.0 * (2.0 / 3.0 - t.abs())).clamp(0.0, 1.0);
    (u * u * (3.0 - 2.0 * u)).sqrt()
}

/// Analytic derivative of [`profile`] (zero where the profile is flat).
pub fn profile_derivative(t: f64) -> f64 {
    let u = 3.0 * (2.0 / 3.0 - t.abs());
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    -3.0 * t.signum() * 3.0 * (1.0 - u) / (3.0 - 2.0 * u).sqrt()
}

/// One closed cube `|x − jM̃|∞ ≤ M̃` of the cover, clipped to the domain.
#[derive(Clone, Debug)]
pub struct Cube {
    pub label: [i64; 2],
    /// Domain indices of the cube sites.
    pub sites: Vec<usize>,
    /// `h_j` on `sites`.
    pub weights: Vec<f64>,
}

/// Cover of a truncated domain by closed `2M̃`-cubes centred at `jM̃`, with
/// the matching partition of unity.
#[derive(Clone, Debug)]
pub struct BoxCover {
    pub half_size: i64,
    pub dim: usize,
    pub domain: Window,
    pub cubes: Vec<Cube>,
    /// Position of each domain site inside each cube containing it.
    membership: Vec<Vec<(usize, usize)>>,
}

fn check_domain(dim: usize, domain: &Window) -> Result<()> {
    match dim {
        1 if domain.side[1] == 1 && domain.lo[1] == 0 => Ok(()),
        2 => Ok(()),
        1 => Err(invalid("domain", "a one-dimensional domain has a single row at x₁ = 0")),
        _ => Err(invalid("d", format!("dimension must be 1 or 2, got {dim}"))),
    }
}

impl BoxCover {
    pub fn new(half_size: i64, dim: usize, domain: Window) -> Result<Self> {
        if half_size < 2 {
            return Err(invalid("M̃", format!("box half-size must be at least 2, got {half_size}")));
        }
        check_domain(dim, &domain)?;
        let range = |k: usize| {
            if k >= dim {
                return 0..=0;
            }
            let lo = domain.lo[k];
            let hi = lo + domain.side[k] as i64 - 1;
            lo.div_euclid(half_size) - 1..=hi.div_euclid(half_size) + 2
        };
        let mut cubes = Vec::new();
        let mut membership = vec![Vec::new(); domain.len()];
        for j0 in range(0) {
            for j1 in range(1) {
                let label = [j0, j1];
                let mut sites = Vec::new();
                let mut weights = Vec::new();
                for i in 0..domain.len() {
                    let x = domain.site(i);
                    if (0..dim).all(|k| (x[k] - label[k] * half_size).abs() <= half_size) {
                        sites.push(i);
                        weights.push(partition_weight(x, label, half_size, dim));
                    }
                }
                if weights.iter().any(|&w| w > 0.0) {
                    let c = cubes.len();
                    for (p, &i) in sites.iter().enumerate() {
                        membership[i].push((c, p));
                    }
                    cubes.push(Cube { label, sites, weights });
                }
            }
        }
        Ok(BoxCover {
            half_size,
            dim,
            domain,
            cubes,
            membership,
        })
    }

    /// `h_j(x)` for cube `c`, zero off the cube.
    pub fn weight(&self, c: usize, i: usize) -> f64 {
        self.membership[i]
            .iter()
            .find(|&&(cc, _)| cc == c)
            .map_or(0.0, |&(_, p)| self.cubes[c].weights[p])
    }

    /// `max_x |Σ_j h_j(x)² − 1|`.
    pub fn partition_defect(&self) -> f64 {
        (0..self.domain.len())
            .map(|i| {
                let s: f64 = self.membership[i]
                    .iter()
                    .map(|&(c, p)| self.cubes[c].weights[p].powi(2))
                    .sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Whether the cubes with labels `i` and `j` share a lattice site.
    pub fn overlap(&self, a: usize, b: usize) -> bool {
        let (ca, cb) = (&self.cubes[a], &self.cubes[b]);
        ca.sites.iter().any(|i| cb.sites.binary_search(i).is_ok())
    }
}

/// `h_j(x) = Π_k h(x_k/M̃ − j_k)`.
pub fn partition_weight(x: Site, label: [i64; 2], half_size: i64, dim: usize) -> f64 {
    (0..dim)
        .map(|k| profile(x[k] as f64 / half_size as f64 - label[k] as f64))
        .product()
}

fn is_symmetric(a: &Csr) -> bool {
    let mut entries = HashMap::with_capacity(a.vals.len());
    for i in 0..a.dim {
        for (c, v) in a.row(i) {
            entries.insert((i, c), v);
        }
    }
    entries
        .iter()
        .all(|(&(i, c), &v)| (entries.get(&(c, i)).copied().unwrap_or(0.0) - v).abs() <= 1e-14 * v.abs().max(1.0))
}

/// Matrix-free `C` and `R` for a symmetric operator and a box cover.
pub struct Expansion<'a> {
    pub a: &'a Csr,
    pub cover: BoxCover,
    local: Vec<Cholesky<f64, Dyn>>,
}

impl<'a> Expansion<'a> {
    pub fn new(a: &'a Csr, cover: BoxCover) -> Result<Self> {
        if a.dim != cover.domain.len() {
            return Err(invalid("A", "operator dimension differs from the domain size"));
        }
        if !is_symmetric(a) {
            return Err(invalid("A", "operator is not symmetric"));
        }
        let local = cover
            .cubes
            .iter()
            .map(|cube| {
                a.restrict_dense(&cube.sites).cholesky().ok_or_else(|| {
                    Error::SingularOperator(format!("cube {:?} block is not positive definite", cube.label))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Expansion { a, cover, local })
    }

    fn local_solve(&self, c: usize, rhs: Vec<f64>) -> Vec<f64> {
        self.local[c].solve(&DVector::from_vec(rhs)).data.into()
    }

    /// `Cv = Σ_j h_j C_j (h_j v)`.
    pub fn apply_c(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (c, cube) in self.cover.cubes.iter().enumerate() {
            let rhs = cube.sites.iter().zip(&cube.weights).map(|(&i, &h)| h * v[i]).collect();
            let s = self.local_solve(c, rhs);
            for ((&i, &h), sv) in cube.sites.iter().zip(&cube.weights).zip(s) {
                out[i] += h * sv;
            }
        }
        out
    }

    /// `Rv = Σ_j [h_j, A] C_j (h_j v)`, which equals `v − ACv`.
    pub fn apply_r(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (c, cube) in self.cover.cubes.iter().enumerate() {
            let rhs = cube.sites.iter().zip(&cube.weights).map(|(&i, &h)| h * v[i]).collect();
            let s = self.local_solve(c, rhs);
            for ((&col, &hc), sv) in cube.sites.iter().zip(&cube.weights).zip(s) {
                // A symmetric: A(row, col) = A(col, row)
                for (row, a) in self.a.row(col) {
                    let hr = self.cover.weight(c, row);
                    out[row] += (hr - hc) * a * sv;
                }
            }
        }
        out
    }

    /// `Rᵀv = Σ_j h_j C_j □_j [A, h_j] v`.
    pub fn apply_rt(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (c, cube) in self.cover.cubes.iter().enumerate() {
            let rhs = cube
                .sites
                .iter()
                .zip(&cube.weights)
                .map(|(&col, &hc)| {
                    self.a
                        .row(col)
                        .map(|(row, a)| (self.cover.weight(c, row) - hc) * a * v[row])
                        .sum()
                })
                .collect();
            let s = self.local_solve(c, rhs);
            for ((&i, &h), sv) in cube.sites.iter().zip(&cube.weights).zip(s) {
                out[i] += h * sv;
            }
        }
        out
    }

    /// `‖R‖` by power iteration on `RᵀR`.
    pub fn r_norm(&self, iters: usize) -> f64 {
        power_iteration(|x| self.apply_rt(&self.apply_r(x)), self.a.dim, iters)
            .max(0.0)
            .sqrt()
    }

    /// Operator norms of the blocks `R_{i,j}`: the diagonal commutator
    /// `□_j [h_j, A] □_j` and the off-diagonal leakage `(□_j − 1) h_i² A h_j`.
    pub fn block_norms(&self) -> Vec<BlockNorm> {
        let cover = &self.cover;
        let mut out = Vec::new();
        for (j, cube) in cover.cubes.iter().enumerate() {
            let pos: HashMap<usize, usize> = cube.sites.iter().enumerate().map(|(p, &i)| (i, p)).collect();
            let n = cube.sites.len();
            let mut diag = DMatrix::zeros(n, n);
            let mut leak: HashMap<usize, HashMap<(usize, usize), f64>> = HashMap::new();
            for (p, (&col, &hc)) in cube.sites.iter().zip(&cube.weights).enumerate() {
                for (row, a) in self.a.row(col) {
                    match pos.get(&row) {
                        Some(&q) => diag[(q, p)] += (cube.weights[q] - hc) * a,
                        None if hc != 0.0 => {
                            for &(i, qi) in &cover.membership[row] {
                                let hi = cover.cubes[i].weights[qi];
                                if hi != 0.0 {
                                    *leak.entry(i).or_default().entry((qi, p)).or_insert(0.0) += hi * hi * a * hc;
                                }
                            }
                        }
                        None => {}
                    }
                }
            }
            out.push(BlockNorm {
                row_cube: j,
                col_cube: j,
                norm: spectral_norm(&diag),
            });
            for (i, entries) in leak {
                let rows: Vec<usize> = {
                    let mut r: Vec<usize> = entries.keys().map(|k| k.0).collect();
                    r.sort_unstable();
                    r.dedup();
                    r
                };
                let mut m = DMatrix::zeros(rows.len(), n);
                for ((q, p), v) in entries {
                    m[(rows.binary_search(&q).unwrap(), p)] += v;
                }
                out.push(BlockNorm {
                    row_cube: i,
                    col_cube: j,
                    norm: spectral_norm(&m),
                });
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockNorm {
    pub row_cube: usize,
    pub col_cube: usize,
    pub norm: f64,
}

/// `2^d m⁻² (sup_i Σ_j ‖R_{i,j}‖)^{1/2} (sup_j Σ_i ‖R_{i,j}‖)^{1/2}`.
pub fn block_certificate(blocks: &[BlockNorm], num_cubes: usize, dim: usize, mass_sq: f64) -> f64 {
    let mut rows = vec![0.0; num_cubes];
    let mut cols = vec![0.0; num_cubes];
    for b in blocks {
        rows[b.row_cube] += b.norm;
        cols[b.col_cube] += b.norm;
    }
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    2f64.powi(dim as i32) / mass_sq * (sup(&rows) * sup(&cols)).sqrt()
}

/// `√(sup_x Σ_{x'} |T(x,x')|) · √(sup_{x'} Σ_x |T(x,x')|)`.
pub fn schur_bound(t: &DMatrix<f64>) -> f64 {
    let row = t.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let col = t.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    (row * col).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeColumn {
    pub source: Site,
    /// `Σ_{k≤order} C R^k e_source`.
    pub column: Vec<f64>,
    /// `max |column − A⁻¹ e_source|` against a banded Cholesky solve.
    pub reference_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RwExpansion {
    pub half_size: i64,
    pub dim: usize,
    pub order: usize,
    pub num_cubes: usize,
    /// Smallest eigenvalue of `A`.
    pub mass_sq: f64,
    /// Sharp `‖R‖` from power iteration.
    pub r_norm: f64,
    /// Block-norm certificate for `‖R‖`.
    pub r_certificate: f64,
    pub max_diagonal_block: f64,
    pub max_offdiagonal_block: f64,
    /// `max_p ‖A x_K − e_p‖∞` for `K = 0..=order`.
    pub residuals: Vec<f64>,
    /// Geometric rate of the residuals, fitted over orders whose residual
    /// is above the roundoff floor.
    pub residual_rate: f64,
    /// Exponential decay of the first probe column.
    pub decay: Option<DecayFit>,
    pub probes: Vec<ProbeColumn>,
    pub max_reference_error: f64,
}

/// Residuals at or below this are roundoff and excluded from the rate fit.
pub const RESIDUAL_FLOOR: f64 = 1e-13;

/// Smallest eigenvalue of a symmetric positive definite operator by power
/// iteration on its inverse.
pub fn smallest_eigenvalue(chol: &BandedCholesky, iters: usize) -> f64 {
    1.0 / power_iteration(|x| chol.solve(x), chol.dim(), iters)
}

/// Random walk expansion of `A⁻¹` on `domain`, evaluated on the columns of
/// the `sources`.
pub fn rw_inverse(
    a: &Csr,
    domain: Window,
    dim: usize,
    half_size: i64,
    order: usize,
    sources: &[Site],
) -> Result<RwExpansion> {
    let cover = BoxCover::new(half_size, dim, domain)?;
    let chol = BandedCholesky::factor(a)
        .map_err(|_| Error::Precondition("A is not strictly positive".into()))?;
    let mass_sq = smallest_eigenvalue(&chol, 300);
    let exp = Expansion::new(a, cover)?;
    let r_norm = exp.r_norm(200);
    if r_norm >= 1.0 {
        return Err(Error::NoConvergence {
            context: format!("random walk expansion with box half-size {half_size}"),
            factor: r_norm,
        });
    }
    let blocks = exp.block_norms();
    let r_certificate = block_certificate(&blocks, exp.cover.cubes.len(), dim, mass_sq);
    let (mut max_diag, mut max_off): (f64, f64) = (0.0, 0.0);
    for b in &blocks {
        if b.row_cube == b.col_cube {
            max_diag = max_diag.max(b.norm);
        } else {
            max_off = max_off.max(b.norm);
        }
    }
    let mut residuals = vec![0.0f64; order + 1];
    let mut probes = Vec::with_capacity(sources.len());
    for &source in sources {
        let p = domain
            .index(source)
            .ok_or_else(|| Error::OutOfDomain {
                what: "probe source",
                value: format!("{source:?}"),
            })?;
        let mut unit = vec![0.0; a.dim];
        unit[p] = 1.0;
        let mut power = unit.clone();
        let mut column = vec![0.0; a.dim];
        for (k, res) in residuals.iter_mut().enumerate() {
            if k > 0 {
                power = exp.apply_r(&power);
            }
            for (c, t) in column.iter_mut().zip(exp.apply_c(&power)) {
                *c += t;
            }
            let ax = a.mul_vec(&column);
            let r = ax.iter().zip(&unit).map(|(x, e)| (x - e).abs()).fold(0.0, f64::max);
            *res = res.max(r);
        }
        let exact = chol.solve(&unit);
        let reference_error = column.iter().zip(&exact).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        probes.push(ProbeColumn {
            source,
            column,
            reference_error,
        });
    }
    let above_floor: Vec<(f64, f64)> = residuals
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r > RESIDUAL_FLOOR)
        .map(|(k, &r)| (k as f64, r))
        .collect();
    let residual_rate = log_linear_fit(&above_floor).map_or(0.0, |(_, rate, _)| (-rate).exp());
    let decay = probes.first().and_then(|p| {
        let row = DMatrix::from_row_slice(1, p.column.len(), &p.column);
        let cols = (0..domain.len()).map(|i| domain.site(i)).collect();
        decay_fit(&OperatorKernel::scalar(row, vec![p.source], cols)).ok()
    });
    let max_reference_error = probes.iter().map(|p| p.reference_error).fold(0.0, f64::max);
    Ok(RwExpansion {
        half_size,
        dim,
        order,
        num_cubes: exp.cover.cubes.len(),
        mass_sq,
        r_norm,
        r_certificate,
        max_diagonal_block: max_diag,
        max_offdiagonal_block: max_off,
        residuals,
        residual_rate,
        decay,
        probes,
        max_reference_error,
    })
}

/// `−Δ + mass` with free (Neumann) closure on a one-dimensional chain.
pub fn chain_operator(lo: i64, len: usize, mass: f64) -> (Csr, Window) {
    let rows = (0..len)
        .map(|i| {
            let mut row = vec![(i, mass)];
            if i > 0 {
                row.push((i, 1.0));
                row.push((i - 1, -1.0));
            }
            if i + 1 < len {
                row.push((i, 1.0));
                row.push((i + 1, -1.0));
            }
            row
        })
        .collect();
    (
        Csr::from_rows(rows),
        Window {
            lo: [lo, 0],
            side: [len, 1],
        },
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct SrlProperty {
    pub name: &'static str,
    pub pass: bool,
    /// The fitted constant, or the offending value when the property fails.
    pub witness: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SrlReport {
    pub dim: usize,
    pub delta: f64,
    pub range: i64,
    pub c_delta: f64,
    pub k_const: f64,
    pub epsilon: f64,
    pub c_conv: f64,
    /// Location of the peak of the radial `b`; `b` decreases beyond it.
    pub m0: f64,
    /// Smallest `M̃` with `b(M̃x/3) ≤ b(x)` on the sampled range.
    pub scaling_threshold: Option<i64>,
    pub properties: Vec<SrlProperty>,
    pub pass: bool,
}

fn lattice_points(dim: usize, range: i64) -> Vec<[i64; 2]> {
    let second = if dim == 2 { -range..=range } else { 0..=0 };
    (-range..=range)
        .flat_map(|a| second.clone().map(move |b| [a, b]))
        .collect()
}

fn norm(x: [i64; 2]) -> f64 {
    ((x[0] * x[0] + x[1] * x[1]) as f64).sqrt()
}

/// Numerical check of the short-range-localizing properties of a radial
/// profile `a(|x|)` on `ℤ^d ∩ [−range, range]^d`.
///
/// Growth-type properties pass when the fitted quantity on the outer half of
/// the range does not exceed its value on the inner half, i.e. the bound has
/// saturated inside the sampled region.
pub fn srl_check(a: &dyn Fn(f64) -> f64, dim: usize, delta: f64, epsilon: f64, range: i64) -> Result<SrlReport> {
    if dim == 0 || dim > 2 {
        return Err(invalid("d", format!("dimension must be 1 or 2, got {dim}")));
    }
    if range < 8 {
        return Err(invalid("range", "range must be at least 8"));
    }
    let d = dim as f64;
    let b = |r: f64| (1.0 + r).powf(d + delta) * a(r);
    let pts = lattice_points(dim, range);
    let rmax = range as f64;
    let mut props = Vec::new();

    let min_a = pts.iter().map(|&x| a(norm(x))).fold(f64::INFINITY, f64::min);
    props.push(SrlProperty {
        name: "positivity",
        pass: min_a > 0.0,
        witness: min_a,
        detail: "minimum of a on the sampled range".into(),
    });

    let weighted = |r: f64| (1.0 + r).powf(2.0 * (d + delta)) * a(r);
    let (mut inner, mut outer): (f64, f64) = (0.0, 0.0);
    for &x in &pts {
        let r = norm(x);
        if r <= rmax / 2.0 {
            inner = inner.max(weighted(r));
        } else if r <= rmax {
            outer = outer.max(weighted(r));
        }
    }
    let c_delta = inner.max(outer);
    props.push(SrlProperty {
        name: "polynomial decay",
        pass: outer <= inner && c_delta.is_finite(),
        witness: c_delta,
        detail: format!("sup (1+|x|)^(2(d+δ)) a: inner half {inner:.4e}, outer half {outer:.4e}"),
    });

    let reach = (2.0 * d.sqrt()).floor() as i64;
    let shifts: Vec<[i64; 2]> = lattice_points(dim, reach)
        .into_iter()
        .filter(|&y| norm(y) <= 2.0 * d.sqrt() + 1e-12)
        .collect();
    // worst ratio on the ball |x| ≤ R/4 and on three shells beyond it
    let mut k_band = [0.0f64; 4];
    let last = rmax - reach as f64;
    for &x in &pts {
        let r = norm(x);
        if r > last {
            continue;
        }
        let bx = b(r);
        let worst = shifts
            .iter()
            .map(|y| b(norm([x[0] + y[0], x[1] + y[1]])) / bx)
            .fold(0.0, f64::max);
        let band = ((4.0 * r / rmax).ceil() as usize).clamp(1, 4) - 1;
        k_band[band] = k_band[band].max(worst);
    }
    let k_const = k_band.iter().copied().fold(0.0, f64::max);
    let [_, s1, s2, s3] = k_band;
    // bounded ratios saturate: the last shell grows less than the one before
    let saturating = s3 <= s2 || (s2 > s1 && s3 - s2 <= s2 - s1);
    props.push(SrlProperty {
        name: "shift ratio",
        pass: saturating && k_const.is_finite(),
        witness: k_const,
        detail: format!(
            "max b(x+y)/b(x) over |y| ≤ 2√d on shells up to R/2, 3R/4, R: {s1:.4e}, {s2:.4e}, {s3:.4e}"
        ),
    });

    // b^{*n} on the sampled grid, orders 2..=4
    let side = (2 * range + 1) as usize;
    let grid_index = |x: [i64; 2]| -> Option<usize> {
        let p = x[0] + range;
        let q = if dim == 2 { x[1] + range } else { x[1] };
        let width = if dim == 2 { side } else { 1 };
        (p >= 0 && (p as usize) < side && q >= 0 && (q as usize) < width).then(|| p as usize * width + q as usize)
    };
    let base: Vec<f64> = pts.iter().map(|&x| b(norm(x))).collect();
    let mut conv = base.clone();
    let mut c_conv: f64 = 0.0;
    let (mut conv_inner, mut conv_outer): (f64, f64) = (0.0, 0.0);
    for order in 1..=4 {
        if order > 1 {
            let mut next = vec![0.0; pts.len()];
            for (i, &x) in pts.iter().enumerate() {
                let mut s = 0.0;
                for (j, &z) in pts.iter().enumerate() {
                    if let Some(k) = grid_index([x[0] - z[0], x[1] - z[1]]) {
                        s += conv[k] * base[j];
                    }
                }
                next[i] = s;
            }
            conv = next;
        }
        for (i, &x) in pts.iter().enumerate() {
            let r = norm(x);
            if r > rmax / 2.0 {
                continue;
            }
            let ratio = (conv[i] / b(epsilon * r)).powf(1.0 / order as f64);
            c_conv = c_conv.max(ratio);
            if r <= rmax / 4.0 {
                conv_inner = conv_inner.max(ratio);
            } else {
                conv_outer = conv_outer.max(ratio);
            }
        }
    }
    props.push(SrlProperty {
        name: "convolution bound",
        pass: conv_outer <= conv_inner && c_conv.is_finite(),
        witness: c_conv,
        detail: format!("max (b^(*n)(x)/b(εx))^(1/n), n ≤ 4: inner {conv_inner:.4e}, outer {conv_outer:.4e}"),
    });

    let steps = (rmax * 100.0) as usize;
    let samples: Vec<(f64, f64)> = (0..=steps).map(|s| (s as f64 / 100.0, b(s as f64 / 100.0))).collect();
    let (peak_at, _) = samples
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
    let monotone = samples
        .windows(2)
        .filter(|w| w[0].0 >= peak_at)
        .all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    props.push(SrlProperty {
        name: "eventually decreasing",
        pass: monotone && peak_at < rmax / 2.0,
        witness: peak_at,
        detail: "b is non-increasing beyond the reported peak".into(),
    });

    let radii: Vec<f64> = pts.iter().map(|&x| norm(x)).filter(|&r| r > 0.0).collect();
    let scaling_threshold = (1..=10_000).find(|&m| radii.iter().all(|&r| b(m as f64 * r / 3.0) <= b(r)));

    let pass = props.iter().all(|p| p.pass);
    Ok(SrlReport {
        dim,
        delta,
        range,
        c_delta,
        k_const,
        epsilon,
        c_conv,
        m0: peak_at,
        scaling_threshold,
        properties: props,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::window_operator;

    fn square(radius: i64) -> Window {
        Window {
            lo: [-radius, -radius],
            side: [(2 * radius + 1) as usize; 2],
        }
    }

    #[test]
    fn profile_shape() {
        assert_eq!(profile(0.2), 1.0);
        assert_eq!(profile(0.7), 0.0);
        let mut sup: f64 = 0.0;
        for s in 0..=20_000 {
            let t = -1.0 + s as f64 / 10_000.0;
            let total: f64 = (-2..=2).map(|j| profile(t - j as f64).powi(2)).sum();
            assert!((total - 1.0).abs() < 1e-14);
            sup = sup.max(profile_derivative(t).abs());
            let fd = (profile(t + 1e-7) - profile(t - 1e-7)) / 2e-7;
            if (t.abs() - 1.0 / 3.0).abs() > 1e-3 && (t.abs() - 2.0 / 3.0).abs() > 1e-3 {
                assert!((fd - profile_derivative(t)).abs() < 1e-5, "{t}");
            }
        }
        assert!(sup <= 10.0 && (sup - 3.0 * 3f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn cover_invariants() {
        for (dim, w) in [(2, square(13)), (1, Window { lo: [-20, 0], side: [41, 1] })] {
            let cover = BoxCover::new(4, dim, w).unwrap();
            assert!(cover.partition_defect() < 1e-12);
            for (c, cube) in cover.cubes.iter().enumerate() {
                for i in 0..w.len() {
                    let h = partition_weight(w.site(i), cube.label, 4, dim);
                    assert_eq!(h, cover.weight(c, i));
                }
                for (d, other) in cover.cubes.iter().enumerate() {
                    let diff = (0..dim).map(|k| (cube.label[k] - other.label[k]).pow(2)).sum::<i64>();
                    if cover.overlap(c, d) {
                        assert!((diff as f64).sqrt() <= 2.0 * (dim as f64).sqrt());
                    }
                }
            }
        }
        assert!(BoxCover::new(1, 2, square(5)).is_err());
    }

    #[test]
    fn identity_has_zero_remainder() {
        let w = square(10);
        let id = Csr::identity(w.len());
        let exp = rw_inverse(&id, w, 2, 3, 0, &[[0, 0], [10, -10]]).unwrap();
        assert_eq!(exp.r_norm, 0.0);
        assert_eq!(exp.residuals, vec![0.0]);
        assert!(exp.max_reference_error < 1e-15);
    }

    #[test]
    fn screened_chain_inverse() {
        let (a, w) = chain_operator(-40, 81, 0.5);
        let exp = rw_inverse(&a, w, 1, 4, 40, &[[0, 0], [-40, 0]]).unwrap();
        assert!(exp.r_norm < 1.0);
        assert!(exp.max_reference_error < 1e-10, "{exp:?}");
    }

    #[test]
    fn r_matches_definition() {
        let w = Window { lo: [-9, -9], side: [18, 18] };
        let a = window_operator(&w, 3).unwrap();
        let exp = Expansion::new(&a, BoxCover::new(4, 2, w).unwrap()).unwrap();
        let v: Vec<f64> = (0..w.len()).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let cv = exp.apply_c(&v);
        let direct: Vec<f64> = a.mul_vec(&cv).iter().zip(&v).map(|(acv, vi)| vi - acv).collect();
        let r = exp.apply_r(&v);
        assert!(r.iter().zip(&direct).all(|(p, q)| (p - q).abs() < 1e-12));
        // ⟨u, Rv⟩ = ⟨Rᵀu, v⟩
        let u: Vec<f64> = (0..w.len()).map(|i| ((i * 7) % 5) as f64).collect();
        let lhs: f64 = u.iter().zip(&r).map(|(p, q)| p * q).sum();
        let rhs: f64 = exp.apply_rt(&u).iter().zip(&v).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn exponential_profile_is_localizing() {
        let c1 = 0.5;
        let rep = srl_check(&|r| (-c1 * r).exp(), 2, c1, 0.25, 20).unwrap();
        assert!(rep.pass, "{rep:#?}");
        assert!((rep.m0 - 2.0 / c1).abs() < 0.02);
        let flat = srl_check(&|_| 1.0, 2, 0.5, 0.25, 20).unwrap();
        assert!(!flat.pass && !flat.properties[1].pass && flat.properties[0].pass);
        let gaussian = srl_check(&|r| (-r * r / 4.0).exp(), 2, 0.5, 0.25, 20).unwrap();
        assert!(!gaussian.properties[2].pass, "{gaussian:#?}");
    }
}

//! Dense kernels on the finite lattice: `G = (−Δ_Ω + Q*Q)⁻¹`, its box
//! average `QGQ*` and inverse, the twisted operator `D_A = QGR*_AQ*`, sup-norm
//! operator bounds and exponential decay fits.
//!
//! Operators are stored as coordinate matrices acting on the value vectors of
//! fields. On the coarse lattice the inner product carries the weight `L²`, so
//! the kernel of an operator with coarse domain is its matrix divided by `L²`.

use nalgebra::{DMatrix, Matrix3};
use serde::Serialize;

use crate::calculus::RotationField;
use crate::error::{Error, Result};
use crate::lattice::{LatticeGeometry, Level, Site};
use crate::linalg::{lu_inverse, min_eigenvalue, spd_inverse, spectral_norm, Csr};

/// Sites of the rectangular window `lo + [0, side0) × [0, side1)`, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Window {
    pub lo: Site,
    pub side: [usize; 2],
}

impl Window {
    pub fn len(&self) -> usize {
        self.side[0] * self.side[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn site(&self, i: usize) -> Site {
        [
            self.lo[0] + (i / self.side[1]) as i64,
            self.lo[1] + (i % self.side[1]) as i64,
        ]
    }

    pub fn index(&self, x: Site) -> Option<usize> {
        let a = x[0] - self.lo[0];
        let b = x[1] - self.lo[1];
        if a >= 0 && b >= 0 && (a as usize) < self.side[0] && (b as usize) < self.side[1] {
            Some(a as usize * self.side[1] + b as usize)
        } else {
            None
        }
    }

    /// Distance from `x` to the nearest site outside the window (∞-norm).
    pub fn depth(&self, x: Site) -> i64 {
        let mut d = i64::MAX;
        for mu in 0..2 {
            d = d.min(x[mu] - self.lo[mu] + 1);
            d = d.min(self.lo[mu] + self.side[mu] as i64 - x[mu]);
        }
        d
    }
}

/// `−Δ + Q*Q` on a box-aligned window, with Neumann closure at the window
/// edge. Boxes are the cells `L·k + [0, L)²`.
pub fn window_operator(w: &Window, l: usize) -> Result<Csr> {
    let li = l as i64;
    if w.lo.iter().any(|c| c.rem_euclid(li) != 0) || w.side.iter().any(|s| s % l != 0) {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("window {w:?} is not aligned with {l}-boxes"),
        });
    }
    let q = 1.0 / (l * l) as f64;
    let rows = (0..w.len())
        .map(|i| {
            let x = w.site(i);
            let mut row = Vec::with_capacity(4 + l * l);
            let mut degree = 0.0;
            for (d0, d1) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if let Some(j) = w.index([x[0] + d0, x[1] + d1]) {
                    row.push((j, -1.0));
                    degree += 1.0;
                }
            }
            row.push((i, degree));
            let corner = [x[0].div_euclid(li) * li, x[1].div_euclid(li) * li];
            for a in 0..li {
                for b in 0..li {
                    let j = w.index([corner[0] + a, corner[1] + b]).expect("aligned box");
                    row.push((j, q));
                }
            }
            row
        })
        .collect();
    Ok(Csr::from_rows(rows))
}

/// Eigenvalues, ascending, of the Neumann Laplacian `−Δ` on a single
/// `side × side` box.
pub fn box_neumann_spectrum(side: usize) -> Vec<f64> {
    let w = Window {
        lo: [0, 0],
        side: [side, side],
    };
    let lap = DMatrix::from_fn(w.len(), w.len(), |i, j| {
        let (x, y) = (w.site(i), w.site(j));
        let d = (x[0] - y[0]).abs() + (x[1] - y[1]).abs();
        if i == j {
            [[1, 0], [-1, 0], [0, 1], [0, -1]]
                .iter()
                .filter(|e| w.index([x[0] + e[0], x[1] + e[1]]).is_some())
                .count() as f64
        } else if d == 1 {
            -1.0
        } else {
            0.0
        }
    });
    let mut ev: Vec<f64> = lap.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Dense matrix of `−Δ_Ω + Q*Q` on the fine lattice.
pub fn operator_matrix(geom: &LatticeGeometry) -> DMatrix<f64> {
    let w = Window {
        lo: [0, 0],
        side: [geom.n(), geom.n()],
    };
    window_operator(&w, geom.l())
        .expect("lattice is box aligned")
        .to_dense()
}

/// A linear operator between field spaces with its coordinate matrix.
#[derive(Clone, Debug)]
pub struct OperatorKernel {
    pub domain: Level,
    pub codomain: Level,
    /// 1 for componentwise operators, 3 for operators mixing vector components.
    pub block: usize,
    /// Inner-product weight of the domain (1 fine, `L²` coarse).
    pub weight: f64,
    pub matrix: DMatrix<f64>,
    /// Lattice positions of the rows and columns (fine-lattice units).
    pub row_sites: Vec<Site>,
    pub col_sites: Vec<Site>,
    pub symmetric: bool,
}

fn positions(geom: &LatticeGeometry, level: Level) -> Vec<Site> {
    match level {
        Level::Fine => (0..geom.num_sites()).map(|i| geom.site(i)).collect(),
        Level::Coarse => (0..geom.num_boxes()).map(|k| geom.coarse_site(k)).collect(),
    }
}

fn weight_of(geom: &LatticeGeometry, level: Level) -> f64 {
    match level {
        Level::Fine => 1.0,
        Level::Coarse => (geom.l() * geom.l()) as f64,
    }
}

impl OperatorKernel {
    pub fn on_lattice(
        geom: &LatticeGeometry,
        domain: Level,
        codomain: Level,
        block: usize,
        matrix: DMatrix<f64>,
        symmetric: bool,
    ) -> Self {
        OperatorKernel {
            domain,
            codomain,
            block,
            weight: weight_of(geom, domain),
            matrix,
            row_sites: positions(geom, codomain),
            col_sites: positions(geom, domain),
            symmetric,
        }
    }

    /// Scalar kernel on arbitrary positions with unit weight.
    pub fn scalar(matrix: DMatrix<f64>, row_sites: Vec<Site>, col_sites: Vec<Site>) -> Self {
        let symmetric = matrix.is_square() && (&matrix - matrix.transpose()).amax() <= 1e-10;
        OperatorKernel {
            domain: Level::Fine,
            codomain: Level::Fine,
            block: 1,
            weight: 1.0,
            matrix,
            row_sites,
            col_sites,
            symmetric,
        }
    }

    /// Kernel value `K(x, x')` between row position `i` and column position `j`
    /// (block norm for vector operators).
    pub fn entry_norm(&self, i: usize, j: usize) -> f64 {
        block_norm(&self.matrix, self.block, i, j) / self.weight
    }

    pub fn num_rows(&self) -> usize {
        self.row_sites.len()
    }

    pub fn num_cols(&self) -> usize {
        self.col_sites.len()
    }
}

fn block_norm(m: &DMatrix<f64>, block: usize, i: usize, j: usize) -> f64 {
    if block == 1 {
        m[(i, j)].abs()
    } else {
        let b: Matrix3<f64> = m.fixed_view::<3, 3>(3 * i, 3 * j).into_owned();
        b.singular_values().max()
    }
}

/// Row-sum bound `sup_x Σ_{x'} w‖K(x, x')‖`, i.e. the largest row sum of block
/// norms of the coordinate matrix. Exact for scalar kernels.
pub fn linf_operator_norm(k: &OperatorKernel) -> f64 {
    block_row_sum(&k.matrix, k.block)
}

/// `sup_i Σ_j ‖M_ij‖` over `block × block` sub-blocks.
pub fn block_row_sum(m: &DMatrix<f64>, block: usize) -> f64 {
    let rows = m.nrows() / block;
    let cols = m.ncols() / block;
    (0..rows)
        .map(|i| (0..cols).map(|j| block_norm(m, block, i, j)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `G(Ω)` as a scalar fine-lattice kernel.
pub fn assemble_green(geom: &LatticeGeometry) -> Result<OperatorKernel> {
    let g = spd_inverse(&operator_matrix(geom), "-Δ_Ω + Q*Q")?;
    Ok(OperatorKernel::on_lattice(geom, Level::Fine, Level::Fine, 1, g, true))
}

/// `Σ_{x ∈ B(k)} M(x, x')` for every box `k` and fine column `x'`.
fn box_row_sums(geom: &LatticeGeometry, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(geom.num_boxes(), m.ncols());
    for k in 0..geom.num_boxes() {
        for &x in geom.box_sites(k) {
            let mut row = out.row_mut(k);
            row += m.row(x);
        }
    }
    out
}

/// `Q M Q*` for a scalar fine matrix.
fn coarse_projection(geom: &LatticeGeometry, m: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = box_row_sums(geom, m);
    let q = 1.0 / (geom.l() * geom.l()) as f64;
    DMatrix::from_fn(geom.num_boxes(), geom.num_boxes(), |k, k2| {
        geom.box_sites(k2).iter().map(|&x| rows[(k, x)]).sum::<f64>() * q
    })
}

#[derive(Clone, Debug)]
pub struct CoarseGreen {
    pub qgq: OperatorKernel,
    pub inverse: OperatorKernel,
    pub min_eigenvalue: f64,
}

pub fn coarse_green(geom: &LatticeGeometry, g: &OperatorKernel) -> Result<CoarseGreen> {
    let m = coarse_projection(geom, &g.matrix);
    let lambda = min_eigenvalue(&m);
    if !(lambda > 0.0) {
        return Err(Error::InvariantViolation(format!(
            "QGQ* has smallest eigenvalue {lambda:.3e}"
        )));
    }
    let inv = spd_inverse(&m, "QGQ*")?;
    Ok(CoarseGreen {
        qgq: OperatorKernel::on_lattice(geom, Level::Coarse, Level::Coarse, 1, m, true),
        inverse: OperatorKernel::on_lattice(geom, Level::Coarse, Level::Coarse, 1, inv, true),
        min_eigenvalue: lambda,
    })
}

/// Everything the fixed-point map needs from `G`, assembled once per geometry.
#[derive(Clone, Debug)]
pub struct GreenPack {
    pub geom: LatticeGeometry,
    pub green: OperatorKernel,
    /// `S(k, x') = Σ_{x∈B(k)} G(x, x')`.
    pub box_rows: DMatrix<f64>,
    pub coarse: CoarseGreen,
}

impl GreenPack {
    pub fn new(geom: &LatticeGeometry) -> Result<Self> {
        let green = assemble_green(geom)?;
        let box_rows = box_row_sums(geom, &green.matrix);
        let coarse = coarse_green(geom, &green)?;
        Ok(GreenPack {
            geom: geom.clone(),
            green,
            box_rows,
            coarse,
        })
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.green.matrix
    }

    /// Coordinate matrix of `D_A = QGR*_AQ*` on coarse vector fields, index
    /// `3k + c`.
    pub fn d_matrix(&self, rot: &RotationField) -> DMatrix<f64> {
        self.twisted(rot, false)
    }

    /// `QG(R*_A − 1)Q*`, the perturbation of `D_0 = QGQ*`.
    fn perturbation(&self, rot: &RotationField) -> DMatrix<f64> {
        self.twisted(rot, true)
    }

    fn twisted(&self, rot: &RotationField, subtract_identity: bool) -> DMatrix<f64> {
        let geom = &self.geom;
        let nb = geom.num_boxes();
        let q = 1.0 / (geom.l() * geom.l()) as f64;
        let mut out = DMatrix::zeros(3 * nb, 3 * nb);
        for k2 in 0..nb {
            let sites = geom.box_sites(k2);
            let mats: Vec<Matrix3<f64>> = sites
                .iter()
                .map(|&x| {
                    let r = rot.adjoint_matrix(x);
                    if subtract_identity {
                        r - Matrix3::identity()
                    } else {
                        r
                    }
                })
                .collect();
            for k in 0..nb {
                let mut acc = Matrix3::zeros();
                for (&x, r) in sites.iter().zip(&mats) {
                    acc += r * self.box_rows[(k, x)];
                }
                out.fixed_view_mut::<3, 3>(3 * k, 3 * k2).copy_from(&(acc * q));
            }
        }
        out
    }

    /// `D_0⁻¹ ⊗ 1₃` in the `3k + c` ordering.
    pub fn d0_inverse_vector(&self) -> DMatrix<f64> {
        kron_identity3(&self.coarse.inverse.matrix)
    }
}

fn kron_identity3(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3 * m.nrows(), 3 * m.ncols(), |i, j| {
        if i % 3 == j % 3 {
            m[(i / 3, j / 3)]
        } else {
            0.0
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InverseMethod {
    Direct,
    Neumann,
}

#[derive(Clone, Debug)]
pub struct DInverse {
    pub kernel: OperatorKernel,
    /// `‖D_0⁻¹ QG(R* − 1)Q*‖`, reported by the series method.
    pub contraction: Option<f64>,
    pub terms: usize,
}

/// `D_A⁻¹`, either by dense LU or by the series `Σ_j (−F)^j D_0⁻¹` with
/// `F = D_0⁻¹ QG(R*_A − 1)Q*`.
pub fn d_operator_inverse(pack: &GreenPack, rot: &RotationField, method: InverseMethod) -> Result<DInverse> {
    let (matrix, contraction, terms) = match method {
        InverseMethod::Direct => (lu_inverse(&pack.d_matrix(rot), "D_A")?, None, 0),
        InverseMethod::Neumann => {
            let d0inv = pack.d0_inverse_vector();
            let f = &d0inv * pack.perturbation(rot);
            let factor = block_row_sum(&f, 3);
            if !(factor < 1.0) {
                return Err(Error::NoConvergence {
                    context: "series for the inverse of D_A".into(),
                    factor,
                });
            }
            let mut term = d0inv.clone();
            let mut sum = d0inv;
            let scale = sum.amax();
            let mut terms = 1;
            while term.amax() > 1e-17 * scale && terms < 500 {
                term = -(&f * &term);
                sum += &term;
                terms += 1;
            }
            (sum, Some(factor), terms)
        }
    };
    Ok(DInverse {
        kernel: OperatorKernel::on_lattice(&pack.geom, Level::Coarse, Level::Coarse, 3, matrix, false),
        contraction,
        terms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMetric {
    /// `|x − x'|∞`
    Chebyshev,
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    /// Fit the largest value at each distance.
    Envelope,
    /// Fit every off-diagonal pair.
    AllPairs,
}

/// Values below this are treated as roundoff and left out of fits.
pub const DECAY_FLOOR: f64 = 1e-14;

/// `‖K(x, x')‖ ≈ C e^{−C₁|x − x'|}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    pub prefactor: f64,
    pub rate: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub max_distance: f64,
    pub points: usize,
    pub metric: DecayMetric,
    pub mode: DecayMode,
}

fn distance(a: Site, b: Site, metric: DecayMetric) -> f64 {
    let d0 = (a[0] - b[0]).abs() as f64;
    let d1 = (a[1] - b[1]).abs() as f64;
    match metric {
        DecayMetric::Chebyshev => d0.max(d1),
        DecayMetric::Euclidean => d0.hypot(d1),
    }
}

/// Least-squares line through `(d, ln v)`; returns `(C, C₁, rms residual)`.
pub fn log_linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "{} usable points at {} distinct distances",
            points.len(),
            distinct.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1.ln() - intercept - slope * p.0).powi(2))
        .sum();
    Ok((intercept.exp(), -slope, (rss / n).sqrt()))
}

pub fn decay_fit_with(k: &OperatorKernel, metric: DecayMetric, mode: DecayMode) -> Result<DecayFit> {
    let mut samples = Vec::new();
    for (i, &x) in k.row_sites.iter().enumerate() {
        for (j, &y) in k.col_sites.iter().enumerate() {
            let d = distance(x, y, metric);
            if d == 0.0 {
                continue;
            }
            let v = k.entry_norm(i, j);
            if v > DECAY_FLOOR {
                samples.push((d, v));
            }
        }
    }
    if mode == DecayMode::Envelope {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut env: Vec<(f64, f64)> = Vec::new();
        for (d, v) in samples {
            match env.last_mut() {
                Some(last) if (last.0 - d).abs() < 1e-9 => last.1 = last.1.max(v),
                _ => env.push((d, v)),
            }
        }
        samples = env;
    }
    let (prefactor, rate, residual) = log_linear_fit(&samples)?;
    Ok(DecayFit {
        prefactor,
        rate,
        residual,
        max_distance: samples.iter().map(|p| p.0).fold(0.0, f64::max),
        points: samples.len(),
        metric,
        mode,
    })
}

/// Decay fit with the defaults: envelope of `|x − x'|∞` shells.
pub fn decay_fit(k: &OperatorKernel) -> Result<DecayFit> {
    decay_fit_with(k, DecayMetric::Chebyshev, DecayMode::Envelope)
}

/// Spectral norm of a dense matrix, re-exported for reports.
pub fn operator_two_norm(m: &DMatrix<f64>) -> f64 {
    spectral_norm(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_configs, VectorConfig};

    #[test]
    fn box_spectrum_is_sum_of_path_spectra() {
        // path Neumann eigenvalues are 4 sin²(kπ/2L)
        for side in [3usize, 5] {
            let path: Vec<f64> = (0..side)
                .map(|k| 4.0 * (k as f64 * std::f64::consts::PI / (2.0 * side as f64)).sin().powi(2))
                .collect();
            let mut expected: Vec<f64> = path.iter().flat_map(|a| path.iter().map(move |b| a + b)).collect();
            expected.sort_by(f64::total_cmp);
            let got = box_neumann_spectrum(side);
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!((box_neumann_spectrum(3)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn green_basics() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let g = assemble_green(&geom).unwrap();
        let ones = DMatrix::from_element(geom.num_sites(), 1, 1.0);
        assert!((&g.matrix * &ones - &ones).amax() < 1e-12);
        assert!((&g.matrix - g.matrix.transpose()).amax() < 1e-12);
        let id = &g.matrix * operator_matrix(&geom);
        assert!((id - DMatrix::identity(81, 81)).amax() < 1e-10);
        let cg = coarse_green(&geom, &g).unwrap();
        let ones = DMatrix::from_element(geom.num_boxes(), 1, 1.0);
        assert!((&cg.qgq.matrix * &ones - &ones).amax() < 1e-12);
        assert!((&cg.inverse.matrix * &ones - &ones).amax() < 1e-10);
        assert!(cg.min_eigenvalue > 0.0);
    }

    #[test]
    fn norm_of_identity() {
        let k = OperatorKernel::scalar(DMatrix::identity(4, 4), vec![[0, 0]; 4], vec![[0, 0]; 4]);
        assert_eq!(linf_operator_norm(&k), 1.0);
    }

    #[test]
    fn synthetic_decay_rate() {
        let sites: Vec<Site> = (0..8).flat_map(|a| (0..8).map(move |b| [a, b])).collect();
        let m = DMatrix::from_fn(64, 64, |i, j| {
            (-distance(sites[i], sites[j], DecayMetric::Chebyshev)).exp()
        });
        let k = OperatorKernel::scalar(m, sites.clone(), sites);
        for mode in [DecayMode::Envelope, DecayMode::AllPairs] {
            let fit = decay_fit_with(&k, DecayMetric::Chebyshev, mode).unwrap();
            assert!((fit.rate - 1.0).abs() < 1e-6 && (fit.prefactor - 1.0).abs() < 1e-6);
        }
        let flat = OperatorKernel::scalar(DMatrix::identity(64, 64), k.row_sites.clone(), k.col_sites);
        assert!(matches!(decay_fit(&flat), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn d_inverse_at_zero_and_methods_agree() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let pack = GreenPack::new(&geom).unwrap();
        let rot0 = RotationField::new(&VectorConfig::zeros(&geom)).unwrap();
        let d = d_operator_inverse(&pack, &rot0, InverseMethod::Direct).unwrap();
        assert!((&d.kernel.matrix - pack.d0_inverse_vector()).amax() < 1e-10);
        let (_, a) = sample_configs(&geom, 0.0, 0.05, 8).unwrap();
        let rot = RotationField::new(&a).unwrap();
        let direct = d_operator_inverse(&pack, &rot, InverseMethod::Direct).unwrap();
        let series = d_operator_inverse(&pack, &rot, InverseMethod::Neumann).unwrap();
        assert!(series.contraction.unwrap() < 1.0);
        assert!((&direct.kernel.matrix - &series.kernel.matrix).amax() < 1e-10);
    }
}

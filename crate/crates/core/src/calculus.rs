//! Discrete calculus on the fine lattice: bond differences and their adjoint,
//! the Neumann Laplacian, box averaging, the site-wise rotations attached to a
//! fluctuation field, the bond field `w = ∂A + r`, tangent vectors of the
//! constraint surface and Lie derivatives of the action.

use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{assemble_fine, bond_action, lift, CoarseConfig, VectorConfig};
use crate::lattice::LatticeGeometry;
use crate::su2::{Sign, Su2, Vec3};

/// `(∂f)(b) = f(b₋) − f(b₊)`.
pub fn d_forward(geom: &LatticeGeometry, f: &[Vec3]) -> Vec<Vec3> {
    geom.bonds().iter().map(|b| f[b.minus] - f[b.plus]).collect()
}

/// Adjoint of [`d_forward`]: `(∂*g)(x) = Σ_{b₋=x} g(b) − Σ_{b₊=x} g(b)`.
pub fn d_adjoint(geom: &LatticeGeometry, g: &[Vec3]) -> Vec<Vec3> {
    (0..geom.num_sites())
        .map(|x| {
            geom.incident(x)
                .iter()
                .map(|&(b, sign)| g[b] * sign)
                .sum()
        })
        .collect()
}

/// `Δ_Ω f = −∂*∂f`, the Laplacian with Neumann boundary conditions.
pub fn neumann_laplacian(geom: &LatticeGeometry, f: &[Vec3]) -> Vec<Vec3> {
    d_adjoint(geom, &d_forward(geom, f))
        .into_iter()
        .map(|v| -v)
        .collect()
}

/// Box mean `(Qf)(y) = L⁻² Σ_{x∈B(y)} f(x)`.
pub fn q_average(geom: &LatticeGeometry, f: &[Vec3]) -> Vec<Vec3> {
    let w = 1.0 / (geom.l() * geom.l()) as f64;
    (0..geom.num_boxes())
        .map(|k| geom.box_sites(k).iter().map(|&i| f[i]).sum::<Vec3>() * w)
        .collect()
}

/// `(Q*g)(x) = g(y_x)`.
pub fn q_adjoint(geom: &LatticeGeometry, g: &[Vec3]) -> Vec<Vec3> {
    (0..geom.num_sites()).map(|i| g[geom.box_index(i)]).collect()
}

/// Fine-lattice inner product `Σ_x f(x)·g(x)`.
pub fn inner_fine(f: &[Vec3], g: &[Vec3]) -> f64 {
    f.iter().zip(g).map(|(a, b)| a.dot(b)).sum()
}

/// Coarse inner product `L² Σ_y f(y)·g(y)`.
pub fn inner_coarse(geom: &LatticeGeometry, f: &[Vec3], g: &[Vec3]) -> f64 {
    (geom.l() * geom.l()) as f64 * inner_fine(f, g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RMode {
    Apply,
    Adjoint,
    Inverse,
}

/// `R(x)v = A₀(x)v + A(x)×v` with `A₀ = √(1−|A|²)`.
#[derive(Clone, Debug)]
pub struct RotationField {
    scalar: Vec<f64>,
    vector: Vec<Vec3>,
}

fn cross_matrix(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

impl RotationField {
    pub fn new(a: &VectorConfig) -> Result<Self> {
        let mut scalar = Vec::with_capacity(a.values.len());
        for v in &a.values {
            scalar.push(lift(v)?.scalar());
        }
        Ok(RotationField {
            scalar,
            vector: a.values.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.scalar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scalar.is_empty()
    }

    pub fn scalar(&self, x: usize) -> f64 {
        self.scalar[x]
    }

    pub fn apply(&self, x: usize, v: &Vec3) -> Vec3 {
        v * self.scalar[x] + self.vector[x].cross(v)
    }

    pub fn adjoint(&self, x: usize, v: &Vec3) -> Vec3 {
        v * self.scalar[x] - self.vector[x].cross(v)
    }

    fn check(&self, geom: &LatticeGeometry, x: usize) -> Result<f64> {
        let a0 = self.scalar[x];
        if a0 <= 0.0 {
            return Err(Error::SingularTransform { site: geom.site(x) });
        }
        Ok(a0)
    }

    /// `R⁻¹v = A₀v − A×v + A(A·v)/A₀`.
    pub fn inverse(&self, geom: &LatticeGeometry, x: usize, v: &Vec3) -> Result<Vec3> {
        let a0 = self.check(geom, x)?;
        let a = &self.vector[x];
        Ok(v * a0 - a.cross(v) + a * (a.dot(v) / a0))
    }

    /// `(R⁻¹)*v = A₀v + A×v + A(A·v)/A₀`.
    pub fn inverse_adjoint(&self, geom: &LatticeGeometry, x: usize, v: &Vec3) -> Result<Vec3> {
        let a0 = self.check(geom, x)?;
        let a = &self.vector[x];
        Ok(v * a0 + a.cross(v) + a * (a.dot(v) / a0))
    }

    pub fn matrix(&self, x: usize) -> Matrix3<f64> {
        Matrix3::identity() * self.scalar[x] + cross_matrix(&self.vector[x])
    }

    pub fn adjoint_matrix(&self, x: usize) -> Matrix3<f64> {
        Matrix3::identity() * self.scalar[x] - cross_matrix(&self.vector[x])
    }
}

/// Site-wise application of `R`, `R*` or `R⁻¹` to a vector field.
pub fn r_transform(
    geom: &LatticeGeometry,
    a: &VectorConfig,
    mode: RMode,
    v: &[Vec3],
) -> Result<Vec<Vec3>> {
    let rot = RotationField::new(a)?;
    v.iter()
        .enumerate()
        .map(|(x, vx)| match mode {
            RMode::Apply => Ok(rot.apply(x, vx)),
            RMode::Adjoint => Ok(rot.adjoint(x, vx)),
            RMode::Inverse => rot.inverse(geom, x, vx),
        })
        .collect()
}

/// Bond variables `W(b) = U′(b₋)·∂V(y_b)·U′(b₊)*`, which equal `U(b₋)U(b₊)*`.
#[derive(Clone, Debug, Serialize)]
pub struct BondField {
    /// Vector parts `w(b)`.
    pub w: Vec<Vec3>,
    /// Scalar parts `W₀(b)`.
    pub w0: Vec<f64>,
    pub signs: Vec<Sign>,
}

pub fn bond_w_field(geom: &LatticeGeometry, a: &VectorConfig, v: &CoarseConfig) -> Result<BondField> {
    let u = assemble_fine(geom, a, v)?;
    let mut out = BondField {
        w: Vec::with_capacity(geom.num_bonds()),
        w0: Vec::with_capacity(geom.num_bonds()),
        signs: Vec::with_capacity(geom.num_bonds()),
    };
    for b in geom.bonds() {
        let wb = u.sites[b.minus].mul_conj(&u.sites[b.plus]);
        out.w.push(wb.vector());
        out.w0.push(wb.scalar());
        out.signs.push(wb.sign());
    }
    Ok(out)
}

/// Nonlinear part `r = w − ∂A` of the bond field, term by term.
pub fn remainder_field(geom: &LatticeGeometry, a: &VectorConfig, v: &CoarseConfig) -> Result<Vec<Vec3>> {
    let lifted = a.values.iter().map(lift).collect::<Result<Vec<_>>>()?;
    Ok(geom
        .bonds()
        .iter()
        .map(|b| {
            let (lo, hi) = (&lifted[b.minus], &lifted[b.plus]);
            let coarse = v.sites[geom.box_index(b.minus)].mul_conj(&v.sites[geom.box_index(b.plus)]);
            remainder_term(lo, hi, &coarse)
        })
        .collect())
}

/// `r` for one bond with lifted endpoint values `lo = [A(b₋)]`, `hi = [A(b₊)]`
/// and coarse bond variable `c = V(y_{b₋})V(y_{b₊})*`.
pub fn remainder_term(lo: &Su2, hi: &Su2, c: &Su2) -> Vec3 {
    let (a_lo, v_lo) = (lo.scalar(), lo.vector());
    let (a_hi, v_hi) = (hi.scalar(), hi.vector());
    let (c0, cv) = (c.scalar(), c.vector());
    v_hi * (1.0 - a_lo * c0) - v_lo * (1.0 - a_hi * c0) + cv * (a_hi * a_lo)
        - v_lo.cross(&cv) * a_hi
        + cv.cross(&v_hi) * a_lo
        + v_lo.cross(&v_hi) * c0
        + v_hi * v_lo.dot(&cv)
        + v_lo * cv.dot(&v_hi)
        - cv * v_lo.dot(&v_hi)
}

/// Tangent direction `X` of the constraint surface supported on one tree edge.
#[derive(Clone, Debug, Serialize)]
pub struct TangentVector {
    /// Box the edge belongs to.
    pub box_index: usize,
    pub bond: usize,
    /// Which of the three unit vectors generated this element.
    pub axis: usize,
    /// Nonzero values: `R⁻¹v` at the edge tail and `−R⁻¹v` at its head.
    pub support: [(usize, Vec3); 2],
}

impl TangentVector {
    pub fn to_dense(&self, sites: usize) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); sites];
        for &(x, v) in &self.support {
            out[x] += v;
        }
        out
    }
}

/// `3(L²−1)` tangent vectors of box `k` built on its spanning tree.
pub fn tangent_basis(
    geom: &LatticeGeometry,
    rot: &RotationField,
    k: usize,
) -> Result<Vec<TangentVector>> {
    let tree = geom.spanning_tree_of(k);
    let mut out = Vec::with_capacity(3 * tree.edges.len());
    for edge in &tree.edges {
        for axis in 0..3 {
            let mut v = Vec3::zeros();
            v[axis] = 1.0;
            out.push(TangentVector {
                box_index: k,
                bond: edge.bond,
                axis,
                support: [
                    (edge.tail, rot.inverse(geom, edge.tail, &v)?),
                    (edge.head, -rot.inverse(geom, edge.head, &v)?),
                ],
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LieMethod {
    Algebraic,
    Flow,
}

/// Step of the central difference used by [`LieMethod::Flow`].
pub const FLOW_STEP: f64 = 1e-5;

/// `2 Σ_x X(x)·(∂*w)(x)`, given `∂*w` precomputed.
pub fn lie_derivative_from_divergence(x: &TangentVector, div_w: &[Vec3]) -> f64 {
    2.0 * x.support.iter().map(|(s, v)| v.dot(&div_w[*s])).sum::<f64>()
}

fn touching_bonds(geom: &LatticeGeometry, x: &TangentVector) -> Vec<usize> {
    let mut bonds: Vec<usize> = x
        .support
        .iter()
        .flat_map(|&(s, _)| geom.incident(s).iter().map(|&(b, _)| b))
        .collect();
    bonds.sort_unstable();
    bonds.dedup();
    bonds
}

/// Derivative of the action along `U′ ↦ exp(itX·σ)U′` at `t = 0`.
pub fn lie_derivative_action(
    geom: &LatticeGeometry,
    a: &VectorConfig,
    v: &CoarseConfig,
    x: &TangentVector,
    method: LieMethod,
) -> Result<f64> {
    let bonds = touching_bonds(geom, x);
    match method {
        LieMethod::Algebraic => {
            let w = bond_w_field(geom, a, v)?;
            let dx = x.to_dense(geom.num_sites());
            Ok(2.0
                * bonds
                    .iter()
                    .map(|&b| {
                        let bd = geom.bonds()[b];
                        (dx[bd.minus] - dx[bd.plus]).dot(&w.w[b])
                    })
                    .sum::<f64>())
        }
        LieMethod::Flow => {
            let u = assemble_fine(geom, a, v)?;
            let local = |t: f64| {
                let mut moved = u.clone();
                for &(s, xs) in &x.support {
                    let len = xs.norm();
                    if len > 0.0 {
                        let e = Su2::from_axis_angle(xs, t * len);
                        moved.sites[s] = e.mul(&moved.sites[s]);
                    }
                }
                bonds
                    .iter()
                    .map(|&b| {
                        let bd = geom.bonds()[b];
                        bond_action(&moved.sites[bd.minus].mul_conj(&moved.sites[bd.plus]))
                    })
                    .sum::<f64>()
            };
            Ok((local(FLOW_STEP) - local(-FLOW_STEP)) / (2.0 * FLOW_STEP))
        }
    }
}

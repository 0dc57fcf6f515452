//! SU(2) in quaternion form.
//!
//! An element is stored as a unit 4-vector `(q0, q1, q2, q3)` standing for the
//! 2×2 matrix `q0·1 + i(q1σ1 + q2σ2 + q3σ3)`. The sign/vector view `(s, A)` with
//! `q0 = s·√(1−|A|²)` is derived on demand, never stored.

use nalgebra::{Complex, Matrix2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Vec3 = Vector3<f64>;

/// Largest accepted deviation of `|q|` from one before renormalization.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Sign of the scalar part in the `(s, A)` view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Su2 {
    q: [f64; 4],
}

impl Default for Su2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Su2 {
    pub const fn identity() -> Self {
        Su2 {
            q: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Builds an element from raw components, rejecting vectors that are not
    /// unit length to within [`NORM_TOLERANCE`].
    pub fn new(q: [f64; 4]) -> Result<Self> {
        let norm = norm4(&q);
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(invalid("q", format!("quaternion norm {norm} is not 1")));
        }
        Ok(Su2 {
            q: q.map(|c| c / norm),
        })
    }

    /// `(s·√(1−|A|²), A)`; `|A|` may exceed one by at most 1e-12.
    pub fn from_vector(a: Vec3, s: Sign) -> Result<Self> {
        let a2 = a.norm_squared();
        if !a2.is_finite() || a2.sqrt() > 1.0 + 1e-12 {
            return Err(invalid("A", format!("|A| = {} exceeds 1", a2.sqrt())));
        }
        let a0 = (1.0 - a2).max(0.0).sqrt();
        let q = [s.value() * a0, a.x, a.y, a.z];
        Ok(Su2 {
            q: q.map(|c| c / norm4(&q)),
        })
    }

    /// `exp(i·angle·n̂·σ) = cos(angle) + i sin(angle) n̂·σ`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let norm = axis.norm();
        if norm == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let (s, c) = angle.sin_cos();
        let v = axis * (s / norm);
        Su2 {
            q: [c, v.x, v.y, v.z],
        }
        .renormalized()
    }

    pub fn components(&self) -> [f64; 4] {
        self.q
    }

    pub fn scalar(&self) -> f64 {
        self.q[0]
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.q[1], self.q[2], self.q[3])
    }

    /// `s = sign(q0)`, with `s = +1` on the equator `q0 = 0`.
    pub fn sign(&self) -> Sign {
        if self.q[0] < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn conj(&self) -> Self {
        Su2 {
            q: [self.q[0], -self.q[1], -self.q[2], -self.q[3]],
        }
    }

    pub fn mul(&self, other: &Su2) -> Su2 {
        let [u0, u1, u2, u3] = self.q;
        let [v0, v1, v2, v3] = other.q;
        // vector part: u0 v + v0 u - u × v
        Su2 {
            q: [
                u0 * v0 - u1 * v1 - u2 * v2 - u3 * v3,
                u0 * v1 + v0 * u1 - (u2 * v3 - u3 * v2),
                u0 * v2 + v0 * u2 - (u3 * v1 - u1 * v3),
                u0 * v3 + v0 * u3 - (u1 * v2 - u2 * v1),
            ],
        }
        .renormalized()
    }

    /// `U V*`, the building block of every bond variable.
    pub fn mul_conj(&self, other: &Su2) -> Su2 {
        self.mul(&other.conj())
    }

    /// `1 − q0`, evaluated without cancellation near the identity.
    pub fn one_minus_scalar(&self) -> f64 {
        let q0 = self.q[0];
        if q0 > 0.0 {
            let v2 = self.q[1] * self.q[1] + self.q[2] * self.q[2] + self.q[3] * self.q[3];
            v2 / (1.0 + q0)
        } else {
            1.0 - q0
        }
    }

    /// Operator norm `‖U − 1‖ = √(2(1 − q0))`.
    pub fn dist_to_identity(&self) -> f64 {
        (2.0 * self.one_minus_scalar()).sqrt()
    }

    /// Explicit 2×2 complex matrix, for cross-checks against matrix algebra.
    pub fn to_matrix(&self) -> Matrix2<Complex<f64>> {
        let [q0, q1, q2, q3] = self.q;
        Matrix2::new(
            Complex::new(q0, q3),
            Complex::new(q2, q1),
            Complex::new(-q2, q1),
            Complex::new(q0, -q3),
        )
    }

    fn renormalized(self) -> Self {
        let n = norm4(&self.q);
        Su2 {
            q: self.q.map(|c| c / n),
        }
    }
}

fn norm4(q: &[f64; 4]) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// `Σ cᵢUᵢ = c·u` with `c ≥ 0` and `u ∈ SU(2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSum {
    pub c: f64,
    pub u: Su2,
}

/// Sums group elements with nonnegative weights by folding the two-term rule
/// `c1 U1 + c2 U2 = c3 U3`, where `c3` is the length of the combined 4-vector.
pub fn weighted_sum(terms: &[(f64, Su2)]) -> Result<WeightedSum> {
    let mut acc = [0.0; 4];
    let mut c_acc = 0.0;
    let mut u_acc = Su2::identity();
    for (i, &(c, u)) in terms.iter().enumerate() {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(invalid("c", format!("weight #{i} is {c}, must be >= 0")));
        }
        for k in 0..4 {
            acc[k] = c_acc * u_acc.q[k] + c * u.q[k];
        }
        c_acc = norm4(&acc);
        u_acc = if c_acc > 0.0 {
            Su2 {
                q: acc.map(|x| x / c_acc),
            }
        } else {
            Su2::identity()
        };
    }
    Ok(WeightedSum { c: c_acc, u: u_acc })
}

/// The square-root constant `(1/π)∫₀^∞ √y / ((y+1)(y+½)) dy`.
///
/// Substituting `y = tan²θ` turns the integrand into the bounded smooth
/// function `2 tan²θ / (tan²θ + ½)` on `[0, π/2]`, integrated by composite
/// Gauss–Legendre.
pub fn sqrt_lemma_constant() -> f64 {
    // 5-point Gauss–Legendre nodes and weights on [-1, 1]
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let panels = 400;
    let end = std::f64::consts::FRAC_PI_2;
    let h = end / panels as f64;
    let f = |theta: f64| {
        let t2 = theta.tan().powi(2);
        2.0 * t2 / (t2 + 0.5)
    };
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
            total += w * f(mid + 0.5 * h * x);
        }
    }
    total * 0.5 * h / std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_product_matrix(u: &Su2, v: &Su2) -> Matrix2<Complex<f64>> {
        u.to_matrix() * v.to_matrix()
    }

    #[test]
    fn from_vector_cases() {
        let id = Su2::from_vector(Vec3::zeros(), Sign::Plus).unwrap();
        assert_eq!(id.components(), [1.0, 0.0, 0.0, 0.0]);
        let minus = Su2::from_vector(Vec3::zeros(), Sign::Minus).unwrap();
        assert_eq!(minus.components(), [-1.0, 0.0, 0.0, 0.0]);
        assert!(Su2::from_vector(Vec3::new(1.1, 0.0, 0.0), Sign::Plus).is_err());
        let equator = Su2::from_vector(Vec3::new(0.0, 1.0, 0.0), Sign::Minus).unwrap();
        assert_eq!(equator.sign(), Sign::Plus);
    }

    #[test]
    fn new_rejects_off_norm() {
        assert!(Su2::new([1.0, 1e-3, 0.0, 0.0]).is_err());
        assert!(Su2::new([1.0 + 1e-10, 0.0, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn pauli_algebra() {
        let s1 = Su2::new([0.0, 1.0, 0.0, 0.0]).unwrap();
        let s2 = Su2::new([0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(s1.mul(&s2).components(), [0.0, 0.0, 0.0, -1.0]);
        let m = pauli_product_matrix(&s1, &s2);
        let expect = s1.mul(&s2).to_matrix();
        assert!((m - expect).norm() < 1e-15);
    }

    #[test]
    fn product_matches_matrix_product() {
        let u = Su2::from_axis_angle(Vec3::new(0.3, -1.0, 0.2), 0.7);
        let v = Su2::from_axis_angle(Vec3::new(-0.5, 0.1, 0.9), 2.1);
        let diff = u.mul(&v).to_matrix() - u.to_matrix() * v.to_matrix();
        assert!(diff.norm() < 1e-14);
        let inv = u.mul_conj(&u);
        assert!((inv.scalar() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(Su2::identity().dist_to_identity(), 0.0);
        let minus = Su2::new([-1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((minus.dist_to_identity() - 2.0).abs() < 1e-15);
        let u = Su2::from_vector(Vec3::new(0.6, 0.0, 0.0), Sign::Plus).unwrap();
        assert!((u.dist_to_identity() - 0.4f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weighted_sum_examples() {
        let id = Su2::identity();
        let ws = weighted_sum(&[(1.0, id), (1.0, id)]).unwrap();
        assert_eq!(ws.c, 2.0);
        assert_eq!(ws.u, id);

        let s3 = Su2::new([0.0, 0.0, 0.0, 1.0]).unwrap();
        let ws = weighted_sum(&[(1.0, s3), (1.0, s3.conj())]).unwrap();
        assert_eq!(ws.c, 0.0);
        assert_eq!(ws.u, id);

        // U + U* = 2cos(a)·1 with cos(π/3) = 1/2
        let u = Su2::from_axis_angle(Vec3::x(), std::f64::consts::FRAC_PI_3);
        let ws = weighted_sum(&[(1.0, u), (1.0, u.conj())]).unwrap();
        assert!((ws.c - 1.0).abs() < 1e-15);
        assert!((ws.u.components()[0] - 1.0).abs() < 1e-15);

        assert!(weighted_sum(&[(-1.0, id)]).is_err());
    }

    #[test]
    fn sqrt_constant_matches_closed_form() {
        // (1/π)∫ √y/((y+a)(y+b)) = 1/(√a+√b); a = 1, b = 1/2
        let closed = 1.0 / (1.0 + 0.5f64.sqrt());
        assert!((sqrt_lemma_constant() - closed).abs() < 1e-13);
    }
}

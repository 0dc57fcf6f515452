//! Method of images: free-lattice kernels of `−Δ + Q*Q` on truncated windows
//! of ℤ², and numerical checks that reflected sums of free kernels reproduce
//! the Neumann kernels on the finite lattice.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::green::{operator_matrix, window_operator, OperatorKernel, Window};
use crate::lattice::{image_points, LatticeGeometry, Level, Site};
use crate::linalg::{conjugate_gradient, BandedCholesky, Csr};

/// `(−Δ + Q*Q)⁻¹` on ℤ², approximated on the box-aligned window
/// `[−K·L, (K+1)·L)²` with `K = ⌈radius/L⌉`.
///
/// The free operator commutes with translations by `Lℤ²`, so one column per
/// source position inside the cell `[0, L)²` determines the whole kernel.
#[derive(Clone, Debug)]
pub struct TruncatedFreeGreen {
    pub l: usize,
    pub radius: i64,
    pub window: Window,
    columns: Vec<Vec<f64>>,
    pub stability_delta: Option<f64>,
}

fn centred_window(radius: i64, l: usize) -> Window {
    let li = l as i64;
    let k = (radius + li - 1) / li;
    let side = ((2 * k + 1) * li) as usize;
    Window {
        lo: [-k * li, -k * li],
        side: [side, side],
    }
}

impl TruncatedFreeGreen {
    pub fn new(radius: i64, l: usize) -> Result<Self> {
        if l < 3 || l % 2 == 0 {
            return Err(invalid("L", format!("L must be odd and at least 3, got {l}")));
        }
        if radius < 4 * l as i64 {
            return Err(invalid("radius", format!("radius {radius} is below 4L = {}", 4 * l)));
        }
        let window = centred_window(radius, l);
        let op = window_operator(&window, l)?;
        let chol = BandedCholesky::factor(&op)?;
        let li = l as i64;
        let columns = (0..l * l)
            .map(|s| {
                let mut rhs = vec![0.0; window.len()];
                rhs[window.index([s as i64 / li, s as i64 % li]).expect("cell inside window")] = 1.0;
                chol.solve_in_place(&mut rhs);
                rhs
            })
            .collect();
        Ok(TruncatedFreeGreen {
            l,
            radius,
            window,
            columns,
            stability_delta: None,
        })
    }

    /// `G(x, x')`, zero when `x` lies outside the window around the cell of `x'`.
    pub fn value(&self, x: Site, xp: Site) -> f64 {
        let li = self.l as i64;
        let cell = [xp[0].div_euclid(li) * li, xp[1].div_euclid(li) * li];
        let s = ((xp[0] - cell[0]) * li + (xp[1] - cell[1])) as usize;
        match self.window.index([x[0] - cell[0], x[1] - cell[1]]) {
            Some(i) => self.columns[s][i],
            None => 0.0,
        }
    }

    /// Compares the column of the source at the origin with the same column
    /// computed on a window of twice the radius, over `|x|∞ ≤ radius/2`.
    /// Records and returns the largest change.
    pub fn stability_probe(&mut self, tolerance: f64) -> Result<f64> {
        let big = centred_window(2 * self.radius, self.l);
        let op = window_operator(&big, self.l)?;
        let mut rhs = vec![0.0; big.len()];
        rhs[big.index([0, 0]).expect("origin inside window")] = 1.0;
        let sol = conjugate_gradient(|x| op.mul_vec(x), &rhs, 1e-15, 20_000)?;
        let half = self.radius / 2;
        let mut delta: f64 = 0.0;
        for a in -half..=half {
            for b in -half..=half {
                let big_val = sol.solution[big.index([a, b]).expect("inside")];
                delta = delta.max((big_val - self.value([a, b], [0, 0])).abs());
            }
        }
        self.stability_delta = Some(delta);
        if delta > tolerance {
            return Err(Error::WindowTooSmall { delta, tolerance });
        }
        Ok(delta)
    }
}

/// Entry of `QGQ*` between the boxes labelled `y` and `yp` (coordinate matrix
/// convention), from the free kernel.
pub fn coarse_free_entry(free: &TruncatedFreeGreen, y: Site, yp: Site) -> f64 {
    let li = free.l as i64;
    let mut s = 0.0;
    for a in 0..li {
        for b in 0..li {
            for c in 0..li {
                for d in 0..li {
                    s += free.value([y[0] + a, y[1] + b], [yp[0] + c, yp[1] + d]);
                }
            }
        }
    }
    s / (li * li) as f64
}

/// `(QGQ*)⁻¹` on the coarse lattice `Lℤ²`, approximated by truncating the
/// (dense, exponentially decaying) coarse operator to a stencil of
/// `stencil_radius` boxes and inverting it on a window of `window_boxes`
/// boxes around the origin.
#[derive(Clone, Debug, Serialize)]
pub struct CoarseFreeInverse {
    pub l: usize,
    pub stencil_radius: i64,
    pub window_boxes: i64,
    /// Largest dropped-stencil magnitude estimate: the largest entry on the
    /// outermost kept shell.
    pub stencil_edge: f64,
    column: Vec<f64>,
}

impl CoarseFreeInverse {
    pub fn new(free: &TruncatedFreeGreen, stencil_radius: i64, window_boxes: i64) -> Result<Self> {
        let li = free.l as i64;
        if (stencil_radius + 1) * li > free.radius {
            return Err(invalid(
                "stencil_radius",
                format!("needs a free window of radius {}", (stencil_radius + 1) * li),
            ));
        }
        let s = stencil_radius;
        let width = (2 * s + 1) as usize;
        let mut stencil = vec![0.0; width * width];
        let mut stencil_edge: f64 = 0.0;
        for a in -s..=s {
            for b in -s..=s {
                let v = coarse_free_entry(free, [0, 0], [a * li, b * li]);
                stencil[((a + s) as usize) * width + (b + s) as usize] = v;
                if a.abs().max(b.abs()) == s {
                    stencil_edge = stencil_edge.max(v.abs());
                }
            }
        }
        let side = (2 * window_boxes + 1) as usize;
        let idx = |a: i64, b: i64| -> Option<usize> {
            let (p, q) = (a + window_boxes, b + window_boxes);
            if p >= 0 && q >= 0 && (p as usize) < side && (q as usize) < side {
                Some(p as usize * side + q as usize)
            } else {
                None
            }
        };
        let mut rows = Vec::with_capacity(side * side);
        for p in 0..side as i64 {
            for q in 0..side as i64 {
                let (a, b) = (p - window_boxes, q - window_boxes);
                let mut row = Vec::with_capacity(width * width);
                for da in -s..=s {
                    for db in -s..=s {
                        if let Some(j) = idx(a + da, b + db) {
                            row.push((j, stencil[((da + s) as usize) * width + (db + s) as usize]));
                        }
                    }
                }
                rows.push(row);
            }
        }
        let op = Csr::from_rows(rows);
        let chol = BandedCholesky::factor(&op)?;
        let mut column = vec![0.0; side * side];
        column[idx(0, 0).expect("origin")] = 1.0;
        chol.solve_in_place(&mut column);
        Ok(CoarseFreeInverse {
            l: free.l,
            stencil_radius,
            window_boxes,
            stencil_edge,
            column,
        })
    }

    /// `(QGQ*)⁻¹(y, y')` for labels `y, y' ∈ Lℤ²`; zero beyond the window.
    pub fn value(&self, y: Site, yp: Site) -> f64 {
        let li = self.l as i64;
        let (a, b) = ((y[0] - yp[0]) / li, (y[1] - yp[1]) / li);
        let side = 2 * self.window_boxes + 1;
        let (p, q) = (a + self.window_boxes, b + self.window_boxes);
        if p >= 0 && q >= 0 && p < side && q < side {
            self.column[(p * side + q) as usize]
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PairDeviation {
    pub x: Site,
    pub z: Site,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ImageDeviation {
    pub level: Level,
    pub image_radius: i64,
    pub pairs: usize,
    pub max_deviation: f64,
    /// The largest offenders, worst first.
    pub worst: Vec<PairDeviation>,
}

fn sample_pairs(points: &[Site], samples: Option<(usize, u64)>) -> Vec<(Site, Site)> {
    match samples {
        None => points
            .iter()
            .flat_map(|&x| points.iter().map(move |&z| (x, z)))
            .collect(),
        Some((count, seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    (
                        points[rng.random_range(0..points.len())],
                        points[rng.random_range(0..points.len())],
                    )
                })
                .collect()
        }
    }
}

fn summarize(level: Level, image_radius: i64, mut devs: Vec<PairDeviation>) -> ImageDeviation {
    devs.sort_by(|a, b| b.deviation.total_cmp(&a.deviation));
    ImageDeviation {
        level,
        image_radius,
        pairs: devs.len(),
        max_deviation: devs.first().map_or(0.0, |d| d.deviation),
        worst: devs.into_iter().take(5).collect(),
    }
}

/// `max |G(Ω)(x, z) − Σ_{z_j} G(x, z_j)|` over sampled pairs, the sum running
/// over the images of `z` within `image_radius`. Exhaustive when `samples` is
/// `None`.
pub fn fine_image_check(
    geom: &LatticeGeometry,
    free: &TruncatedFreeGreen,
    neumann: &OperatorKernel,
    image_radius: i64,
    samples: Option<(usize, u64)>,
) -> Result<ImageDeviation> {
    if free.radius < image_radius + geom.n() as i64 {
        return Err(invalid(
            "radius",
            format!("free window radius {} is below image radius + n", free.radius),
        ));
    }
    let points: Vec<Site> = (0..geom.num_sites()).map(|i| geom.site(i)).collect();
    let mut cache = std::collections::HashMap::new();
    let mut devs = Vec::new();
    for (x, z) in sample_pairs(&points, samples) {
        if !cache.contains_key(&z) {
            cache.insert(z, image_points(geom, z, image_radius, Level::Fine)?.points);
        }
        let sum: f64 = cache[&z].iter().map(|&zj| free.value(x, zj)).sum();
        let exact = neumann.matrix[(geom.index(x).unwrap(), geom.index(z).unwrap())];
        devs.push(PairDeviation {
            x,
            z,
            deviation: (exact - sum).abs(),
        });
    }
    Ok(summarize(Level::Fine, image_radius, devs))
}

/// Deviation of the free kernel alone (no images) from the Neumann kernel,
/// over pairs with `x` next to the boundary.
pub fn fine_single_image_deviation(
    geom: &LatticeGeometry,
    free: &TruncatedFreeGreen,
    neumann: &OperatorKernel,
) -> f64 {
    let n = geom.n() as i64;
    let mut worst: f64 = 0.0;
    for i in 0..geom.num_sites() {
        let x = geom.site(i);
        if !x.iter().any(|&c| c == 0 || c == n - 1) {
            continue;
        }
        for j in 0..geom.num_sites() {
            let z = geom.site(j);
            worst = worst.max((neumann.matrix[(i, j)] - free.value(x, z)).abs());
        }
    }
    worst
}

/// Coarse counterpart of [`fine_image_check`] for `(QG(Ω)Q*)⁻¹`.
pub fn coarse_image_check(
    geom: &LatticeGeometry,
    free_inverse: &CoarseFreeInverse,
    neumann_inverse: &OperatorKernel,
    image_radius: i64,
    samples: Option<(usize, u64)>,
) -> Result<ImageDeviation> {
    let reach = (image_radius + geom.n() as i64) / geom.l() as i64;
    if free_inverse.window_boxes < reach {
        return Err(invalid(
            "window_boxes",
            format!("coarse window of {} boxes is below the reach {reach}", free_inverse.window_boxes),
        ));
    }
    let points: Vec<Site> = (0..geom.num_boxes()).map(|k| geom.coarse_site(k)).collect();
    let mut devs = Vec::new();
    for (y, z) in sample_pairs(&points, samples) {
        let images = image_points(geom, z, image_radius, Level::Coarse)?.points;
        let sum: f64 = images.iter().map(|&zj| free_inverse.value(y, zj)).sum();
        let exact = neumann_inverse.matrix[(
            geom.coarse_index(y).unwrap(),
            geom.coarse_index(z).unwrap(),
        )];
        devs.push(PairDeviation {
            x: y,
            z,
            deviation: (exact - sum).abs(),
        });
    }
    Ok(summarize(Level::Coarse, image_radius, devs))
}

/// Upper estimate of the image-sum truncation error from a fitted decay
/// `C e^{−C₁d}`: every lattice point at distance beyond `margin` counted once,
/// `C Σ_{d>margin} 8d e^{−C₁d}`.
pub fn tail_tolerance(prefactor: f64, rate: f64, margin: i64) -> f64 {
    let mut total = 0.0;
    let mut d = margin.max(0) + 1;
    loop {
        let term = 8.0 * d as f64 * (-rate * d as f64).exp();
        total += term;
        if term < 1e-30 * total.max(1e-300) || d > margin + 100_000 {
            break;
        }
        d += 1;
    }
    prefactor * total
}

/// Reflects `x` into `[0, n)` along each axis (reflections about `−½` and
/// `n − ½`).
pub fn fold(x: Site, n: usize) -> Site {
    let n = n as i64;
    x.map(|c| {
        let r = c.rem_euclid(2 * n);
        if r < n {
            r
        } else {
            2 * n - 1 - r
        }
    })
}

/// A relation of the Neumann subspace that a field fails.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryViolation {
    pub site: Site,
    pub direction: usize,
    /// `"lower"` for `f(x) = f(x − e_μ)` at `x_μ = 0`, `"upper"` for
    /// `f(x + e_μ) = f(x)` at `x_μ = n − 1`.
    pub face: &'static str,
    pub difference: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubspaceReport {
    pub violation: Option<BoundaryViolation>,
    /// `max_{x∈Ω} |((−Δ_Ω+Q*Q)^ℓ f_Ω)(x) − ((−Δ+Q*Q)^ℓ f)(x)|` for `ℓ = 1..`.
    pub power_deviations: Vec<f64>,
    /// Same comparison for the Green operators, when a free kernel is given.
    pub green_deviation: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks the boundary relations of the Neumann subspace for `f`, then
/// compares powers (and optionally the inverse) of the Neumann and free
/// operators applied to `f`.
pub fn neumann_subspace_check(
    geom: &LatticeGeometry,
    f: &dyn Fn(Site) -> f64,
    powers: usize,
    free: Option<&TruncatedFreeGreen>,
    tolerance: f64,
) -> Result<SubspaceReport> {
    let n = geom.n() as i64;
    let mut violation = None;
    'outer: for mu in 0..2 {
        for t in 0..n {
            for (face, inside, outside) in [("lower", 0, -1), ("upper", n - 1, n)] {
                let mut x = [0, 0];
                x[mu] = inside;
                x[1 - mu] = t;
                let mut y = x;
                y[mu] = outside;
                let difference = f(x) - f(y);
                if difference.abs() > tolerance {
                    violation = Some(BoundaryViolation {
                        site: x,
                        direction: mu,
                        face,
                        difference,
                    });
                    break 'outer;
                }
            }
        }
    }
    if violation.is_some() {
        return Ok(SubspaceReport {
            violation,
            power_deviations: Vec::new(),
            green_deviation: None,
            tolerance,
            pass: false,
        });
    }
    let li = geom.l() as i64;
    let margin = (powers.max(1) as i64) * li;
    let ext = Window {
        lo: [-margin, -margin],
        side: [(n + 2 * margin) as usize; 2],
    };
    let ext_op = window_operator(&ext, geom.l())?;
    let fin_op = operator_matrix(geom);
    let mut ext_val: Vec<f64> = (0..ext.len()).map(|i| f(ext.site(i))).collect();
    let mut fin_val = DMatrix::from_fn(geom.num_sites(), 1, |i, _| f(geom.site(i)));
    let mut power_deviations = Vec::with_capacity(powers);
    for _ in 0..powers {
        ext_val = ext_op.mul_vec(&ext_val);
        fin_val = &fin_op * fin_val;
        let dev = (0..geom.num_sites())
            .map(|i| (fin_val[i] - ext_val[ext.index(geom.site(i)).unwrap()]).abs())
            .fold(0.0, f64::max);
        power_deviations.push(dev);
    }
    let green_deviation = match free {
        None => None,
        Some(free) => {
            let g = crate::linalg::spd_inverse(&fin_op, "-Δ_Ω + Q*Q")?;
            let base = DMatrix::from_fn(geom.num_sites(), 1, |i, _| f(geom.site(i)));
            let lhs = g * base;
            let w = free.window;
            let mut dev: f64 = 0.0;
            for i in 0..geom.num_sites() {
                let x = geom.site(i);
                let mut s = 0.0;
                for j in 0..w.len() {
                    let off = w.site(j);
                    let xp = [x[0] + off[0], x[1] + off[1]];
                    s += free.value(x, xp) * f(xp);
                }
                dev = dev.max((lhs[i] - s).abs());
            }
            Some(dev)
        }
    };
    let pass = power_deviations.iter().all(|&d| d <= tolerance)
        && green_deviation.is_none_or(|d| d <= tolerance);
    Ok(SubspaceReport {
        violation: None,
        power_deviations,
        green_deviation,
        tolerance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::assemble_green;
    use crate::lattice::{image_points_by_depth, reflect};

    #[test]
    fn free_kernel_constants_and_symmetry() {
        let free = TruncatedFreeGreen::new(24, 3).unwrap();
        for x in [[0, 0], [1, 2], [-3, 4]] {
            let mut s = 0.0;
            for j in 0..free.window.len() {
                let off = free.window.site(j);
                s += free.value(x, [x[0] + off[0], x[1] + off[1]]);
            }
            assert!((s - 1.0).abs() < 1e-8, "{s}");
        }
        // quarter turn about the cell centre (1, 1)
        let rot = |x: Site| [2 - x[1], x[0]];
        for x in [[0, 0], [2, 1], [5, -3]] {
            for xp in [[1, 1], [0, 2], [-4, 3]] {
                let d = free.value(x, xp) - free.value(rot(x), rot(xp));
                assert!(d.abs() < 1e-12);
            }
        }
        assert!(TruncatedFreeGreen::new(11, 3).is_err());
    }

    #[test]
    fn fine_images_reproduce_neumann_kernel() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let g = assemble_green(&geom).unwrap();
        let free = TruncatedFreeGreen::new(36 + 9, 3).unwrap();
        let dev = fine_image_check(&geom, &free, &g, 36, None).unwrap();
        assert!(dev.max_deviation < 1e-8, "{dev:?}");
        assert!(fine_single_image_deviation(&geom, &free, &g) > 1e-3);
    }

    #[test]
    fn box_relation_under_reflections() {
        let (n, l) = (9usize, 3usize);
        let box_of = |x: i64| x.div_euclid(l as i64) * l as i64;
        for upper in [false, true] {
            for y in (-30..30).step_by(3) {
                for x in -40..40 {
                    let p1y = reflect([y, 0], 0, upper, Level::Coarse, n, l)[0];
                    let px = reflect([x, 0], 0, upper, Level::Fine, n, l)[0];
                    assert_eq!(box_of(x) == p1y, box_of(px) == y);
                    // Q*P₁ = PQ*: the box of the reflected site is the reflected box
                    assert_eq!(box_of(px), reflect([box_of(x), 0], 0, upper, Level::Coarse, n, l)[0]);
                }
            }
        }
    }

    #[test]
    fn image_counts_by_depth() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        for k in 0..4 {
            let pts = image_points_by_depth(&geom, [2, 5], k, Level::Fine);
            assert_eq!(pts.len(), (2 * k + 1) * (2 * k + 1));
        }
    }

    #[test]
    fn subspace_membership() {
        let geom = LatticeGeometry::new(3, 1).unwrap();
        let constant = |_: Site| 2.5;
        let rep = neumann_subspace_check(&geom, &constant, 3, None, 1e-9).unwrap();
        assert!(rep.pass && rep.power_deviations.iter().all(|&d| d < 1e-12));
        let base: Vec<f64> = (0..81).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        let folded = |x: Site| base[geom.index(fold(x, 9)).unwrap()];
        let rep = neumann_subspace_check(&geom, &folded, 3, None, 1e-9).unwrap();
        assert!(rep.pass, "{rep:?}");
        let free = TruncatedFreeGreen::new(45, 3).unwrap();
        let rep = neumann_subspace_check(&geom, &folded, 1, Some(&free), 1e-9).unwrap();
        assert!(rep.green_deviation.unwrap() < 1e-9, "{rep:?}");
        let broken = |x: Site| if x == [-1, 4] { folded(x) + 1.0 } else { folded(x) };
        let rep = neumann_subspace_check(&geom, &broken, 3, None, 1e-9).unwrap();
        let v = rep.violation.unwrap();
        assert_eq!((v.site, v.direction, v.face), ([0, 4], 0, "lower"));
    }
}

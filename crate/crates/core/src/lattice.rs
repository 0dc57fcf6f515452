//! The fine lattice Ω, the coarse lattice Ω₁ of box labels, oriented bonds,
//! per-box spanning trees, reflections and image-point sets.
//!
//! Sites are `[x0, x1]` integer pairs. Fine sites are indexed row-major,
//! `index = x0·n + x1`; coarse labels are multiples of `L`, indexed the same
//! way on the `(n/L) × (n/L)` grid. Every bond is positively oriented,
//! `b₊ = b₋ + e_μ`, and at each site the μ = 0 bond precedes the μ = 1 bond.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

pub type Site = [i64; 2];

/// Largest accepted number of fine sites per side.
pub const DEFAULT_SIZE_CAP: usize = 243;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Bond {
    pub minus: usize,
    pub plus: usize,
    pub dir: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fine,
    Coarse,
}

#[derive(Clone, Debug)]
pub struct LatticeGeometry {
    l: usize,
    m: usize,
    n: usize,
    bonds: Vec<Bond>,
    /// `bond_at[2·site + μ]` is the bond leaving `site` in direction μ.
    bond_at: Vec<Option<usize>>,
    /// Bonds touching each site with the adjoint sign: +1 when the site is
    /// `b₋`, −1 when it is `b₊`.
    incident: Vec<Vec<(usize, f64)>>,
    site_box: Vec<usize>,
    box_sites: Vec<Vec<usize>>,
}

/// JSON-friendly summary of a geometry.
#[derive(Clone, Debug, Serialize)]
pub struct GeometryManifest {
    #[serde(rename = "L")]
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub sites: usize,
    pub bonds: usize,
    pub boxes: usize,
    pub site_order: &'static str,
    pub bond_order: &'static str,
    pub coarse_order: &'static str,
}

impl LatticeGeometry {
    /// Geometry with `n = L^(m+1)` sites per side, i.e. `L^m` boxes per side.
    pub fn new(l: usize, m: usize) -> Result<Self> {
        Self::with_cap(l, m, DEFAULT_SIZE_CAP)
    }

    pub fn with_cap(l: usize, m: usize, cap: usize) -> Result<Self> {
        if l % 2 == 0 {
            return Err(invalid("L", format!("L must be odd, got {l}")));
        }
        if l < 3 {
            return Err(invalid("L", format!("L must be at least 3, got {l}")));
        }
        if m < 1 {
            return Err(invalid("m", "m must be at least 1"));
        }
        let n = (m as u32 + 1)
            .try_into()
            .ok()
            .and_then(|e: u32| l.checked_pow(e))
            .filter(|&n| n <= cap)
            .ok_or_else(|| {
                invalid("m", format!("L^(m+1) exceeds the size cap of {cap} sites per side"))
            })?;

        let idx = |a: usize, b: usize| a * n + b;
        let mut bonds = Vec::with_capacity(2 * n * (n - 1));
        let mut bond_at = vec![None; 2 * n * n];
        let mut incident = vec![Vec::with_capacity(4); n * n];
        for a in 0..n {
            for b in 0..n {
                let here = idx(a, b);
                for dir in 0..2 {
                    let (na, nb) = if dir == 0 { (a + 1, b) } else { (a, b + 1) };
                    if na < n && nb < n {
                        let there = idx(na, nb);
                        bond_at[2 * here + dir] = Some(bonds.len());
                        incident[here].push((bonds.len(), 1.0));
                        incident[there].push((bonds.len(), -1.0));
                        bonds.push(Bond {
                            minus: here,
                            plus: there,
                            dir,
                        });
                    }
                }
            }
        }
        for list in incident.iter_mut() {
            list.sort_by_key(|&(b, _)| b);
        }

        let side = n / l;
        let mut site_box = vec![0; n * n];
        let mut box_sites = vec![Vec::with_capacity(l * l); side * side];
        for a in 0..n {
            for b in 0..n {
                let k = (a / l) * side + b / l;
                site_box[idx(a, b)] = k;
                box_sites[k].push(idx(a, b));
            }
        }
        Ok(LatticeGeometry {
            l,
            m,
            n,
            bonds,
            bond_at,
            incident,
            site_box,
            box_sites,
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Fine sites per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Coarse sites (boxes) per side.
    pub fn coarse_side(&self) -> usize {
        self.n / self.l
    }

    pub fn num_sites(&self) -> usize {
        self.n * self.n
    }

    pub fn num_boxes(&self) -> usize {
        self.box_sites.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond_from(&self, site: usize, dir: usize) -> Option<usize> {
        self.bond_at[2 * site + dir]
    }

    /// Bonds touching `site`, each with its adjoint sign (+1 at `b₋`, −1 at `b₊`).
    pub fn incident(&self, site: usize) -> &[(usize, f64)] {
        &self.incident[site]
    }

    pub fn site(&self, index: usize) -> Site {
        [(index / self.n) as i64, (index % self.n) as i64]
    }

    pub fn index(&self, x: Site) -> Option<usize> {
        let n = self.n as i64;
        if (0..n).contains(&x[0]) && (0..n).contains(&x[1]) {
            Some((x[0] * n + x[1]) as usize)
        } else {
            None
        }
    }

    pub fn contains(&self, x: Site) -> bool {
        self.index(x).is_some()
    }

    /// Coarse label (a fine-lattice site with coordinates divisible by L).
    pub fn coarse_site(&self, k: usize) -> Site {
        let side = self.coarse_side();
        let l = self.l as i64;
        [(k / side) as i64 * l, (k % side) as i64 * l]
    }

    pub fn coarse_index(&self, y: Site) -> Option<usize> {
        let l = self.l as i64;
        let side = self.coarse_side() as i64;
        if y[0] % l != 0 || y[1] % l != 0 {
            return None;
        }
        let (a, b) = (y[0] / l, y[1] / l);
        if (0..side).contains(&a) && (0..side).contains(&b) && y[0] >= 0 && y[1] >= 0 {
            Some((a * side + b) as usize)
        } else {
            None
        }
    }

    /// Label of the box containing `x`: the unique `y` with `y_μ ≤ x_μ < y_μ + L`.
    pub fn box_of(&self, x: Site) -> Result<Site> {
        let i = self.index(x).ok_or_else(|| Error::OutOfDomain {
            what: "fine site",
            value: format!("{x:?}"),
        })?;
        Ok(self.coarse_site(self.site_box[i]))
    }

    /// Coarse index of the box containing fine site `i`.
    pub fn box_index(&self, i: usize) -> usize {
        self.site_box[i]
    }

    /// Fine sites of box `k`, in row-major order.
    pub fn box_sites(&self, k: usize) -> &[usize] {
        &self.box_sites[k]
    }

    pub fn manifest(&self) -> GeometryManifest {
        GeometryManifest {
            l: self.l,
            m: self.m,
            n: self.n,
            sites: self.num_sites(),
            bonds: self.num_bonds(),
            boxes: self.num_boxes(),
            site_order: "row-major, index = x0*n + x1",
            bond_order: "by b_minus index; direction 0 before direction 1",
            coarse_order: "row-major over labels y = L*(k0, k1), index = k0*(n/L) + k1",
        }
    }

    /// Serpentine spanning tree of box `y`.
    pub fn spanning_tree(&self, y: Site) -> Result<SpanningTree> {
        let k = self.coarse_index(y).ok_or_else(|| Error::OutOfDomain {
            what: "coarse site",
            value: format!("{y:?}"),
        })?;
        Ok(self.spanning_tree_of(k))
    }

    pub fn spanning_tree_of(&self, k: usize) -> SpanningTree {
        let y = self.coarse_site(k);
        let l = self.l as i64;
        let mut path = Vec::with_capacity(self.l * self.l);
        for c in 0..l {
            let rows: Vec<i64> = if c % 2 == 0 {
                (0..l).rev().collect()
            } else {
                (0..l).collect()
            };
            for r in rows {
                path.push(self.index([y[0] + c, y[1] + r]).expect("box inside lattice"));
            }
        }
        let edges = path
            .windows(2)
            .map(|w| {
                let (tail, head) = (w[0], w[1]);
                let (ta, ha) = (self.site(tail), self.site(head));
                let dir = if ta[0] != ha[0] { 0 } else { 1 };
                let agrees = ha[dir] > ta[dir];
                let minus = if agrees { tail } else { head };
                let bond = self.bond_from(minus, dir).expect("tree edge is a lattice bond");
                TreeEdge {
                    bond,
                    tail,
                    head,
                    agrees,
                }
            })
            .collect();
        SpanningTree { label: y, edges }
    }
}

/// One tree edge, oriented along the traversal from `tail` to `head`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TreeEdge {
    pub bond: usize,
    pub tail: usize,
    pub head: usize,
    /// Whether the traversal direction matches the bond's lattice orientation.
    pub agrees: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpanningTree {
    pub label: Site,
    pub edges: Vec<TreeEdge>,
}

/// Reflection of coordinate μ about the lower boundary plane of Ω
/// (`x → −1 − x` on fine sites, `y → −L − y` on coarse labels) or the upper one
/// (`x → 2n − 1 − x`, resp. `y → 2n − L − y`).
pub fn reflect(x: Site, mu: usize, upper: bool, level: Level, n: usize, l: usize) -> Site {
    let (n, l) = (n as i64, l as i64);
    let width = match level {
        Level::Fine => 1,
        Level::Coarse => l,
    };
    let mut out = x;
    out[mu] = if upper {
        2 * n - width - x[mu]
    } else {
        -width - x[mu]
    };
    out
}

/// Orbit of `z` under the reflection group, truncated to `|w − z|∞ ≤ radius`.
#[derive(Clone, Debug, Serialize)]
pub struct ImageSet {
    pub seed: Site,
    pub radius: i64,
    pub level: Level,
    pub points: Vec<Site>,
}

fn axis_orbit(z: i64, radius: i64, level: Level, n: i64, l: i64) -> Vec<i64> {
    let width = match level {
        Level::Fine => 1,
        Level::Coarse => l,
    };
    let period = 2 * n;
    let kmax = radius / period + 2;
    let mut out = BTreeSet::new();
    for k in -kmax..=kmax {
        for w in [z + k * period, -width - z + k * period] {
            if (w - z).abs() <= radius {
                out.insert(w);
            }
        }
    }
    out.into_iter().collect()
}

pub fn image_points(geom: &LatticeGeometry, z: Site, radius: i64, level: Level) -> Result<ImageSet> {
    let inside = match level {
        Level::Fine => geom.contains(z),
        Level::Coarse => geom.coarse_index(z).is_some(),
    };
    if !inside {
        return Err(Error::OutOfDomain {
            what: "image seed",
            value: format!("{z:?}"),
        });
    }
    if radius < geom.n() as i64 {
        return Err(invalid("radius", format!("radius {radius} is below n = {}", geom.n())));
    }
    let (n, l) = (geom.n() as i64, geom.l() as i64);
    let xs = axis_orbit(z[0], radius, level, n, l);
    let ys = axis_orbit(z[1], radius, level, n, l);
    let points = xs
        .iter()
        .flat_map(|&a| ys.iter().map(move |&b| [a, b]))
        .collect();
    Ok(ImageSet {
        seed: z,
        radius,
        level,
        points,
    })
}

/// Images reachable from `z` by words of at most `depth` generating
/// reflections along each axis independently.
pub fn image_points_by_depth(geom: &LatticeGeometry, z: Site, depth: usize, level: Level) -> Vec<Site> {
    let (n, l) = (geom.n(), geom.l());
    let per_axis = |mu: usize| {
        let mut seen = BTreeSet::from([z[mu]]);
        let mut frontier = vec![z[mu]];
        for _ in 0..depth {
            let mut next = Vec::new();
            for &w in &frontier {
                for upper in [false, true] {
                    let mut p = [0, 0];
                    p[mu] = w;
                    let r = reflect(p, mu, upper, level, n, l)[mu];
                    if seen.insert(r) {
                        next.push(r);
                    }
                }
            }
            frontier = next;
        }
        seen.into_iter().collect::<Vec<_>>()
    };
    let (xs, ys) = (per_axis(0), per_axis(1));
    xs.iter()
        .flat_map(|&a| ys.iter().map(move |&b| [a, b]))
        .collect()
}

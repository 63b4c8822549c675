//! Boxes of Z^d, blown-up regions inside them, and mesoscopic box grids.
//!
//! Sites of a box are stored row-major with the last coordinate fastest.
//! The box `Λ_n` is `[-n/2, n/2]^d ∩ Z^d`, so it always has an odd number of
//! sites per axis and is centred at the origin.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;

use crate::error::{config, Result};

pub const MAX_DIM: usize = 3;
pub type Coord = [i64; MAX_DIM];

/// Marker in the neighbour table for a neighbour on the outer boundary.
pub const OUTSIDE: u32 = u32::MAX;

/// Continuum region inside `[-1/2, 1/2]^d`, scaled by `n` to give `D_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum Shape {
    /// Closed ball of the given radius.
    Disc { radius: f64 },
    /// Axis-aligned cube of the given side, centred at the origin.
    Square { side: f64 },
    /// Closed spherical shell `inner <= |x| <= outer`.
    Annulus { inner: f64, outer: f64 },
}

impl Shape {
    /// Distance from the shape to the boundary of `[-1/2, 1/2]^d`.
    pub fn iota(&self) -> f64 {
        match *self {
            Shape::Disc { radius } => 0.5 - radius,
            Shape::Square { side } => 0.5 - side / 2.0,
            Shape::Annulus { outer, .. } => 0.5 - outer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Disc { radius } => radius > 0.0,
            Shape::Square { side } => side > 0.0,
            Shape::Annulus { inner, outer } => inner >= 0.0 && outer > inner,
        };
        if !ok {
            return Err(config("shape parameters must be positive and ordered"));
        }
        if self.iota() <= 0.0 {
            return Err(config(
                "shape touches the boundary of the unit box (iota <= 0)",
            ));
        }
        Ok(())
    }

    /// Membership of the lattice point `x` in `n·D`.
    pub fn contains(&self, x: &[i64], n: usize) -> bool {
        let n = n as f64;
        let eps = 1e-9;
        let r2: f64 = x.iter().map(|&c| (c * c) as f64).sum();
        match *self {
            Shape::Disc { radius } => r2.sqrt() <= radius * n + eps,
            Shape::Square { side } => x.iter().all(|&c| (c.abs() as f64) <= side * n / 2.0 + eps),
            Shape::Annulus { inner, outer } => {
                let r = r2.sqrt();
                r >= inner * n - eps && r <= outer * n + eps
            }
        }
    }
}

/// A box of Z^d together with a distinguished region inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDomain {
    d: usize,
    n: usize,
    side: usize,
    lo: i64,
    shape: Option<Shape>,
    iota: f64,
    region: Vec<bool>,
    nbr: Vec<u32>,
}

impl LatticeDomain {
    /// `Λ_n` with region `D_n = nD ∩ Z^d`.
    pub fn build(d: usize, n: usize, shape: Shape) -> Result<Self> {
        if n < 3 {
            return Err(config("n must be at least 3"));
        }
        shape.validate()?;
        let mut dom = Self::full_box(d, n)?;
        let mut count = 0;
        for i in 0..dom.len() {
            let c = dom.coord(i);
            let inside = shape.contains(&c[..d], n);
            dom.region[i] = inside;
            count += inside as usize;
        }
        if count == 0 {
            return Err(config("region is empty at this resolution"));
        }
        dom.shape = Some(shape);
        dom.iota = shape.iota();
        Ok(dom)
    }

    /// `Λ_n` whose region is the whole box.
    pub fn full_box(d: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(config("n must be positive"));
        }
        let half = (n / 2) as i64;
        Self::make(d, n, 2 * half as usize + 1, -half)
    }

    /// A box with an arbitrary number of sites per axis (even sides allowed);
    /// coordinates start at `-((side - 1) / 2)`. Region is the whole box.
    pub fn with_side(d: usize, side: usize) -> Result<Self> {
        if side == 0 {
            return Err(config("side must be positive"));
        }
        Self::make(d, side, side, -(((side - 1) / 2) as i64))
    }

    fn make(d: usize, n: usize, side: usize, lo: i64) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(config("dimension must be 1, 2 or 3"));
        }
        let len = side.pow(d as u32);
        let mut dom = LatticeDomain {
            d,
            n,
            side,
            lo,
            shape: None,
            iota: 0.0,
            region: vec![true; len],
            nbr: Vec::new(),
        };
        dom.build_neighbors();
        Ok(dom)
    }

    fn build_neighbors(&mut self) {
        let len = self.len();
        let mut nbr = vec![OUTSIDE; len * 2 * self.d];
        for i in 0..len {
            let c = self.coord(i);
            for k in 0..self.d {
                for (s, delta) in [-1i64, 1].into_iter().enumerate() {
                    let mut y = c;
                    y[k] += delta;
                    if let Some(j) = self.index(&y) {
                        nbr[i * 2 * self.d + 2 * k + s] = j as u32;
                    }
                }
            }
        }
        self.nbr = nbr;
    }

    /// Replace the region by an explicit mask.
    pub fn with_region(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(config("region mask has wrong length"));
        }
        self.region = mask;
        self.shape = None;
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn n(&self) -> usize {
        self.n
    }
    /// Sites per axis.
    pub fn side(&self) -> usize {
        self.side
    }
    /// Coordinate of the first site along every axis.
    pub fn lo(&self) -> i64 {
        self.lo
    }
    pub fn shape(&self) -> Option<Shape> {
        self.shape
    }
    pub fn iota(&self) -> f64 {
        self.iota
    }
    pub fn len(&self) -> usize {
        self.region.len()
    }
    pub fn is_empty(&self) -> bool {
        self.region.is_empty()
    }
    pub fn region(&self) -> &[bool] {
        &self.region
    }
    pub fn in_region(&self, i: usize) -> bool {
        self.region[i]
    }
    pub fn region_sites(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.region[i]).collect()
    }
    pub fn region_len(&self) -> usize {
        self.region.iter().filter(|&&b| b).count()
    }

    pub fn coord(&self, mut i: usize) -> Coord {
        let mut c = [0i64; MAX_DIM];
        for k in (0..self.d).rev() {
            c[k] = (i % self.side) as i64 + self.lo;
            i /= self.side;
        }
        c
    }

    pub fn index(&self, c: &[i64]) -> Option<usize> {
        let mut i = 0usize;
        for &ck in c.iter().take(self.d) {
            let o = ck - self.lo;
            if o < 0 || o >= self.side as i64 {
                return None;
            }
            i = i * self.side + o as usize;
        }
        Some(i)
    }

    /// Index of the site closest to the origin.
    pub fn origin(&self) -> usize {
        self.index(&[0; MAX_DIM]).unwrap_or(0)
    }

    /// Neighbours of site `i`: `2d` entries, [`OUTSIDE`] for boundary ones.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.nbr[i * 2 * self.d..(i + 1) * 2 * self.d]
    }

    /// Number of neighbours on the outer boundary.
    pub fn outer_degree(&self, i: usize) -> usize {
        self.neighbors(i).iter().filter(|&&j| j == OUTSIDE).count()
    }

    /// Checkerboard colour of site `i`.
    #[inline]
    pub fn parity(&self, i: usize) -> usize {
        let c = self.coord(i);
        (c[..self.d].iter().sum::<i64>().rem_euclid(2)) as usize
    }

    /// Sites of the box adjacent to its outer boundary.
    pub fn inner_boundary(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.outer_degree(i) > 0)
            .collect()
    }

    /// Points of Z^d outside the box with a neighbour inside it.
    pub fn outer_boundary(&self) -> Vec<Coord> {
        let mut out = Vec::new();
        for i in self.inner_boundary() {
            let c = self.coord(i);
            for k in 0..self.d {
                for delta in [-1i64, 1] {
                    let mut y = c;
                    y[k] += delta;
                    if self.index(&y).is_none() && !out.contains(&y) {
                        out.push(y);
                    }
                }
            }
        }
        out
    }

    /// Minimal number of steps from site `i` to the outer boundary.
    pub fn distance_to_outside(&self, i: usize) -> i64 {
        let c = self.coord(i);
        let hi = self.lo + self.side as i64 - 1;
        c[..self.d]
            .iter()
            .map(|&x| (x - self.lo + 1).min(hi - x + 1))
            .min()
            .unwrap_or(0)
    }
}

/// Closest even integer to `n^alpha`, ties upward.
pub fn box_side_for(n: usize, alpha: f64) -> usize {
    let x = (n as f64).powf(alpha);
    2 * ((x / 2.0 + 0.5 + 1e-12).floor() as usize)
}

/// Boxes of a fixed even side tiling part of the region.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MesoGrid {
    pub alpha: f64,
    /// Offset after reduction modulo `box_side`.
    pub x0: Coord,
    pub box_side: usize,
    pub centers: Vec<Coord>,
    /// Site index of each centre in the parent domain.
    pub center_sites: Vec<usize>,
    /// Pairs of boxes sharing a side, `(i, j)` with `i < j`.
    pub adjacency: Vec<(usize, usize)>,
    /// Sorted site indices of the union of inner boundaries.
    pub skeleton: Vec<usize>,
    /// Set when no box fits.
    pub empty: bool,
}

impl MesoGrid {
    pub fn build(domain: &LatticeDomain, alpha: f64, x0: &[i64]) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(config("alpha must lie in (0, 1)"));
        }
        let side = box_side_for(domain.n(), alpha);
        let mut g = Self::with_side(domain, side, x0)?;
        g.alpha = alpha;
        Ok(g)
    }

    pub fn with_side(domain: &LatticeDomain, box_side: usize, x0: &[i64]) -> Result<Self> {
        if box_side < 2 || !box_side.is_multiple_of(2) {
            return Err(config("box side must be an even integer >= 2"));
        }
        let d = domain.d();
        let s = box_side as i64;
        let h = s / 2;
        let mut off = [0i64; MAX_DIM];
        for k in 0..d {
            off[k] = x0.get(k).copied().unwrap_or(0).rem_euclid(s);
        }
        let lo = domain.lo();
        let hi = lo + domain.side() as i64 - 1;
        // Candidate centres along one axis.
        let axis: Vec<Vec<i64>> = (0..d)
            .map(|k| {
                let first = lo + h + (off[k] - (lo + h)).rem_euclid(s);
                let mut v = Vec::new();
                let mut c = first;
                while c + h <= hi {
                    v.push(c);
                    c += s;
                }
                v
            })
            .collect();
        let mut centers = Vec::new();
        let total: usize = axis.iter().map(|a| a.len()).product();
        for t in 0..total {
            let mut c = [0i64; MAX_DIM];
            let mut r = t;
            for k in (0..d).rev() {
                c[k] = axis[k][r % axis[k].len()];
                r /= axis[k].len();
            }
            if box_in_region(domain, &c, h) {
                centers.push(c);
            }
        }
        let lookup: BTreeMap<Coord, usize> =
            centers.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut adjacency = Vec::new();
        for (i, c) in centers.iter().enumerate() {
            for k in 0..d {
                let mut y = *c;
                y[k] += s;
                if let Some(&j) = lookup.get(&y) {
                    adjacency.push((i, j));
                }
            }
        }
        let mut skel = vec![false; domain.len()];
        for c in &centers {
            for_each_box_site(d, c, h, |y, on_edge| {
                if on_edge {
                    skel[domain.index(&y).unwrap()] = true;
                }
            });
        }
        let skeleton: Vec<usize> = (0..domain.len()).filter(|&i| skel[i]).collect();
        let center_sites = centers.iter().map(|c| domain.index(c).unwrap()).collect();
        Ok(MesoGrid {
            alpha: 0.0,
            x0: off,
            box_side,
            empty: centers.is_empty(),
            centers,
            center_sites,
            adjacency,
            skeleton,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Site indices of box `b`, inner boundary first flag per site.
    pub fn box_sites(&self, domain: &LatticeDomain, b: usize) -> Vec<(usize, bool)> {
        let mut out = Vec::new();
        let h = (self.box_side / 2) as i64;
        for_each_box_site(domain.d(), &self.centers[b], h, |y, edge| {
            out.push((domain.index(&y).unwrap(), edge));
        });
        out
    }
}

fn box_in_region(domain: &LatticeDomain, c: &Coord, h: i64) -> bool {
    let mut ok = true;
    for_each_box_site(domain.d(), c, h, |y, _| {
        if ok {
            ok = matches!(domain.index(&y), Some(i) if domain.in_region(i));
        }
    });
    ok
}

/// Visit `c + [-h, h]^d`, flagging sites on the box's inner boundary.
pub(crate) fn for_each_box_site<F: FnMut(Coord, bool)>(d: usize, c: &Coord, h: i64, mut f: F) {
    let w = (2 * h + 1) as usize;
    let total = w.pow(d as u32);
    for t in 0..total {
        let mut y = *c;
        let mut r = t;
        let mut edge = false;
        for k in (0..d).rev() {
            let o = (r % w) as i64 - h;
            r /= w;
            y[k] += o;
            edge |= o.abs() == h;
        }
        f(y, edge);
    }
}

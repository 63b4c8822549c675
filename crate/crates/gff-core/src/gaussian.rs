//! The unconditioned field: covariance operators, exact sampling, harmonic
//! extension and the domain Markov decomposition.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{config, Error, Result};
use crate::lattice::{for_each_box_site, Coord, LatticeDomain, MesoGrid, MAX_DIM, OUTSIDE};
use crate::linalg::{power_iteration, BandedCholesky, SineBasis};
use crate::rng::Stream;

/// Spin dimension, mass and coupling of the field.
///
/// The precision matrix is `g(-Δ) + m²` with zero boundary values, i.e.
/// diagonal `2dg + m²` and off-diagonal `-g` between neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FieldParams {
    pub spin: usize,
    pub m2: f64,
    pub g: f64,
}

impl FieldParams {
    pub fn new(spin: usize, m2: f64, g: f64) -> Result<Self> {
        if spin == 0 {
            return Err(config("spin dimension must be at least 1"));
        }
        if !(m2 >= 0.0 && m2.is_finite()) {
            return Err(config("mass squared must be finite and non-negative"));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(config("coupling must be positive"));
        }
        Ok(FieldParams { spin, m2, g })
    }

    /// Default coupling: `1/(2π)` without mass, `1` with mass.
    pub fn with_default_coupling(spin: usize, m2: f64) -> Result<Self> {
        let g = if m2 == 0.0 {
            1.0 / (2.0 * core::f64::consts::PI)
        } else {
            1.0
        };
        Self::new(spin, m2, g)
    }

    pub fn massless(spin: usize) -> Self {
        Self::with_default_coupling(spin, 0.0).expect("valid")
    }

    pub fn massive(spin: usize, m2: f64) -> Self {
        Self::with_default_coupling(spin, m2).expect("valid")
    }

    /// Diagonal of the precision matrix.
    pub fn diag(&self, d: usize) -> f64 {
        2.0 * d as f64 * self.g + self.m2
    }
}

/// One configuration: `spin` reals per site, stored site-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub params: FieldParams,
    pub domain: Arc<LatticeDomain>,
    pub values: Vec<f64>,
}

impl FieldState {
    pub fn zeros(params: FieldParams, domain: Arc<LatticeDomain>) -> Self {
        let len = domain.len() * params.spin;
        FieldState {
            params,
            domain,
            values: vec![0.0; len],
        }
    }

    pub fn constant(params: FieldParams, domain: Arc<LatticeDomain>, v: &[f64]) -> Self {
        let mut s = Self::zeros(params, domain);
        let n = params.spin;
        for c in s.values.chunks_mut(n) {
            c.copy_from_slice(&v[..n]);
        }
        s
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        let n = self.params.spin;
        &self.values[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.params.spin;
        &mut self.values[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn norm_at(&self, i: usize) -> f64 {
        self.at(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// One coordinate as a scalar field.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(k)
            .step_by(self.params.spin)
            .copied()
            .collect()
    }

    pub fn set_coordinate(&mut self, k: usize, v: &[f64]) {
        let n = self.params.spin;
        for (i, x) in v.iter().enumerate() {
            self.values[i * n + k] = *x;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.domain.len())
            .map(|i| self.norm_at(i))
            .fold(0.0, f64::max)
    }

    /// Copy of the values on a smaller domain whose sites all lie in this one
    /// (e.g. `Λ_n` inside the `Λ_{2n}` of an annulus-clamped run).
    pub fn restrict(&self, inner: Arc<LatticeDomain>) -> Result<FieldState> {
        let n = self.params.spin;
        let mut out = FieldState::zeros(self.params, inner.clone());
        for i in 0..inner.len() {
            let j = self
                .domain
                .index(&inner.coord(i))
                .ok_or_else(|| config("restriction target is not contained in the domain"))?;
            out.values[i * n..(i + 1) * n].copy_from_slice(self.at(j));
        }
        Ok(out)
    }
}

/// Access to `(g(-Δ) + m²)^{-1}` on a full box with zero boundary values.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    domain: Arc<LatticeDomain>,
    params: FieldParams,
    basis: SineBasis,
}

impl GreenOperator {
    pub fn new(domain: Arc<LatticeDomain>, params: FieldParams) -> Self {
        let basis = SineBasis::new(domain.d(), domain.side(), params.g, params.m2);
        GreenOperator {
            domain,
            params,
            basis,
        }
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }
    pub fn params(&self) -> FieldParams {
        self.params
    }
    pub fn basis(&self) -> &SineBasis {
        &self.basis
    }

    /// Entry `G(x, y)`.
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.basis.green(x, y)
    }

    /// Column `G(·, y)` by one spectral solve.
    pub fn column(&self, y: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.domain.len()];
        e[y] = 1.0;
        self.apply(&mut e);
        e
    }

    /// In-place `v ← G v`.
    pub fn apply(&self, v: &mut [f64]) {
        let mut scratch = Vec::new();
        self.basis.apply_inverse_power(v, 1.0, &mut scratch);
    }

    /// Entry of the massive whole-space kernel, computed on boxes padded until
    /// successive paddings agree to `tol`. Returns `(value, padding used)`.
    pub fn whole_space_value(
        d: usize,
        params: FieldParams,
        x: &[i64],
        y: &[i64],
        tol: f64,
    ) -> Result<(f64, usize)> {
        if params.m2 <= 0.0 {
            return Err(config("the whole-space kernel needs a positive mass"));
        }
        let span = x
            .iter()
            .zip(y)
            .map(|(a, b)| a.abs().max(b.abs()))
            .max()
            .unwrap_or(0) as usize;
        let mut pad = 8usize;
        let mut prev = f64::NAN;
        loop {
            let n = 2 * (span + pad);
            let dom = LatticeDomain::full_box(d, n)?;
            let basis = SineBasis::new(d, dom.side(), params.g, params.m2);
            let v = basis.green(dom.index(x).unwrap(), dom.index(y).unwrap());
            if (v - prev).abs() <= tol {
                return Ok((v, pad));
            }
            if pad > 512 {
                return Err(Error::Numeric {
                    what: "padding did not converge".into(),
                    residual: (v - prev).abs(),
                });
            }
            prev = v;
            pad *= 2;
        }
    }
}

/// Draw an exact sample on the full box using the sine eigenbasis.
pub fn sample_field(
    params: FieldParams,
    domain: &Arc<LatticeDomain>,
    stream: Stream,
) -> FieldState {
    let basis = SineBasis::new(domain.d(), domain.side(), params.g, params.m2);
    sample_with_basis(params, domain, &basis, stream)
}

/// As [`sample_field`], reusing a precomputed basis.
pub fn sample_with_basis(
    params: FieldParams,
    domain: &Arc<LatticeDomain>,
    basis: &SineBasis,
    stream: Stream,
) -> FieldState {
    let len = domain.len();
    let mut state = FieldState::zeros(params, domain.clone());
    let mut coef = vec![0.0; len];
    let mut scratch = Vec::new();
    for k in 0..params.spin {
        let mut rng = stream.rng(k as u32, 0);
        for (t, c) in coef.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *c = z / basis.eigenvalue(t).sqrt();
        }
        basis.transform(&mut coef, &mut scratch);
        state.set_coordinate(k, &coef);
    }
    state
}

/// Precision matrix restricted to the sites not in a fixed set, factored.
#[derive(Debug, Clone)]
pub struct MaskedPrecision {
    free: Vec<usize>,
    pos: Vec<u32>,
    chol: BandedCholesky,
    params: FieldParams,
}

impl MaskedPrecision {
    pub fn new(domain: &LatticeDomain, params: FieldParams, fixed: &[bool]) -> Result<Self> {
        let free: Vec<usize> = (0..domain.len()).filter(|&i| !fixed[i]).collect();
        let mut pos = vec![u32::MAX; domain.len()];
        for (p, &i) in free.iter().enumerate() {
            pos[i] = p as u32;
        }
        let mut bw = 0usize;
        for (p, &i) in free.iter().enumerate() {
            for &j in domain.neighbors(i) {
                if j != OUTSIDE && pos[j as usize] != u32::MAX {
                    bw = bw.max(p.abs_diff(pos[j as usize] as usize));
                }
            }
        }
        let diag = params.diag(domain.d());
        let chol = BandedCholesky::factor(free.len(), bw, |a, b| {
            if a == b {
                return diag;
            }
            let sb = free[b] as u32;
            if domain.neighbors(free[a]).contains(&sb) {
                -params.g
            } else {
                0.0
            }
        })?;
        Ok(MaskedPrecision {
            free,
            pos,
            chol,
            params,
        })
    }

    pub fn free_sites(&self) -> &[usize] {
        &self.free
    }

    /// Position of site `i` among the free sites.
    pub fn position(&self, i: usize) -> Option<usize> {
        let p = self.pos[i];
        (p != u32::MAX).then_some(p as usize)
    }

    /// Solve on the free sites (vector indexed by free position).
    pub fn solve(&self, rhs: &mut [f64]) {
        self.chol.solve(rhs);
    }

    /// Exact zero-boundary sample on the free sites (zero on fixed sites).
    pub fn sample(&self, domain: &LatticeDomain, stream: Stream) -> Vec<f64> {
        let n = self.params.spin;
        let mut out = vec![0.0; domain.len() * n];
        let mut z = vec![0.0; self.free.len()];
        for k in 0..n {
            let mut rng = stream.rng(k as u32, 1);
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            self.chol.backward(&mut z);
            for (p, &i) in self.free.iter().enumerate() {
                out[i * n + k] = z[p];
            }
        }
        out
    }

    /// Green function of the masked region between two free sites.
    pub fn green(&self, x: usize, y: usize) -> Option<f64> {
        let (px, py) = (self.position(x)?, self.position(y)?);
        let mut e = vec![0.0; self.free.len()];
        e[py] = 1.0;
        self.solve(&mut e);
        Some(e[px])
    }
}

/// Harmonic extension of a field from a source set.
#[derive(Debug, Clone)]
pub struct HarmonicExtension {
    pub source: Vec<bool>,
    /// Site-major values, `spin` per site.
    pub values: Vec<f64>,
    pub spin: usize,
    /// Max-norm residual of the harmonic equation off the source set.
    pub residual: f64,
    /// Set when the source set is empty (the extension is identically zero).
    pub empty_source: bool,
}

impl HarmonicExtension {
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.spin..(i + 1) * self.spin]
    }
}

/// Reusable solver for harmonic extensions from a fixed source set.
#[derive(Debug, Clone)]
pub struct HarmonicSolver {
    domain: Arc<LatticeDomain>,
    params: FieldParams,
    source: Vec<bool>,
    prec: Option<MaskedPrecision>,
}

impl HarmonicSolver {
    pub fn new(domain: Arc<LatticeDomain>, params: FieldParams, source: &[usize]) -> Result<Self> {
        let mut mask = vec![false; domain.len()];
        for &i in source {
            mask[i] = true;
        }
        let prec = if mask.iter().all(|&b| b) {
            None
        } else {
            Some(MaskedPrecision::new(&domain, params, &mask)?)
        };
        Ok(HarmonicSolver {
            domain,
            params,
            source: mask,
            prec,
        })
    }

    pub fn source(&self) -> &[bool] {
        &self.source
    }

    pub fn extend(&self, state: &FieldState) -> Result<HarmonicExtension> {
        let n = self.params.spin;
        let dom = &self.domain;
        let mut values = vec![0.0; dom.len() * n];
        for i in 0..dom.len() {
            if self.source[i] {
                values[i * n..(i + 1) * n].copy_from_slice(state.at(i));
            }
        }
        let empty = !self.source.iter().any(|&b| b);
        if let Some(prec) = &self.prec {
            let mut rhs = vec![0.0; prec.free_sites().len()];
            for k in 0..n {
                for (p, &w) in prec.free_sites().iter().enumerate() {
                    let mut s = 0.0;
                    for &z in dom.neighbors(w) {
                        if z != OUTSIDE && self.source[z as usize] {
                            s += state.at(z as usize)[k];
                        }
                    }
                    rhs[p] = self.params.g * s;
                }
                prec.solve(&mut rhs);
                for (p, &w) in prec.free_sites().iter().enumerate() {
                    values[w * n + k] = rhs[p];
                }
            }
        }
        let residual = harmonic_residual(dom, self.params, &self.source, &values);
        let scale = state
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1.0);
        if residual > 1e-10 * scale {
            return Err(Error::Numeric {
                what: "harmonic extension residual too large".into(),
                residual,
            });
        }
        Ok(HarmonicExtension {
            source: self.source.clone(),
            values,
            spin: n,
            residual,
            empty_source: empty,
        })
    }
}

/// Max-norm of `(g(-Δ) + m²) h` over sites outside `source`.
pub fn harmonic_residual(
    domain: &LatticeDomain,
    params: FieldParams,
    source: &[bool],
    values: &[f64],
) -> f64 {
    let n = params.spin;
    let diag = params.diag(domain.d());
    let mut worst = 0.0f64;
    for i in 0..domain.len() {
        if source[i] {
            continue;
        }
        for k in 0..n {
            let mut r = diag * values[i * n + k];
            for &j in domain.neighbors(i) {
                if j != OUTSIDE {
                    r -= params.g * values[j as usize * n + k];
                }
            }
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Harmonic extension of `state` from the sites `source`.
pub fn harmonic_extend(state: &FieldState, source: &[usize]) -> Result<HarmonicExtension> {
    HarmonicSolver::new(state.domain.clone(), state.params, source)?.extend(state)
}

/// Split `state` into its harmonic extension from `source` and the remainder,
/// which vanishes on `source`.
pub fn markov_decompose(
    state: &FieldState,
    source: &[usize],
) -> Result<(HarmonicExtension, FieldState)> {
    let h = harmonic_extend(state, source)?;
    let mut rem = state.clone();
    for (v, hv) in rem.values.iter_mut().zip(&h.values) {
        *v -= hv;
    }
    for &i in source {
        rem.at_mut(i).iter_mut().for_each(|v| *v = 0.0);
    }
    Ok((h, rem))
}

/// Harmonic measure of a box of even side from points near its centre.
///
/// Inside a box `B` the extension from the skeleton only sees the values on
/// the inner boundary of `B`, so `h(x_B + y) = Σ_z w_y(z) φ(x_B + z)` with
/// weights independent of the box position.
#[derive(Debug, Clone)]
pub struct BoxHarmonic {
    pub box_side: usize,
    pub d: usize,
    /// Offsets of the inner-boundary sites relative to the centre.
    pub ring: Vec<Coord>,
    /// Evaluation offsets and their weights over `ring`.
    pub points: Vec<(Coord, Vec<f64>)>,
    /// Green function of the box interior at its centre, `G_B(x_B, x_B)`.
    pub center_green: f64,
}

impl BoxHarmonic {
    pub fn new(d: usize, box_side: usize, params: FieldParams, offsets: &[Coord]) -> Result<Self> {
        if box_side < 2 || !box_side.is_multiple_of(2) {
            return Err(config("box side must be even and >= 2"));
        }
        let h = (box_side / 2) as i64;
        let mut ring = Vec::new();
        for_each_box_site(d, &[0; MAX_DIM], h, |y, edge| {
            if edge {
                ring.push(y);
            }
        });
        let inner = LatticeDomain::with_side(d, box_side - 1)?;
        let basis = SineBasis::new(d, inner.side(), params.g, params.m2);
        let center_green = basis.green(inner.origin(), inner.origin());
        let mut points = Vec::new();
        let mut scratch = Vec::new();
        for off in offsets {
            if off[..d].iter().any(|c| c.abs() > h) {
                return Err(config("evaluation offset outside the box"));
            }
            let mut w = vec![0.0; ring.len()];
            if off[..d].iter().any(|c| c.abs() == h) {
                let r = ring.iter().position(|z| z == off).unwrap();
                w[r] = 1.0;
            } else {
                let mut col = vec![0.0; inner.len()];
                col[inner.index(off).unwrap()] = 1.0;
                basis.apply_inverse_power(&mut col, 1.0, &mut scratch);
                for (r, z) in ring.iter().enumerate() {
                    for k in 0..d {
                        for delta in [-1i64, 1] {
                            let mut y = *z;
                            y[k] += delta;
                            if let Some(j) = inner.index(&y) {
                                w[r] += params.g * col[j];
                            }
                        }
                    }
                }
            }
            points.push((*off, w));
        }
        Ok(BoxHarmonic {
            box_side,
            d,
            ring,
            points,
            center_green,
        })
    }

    /// Extension values at every evaluation offset of box `b` (one N-vector per offset).
    pub fn evaluate(&self, state: &FieldState, grid: &MesoGrid, b: usize) -> Vec<Vec<f64>> {
        let dom = &state.domain;
        let n = state.params.spin;
        let c = grid.centers[b];
        let ring_sites: Vec<usize> = self
            .ring
            .iter()
            .map(|z| {
                let mut y = c;
                for k in 0..self.d {
                    y[k] += z[k];
                }
                dom.index(&y).unwrap()
            })
            .collect();
        self.points
            .iter()
            .map(|(_, w)| {
                let mut v = vec![0.0; n];
                for (r, &s) in ring_sites.iter().enumerate() {
                    if w[r] != 0.0 {
                        for k in 0..n {
                            v[k] += w[r] * state.at(s)[k];
                        }
                    }
                }
                v
            })
            .collect()
    }
}

/// Extension from the skeleton evaluated at every box centre.
pub fn center_values(state: &FieldState, grid: &MesoGrid, bh: &BoxHarmonic) -> Vec<Vec<f64>> {
    let zero = bh
        .points
        .iter()
        .position(|(o, _)| o.iter().all(|&c| c == 0))
        .expect("centre offset missing");
    (0..grid.len())
        .map(|b| bh.evaluate(state, grid, b).swap_remove(zero))
        .collect()
}

/// Covariance of the discrete gradients of the centre values.
#[derive(Debug, Clone)]
pub struct GradientCov {
    /// `(box, axis)` for every label with a neighbour box in direction `axis`.
    pub labels: Vec<(usize, usize)>,
    pub matrix: Vec<f64>,
    pub diag_max: f64,
    pub lambda_max: f64,
    pub degenerate: bool,
}

/// Covariance matrix of `h_{B + side·e_p} - h_B` over all boxes and axes.
pub fn gradient_process_cov(green: &GreenOperator, grid: &MesoGrid) -> Result<GradientCov> {
    let dom = green.domain().clone();
    let params = green.params();
    let d = dom.d();
    let inner = SineBasis::new(d, grid.box_side - 1, params.g, params.m2);
    let gb = {
        let c = (grid.box_side - 1) / 2;
        let mut idx = 0;
        for _ in 0..d {
            idx = idx * (grid.box_side - 1) + c;
        }
        inner.green(idx, idx)
    };
    let mut labels = Vec::new();
    let mut partner = Vec::new();
    for &(i, j) in &grid.adjacency {
        let ci = grid.centers[i];
        let cj = grid.centers[j];
        let axis = (0..d).find(|&k| ci[k] != cj[k]).unwrap();
        labels.push((i, axis));
        partner.push(j);
    }
    let m = labels.len();
    let nb = grid.len();
    // Covariance of centre values: G_Λ between centres minus G_B on the diagonal.
    let mut hc = vec![0.0; nb * nb];
    for a in 0..nb {
        for b in a..nb {
            let mut v = green.value(grid.center_sites[a], grid.center_sites[b]);
            if a == b {
                v -= gb;
            }
            hc[a * nb + b] = v;
            hc[b * nb + a] = v;
        }
    }
    let mut matrix = vec![0.0; m * m];
    for p in 0..m {
        for q in 0..m {
            let (b1, b1p) = (labels[p].0, partner[p]);
            let (b2, b2p) = (labels[q].0, partner[q]);
            matrix[p * m + q] =
                hc[b1p * nb + b2p] - hc[b1p * nb + b2] - hc[b1 * nb + b2p] + hc[b1 * nb + b2];
        }
    }
    let diag_max = (0..m).map(|p| matrix[p * m + p]).fold(0.0, f64::max);
    let lambda_max = power_iteration(&matrix, m, 1e-12, 100_000);
    Ok(GradientCov {
        labels,
        matrix,
        diag_max,
        lambda_max,
        degenerate: grid.len() < 2,
    })
}

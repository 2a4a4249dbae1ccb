//! Periodic uniform grid on a flat 3-torus and its difference operators.
//!
//! Gradients are forward differences and divergences backward differences,
//! both with periodic wraparound. With that pairing `-divergence` is the
//! exact adjoint of `gradient` under the inner product `sum(u v) * dV`, and
//! `laplacian = -divergence(gradient(u))` is the compact 7-point stencil.
//!
//! Values are stored row-major with axis 0 fastest:
//! `index(i, j, k) = i + n0 * (j + n1 * k)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::{Error, Result};

/// Storage order of the six independent entries of a symmetric 3x3 tensor.
pub const SYM_COMPONENTS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Slot of entry `(a, b)` in [`SYM_COMPONENTS`] order.
#[inline]
pub const fn sym_slot(a: usize, b: usize) -> usize {
    match (a, b) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) | (1, 0) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    lengths: [f64; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], lengths: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d < 4) {
            return Err(Error::InvalidInput(alloc::format!(
                "every axis needs at least 4 points, got {dims:?}"
            )));
        }
        if dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .is_none()
        {
            return Err(Error::InvalidInput("grid too large".into()));
        }
        if lengths.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidInput(alloc::format!(
                "box lengths must be positive and finite, got {lengths:?}"
            )));
        }
        let spacing = [
            lengths[0] / dims[0] as f64,
            lengths[1] / dims[1] as f64,
            lengths[2] / dims[2] as f64,
        ];
        Ok(Grid {
            dims,
            lengths,
            spacing,
        })
    }

    /// `n^3` points on a cube of side `length`.
    pub fn cubic(n: usize, length: f64) -> Result<Self> {
        Self::new([n; 3], [length; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume_element(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Discrete volume `V_g = len * dV`.
    pub fn volume(&self) -> f64 {
        self.len() as f64 * self.volume_element()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Position of a grid point; axis `a` runs over `i * h_a`, `i = 0..n_a`.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        [
            m[0] as f64 * self.spacing[0],
            m[1] as f64 * self.spacing[1],
            m[2] as f64 * self.spacing[2],
        ]
    }

    /// Smallest nonzero eigenvalue of the discrete Laplacian,
    /// `min_a (4 / h_a^2) sin^2(pi h_a / L_a)`.
    pub fn laplacian_gap(&self) -> f64 {
        (0..3)
            .map(|a| {
                let h = self.spacing[a];
                let s = fmath::sin(fmath::PI / self.dims[a] as f64);
                4.0 / (h * h) * s * s
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Diagonal entry of the 7-point Laplacian, `sum_a 2 / h_a^2`.
    pub fn laplacian_diagonal(&self) -> f64 {
        self.spacing.iter().map(|h| 2.0 / (h * h)).sum()
    }

    /// Calls `f(center, plus, minus)` for every cell, where `plus[a]` and
    /// `minus[a]` are the periodic neighbours along axis `a`.
    #[inline]
    fn for_each_cell(&self, mut f: impl FnMut(usize, [usize; 3], [usize; 3])) {
        let [n0, n1, n2] = self.dims;
        for k in 0..n2 {
            let kp = if k + 1 == n2 { 0 } else { k + 1 };
            let km = if k == 0 { n2 - 1 } else { k - 1 };
            for j in 0..n1 {
                let jp = if j + 1 == n1 { 0 } else { j + 1 };
                let jm = if j == 0 { n1 - 1 } else { j - 1 };
                let row = n0 * (j + n1 * k);
                for i in 0..n0 {
                    let ip = if i + 1 == n0 { 0 } else { i + 1 };
                    let im = if i == 0 { n0 - 1 } else { i - 1 };
                    let c = row + i;
                    f(
                        c,
                        [row + ip, n0 * (jp + n1 * k) + i, n0 * (j + n1 * kp) + i],
                        [row + im, n0 * (jm + n1 * k) + i, n0 * (j + n1 * km) + i],
                    );
                }
            }
        }
    }

    /// `out = -div grad u` on raw slices.
    pub fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        let h = self.spacing;
        self.for_each_cell(|c, p, m| {
            let mut s = 0.0;
            for a in 0..3 {
                let gp = (u[p[a]] - u[c]) / h[a];
                let gm = (u[c] - u[m[a]]) / h[a];
                s += (gp - gm) / h[a];
            }
            out[c] = -s;
        });
    }

    pub fn gradient_into(&self, u: &[f64], out: [&mut [f64]; 3]) {
        let h = self.spacing;
        let [o0, o1, o2] = out;
        self.for_each_cell(|c, p, _| {
            o0[c] = (u[p[0]] - u[c]) / h[0];
            o1[c] = (u[p[1]] - u[c]) / h[1];
            o2[c] = (u[p[2]] - u[c]) / h[2];
        });
    }

    pub fn divergence_into(&self, x: [&[f64]; 3], out: &mut [f64]) {
        let h = self.spacing;
        self.for_each_cell(|c, _, m| {
            let mut s = 0.0;
            for a in 0..3 {
                s += (x[a][c] - x[a][m[a]]) / h[a];
            }
            out[c] = s;
        });
    }

    /// Conformal Killing operator on raw slices, output in [`SYM_COMPONENTS`] order.
    pub fn conformal_killing_into(&self, w: [&[f64]; 3], out: &mut [Vec<f64>; 6]) {
        let h = self.spacing;
        let [t00, t11, t22, t01, t02, t12] = out;
        self.for_each_cell(|c, p, _| {
            // d[a][b] = forward difference of W_b along axis a
            let mut d = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    d[a][b] = (w[b][p[a]] - w[b][c]) / h[a];
                }
            }
            let diag = [2.0 * d[0][0], 2.0 * d[1][1], 2.0 * d[2][2]];
            let third = (diag[0] + diag[1] + diag[2]) / 3.0;
            t00[c] = diag[0] - third;
            t11[c] = diag[1] - third;
            t22[c] = diag[2] - third;
            t01[c] = d[0][1] + d[1][0];
            t02[c] = d[0][2] + d[2][0];
            t12[c] = d[1][2] + d[2][1];
        });
    }

    /// `out_b = -sum_a D^-_a T_ab` for a symmetric tensor stored in
    /// [`SYM_COMPONENTS`] order.
    pub fn neg_tensor_divergence_into(&self, t: &[Vec<f64>; 6], out: [&mut [f64]; 3]) {
        let h = self.spacing;
        let [o0, o1, o2] = out;
        self.for_each_cell(|c, _, m| {
            let mut s = [0.0; 3];
            for (b, sb) in s.iter_mut().enumerate() {
                for a in 0..3 {
                    let tab = &t[sym_slot(a, b)];
                    *sb += (tab[c] - tab[m[a]]) / h[a];
                }
            }
            o0[c] = -s[0];
            o1[c] = -s[1];
            o2[c] = -s[2];
        });
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("field contains non-finite values".into()))
    }
}

fn check_len(grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() == grid.len() {
        Ok(())
    } else {
        Err(Error::InvalidInput(alloc::format!(
            "expected {} values, got {}",
            grid.len(),
            values.len()
        )))
    }
}

/// Grid-sampled real function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        check_finite(&values)?;
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |u|`.
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| f64::max(m, fmath::abs(v)))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// `sum(u) * dV`.
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.volume_element()
    }

    /// Grid inner product `sum(u v) * dV`.
    pub fn dot(&self, other: &ScalarField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(dot(&self.values, &other.values) * self.grid.volume_element())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `sup |self - other|`.
    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (&a, &b)| f64::max(m, fmath::abs(a - b))))
    }

    /// Cyclic shift by one cell along `axis`: `out(x) = u(x - e_axis)`.
    pub fn shifted(&self, axis: usize) -> Self {
        let g = self.grid;
        let mut values = vec![0.0; g.len()];
        shift_into(&g, axis, &self.values, &mut values);
        ScalarField { grid: g, values }
    }
}

fn shift_into(g: &Grid, axis: usize, src: &[f64], dst: &mut [f64]) {
    for (idx, &v) in src.iter().enumerate() {
        let mut m = g.multi_index(idx);
        m[axis] = (m[axis] + 1) % g.dims[axis];
        dst[g.index(m[0], m[1], m[2])] = v;
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Grid-sampled vector field, one block per component.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn new(grid: Grid, comps: [Vec<f64>; 3]) -> Result<Self> {
        for c in &comps {
            check_len(&grid, c)?;
            check_finite(c)?;
        }
        Ok(VectorField { grid, comps })
    }

    pub(crate) fn from_raw(grid: Grid, comps: [Vec<f64>; 3]) -> Self {
        VectorField { grid, comps }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, [0.0; 3])
    }

    pub fn constant(grid: Grid, c: [f64; 3]) -> Self {
        let n = grid.len();
        VectorField {
            grid,
            comps: [vec![c[0]; n], vec![c[1]; n], vec![c[2]; n]],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for i in 0..grid.len() {
            let v = f(grid.coords(i));
            for (a, va) in v.into_iter().enumerate() {
                out.comps[a][i] = va;
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, a: usize) -> &[f64] {
        &self.comps[a]
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>; 3] {
        &mut self.comps
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.comps
    }

    pub(crate) fn slices(&self) -> [&[f64]; 3] {
        [&self.comps[0], &self.comps[1], &self.comps[2]]
    }

    /// Euclidean length at cell `i`.
    pub fn norm_at(&self, i: usize) -> f64 {
        fmath::sqrt(self.comps.iter().map(|c| c[i] * c[i]).sum())
    }

    /// `max_x |X(x)|`.
    pub fn sup(&self) -> f64 {
        (0..self.grid.len()).fold(0.0, |m, i| f64::max(m, self.norm_at(i)))
    }

    /// Largest absolute value over all components.
    pub fn max_abs_component(&self) -> f64 {
        self.comps
            .iter()
            .flatten()
            .fold(0.0, |m, &v| f64::max(m, fmath::abs(v)))
    }

    pub fn means(&self) -> [f64; 3] {
        let n = self.grid.len() as f64;
        [
            self.comps[0].iter().sum::<f64>() / n,
            self.comps[1].iter().sum::<f64>() / n,
            self.comps[2].iter().sum::<f64>() / n,
        ]
    }

    /// Subtracts the per-component mean; returns the removed means.
    pub fn remove_mean(&mut self) -> [f64; 3] {
        let means = self.means();
        for (c, m) in self.comps.iter_mut().zip(means) {
            c.iter_mut().for_each(|v| *v -= m);
        }
        means
    }

    /// Grid inner product `sum(X . Y) * dV`.
    pub fn dot(&self, other: &VectorField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        let s: f64 = (0..3).map(|a| dot(&self.comps[a], &other.comps[a])).sum();
        Ok(s * self.grid.volume_element())
    }

    pub fn scaled(&self, s: f64) -> Self {
        VectorField {
            grid: self.grid,
            comps: self.comps.clone().map(|c| c.into_iter().map(|v| v * s).collect()),
        }
    }

    /// Largest componentwise difference.
    pub fn sup_distance(&self, other: &VectorField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok((0..3)
            .flat_map(|a| self.comps[a].iter().zip(&other.comps[a]))
            .fold(0.0, |m, (&x, &y)| f64::max(m, fmath::abs(x - y))))
    }

    pub fn shifted(&self, axis: usize) -> Self {
        let g = self.grid;
        let mut out = Self::zeros(g);
        for a in 0..3 {
            shift_into(&g, axis, &self.comps[a], &mut out.comps[a]);
        }
        out
    }
}

/// Trace-free symmetric 2-tensor field; entries in [`SYM_COMPONENTS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct TracelessSymField {
    grid: Grid,
    comps: [Vec<f64>; 6],
}

/// Relative trace tolerance for [`TracelessSymField::new`].
pub const TRACE_TOL: f64 = 1e-12;

impl TracelessSymField {
    /// Validates the trace condition `|T11 + T22 + T33| <= 1e-12 max|T|` at every cell.
    pub fn new(grid: Grid, comps: [Vec<f64>; 6]) -> Result<Self> {
        for c in &comps {
            check_len(&grid, c)?;
            check_finite(c)?;
        }
        let t = TracelessSymField { grid, comps };
        let bound = TRACE_TOL * t.max_abs_entry();
        let worst = t.max_abs_trace();
        if worst > bound {
            return Err(Error::InvalidInput(alloc::format!(
                "tensor is not trace-free (|trace| up to {worst:e})"
            )));
        }
        Ok(t)
    }

    /// Builds a field and removes the trace pointwise.
    pub fn projected(grid: Grid, mut comps: [Vec<f64>; 6]) -> Result<Self> {
        for c in &comps {
            check_len(&grid, c)?;
            check_finite(c)?;
        }
        for i in 0..grid.len() {
            let third = (comps[0][i] + comps[1][i] + comps[2][i]) / 3.0;
            for c in comps.iter_mut().take(3) {
                c[i] -= third;
            }
        }
        Ok(TracelessSymField { grid, comps })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        TracelessSymField {
            grid,
            comps: core::array::from_fn(|_| vec![0.0; n]),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>; 6] {
        &self.comps
    }

    pub fn component(&self, a: usize, b: usize) -> &[f64] {
        &self.comps[sym_slot(a, b)]
    }

    pub fn into_components(self) -> [Vec<f64>; 6] {
        self.comps
    }

    /// Full Frobenius square at cell `i`; off-diagonal entries count twice.
    pub fn frobenius_sq_at(&self, i: usize) -> f64 {
        frobenius_sq(&self.comps, i)
    }

    /// `max_x |T(x)|` with the full Frobenius norm.
    pub fn sup(&self) -> f64 {
        (0..self.grid.len()).fold(0.0, |m, i| f64::max(m, fmath::sqrt(self.frobenius_sq_at(i))))
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.comps
            .iter()
            .flatten()
            .fold(0.0, |m, &v| f64::max(m, fmath::abs(v)))
    }

    pub fn max_abs_trace(&self) -> f64 {
        (0..self.grid.len()).fold(0.0, |m, i| {
            f64::max(m, fmath::abs(self.comps[0][i] + self.comps[1][i] + self.comps[2][i]))
        })
    }

    pub fn add(&self, other: &TracelessSymField) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(TracelessSymField {
            grid: self.grid,
            comps: core::array::from_fn(|s| {
                self.comps[s]
                    .iter()
                    .zip(&other.comps[s])
                    .map(|(a, b)| a + b)
                    .collect()
            }),
        })
    }

    pub fn sub(&self, other: &TracelessSymField) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(TracelessSymField {
            grid: self.grid,
            comps: core::array::from_fn(|s| {
                self.comps[s]
                    .iter()
                    .zip(&other.comps[s])
                    .map(|(a, b)| a - b)
                    .collect()
            }),
        })
    }

    /// Grid inner product with the full Frobenius contraction.
    pub fn dot(&self, other: &TracelessSymField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        let mut s = 0.0;
        for slot in 0..6 {
            let w = if slot < 3 { 1.0 } else { 2.0 };
            s += w * dot(&self.comps[slot], &other.comps[slot]);
        }
        Ok(s * self.grid.volume_element())
    }

    /// Backward-difference divergence `(div T)_b = sum_a D^-_a T_ab`.
    pub fn divergence(&self) -> VectorField {
        let g = self.grid;
        let mut out = VectorField::zeros(g);
        let [o0, o1, o2] = &mut out.comps;
        g.neg_tensor_divergence_into(&self.comps, [o0, o1, o2]);
        out.scaled(-1.0)
    }
}

fn frobenius_sq(comps: &[Vec<f64>; 6], i: usize) -> f64 {
    let d = comps[0][i] * comps[0][i] + comps[1][i] * comps[1][i] + comps[2][i] * comps[2][i];
    let o = comps[3][i] * comps[3][i] + comps[4][i] * comps[4][i] + comps[5][i] * comps[5][i];
    d + 2.0 * o
}

/// General symmetric 2-tensor field (no trace condition), same storage as
/// [`TracelessSymField`]. Used for the exported extrinsic curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    grid: Grid,
    comps: [Vec<f64>; 6],
}

impl SymTensorField {
    pub fn new(grid: Grid, comps: [Vec<f64>; 6]) -> Result<Self> {
        for c in &comps {
            check_len(&grid, c)?;
            check_finite(c)?;
        }
        Ok(SymTensorField { grid, comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>; 6] {
        &self.comps
    }

    pub fn component(&self, a: usize, b: usize) -> &[f64] {
        &self.comps[sym_slot(a, b)]
    }

    pub fn into_components(self) -> [Vec<f64>; 6] {
        self.comps
    }

    pub fn frobenius_sq_at(&self, i: usize) -> f64 {
        frobenius_sq(&self.comps, i)
    }

    pub fn trace_at(&self, i: usize) -> f64 {
        self.comps[0][i] + self.comps[1][i] + self.comps[2][i]
    }
}

/// Forward-difference gradient.
pub fn gradient(u: &ScalarField) -> VectorField {
    let g = u.grid;
    let mut out = VectorField::zeros(g);
    let [o0, o1, o2] = &mut out.comps;
    g.gradient_into(&u.values, [o0, o1, o2]);
    out
}

/// Backward-difference divergence.
pub fn divergence(x: &VectorField) -> ScalarField {
    let g = x.grid;
    let mut out = vec![0.0; g.len()];
    g.divergence_into(x.slices(), &mut out);
    ScalarField::from_raw(g, out)
}

/// Positive Laplacian `-div grad u` (7-point stencil).
pub fn laplacian(u: &ScalarField) -> ScalarField {
    let g = u.grid;
    let mut out = vec![0.0; g.len()];
    g.laplacian_into(&u.values, &mut out);
    ScalarField::from_raw(g, out)
}

/// `(L W)_ij = D_i W_j + D_j W_i - (2/3) div W delta_ij` with forward differences.
pub fn conformal_killing(w: &VectorField) -> TracelessSymField {
    let g = w.grid;
    let mut out = TracelessSymField::zeros(g);
    g.conformal_killing_into(w.slices(), &mut out.comps);
    out
}

/// `P W = -div(L W)`, the positive semidefinite conformal vector Laplacian.
/// Satisfies `<P W, W> = 1/2 |L W|^2` exactly up to roundoff.
pub fn conf_laplacian(w: &VectorField) -> VectorField {
    let g = w.grid;
    let lw = conformal_killing(w);
    let mut out = VectorField::zeros(g);
    let [o0, o1, o2] = &mut out.comps;
    g.neg_tensor_divergence_into(&lw.comps, [o0, o1, o2]);
    out
}

/// Pointwise `|grad u|^2` from the forward-difference gradient.
pub fn grad_sq(u: &ScalarField) -> ScalarField {
    let gr = gradient(u);
    let values = (0..u.grid.len())
        .map(|i| gr.comps.iter().map(|c| c[i] * c[i]).sum())
        .collect();
    ScalarField::from_raw(u.grid, values)
}

/// Which quantity [`measure`] returns.
#[derive(Debug, Clone, Copy)]
pub enum Measure<'a> {
    Sup,
    L1,
    L2,
    /// `L^{2*}` norm with `2* = 6`.
    L2Star,
    /// Signed integral; scalar fields only.
    Integral,
    /// `(sum(|grad u|^2 + h u^2) dV)^{1/2}`; scalar fields only.
    H1h(&'a ScalarField),
}

/// Borrowed view of any of the field kinds accepted by [`measure`].
#[derive(Debug, Clone, Copy)]
pub enum FieldRef<'a> {
    Scalar(&'a ScalarField),
    Vector(&'a VectorField),
    Tensor(&'a TracelessSymField),
}

impl<'a> From<&'a ScalarField> for FieldRef<'a> {
    fn from(u: &'a ScalarField) -> Self {
        FieldRef::Scalar(u)
    }
}

impl<'a> From<&'a VectorField> for FieldRef<'a> {
    fn from(u: &'a VectorField) -> Self {
        FieldRef::Vector(u)
    }
}

impl<'a> From<&'a TracelessSymField> for FieldRef<'a> {
    fn from(u: &'a TracelessSymField) -> Self {
        FieldRef::Tensor(u)
    }
}

impl FieldRef<'_> {
    fn grid(&self) -> &Grid {
        match self {
            FieldRef::Scalar(u) => &u.grid,
            FieldRef::Vector(u) => &u.grid,
            FieldRef::Tensor(u) => &u.grid,
        }
    }

    /// Pointwise magnitude: `|u|`, Euclidean length, or Frobenius norm.
    fn magnitude_at(&self, i: usize) -> f64 {
        match self {
            FieldRef::Scalar(u) => fmath::abs(u.values[i]),
            FieldRef::Vector(u) => u.norm_at(i),
            FieldRef::Tensor(u) => fmath::sqrt(u.frobenius_sq_at(i)),
        }
    }
}

/// Norms and integrals; every integral is weighted by the volume element.
pub fn measure<'a>(u: impl Into<FieldRef<'a>>, kind: Measure<'_>) -> Result<f64> {
    let u = u.into();
    let g = *u.grid();
    let dv = g.volume_element();
    let n = g.len();
    match kind {
        Measure::Sup => Ok((0..n).fold(0.0, |m, i| f64::max(m, u.magnitude_at(i)))),
        Measure::L1 => Ok((0..n).map(|i| u.magnitude_at(i)).sum::<f64>() * dv),
        Measure::L2 => Ok(fmath::sqrt(
            (0..n).map(|i| fmath::powi(u.magnitude_at(i), 2)).sum::<f64>() * dv,
        )),
        Measure::L2Star => Ok(fmath::powf(
            (0..n).map(|i| fmath::powi(u.magnitude_at(i), 6)).sum::<f64>() * dv,
            1.0 / 6.0,
        )),
        Measure::Integral => match u {
            FieldRef::Scalar(s) => Ok(s.integral()),
            _ => Err(Error::InvalidInput(
                "integral is only defined for scalar fields".into(),
            )),
        },
        Measure::H1h(h) => match u {
            FieldRef::Scalar(s) => {
                same_grid(&s.grid, &h.grid)?;
                let q = h1h_form(s, h);
                if q < 0.0 {
                    Err(Error::IndefiniteNorm)
                } else {
                    Ok(fmath::sqrt(q))
                }
            }
            _ => Err(Error::InvalidInput(
                "H1h is only defined for scalar fields".into(),
            )),
        },
    }
}

/// `sum(|grad u|^2 + h u^2) dV` without the square root.
pub fn h1h_form(u: &ScalarField, h: &ScalarField) -> f64 {
    let g2 = grad_sq(u);
    let s: f64 = (0..u.grid.len())
        .map(|i| g2.values[i] + h.values[i] * u.values[i] * u.values[i])
        .sum();
    s * u.grid.volume_element()
}

//! Structured grid, 3D field storage, finite-difference stencils, cumulative
//! z-integrals and the stream function.
//!
//! Storage is row-major with z fastest: index `(i * ny + j) * nz + k`.

use rayon::prelude::*;

use crate::error::{Error, Location, Result};

/// Minimum number of nodes per axis.
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }

    /// Offset of the first node of column (i, j).
    #[inline]
    pub fn col(&self, i: usize, j: usize) -> usize {
        (i * self.ny + j) * self.nz
    }

    pub fn unravel(&self, n: usize) -> Location {
        let k = n % self.nz;
        let c = n / self.nz;
        Location {
            i: c / self.ny,
            j: c % self.ny,
            k,
        }
    }

    fn stride(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.ny * self.nz,
            Axis::Y => self.nz,
            Axis::Z => 1,
        }
    }

    fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
            Axis::Z => self.nz,
        }
    }
}

/// Finite-difference weights for derivatives 0..=m at `x0` from nodes `xs`
/// (Fornberg's recursion). Returns `w[deriv][node]`.
pub fn fornberg(x0: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for d in (1..=mn).rev() {
                    c[d][i] = c1 * (d as f64 * c[d - 1][i - 1] - c5 * c[d][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for d in (1..=mn).rev() {
                c[d][j] = (c4 * c[d][j] - d as f64 * c[d - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// A short stencil: weights applied to nodes `start..start+len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub start: usize,
    pub len: usize,
    pub w: [f64; 4],
}

impl Stencil {
    fn build(nodes: &[f64], p: usize, start: usize, len: usize, deriv: usize) -> Stencil {
        let xs = &nodes[start..start + len];
        let c = fornberg(nodes[p], xs, deriv);
        let mut w = [0.0; 4];
        w[..len].copy_from_slice(&c[deriv][..len]);
        Stencil { start, len, w }
    }

    #[inline]
    pub fn apply_strided(&self, data: &[f64], base: usize, stride: usize) -> f64 {
        let mut s = 0.0;
        for m in 0..self.len {
            s += self.w[m] * data[base + (self.start + m) * stride];
        }
        s
    }

    #[inline]
    pub fn apply(&self, col: &[f64]) -> f64 {
        let mut s = 0.0;
        for m in 0..self.len {
            s += self.w[m] * col[self.start + m];
        }
        s
    }
}

/// Per-node first and second derivative stencils along one axis.
///
/// First derivatives: 3-point central inside, 3-point one-sided at the ends.
/// Second derivatives: 3-point inside, 4-point one-sided at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisOps {
    pub d1: Vec<Stencil>,
    pub d2: Vec<Stencil>,
}

impl AxisOps {
    pub fn new(nodes: &[f64]) -> AxisOps {
        let n = nodes.len();
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for p in 0..n {
            let s1 = if p == 0 {
                0
            } else if p == n - 1 {
                n - 3
            } else {
                p - 1
            };
            d1.push(Stencil::build(nodes, p, s1, 3, 1));
            let (s2, l2) = if p == 0 {
                (0, 4)
            } else if p == n - 1 {
                (n - 4, 4)
            } else {
                (p - 1, 3)
            };
            d2.push(Stencil::build(nodes, p, s2, l2, 2));
        }
        AxisOps { d1, d2 }
    }
}

/// Tensor-product grid on [0,X]×[0,Y]×[0,Zmax].
#[derive(Debug, Clone)]
pub struct Grid3 {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    xo: AxisOps,
    yo: AxisOps,
    zo: AxisOps,
}

fn validate_axis(name: &str, a: &[f64]) -> Result<()> {
    if a.len() < MIN_NODES {
        return Err(Error::DomainError(format!(
            "axis {name} has {} nodes, need at least {MIN_NODES}",
            a.len()
        )));
    }
    if a[0] != 0.0 {
        return Err(Error::DomainError(format!("axis {name} must start at 0")));
    }
    if a.iter().any(|v| !v.is_finite()) || a.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DomainError(format!(
            "axis {name} is not strictly ascending"
        )));
    }
    Ok(())
}

fn uniform_axis(n: usize, len: f64) -> Vec<f64> {
    let h = len / (n as f64 - 1.0);
    let mut a: Vec<f64> = (0..n).map(|p| p as f64 * h).collect();
    if let Some(last) = a.last_mut() {
        *last = len;
    }
    a
}

impl Grid3 {
    pub fn from_axes(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Result<Grid3> {
        validate_axis("x", &x)?;
        validate_axis("y", &y)?;
        validate_axis("z", &z)?;
        let xo = AxisOps::new(&x);
        let yo = AxisOps::new(&y);
        let zo = AxisOps::new(&z);
        Ok(Grid3 {
            x,
            y,
            z,
            xo,
            yo,
            zo,
        })
    }

    pub fn uniform(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, zmax: f64) -> Result<Grid3> {
        Self::stretched(nx, ny, nz, lx, ly, zmax, 0.0)
    }

    /// `stretch > 0` clusters z nodes toward the wall:
    /// z_k = Zmax (1 − tanh(s(1 − t_k)) / tanh s), t_k = k/(nz−1).
    pub fn stretched(
        nx: usize,
        ny: usize,
        nz: usize,
        lx: f64,
        ly: f64,
        zmax: f64,
        stretch: f64,
    ) -> Result<Grid3> {
        if !(lx > 0.0 && ly > 0.0 && zmax > 0.0) {
            return Err(Error::DomainError("domain extents must be positive".into()));
        }
        if nx < MIN_NODES || ny < MIN_NODES || nz < MIN_NODES {
            return Err(Error::DomainError(format!(
                "need at least {MIN_NODES} nodes per axis"
            )));
        }
        let z = if stretch > 0.0 {
            let th = stretch.tanh();
            let mut z: Vec<f64> = (0..nz)
                .map(|k| {
                    let t = k as f64 / (nz as f64 - 1.0);
                    zmax * (1.0 - (stretch * (1.0 - t)).tanh() / th)
                })
                .collect();
            z[0] = 0.0;
            z[nz - 1] = zmax;
            z
        } else {
            uniform_axis(nz, zmax)
        };
        Self::from_axes(uniform_axis(nx, lx), uniform_axis(ny, ly), z)
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.x.len(), self.y.len(), self.z.len())
    }

    pub fn lx(&self) -> f64 {
        *self.x.last().unwrap()
    }

    pub fn ly(&self) -> f64 {
        *self.y.last().unwrap()
    }

    pub fn zmax(&self) -> f64 {
        *self.z.last().unwrap()
    }

    pub fn hx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn hy(&self) -> f64 {
        self.y[1] - self.y[0]
    }

    /// Bitwise equality of all axes.
    pub fn same_as(&self, other: &Grid3) -> bool {
        let eq = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits())
        };
        eq(&self.x, &other.x) && eq(&self.y, &other.y) && eq(&self.z, &other.z)
    }

    pub fn ops(&self, axis: Axis) -> &AxisOps {
        match axis {
            Axis::X => &self.xo,
            Axis::Y => &self.yo,
            Axis::Z => &self.zo,
        }
    }

    pub fn z_ops(&self) -> &AxisOps {
        &self.zo
    }

    fn apply(&self, f: &Field3, axis: Axis, second: bool) -> Field3 {
        let d = f.dims;
        assert_eq!(d, self.dims(), "field does not match grid");
        let ops = self.ops(axis);
        let st = if second { &ops.d2 } else { &ops.d1 };
        let stride = d.stride(axis);
        let src = &f.data;
        let mut out = Field3::zeros(d);
        out.data
            .par_chunks_mut(d.nz)
            .enumerate()
            .for_each(|(c, col)| {
                let i = c / d.ny;
                let j = c % d.ny;
                match axis {
                    Axis::Z => {
                        let s = &src[c * d.nz..(c + 1) * d.nz];
                        for (k, o) in col.iter_mut().enumerate() {
                            *o = st[k].apply(s);
                        }
                    }
                    Axis::X => {
                        let stn = &st[i];
                        for (k, o) in col.iter_mut().enumerate() {
                            *o = stn.apply_strided(src, j * d.nz + k, stride);
                        }
                    }
                    Axis::Y => {
                        let stn = &st[j];
                        for (k, o) in col.iter_mut().enumerate() {
                            *o = stn.apply_strided(src, i * d.ny * d.nz + k, stride);
                        }
                    }
                }
            });
        let _ = d.extent(axis);
        out
    }

    pub fn d1(&self, f: &Field3, axis: Axis) -> Field3 {
        self.apply(f, axis, false)
    }

    pub fn d2(&self, f: &Field3, axis: Axis) -> Field3 {
        self.apply(f, axis, true)
    }

    pub fn dx(&self, f: &Field3) -> Field3 {
        self.d1(f, Axis::X)
    }

    pub fn dy(&self, f: &Field3) -> Field3 {
        self.d1(f, Axis::Y)
    }

    pub fn dz(&self, f: &Field3) -> Field3 {
        self.d1(f, Axis::Z)
    }

    pub fn dxx(&self, f: &Field3) -> Field3 {
        self.d2(f, Axis::X)
    }

    pub fn dyy(&self, f: &Field3) -> Field3 {
        self.d2(f, Axis::Y)
    }

    pub fn dzz(&self, f: &Field3) -> Field3 {
        self.d2(f, Axis::Z)
    }

    /// Field sampled from a point function.
    pub fn sample<F>(&self, f: F) -> Field3
    where
        F: Fn(f64, f64, f64) -> f64 + Sync,
    {
        Field3::from_columns(self.dims(), |i, j, col| {
            for (k, o) in col.iter_mut().enumerate() {
                *o = f(self.x[i], self.y[j], self.z[k]);
            }
        })
    }
}

/// Dense 3D array on a [`Grid3`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field3 {
    dims: Dims,
    data: Vec<f64>,
}

impl Field3 {
    pub fn zeros(dims: Dims) -> Field3 {
        Field3::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims, v: f64) -> Field3 {
        Field3 {
            dims,
            data: vec![v; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Field3> {
        if data.len() != dims.len() {
            return Err(Error::InvalidInput(format!(
                "field length {} does not match dims {}x{}x{}",
                data.len(),
                dims.nx,
                dims.ny,
                dims.nz
            )));
        }
        Ok(Field3 { dims, data })
    }

    /// Builds a field column by column in parallel; `f(i, j, column)`.
    pub fn from_columns<F>(dims: Dims, f: F) -> Field3
    where
        F: Fn(usize, usize, &mut [f64]) + Sync,
    {
        let mut out = Field3::zeros(dims);
        out.data
            .par_chunks_mut(dims.nz)
            .enumerate()
            .for_each(|(c, col)| f(c / dims.ny, c % dims.ny, col));
        out
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.dims.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.dims.idx(i, j, k);
        self.data[n] = v;
    }

    pub fn column(&self, i: usize, j: usize) -> &[f64] {
        let c = self.dims.col(i, j);
        &self.data[c..c + self.dims.nz]
    }

    pub fn column_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let c = self.dims.col(i, j);
        let nz = self.dims.nz;
        &mut self.data[c..c + nz]
    }

    /// The x = x_i slab (ny·nz values).
    pub fn slab(&self, i: usize) -> &[f64] {
        let n = self.dims.ny * self.dims.nz;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn slab_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.dims.ny * self.dims.nz;
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn map<F>(&self, f: F) -> Field3
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let mut out = self.clone();
        out.data.par_iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn zip_map<F>(&self, other: &Field3, f: F) -> Field3
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        assert_eq!(self.dims, other.dims);
        let mut out = Field3::zeros(self.dims);
        out.data
            .par_iter_mut()
            .zip(self.data.par_iter().zip(other.data.par_iter()))
            .for_each(|(o, (a, b))| *o = f(*a, *b));
        out
    }

    pub fn zip3_map<F>(&self, b: &Field3, c: &Field3, f: F) -> Field3
    where
        F: Fn(f64, f64, f64) -> f64 + Sync,
    {
        assert_eq!(self.dims, b.dims);
        assert_eq!(self.dims, c.dims);
        let mut out = Field3::zeros(self.dims);
        out.data
            .par_iter_mut()
            .enumerate()
            .for_each(|(n, o)| *o = f(self.data[n], b.data[n], c.data[n]));
        out
    }

    pub fn sub(&self, other: &Field3) -> Field3 {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field3) -> Field3 {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Field3) -> Field3 {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field3 {
        self.map(|v| v * s)
    }

    /// Largest |value| and its first location (scan order).
    pub fn max_abs(&self) -> f64 {
        self.max_abs_loc().0
    }

    pub fn max_abs_loc(&self) -> (f64, Location) {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (n, v) in self.data.iter().enumerate() {
            let a = v.abs();
            if a > best.0 || a.is_nan() {
                best = (a, n);
            }
        }
        (best.0, self.dims.unravel(best.1))
    }

    pub fn min_loc(&self) -> (f64, Location) {
        let mut best = (f64::INFINITY, 0usize);
        for (n, v) in self.data.iter().enumerate() {
            if *v < best.0 || v.is_nan() {
                best = (*v, n);
            }
        }
        (best.0, self.dims.unravel(best.1))
    }

    pub fn max_loc(&self) -> (f64, Location) {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (n, v) in self.data.iter().enumerate() {
            if *v > best.0 || v.is_nan() {
                best = (*v, n);
            }
        }
        (best.0, self.dims.unravel(best.1))
    }
}

/// Trapezoidal cumulative integral along z; zero at the wall.
pub fn cumulative_z(grid: &Grid3, f: &Field3) -> Field3 {
    let z = &grid.z;
    Field3::from_columns(f.dims(), |i, j, out| {
        let col = f.column(i, j);
        out[0] = 0.0;
        for k in 1..col.len() {
            out[k] = out[k - 1] + 0.5 * (z[k] - z[k - 1]) * (col[k - 1] + col[k]);
        }
    })
}

/// ψ = ∫₀^z u dz′. Rejects fields that are not positive above the wall.
pub fn stream_function(grid: &Grid3, u: &Field3) -> Result<Field3> {
    let d = u.dims();
    for (n, v) in u.data().iter().enumerate() {
        if n % d.nz != 0 && !(*v > 0.0) {
            return Err(Error::NonPositiveField {
                value: *v,
                at: d.unravel(n),
            });
        }
    }
    Ok(cumulative_z(grid, u))
}

/// One iterate of the scheme with its cached integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub u: Field3,
    pub v: Field3,
    /// q = v − u.
    pub q: Field3,
    /// ∫₀^z ∂x u dz′.
    pub int_dx_u: Field3,
    /// ∫₀^z ∂y v dz′.
    pub int_dy_v: Field3,
    pub psi: Field3,
    pub iterate_index: usize,
}

impl FieldState {
    pub fn from_uv(grid: &Grid3, u: Field3, v: Field3, iterate_index: usize) -> Result<FieldState> {
        if u.dims() != grid.dims() || v.dims() != grid.dims() {
            return Err(Error::GridMismatch);
        }
        let psi = stream_function(grid, &u)?;
        let q = v.sub(&u);
        let int_dx_u = cumulative_z(grid, &grid.dx(&u));
        let int_dy_v = cumulative_z(grid, &grid.dy(&v));
        Ok(FieldState {
            u,
            v,
            q,
            int_dx_u,
            int_dy_v,
            psi,
            iterate_index,
        })
    }

    pub fn dims(&self) -> Dims {
        self.u.dims()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid3 {
        Grid3::uniform(9, 10, 17, 0.2, 0.3, 8.0).unwrap()
    }

    #[test]
    fn fornberg_reproduces_central_difference() {
        let w = fornberg(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn rejects_short_or_unsorted_axes() {
        assert!(Grid3::uniform(4, 9, 9, 1.0, 1.0, 1.0).is_err());
        let bad = vec![0.0, 1.0, 0.5, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ok: Vec<f64> = (0..8).map(|p| p as f64).collect();
        assert!(Grid3::from_axes(bad, ok.clone(), ok.clone()).is_err());
        let shifted: Vec<f64> = (1..9).map(|p| p as f64).collect();
        assert!(Grid3::from_axes(ok.clone(), ok.clone(), shifted).is_err());
    }

    #[test]
    fn stretched_axis_clusters_at_wall() {
        let g = Grid3::stretched(8, 8, 33, 0.1, 0.1, 10.0, 2.0).unwrap();
        assert_eq!(g.z[0], 0.0);
        assert_eq!(g.zmax(), 10.0);
        assert!(g.z[1] - g.z[0] < g.z[32] - g.z[31]);
    }

    #[test]
    fn cumulative_of_zero_and_one() {
        let g = grid();
        let d = g.dims();
        assert_eq!(cumulative_z(&g, &Field3::zeros(d)).max_abs(), 0.0);
        let c = cumulative_z(&g, &Field3::filled(d, 1.0));
        for i in 0..d.nx {
            for j in 0..d.ny {
                for k in 0..d.nz {
                    // dyadic spacing 0.5: exact
                    assert_eq!(c.get(i, j, k), g.z[k]);
                }
            }
        }
    }

    #[test]
    fn cumulative_exact_on_piecewise_linear() {
        let g = Grid3::stretched(8, 8, 21, 1.0, 1.0, 5.0, 1.5).unwrap();
        let d = g.dims();
        // piecewise-linear nodal data with kinks at nodes
        let f = Field3::from_columns(d, |i, j, col| {
            for (k, v) in col.iter_mut().enumerate() {
                *v = ((k * 7 + i + 3 * j) % 5) as f64 - 1.3;
            }
        });
        let c = cumulative_z(&g, &f);
        for i in 0..d.nx {
            for j in 0..d.ny {
                let col = f.column(i, j);
                let mut exact = 0.0;
                for k in 1..d.nz {
                    let h = g.z[k] - g.z[k - 1];
                    exact += h * col[k - 1] + 0.5 * h * (col[k] - col[k - 1]);
                    assert!((c.get(i, j, k) - exact).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn stream_function_of_one_is_z() {
        let g = grid();
        let psi = stream_function(&g, &Field3::filled(g.dims(), 1.0)).unwrap();
        assert_eq!(psi.column(3, 4), &g.z[..]);
    }

    #[test]
    fn stream_function_rejects_nonpositive() {
        let g = grid();
        let mut u = Field3::filled(g.dims(), 1.0);
        u.set(2, 3, 5, -0.1);
        match stream_function(&g, &u) {
            Err(Error::NonPositiveField { at, .. }) => assert_eq!((at.i, at.j, at.k), (2, 3, 5)),
            other => panic!("unexpected {other:?}"),
        }
        // the wall row is allowed to vanish
        let mut w = Field3::filled(g.dims(), 1.0);
        w.set(0, 0, 0, 0.0);
        assert!(stream_function(&g, &w).is_ok());
    }

    #[test]
    fn derivatives_are_second_order() {
        let err = |n: usize| {
            let g = Grid3::uniform(n, n, 2 * n, 1.0, 1.0, 2.0).unwrap();
            let f = g.sample(|x, y, z| (x + 0.3).sin() * (2.0 * y).cos() * (-z).exp());
            let dx = g.dx(&f);
            let dzz = g.dzz(&f);
            let ex = g.sample(|x, y, z| (x + 0.3).cos() * (2.0 * y).cos() * (-z).exp());
            let ezz = f.clone();
            (dx.sub(&ex).max_abs(), dzz.sub(&ezz).max_abs())
        };
        let (a1, b1) = err(16);
        let (a2, b2) = err(32);
        assert!(a1 / a2 > 3.5, "dx ratio {}", a1 / a2);
        assert!(b1 / b2 > 3.5, "dzz ratio {}", b1 / b2);
    }

    #[test]
    fn field_state_invariants() {
        let g = grid();
        let u = g.sample(|x, _y, z| 0.2 + z / (1.0 + z) + 0.1 * x);
        let v = g.sample(|_x, y, z| 0.25 + z / (1.0 + z) + 0.1 * y);
        let s = FieldState::from_uv(&g, u.clone(), v.clone(), 3).unwrap();
        assert_eq!(s.q, v.sub(&u));
        let d = g.dims();
        for i in 0..d.nx {
            for j in 0..d.ny {
                assert_eq!(s.int_dx_u.get(i, j, 0), 0.0);
                assert_eq!(s.int_dy_v.get(i, j, 0), 0.0);
                assert_eq!(s.psi.get(i, j, 0), 0.0);
                assert!(s.psi.column(i, j).windows(2).all(|w| w[1] > w[0]));
            }
        }
    }
}

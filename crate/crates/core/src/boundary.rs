//! Compatible boundary data for the lagged scheme.
//!
//! The wall data is transported along the characteristics of
//! ∂x + (1+q̃)∂y on {z = 0}. Each characteristic carries a truncated series
//! ū + a⁰ + Σ aⁱ φⁱ(s)/i! whose coefficients follow from the equation at the
//! wall. Data on {x = 0}, {y = 0} and at the top of the box come from the
//! analytic perturbation family itself.

use rayon::prelude::*;

use crate::background::BackgroundProfile;
use crate::barrier::{phi1_value, BarrierParams};
use crate::error::{Error, Location, Result};
use crate::grid::{fornberg, Axis, Field3, FieldState, Grid3};
use crate::report::{field_argmin, DiagnosticsReport, Entry};

/// Highest compatibility order the synthesis supports.
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U,
    V,
}

/// Analytic perturbation generator, evaluated in the lifted variable t = z + ε₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationFamily {
    Zero,
    /// ε·a·exp(−((y−y_c)/w)²)·(t/ℓ)³·exp(−(t/ℓ)²).
    SeparableBump {
        a_u: f64,
        a_v: f64,
        width: f64,
        y_center: f64,
        ell: f64,
    },
}

/// Shape constants of the Φᵢ envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    pub a: f64,
    pub delta: f64,
    pub n: f64,
    pub mu: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        EnvelopeParams {
            a: 10.0,
            delta: 0.25,
            n: 6.0,
            mu: 0.1,
        }
    }
}

/// Value and derivatives of a perturbation at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointJet {
    pub v: f64,
    pub y: f64,
    pub yy: f64,
    pub z: f64,
    pub zz: f64,
    pub yz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub eps: f64,
    pub envelope: EnvelopeParams,
    pub family: PerturbationFamily,
    /// Series truncation order.
    pub i_max: usize,
    /// Envelope failures become errors instead of report entries.
    pub strict: bool,
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        PerturbationSpec {
            eps: 1.0,
            envelope: EnvelopeParams::default(),
            family: PerturbationFamily::Zero,
            i_max: 2,
            strict: false,
        }
    }

    /// Bump centred in y with default shape (w = Y/4, ℓ = 1.5).
    pub fn bump(eps: f64, a_u: f64, a_v: f64, y_len: f64) -> Self {
        PerturbationSpec {
            eps,
            family: PerturbationFamily::SeparableBump {
                a_u,
                a_v,
                width: 0.25 * y_len,
                y_center: 0.5 * y_len,
                ell: 1.5,
            },
            ..Self::zero()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(2..=MAX_ORDER).contains(&self.i_max) {
            return bad(format!(
                "i_max must lie in 2..={MAX_ORDER}, got {}",
                self.i_max
            ));
        }
        let e = &self.envelope;
        if !(e.a >= 0.0 && e.delta > 0.0 && e.delta < e.n && e.mu > 0.0) {
            return bad(format!("invalid envelope parameters {e:?}"));
        }
        if let PerturbationFamily::SeparableBump {
            width,
            ell,
            a_u,
            a_v,
            y_center,
        } = self.family
        {
            if !(width > 0.0 && ell > 0.0) {
                return bad("bump width and ell must be positive".into());
            }
            if !(a_u.is_finite() && a_v.is_finite() && y_center.is_finite()) {
                return bad("bump amplitudes must be finite".into());
            }
        }
        Ok(())
    }

    /// δ for one component at (x, y, t), t = z + ε₀.
    pub fn jet(&self, c: Component, _x: f64, y: f64, t: f64) -> PointJet {
        match self.family {
            PerturbationFamily::Zero => PointJet::default(),
            PerturbationFamily::SeparableBump {
                a_u,
                a_v,
                width,
                y_center,
                ell,
            } => {
                let amp = self.eps * if c == Component::U { a_u } else { a_v };
                let dy = (y - y_center) / width;
                let e = (-dy * dy).exp();
                let e1 = -2.0 * dy / width * e;
                let e2 = (4.0 * dy * dy - 2.0) / (width * width) * e;
                let tau = t / ell;
                let g0 = (-tau * tau).exp();
                let g = tau.powi(3) * g0;
                let g1 = (3.0 * tau * tau - 2.0 * tau.powi(4)) * g0 / ell;
                let g2 = (6.0 * tau - 14.0 * tau.powi(3) + 4.0 * tau.powi(5)) * g0 / (ell * ell);
                PointJet {
                    v: amp * e * g,
                    y: amp * e1 * g,
                    yy: amp * e2 * g,
                    z: amp * e * g1,
                    zz: amp * e * g2,
                    yz: amp * e1 * g1,
                }
            }
        }
    }
}

/// Bilinear interpolation of a wall field stored row-major in (i, j).
/// Points outside the box are clamped to it.
fn interp2(g: &Grid3, data: &[f64], x: f64, y: f64) -> f64 {
    let ny = g.y.len();
    let (i, tx) = locate(&g.x, x);
    let (j, ty) = locate(&g.y, y);
    let a = data[i * ny + j];
    let b = data[i * ny + j + 1];
    let c = data[(i + 1) * ny + j];
    let d = data[(i + 1) * ny + j + 1];
    (1.0 - tx) * ((1.0 - ty) * a + ty * b) + tx * ((1.0 - ty) * c + ty * d)
}

/// Cell index and local coordinate in [0, 1] for a clamped point.
fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    let x = x.clamp(nodes[0], nodes[n - 1]);
    let i = nodes
        .partition_point(|&v| v <= x)
        .saturating_sub(1)
        .min(n - 2);
    (i, (x - nodes[i]) / (nodes[i + 1] - nodes[i]))
}

/// Wall slice (k = 0) of a field.
fn wall_slice(f: &Field3, k: usize) -> Vec<f64> {
    let d = f.dims();
    let mut out = Vec::with_capacity(d.nx * d.ny);
    for i in 0..d.nx {
        for j in 0..d.ny {
            out.push(f.get(i, j, k));
        }
    }
    out
}

fn wall_derivative(g: &Grid3, data: &[f64], axis: Axis) -> Vec<f64> {
    let ny = g.y.len();
    let ops = g.ops(axis);
    (0..data.len())
        .map(|n| {
            let (i, j) = (n / ny, n % ny);
            match axis {
                Axis::X => ops.d1[i].apply_strided(data, j, ny),
                _ => ops.d1[j].apply_strided(data, i * ny, 1),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    /// Seed on {x = 0}.
    Inflow,
    /// Seed on {y = 0}, x > 0.
    Side,
}

/// One characteristic, sampled at the grid x-stations from `start` on.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPath {
    pub edge: Edge,
    pub start: usize,
    /// y at the seed.
    pub eta: f64,
    /// y(s) at stations start, start+1, …
    pub y: Vec<f64>,
    /// ∂η y for inflow seeds, ∂ξ y for side seeds.
    pub jac: Vec<f64>,
}

impl CharPath {
    pub fn x_seed(&self, x: &[f64]) -> f64 {
        x[self.start]
    }
}

/// Characteristics from every seed on the two inflow edges.
///
/// Paths are stored side seeds first (latest start first), then inflow seeds
/// by increasing η, which is the expected increasing-y order at any station.
#[derive(Debug, Clone, PartialEq)]
pub struct CharField {
    pub x: Vec<f64>,
    pub paths: Vec<CharPath>,
    /// sup |∂y q̃| on the wall.
    pub eps_q: f64,
}

impl CharField {
    /// (y, path index) of the paths present at station i, increasing in y.
    pub fn at_station(&self, i: usize) -> Vec<(f64, usize)> {
        self.paths
            .iter()
            .enumerate()
            .filter(|(_, p)| p.start <= i)
            .map(|(n, p)| (p.y[i - p.start], n))
            .collect()
    }

    /// sup |∂η y| over inflow paths.
    pub fn max_eta_jacobian(&self) -> f64 {
        self.paths
            .iter()
            .filter(|p| p.edge == Edge::Inflow)
            .flat_map(|p| p.jac.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// e^{ε_q X}.
    pub fn jacobian_bound(&self) -> f64 {
        (self.eps_q * self.x[self.x.len() - 1]).exp()
    }
}

/// Integrates dy/ds = 1 + q̃(x, y, 0), x = x_seed + s, with the variational
/// equation for the seed derivative, one RK4 step per x-station.
///
/// `qtilde_wall` is q̃ at z = 0, row-major in (i, j).
pub fn solve_characteristics(g: &Grid3, qtilde_wall: &[f64]) -> Result<CharField> {
    let d = g.dims();
    if qtilde_wall.len() != d.nx * d.ny {
        return Err(Error::GridMismatch);
    }
    let qmax = qtilde_wall.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(qmax <= 0.5) {
        return Err(Error::InvalidInput(format!(
            "|q~| reaches {qmax} on the wall"
        )));
    }
    let qx = wall_derivative(g, qtilde_wall, Axis::X);
    let qy = wall_derivative(g, qtilde_wall, Axis::Y);
    let eps_q = qy.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let mut seeds: Vec<(Edge, usize, f64)> =
        (1..d.nx).rev().map(|i| (Edge::Side, i, 0.0)).collect();
    seeds.extend(g.y.iter().map(|&y| (Edge::Inflow, 0, y)));

    let paths: Vec<CharPath> = seeds
        .par_iter()
        .map(|&(edge, start, eta)| {
            let x0 = g.x[start];
            // y = η + s + e, de/ds = q̃; J' = q̃_y J (+ q̃_x for side seeds)
            let rhs = |x: f64, e: f64, jac: f64| {
                let y = eta + (x - x0) + e;
                let q = interp2(g, qtilde_wall, x, y);
                let dq_y = interp2(g, &qy, x, y);
                let src = if edge == Edge::Side {
                    interp2(g, &qx, x, y)
                } else {
                    0.0
                };
                (q, src + dq_y * jac)
            };
            let mut e = 0.0;
            let mut jac = if edge == Edge::Inflow { 1.0 } else { 0.0 };
            let mut ys = vec![eta];
            let mut js = vec![jac];
            for i in start..d.nx - 1 {
                let (xa, h) = (g.x[i], g.x[i + 1] - g.x[i]);
                let (k1, l1) = rhs(xa, e, jac);
                let (k2, l2) = rhs(xa + 0.5 * h, e + 0.5 * h * k1, jac + 0.5 * h * l1);
                let (k3, l3) = rhs(xa + 0.5 * h, e + 0.5 * h * k2, jac + 0.5 * h * l2);
                let (k4, l4) = rhs(xa + h, e + h * k3, jac + h * l3);
                e += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                jac += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
                ys.push(eta + (g.x[i + 1] - x0) + e);
                js.push(jac);
            }
            CharPath {
                edge,
                start,
                eta,
                y: ys,
                jac: js,
            }
        })
        .collect();

    let cf = CharField {
        x: g.x.clone(),
        paths,
        eps_q,
    };
    let tol = 1e-12 * g.ly();
    for i in 0..d.nx {
        let st = cf.at_station(i);
        for w in st.windows(2) {
            if !(w[1].0 - w[0].0 > tol) {
                return Err(Error::CrossingDetected {
                    station: i,
                    a: w[0].1,
                    b: w[1].1,
                });
            }
        }
    }
    Ok(cf)
}

/// Compatibility coefficients aⁱ, i = 0..=order, per path (same order as
/// `CharField::paths`).
#[derive(Debug, Clone, PartialEq)]
pub struct CompatCoeffs {
    pub order: usize,
    pub a_u: Vec<[f64; MAX_ORDER + 1]>,
    pub a_v: Vec<[f64; MAX_ORDER + 1]>,
}

impl CompatCoeffs {
    /// sup over paths of |aⁱ| for both components.
    pub fn sup(&self, i: usize) -> f64 {
        self.a_u
            .iter()
            .chain(&self.a_v)
            .fold(0.0, |m, a| m.max(a[i].abs()))
    }

    /// Cutoff constant M = Σᵢ sup |aⁱ|.
    pub fn cutoff_m(&self) -> f64 {
        (0..=self.order).map(|i| self.sup(i)).sum()
    }
}

/// Evaluates the wall residual F₁ of one component at a wall point.
struct WallEquation<'a> {
    g: &'a Grid3,
    bg: &'a BackgroundProfile,
    spec: &'a PerturbationSpec,
    transpiration: bool,
    /// U − ū at k = 0, row-major in (i, j).
    du0: Vec<f64>,
    qtilde: Vec<f64>,
}

impl<'a> WallEquation<'a> {
    fn new(
        g: &'a Grid3,
        bg: &'a BackgroundProfile,
        spec: &'a PerturbationSpec,
        state: &FieldState,
        transpiration: bool,
    ) -> Self {
        let du0 = wall_slice(&state.u, 0)
            .iter()
            .zip(wall_slice(&bg.ubar, 0))
            .map(|(a, b)| a - b)
            .collect();
        let qt = state.q.zip_map(&state.u, |a, b| a / b);
        WallEquation {
            g,
            bg,
            spec,
            transpiration,
            du0,
            qtilde: wall_slice(&qt, 0),
        }
    }

    /// F₁ = (∂x + (1+q̃)∂y)ū + c_z ∂z u_bd − (1/U) ∂zz u_bd, with c_z = w₀/U
    /// when transpiration is on.
    ///
    /// The diffusion term is taken at the Picard fixed point, where the
    /// lagged ratio u/W is identically 1 for both components. Differencing
    /// the ratio of the data profile against the lagged near-wall state
    /// turns their mismatch into an O(1/h) residual.
    fn f1(&self, c: Component, x: f64, y: f64) -> f64 {
        let (g, bg) = (self.g, self.bg);
        let e0 = bg.eps0;
        let q = interp2(g, &self.qtilde, x, y);
        let transport = (2.0 + q) * bg.deriv_point(x, y, 0.0, 1, 0);
        let big_u0 = bg.u_point(x, y, 0.0) + interp2(g, &self.du0, x, y);
        let jet = self.spec.jet(c, x, y, e0);
        let bz = bg.deriv_point(x, y, 0.0, 0, 1) + jet.z;
        let bzz = bg.deriv_point(x, y, 0.0, 0, 2) + jet.zz;
        let cz = if self.transpiration {
            bg.w_deriv_point(x, y, 0.0, 0, 0) / big_u0
        } else {
            0.0
        };
        transport + cz * bz - bzz / big_u0
    }
}

/// a⁰ = δ at the seed, a¹ = −F₁, aⁱ = −∂s^{i−1}F₁ by differencing F₁ along
/// the characteristic (one-sided, as many stations as the path offers).
pub fn compat_coefficients(
    spec: &PerturbationSpec,
    bg: &BackgroundProfile,
    state: &FieldState,
    chars: &CharField,
    order_max: usize,
    transpiration: bool,
) -> Result<CompatCoeffs> {
    spec.validate()?;
    if order_max > MAX_ORDER {
        return Err(Error::InvalidInput(format!(
            "order_max {order_max} exceeds {MAX_ORDER}"
        )));
    }
    let g = &*bg.grid;
    if state.dims() != g.dims() {
        return Err(Error::GridMismatch);
    }
    let eq = WallEquation::new(g, bg, spec, state, transpiration);
    let coeffs = |c: Component| -> Vec<[f64; MAX_ORDER + 1]> {
        chars
            .paths
            .par_iter()
            .map(|p| {
                let mut a = [0.0; MAX_ORDER + 1];
                let xs = p.x_seed(&chars.x);
                a[0] = spec.jet(c, xs, p.eta, bg.eps0).v;
                if order_max == 0 {
                    return a;
                }
                let avail = p.y.len().min(order_max + 1);
                let ss: Vec<f64> = (0..avail).map(|m| chars.x[p.start + m] - xs).collect();
                let fs: Vec<f64> = (0..avail)
                    .map(|m| eq.f1(c, chars.x[p.start + m], p.y[m]))
                    .collect();
                a[1] = -fs[0];
                if avail > 1 {
                    let w = fornberg(0.0, &ss, avail - 1);
                    for i in 2..=order_max.min(avail) {
                        a[i] = -w[i - 1].iter().zip(&fs).map(|(w, f)| w * f).sum::<f64>();
                    }
                }
                a
            })
            .collect()
    };
    Ok(CompatCoeffs {
        order: order_max,
        a_u: coeffs(Component::U),
        a_v: coeffs(Component::V),
    })
}

/// φⁱ(s): sⁱ for i ≤ 8; for i ≥ 9, sⁱ up to s₁ = ¼(1/(M+1))^{1/(i−8)}, the
/// plateau 2s₁ⁱ from 2s₁ on, and a quintic Hermite blend in between.
pub fn cutoff(i: usize, m: f64, s: f64) -> f64 {
    if i <= 8 {
        return s.powi(i as i32);
    }
    let ii = i as f64;
    let s1 = 0.25 * (1.0 / (m + 1.0)).powf(1.0 / (ii - 8.0));
    let s2 = 2.0 * s1;
    let plateau = 2.0 / 4f64.powi(i as i32) * (1.0 / (m + 1.0)).powf(ii / (ii - 8.0));
    if s <= s1 {
        return s.powi(i as i32);
    }
    if s >= s2 {
        return plateau;
    }
    let h = s2 - s1;
    let t = (s - s1) / h;
    let (p0, d0, c0) = (
        s1.powi(i as i32),
        ii * s1.powi(i as i32 - 1) * h,
        ii * (ii - 1.0) * s1.powi(i as i32 - 2) * h * h,
    );
    // quintic Hermite basis on [0, 1]
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    p0 * h0 + d0 * h1 + c0 * h2 + plateau * h5
}

/// Boundary data on the full grid. Nodes on {x = 0}, {y = 0}, {z = 0} and
/// {z = Zmax} carry the data; interior nodes hold the analytic extension
/// ū + δ.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub u: Field3,
    pub v: Field3,
    pub eps0: f64,
    pub i_max: usize,
}

impl BoundaryData {
    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        let d = self.u.dims();
        i == 0 || j == 0 || k == 0 || k + 1 == d.nz
    }
}

/// 4-point Lagrange interpolation from increasing abscissae.
fn cubic_interp(xs: &[f64], fs: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let p = xs.partition_point(|&v| v < x);
    let lo = p.saturating_sub(2).min(n.saturating_sub(4));
    let hi = (lo + 4).min(n);
    let mut s = 0.0;
    for a in lo..hi {
        let mut l = 1.0;
        for b in lo..hi {
            if b != a {
                l *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        s += l * fs[a];
    }
    s
}

/// Assembles the wall data ū + a⁰ + Σ aⁱφⁱ(s)/i! along each path and
/// interpolates it back to the grid in y; the other faces take ū + δ.
pub fn build_boundary_data(
    spec: &PerturbationSpec,
    bg: &BackgroundProfile,
    chars: &CharField,
    coeffs: &CompatCoeffs,
) -> Result<BoundaryData> {
    spec.validate()?;
    let g = &*bg.grid;
    let d = g.dims();
    if chars.x.len() != d.nx || coeffs.a_u.len() != chars.paths.len() {
        return Err(Error::GridMismatch);
    }
    let i_max = spec.i_max.min(coeffs.order);
    let m = coeffs.cutoff_m();
    let ext = |c: Component| {
        Field3::from_columns(d, |i, j, col| {
            let ub = bg.ubar.column(i, j);
            for (k, o) in col.iter_mut().enumerate() {
                *o = ub[k] + spec.jet(c, g.x[i], g.y[j], g.z[k] + bg.eps0).v;
            }
        })
    };
    let mut u = ext(Component::U);
    let mut v = ext(Component::V);
    let corr = |a: &[f64; MAX_ORDER + 1], s: f64| {
        let mut c = a[0];
        let mut fact = 1.0;
        for (i, ai) in a.iter().enumerate().take(i_max + 1).skip(1) {
            fact *= i as f64;
            c += ai * cutoff(i, m, s) / fact;
        }
        c
    };
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (1..d.nx)
        .into_par_iter()
        .map(|i| {
            let st = chars.at_station(i);
            let ys: Vec<f64> = st.iter().map(|p| p.0).collect();
            let cu: Vec<f64> = st
                .iter()
                .map(|&(_, n)| corr(&coeffs.a_u[n], g.x[i] - chars.x[chars.paths[n].start]))
                .collect();
            let cv: Vec<f64> = st
                .iter()
                .map(|&(_, n)| corr(&coeffs.a_v[n], g.x[i] - chars.x[chars.paths[n].start]))
                .collect();
            let ru = g.y.iter().map(|&y| cubic_interp(&ys, &cu, y)).collect();
            let rv = g.y.iter().map(|&y| cubic_interp(&ys, &cv, y)).collect();
            (ru, rv)
        })
        .collect();
    for (r, (ru, rv)) in rows.iter().enumerate() {
        let i = r + 1;
        for j in 0..d.ny {
            let ub = bg.ubar.get(i, j, 0);
            u.set(i, j, 0, ub + ru[j]);
            v.set(i, j, 0, ub + rv[j]);
        }
    }
    Ok(BoundaryData {
        u,
        v,
        eps0: bg.eps0,
        i_max,
    })
}

/// Node-wise envelope checks on the boundary nodes of the assembled data.
///
/// Each upper-bound entry reports, as its margin, how many powers of ε the
/// data clears beyond the required one: the largest k with
/// |dev| ≤ εᵏ Φ everywhere, minus the required exponent. `aux` is that k.
pub fn check_envelopes(
    spec: &PerturbationSpec,
    bg: &BackgroundProfile,
    bd: &BoundaryData,
) -> DiagnosticsReport {
    let g = &*bg.grid;
    let d = g.dims();
    let e = &spec.envelope;
    let wp = BarrierParams {
        a: e.a,
        delta: e.delta,
        n: e.n,
        mu: e.mu,
        alpha: 0.1,
        eps0: bg.eps0,
    };
    let phi = |beta: f64| {
        Field3::from_columns(d, |i, _j, col| {
            for (k, o) in col.iter_mut().enumerate() {
                *o = phi1_value(&wp, beta, g.x[i], g.z[k]);
            }
        })
    };
    let (phi1, phi2) = (phi(1.0), phi(2.0));
    let du = bd.u.sub(&bg.ubar);
    let dv = bd.v.sub(&bg.ubar);
    let sum = |f: &dyn Fn(&Field3) -> Field3| {
        let a = f(&du);
        let b = f(&dv);
        a.zip_map(&b, |p, q| p.abs() + q.abs())
    };
    let tang = |f: &dyn Fn(&Field3) -> Field3| {
        let a = f(&du);
        let b = f(&dv);
        a.zip_map(&b, |p, q| p.abs() + q.abs())
    };
    let value = sum(&|f| f.clone());
    let dz = sum(&|f| g.dz(f));
    let dxy = tang(&|f| g.dx(f)).zip_map(&tang(&|f| g.dy(f)), f64::max);
    let dzxy = tang(&|f| g.dz(&g.dx(f))).zip_map(&tang(&|f| g.dz(&g.dy(f))), f64::max);
    let dxx = tang(&|f| g.dxx(f));
    let dxy2 = tang(&|f| g.dx(&g.dy(f)));
    let dyy = tang(&|f| g.dyy(f));
    let dxyxy = dxx.zip_map(&dxy2, f64::max).zip_map(&dyy, f64::max);

    let ln_eps = spec.eps.ln();
    let mut r = DiagnosticsReport::new();
    r.meta.grid = format!("{}x{}x{}", d.nx, d.ny, d.nz);
    let checks: [(&str, &Field3, &Field3, f64); 5] = [
        ("env_value", &value, &phi2, 8.0),
        ("env_dz", &dz, &phi2, 7.0),
        ("env_dxy", &dxy, &phi1, 6.0),
        ("env_dzxy", &dzxy, &phi1, 6.0),
        ("env_dxyxy", &dxyxy, &phi1, 6.0),
    ];
    let on_boundary = |l: Location| l.i == 0 || l.j == 0 || l.k == 0;
    for (id, q, w, k_req) in checks {
        let worst = field_argmin(d, |n, l| {
            if !on_boundary(l) {
                return None;
            }
            let qv = q.data()[n];
            if qv == 0.0 {
                return Some(f64::INFINITY);
            }
            Some((qv / w.data()[n]).ln() / ln_eps)
        });
        match worst {
            Some((k_max, at)) => {
                r.push(Entry::at_node(id, "boundary", k_max - k_req, g, at).with_aux(k_max))
            }
            None => r.push(Entry::scalar(id, "boundary", f64::INFINITY)),
        }
    }
    let c = bg.constants.mono_c;
    let xl = g.lx();
    // analytic ∂z ū plus the differenced deviation
    let uz = bg.d_z_ubar.add(&g.dz(&du));
    let vz = bg.d_z_ubar.add(&g.dz(&dv));
    let worst = field_argmin(d, |n, l| {
        if !on_boundary(l) {
            return None;
        }
        let t = g.z[l.k] + bg.eps0;
        let env = c * (-1.5 * bg.mu * t * t / (1.0 + xl)).exp();
        Some(uz.data()[n].min(vz.data()[n]) / env - 1.0)
    });
    if let Some((m, at)) = worst {
        r.push(Entry::at_node("env_dz_lower", "boundary", m, g, at).with_aux(c));
    }
    r.meta.notes.push(format!(
        "envelope margins are exponent slack in powers of eps = {}",
        spec.eps
    ));
    r
}

/// Characteristics, coefficients, assembly and envelope report in one call.
/// In strict mode a failing envelope becomes an error.
pub fn synthesize(
    spec: &PerturbationSpec,
    bg: &BackgroundProfile,
    state: &FieldState,
    transpiration: bool,
) -> Result<(BoundaryData, DiagnosticsReport)> {
    let g = &*bg.grid;
    let qt = state.q.zip_map(&state.u, |a, b| a / b);
    let chars = solve_characteristics(g, &wall_slice(&qt, 0))?;
    let coeffs = compat_coefficients(spec, bg, state, &chars, spec.i_max, transpiration)?;
    let bd = build_boundary_data(spec, bg, &chars, &coeffs)?;
    let rep = check_envelopes(spec, bg, &bd);
    if spec.strict {
        if let Some(e) = rep.failing().first() {
            return Err(Error::EnvelopeViolation {
                check: e.check_id.clone(),
                margin: e.margin,
            });
        }
    }
    Ok((bd, rep))
}

/// ∂x u on {x = 0} from the equation at the inflow face:
/// ∂x u = ∂z(u ∫₀^z RHS/u² dz′), RHS = −v∂y u + (∫₀^z ∂y v)∂z u − w₀∂z u + ∂z²u.
///
/// Reads the i = 0 slab of `u` and `v`; `w0` holds the wall flux per j (or
/// `None`). Returns values row-major in (j, k).
pub fn trace_dx_u_at_inflow(
    g: &Grid3,
    u: &Field3,
    v: &Field3,
    w0: Option<&[f64]>,
    u_floor: f64,
) -> Result<Vec<f64>> {
    let d = g.dims();
    if u.dims() != d || v.dims() != d || w0.is_some_and(|w| w.len() != d.ny) {
        return Err(Error::GridMismatch);
    }
    let (us, vs) = (u.slab(0), v.slab(0));
    for (n, &val) in us.iter().enumerate() {
        if !(val > u_floor) {
            return Err(Error::DegenerateU {
                min: val,
                floor: u_floor,
                at: Location {
                    i: 0,
                    j: n / d.nz,
                    k: n % d.nz,
                },
            });
        }
    }
    let (yo, zo) = (g.ops(Axis::Y), g.z_ops());
    let nz = d.nz;
    let out: Vec<Vec<f64>> = (0..d.ny)
        .into_par_iter()
        .map(|j| {
            let uc = &us[j * nz..(j + 1) * nz];
            let base = |k: usize| k;
            let dyv: Vec<f64> = (0..nz)
                .map(|k| yo.d1[j].apply_strided(vs, base(k), nz))
                .collect();
            let mut int_dyv = vec![0.0; nz];
            for k in 1..nz {
                int_dyv[k] = int_dyv[k - 1] + 0.5 * (g.z[k] - g.z[k - 1]) * (dyv[k - 1] + dyv[k]);
            }
            let wall = w0.map_or(0.0, |w| w[j]);
            let integrand: Vec<f64> = (0..nz)
                .map(|k| {
                    let uy = yo.d1[j].apply_strided(us, base(k), nz);
                    let uz = zo.d1[k].apply(uc);
                    let uzz = zo.d2[k].apply(uc);
                    let rhs = -vs[j * nz + k] * uy + int_dyv[k] * uz - wall * uz + uzz;
                    rhs / (uc[k] * uc[k])
                })
                .collect();
            let mut prod = vec![0.0; nz];
            let mut acc = 0.0;
            for k in 1..nz {
                acc += 0.5 * (g.z[k] - g.z[k - 1]) * (integrand[k - 1] + integrand[k]);
                prod[k] = uc[k] * acc;
            }
            (0..nz).map(|k| zo.d1[k].apply(&prod)).collect()
        })
        .collect();
    Ok(out.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::build_background;
    use crate::blasius::solve_blasius;
    use proptest::prelude::*;

    fn setup(n: usize, eps0: f64) -> (Grid3, BackgroundProfile) {
        let g = Grid3::uniform(n, n, 4 * n, 0.1, 1.0, 14.0).unwrap();
        let b = solve_blasius(20.0, 1e-3, 1e-12).unwrap();
        let bg = build_background(&b, &g, eps0).unwrap();
        (g, bg)
    }

    fn bg_state(g: &Grid3, bg: &BackgroundProfile) -> FieldState {
        FieldState::from_uv(g, bg.ubar.clone(), bg.ubar.clone(), 0).unwrap()
    }

    fn wall_q(g: &Grid3, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut q = Vec::new();
        for &x in &g.x {
            for &y in &g.y {
                q.push(f(x, y));
            }
        }
        q
    }

    #[test]
    fn straight_characteristics_for_zero_q() {
        let g = Grid3::uniform(9, 12, 9, 0.1, 1.0, 5.0).unwrap();
        let cf = solve_characteristics(&g, &vec![0.0; 9 * 12]).unwrap();
        for p in &cf.paths {
            for (m, y) in p.y.iter().enumerate() {
                assert_eq!(*y, p.eta + (g.x[p.start + m] - g.x[p.start]));
            }
        }
        assert_eq!(cf.max_eta_jacobian(), 1.0);
    }

    #[test]
    fn jacobian_bound_for_small_q() {
        let g = Grid3::uniform(17, 17, 9, 0.1, 1.0, 5.0).unwrap();
        let q = wall_q(&g, |x, y| 0.05 * (3.0 * y).sin() * (1.0 + x));
        let cf = solve_characteristics(&g, &q).unwrap();
        assert!(cf.max_eta_jacobian() <= cf.jacobian_bound());
        assert!(cf.max_eta_jacobian() > 1.0);
    }

    #[test]
    fn rejects_large_q_and_crossings() {
        let g = Grid3::uniform(9, 9, 9, 0.1, 1.0, 5.0).unwrap();
        assert!(matches!(
            solve_characteristics(&g, &vec![0.6; 81]),
            Err(Error::InvalidInput(_))
        ));
        // steep compression in y: paths from y and y + h meet
        let g2 = Grid3::uniform(9, 9, 9, 0.1, 0.02, 5.0).unwrap();
        let q = wall_q(&g2, |_, y| if y < 0.01 { 0.5 } else { -0.5 });
        assert!(matches!(
            solve_characteristics(&g2, &q),
            Err(Error::CrossingDetected { .. })
        ));
    }

    fn directional_error(n: usize) -> f64 {
        let g = Grid3::uniform(n, n, 9, 0.1, 1.0, 5.0).unwrap();
        let qf = |x: f64, y: f64| 0.1 * (2.0 * y + x).sin();
        let cf = solve_characteristics(&g, &wall_q(&g, qf)).unwrap();
        let test = |x: f64, y: f64| (x + 2.0 * y).cos();
        let mut err: f64 = 0.0;
        for p in cf
            .paths
            .iter()
            .filter(|p| p.edge == Edge::Inflow && p.eta < 0.3)
        {
            for m in 1..p.y.len() - 1 {
                let i = p.start + m;
                let h = g.x[i + 1] - g.x[i];
                let along =
                    (test(g.x[i + 1], p.y[m + 1]) - test(g.x[i - 1], p.y[m - 1])) / (2.0 * h);
                let (x, y) = (g.x[i], p.y[m]);
                let exact = -(x + 2.0 * y).sin() * (1.0 + 2.0 * (1.0 + qf(x, y)));
                err = err.max((along - exact).abs());
            }
        }
        err
    }

    #[test]
    fn directional_derivative_identity() {
        let (e1, e2) = (directional_error(17), directional_error(33));
        assert!(e2 < 5e-3, "e2 = {e2}");
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn zero_perturbation_gives_zero_coefficients_and_background_data() {
        let (g, bg) = setup(12, 0.05);
        let st = bg_state(&g, &bg);
        let spec = PerturbationSpec::zero();
        let (bd, _) = synthesize(&spec, &bg, &st, true).unwrap();
        let cf = solve_characteristics(&g, &vec![0.0; 144]).unwrap();
        let co = compat_coefficients(&spec, &bg, &st, &cf, 3, true).unwrap();
        // differencing along paths amplifies round-off by 1/h per order
        for i in 0..=3 {
            let tol = 1e-12 * g.hx().powi(1 - i as i32).max(1.0);
            assert!(co.sup(i) < tol, "a{i} = {}", co.sup(i));
        }
        // exact zero coefficients reproduce the background traces exactly
        let exact = CompatCoeffs {
            order: 2,
            a_u: vec![[0.0; 4]; cf.paths.len()],
            a_v: vec![[0.0; 4]; cf.paths.len()],
        };
        let bd0 = build_boundary_data(&spec, &bg, &cf, &exact).unwrap();
        assert_eq!(bd0.u, bg.ubar);
        assert_eq!(bd0.v, bg.ubar);
        assert!(bd.u.sub(&bg.ubar).max_abs() < 1e-12);
    }

    #[test]
    fn transpiration_is_needed_for_compatibility() {
        let (g, bg) = setup(12, 0.05);
        let st = bg_state(&g, &bg);
        let cf = solve_characteristics(&g, &vec![0.0; 144]).unwrap();
        let co = compat_coefficients(&PerturbationSpec::zero(), &bg, &st, &cf, 1, false).unwrap();
        assert!(co.sup(1) > 1e-3);
    }

    #[test]
    fn first_coefficient_matches_grid_operator() {
        // a¹ = −F₁ against P₁ of the extended data evaluated with grid stencils,
        // lagged on the extended data itself (the Picard fixed point)
        let errs: Vec<f64> = [16, 32]
            .iter()
            .map(|&n| {
                let g = Grid3::stretched(n, n, 4 * n, 0.1, 1.0, 14.0, 2.0).unwrap();
                let b = solve_blasius(20.0, 1e-3, 1e-12).unwrap();
                let bg = build_background(&b, &g, 0.05).unwrap();
                let spec = PerturbationSpec::bump(1e-2, 1.0, -0.5, 1.0);
                let extend = |c: Component| {
                    Field3::from_columns(g.dims(), |i, j, col| {
                        let ub = bg.ubar.column(i, j);
                        for (k, o) in col.iter_mut().enumerate() {
                            *o = ub[k] + spec.jet(c, g.x[i], g.y[j], g.z[k] + 0.05).v;
                        }
                    })
                };
                let ext = extend(Component::U);
                let st = FieldState::from_uv(&g, ext.clone(), extend(Component::V), 0).unwrap();
                let qt = st.q.zip_map(&st.u, |a, b| a / b);
                let cf = solve_characteristics(&g, &wall_slice(&qt, 0)).unwrap();
                let co = compat_coefficients(&spec, &bg, &st, &cf, 1, true).unwrap();
                let ctx = crate::vector_calculus::VFContext::new(&g, &st, Some(&bg), 1e-6).unwrap();
                let ops = crate::barrier::POps::new(&ctx, &ext, true).unwrap();
                let p1 = ops.apply(crate::barrier::POp::P1, &ext);
                let ux = g.dx(&ext);
                let uy = g.dy(&ext);
                let mut err: f64 = 0.0;
                for (n_p, p) in cf.paths.iter().enumerate() {
                    if p.edge != Edge::Inflow {
                        continue;
                    }
                    let Some(j) = g.y.iter().position(|&y| y == p.eta) else {
                        continue;
                    };
                    let m = g.dims().idx(0, j, 0);
                    let dsbar = 2.0 * bg.d_x_ubar.data()[m];
                    let f1 = p1.data()[m] - ux.data()[m] - uy.data()[m] + dsbar;
                    err = err.max((co.a_u[n_p][1] + f1).abs());
                }
                err
            })
            .collect();
        assert!(errs[1] < errs[0] * 0.75, "{errs:?}");
    }

    #[test]
    fn tenfold_eps_reduction() {
        let (g, bg) = setup(12, 0.05);
        let st = bg_state(&g, &bg);
        let cf = solve_characteristics(&g, &vec![0.0; 144]).unwrap();
        let a = compat_coefficients(
            &PerturbationSpec::bump(1e-2, 1.0, 1.0, 1.0),
            &bg,
            &st,
            &cf,
            2,
            true,
        )
        .unwrap();
        let b = compat_coefficients(
            &PerturbationSpec::bump(1e-3, 1.0, 1.0, 1.0),
            &bg,
            &st,
            &cf,
            2,
            true,
        )
        .unwrap();
        for i in 0..=2 {
            let ratio = a.sup(i) / b.sup(i);
            assert!((ratio - 10.0).abs() < 0.2, "a{i}: ratio {ratio}");
        }
    }

    #[test]
    fn wall_deviation_scales_like_eps0_cubed() {
        let sup0 = |e0: f64| {
            let (g, bg) = setup(10, e0);
            let st = bg_state(&g, &bg);
            let cf = solve_characteristics(&g, &vec![0.0; 100]).unwrap();
            compat_coefficients(
                &PerturbationSpec::bump(1e-3, 1.0, 1.0, 1.0),
                &bg,
                &st,
                &cf,
                0,
                true,
            )
            .unwrap()
            .sup(0)
        };
        let r = sup0(0.1) / sup0(0.05);
        assert!((r - 8.0).abs() < 0.1, "ratio {r}");
    }

    #[test]
    fn cutoff_junctions() {
        let m: f64 = 3.0;
        for i in [9usize, 10, 12] {
            let ii = i as f64;
            let s1 = 0.25 * (1.0 / (m + 1.0)).powf(1.0 / (ii - 8.0));
            let plateau = 2.0 / 4f64.powi(i as i32) * (1.0 / (m + 1.0)).powf(ii / (ii - 8.0));
            assert_eq!(cutoff(i, m, 3.0 * s1), plateau);
            let tiny = 1e-9 * s1;
            let at = |s: f64| cutoff(i, m, s);
            assert!(((at(s1 + tiny) - at(s1 - tiny)) / at(s1)).abs() < 1e-6);
            assert!(((at(2.0 * s1 + tiny) - at(2.0 * s1 - tiny)) / plateau).abs() < 1e-6);
        }
        assert_eq!(cutoff(2, 100.0, 0.3), 0.3f64.powi(2));
    }

    #[test]
    fn trace_matches_background() {
        let errs: Vec<f64> = [8, 16]
            .iter()
            .map(|&n| {
                let g = Grid3::uniform(8, 4 * n, 16 * n, 0.1, 1.0, 14.0).unwrap();
                let b = solve_blasius(20.0, 1e-3, 1e-12).unwrap();
                let bg = build_background(&b, &g, 0.05).unwrap();
                let w0: Vec<f64> = (0..g.y.len()).map(|j| bg.w0_at(0, j)).collect();
                let t = trace_dx_u_at_inflow(&g, &bg.ubar, &bg.ubar, Some(&w0), 1e-6).unwrap();
                let ex = bg.d_x_ubar.slab(0);
                t.iter()
                    .zip(ex)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .collect();
        assert!(errs[1] < 0.35 * errs[0], "{errs:?}");
    }

    #[test]
    fn trace_reduces_to_diffusion_branch() {
        let g = Grid3::uniform(8, 8, 64, 0.1, 1.0, 8.0).unwrap();
        let u = g.sample(|_, _, z| 1.0 - 0.9 * (-z).exp());
        let t = trace_dx_u_at_inflow(&g, &u, &u, None, 1e-6).unwrap();
        let uc = u.column(0, 3);
        let zo = g.z_ops();
        let mut acc = 0.0;
        let mut prod = vec![0.0; 64];
        for k in 1..64 {
            let f = |k: usize| zo.d2[k].apply(uc) / (uc[k] * uc[k]);
            acc += 0.5 * (g.z[k] - g.z[k - 1]) * (f(k - 1) + f(k));
            prod[k] = uc[k] * acc;
        }
        for k in 0..64 {
            assert!((t[3 * 64 + k] - zo.d1[k].apply(&prod)).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_wall_value_vanishes_with_eps0() {
        let wall = |e0: f64| {
            let g = Grid3::stretched(8, 12, 256, 0.1, 1.0, 14.0, 3.0).unwrap();
            let b = solve_blasius(20.0, 1e-3, 1e-12).unwrap();
            let bg = build_background(&b, &g, e0).unwrap();
            let w0: Vec<f64> = (0..12).map(|j| bg.w0_at(0, j)).collect();
            let t = trace_dx_u_at_inflow(&g, &bg.ubar, &bg.ubar, Some(&w0), 1e-6).unwrap();
            (0..12).fold(0.0_f64, |m, j| m.max(t[j * 256].abs()))
        };
        let (a, b) = (wall(0.1), wall(0.05));
        assert!(b < 0.7 * a, "{a} {b}");
    }

    #[test]
    fn trace_rejects_degenerate_u() {
        let g = Grid3::uniform(8, 8, 16, 0.1, 1.0, 8.0).unwrap();
        let u = g.sample(|_, _, z| z);
        assert!(matches!(
            trace_dx_u_at_inflow(&g, &u, &u, None, 1e-6),
            Err(Error::DegenerateU { .. })
        ));
    }

    #[test]
    fn envelope_report_is_complete() {
        let (g, bg) = setup(10, 0.05);
        let st = bg_state(&g, &bg);
        let spec = PerturbationSpec::bump(1e-3, 1.0, 1.0, 1.0);
        let (_, rep) = synthesize(&spec, &bg, &st, true).unwrap();
        assert!(rep.is_complete(&[
            "env_value",
            "env_dz",
            "env_dxy",
            "env_dzxy",
            "env_dxyxy",
            "env_dz_lower"
        ]));
        assert!(rep.get("env_dz_lower").unwrap().pass);
        let strict = PerturbationSpec {
            strict: true,
            ..spec
        };
        assert!(matches!(
            synthesize(&strict, &bg, &st, true),
            Err(Error::EnvelopeViolation { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn constants_transported(c in -0.4f64..0.4, amp in 0.0f64..0.3) {
            let g = Grid3::uniform(9, 11, 9, 0.1, 1.0, 5.0).unwrap();
            let q = wall_q(&g, |x, y| c + amp * (y + x).sin() * 0.3);
            let cf = solve_characteristics(&g, &q).unwrap();
            // a constant carried along every path interpolates to itself
            for i in 0..9 {
                let st = cf.at_station(i);
                let ys: Vec<f64> = st.iter().map(|p| p.0).collect();
                let fs = vec![0.7; ys.len()];
                for &y in &g.y {
                    prop_assert!((cubic_interp(&ys, &fs, y) - 0.7).abs() < 1e-12);
                }
            }
        }
    }
}

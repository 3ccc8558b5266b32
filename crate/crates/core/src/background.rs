//! Symmetric background obtained by rotating the Blasius profile,
//! u_B(x,y,z) = v_B(x,y,z) = u_s((x+y)/2, z), lifted by ε₀:
//! ū(x,y,z) = f'(ζ), ζ = (z+ε₀)/√s, s = x + y + 2x₀.
//!
//! All derivatives are analytic. Mixed derivatives come from truncated bivariate
//! Taylor jets in (s, t = z + ε₀) composed with the ODE jet of f; since ū depends
//! on (x, y) only through s, ∂x = ∂y = ∂s.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::barrier::{phi1_value, BarrierParams};
use crate::blasius::BlasiusProfile;
use crate::error::{Error, Result};
use crate::grid::{Dims, Field3, Grid3};
use crate::report::{field_argmin, DiagnosticsReport, Entry};

/// Jet size: total degree ≤ JD − 1.
const JD: usize = 7;
/// Largest supported total derivative order.
pub const MAX_JET_ORDER: usize = JD - 1;

/// Truncated Taylor coefficients c[a][b] of a function of (s, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2(pub [[f64; JD]; JD]);

impl Jet2 {
    fn zero() -> Jet2 {
        Jet2([[0.0; JD]; JD])
    }

    fn mul(&self, q: &Jet2, ord: usize) -> Jet2 {
        let mut r = Jet2::zero();
        for a in 0..=ord {
            for b in 0..=ord - a {
                let pv = self.0[a][b];
                if pv == 0.0 {
                    continue;
                }
                for c in 0..=ord - a - b {
                    for d in 0..=ord - a - b - c {
                        r.0[a + c][b + d] += pv * q.0[c][d];
                    }
                }
            }
        }
        r
    }

    /// ∂s^a ∂t^b at the expansion point.
    pub fn deriv(&self, a: usize, b: usize) -> f64 {
        self.0[a][b] * factorial(a) * factorial(b)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Jets of ζ − ζ₀ and of s^{-1/2} at (s, t).
fn zeta_jet(s: f64, t: f64, ord: usize) -> (f64, Jet2, Jet2) {
    let mut r = Jet2::zero();
    let mut coef = s.powf(-0.5);
    for n in 0..=ord {
        r.0[n][0] = coef;
        coef *= (-0.5 - n as f64) / ((n + 1) as f64) / s;
    }
    let mut delta = Jet2::zero();
    for n in 0..=ord {
        delta.0[n][0] = t * r.0[n][0];
        if n < ord {
            delta.0[n][1] = r.0[n][0];
        }
    }
    let z0 = delta.0[0][0];
    delta.0[0][0] = 0.0;
    (z0, delta, r)
}

/// Σ d[m]/m! δ^m by Horner.
fn compose(d: &[f64], delta: &Jet2, ord: usize) -> Jet2 {
    let mut acc = Jet2::zero();
    for m in (0..=ord).rev() {
        acc = acc.mul(delta, ord);
        acc.0[0][0] += d[m] / factorial(m);
    }
    acc
}

/// Bounds-check constants fixed on a calibration run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssumptionConstants {
    /// c in ∂z ū ≥ c e^{−(3/2)μ(z+ε₀)²/(1+X)}.
    pub mono_c: f64,
    /// C per upper-bound check id.
    pub upper: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct BackgroundProfile {
    pub grid: Arc<Grid3>,
    pub eps0: f64,
    pub mu: f64,
    pub x0: f64,
    pub ubar: Field3,
    pub d_z_ubar: Field3,
    /// ∂x ū (= ∂y ū).
    pub d_x_ubar: Field3,
    pub d_zz_ubar: Field3,
    /// w̄ = (ζ f' − f)/√s from continuity.
    pub wbar: Field3,
    /// Wall transpiration w̄(x, y, 0), row-major (i, j).
    pub w0: Vec<f64>,
    pub constants: AssumptionConstants,
    blasius: Arc<BlasiusProfile>,
    s_values: Vec<f64>,
    s_index: Vec<usize>,
}

/// μ from the rescaling window: (4/5)(100/101) / (2(Y + 2x₀)).
pub fn default_mu(y_len: f64, x0: f64) -> f64 {
    0.8 * (100.0 / 101.0) / (2.0 * (y_len + 2.0 * x0))
}

/// Builds ū with the default μ and calibrates the assumption constants.
pub fn build_background(b: &BlasiusProfile, g: &Grid3, eps0: f64) -> Result<BackgroundProfile> {
    let mu = default_mu(g.ly(), b.x0);
    let mut p = build_background_with(b, g, eps0, mu)?;
    p.constants = calibrate(&p);
    Ok(p)
}

/// Builds ū with an explicit μ; constants are left empty.
pub fn build_background_with(
    b: &BlasiusProfile,
    g: &Grid3,
    eps0: f64,
    mu: f64,
) -> Result<BackgroundProfile> {
    if !(eps0 > 0.0) {
        return Err(Error::DomainError(format!(
            "eps0 must be positive, got {eps0}"
        )));
    }
    if !(mu > 0.0) {
        return Err(Error::DomainError(format!("mu must be positive, got {mu}")));
    }
    if g.lx() >= 0.2 {
        return Err(Error::DomainError(format!(
            "X = {} must be below 1/5",
            g.lx()
        )));
    }
    let d = g.dims();
    let x0 = b.x0;
    let mut map: BTreeMap<u64, usize> = BTreeMap::new();
    let mut s_values = Vec::new();
    let mut s_index = Vec::with_capacity(d.nx * d.ny);
    for i in 0..d.nx {
        for j in 0..d.ny {
            let s = g.x[i] + g.y[j] + 2.0 * x0;
            let id = *map.entry(s.to_bits()).or_insert_with(|| {
                s_values.push(s);
                s_values.len() - 1
            });
            s_index.push(id);
        }
    }
    let blasius = Arc::new(b.clone());
    let mut p = BackgroundProfile {
        grid: Arc::new(g.clone()),
        eps0,
        mu,
        x0,
        ubar: Field3::zeros(d),
        d_z_ubar: Field3::zeros(d),
        d_x_ubar: Field3::zeros(d),
        d_zz_ubar: Field3::zeros(d),
        wbar: Field3::zeros(d),
        w0: Vec::new(),
        constants: AssumptionConstants::default(),
        blasius,
        s_values,
        s_index,
    };
    let cols = p.columns(2, |jet, _| {
        [
            jet.deriv(0, 0),
            jet.deriv(0, 1),
            jet.deriv(1, 0),
            jet.deriv(0, 2),
        ]
    });
    p.ubar = p.scatter(&cols, 0);
    p.d_z_ubar = p.scatter(&cols, 1);
    p.d_x_ubar = p.scatter(&cols, 2);
    p.d_zz_ubar = p.scatter(&cols, 3);
    let wcols: Vec<Vec<[f64; 1]>> = p
        .s_values
        .par_iter()
        .map(|&s| g.z.iter().map(|&z| [p.w_point(s, z + eps0)]).collect())
        .collect();
    p.wbar = p.scatter(&wcols, 0);
    p.w0 = (0..d.nx * d.ny)
        .map(|c| p.w_point(p.s_values[p.s_index[c]], eps0))
        .collect();
    Ok(p)
}

impl BackgroundProfile {
    pub fn dims(&self) -> Dims {
        self.grid.dims()
    }

    pub fn blasius(&self) -> &BlasiusProfile {
        &self.blasius
    }

    /// s = x_i + y_j + 2x₀ as used for node (i, j).
    pub fn s_at(&self, i: usize, j: usize) -> f64 {
        self.s_values[self.s_index[i * self.dims().ny + j]]
    }

    pub fn w0_at(&self, i: usize, j: usize) -> f64 {
        self.w0[i * self.dims().ny + j]
    }

    /// w̄(s, t) = (ζ f' − f)/√s, ζ = t/√s.
    fn w_point(&self, s: f64, t: f64) -> f64 {
        let rs = s.sqrt();
        let zeta = t / rs;
        let [f, fp, _] = self.blasius.eval(zeta);
        (zeta * fp - f) / rs
    }

    /// Jet of ū in (s, t) at (s, t = z + ε₀) up to total order `ord`.
    pub fn u_jet(&self, s: f64, t: f64, ord: usize) -> Jet2 {
        let ord = ord.min(MAX_JET_ORDER);
        let (z0, delta, _) = zeta_jet(s, t, ord);
        let fj = self.blasius.jet(z0, ord + 1);
        compose(&fj[1..], &delta, ord)
    }

    /// Jet of w̄ in (s, t) up to total order `ord`.
    pub fn w_jet(&self, s: f64, t: f64, ord: usize) -> Jet2 {
        let ord = ord.min(MAX_JET_ORDER);
        let (z0, delta, r) = zeta_jet(s, t, ord);
        let fj = self.blasius.jet(z0, ord + 1);
        // h(ζ) = ζ f' − f, h^(m) = (m−1) f^(m) + ζ f^(m+1)
        let mut h = vec![0.0; ord + 1];
        h[0] = z0 * fj[1] - fj[0];
        for m in 1..=ord {
            h[m] = (m as f64 - 1.0) * fj[m] + z0 * fj[m + 1];
        }
        compose(&h, &delta, ord).mul(&r, ord)
    }

    /// Point value of ū.
    pub fn u_point(&self, x: f64, y: f64, z: f64) -> f64 {
        let s = x + y + 2.0 * self.x0;
        self.blasius.eval((z + self.eps0) / s.sqrt())[1]
    }

    /// ∂s^a ∂z^b ū at a point.
    pub fn deriv_point(&self, x: f64, y: f64, z: f64, a: usize, b: usize) -> f64 {
        let s = x + y + 2.0 * self.x0;
        self.u_jet(s, z + self.eps0, a + b).deriv(a, b)
    }

    /// ∂s^a ∂z^b w̄ at a point.
    pub fn w_deriv_point(&self, x: f64, y: f64, z: f64, a: usize, b: usize) -> f64 {
        let s = x + y + 2.0 * self.x0;
        self.w_jet(s, z + self.eps0, a + b).deriv(a, b)
    }

    fn columns<const M: usize, F>(&self, ord: usize, f: F) -> Vec<Vec<[f64; M]>>
    where
        F: Fn(&Jet2, f64) -> [f64; M] + Sync,
    {
        let z = &self.grid.z;
        self.s_values
            .par_iter()
            .map(|&s| {
                z.iter()
                    .map(|&zk| f(&self.u_jet(s, zk + self.eps0, ord), s))
                    .collect()
            })
            .collect()
    }

    fn scatter<const M: usize>(&self, cols: &[Vec<[f64; M]>], m: usize) -> Field3 {
        let ny = self.dims().ny;
        Field3::from_columns(self.dims(), |i, j, out| {
            let c = &cols[self.s_index[i * ny + j]];
            for (o, v) in out.iter_mut().zip(c) {
                *o = v[m];
            }
        })
    }

    /// Analytic ∂s^a ∂z^b ū on the grid, a + b ≤ 6.
    pub fn derivative_field(&self, a: usize, b: usize) -> Field3 {
        let cols = self.columns(a + b, |jet, _| [jet.deriv(a, b)]);
        self.scatter(&cols, 0)
    }

    /// Analytic ∂s^a ∂z^b w̄ on the grid.
    pub fn w_derivative_field(&self, a: usize, b: usize) -> Field3 {
        let z = &self.grid.z;
        let cols: Vec<Vec<[f64; 1]>> = self
            .s_values
            .par_iter()
            .map(|&s| {
                z.iter()
                    .map(|&zk| [self.w_jet(s, zk + self.eps0, a + b).deriv(a, b)])
                    .collect()
            })
            .collect();
        self.scatter(&cols, 0)
    }

    /// ∫₀^z ∂x ū dz' = −(w̄ − w̄|_{z=0})/2.
    pub fn int_dx_ubar(&self) -> Field3 {
        let ny = self.dims().ny;
        let mut out = self.wbar.clone();
        out.data_mut()
            .par_chunks_mut(self.dims().nz)
            .enumerate()
            .for_each(|(c, col)| {
                let w0 = self.w0[c % (self.dims().nx * ny)];
                for v in col.iter_mut() {
                    *v = -0.5 * (*v - w0);
                }
            });
        out
    }

    /// 1 − ū without cancellation.
    pub fn deficit_field(&self) -> Field3 {
        let g = &self.grid;
        Field3::from_columns(self.dims(), |i, j, col| {
            let rs = self.s_at(i, j).sqrt();
            for (k, o) in col.iter_mut().enumerate() {
                *o = self.blasius.deficit((g.z[k] + self.eps0) / rs);
            }
        })
    }

    /// Max-norm finite-difference residuals of the steady system for the lifted
    /// background: (momentum, continuity).
    pub fn fd_residual(&self) -> (f64, f64) {
        let g = &self.grid;
        let ux = g.dx(&self.ubar);
        let uy = g.dy(&self.ubar);
        let uz = g.dz(&self.ubar);
        let uzz = g.dzz(&self.ubar);
        let wz = g.dz(&self.wbar);
        let d = self.dims();
        let mut mom: f64 = 0.0;
        let mut cont: f64 = 0.0;
        for n in 0..d.len() {
            let u = self.ubar.data()[n];
            let m = u * ux.data()[n] + u * uy.data()[n] + self.wbar.data()[n] * uz.data()[n]
                - uzz.data()[n];
            mom = mom.max(m.abs());
            cont = cont.max((ux.data()[n] + uy.data()[n] + wz.data()[n]).abs());
        }
        (mom, cont)
    }

    /// Weight parameters used by the growth checks: A = 0, δ = 1/4, N = 6.
    pub fn growth_weights(&self) -> BarrierParams {
        BarrierParams {
            a: 0.0,
            delta: 0.25,
            n: 6.0,
            mu: self.mu,
            alpha: 0.1,
            eps0: self.eps0,
        }
    }
}

/// Upper-bound checks: (id, |quantity| field, weight field).
fn upper_checks(p: &BackgroundProfile) -> Vec<(String, Field3, Field3)> {
    let g = &p.grid;
    let d = p.dims();
    let xl = g.lx();
    let mut out = Vec::new();
    let env = Field3::from_columns(d, |i, _j, col| {
        for (k, o) in col.iter_mut().enumerate() {
            let t = g.z[k] + p.eps0;
            *o = (-p.mu * t * t / (g.x[i] + 1.0)).exp();
        }
    });
    let _ = xl;
    for a in 0..=4 {
        for b in 0..=2 {
            if a + b == 0 {
                continue;
            }
            out.push((
                format!("bg_tail_s{a}_z{b}"),
                p.derivative_field(a, b),
                env.clone(),
            ));
        }
    }
    let w = p.growth_weights();
    let phi = |beta: f64| {
        Field3::from_columns(d, |i, _j, col| {
            for (k, o) in col.iter_mut().enumerate() {
                *o = phi1_value(&w, beta, g.x[i], g.z[k]);
            }
        })
    };
    let phi10 = phi(0.0);
    let phi11 = phi(1.0);
    let u = &p.ubar;
    let uz = &p.d_z_ubar;
    let ux = &p.d_x_ubar;
    let uzz = &p.d_zz_ubar;
    let uxz = p.derivative_field(1, 1);
    let uxx = p.derivative_field(2, 0);
    let uzzz = p.derivative_field(0, 3);
    let i_dx = p.int_dx_ubar();
    // ∂x I = −(∂s w̄ − ∂s w̄|_{z=0})/2
    let wx = p.w_derivative_field(1, 0);
    let ix = Field3::from_columns(d, |i, j, col| {
        let c = wx.column(i, j);
        for (o, v) in col.iter_mut().zip(c) {
            *o = -0.5 * (v - c[0]);
        }
    });
    let n = d.len();
    let mut t1 = vec![0.0; n];
    let mut t2 = vec![0.0; n];
    for m in 0..n {
        let (uu, uzv, uxv) = (u.data()[m], uz.data()[m], ux.data()[m]);
        let gg = i_dx.data()[m] / uu;
        let h = uxv - gg * uzv;
        let gz = uxv / uu - i_dx.data()[m] * uzv / (uu * uu);
        let gx = ix.data()[m] / uu - i_dx.data()[m] * uxv / (uu * uu);
        let hx = uxx.data()[m] - gx * uzv - gg * uxz.data()[m];
        let hz = uxz.data()[m] - gz * uzv - gg * uzz.data()[m];
        t1[m] = h;
        t2[m] = hx - gg * hz;
    }
    let t1 = Field3::from_vec(d, t1).expect("dims");
    let t2 = Field3::from_vec(d, t2).expect("dims");
    out.push(("bg_grow_tau1_1".into(), t1, u.mul(&phi10)));
    out.push(("bg_grow_tau1_2".into(), t2, u.mul(&phi10)));
    out.push(("bg_grow_dzz".into(), uzz.clone(), u.mul(u).mul(&phi10)));
    out.push(("bg_grow_dzzz".into(), uzzz, phi11.clone()));
    out.push(("bg_grow_dx1".into(), ux.clone(), phi11.clone()));
    out.push(("bg_grow_dx2".into(), uxx, phi11));
    out.push(("bg_grow_dxz".into(), uxz, phi10));
    out
}

fn mono_envelope(p: &BackgroundProfile) -> Field3 {
    let g = &p.grid;
    let xl = g.lx();
    Field3::from_columns(p.dims(), |_i, _j, col| {
        for (k, o) in col.iter_mut().enumerate() {
            let t = g.z[k] + p.eps0;
            *o = (-1.5 * p.mu * t * t / (1.0 + xl)).exp();
        }
    })
}

const WEIGHT_FLOOR: f64 = 1e-300;

/// Fixes c (half the smallest ratio) and every C (twice the largest ratio).
pub fn calibrate(p: &BackgroundProfile) -> AssumptionConstants {
    let env = mono_envelope(p);
    let d = p.dims();
    let mono_min = field_argmin(d, |n, _| {
        Some(p.d_z_ubar.data()[n] / env.data()[n].max(WEIGHT_FLOOR))
    })
    .map(|v| v.0)
    .unwrap_or(0.0);
    let mut upper = BTreeMap::new();
    for (id, q, w) in upper_checks(p) {
        let worst = field_argmin(d, |n, _| {
            Some(-q.data()[n].abs() / w.data()[n].max(WEIGHT_FLOOR))
        })
        .map(|v| -v.0)
        .unwrap_or(0.0);
        upper.insert(id, 2.0 * worst.max(f64::MIN_POSITIVE));
    }
    AssumptionConstants {
        mono_c: 0.5 * mono_min,
        upper,
    }
}

/// Evaluates monotonicity, decay, symmetry and growth-rate inequalities node-wise.
pub fn check_assumptions(p: &BackgroundProfile) -> DiagnosticsReport {
    let g = &p.grid;
    let d = p.dims();
    let mut r = DiagnosticsReport::new();
    r.meta.grid = format!("{}x{}x{}", d.nx, d.ny, d.nz);

    let (m, at) = field_argmin(d, |_, l| (l.k == 0).then(|| p.ubar.get(l.i, l.j, 0))).unwrap();
    r.push(Entry::at_node("bg_lift_positive", "wall", m, g, at).strict());

    let env = mono_envelope(p);
    let c = p.constants.mono_c;
    let (m, at) = field_argmin(d, |n, _| {
        Some(p.d_z_ubar.data()[n] / (c * env.data()[n]).max(WEIGHT_FLOOR) - 1.0)
    })
    .unwrap();
    r.push(Entry::at_node("bg_mono", "all", m, g, at).with_aux(c));

    let mut gap: f64 = 0.0;
    let ny = d.ny;
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..d.nx {
        for j in 0..ny {
            let id = p.s_index[i * ny + j];
            let (fi, fj) = match first.get(&id) {
                Some(&c0) => (c0 / ny, c0 % ny),
                None => {
                    first.insert(id, i * ny + j);
                    continue;
                }
            };
            let a = p.ubar.column(i, j);
            let b = p.ubar.column(fi, fj);
            for (u, v) in a.iter().zip(b) {
                gap = gap.max((u - v).abs());
            }
        }
    }
    // also pairs whose sums agree to 1e-12 without being bitwise equal
    let mut order: Vec<usize> = (0..p.s_values.len()).collect();
    order.sort_by(|a, b| p.s_values[*a].total_cmp(&p.s_values[*b]));
    for w in order.windows(2) {
        if (p.s_values[w[1]] - p.s_values[w[0]]).abs() <= 1e-12 {
            let find = |id: usize| first[&id];
            let (a, b) = (find(w[0]), find(w[1]));
            let ca = p.ubar.column(a / ny, a % ny);
            let cb = p.ubar.column(b / ny, b % ny);
            for (u, v) in ca.iter().zip(cb) {
                gap = gap.max((u - v).abs());
            }
        }
    }
    r.push(Entry::scalar("bg_symmetry", "all", 1e-12 - gap).with_aux(gap));

    let zmax = g.zmax();
    let env_top = (-p.mu * zmax * zmax / (g.lx() + 1.0)).exp();
    let def = p.deficit_field();
    let (m, at) = field_argmin(d, |n, l| {
        (l.k == d.nz - 1).then(|| 1.0 - def.data()[n].abs() / env_top)
    })
    .unwrap();
    r.push(Entry::at_node("bg_far_field", "top", m, g, at).with_aux(env_top));

    for (id, q, w) in upper_checks(p) {
        let cc = p.constants.upper.get(&id).copied().unwrap_or(f64::NAN);
        let mut underflow = 0usize;
        for v in w.data() {
            if *v < WEIGHT_FLOOR {
                underflow += 1;
            }
        }
        let (m, at) = field_argmin(d, |n, _| {
            let wv = w.data()[n];
            if wv < WEIGHT_FLOOR {
                return None;
            }
            Some(1.0 - q.data()[n].abs() / (cc * wv))
        })
        .unwrap();
        let zone = if id.starts_with("bg_tail") {
            "tail"
        } else {
            "growth"
        };
        let mut e = Entry::at_node(id, zone, m, g, at).with_aux(cc);
        if underflow > 0 {
            r.meta.notes.push(format!(
                "{}: {underflow} nodes with underflowing weight",
                e.check_id
            ));
        }
        e.pass = m >= 0.0;
        r.push(e);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blasius::solve_blasius;
    use std::sync::OnceLock;

    fn blasius() -> &'static BlasiusProfile {
        static P: OnceLock<BlasiusProfile> = OnceLock::new();
        P.get_or_init(|| solve_blasius(20.0, 1e-3, 1e-10).unwrap())
    }

    fn small() -> BackgroundProfile {
        let g = Grid3::uniform(9, 9, 57, 0.1, 0.1, 14.0).unwrap();
        build_background(blasius(), &g, 0.05).unwrap()
    }

    #[test]
    fn rejects_long_domain() {
        let g = Grid3::uniform(9, 9, 17, 0.2, 0.1, 14.0).unwrap();
        assert!(matches!(
            build_background(blasius(), &g, 0.05),
            Err(Error::DomainError(_))
        ));
        let g = Grid3::uniform(9, 9, 17, 0.1, 0.1, 14.0).unwrap();
        assert!(build_background(blasius(), &g, 0.0).is_err());
    }

    #[test]
    fn jet_matches_closed_forms() {
        let p = small();
        let b = blasius();
        let (s, t) = (2.07, 0.8);
        let j = p.u_jet(s, t, 4);
        let zeta = t / s.sqrt();
        let fj = b.jet(zeta, 5);
        let (f1, f2, f3, f4) = (fj[1], fj[2], fj[3], fj[4]);
        let tol = 1e-12;
        assert!((j.deriv(0, 0) - f1).abs() < tol);
        assert!((j.deriv(0, 1) - f2 / s.sqrt()).abs() < tol);
        assert!((j.deriv(1, 0) + zeta * f2 / (2.0 * s)).abs() < tol);
        assert!((j.deriv(0, 2) - f3 / s).abs() < tol);
        assert!((j.deriv(1, 1) + (zeta * f3 + f2) / (2.0 * s.powf(1.5))).abs() < tol);
        assert!((j.deriv(2, 0) - (3.0 * zeta * f2 + zeta * zeta * f3) / (4.0 * s * s)).abs() < tol);
        assert!((j.deriv(1, 2) + (zeta * f4 + 2.0 * f3) / (2.0 * s * s)).abs() < tol);
        assert!((j.deriv(0, 3) - f4 / s.powf(1.5)).abs() < tol);
        let w = p.w_jet(s, t, 2);
        let [f, fp, _] = b.eval(zeta);
        assert!((w.deriv(0, 0) - (zeta * fp - f) / s.sqrt()).abs() < tol);
        // continuity: ∂t w = −2 ∂s u
        assert!((w.deriv(0, 1) + 2.0 * j.deriv(1, 0)).abs() < 1e-12);
    }

    #[test]
    fn jet_high_orders_match_differences() {
        let p = small();
        let (s, t, h) = (2.1, 1.1, 1e-3);
        for (a, b) in [(3, 0), (4, 0), (2, 2), (4, 2)] {
            let lo = p.u_jet(s - h, t, a + b - 1).deriv(a - 1, b);
            let hi = p.u_jet(s + h, t, a + b - 1).deriv(a - 1, b);
            let exact = p.u_jet(s, t, a + b).deriv(a, b);
            assert!(
                ((hi - lo) / (2.0 * h) - exact).abs() < 1e-5 * (1.0 + exact.abs()),
                "({a},{b})"
            );
        }
    }

    #[test]
    fn wall_quantities() {
        let p = small();
        let d = p.dims();
        let b = blasius();
        for i in 0..d.nx {
            for j in 0..d.ny {
                assert!(p.ubar.get(i, j, 0) > 0.0);
                assert!(p.w0_at(i, j) > 0.0);
                let s = p.s_at(i, j);
                let fpp = b.eval(p.eps0 / s.sqrt())[2];
                assert!((p.d_z_ubar.get(i, j, 0) - fpp / s.sqrt()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rotation_consistency() {
        let p = small();
        let g = &p.grid;
        let b = blasius();
        for (i, j, k) in [(0, 0, 0), (3, 5, 7), (8, 8, 30), (2, 7, 56)] {
            let direct = b.u(0.5 * (g.x[i] + g.y[j]), g.z[k] + p.eps0);
            assert!((direct - p.ubar.get(i, j, k)).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_fields() {
        let p = small();
        let d = p.dims();
        for i in 0..d.nx {
            for j in 0..d.ny {
                assert_eq!(p.ubar.column(i, j), p.ubar.column(j, i));
            }
        }
    }

    #[test]
    fn fd_agrees_with_analytic() {
        let err = |nz: usize| {
            let g = Grid3::uniform(17, 17, nz, 0.1, 0.1, 14.0).unwrap();
            let p = build_background_with(blasius(), &g, 0.05, 0.19).unwrap();
            (
                g.dz(&p.ubar).sub(&p.d_z_ubar).max_abs(),
                g.dzz(&p.ubar).sub(&p.d_zz_ubar).max_abs(),
                g.dx(&p.ubar).sub(&p.d_x_ubar).max_abs(),
            )
        };
        let (a1, b1, _) = err(101);
        let (a2, b2, c2) = err(201);
        assert!(a1 / a2 > 3.5 && b1 / b2 > 3.0, "{} {}", a1 / a2, b1 / b2);
        assert!(c2 < 1e-5);
    }

    #[test]
    fn int_dx_matches_cumulative() {
        let g = Grid3::uniform(9, 9, 401, 0.1, 0.1, 14.0).unwrap();
        let p = build_background_with(blasius(), &g, 0.05, 0.19).unwrap();
        let num = crate::grid::cumulative_z(&g, &p.d_x_ubar);
        assert!(num.sub(&p.int_dx_ubar()).max_abs() < 1e-4);
        // cumulative of ∂z ū reproduces ū − ū|wall
        let c = crate::grid::cumulative_z(&g, &p.d_z_ubar);
        let mut worst: f64 = 0.0;
        for i in 0..9 {
            for j in 0..9 {
                let col = p.ubar.column(i, j);
                for (k, v) in c.column(i, j).iter().enumerate() {
                    worst = worst.max((v - (col[k] - col[0])).abs());
                }
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn steady_residual_second_order() {
        let res = |n: usize, nz: usize| {
            let g = Grid3::uniform(n, n, nz, 0.1, 0.1, 14.0).unwrap();
            build_background_with(blasius(), &g, 0.05, 0.19)
                .unwrap()
                .fd_residual()
        };
        let (m1, c1) = res(9, 65);
        let (m2, c2) = res(17, 129);
        assert!(m1 / m2 > 3.5 && c1 / c2 > 3.5, "{} {}", m1 / m2, c1 / c2);
    }

    #[test]
    fn calibration_run_passes_and_doubled_mu_fails() {
        let p = small();
        let r = check_assumptions(&p);
        assert!(r.all_pass(), "{:#?}", r.failing());
        let mut q = build_background_with(blasius(), &p.grid, 0.05, 2.0 * p.mu).unwrap();
        q.constants = p.constants.clone();
        let rq = check_assumptions(&q);
        let tails: Vec<_> = rq
            .entries
            .iter()
            .filter(|e| e.check_id.starts_with("bg_tail"))
            .collect();
        assert!(tails.iter().any(|e| !e.pass && e.margin < 0.0));
    }
}

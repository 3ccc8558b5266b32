//! Blasius similarity profile f''' + f f'' = 0, f(0) = f'(0) = 0, f'(∞) = 1,
//! solved by fixed-step RK4 shooting on f''(0), plus the self-similar
//! rescaling group of the 2D Prandtl equations.
//!
//! Similarity scaling: u_s(x, z) = f'(ζ), ζ = z / √(2(x + x₀)),
//! w_s(x, z) = (ζ f' − f) / √(2(x + x₀)).

use crate::error::{Error, Result};

/// Default truncation point of the similarity variable.
pub const DEFAULT_ZETA_MAX: f64 = 20.0;
/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default shooting tolerance on |f'(ζ_max) − 1|.
pub const DEFAULT_TOL: f64 = 1e-10;

const BRACKET: (f64, f64) = (0.1, 1.0);
const MAX_BISECT: usize = 200;

#[inline]
fn rhs(y: [f64; 3]) -> [f64; 3] {
    [y[1], y[2], -y[0] * y[2]]
}

/// One RK4 step; also returns the increment of f' separately so that the
/// deficit 1 − f' can be accumulated without cancellation.
#[inline]
fn rk4(y: [f64; 3], h: f64) -> ([f64; 3], [f64; 3]) {
    let add =
        |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = rhs(y);
    let k2 = rhs(add(y, k1, 0.5 * h));
    let k3 = rhs(add(y, k2, 0.5 * h));
    let k4 = rhs(add(y, k3, h));
    let mut d = [0.0; 3];
    for c in 0..3 {
        d[c] = h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    }
    (add(y, d, 1.0), d)
}

fn step_count(zeta_max: f64, step: f64) -> usize {
    (zeta_max / step).round().max(1.0) as usize
}

/// f'(ζ_max) for initial curvature `c`, integrating with `step`.
pub fn shoot(c: f64, zeta_max: f64, step: f64) -> f64 {
    let n = step_count(zeta_max, step);
    let h = zeta_max / n as f64;
    let mut y = [0.0, 0.0, c];
    for _ in 0..n {
        y = rk4(y, h).0;
    }
    y[1]
}

/// Least-squares tail fit of 1 − f' against ζ⁻¹ e^{−ζ²/2 − Cζ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub c: f64,
    /// Fitted log prefactor.
    pub log_k: f64,
    /// Extremes of the normalized ratio deficit / (K ζ⁻¹ e^{−ζ²/2 − Cζ}) over the checked range.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub zeta_lo: f64,
    pub zeta_hi: f64,
}

impl TailFit {
    /// The ratio stays inside [1/2, 2] after normalization.
    pub fn bounded(&self) -> bool {
        self.ratio_min >= 0.5 && self.ratio_max <= 2.0 && self.ratio_min > 0.0
    }
}

#[derive(Debug, Clone)]
pub struct BlasiusProfile {
    pub zeta_grid: Vec<f64>,
    pub f: Vec<f64>,
    pub fp: Vec<f64>,
    pub fpp: Vec<f64>,
    /// Shooting parameter f''(0).
    pub fpp0: f64,
    pub zeta_max: f64,
    /// Shift in the similarity variable, ζ = z / √(2(x + x₀)).
    pub x0: f64,
    h: f64,
    /// 1 − f' relative to the discrete far-field limit, per node.
    deficit: Vec<f64>,
}

/// Solves the Blasius problem by RK4 shooting with bisection on f''(0).
pub fn solve_blasius(zeta_max: f64, step: f64, tol: f64) -> Result<BlasiusProfile> {
    if !(zeta_max >= 10.0) || !(step > 0.0 && step <= 1e-2) || !(tol > 0.0 && tol <= 1e-8) {
        return Err(Error::InvalidInput(format!(
            "blasius needs zeta_max >= 10, 0 < step <= 1e-2, 0 < tol <= 1e-8 (got {zeta_max}, {step}, {tol})"
        )));
    }
    let g = |c: f64| shoot(c, zeta_max, step) - 1.0;
    let (mut lo, mut hi) = BRACKET;
    if !(g(lo) < 0.0 && g(hi) > 0.0) {
        return Err(Error::NonConvergence(
            "initial bracket does not straddle f'(inf) = 1".into(),
        ));
    }
    for _ in 0..MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let miss = g(lo).abs();
    if !(miss < tol) {
        return Err(Error::NonConvergence(format!(
            "|f'(zeta_max) - 1| = {miss:e} after bisection, tolerance {tol:e}"
        )));
    }
    Ok(BlasiusProfile::integrate(lo, zeta_max, step))
}

impl BlasiusProfile {
    fn integrate(c: f64, zeta_max: f64, step: f64) -> BlasiusProfile {
        let n = step_count(zeta_max, step);
        let h = zeta_max / n as f64;
        let mut zeta_grid = Vec::with_capacity(n + 1);
        let mut f = Vec::with_capacity(n + 1);
        let mut fp = Vec::with_capacity(n + 1);
        let mut fpp = Vec::with_capacity(n + 1);
        let mut inc = Vec::with_capacity(n);
        let mut y = [0.0, 0.0, c];
        for k in 0..=n {
            zeta_grid.push(k as f64 * h);
            f.push(y[0]);
            fp.push(y[1]);
            fpp.push(y[2]);
            if k < n {
                let (ny, d) = rk4(y, h);
                inc.push(d[1]);
                y = ny;
            }
        }
        zeta_grid[n] = zeta_max;
        let mut deficit = vec![0.0; n + 1];
        deficit[n] = fpp[n] / f[n];
        for k in (0..n).rev() {
            deficit[k] = deficit[k + 1] + inc[k];
        }
        BlasiusProfile {
            zeta_grid,
            f,
            fp,
            fpp,
            fpp0: c,
            zeta_max,
            x0: 1.0,
            h,
            deficit,
        }
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    /// `zeta,f,fp,fpp` rows followed by a `# fpp0=<value>` footer.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("zeta,f,fp,fpp\n");
        for k in 0..self.len() {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e}",
                self.zeta_grid[k], self.f[k], self.fp[k], self.fpp[k]
            );
        }
        let _ = writeln!(s, "# fpp0={:e}", self.fpp0);
        s
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.zeta_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta_grid.is_empty()
    }

    /// Stored 1 − f' at every node, accumulated from the far field.
    pub fn deficit_nodes(&self) -> &[f64] {
        &self.deficit
    }

    fn locate(&self, zeta: f64) -> (usize, f64) {
        let n = self.zeta_grid.len() - 1;
        let k = ((zeta / self.h).floor().max(0.0) as usize).min(n);
        (k, zeta - self.zeta_grid[k])
    }

    /// (f, f', f'') at arbitrary ζ ≥ 0 via an RK4 sub-step from the nearest lower node.
    /// Beyond ζ_max the far-field form f = f(ζ_max) + ζ − ζ_max, f' = 1, f'' = 0 is used.
    pub fn eval(&self, zeta: f64) -> [f64; 3] {
        let n = self.zeta_grid.len() - 1;
        if zeta >= self.zeta_max {
            return [self.f[n] + (zeta - self.zeta_max), 1.0, 0.0];
        }
        let (k, dh) = self.locate(zeta);
        let y = [self.f[k], self.fp[k], self.fpp[k]];
        if dh == 0.0 {
            y
        } else {
            rk4(y, dh).0
        }
    }

    /// 1 − f'(ζ) without cancellation.
    pub fn deficit(&self, zeta: f64) -> f64 {
        let n = self.zeta_grid.len() - 1;
        if zeta >= self.zeta_max {
            let t = zeta - self.zeta_max;
            return self.deficit[n] * (-(self.f[n] * t + 0.5 * t * t)).exp();
        }
        let (k, dh) = self.locate(zeta);
        if dh == 0.0 {
            return self.deficit[k];
        }
        let y = [self.f[k], self.fp[k], self.fpp[k]];
        self.deficit[k] - rk4(y, dh).1[1]
    }

    /// Derivatives f, f', …, f^(order) at ζ; orders above two come from the ODE
    /// via f^(n+3) = −Σ_j C(n,j) f^(j) f^(n+2−j).
    pub fn jet(&self, zeta: f64, order: usize) -> Vec<f64> {
        let base = self.eval(zeta);
        jet_from(base, order)
    }

    /// f''' = −f f'' reconstructed at every node.
    pub fn fppp(&self) -> Vec<f64> {
        self.f.iter().zip(&self.fpp).map(|(a, b)| -a * b).collect()
    }

    /// Max |D f'' + f f''| over all nodes, D a 5-point fourth-order difference.
    pub fn ode_residual(&self) -> f64 {
        let n = self.fpp.len();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let s = k.saturating_sub(2).min(n - 5);
            let w = crate::grid::fornberg(self.zeta_grid[k], &self.zeta_grid[s..s + 5], 1);
            let d: f64 = (0..5).map(|m| w[1][m] * self.fpp[s + m]).sum();
            worst = worst.max((d + self.f[k] * self.fpp[k]).abs());
        }
        worst
    }

    /// Max gap between f''' = −f f'' and a central third difference of f with stride `m` nodes.
    pub fn third_derivative_gap(&self, m: usize) -> f64 {
        let n = self.f.len();
        let hm = self.h * m as f64;
        let mut worst: f64 = 0.0;
        for k in 2 * m..n - 2 * m {
            let d3 = (self.f[k + 2 * m] - 2.0 * self.f[k + m] + 2.0 * self.f[k - m]
                - self.f[k - 2 * m])
                / (2.0 * hm * hm * hm);
            worst = worst.max((d3 + self.f[k] * self.fpp[k]).abs());
        }
        worst
    }

    /// Fits C on [6, 10] and reports ratio bounds on [5, ζ_max].
    pub fn tail_fit(&self) -> TailFit {
        self.tail_fit_on(6.0, 10.0, 5.0, self.zeta_max)
    }

    pub fn tail_fit_on(&self, fit_lo: f64, fit_hi: f64, lo: f64, hi: f64) -> TailFit {
        // log d + log ζ + ζ²/2 = log K − C ζ
        let pts: Vec<(f64, f64)> = self
            .zeta_grid
            .iter()
            .zip(&self.deficit)
            .filter(|(z, _)| **z >= fit_lo && **z <= fit_hi)
            .map(|(z, d)| (*z, d.ln() + z.ln() + 0.5 * z * z))
            .collect();
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        let log_k = (sy - slope * sx) / m;
        let c = -slope;
        let mut rmin = f64::INFINITY;
        let mut rmax: f64 = 0.0;
        for (z, d) in self.zeta_grid.iter().zip(&self.deficit) {
            if *z < lo || *z > hi {
                continue;
            }
            let r = (d.ln() + z.ln() + 0.5 * z * z + c * z - log_k).exp();
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
        TailFit {
            c,
            log_k,
            ratio_min: rmin,
            ratio_max: rmax,
            zeta_lo: lo,
            zeta_hi: hi,
        }
    }

    /// Base 2D sampler u_s(x, z) = f'(z/√(2(x+x₀))).
    pub fn u(&self, x: f64, z: f64) -> f64 {
        self.eval(z / (2.0 * (x + self.x0)).sqrt())[1]
    }

    /// Base 2D sampler w_s(x, z) = (ζ f' − f)/√(2(x+x₀)).
    pub fn w(&self, x: f64, z: f64) -> f64 {
        let s = (2.0 * (x + self.x0)).sqrt();
        let zeta = z / s;
        let [f, fp, _] = self.eval(zeta);
        (zeta * fp - f) / s
    }
}

/// Extends (f, f', f'') to derivatives up to `order` with the ODE recursion.
pub fn jet_from(base: [f64; 3], order: usize) -> Vec<f64> {
    let mut d = vec![0.0; order.max(2) + 1];
    d[..3].copy_from_slice(&base);
    for top in 3..=order {
        let n = top - 3;
        let mut s = 0.0;
        let mut binom = 1.0;
        for j in 0..=n {
            s += binom * d[j] * d[n + 2 - j];
            binom = binom * (n - j) as f64 / (j + 1) as f64;
        }
        d[top] = -s;
    }
    d.truncate(order + 1);
    d
}

/// (a, b, k) with b² = a k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaleParams {
    pub a: f64,
    pub b: f64,
    pub k: f64,
}

impl RescaleParams {
    pub fn new(a: f64, b: f64, k: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && k > 0.0) {
            return Err(Error::InvalidInput(
                "rescale parameters must be positive".into(),
            ));
        }
        let (l, r) = (b * b, a * k);
        if (l - r).abs() > 1e-12 * l.max(r) {
            return Err(Error::InvalidInput(format!(
                "b^2 = {l} differs from a*k = {r}"
            )));
        }
        Ok(RescaleParams { a, b, k })
    }

    pub fn identity() -> Self {
        RescaleParams {
            a: 1.0,
            b: 1.0,
            k: 1.0,
        }
    }

    /// a = 1/(100(1+X)), b = √(5μ/(4m)), k = b²/a: moves a decay rate m into [(100/101)(5μ/4), 5μ/4].
    pub fn from_decay(mu: f64, m: f64, x_len: f64) -> Result<Self> {
        let a = 1.0 / (100.0 * (1.0 + x_len));
        let b = (5.0 * mu / (4.0 * m)).sqrt();
        Self::new(a, b, b * b / a)
    }
}

/// Gaussian tail rate of 1 − f' in z at fixed x: (1−f') ∼ e^{−m z²/(x+x₀)} with m = 1/4.
pub const BLASIUS_TAIL_RATE: f64 = 0.25;

/// ũ(x,z) = k u_s(a x, b z), w̃(x,z) = b w_s(a x, b z).
#[derive(Debug, Clone, Copy)]
pub struct RescaledSampler<'a> {
    pub profile: &'a BlasiusProfile,
    pub params: RescaleParams,
}

pub fn rescale(p: &BlasiusProfile, r: RescaleParams) -> RescaledSampler<'_> {
    RescaledSampler {
        profile: p,
        params: r,
    }
}

impl RescaledSampler<'_> {
    pub fn u(&self, x: f64, z: f64) -> f64 {
        self.params.k * self.profile.u(self.params.a * x, self.params.b * z)
    }

    pub fn w(&self, x: f64, z: f64) -> f64 {
        self.params.b * self.profile.w(self.params.a * x, self.params.b * z)
    }

    /// Decay exponent after rescaling: m ↦ m b² / (a x + 1).
    pub fn tail_exponent(&self, m: f64, x: f64) -> f64 {
        m * self.params.b * self.params.b / (self.params.a * x + 1.0)
    }

    /// Max-norm of u u_x + w u_z − u_zz on an (nx × nz) interior grid of
    /// [0, x_len] × [0, z_len], central differences.
    pub fn prandtl2d_residual(&self, x_len: f64, z_len: f64, nx: usize, nz: usize) -> f64 {
        let hx = x_len / (nx - 1) as f64;
        let hz = z_len / (nz - 1) as f64;
        let mut worst: f64 = 0.0;
        for i in 1..nx - 1 {
            let x = i as f64 * hx;
            for k in 1..nz - 1 {
                let z = k as f64 * hz;
                let u = self.u(x, z);
                let ux = (self.u(x + hx, z) - self.u(x - hx, z)) / (2.0 * hx);
                let up = self.u(x, z + hz);
                let um = self.u(x, z - hz);
                let uz = (up - um) / (2.0 * hz);
                let uzz = (up - 2.0 * u + um) / (hz * hz);
                let r = u * ux + self.w(x, z) * uz - uzz;
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

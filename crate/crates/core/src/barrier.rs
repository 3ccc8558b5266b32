//! Barrier functions with ridges, the operators P₁ and P₂, grid scans of the
//! barrier inequalities and discrete maximum-principle certificates.
//!
//! Every barrier is e^{Ax}·h(r) with a piecewise profile h. For φ₁,β the
//! variable is r = (z+ε₀)/√(x+1); for φ₂,β it is ψ/√(x+1); for φ₂,1 it is ψ.
//! Derivatives are evaluated per branch, and the coefficient fields of P come
//! from the discrete state.

use crate::error::{Error, Location, Result};
use crate::grid::{cumulative_z, Dims, Field3, Grid3};
use crate::report::{field_argmin, DiagnosticsReport, Entry};
use crate::vector_calculus::VFContext;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    pub a: f64,
    pub delta: f64,
    pub n: f64,
    pub mu: f64,
    pub alpha: f64,
    pub eps0: f64,
}

impl BarrierParams {
    pub fn new(a: f64, delta: f64, n: f64, mu: f64, alpha: f64, eps0: f64) -> Result<Self> {
        let p = BarrierParams {
            a,
            delta,
            n,
            mu,
            alpha,
            eps0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0
            && self.delta > 0.0
            && self.delta <= 0.5
            && self.delta < self.n
            && self.mu > 0.0
            && self.alpha > 0.0
            && self.alpha < 1.0
            && self.eps0 > 0.0
            && self.n.is_finite()
            && self.a.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "barrier parameters out of range: {self:?}"
            )))
        }
    }
}

/// Barrier family selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// φ₁,β in (z+ε₀)/√(x+1); β = 0 gives φ₁,₀.
    Phi1(f64),
    /// φ₂,β in ψ/√(x+1); β = 0 gives φ₂,0.
    Phi2(f64),
    /// φ₂,1 in ψ.
    Phi21,
}

impl Family {
    fn name(&self) -> String {
        match self {
            Family::Phi1(b) => format!("phi1[{b}]"),
            Family::Phi2(b) => format!("phi2[{b}]"),
            Family::Phi21 => "phi21".into(),
        }
    }
}

/// h, h′, h″ of the profile at r, and the profile's ridge positions.
fn profile(p: &BarrierParams, fam: Family, r: f64) -> [f64; 3] {
    match fam {
        Family::Phi1(beta) | Family::Phi2(beta) => three_zone(p, beta, r),
        Family::Phi21 => {
            let al = p.alpha;
            if r <= p.delta {
                let ra = r.powf(al);
                [
                    r - r * ra,
                    1.0 - (1.0 + al) * ra,
                    -(1.0 + al) * al * r.powf(al - 1.0),
                ]
            } else {
                [p.delta * (1.0 - p.delta.powf(al)), 0.0, 0.0]
            }
        }
    }
}

fn three_zone(p: &BarrierParams, beta: f64, r: f64) -> [f64; 3] {
    let db = p.delta.powf(beta);
    if beta > 0.0 && r <= p.delta {
        // power forms keep the r = 0 limits (±∞) instead of 0/0
        let h2 = if beta == 1.0 {
            0.0
        } else {
            beta * (beta - 1.0) * r.powf(beta - 2.0)
        };
        [r.powf(beta), beta * r.powf(beta - 1.0), h2]
    } else if r <= p.n {
        [db, 0.0, 0.0]
    } else {
        let e = db * (p.mu * (p.n * p.n - r * r)).exp();
        let d1 = -2.0 * p.mu * r;
        [e, e * d1, e * (d1 * d1 - 2.0 * p.mu)]
    }
}

/// Ridge positions in the profile variable with (left slope, right slope) of h.
fn ridges(p: &BarrierParams, fam: Family) -> Vec<(f64, f64, f64)> {
    match fam {
        Family::Phi1(beta) | Family::Phi2(beta) => {
            let mut v = Vec::new();
            if beta > 0.0 {
                v.push((p.delta, beta * p.delta.powf(beta - 1.0), 0.0));
            }
            v.push((p.n, 0.0, -2.0 * p.mu * p.n * p.delta.powf(beta)));
            v
        }
        Family::Phi21 => vec![(p.delta, 1.0 - (1.0 + p.alpha) * p.delta.powf(p.alpha), 0.0)],
    }
}

/// φ₁,β at a point.
pub fn phi1_value(p: &BarrierParams, beta: f64, x: f64, z: f64) -> f64 {
    let r = (z + p.eps0) / (x + 1.0).sqrt();
    (p.a * x).exp() * three_zone(p, beta, r)[0]
}

/// Barrier values with branch-wise derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub values: Field3,
    /// One-sided z-derivatives; they differ only on ridge nodes, where they hold
    /// the slopes of the two branches at the ridge between the marked nodes.
    pub left_dz: Field3,
    pub right_dz: Field3,
    pub ridge_mask: Vec<bool>,
    pub dx: Field3,
    pub dy: Field3,
    pub dzz: Field3,
    pub family: Family,
}

impl BarrierEval {
    pub fn dims(&self) -> Dims {
        self.values.dims()
    }

    /// ∂z off ridges.
    pub fn dz(&self) -> &Field3 {
        &self.left_dz
    }

    pub fn is_ridge(&self, n: usize) -> bool {
        self.ridge_mask[n]
    }
}

/// Chain-rule inputs of the profile variable r(x,y,z) at every node.
struct Variable {
    r: Field3,
    r_x: Field3,
    r_y: Field3,
    r_z: Field3,
    r_zz: Field3,
}

fn phi1_variable(p: &BarrierParams, g: &Grid3) -> Variable {
    let d = g.dims();
    let r = Field3::from_columns(d, |i, _j, col| {
        let s = (g.x[i] + 1.0).sqrt();
        for (k, o) in col.iter_mut().enumerate() {
            *o = (g.z[k] + p.eps0) / s;
        }
    });
    let r_x = Field3::from_columns(d, |i, j, col| {
        let xp = g.x[i] + 1.0;
        for (k, o) in col.iter_mut().enumerate() {
            *o = -r.get(i, j, k) / (2.0 * xp);
        }
    });
    let r_z = Field3::from_columns(d, |i, _j, col| col.fill(1.0 / (g.x[i] + 1.0).sqrt()));
    Variable {
        r,
        r_x,
        r_y: Field3::zeros(d),
        r_z,
        r_zz: Field3::zeros(d),
    }
}

fn psi_variable(g: &Grid3, ctx: &VFContext<'_>, scaled: bool) -> Variable {
    let d = g.dims();
    let st = ctx.state;
    let psi_y = cumulative_z(g, &g.dy(&st.u));
    let uz = g.dz(&st.u);
    let sc = |i: usize| {
        if scaled {
            1.0 / (g.x[i] + 1.0).sqrt()
        } else {
            1.0
        }
    };
    let r = Field3::from_columns(d, |i, j, col| {
        let c = sc(i);
        for (o, v) in col.iter_mut().zip(st.psi.column(i, j)) {
            *o = v * c;
        }
    });
    let r_x = Field3::from_columns(d, |i, j, col| {
        let c = sc(i);
        let xp = g.x[i] + 1.0;
        for (k, o) in col.iter_mut().enumerate() {
            let base = st.int_dx_u.get(i, j, k) * c;
            *o = if scaled {
                base - r.get(i, j, k) / (2.0 * xp)
            } else {
                base
            };
        }
    });
    let scale_by = |f: &Field3| {
        Field3::from_columns(d, |i, j, col| {
            let c = sc(i);
            for (o, v) in col.iter_mut().zip(f.column(i, j)) {
                *o = v * c;
            }
        })
    };
    Variable {
        r_y: scale_by(&psi_y),
        r_z: scale_by(&st.u),
        r_zz: scale_by(&uz),
        r,
        r_x,
    }
}

fn assemble(p: &BarrierParams, g: &Grid3, fam: Family, var: Variable) -> BarrierEval {
    let d = g.dims();
    let n = d.len();
    let mut values = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dzz = vec![0.0; n];
    for m in 0..n {
        let loc = d.unravel(m);
        let e = (p.a * g.x[loc.i]).exp();
        let [h, h1, h2] = profile(p, fam, var.r.data()[m]);
        let rz = var.r_z.data()[m];
        values[m] = e * h;
        dx[m] = e * (p.a * h + h1 * var.r_x.data()[m]);
        dy[m] = e * h1 * var.r_y.data()[m];
        dz[m] = e * h1 * rz;
        dzz[m] = e * (h2 * rz * rz + h1 * var.r_zz.data()[m]);
    }
    let mut left = dz.clone();
    let mut right = dz;
    let mut mask = vec![false; n];
    let rd = ridges(p, fam);
    for i in 0..d.nx {
        let e = (p.a * g.x[i]).exp();
        for j in 0..d.ny {
            let rc = var.r.column(i, j);
            let rzc = var.r_z.column(i, j);
            for &(rs, sl, sr) in &rd {
                // first cell with r_k ≤ r* < r_{k+1}
                let Some(k) = (0..d.nz - 1).find(|&k| rc[k] <= rs && rs < rc[k + 1]) else {
                    continue;
                };
                let t = (rs - rc[k]) / (rc[k + 1] - rc[k]);
                let rz = rzc[k] + t * (rzc[k + 1] - rzc[k]);
                for kk in [k, k + 1] {
                    let m = d.idx(i, j, kk);
                    mask[m] = true;
                    left[m] = e * sl * rz;
                    right[m] = e * sr * rz;
                }
            }
        }
    }
    let f = |v| Field3::from_vec(d, v).expect("dims");
    BarrierEval {
        values: f(values),
        left_dz: f(left),
        right_dz: f(right),
        ridge_mask: mask,
        dx: f(dx),
        dy: f(dy),
        dzz: f(dzz),
        family: fam,
    }
}

pub fn eval_phi1(p: &BarrierParams, g: &Grid3, beta: f64) -> BarrierEval {
    assemble(p, g, Family::Phi1(beta), phi1_variable(p, g))
}

pub fn eval_phi2(p: &BarrierParams, ctx: &VFContext<'_>, beta: f64) -> BarrierEval {
    assemble(
        p,
        ctx.grid,
        Family::Phi2(beta),
        psi_variable(ctx.grid, ctx, true),
    )
}

pub fn eval_phi2_ridge(p: &BarrierParams, ctx: &VFContext<'_>) -> BarrierEval {
    assemble(
        p,
        ctx.grid,
        Family::Phi21,
        psi_variable(ctx.grid, ctx, false),
    )
}

/// P₁ or P₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum POp {
    P1,
    P2,
}

/// Coefficients of P₁ and P₂ for an iterate (ctx supplies u_{n−1}, v_{n−1})
/// and the current u_n.
#[derive(Debug, Clone)]
pub struct POps<'a> {
    pub ctx: &'a VFContext<'a>,
    pub u_n: &'a Field3,
    /// w₀ broadcast along columns; zero when transpiration is off.
    pub w0: Field3,
    /// −b̃ − (1/U)∂z(u_n/U) + w₀/U.
    cz1: Field3,
    /// ∂z u_n / U².
    cz2: Field3,
    /// −u_n/U².
    czz: Field3,
}

impl<'a> POps<'a> {
    pub fn new(ctx: &'a VFContext<'a>, u_n: &'a Field3, transpiration: bool) -> Result<Self> {
        let g = ctx.grid;
        let d = g.dims();
        if u_n.dims() != d {
            return Err(Error::GridMismatch);
        }
        let w0 = match (transpiration, ctx.background) {
            (true, Some(b)) => Field3::from_columns(d, |i, j, col| col.fill(b.w0_at(i, j))),
            _ => Field3::zeros(d),
        };
        let uu = &ctx.state.u;
        let ratio = u_n.zip_map(uu, |a, b| a / b);
        let dratio = g.dz(&ratio);
        let dun = g.dz(u_n);
        let n = d.len();
        let (mut cz1, mut cz2, mut czz) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for m in 0..n {
            let big_u = uu.data()[m];
            let bt = ctx.g.data()[m] + (1.0 + ctx.qtilde.data()[m]) * ctx.f.data()[m];
            cz1[m] = -bt - dratio.data()[m] / big_u + w0.data()[m] / big_u;
            cz2[m] = dun.data()[m] / (big_u * big_u);
            czz[m] = -u_n.data()[m] / (big_u * big_u);
        }
        let f = |v| Field3::from_vec(d, v).expect("dims");
        Ok(POps {
            ctx,
            u_n,
            w0,
            cz1: f(cz1),
            cz2: f(cz2),
            czz: f(czz),
        })
    }

    /// Pointwise P from Euclidean derivatives of w at node m.
    pub fn at(&self, op: POp, m: usize, wx: f64, wy: f64, wz: f64, wzz: f64) -> f64 {
        let cz = match op {
            POp::P1 => self.cz1.data()[m],
            POp::P2 => self.cz1.data()[m] + self.cz2.data()[m],
        };
        wx + (1.0 + self.ctx.qtilde.data()[m]) * wy + cz * wz + self.czz.data()[m] * wzz
    }

    /// Euclidean expansion with grid stencils.
    pub fn apply(&self, op: POp, w: &Field3) -> Field3 {
        let g = self.ctx.grid;
        let (wx, wy, wz, wzz) = (g.dx(w), g.dy(w), g.dz(w), g.dzz(w));
        let d = w.dims();
        let mut out = Field3::zeros(d);
        for (m, o) in out.data_mut().iter_mut().enumerate() {
            *o = self.at(
                op,
                m,
                wx.data()[m],
                wy.data()[m],
                wz.data()[m],
                wzz.data()[m],
            );
        }
        out
    }

    /// Vector-field composition ∇ξw + (1+q̃)∇ηw − ∇ψ(u_n∇ψw) (P₁) or
    /// ∇ξw + (1+q̃)∇ηw − u_n∇ψ²w (P₂), plus w₀∇ψw.
    pub fn apply_vf(&self, op: POp, w: &Field3) -> Field3 {
        let c = self.ctx;
        let xi = c.apply_xi(w);
        let eta = c.apply_eta(w);
        let pw = c.apply_psi(w);
        let diff = match op {
            POp::P1 => c.apply_psi(&self.u_n.mul(&pw)),
            POp::P2 => self.u_n.mul(&c.apply_psi(&pw)),
        };
        let d = w.dims();
        let mut out = Field3::zeros(d);
        for (m, o) in out.data_mut().iter_mut().enumerate() {
            *o = xi.data()[m] + (1.0 + c.qtilde.data()[m]) * eta.data()[m] - diff.data()[m]
                + self.w0.data()[m] * pw.data()[m];
        }
        out
    }

    /// P applied to a barrier with its branch-wise derivatives.
    pub fn apply_barrier(&self, op: POp, b: &BarrierEval) -> Field3 {
        let d = b.dims();
        let mut out = Field3::zeros(d);
        for (m, o) in out.data_mut().iter_mut().enumerate() {
            *o = self.at(
                op,
                m,
                b.dx.data()[m],
                b.dy.data()[m],
                b.left_dz.data()[m],
                b.dzz.data()[m],
            );
        }
        out
    }
}

pub fn apply_p1(ops: &POps<'_>, w: &Field3) -> Field3 {
    ops.apply(POp::P1, w)
}

pub fn apply_p2(ops: &POps<'_>, w: &Field3) -> Field3 {
    ops.apply(POp::P2, w)
}

/// Scan settings for [`verify_barrier_inequalities`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierCheck {
    /// β for φ₁,β and φ₂,β.
    pub beta: f64,
    /// Near-wall zone z ≤ δ₀.
    pub delta0: f64,
    /// Perturbation size, used only to express A as a power of 1/ε.
    pub eps: Option<f64>,
}

impl Default for BarrierCheck {
    fn default() -> Self {
        BarrierCheck {
            beta: 0.5,
            delta0: 0.1,
            eps: None,
        }
    }
}

/// Interior nodes (x > 0, y > 0) off the ridge mask; the wall layer is kept
/// only when `wall` is true.
fn admissible(d: Dims, b: &BarrierEval, m: usize, wall: bool) -> bool {
    let l = d.unravel(m);
    l.i > 0 && l.j > 0 && (wall || l.k > 0) && !b.ridge_mask[m]
}

fn ratio_entry(
    id: &str,
    zone: &str,
    grid: &Grid3,
    f: impl Fn(usize, Location) -> Option<f64> + Sync,
) -> Entry {
    match field_argmin(grid.dims(), f) {
        Some((c2, at)) => Entry::at_node(id, zone, c2, grid, at).with_aux(c2).strict(),
        None => Entry::scalar(id, zone, f64::NAN).with_aux(f64::NAN),
    }
}

/// Scans every barrier inequality on the grid and reports the measured c₂ (the
/// minimum ratio of P-value to the claimed bound) as margin and `c2_est`.
/// Ridge gaps are reported as the smallest normalized jump of ∂z across ridges.
pub fn verify_barrier_inequalities(
    ops: &POps<'_>,
    p: &BarrierParams,
    chk: &BarrierCheck,
) -> Result<DiagnosticsReport> {
    p.validate()?;
    let g = ops.ctx.grid;
    let d = g.dims();
    let beta = chk.beta;
    let u = &ops.ctx.state.u;
    let psi = &ops.ctx.state.psi;
    let phi1b = eval_phi1(p, g, beta);
    let phi10 = eval_phi1(p, g, 0.0);
    let phi2b = eval_phi2(p, ops.ctx, beta);
    let phi20 = eval_phi2(p, ops.ctx, 0.0);
    let phi21 = eval_phi2_ridge(p, ops.ctx);
    let p1_1b = ops.apply_barrier(POp::P1, &phi1b);
    let p2_2b = ops.apply_barrier(POp::P2, &phi2b);
    let p2_20 = ops.apply_barrier(POp::P2, &phi20);
    let p2_21 = ops.apply_barrier(POp::P2, &phi21);
    let p2_10 = ops.apply_barrier(POp::P2, &phi10);
    let near = |l: Location| g.z[l.k] <= chk.delta0;
    let a = p.a;
    let mut rep = DiagnosticsReport::new();

    rep.push(ratio_entry("p1_phi1_beta_wall", "z<=delta0", g, |m, l| {
        (near(l) && admissible(d, &phi1b, m, true)).then(|| {
            let t = g.z[l.k] + p.eps0;
            let bound = (beta * (1.0 - beta) / (u.data()[m] * t * t) + a) * phi1b.values.data()[m];
            p1_1b.data()[m] / bound
        })
    }));
    rep.push(ratio_entry("p2_phi2_beta_wall", "z<=delta0", g, |m, l| {
        (near(l) && admissible(d, &phi2b, m, false)).then(|| {
            let bound =
                (beta * (1.0 - beta) * psi.data()[m].powf(-1.5) + a) * phi2b.values.data()[m];
            p2_2b.data()[m] / bound
        })
    }));
    rep.push(ratio_entry("p2_phi21_wall", "z<=delta0", g, |m, l| {
        (near(l) && admissible(d, &phi21, m, false)).then(|| {
            let bound = (p.alpha * psi.data()[m].powf(p.alpha - 1.5) + a) * phi21.values.data()[m];
            p2_21.data()[m] / bound
        })
    }));
    let global: [(&str, &Field3, &BarrierEval, bool); 4] = [
        ("p1_phi1_beta_global", &p1_1b, &phi1b, true),
        ("p2_phi2_beta_global", &p2_2b, &phi2b, false),
        ("p2_phi20_global", &p2_20, &phi20, false),
        ("p2_phi21_global", &p2_21, &phi21, false),
    ];
    for (id, pv, b, wall) in global {
        rep.push(ratio_entry(id, "all", g, |m, _l| {
            admissible(d, b, m, wall).then(|| pv.data()[m] / (a * phi10.values.data()[m]))
        }));
    }
    // P₂φ₁,₀ ≥ Aφ₁,₀ beyond r = N; margin is the relative excess.
    let far = field_argmin(d, |m, l| {
        let r = (g.z[l.k] + p.eps0) / (g.x[l.i] + 1.0).sqrt();
        (r > p.n && admissible(d, &phi10, m, true))
            .then(|| p2_10.data()[m] / (a * phi10.values.data()[m]) - 1.0)
    });
    rep.push(match far {
        Some((v, at)) => Entry::at_node("p2_phi10_far", "r>N", v, g, at).with_aux(v + 1.0),
        None => Entry::scalar("p2_phi10_far", "r>N", f64::NAN),
    });
    rep.meta.notes.push(match far {
        Some(_) => "far zone r>N sampled".into(),
        None => "far zone r>N not reached by the grid".into(),
    });
    if far.is_none() {
        rep.entries.last_mut().expect("pushed").pass = false;
    }
    for (id, b) in [
        ("ridge_gap_phi1_beta", &phi1b),
        ("ridge_gap_phi10", &phi10),
        ("ridge_gap_phi2_beta", &phi2b),
        ("ridge_gap_phi21", &phi21),
    ] {
        let gap = field_argmin(d, |m, _| {
            b.ridge_mask[m].then(|| {
                let (l, r) = (b.left_dz.data()[m], b.right_dz.data()[m]);
                (l - r) / (l.abs() + r.abs())
            })
        });
        rep.push(match gap {
            Some((v, at)) => Entry::at_node(id, "ridge", v, g, at).strict(),
            None => Entry::scalar(id, "ridge", f64::NAN).with_aux(0.0),
        });
        if gap.is_none() {
            // no ridge crossed by the grid: nothing to exclude, nothing to fail
            rep.entries.last_mut().expect("pushed").pass = true;
            rep.meta
                .notes
                .push(format!("{}: no ridge inside the grid", b.family.name()));
        }
    }
    if let Some(eps) = chk.eps {
        let k = a.ln() / (1.0 / eps).ln();
        rep.meta.notes.push(format!("A = eps^-{k:.3}"));
    }
    Ok(rep)
}

/// Domain of a maximum-principle check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MpDomain {
    /// z ≤ z₀, with f ≤ 0 also required on the top face.
    Bounded { k_top: usize },
    /// Whole grid; f ≤ M required.
    Unbounded { m: f64 },
}

/// Lf = ∇ξf + (1+q̃)∇ηf + b∇ψf − u_n∇ψ²f + cf.
#[derive(Debug, Clone)]
pub struct LSpec {
    pub b: Field3,
    pub c: Field3,
}

impl LSpec {
    /// b and c of P₂ (b carries w₀ when transpiration is on).
    pub fn p2(ops: &POps<'_>) -> LSpec {
        LSpec {
            b: ops.w0.clone(),
            c: Field3::zeros(ops.w0.dims()),
        }
    }

    /// b and c of P₁: b = w₀ − ∇ψu_n.
    pub fn p1(ops: &POps<'_>) -> LSpec {
        let psi_un = ops.ctx.apply_psi(ops.u_n);
        LSpec {
            b: ops.w0.sub(&psi_un),
            c: Field3::zeros(ops.w0.dims()),
        }
    }
}

/// Outcome of a successful maximum-principle check.
#[derive(Debug, Clone, PartialEq)]
pub struct MpVerdict {
    /// max Lf over the interior (≤ tol).
    pub max_lf: f64,
    /// max f over the closed domain (≤ tol).
    pub max_f: f64,
    /// Tilt constant B of the certificate.
    pub tilt: f64,
    /// Largest value of the certificate function G.
    pub certificate_max: f64,
}

/// Applies L to f with the grid stencils.
pub fn apply_l(ops: &POps<'_>, l: &LSpec, f: &Field3) -> Field3 {
    let c = ops.ctx;
    let xi = c.apply_xi(f);
    let eta = c.apply_eta(f);
    let pf = c.apply_psi(f);
    let ppf = c.apply_psi(&pf);
    let mut out = Field3::zeros(f.dims());
    for (m, o) in out.data_mut().iter_mut().enumerate() {
        *o = xi.data()[m]
            + (1.0 + c.qtilde.data()[m]) * eta.data()[m]
            + l.b.data()[m] * pf.data()[m]
            - ops.u_n.data()[m] * ppf.data()[m]
            + l.c.data()[m] * f.data()[m];
    }
    out
}

/// Checks the hypotheses of the bounded- or unbounded-domain maximum principle
/// for f node-wise (boundary faces x = 0, y = 0, z = 0, plus the top face or
/// the bound f ≤ M, and Lf ≤ tol inside), then the conclusion f ≤ tol, and
/// builds the exponential-tilt certificate of the proof.
pub fn discrete_max_principle(
    ops: &POps<'_>,
    f: &Field3,
    l: &LSpec,
    domain: MpDomain,
    tol: f64,
) -> Result<MpVerdict> {
    let g = ops.ctx.grid;
    let d = g.dims();
    if f.dims() != d || l.b.dims() != d || l.c.dims() != d {
        return Err(Error::GridMismatch);
    }
    let k_top = match domain {
        MpDomain::Bounded { k_top } => {
            if k_top == 0 || k_top >= d.nz {
                return Err(Error::InvalidInput(format!(
                    "k_top {k_top} outside 1..{}",
                    d.nz
                )));
            }
            k_top
        }
        MpDomain::Unbounded { .. } => d.nz - 1,
    };
    let inside = |l: Location| l.k <= k_top;
    let boundary = |l: Location| {
        l.i == 0
            || l.j == 0
            || l.k == 0
            || matches!(domain, MpDomain::Bounded { .. }) && l.k == k_top
    };
    // boundary sign
    if let Some((v, at)) = field_argmin(d, |m, l| (inside(l) && boundary(l)).then(|| -f.data()[m]))
    {
        if -v > tol {
            return Err(Error::HypothesisFailed {
                which: "boundary sign".into(),
                margin: v,
                at,
            });
        }
    }
    if let MpDomain::Unbounded { m: bound } = domain {
        let (mx, at) = f.max_loc();
        if mx > bound {
            return Err(Error::HypothesisFailed {
                which: "upper bound M".into(),
                margin: bound - mx,
                at,
            });
        }
    }
    let lf = apply_l(ops, l, f);
    let interior = |l: Location| inside(l) && !boundary(l);
    let (neg_max_lf, at) = field_argmin(d, |m, l| interior(l).then(|| -lf.data()[m]))
        .unwrap_or((f64::INFINITY, Location { i: 0, j: 0, k: 0 }));
    if -neg_max_lf > tol {
        return Err(Error::HypothesisFailed {
            which: "Lf <= 0".into(),
            margin: neg_max_lf,
            at,
        });
    }
    let (neg_max_f, at) =
        field_argmin(d, |m, l| inside(l).then(|| -f.data()[m])).expect("non-empty");
    if -neg_max_f > tol {
        return Err(Error::ConclusionFailed {
            value: -neg_max_f,
            at,
        });
    }
    let c_norm = l.c.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (tilt, cert) = match domain {
        MpDomain::Bounded { .. } => {
            let b = c_norm + 1.0;
            let cert = field_argmin(d, |m, l| {
                inside(l).then(|| -f.data()[m] * (-b * g.x[l.i]).exp())
            })
            .map_or(f64::NEG_INFINITY, |v| -v.0);
            (b, cert)
        }
        MpDomain::Unbounded { m: bound } => {
            let b_norm = l.b.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let b = c_norm + (1.0 + b_norm) / 0.5 + 1.0;
            let al = 0.5;
            let psi = &ops.ctx.state.psi;
            let hat = (0..d.nx)
                .flat_map(|i| (0..d.ny).map(move |j| (i, j)))
                .map(|(i, j)| psi.get(i, j, k_top))
                .fold(f64::INFINITY, f64::min);
            let cert = field_argmin(d, |m, l| {
                let gv =
                    f.data()[m] - bound * (psi.data()[m] / hat).powf(al) * (b * g.x[l.i]).exp();
                Some(-gv)
            })
            .map_or(f64::NEG_INFINITY, |v| -v.0);
            (b, cert)
        }
    };
    Ok(MpVerdict {
        max_lf: -neg_max_lf,
        max_f: -neg_max_f,
        tilt,
        certificate_max: cert,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldState;
    use proptest::prelude::*;

    fn params() -> BarrierParams {
        BarrierParams::new(3.0, 0.25, 2.0, 0.2, 0.1, 0.05).unwrap()
    }

    fn grid() -> Grid3 {
        Grid3::stretched(10, 10, 48, 0.1, 0.1, 6.0, 2.0).unwrap()
    }

    fn state(g: &Grid3, asym: f64) -> FieldState {
        let prof = |x: f64, y: f64, z: f64| {
            let s = x + y + 2.0;
            1.0 - 0.97 * (-(z + 0.05) * 0.8 / s.sqrt()).exp() * (1.0 + 0.3 * (z + 0.05))
        };
        let u = g.sample(prof);
        let v = g.sample(|x, y, z| prof(x, y, z) * (1.0 + asym * z * (-z).exp()));
        FieldState::from_uv(g, u, v, 1).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(BarrierParams::new(1.0, 0.6, 2.0, 0.1, 0.1, 0.05).is_err());
        assert!(BarrierParams::new(0.0, 0.25, 2.0, 0.1, 0.1, 0.05).is_err());
        assert!(BarrierParams::new(1.0, 0.25, 0.2, 0.1, 0.1, 0.05).is_err());
    }

    #[test]
    fn three_zone_values() {
        let p = params();
        let x: f64 = 0.05;
        let s = (x + 1.0).sqrt();
        let e = (p.a * x).exp();
        // middle zone: r = 1
        let z = s - p.eps0;
        assert!((phi1_value(&p, 0.5, x, z) - e * p.delta.sqrt()).abs() < 1e-14 * e);
        // β = 0 is e^{Ax} below N
        for r in [0.05, 0.1, 0.25, 1.0, 1.99] {
            assert_eq!(phi1_value(&p, 0.0, x, r * s - p.eps0), e);
        }
        // continuity at both breakpoints
        for beta in [0.0, 0.3, 1.0, 1.2] {
            for rs in [p.delta, p.n] {
                let lo = three_zone(&p, beta, rs);
                let hi = three_zone(&p, beta, rs * (1.0 + 1e-15));
                assert!((lo[0] - hi[0]).abs() <= 1e-14 * lo[0]);
            }
        }
        // φ₂,1 plateau
        assert_eq!(
            profile(&p, Family::Phi21, 3.0)[0],
            p.delta * (1.0 - p.delta.powf(p.alpha))
        );
        assert_eq!(profile(&p, Family::Phi2(0.5), 0.0)[0], 0.0);
    }

    #[test]
    fn branch_derivatives_match_differences() {
        let p = params();
        for fam in [Family::Phi1(0.4), Family::Phi2(0.7), Family::Phi21] {
            for r in [0.1, 0.2, 0.7, 1.5, 2.5, 3.0] {
                let h = 1e-5;
                let [_, d1, d2] = profile(&p, fam, r);
                let fp = profile(&p, fam, r + h)[0];
                let fm = profile(&p, fam, r - h)[0];
                let f0 = profile(&p, fam, r)[0];
                assert!(
                    (d1 - (fp - fm) / (2.0 * h)).abs() < 1e-6 * (1.0 + d1.abs()),
                    "{fam:?} {r}"
                );
                assert!(
                    (d2 - (fp - 2.0 * f0 + fm) / (h * h)).abs() < 1e-3 * (1.0 + d2.abs()),
                    "{fam:?} {r}"
                );
            }
        }
    }

    #[test]
    fn ridge_semantics() {
        let g = grid();
        let s = state(&g, 0.0);
        let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
        let p = params();
        let evals = [
            eval_phi1(&p, &g, 0.5),
            eval_phi1(&p, &g, 0.0),
            eval_phi2(&p, &c, 0.5),
            eval_phi2_ridge(&p, &c),
        ];
        for b in &evals {
            let mut seen = 0;
            for m in 0..g.dims().len() {
                let (l, r) = (b.left_dz.data()[m], b.right_dz.data()[m]);
                if b.ridge_mask[m] {
                    seen += 1;
                    assert!(l > r, "{:?}", b.family);
                } else {
                    assert_eq!(l, r);
                }
            }
            assert!(seen > 0, "{:?}", b.family);
            assert!(b.values.data().iter().all(|v| *v >= 0.0));
        }
        // φ₂,1 slopes at ψ = δ
        let b = &evals[3];
        let d = g.dims();
        let k = (0..d.nz).find(|&k| b.ridge_mask[d.idx(2, 3, k)]).unwrap();
        let m = d.idx(2, 3, k);
        let e = (p.a * g.x[2]).exp();
        let ratio = b.left_dz.data()[m] / (e * (1.0 - (1.0 + p.alpha) * p.delta.powf(p.alpha)));
        let uk = s.u.get(2, 3, k);
        let uk1 = s.u.get(2, 3, k + 1);
        assert!(ratio >= uk.min(uk1) - 1e-12 && ratio <= uk.max(uk1) + 1e-12);
        assert_eq!(b.right_dz.data()[m], 0.0);
    }

    #[test]
    fn p_annihilates_constants_and_agrees_on_flat_fields() {
        let g = grid();
        let s = state(&g, 0.01);
        let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
        let un = s.u.map(|v| v * 1.001);
        let ops = POps::new(&c, &un, false).unwrap();
        let one = Field3::filled(g.dims(), 2.0);
        for op in [POp::P1, POp::P2] {
            assert!(ops.apply(op, &one).max_abs() < 1e-8);
            assert!(ops.apply_vf(op, &one).max_abs() < 1e-8);
        }
        let flat = g.sample(|x, y, _| (x - 2.0 * y).cos());
        let a = apply_p1(&ops, &flat);
        let b = apply_p2(&ops, &flat);
        assert!(a.sub(&b).max_abs() < 1e-8);
    }

    #[test]
    fn euclidean_and_vf_forms_converge() {
        let gap = |n: usize| {
            let g = Grid3::stretched(n, n, 4 * n, 0.1, 0.1, 6.0, 2.0).unwrap();
            let s = state(&g, 0.01);
            let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
            let un = s.u.map(|v| v * 1.001);
            let ops = POps::new(&c, &un, false).unwrap();
            let f = g.sample(|x, y, z| (x + 2.0 * y).sin() * (1.0 + z).ln());
            ops.apply(POp::P1, &f)
                .sub(&ops.apply_vf(POp::P1, &f))
                .max_abs()
        };
        let (a, b) = (gap(10), gap(20));
        assert!(a / b > 1.6, "{a} {b}");
    }

    #[test]
    fn inequalities_hold_on_manufactured_state() {
        let g = grid();
        let s = state(&g, 0.0);
        let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
        let ops = POps::new(&c, &s.u, false).unwrap();
        let p = BarrierParams::new(200.0, 0.25, 2.0, 0.05, 0.1, 0.05).unwrap();
        let rep = verify_barrier_inequalities(&ops, &p, &BarrierCheck::default()).unwrap();
        for e in &rep.entries {
            assert!(e.pass, "{e:?}");
        }
        assert!(rep.get("p2_phi10_far").unwrap().at.is_some());
    }

    #[test]
    fn alpha_zero_weight_reduces_to_plain_bound() {
        let g = grid();
        let s = state(&g, 0.0);
        let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
        let ops = POps::new(&c, &s.u, false).unwrap();
        let p = BarrierParams::new(200.0, 0.25, 2.0, 0.2, 0.1, 0.05).unwrap();
        let chk = BarrierCheck {
            beta: 0.0,
            ..Default::default()
        };
        let rep = verify_barrier_inequalities(&ops, &p, &chk).unwrap();
        let phi = eval_phi1(&p, &g, 0.0);
        let pv = ops.apply_barrier(POp::P1, &phi);
        let d = g.dims();
        let direct = field_argmin(d, |m, l| {
            (g.z[l.k] <= chk.delta0 && admissible(d, &phi, m, true))
                .then(|| pv.data()[m] / (p.a * phi.values.data()[m]))
        })
        .unwrap();
        assert_eq!(rep.get("p1_phi1_beta_wall").unwrap().margin, direct.0);
    }

    #[test]
    fn max_principle_cases() {
        let g = grid();
        let s = state(&g, 0.0);
        let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
        let ops = POps::new(&c, &s.u, false).unwrap();
        let p = BarrierParams::new(200.0, 0.25, 2.0, 0.2, 0.1, 0.05).unwrap();
        let l2 = LSpec::p2(&ops);
        let f = eval_phi1(&p, &g, 0.0).values.scale(-1.0);
        let v =
            discrete_max_principle(&ops, &f, &l2, MpDomain::Unbounded { m: 1.0 }, 1e-9).unwrap();
        assert!(v.max_f < 0.0 && v.certificate_max <= 0.0);
        let top = g.dims().nz / 2;
        let v =
            discrete_max_principle(&ops, &f, &l2, MpDomain::Bounded { k_top: top }, 1e-9).unwrap();
        assert!(v.tilt > 0.0 && v.certificate_max < 0.0);
        // manufactured f = −(1+z²e^{−z})e^x with c large enough that Lf ≤ 0
        let f = g.sample(|x, _y, z| -(1.0 + z * z * (-z).exp()) * x.exp());
        let zero = LSpec {
            b: Field3::zeros(g.dims()),
            c: Field3::zeros(g.dims()),
        };
        let l0 = apply_l(&ops, &zero, &f);
        let cmax = l0
            .zip_map(&f, |a, b| a / -b)
            .data()
            .iter()
            .fold(0.0f64, |a, v| a.max(*v));
        let l = LSpec {
            b: zero.b.clone(),
            c: Field3::filled(g.dims(), cmax + 1.0),
        };
        let v =
            discrete_max_principle(&ops, &f, &l, MpDomain::Bounded { k_top: top }, 0.0).unwrap();
        assert!(v.tilt > cmax + 1.0 && v.max_lf < 0.0);
        // +φ₂,1 is positive on the inflow faces
        let f = eval_phi2_ridge(&p, &c).values;
        let e = discrete_max_principle(&ops, &f, &l2, MpDomain::Unbounded { m: 1e9 }, 1e-9)
            .unwrap_err();
        assert!(matches!(e, Error::HypothesisFailed { .. }), "{e:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn barriers_positive_and_continuous(beta in 0.0f64..1.2, x in 0.0f64..0.2, z in 0.0f64..10.0) {
            let p = params();
            let v = phi1_value(&p, beta, x, z);
            prop_assert!(v > 0.0);
            let w = phi1_value(&p, beta, x, z + 1e-9);
            prop_assert!((v - w).abs() <= 1e-6 * v.max(1e-300) + 1e-12);
        }
    }
}

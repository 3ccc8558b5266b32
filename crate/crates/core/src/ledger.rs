//! Bound ledger: the six conclusion bounds, the weighted bootstrap bounds,
//! the monotonicity floor, commutator bounds and q̃ admissibility, each
//! evaluated node-wise on an iterate.
//!
//! Differences are taken against a reference pair (R_u, R_v). By default
//! this is (ū, ū); a discrete zero-perturbation solution can be passed
//! instead, which removes the solver truncation from the comparison.

use crate::background::BackgroundProfile;
use crate::barrier::{phi1_value, BarrierParams};
use crate::error::{Error, Result};
use crate::grid::{Dims, Field3, FieldState, Grid3};
use crate::report::{field_argmin, DiagnosticsReport, Entry};
use crate::vector_calculus::VFContext;

/// ∂z ū below this is treated as round-off in the monotonicity floor.
pub const MONO_NOISE: f64 = 1e-8;

/// Weights below this are treated as underflowed tail nodes.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Every check id, in report order.
pub const LEDGER_IDS: [&str; 16] = [
    "zt_value",
    "zt_dz",
    "zt_dxy",
    "zt_dzxy",
    "zt_dxyxy",
    "zt_dzz",
    "boot_value",
    "boot_dz",
    "boot_vf1",
    "boot_dz_vf1",
    "boot_vf2",
    "boot_dzz",
    "mono_floor",
    "k_sup",
    "k_dz",
    "qtilde_adm",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerParams {
    pub eps: f64,
    /// Bootstrap constant d₀.
    pub d0: f64,
    /// Monotonicity constant c₀.
    pub c0: f64,
    /// |K| ≤ ε² C₂.
    pub c2: f64,
    /// |∂z K| ≤ ε² C φ₁,₀ / u.
    pub c_dzk: f64,
    /// Powers of ε in the first five bootstrap bounds.
    pub bootstrap_powers: [i32; 5],
    /// A, δ, N, μ, α of the φ weights (ε₀ is taken from the background).
    pub weights: BarrierParams,
    pub u_floor: f64,
}

impl LedgerParams {
    /// Defaults with c₀ fixed at half the smallest ratio ∂z ū / φ₁,₀^{3/2}
    /// on the background grid (grid stencils, top row and round-off tail excluded).
    pub fn calibrated(bg: &BackgroundProfile, eps: f64, weights: BarrierParams) -> Self {
        let w = BarrierParams {
            eps0: bg.eps0,
            ..weights
        };
        let g = &*bg.grid;
        let d = bg.dims();
        let uz = g.dz(&bg.ubar);
        let min_ratio = field_argmin(d, |n, l| {
            let phi = phi1_value(&w, 0.0, g.x[l.i], g.z[l.k]).powf(1.5);
            let resolved = bg.d_z_ubar.data()[n] >= MONO_NOISE;
            (phi > WEIGHT_FLOOR && resolved && l.k + 1 < d.nz).then(|| uz.data()[n] / phi)
        })
        .map_or(0.0, |v| v.0);
        LedgerParams {
            eps,
            d0: 0.1,
            c0: 0.5 * min_ratio,
            c2: 1.0,
            c_dzk: 1.0,
            bootstrap_powers: [6, 5, 2, 2, 2],
            weights: w,
            u_floor: 1e-3 * bg.eps0,
        }
    }
}

/// Largest ratio q/b over nodes with b above the floor.
struct Worst {
    ratio: f64,
    n: usize,
    skipped: usize,
}

fn worst_ratio<Q, B>(d: Dims, q: Q, b: B) -> Worst
where
    Q: Fn(usize) -> f64 + Sync,
    B: Fn(usize) -> f64 + Sync,
{
    let skipped = (0..d.len()).filter(|&n| !(b(n) > WEIGHT_FLOOR)).count();
    let found = field_argmin(d, |n, _| {
        let bv = b(n);
        (bv > WEIGHT_FLOOR).then(|| -(q(n) / bv))
    });
    match found {
        Some((v, l)) => Worst {
            ratio: -v,
            n: d.idx(l.i, l.j, l.k),
            skipped,
        },
        None => Worst {
            ratio: 0.0,
            n: 0,
            skipped,
        },
    }
}

fn upper_entry(g: &Grid3, id: &str, zone: &str, w: &Worst) -> Entry {
    Entry::at_node(id, zone, 1.0 - w.ratio, g, g.dims().unravel(w.n)).with_aux(w.ratio)
}

/// Pointwise max of |a| and |b| over several pairs.
fn max_abs(fields: &[&Field3]) -> Field3 {
    let d = fields[0].dims();
    let mut out = Field3::zeros(d);
    for f in fields {
        for (o, v) in out.data_mut().iter_mut().zip(f.data()) {
            *o = o.max(v.abs());
        }
    }
    out
}

fn abs_sum(a: &Field3, b: &Field3) -> Field3 {
    a.zip_map(b, |p, q| p.abs() + q.abs())
}

/// Evaluates every ledger inequality node-wise.
pub fn ledger_check(
    state: &FieldState,
    bg: &BackgroundProfile,
    p: &LedgerParams,
    reference: Option<&FieldState>,
) -> Result<DiagnosticsReport> {
    let g = &*bg.grid;
    let d = g.dims();
    if state.dims() != d || reference.is_some_and(|r| r.dims() != d) {
        return Err(Error::GridMismatch);
    }
    let own;
    let r = match reference {
        Some(r) => r,
        None => {
            own = FieldState::from_uv(g, bg.ubar.clone(), bg.ubar.clone(), 0)?;
            &own
        }
    };
    let eps = p.eps;
    let w = BarrierParams {
        eps0: bg.eps0,
        ..p.weights
    };
    let alpha = w.alpha;
    let phi = |beta: f64| {
        Field3::from_columns(d, |i, _j, col| {
            for (k, o) in col.iter_mut().enumerate() {
                *o = phi1_value(&w, beta, g.x[i], g.z[k]);
            }
        })
    };
    let mut rep = DiagnosticsReport::new();
    rep.meta.grid = format!("{}x{}x{}", d.nx, d.ny, d.nz);
    let mut skipped_total = 0;

    let du = state.u.sub(&r.u);
    let dv = state.v.sub(&r.v);
    let (dux, dvx) = (g.dx(&du), g.dx(&dv));
    let (duy, dvy) = (g.dy(&du), g.dy(&dv));
    let (duz, dvz) = (g.dz(&du), g.dz(&dv));
    let (duzz, dvzz) = (g.dzz(&du), g.dzz(&dv));

    // conclusion bounds
    {
        let value = abs_sum(&du, &dv);
        let dz = abs_sum(&duz, &dvz);
        let dxy = max_abs(&[&abs_sum(&dux, &dvx), &abs_sum(&duy, &dvy)]);
        let dzxy = max_abs(&[
            &abs_sum(&g.dz(&dux), &g.dz(&dvx)),
            &abs_sum(&g.dz(&duy), &g.dz(&dvy)),
        ]);
        let dxyxy = max_abs(&[
            &abs_sum(&g.dxx(&du), &g.dxx(&dv)),
            &abs_sum(&g.dx(&duy), &g.dx(&dvy)),
            &abs_sum(&g.dyy(&du), &g.dyy(&dv)),
        ]);
        let dzz = abs_sum(&duzz, &dvzz);
        for (id, f, bound) in [
            ("zt_value", &value, eps),
            ("zt_dz", &dz, eps),
            ("zt_dxy", &dxy, eps),
            ("zt_dzxy", &dzxy, eps),
            ("zt_dxyxy", &dxyxy, eps),
            ("zt_dzz", &dzz, 2.0 * eps),
        ] {
            let wr = worst_ratio(d, |n| f.data()[n], |_| bound);
            rep.push(upper_entry(g, id, "all", &wr));
        }
    }

    // bootstrap bounds
    let ctx = VFContext::new(g, state, Some(bg), p.u_floor)?;
    let rctx = VFContext::new(g, r, Some(bg), p.u_floor)?;
    {
        let pw = |k: usize| p.d0 * eps.powi(p.bootstrap_powers[k]);
        let phi_b0 = phi(1.0 + 2.0 * alpha);
        let phi_a = phi(alpha);
        let phi_1 = phi(1.0);
        let phi_a2 = phi(0.5 * alpha);
        let value = max_abs(&[&du, &dv]);
        let dz = max_abs(&[&duz, &dvz]);
        let (rxu, reu) = (rctx.apply_xi(&r.u), rctx.apply_eta(&r.u));
        let (rxv, rev) = (rctx.apply_xi(&r.v), rctx.apply_eta(&r.v));
        let (xu, eu) = (ctx.apply_xi(&state.u), ctx.apply_eta(&state.u));
        let (xv, ev) = (ctx.apply_xi(&state.v), ctx.apply_eta(&state.v));
        let firsts = [xu.sub(&rxu), eu.sub(&reu), xv.sub(&rxv), ev.sub(&rev)];
        let vf1 = max_abs(&firsts.iter().collect::<Vec<_>>());
        let dzs: Vec<Field3> = firsts.iter().map(|f| g.dz(f)).collect();
        let dz_vf1 = max_abs(&dzs.iter().collect::<Vec<_>>());
        let mut seconds = Vec::new();
        for (cur, refp) in [(&xu, &rxu), (&eu, &reu), (&xv, &rxv), (&ev, &rev)] {
            seconds.push(ctx.apply_xi(cur).sub(&rctx.apply_xi(refp)));
            seconds.push(ctx.apply_eta(cur).sub(&rctx.apply_eta(refp)));
        }
        let vf2 = max_abs(&seconds.iter().collect::<Vec<_>>());
        for (k, (id, f, wt)) in [
            ("boot_value", &value, &phi_b0),
            ("boot_dz", &dz, &phi_a),
            ("boot_vf1", &vf1, &phi_1),
            ("boot_dz_vf1", &dz_vf1, &phi_a),
            ("boot_vf2", &vf2, &phi_a2),
        ]
        .into_iter()
        .enumerate()
        {
            let s = pw(k);
            let wr = worst_ratio(d, |n| f.data()[n], |n| s * wt.data()[n]);
            skipped_total += wr.skipped;
            rep.push(upper_entry(g, id, "weighted", &wr));
        }
        // ε/(1+α/7) · min{1, (z + min ū/∂zū at the wall)^α}
        let mut m = f64::INFINITY;
        for i in 0..d.nx {
            for j in 0..d.ny {
                m = m.min(bg.ubar.get(i, j, 0) / bg.d_z_ubar.get(i, j, 0));
            }
        }
        let dzz = max_abs(&[&duzz, &dvzz]);
        let wr = worst_ratio(
            d,
            |n| dzz.data()[n],
            |n| {
                let z = g.z[d.unravel(n).k];
                eps / (1.0 + alpha / 7.0) * (z + m).powf(alpha).min(1.0)
            },
        );
        rep.push(upper_entry(g, "boot_dzz", "all", &wr));
    }

    // monotonicity floor ∂z u, ∂z v ≥ c₀ φ₁,₀^{3/2}; the one-sided stencil on
    // the far-field row is not a derivative estimate there, and where ∂z ū is
    // below MONO_NOISE the differenced profile is round-off
    let phi0 = phi(0.0);
    {
        let uz = g.dz(&state.u);
        let vz = g.dz(&state.v);
        let skipped = bg
            .d_z_ubar
            .data()
            .iter()
            .filter(|&&v| v < MONO_NOISE)
            .count();
        let found = field_argmin(d, |n, l| {
            let b = p.c0 * phi0.data()[n].powf(1.5);
            let resolved = bg.d_z_ubar.data()[n] >= MONO_NOISE;
            (b > WEIGHT_FLOOR && resolved && l.k + 1 < d.nz)
                .then(|| uz.data()[n].min(vz.data()[n]) / b - 1.0)
        });
        rep.meta
            .notes
            .push(format!("mono_floor skips {skipped} round-off tail nodes"));
        match found {
            Some((mgn, at)) => {
                rep.push(Entry::at_node("mono_floor", "all", mgn, g, at).with_aux(p.c0))
            }
            None => rep.push(Entry::scalar("mono_floor", "all", f64::NAN)),
        }
    }

    // commutator, measured as excess over the reference's discrete K so that
    // stencil truncation of the reference itself is not charged to the data
    {
        let k = ctx.commutator_k_direct().sub(&rctx.commutator_k_direct());
        let wr = worst_ratio(d, |n| k.data()[n].abs(), |_| eps * eps * p.c2);
        rep.push(upper_entry(g, "k_sup", "all", &wr).with_aux(k.max_abs()));
        let dzk = ctx.dz_k(&k);
        let wr = worst_ratio(
            d,
            |n| dzk.data()[n].abs(),
            |n| eps * eps * p.c_dzk * phi0.data()[n] / state.u.data()[n],
        );
        skipped_total += wr.skipped;
        rep.push(upper_entry(g, "k_dz", "weighted", &wr));
    }

    {
        let wr = worst_ratio(d, |n| ctx.qtilde.data()[n].abs(), |_| 0.5);
        rep.push(upper_entry(g, "qtilde_adm", "all", &wr));
    }

    rep.meta.notes.push(format!(
        "reference={}",
        if reference.is_some() {
            "discrete"
        } else {
            "background"
        }
    ));
    rep.meta.notes.push(format!(
        "tail nodes excluded by weight underflow: {skipped_total}"
    ));
    Ok(rep)
}

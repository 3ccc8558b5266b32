//! Self-contained verification suites: each builds its own inputs, runs one
//! family of checks and returns a [`DiagnosticsReport`]. The CLI `verify`
//! subcommand and the acceptance test both call these.

use crate::background::BackgroundProfile;
use crate::barrier::{
    apply_l, discrete_max_principle, eval_phi1, eval_phi2_ridge, verify_barrier_inequalities,
    BarrierCheck, BarrierParams, LSpec, MpDomain, POps,
};
use crate::blasius::{shoot, BlasiusProfile};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{Field3, FieldState, Grid3};
use crate::ledger::ledger_check;
use crate::report::{DiagnosticsReport, Entry};
use crate::solver::{picard_solve, ContinuationOutcome, LedgerHook, PicardOutcome};
use crate::vector_calculus::{VFContext, Vf};

/// Names accepted by `verify --suite`.
pub const SUITES: [&str; 7] = [
    "blasius",
    "assumptions",
    "commutator",
    "brackets",
    "barriers",
    "mp",
    "ledger",
];

/// f''(0) by plain RK4 shooting at half the profile step, bisected on [0.2, 0.8].
pub fn half_step_fpp0(p: &BlasiusProfile) -> f64 {
    let step = 0.5 * p.step();
    let (mut lo, mut hi) = (0.2, 0.8);
    for _ in 0..60 {
        let m = 0.5 * (lo + hi);
        if shoot(m, p.zeta_max, step) < 1.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

pub fn blasius_suite(p: &BlasiusProfile) -> DiagnosticsReport {
    let mut r = DiagnosticsReport::new();
    let gap = (p.fpp0 - half_step_fpp0(p)).abs();
    r.push(Entry::scalar("blasius_fpp0_oracle", "wall", 1e-6 - gap).with_aux(p.fpp0));
    let res = p.ode_residual();
    r.push(Entry::scalar("blasius_ode_residual", "all", 1e-8 - res).with_aux(res));
    let t = p.tail_fit();
    let margin = (t.ratio_min - 0.5).min(2.0 - t.ratio_max);
    let mut e = Entry::scalar("blasius_tail_ratio", "zeta in [6,10]", margin).with_aux(t.c);
    e.pass = t.bounded();
    r.push(e);
    r
}

fn sym_profile(x: f64, y: f64, z: f64) -> f64 {
    let s = x + y + 2.0;
    0.1 + 0.9 * (1.0 - (-(z + 0.3) / s.sqrt()).exp())
}

/// u = v = a function of x + y; with `asym` ≠ 0, v is tilted by
/// 1 + asym·z e^{−z}(1 + x − y).
pub fn manufactured_state(g: &Grid3, asym: f64) -> Result<FieldState> {
    let u = g.sample(sym_profile);
    let v =
        g.sample(|x, y, z| sym_profile(x, y, z) * (1.0 + asym * z * (-z).exp() * (1.0 + x - y)));
    FieldState::from_uv(g, u, v, 1)
}

fn observed_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Direct against integral K on a manufactured asymmetric state under
/// refinement, K at the wall, and K of a symmetric state.
pub fn commutator_suite(sizes: &[usize]) -> Result<DiagnosticsReport> {
    if sizes.len() < 2 {
        return Err(Error::InvalidInput(
            "commutator suite needs two resolutions".into(),
        ));
    }
    let mut r = DiagnosticsReport::new();
    let mut gaps = Vec::new();
    let mut wall: f64 = 0.0;
    for &n in sizes {
        let g = Grid3::uniform(n, n, 2 * n, 0.1, 0.1, 4.0)?;
        let s = manufactured_state(&g, 0.1)?;
        let c = VFContext::new(&g, &s, None, 1e-6)?;
        let kd = c.commutator_k_direct();
        let ki = c.commutator_k_integral();
        gaps.push(kd.sub(&ki).max_abs());
        let d = g.dims();
        for i in 0..d.nx {
            for j in 0..d.ny {
                wall = wall.max(kd.get(i, j, 0).abs()).max(ki.get(i, j, 0).abs());
            }
        }
    }
    for (w, n) in gaps.windows(2).zip(sizes.windows(2)) {
        let ord = observed_order(w[0], w[1]);
        r.push(
            Entry::scalar(format!("k_forms_order_{}_{}", n[0], n[1]), "all", ord - 0.8)
                .with_aux(ord),
        );
    }
    r.meta.notes.push(format!("k_forms_gaps={gaps:?}"));
    let mut e = Entry::scalar("k_wall_zero", "z=0", -wall).with_aux(wall);
    e.pass = wall == 0.0;
    r.push(e);

    let n = *sizes.last().expect("two sizes");
    let g = Grid3::uniform(n, n, 2 * n, 0.1, 0.1, 4.0)?;
    let s = manufactured_state(&g, 0.0)?;
    let c = VFContext::new(&g, &s, None, 1e-6)?;
    let vf = c.vf_derivs(&s.u);
    let back = c.from_euclidean(&c.to_euclidean(&vf));
    let round_trip = [
        (&vf.xi, &back.xi),
        (&vf.eta, &back.eta),
        (&vf.psi, &back.psi),
        (&vf.dz_xi, &back.dz_xi),
        (&vf.dz_eta, &back.dz_eta),
    ]
    .iter()
    .map(|(a, b)| a.sub(b).max_abs())
    .fold(f64::EPSILON, f64::max);
    let ki = c.commutator_k_integral().max_abs();
    r.push(Entry::scalar("k_symmetric_integral", "all", 100.0 * round_trip - ki).with_aux(ki));
    // the direct form differences F and G; where the x and y stencils coincide
    // its error is round-off through two difference quotients
    let d = g.dims();
    let kd = c.commutator_k_direct();
    let mut interior: f64 = 0.0;
    for i in 2..d.nx - 2 {
        for j in 2..d.ny - 2 {
            for k in 0..d.nz {
                interior = interior.max(kd.get(i, j, k).abs());
            }
        }
    }
    let hz = g.z[1] - g.z[0];
    let chain = f64::EPSILON * s.u.max_abs() / (g.hx() * hz);
    r.push(
        Entry::scalar(
            "k_symmetric_direct_interior",
            "interior",
            100.0 * chain - interior,
        )
        .with_aux(interior),
    );
    r.meta.notes.push(format!(
        "symmetric direct K including one-sided edge stencils: {:e}",
        kd.max_abs()
    ));
    Ok(r)
}

/// [∇ξ,∇ψ]f against 0 and [∇η,∇ψ]f against (∇ηq̃/(1+q̃))∇ψf on stretched
/// grids, as an observed order between consecutive resolutions.
pub fn bracket_suite(sizes: &[usize]) -> Result<DiagnosticsReport> {
    if sizes.len() < 2 {
        return Err(Error::InvalidInput(
            "bracket suite needs two resolutions".into(),
        ));
    }
    let mut xi = Vec::new();
    let mut eta = Vec::new();
    for &n in sizes {
        let g = Grid3::stretched(n, n, 2 * n, 0.1, 0.1, 4.0, 1.5)?;
        let s = manufactured_state(&g, 0.1)?;
        let c = VFContext::new(&g, &s, None, 1e-6)?;
        let f = g.sample(|x, y, z| (2.0 * x - y).sin() + (0.7 * z).cos() * (1.0 + x * y));
        xi.push(c.commutator_bracket(Vf::Xi, Vf::Psi, &f).max_abs());
        let expect = c.eta_log_ratio().mul(&c.apply_psi(&f));
        eta.push(
            c.commutator_bracket(Vf::Eta, Vf::Psi, &f)
                .sub(&expect)
                .max_abs(),
        );
    }
    let mut r = DiagnosticsReport::new();
    for (id, e) in [("bracket_xi_psi", &xi), ("bracket_eta_psi", &eta)] {
        for (w, n) in e.windows(2).zip(sizes.windows(2)) {
            let ord = observed_order(w[0], w[1]);
            r.push(
                Entry::scalar(format!("{id}_order_{}_{}", n[0], n[1]), "all", ord - 0.8)
                    .with_aux(ord),
            );
        }
        r.meta.notes.push(format!("{id}_errors={e:?}"));
    }
    Ok(r)
}

/// u = v = ū on the background grid.
pub fn background_state(bg: &BackgroundProfile) -> Result<FieldState> {
    FieldState::from_uv(&bg.grid, bg.ubar.clone(), bg.ubar.clone(), 0)
}

/// Barrier inequalities with P₁, P₂ frozen at u = v = ū.
pub fn barrier_suite(
    bg: &BackgroundProfile,
    p: &BarrierParams,
    eps: f64,
    transpiration: bool,
) -> Result<DiagnosticsReport> {
    let s = background_state(bg)?;
    let c = VFContext::new(&bg.grid, &s, Some(bg), 1e-9)?;
    let ops = POps::new(&c, &s.u, transpiration)?;
    let chk = BarrierCheck {
        eps: Some(eps),
        ..Default::default()
    };
    verify_barrier_inequalities(&ops, p, &chk)
}

fn mp_entry(id: &str, out: Result<crate::barrier::MpVerdict>) -> Entry {
    match out {
        Ok(v) => Entry::scalar(id, "all", -v.max_f).with_aux(v.tilt),
        Err(e) => {
            let mut en = Entry::scalar(id, "all", f64::NAN);
            en.pass = false;
            en.zone = format!("error: {}", e.to_string().replace(',', ";"));
            en
        }
    }
}

/// Three certificates whose hypotheses hold and one deliberate violation,
/// on u = v = ū.
pub fn mp_suite(
    bg: &BackgroundProfile,
    p: &BarrierParams,
    transpiration: bool,
) -> Result<DiagnosticsReport> {
    let g = &*bg.grid;
    let d = g.dims();
    let s = background_state(bg)?;
    let c = VFContext::new(g, &s, Some(bg), 1e-9)?;
    let ops = POps::new(&c, &s.u, transpiration)?;
    let mut r = DiagnosticsReport::new();
    let l2 = LSpec::p2(&ops);
    let top = d.nz / 2;

    // −φ₁,₀ is a subsolution of P₂ with negative boundary values
    let f = eval_phi1(p, g, 0.0).values.scale(-1.0);
    r.push(mp_entry(
        "mp_phi10_unbounded",
        discrete_max_principle(&ops, &f, &l2, MpDomain::Unbounded { m: 1.0 }, 1e-9),
    ));
    r.push(mp_entry(
        "mp_phi10_bounded",
        discrete_max_principle(&ops, &f, &l2, MpDomain::Bounded { k_top: top }, 1e-9),
    ));
    // −(1 + z²e^{−z})eˣ with a zero-order coefficient large enough that Lf < 0
    let f = g.sample(|x, _y, z| -(1.0 + z * z * (-z).exp()) * x.exp());
    let zero = LSpec {
        b: l2.b.clone(),
        c: Field3::zeros(d),
    };
    let l0 = apply_l(&ops, &zero, &f);
    let cmax = l0
        .zip_map(&f, |a, b| a / -b)
        .data()
        .iter()
        .fold(0.0f64, |a, v| a.max(*v));
    let l = LSpec {
        b: l2.b.clone(),
        c: Field3::filled(d, cmax + 1.0),
    };
    r.push(mp_entry(
        "mp_manufactured_c",
        discrete_max_principle(&ops, &f, &l, MpDomain::Bounded { k_top: top }, 0.0),
    ));
    // +φ₂,1 is positive on the inflow faces: the boundary hypothesis fails
    let f = eval_phi2_ridge(p, &c).values;
    let out = discrete_max_principle(&ops, &f, &l2, MpDomain::Unbounded { m: 1e9 }, 1e-9);
    let mut e = Entry::scalar("mp_violation_classified", "inflow", 0.0);
    e.pass = matches!(out, Err(Error::HypothesisFailed { .. }));
    if let Err(Error::HypothesisFailed { margin, .. }) = out {
        e.aux = margin;
    }
    r.push(e);
    Ok(r)
}

/// Ledger run: the zero-perturbation solve (used as the reference when the
/// config asks for the discrete frame), then the perturbed solve warm-started
/// from it, checked by the ledger after every iterate.
pub struct StabilityRun {
    pub reference: Option<PicardOutcome>,
    pub outcome: PicardOutcome,
    pub report: DiagnosticsReport,
}

pub fn stability_run(cfg: &RunConfig, bg: &BackgroundProfile) -> Result<StabilityRun> {
    let sc = cfg.solver_config();
    let params = cfg.ledger_params(bg);
    let reference = if cfg.ledger.reference == "discrete" {
        Some(picard_solve(
            &sc,
            bg,
            &crate::boundary::PerturbationSpec::zero(),
            None,
            None,
        )?)
    } else {
        None
    };
    let rstate = reference.as_ref().map(|o| &o.state);
    let hook = LedgerHook {
        params: &params,
        reference: rstate,
    };
    let outcome = picard_solve(
        &sc,
        bg,
        &cfg.perturbation_spec(),
        rstate.cloned(),
        Some(hook),
    )?;
    let mut report = match &outcome.ledger {
        Some(l) => l.clone(),
        None => ledger_check(&outcome.state, bg, &params, rstate)?,
    };
    let deltas = outcome.trace.deltas();
    let worst = deltas
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min);
    let mut e = Entry::scalar(
        "picard_monotone",
        "all",
        if deltas.len() < 2 { 0.0 } else { worst },
    );
    e.aux = deltas.len() as f64;
    e.pass = deltas.windows(2).all(|w| w[1] < w[0]);
    report.push(e);
    let last = deltas.last().copied().unwrap_or(f64::NAN);
    report.push(Entry::scalar("picard_converged", "all", sc.picard_tol - last).with_aux(last));
    report.meta.config_hash = Some(cfg.hash());
    let d = bg.dims();
    report.meta.grid = format!("{}x{}x{}", d.nx, d.ny, d.nz);
    report.extend(outcome.envelope.clone());
    Ok(StabilityRun {
        reference,
        outcome,
        report,
    })
}

/// One entry per consecutive gap pair: the gap must shrink.
pub fn continuation_report(c: &ContinuationOutcome, grid: &Grid3) -> DiagnosticsReport {
    let mut r = DiagnosticsReport::new();
    for (n, (gap, at)) in c.gaps.iter().zip(&c.gap_at).enumerate() {
        let (a, b) = (c.members[n].eps0, c.members[n + 1].eps0);
        r.push(
            Entry::at_node(format!("gap_{a}_{b}"), "z>=z_probe", *gap, grid, *at).with_aux(*gap),
        );
    }
    for (n, w) in c.gaps.windows(2).enumerate() {
        r.push(Entry::scalar(format!("gap_decrease_{n}"), "z>=z_probe", w[0] - w[1]).strict());
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::build_background;
    use crate::blasius::solve_blasius;

    #[test]
    fn commutator_and_bracket_suites_pass_on_small_grids() {
        let r = commutator_suite(&[10, 20]).unwrap();
        assert!(r.all_pass(), "{}", r.to_csv());
        let r = bracket_suite(&[10, 20]).unwrap();
        assert!(r.all_pass(), "{}\n{:?}", r.to_csv(), r.meta.notes);
    }

    #[test]
    fn mp_suite_classifies() {
        let g = Grid3::stretched(10, 10, 40, 0.1, 0.1, 8.0, 2.0).unwrap();
        let b = solve_blasius(20.0, 1e-3, 1e-10).unwrap();
        let bg = build_background(&b, &g, 0.05).unwrap();
        let p = BarrierParams::new(10.0, 0.25, 6.0, 0.1, 0.1, 0.05).unwrap();
        let r = mp_suite(&bg, &p, true).unwrap();
        assert_eq!(r.entries.len(), 4);
        assert!(
            r.get("mp_violation_classified").unwrap().pass,
            "{}",
            r.to_csv()
        );
    }

    #[test]
    fn blasius_suite_passes() {
        let b = solve_blasius(20.0, 1e-3, 1e-10).unwrap();
        let r = blasius_suite(&b);
        assert!(r.all_pass(), "{}", r.to_csv());
    }
}

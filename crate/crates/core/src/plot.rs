//! Plane slices of state quantities as `coord1,coord2,value` CSV.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::background::BackgroundProfile;
use crate::barrier::{
    eval_phi1, eval_phi2, eval_phi2_ridge, BarrierEval, BarrierParams, POp, POps,
};
use crate::error::{Error, Result};
use crate::grid::{Field3, FieldState, Grid3};
use crate::vector_calculus::VFContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    U,
    V,
    Q,
    K,
    Dzu,
    Psi,
    /// P₁u with u as its own lagged coefficient: the discrete u-equation residual.
    Residual,
    /// P₁φ₁,β / (Aφ₁,₀).
    MarginP1Phi1,
    /// P₂φ₂,β / (Aφ₁,₀).
    MarginP2Phi2,
    /// P₂φ₂,0 / (Aφ₁,₀).
    MarginP2Phi20,
    /// P₂φ₂,1 / (Aφ₁,₀).
    MarginP2Phi21,
}

impl Quantity {
    pub const ALL: [(&'static str, Quantity); 11] = [
        ("u", Quantity::U),
        ("v", Quantity::V),
        ("q", Quantity::Q),
        ("K", Quantity::K),
        ("dzu", Quantity::Dzu),
        ("psi", Quantity::Psi),
        ("residual", Quantity::Residual),
        ("margin_p1_phi1", Quantity::MarginP1Phi1),
        ("margin_p2_phi2", Quantity::MarginP2Phi2),
        ("margin_p2_phi20", Quantity::MarginP2Phi20),
        ("margin_p2_phi21", Quantity::MarginP2Phi21),
    ];
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Quantity> {
        Quantity::ALL
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, q)| *q)
            .ok_or_else(|| Error::UnknownQuantity(s.to_string()))
    }
}

/// Plane at the node nearest to the given coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slice {
    X(f64),
    Y(f64),
    Z(f64),
}

impl FromStr for Slice {
    type Err = Error;

    /// Accepts `x=0.05`, `y=0.5` or `z=1`.
    fn from_str(s: &str) -> Result<Slice> {
        let bad = || Error::InvalidInput(format!("slice `{s}` is not of the form x=|y=|z=<value>"));
        let (axis, value) = s.split_once('=').ok_or_else(bad)?;
        let v: f64 = value.trim().parse().map_err(|_| bad())?;
        match axis.trim() {
            "x" => Ok(Slice::X(v)),
            "y" => Ok(Slice::Y(v)),
            "z" => Ok(Slice::Z(v)),
            _ => Err(bad()),
        }
    }
}

/// Everything a quantity may need.
pub struct PlotInput<'a> {
    pub grid: &'a Grid3,
    pub state: &'a FieldState,
    pub background: Option<&'a BackgroundProfile>,
    pub barrier: BarrierParams,
    pub beta: f64,
    pub u_floor: f64,
    pub transpiration: bool,
}

fn nearest(axis: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (n, a) in axis.iter().enumerate() {
        if (a - v).abs() < (axis[best] - v).abs() {
            best = n;
        }
    }
    best
}

fn ratio(pv: &Field3, b: &BarrierEval, phi10: &BarrierEval, a: f64) -> Field3 {
    let mut out = pv.zip_map(&phi10.values, |p, w| p / (a * w));
    for (m, o) in out.data_mut().iter_mut().enumerate() {
        if b.ridge_mask[m] {
            *o = f64::NAN;
        }
    }
    out
}

/// Full 3D field of a quantity.
pub fn quantity_field(inp: &PlotInput<'_>, q: Quantity) -> Result<Field3> {
    let g = inp.grid;
    let s = inp.state;
    if s.dims() != g.dims() {
        return Err(Error::GridMismatch);
    }
    Ok(match q {
        Quantity::U => s.u.clone(),
        Quantity::V => s.v.clone(),
        Quantity::Q => s.q.clone(),
        Quantity::Psi => s.psi.clone(),
        Quantity::Dzu => g.dz(&s.u),
        Quantity::K => VFContext::new(g, s, inp.background, inp.u_floor)?.commutator_k_direct(),
        _ => {
            let ctx = VFContext::new(g, s, inp.background, inp.u_floor)?;
            let ops = POps::new(&ctx, &s.u, inp.transpiration)?;
            let p = &inp.barrier;
            match q {
                Quantity::Residual => ops.apply(POp::P1, &s.u),
                Quantity::MarginP1Phi1 => {
                    let b = eval_phi1(p, g, inp.beta);
                    ratio(
                        &ops.apply_barrier(POp::P1, &b),
                        &b,
                        &eval_phi1(p, g, 0.0),
                        p.a,
                    )
                }
                Quantity::MarginP2Phi2 => {
                    let b = eval_phi2(p, &ctx, inp.beta);
                    ratio(
                        &ops.apply_barrier(POp::P2, &b),
                        &b,
                        &eval_phi1(p, g, 0.0),
                        p.a,
                    )
                }
                Quantity::MarginP2Phi20 => {
                    let b = eval_phi2(p, &ctx, 0.0);
                    ratio(
                        &ops.apply_barrier(POp::P2, &b),
                        &b,
                        &eval_phi1(p, g, 0.0),
                        p.a,
                    )
                }
                _ => {
                    let b = eval_phi2_ridge(p, &ctx);
                    ratio(
                        &ops.apply_barrier(POp::P2, &b),
                        &b,
                        &eval_phi1(p, g, 0.0),
                        p.a,
                    )
                }
            }
        }
    })
}

/// CSV of one slice: header `coord1,coord2,value`, coord1 outer, coord2 inner.
/// For an x-slice the coordinates are (y, z), for y (x, z), for z (x, y).
pub fn slice_csv(g: &Grid3, f: &Field3, slice: Slice) -> String {
    let mut out = String::from("coord1,coord2,value\n");
    let mut row = |c1: f64, c2: f64, v: f64| {
        let _ = writeln!(out, "{c1:e},{c2:e},{v:e}");
    };
    match slice {
        Slice::X(x) => {
            let i = nearest(&g.x, x);
            for (j, &y) in g.y.iter().enumerate() {
                for (k, &z) in g.z.iter().enumerate() {
                    row(y, z, f.get(i, j, k));
                }
            }
        }
        Slice::Y(y) => {
            let j = nearest(&g.y, y);
            for (i, &x) in g.x.iter().enumerate() {
                for (k, &z) in g.z.iter().enumerate() {
                    row(x, z, f.get(i, j, k));
                }
            }
        }
        Slice::Z(z) => {
            let k = nearest(&g.z, z);
            for (i, &x) in g.x.iter().enumerate() {
                for (j, &y) in g.y.iter().enumerate() {
                    row(x, y, f.get(i, j, k));
                }
            }
        }
    }
    out
}

pub fn emit_plot_data(inp: &PlotInput<'_>, quantity: &str, slice: Slice) -> Result<String> {
    let q: Quantity = quantity.parse()?;
    Ok(slice_csv(inp.grid, &quantity_field(inp, q)?, slice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::build_background;
    use crate::blasius::solve_blasius;

    fn setup() -> (Grid3, BackgroundProfile) {
        let g = Grid3::stretched(8, 8, 24, 0.1, 1.0, 12.0, 2.0).unwrap();
        let b = solve_blasius(20.0, 1e-3, 1e-12).unwrap();
        let bg = build_background(&b, &g, 0.05).unwrap();
        (g, bg)
    }

    fn input<'a>(g: &'a Grid3, st: &'a FieldState, bg: &'a BackgroundProfile) -> PlotInput<'a> {
        PlotInput {
            grid: g,
            state: st,
            background: Some(bg),
            barrier: BarrierParams {
                a: 10.0,
                ..bg.growth_weights()
            },
            beta: 0.5,
            u_floor: 1e-6,
            transpiration: true,
        }
    }

    fn values(csv: &str) -> Vec<[f64; 3]> {
        csv.lines()
            .skip(1)
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
                [v[0], v[1], v[2]]
            })
            .collect()
    }

    #[test]
    fn unknown_quantity() {
        let (g, bg) = setup();
        let st = FieldState::from_uv(&g, bg.ubar.clone(), bg.ubar.clone(), 0).unwrap();
        let e = emit_plot_data(&input(&g, &st, &bg), "vorticity", Slice::Z(0.0)).unwrap_err();
        assert!(matches!(e, Error::UnknownQuantity(_)));
    }

    #[test]
    fn symmetric_k_is_zero_and_psi_increases() {
        let (g, bg) = setup();
        let st = FieldState::from_uv(&g, bg.ubar.clone(), bg.ubar.clone(), 0).unwrap();
        let inp = input(&g, &st, &bg);
        let k = values(&emit_plot_data(&inp, "K", Slice::Z(1.0)).unwrap());
        assert_eq!(k.len(), 64);
        // the discrete noise of a symmetric state: x and y stencils of ū disagree
        let noise = g
            .dx(&bg.ubar)
            .data()
            .iter()
            .zip(g.dy(&bg.ubar).data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let kmax = k.iter().fold(0.0f64, |m, r| m.max(r[2].abs()));
        assert!(kmax < 100.0 * noise, "{kmax:e} vs {noise:e}");
        let psi = values(&emit_plot_data(&inp, "psi", Slice::X(0.05)).unwrap());
        let nz = g.z.len();
        for col in psi.chunks(nz) {
            assert!(col.windows(2).all(|w| w[1][2] > w[0][2]));
        }
    }

    #[test]
    fn y0_slice_matches_blasius() {
        let (g, bg) = setup();
        let st = FieldState::from_uv(&g, bg.ubar.clone(), bg.ubar.clone(), 0).unwrap();
        let rows = values(&emit_plot_data(&input(&g, &st, &bg), "u", Slice::Y(0.0)).unwrap());
        let b = bg.blasius();
        for [x, z, v] in rows {
            let zeta = (z + 0.05) / (x + 2.0 * b.x0).sqrt();
            assert!((v - b.eval(zeta)[1]).abs() < 1e-12, "{x} {z}");
        }
    }

    #[test]
    fn margins_and_residual_are_finite_off_ridges() {
        let (g, bg) = setup();
        let st = FieldState::from_uv(&g, bg.ubar.clone(), bg.ubar.clone(), 0).unwrap();
        let inp = input(&g, &st, &bg);
        for (name, _) in Quantity::ALL {
            let rows = values(&emit_plot_data(&inp, name, Slice::Y(0.5)).unwrap());
            assert!(rows.iter().any(|r| r[2].is_finite()), "{name}");
        }
    }

    #[test]
    fn slice_parse() {
        assert_eq!("z=1.5".parse::<Slice>().unwrap(), Slice::Z(1.5));
        assert!("w=1".parse::<Slice>().is_err());
        assert!("x".parse::<Slice>().is_err());
    }
}

//! Discrete intrinsic vector fields of an iterate,
//! ∇ξ = ∂x − G∂z, ∇η = ∂y − F∂z, ∇ψ = (1/u)∂z,
//! with G = ∫₀^z ∂x u / u and F = ∫₀^z ∂y v / v, the commutator K of
//! [∇ξ, ∇η] = K∂z in direct and integral form, and the Euclidean transforms.

use crate::background::BackgroundProfile;
use crate::error::{Error, Result};
use crate::grid::{cumulative_z, Field3, FieldState, Grid3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vf {
    Xi,
    Eta,
    Psi,
}

/// Coefficients of the vector fields of one iterate.
#[derive(Debug, Clone)]
pub struct VFContext<'a> {
    pub grid: &'a Grid3,
    pub state: &'a FieldState,
    pub background: Option<&'a BackgroundProfile>,
    pub g: Field3,
    pub f: Field3,
    pub qtilde: Field3,
    /// ∂z G and ∂z F by the grid stencils.
    pub dz_g: Field3,
    pub dz_f: Field3,
    pub u_floor: f64,
}

impl<'a> VFContext<'a> {
    pub fn new(
        grid: &'a Grid3,
        state: &'a FieldState,
        background: Option<&'a BackgroundProfile>,
        u_floor: f64,
    ) -> Result<Self> {
        if state.dims() != grid.dims() {
            return Err(Error::GridMismatch);
        }
        if let Some(b) = background {
            if b.dims() != grid.dims() {
                return Err(Error::GridMismatch);
            }
        }
        for (name, fld) in [("u", &state.u), ("v", &state.v)] {
            let (m, at) = fld.min_loc();
            if !(m > u_floor) {
                let _ = name;
                return Err(Error::DegenerateU {
                    min: m,
                    floor: u_floor,
                    at,
                });
            }
        }
        let g = state.int_dx_u.zip_map(&state.u, |a, b| a / b);
        let f = state.int_dy_v.zip_map(&state.v, |a, b| a / b);
        let qtilde = state.q.zip_map(&state.u, |a, b| a / b);
        let (qm, _) = qtilde.max_abs_loc();
        if !(qm < 0.5) {
            return Err(Error::InvalidInput(format!(
                "|q~| reaches {qm}, outside the admissible range"
            )));
        }
        let dz_g = grid.dz(&g);
        let dz_f = grid.dz(&f);
        Ok(VFContext {
            grid,
            state,
            background,
            g,
            f,
            qtilde,
            dz_g,
            dz_f,
            u_floor,
        })
    }

    pub fn u(&self) -> &Field3 {
        &self.state.u
    }

    pub fn apply_xi(&self, f: &Field3) -> Field3 {
        let fx = self.grid.dx(f);
        let fz = self.grid.dz(f);
        fx.zip3_map(&self.g, &fz, |a, g, b| a - g * b)
    }

    pub fn apply_eta(&self, f: &Field3) -> Field3 {
        let fy = self.grid.dy(f);
        let fz = self.grid.dz(f);
        fy.zip3_map(&self.f, &fz, |a, g, b| a - g * b)
    }

    pub fn apply_psi(&self, f: &Field3) -> Field3 {
        self.grid.dz(f).zip_map(&self.state.u, |a, u| a / u)
    }

    pub fn apply(&self, v: Vf, f: &Field3) -> Field3 {
        match v {
            Vf::Xi => self.apply_xi(f),
            Vf::Eta => self.apply_eta(f),
            Vf::Psi => self.apply_psi(f),
        }
    }

    fn background_or_err(&self) -> Result<&'a BackgroundProfile> {
        self.background.ok_or_else(|| {
            Error::InvalidInput("background vector fields need a background profile".into())
        })
    }

    /// ∇τ₁ = ∂x − (∫₀^z ∂x ū / ū) ∂z.
    pub fn apply_tau1(&self, f: &Field3) -> Result<Field3> {
        let b = self.background_or_err()?;
        let coef = b.int_dx_ubar().zip_map(&b.ubar, |a, u| a / u);
        let fz = self.grid.dz(f);
        Ok(self.grid.dx(f).zip3_map(&coef, &fz, |a, c, z| a - c * z))
    }

    /// ∇τ₂ = ∂y − (∫₀^z ∂y ū / ū) ∂z; ∂y ū = ∂x ū for the rotated profile.
    pub fn apply_tau2(&self, f: &Field3) -> Result<Field3> {
        let b = self.background_or_err()?;
        let coef = b.int_dx_ubar().zip_map(&b.ubar, |a, u| a / u);
        let fz = self.grid.dz(f);
        Ok(self.grid.dy(f).zip3_map(&coef, &fz, |a, c, z| a - c * z))
    }

    /// ∇n = (1/ū) ∂z.
    pub fn apply_n(&self, f: &Field3) -> Result<Field3> {
        let b = self.background_or_err()?;
        Ok(self.grid.dz(f).zip_map(&b.ubar, |a, u| a / u))
    }

    /// [∇A, ∇B] f by composing the discrete operators.
    pub fn commutator_bracket(&self, a: Vf, b: Vf, f: &Field3) -> Field3 {
        let ab = self.apply(a, &self.apply(b, f));
        let ba = self.apply(b, &self.apply(a, f));
        ab.sub(&ba)
    }

    /// ∇η q̃ / (1 + q̃).
    pub fn eta_log_ratio(&self) -> Field3 {
        self.apply_eta(&self.qtilde)
            .zip_map(&self.qtilde, |e, q| e / (1.0 + q))
    }

    /// K = ∂yG − ∂xF + G∂zF − F∂zG.
    pub fn commutator_k_direct(&self) -> Field3 {
        let gy = self.grid.dy(&self.g);
        let fx = self.grid.dx(&self.f);
        let d = self.g.dims();
        let mut out = Field3::zeros(d);
        for (n, o) in out.data_mut().iter_mut().enumerate() {
            *o = gy.data()[n] - fx.data()[n] + self.g.data()[n] * self.dz_f.data()[n]
                - self.f.data()[n] * self.dz_g.data()[n];
        }
        out
    }

    /// W = ∇ξ(∇η q̃ / (1 + q̃)).
    pub fn w_source(&self) -> Field3 {
        self.apply_xi(&self.eta_log_ratio())
    }

    /// K u = ∫₀^z −u W dz'.
    pub fn commutator_k_integral(&self) -> Field3 {
        let w = self.w_source();
        let uw = self.state.u.zip_map(&w, |u, w| -u * w);
        cumulative_z(self.grid, &uw).zip_map(&self.state.u, |a, u| a / u)
    }

    /// ∂z K = −W − K ∂z u / u.
    pub fn dz_k(&self, k: &Field3) -> Field3 {
        let w = self.w_source();
        let uz = self.grid.dz(&self.state.u);
        let d = k.dims();
        let mut out = Field3::zeros(d);
        for (n, o) in out.data_mut().iter_mut().enumerate() {
            *o = -w.data()[n] - k.data()[n] * uz.data()[n] / self.state.u.data()[n];
        }
        out
    }

    /// Euclidean derivatives from vector-field derivatives.
    pub fn to_euclidean(&self, d: &VfDerivs) -> EuDerivs {
        let u = &self.state.u;
        let dz = d.psi.mul(u);
        let dx = d.xi.zip3_map(&self.g, &dz, |a, g, b| a + g * b);
        let dy = d.eta.zip3_map(&self.f, &dz, |a, f, b| a + f * b);
        let n = dz.dims().len();
        let mut dzx = Field3::zeros(dz.dims());
        let mut dzy = Field3::zeros(dz.dims());
        for m in 0..n {
            dzx.data_mut()[m] = d.dz_xi.data()[m]
                + self.dz_g.data()[m] * dz.data()[m]
                + self.g.data()[m] * d.dzz.data()[m];
            dzy.data_mut()[m] = d.dz_eta.data()[m]
                + self.dz_f.data()[m] * dz.data()[m]
                + self.f.data()[m] * d.dzz.data()[m];
        }
        EuDerivs {
            dx,
            dy,
            dz,
            dzx,
            dzy,
            dzz: d.dzz.clone(),
        }
    }

    /// Inverse of [`Self::to_euclidean`].
    pub fn from_euclidean(&self, e: &EuDerivs) -> VfDerivs {
        let u = &self.state.u;
        let psi = e.dz.zip_map(u, |a, u| a / u);
        let xi = e.dx.zip3_map(&self.g, &e.dz, |a, g, b| a - g * b);
        let eta = e.dy.zip3_map(&self.f, &e.dz, |a, f, b| a - f * b);
        let n = e.dz.dims().len();
        let mut dz_xi = Field3::zeros(e.dz.dims());
        let mut dz_eta = Field3::zeros(e.dz.dims());
        for m in 0..n {
            dz_xi.data_mut()[m] = e.dzx.data()[m]
                - self.dz_g.data()[m] * e.dz.data()[m]
                - self.g.data()[m] * e.dzz.data()[m];
            dz_eta.data_mut()[m] = e.dzy.data()[m]
                - self.dz_f.data()[m] * e.dz.data()[m]
                - self.f.data()[m] * e.dzz.data()[m];
        }
        VfDerivs {
            xi,
            eta,
            psi,
            dz_xi,
            dz_eta,
            dzz: e.dzz.clone(),
        }
    }

    /// Vector-field derivative set of `f` with the grid stencils.
    pub fn vf_derivs(&self, f: &Field3) -> VfDerivs {
        let xi = self.apply_xi(f);
        let eta = self.apply_eta(f);
        VfDerivs {
            dz_xi: self.grid.dz(&xi),
            dz_eta: self.grid.dz(&eta),
            xi,
            eta,
            psi: self.apply_psi(f),
            dzz: self.grid.dzz(f),
        }
    }

    /// ∂x² f = ∇ξ²f + (∇ξG)∂zf + G∂z∂xf + G[(∇ξu/u)∂zf + ∂z∇ξf].
    pub fn second_order_x(&self, f: &Field3) -> Field3 {
        let gr = self.grid;
        let xi_f = self.apply_xi(f);
        let xixi = self.apply_xi(&xi_f);
        let xi_g = self.apply_xi(&self.g);
        let fz = gr.dz(f);
        let fzx = gr.dz(&gr.dx(f));
        let xi_u = self.apply_xi(&self.state.u);
        let dz_xi = gr.dz(&xi_f);
        let d = f.dims();
        let mut out = Field3::zeros(d);
        for (n, o) in out.data_mut().iter_mut().enumerate() {
            let g = self.g.data()[n];
            let u = self.state.u.data()[n];
            *o = xixi.data()[n]
                + xi_g.data()[n] * fz.data()[n]
                + g * fzx.data()[n]
                + g * (xi_u.data()[n] / u * fz.data()[n] + dz_xi.data()[n]);
        }
        out
    }
}

/// (∇ξf, ∇ηf, ∇ψf, ∂z∇ξf, ∂z∇ηf) with ∂z²f carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct VfDerivs {
    pub xi: Field3,
    pub eta: Field3,
    pub psi: Field3,
    pub dz_xi: Field3,
    pub dz_eta: Field3,
    pub dzz: Field3,
}

/// (∂xf, ∂yf, ∂zf, ∂z∂xf, ∂z∂yf) with ∂z²f carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct EuDerivs {
    pub dx: Field3,
    pub dy: Field3,
    pub dz: Field3,
    pub dzx: Field3,
    pub dzy: Field3,
    pub dzz: Field3,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Grid3 {
        Grid3::uniform(n, n, 2 * n, 0.1, 0.1, 4.0).unwrap()
    }

    fn sym_profile(x: f64, y: f64, z: f64) -> f64 {
        let s = x + y + 2.0;
        0.1 + (1.0 - (-(z + 0.3) / s.sqrt()).exp()) * 0.9
    }

    fn state(g: &Grid3, asym: f64) -> FieldState {
        let u = g.sample(sym_profile);
        let v = g
            .sample(|x, y, z| sym_profile(x, y, z) * (1.0 + asym * z * (-z).exp() * (1.0 + x - y)));
        FieldState::from_uv(g, u, v, 1).unwrap()
    }

    #[test]
    fn coefficients_vanish_at_wall() {
        let g = grid(10);
        let s = state(&g, 0.01);
        let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(c.g.get(i, j, 0), 0.0);
                assert_eq!(c.f.get(i, j, 0), 0.0);
            }
        }
        let k = c.commutator_k_direct();
        let ki = c.commutator_k_integral();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(k.get(i, j, 0), 0.0);
                assert_eq!(ki.get(i, j, 0), 0.0);
            }
        }
    }

    #[test]
    fn floor_is_enforced() {
        let g = grid(10);
        let s = state(&g, 0.0);
        assert!(matches!(
            VFContext::new(&g, &s, None, 0.5),
            Err(Error::DegenerateU { .. })
        ));
    }

    #[test]
    fn constants_are_annihilated() {
        let g = grid(10);
        let s = state(&g, 0.01);
        let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
        let one = Field3::filled(g.dims(), 3.7);
        for v in [Vf::Xi, Vf::Eta, Vf::Psi] {
            assert!(c.apply(v, &one).max_abs() < 1e-12);
        }
    }

    #[test]
    fn stream_function_identities() {
        let err = |n: usize| {
            let g = grid(n);
            let s = state(&g, 0.01);
            let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
            let p = c.apply_psi(&s.psi).map(|v| v - 1.0).max_abs();
            let x = c.apply_xi(&s.psi).max_abs();
            (p, x)
        };
        let (p1, x1) = err(12);
        let (p2, x2) = err(24);
        assert!(p1 / p2 > 3.0 && x1 / x2 > 3.0, "{} {}", p1 / p2, x1 / x2);
        assert!(p2 < 5e-3 && x2 < 1e-4, "{p2} {x2}");
    }

    #[test]
    fn symmetric_xi_eta_agree_off_edges() {
        let g = grid(12);
        let s = state(&g, 0.0);
        let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
        let f = g.sample(|x, y, z| (x + y).sin() * (1.0 + z));
        let a = c.apply_xi(&f);
        let b = c.apply_eta(&f);
        let d = g.dims();
        for i in 1..d.nx - 1 {
            for j in 1..d.ny - 1 {
                for k in 0..d.nz {
                    assert!((a.get(i, j, k) - b.get(i, j, k)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn euclidean_round_trip() {
        let g = grid(10);
        let s = state(&g, 0.02);
        let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
        let f = g.sample(|x, y, z| (3.0 * x).cos() + y * z + (z * 0.7).sin());
        let vf = c.vf_derivs(&f);
        let eu = c.to_euclidean(&vf);
        assert_eq!(eu.dz.data().len(), g.dims().len());
        let back = c.from_euclidean(&eu);
        for (a, b) in [
            (&vf.xi, &back.xi),
            (&vf.eta, &back.eta),
            (&vf.psi, &back.psi),
            (&vf.dz_xi, &back.dz_xi),
            (&vf.dz_eta, &back.dz_eta),
        ] {
            for (p, q) in a.data().iter().zip(b.data()) {
                assert!((p - q).abs() <= 1e-13 * (1.0 + p.abs()));
            }
        }
        // ∂z f = u ∇ψ f at every node
        let fz = g.dz(&f);
        for (n, v) in eu.dz.data().iter().enumerate() {
            assert!((v - fz.data()[n]).abs() <= 1e-14 * (1.0 + v.abs()));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn leibniz_for_psi(a in -1.0f64..1.0, b in 0.5f64..2.0) {
            let gap = |n: usize| {
                let g = grid(n);
                let s = state(&g, 0.01);
                let c = VFContext::new(&g, &s, None, 1e-6).unwrap();
                let f = g.sample(|x, _y, z| (a * z + x).sin());
                let h = g.sample(|_x, y, z| (b * z).cos() + y);
                let lhs = c.apply_psi(&f.mul(&h));
                let rhs = f.mul(&c.apply_psi(&h)).add(&h.mul(&c.apply_psi(&f)));
                lhs.sub(&rhs).max_abs()
            };
            let (e1, e2) = (gap(10), gap(20));
            prop_assert!(e2 < 1e-12 || e1 / e2 > 3.0, "{} {}", e1, e2);
        }
    }
}

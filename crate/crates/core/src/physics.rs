//! Ideal-gas thermodynamics and fluxes of the compressible Navier-Stokes system.
//!
//! Flux tensors are stored row-per-conserved-variable, column-per-direction:
//! `flux[var][dim]`. Gradients of conserved variables use the same layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::BoundaryTag;

pub type FluxTensor = [[f64; 2]; 4];
pub type GradTensor = [[f64; 2]; 4];

/// Thermodynamic and transport properties of the working gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasModel {
    pub gamma: f64,
    pub gas_constant: f64,
    pub prandtl: f64,
    pub mu: f64,
}

impl Default for GasModel {
    fn default() -> Self {
        Self {
            gamma: 1.4,
            gas_constant: 1.0,
            prandtl: 0.72,
            mu: 1.0,
        }
    }
}

impl GasModel {
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| {
            Err(Error::Config {
                path: format!("gas.{path}"),
                message: msg,
            })
        };
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return bad("gamma", format!("must be > 1, got {}", self.gamma));
        }
        if !(self.gas_constant > 0.0 && self.gas_constant.is_finite()) {
            return bad("gas_constant", format!("must be > 0, got {}", self.gas_constant));
        }
        if !(self.prandtl > 0.0 && self.prandtl.is_finite()) {
            return bad("prandtl", format!("must be > 0, got {}", self.prandtl));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu", format!("must be > 0, got {}", self.mu));
        }
        Ok(())
    }

    /// Thermal conductivity for dynamic viscosity `mu`: `mu * cp / Pr`.
    #[inline]
    pub fn conductivity(&self, mu: f64) -> f64 {
        mu * self.gamma * self.gas_constant / ((self.gamma - 1.0) * self.prandtl)
    }

    #[inline]
    pub fn sound_speed(&self, rho: f64, p: f64) -> f64 {
        (self.gamma * p / rho).sqrt()
    }
}

/// Conserved variables `(rho, rho u, rho v, rho E)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedState {
    pub rho: f64,
    pub mom: [f64; 2],
    pub rho_e: f64,
}

impl ConservedState {
    pub fn from_primitive(rho: f64, u: [f64; 2], p: f64, gamma: f64) -> Self {
        Self {
            rho,
            mom: [rho * u[0], rho * u[1]],
            rho_e: p / (gamma - 1.0) + 0.5 * rho * (u[0] * u[0] + u[1] * u[1]),
        }
    }

    #[inline]
    pub fn from_array(w: [f64; 4]) -> Self {
        Self {
            rho: w[0],
            mom: [w[1], w[2]],
            rho_e: w[3],
        }
    }

    #[inline]
    pub fn to_array(self) -> [f64; 4] {
        [self.rho, self.mom[0], self.mom[1], self.rho_e]
    }

    #[inline]
    pub fn velocity(&self) -> [f64; 2] {
        [self.mom[0] / self.rho, self.mom[1] / self.rho]
    }
}

/// Primitive variables recovered from a conserved state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub rho: f64,
    pub u: [f64; 2],
    pub p: f64,
}

/// Variables the reduced-order models work with: `(1/rho, u1, u2, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedState {
    pub specific_volume: f64,
    pub u1: f64,
    pub u2: f64,
    pub p: f64,
}

impl TransformedState {
    pub fn from_conserved(w: &ConservedState, gamma: f64) -> Self {
        let u = w.velocity();
        Self {
            specific_volume: 1.0 / w.rho,
            u1: u[0],
            u2: u[1],
            p: pressure_unchecked(w, gamma),
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.specific_volume, self.u1, self.u2, self.p]
    }
}

#[inline]
fn pressure_unchecked(w: &ConservedState, gamma: f64) -> f64 {
    (gamma - 1.0) * (w.rho_e - 0.5 * (w.mom[0] * w.mom[0] + w.mom[1] * w.mom[1]) / w.rho)
}

/// Ideal-gas pressure; non-positive density or pressure is a state failure.
pub fn pressure(w: &ConservedState, gas: &GasModel) -> Result<f64> {
    if !(w.rho > 0.0) {
        return Err(state_failure(format!("non-positive density {}", w.rho)));
    }
    let p = pressure_unchecked(w, gas.gamma);
    if !(p > 0.0) {
        return Err(state_failure(format!("non-positive pressure {p}")));
    }
    Ok(p)
}

fn state_failure(reason: String) -> Error {
    Error::State {
        element: usize::MAX,
        node: usize::MAX,
        reason,
    }
}

#[inline]
pub fn primitive(w: &ConservedState, gamma: f64) -> Primitive {
    let u = w.velocity();
    Primitive {
        rho: w.rho,
        u,
        p: pressure_unchecked(w, gamma),
    }
}

/// Analytic convective flux tensor.
#[inline]
pub fn convective_flux(w: &ConservedState, gamma: f64) -> FluxTensor {
    let Primitive { u, p, .. } = primitive(w, gamma);
    let h = w.rho_e + p;
    [
        [w.mom[0], w.mom[1]],
        [w.mom[0] * u[0] + p, w.mom[0] * u[1]],
        [w.mom[1] * u[0], w.mom[1] * u[1] + p],
        [h * u[0], h * u[1]],
    ]
}

/// Convective flux contracted with a normal.
#[inline]
pub fn convective_flux_normal(w: &ConservedState, n: [f64; 2], gamma: f64) -> [f64; 4] {
    let Primitive { u, p, .. } = primitive(w, gamma);
    let un = u[0] * n[0] + u[1] * n[1];
    [
        w.rho * un,
        w.mom[0] * un + p * n[0],
        w.mom[1] * un + p * n[1],
        (w.rho_e + p) * un,
    ]
}

/// Gradients of velocity components and temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveGradient {
    pub rho: [f64; 2],
    pub u: [f64; 2],
    pub v: [f64; 2],
    pub t: [f64; 2],
}

/// Chain rule from conserved-variable gradients to primitive gradients.
#[inline]
pub fn primitive_gradient(w: &ConservedState, grad: &GradTensor, gas: &GasModel) -> PrimitiveGradient {
    let inv_rho = 1.0 / w.rho;
    let [u, v] = w.velocity();
    let p = pressure_unchecked(w, gas.gamma);
    let mut out = PrimitiveGradient {
        rho: grad[0],
        u: [0.0; 2],
        v: [0.0; 2],
        t: [0.0; 2],
    };
    for d in 0..2 {
        let gu = (grad[1][d] - u * grad[0][d]) * inv_rho;
        let gv = (grad[2][d] - v * grad[0][d]) * inv_rho;
        let gp = (gas.gamma - 1.0)
            * (grad[3][d] - 0.5 * (u * u + v * v) * grad[0][d] - w.rho * (u * gu + v * gv));
        out.u[d] = gu;
        out.v[d] = gv;
        out.t[d] = (gp * inv_rho - p * inv_rho * inv_rho * grad[0][d]) / gas.gas_constant;
    }
    out
}

/// Inverse of [`primitive_gradient`] at state `w`.
pub fn conserved_gradient(w: &ConservedState, g: &PrimitiveGradient, gas: &GasModel) -> GradTensor {
    let [u, v] = w.velocity();
    let p = pressure_unchecked(w, gas.gamma);
    let temp = p / (w.rho * gas.gas_constant);
    let mut out = [[0.0; 2]; 4];
    for d in 0..2 {
        let gp = gas.gas_constant * (w.rho * g.t[d] + temp * g.rho[d]);
        out[0][d] = g.rho[d];
        out[1][d] = w.rho * g.u[d] + u * g.rho[d];
        out[2][d] = w.rho * g.v[d] + v * g.rho[d];
        out[3][d] = gp / (gas.gamma - 1.0)
            + 0.5 * (u * u + v * v) * g.rho[d]
            + w.rho * (u * g.u[d] + v * g.v[d]);
    }
    out
}

/// Viscous flux from velocity and primitive gradients.
///
/// The energy row is `tau . u + lambda grad T`, i.e. the work of the viscous
/// stresses minus the Fourier heat flux `q = -lambda grad T`.
#[inline]
pub fn viscous_flux_primitive(u: [f64; 2], g: &PrimitiveGradient, mu: f64, conductivity: f64) -> FluxTensor {
    let div = g.u[0] + g.v[1];
    let txx = 2.0 * mu * (g.u[0] - div / 3.0);
    let tyy = 2.0 * mu * (g.v[1] - div / 3.0);
    let txy = mu * (g.u[1] + g.v[0]);
    [
        [0.0, 0.0],
        [txx, txy],
        [txy, tyy],
        [
            txx * u[0] + txy * u[1] + conductivity * g.t[0],
            txy * u[0] + tyy * u[1] + conductivity * g.t[1],
        ],
    ]
}

/// Viscous flux tensor from conserved variables and their gradients.
pub fn viscous_flux(w: &ConservedState, grad: &GradTensor, gas: &GasModel) -> FluxTensor {
    viscous_flux_with_mu(w, grad, gas, gas.mu)
}

#[inline]
pub fn viscous_flux_with_mu(w: &ConservedState, grad: &GradTensor, gas: &GasModel, mu: f64) -> FluxTensor {
    let g = primitive_gradient(w, grad, gas);
    viscous_flux_primitive(w.velocity(), &g, mu, gas.conductivity(mu))
}

/// Deviatoric stress tensor `[[txx, txy], [txy, tyy]]` for a velocity gradient.
pub fn deviatoric_stress(grad_u: [f64; 2], grad_v: [f64; 2], mu: f64) -> [[f64; 2]; 2] {
    let g = PrimitiveGradient {
        rho: [0.0; 2],
        u: grad_u,
        v: grad_v,
        t: [0.0; 2],
    };
    let f = viscous_flux_primitive([0.0, 0.0], &g, mu, 0.0);
    [f[1], f[2]]
}

/// Options of the Roe solver.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoeOptions {
    /// Harten entropy fix with threshold `delta = fraction * c_roe`.
    pub entropy_fix: Option<f64>,
}

#[inline]
fn harten(lambda: f64, delta: f64) -> f64 {
    let a = lambda.abs();
    if a < delta {
        (lambda * lambda + delta * delta) / (2.0 * delta)
    } else {
        a
    }
}

/// Roe approximate Riemann flux across a face with unit normal `n` pointing
/// from the left state to the right state.
#[inline]
pub fn roe_flux(
    wl: &ConservedState,
    wr: &ConservedState,
    n: [f64; 2],
    gamma: f64,
    opts: RoeOptions,
) -> Result<[f64; 4]> {
    let pl = primitive(wl, gamma);
    let pr = primitive(wr, gamma);
    let hl = (wl.rho_e + pl.p) / wl.rho;
    let hr = (wr.rho_e + pr.p) / wr.rho;

    let sl = wl.rho.sqrt();
    let sr = wr.rho.sqrt();
    let inv = 1.0 / (sl + sr);
    let u = (sl * pl.u[0] + sr * pr.u[0]) * inv;
    let v = (sl * pl.u[1] + sr * pr.u[1]) * inv;
    let h = (sl * hl + sr * hr) * inv;
    let q2 = u * u + v * v;
    let c2 = (gamma - 1.0) * (h - 0.5 * q2);
    if !(c2 > 0.0) || !c2.is_finite() {
        return Err(state_failure(format!(
            "Roe average has non-positive squared sound speed {c2}"
        )));
    }
    let c = c2.sqrt();
    let rho = sl * sr;
    let t = [-n[1], n[0]];
    let un = u * n[0] + v * n[1];
    let ut = u * t[0] + v * t[1];

    let unl = pl.u[0] * n[0] + pl.u[1] * n[1];
    let unr = pr.u[0] * n[0] + pr.u[1] * n[1];
    let utl = pl.u[0] * t[0] + pl.u[1] * t[1];
    let utr = pr.u[0] * t[0] + pr.u[1] * t[1];
    let dp = pr.p - pl.p;
    let drho = wr.rho - wl.rho;
    let dun = unr - unl;
    let dut = utr - utl;

    let a1 = (dp - rho * c * dun) / (2.0 * c2);
    let a2 = drho - dp / c2;
    let a3 = rho * dut;
    let a4 = (dp + rho * c * dun) / (2.0 * c2);

    let (mut l1, mut l2, mut l4) = ((un - c).abs(), un.abs(), (un + c).abs());
    if let Some(frac) = opts.entropy_fix {
        let delta = frac * c;
        l1 = harten(un - c, delta);
        l2 = harten(un, delta);
        l4 = harten(un + c, delta);
    }

    let s1 = l1 * a1;
    let s2 = l2 * a2;
    let s3 = l2 * a3;
    let s4 = l4 * a4;
    let diss = [
        s1 + s2 + s4,
        s1 * (u - c * n[0]) + s2 * u + s3 * t[0] + s4 * (u + c * n[0]),
        s1 * (v - c * n[1]) + s2 * v + s3 * t[1] + s4 * (v + c * n[1]),
        s1 * (h - un * c) + s2 * 0.5 * q2 + s3 * ut + s4 * (h + un * c),
    ];

    let fl = convective_flux_normal(wl, n, gamma);
    let fr = convective_flux_normal(wr, n, gamma);
    Ok(std::array::from_fn(|k| 0.5 * (fl[k] + fr[k]) - 0.5 * diss[k]))
}

/// Interior-penalty coefficient `C_IP (P+1)^2 mu / h`.
#[inline]
pub fn penalty_coefficient(c_ip: f64, order: usize, mu: f64, h: f64) -> f64 {
    let n1 = (order + 1) as f64;
    c_ip * n1 * n1 * mu / h
}

/// Numerical viscous flux `{F_v} . n + tau_IP (w_R - w_L)`.
///
/// With the total flux written as `F_c - F_v`, the penalty enters the total
/// numerical flux as `tau_IP (w_L - w_R)`, a diffusive jump dissipation.
#[allow(clippy::too_many_arguments)]
pub fn interior_penalty_viscous_flux(
    wl: &ConservedState,
    wr: &ConservedState,
    gl: &GradTensor,
    gr: &GradTensor,
    n: [f64; 2],
    h: f64,
    order: usize,
    gas: &GasModel,
    c_ip: f64,
) -> [f64; 4] {
    let fl = viscous_flux(wl, gl, gas);
    let fr = viscous_flux(wr, gr, gas);
    let tau = penalty_coefficient(c_ip, order, gas.mu, h);
    let jl = wl.to_array();
    let jr = wr.to_array();
    std::array::from_fn(|k| {
        0.5 * ((fl[k][0] + fr[k][0]) * n[0] + (fl[k][1] + fr[k][1]) * n[1]) + tau * (jr[k] - jl[k])
    })
}

/// Boundary data of the channel problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryParams {
    /// Peak of the parabolic inlet profile.
    pub inlet_velocity: f64,
    pub inlet_density: f64,
    pub inlet_half_width: f64,
    pub outlet_pressure: f64,
}

impl BoundaryParams {
    /// Parabolic inlet profile, zero at the inlet walls.
    #[inline]
    pub fn inlet_profile(&self, y: f64) -> f64 {
        let s = y / self.inlet_half_width;
        (self.inlet_velocity * (1.0 - s * s)).max(0.0)
    }
}

/// Ghost data on the exterior side of a boundary face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryGhost {
    /// Exterior state fed to the Roe solver.
    pub convective: ConservedState,
    /// Boundary value used by the gradient lifting and the viscous flux.
    pub viscous: ConservedState,
    /// Conserved-variable gradient at the boundary.
    pub gradient: GradTensor,
}

/// Build the ghost state for a boundary face with outward normal `n` at point `pos`.
pub fn boundary_state(
    w: &ConservedState,
    grad: &GradTensor,
    tag: BoundaryTag,
    n: [f64; 2],
    pos: [f64; 2],
    params: &BoundaryParams,
    gas: &GasModel,
) -> BoundaryGhost {
    let gamma = gas.gamma;
    let prim = primitive(w, gamma);
    match tag {
        BoundaryTag::Inlet => {
            let ghost = ConservedState::from_primitive(
                params.inlet_density,
                [params.inlet_profile(pos[1]), 0.0],
                prim.p,
                gamma,
            );
            BoundaryGhost {
                convective: ghost,
                viscous: ghost,
                gradient: *grad,
            }
        }
        BoundaryTag::Outlet => {
            let un = prim.u[0] * n[0] + prim.u[1] * n[1];
            let c = gas.sound_speed(prim.rho, prim.p);
            let ghost = if un >= c {
                *w
            } else {
                ConservedState::from_primitive(prim.rho, prim.u, params.outlet_pressure, gamma)
            };
            BoundaryGhost {
                convective: ghost,
                viscous: ghost,
                gradient: *grad,
            }
        }
        BoundaryTag::Wall => {
            let un = prim.u[0] * n[0] + prim.u[1] * n[1];
            let mirrored = [prim.u[0] - 2.0 * un * n[0], prim.u[1] - 2.0 * un * n[1]];
            let convective = ConservedState::from_primitive(prim.rho, mirrored, prim.p, gamma);
            // No-slip at the interior temperature: same rho and p, zero velocity.
            let viscous = ConservedState::from_primitive(prim.rho, [0.0, 0.0], prim.p, gamma);
            let mut g = primitive_gradient(w, grad, gas);
            let gtn = g.t[0] * n[0] + g.t[1] * n[1];
            g.t = [g.t[0] - gtn * n[0], g.t[1] - gtn * n[1]];
            BoundaryGhost {
                convective,
                viscous,
                gradient: conserved_gradient(&viscous, &g, gas),
            }
        }
    }
}

/// Local Mach number `|u| / c`.
#[inline]
pub fn local_mach(w: &ConservedState, gamma: f64) -> f64 {
    let prim = primitive(w, gamma);
    let speed = (prim.u[0] * prim.u[0] + prim.u[1] * prim.u[1]).sqrt();
    speed / (gamma * prim.p / prim.rho).sqrt()
}

/// Outlet pressure that realises Mach number `mach` for the given inlet data.
#[inline]
pub fn outlet_pressure_for_mach(inlet_density: f64, inlet_velocity: f64, gamma: f64, mach: f64) -> f64 {
    inlet_density * inlet_velocity * inlet_velocity / (gamma * mach * mach)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, Matrix4, Vector4};

    const G: f64 = 1.4;

    fn gas() -> GasModel {
        GasModel {
            mu: 0.7,
            ..Default::default()
        }
    }

    #[test]
    fn pressure_examples() {
        let w = ConservedState {
            rho: 1.0,
            mom: [0.0, 0.0],
            rho_e: 2.5,
        };
        assert!((pressure(&w, &gas()).unwrap() - 1.0).abs() < 1e-15);

        let p_out = outlet_pressure_for_mach(1.0, 20.0, G, 0.3);
        assert!((p_out - 3174.603174603175).abs() < 1e-9);
        let w = ConservedState::from_primitive(1.0, [20.0, 0.0], p_out, G);
        assert!((w.rho_e - 8136.507936507937).abs() < 1e-9);
        assert!((pressure(&w, &gas()).unwrap() - p_out).abs() / p_out < 1e-14);

        let bad = ConservedState {
            rho: 1.0,
            mom: [10.0, 0.0],
            rho_e: 1.0,
        };
        assert!(matches!(pressure(&bad, &gas()), Err(Error::State { .. })));
        let neg = ConservedState { rho: -1.0, ..w };
        assert!(pressure(&neg, &gas()).is_err());
    }

    #[test]
    fn convective_flux_examples() {
        let w = ConservedState::from_primitive(1.0, [0.0, 0.0], 1.0, G);
        let f = convective_flux(&w, G);
        assert_eq!(f[0], [0.0, 0.0]);
        assert_eq!(f[3], [0.0, 0.0]);
        assert_eq!(f[1], [1.0, 0.0]);
        assert_eq!(f[2], [0.0, 1.0]);

        let w = ConservedState::from_primitive(1.0, [20.0, 0.0], 3174.60, G);
        let f = convective_flux(&w, G);
        assert_eq!(f[0][0], 20.0);
        assert!((f[1][0] - 3574.60).abs() < 1e-9);

        // Rotating the velocity by 90 degrees permutes the flux columns.
        let a = ConservedState::from_primitive(1.3, [2.0, -0.5], 2.2, G);
        let b = ConservedState::from_primitive(1.3, [0.5, 2.0], 2.2, G);
        let fa = convective_flux(&a, G);
        let fb = convective_flux(&b, G);
        assert!((fb[0][1] - fa[0][0]).abs() < 1e-14);
        assert!((fb[0][0] + fa[0][1]).abs() < 1e-14);
        assert!((fb[3][1] - fa[3][0]).abs() < 1e-13);
        assert!((fb[2][1] - fa[1][0]).abs() < 1e-13);
        // Mass row equals momentum.
        assert_eq!(fa[0], a.mom);
    }

    #[test]
    fn viscous_flux_examples() {
        let g = gas();
        let w = ConservedState::from_primitive(1.2, [3.0, -1.0], 2.0, G);
        let zero = [[0.0; 2]; 4];
        assert!(viscous_flux(&w, &zero, &g).iter().flatten().all(|v| *v == 0.0));

        let s = 0.8;
        let tau = deviatoric_stress([0.0, s], [0.0, 0.0], g.mu);
        assert!((tau[0][1] - g.mu * s).abs() < 1e-15);
        assert!((tau[1][0] - g.mu * s).abs() < 1e-15);
        assert_eq!(tau[0][0], 0.0);
        assert_eq!(tau[1][1], 0.0);

        // Deviatoric in the 3D sense: the out-of-plane normal stress of a
        // planar flow is -2/3 mu div u, so the full trace vanishes.
        for (gu, gv) in [([1.0, 2.0], [3.0, -4.0]), ([0.3, -0.1], [0.7, 0.2])] {
            let mu = 1.7;
            let t = deviatoric_stress(gu, gv, mu);
            let tzz = -2.0 / 3.0 * mu * (gu[0] + gv[1]);
            assert!((t[0][0] + t[1][1] + tzz).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_chain_rule_roundtrip() {
        let g = gas();
        let w = ConservedState::from_primitive(1.1, [2.0, 0.4], 3.0, G);
        let grad: GradTensor = [[0.1, -0.2], [0.5, 0.3], [-0.4, 0.2], [1.5, -0.7]];
        let pg = primitive_gradient(&w, &grad, &g);
        let back = conserved_gradient(&w, &pg, &g);
        for k in 0..4 {
            for d in 0..2 {
                assert!((back[k][d] - grad[k][d]).abs() < 1e-13);
            }
        }
        // Finite-difference check of the temperature gradient along x.
        let eps = 1e-6;
        let temp = |w: &ConservedState| pressure_unchecked(w, G) / (w.rho * g.gas_constant);
        let shift = |s: f64| {
            ConservedState::from_array(std::array::from_fn(|k| w.to_array()[k] + s * grad[k][0]))
        };
        let fd = (temp(&shift(eps)) - temp(&shift(-eps))) / (2.0 * eps);
        assert!((fd - pg.t[0]).abs() < 1e-7);
    }

    /// Flux Jacobian dF.n/dw at velocity (u, v) and enthalpy H.
    fn jacobian(u: f64, v: f64, h: f64, n: [f64; 2]) -> Matrix4<f64> {
        let g1 = G - 1.0;
        let q2 = u * u + v * v;
        let un = u * n[0] + v * n[1];
        let phi = 0.5 * g1 * q2;
        Matrix4::new(
            0.0,
            n[0],
            n[1],
            0.0,
            phi * n[0] - u * un,
            un - (G - 2.0) * u * n[0],
            u * n[1] - g1 * v * n[0],
            g1 * n[0],
            phi * n[1] - v * un,
            v * n[0] - g1 * u * n[1],
            un - (G - 2.0) * v * n[1],
            g1 * n[1],
            un * (phi - h),
            h * n[0] - g1 * u * un,
            h * n[1] - g1 * v * un,
            G * un,
        )
    }

    /// |A| = A sign(A), sign via the Newton iteration X <- (X + X^-1) / 2.
    fn matrix_abs(a: &Matrix4<f64>) -> Matrix4<f64> {
        let mut x = *a;
        for _ in 0..100 {
            let next = 0.5 * (x + x.try_inverse().unwrap());
            let done = (next - x).norm() <= 1e-15 * next.norm();
            x = next;
            if done {
                break;
            }
        }
        a * x
    }

    fn roe_oracle(wl: &ConservedState, wr: &ConservedState, n: [f64; 2]) -> Vector4<f64> {
        let pl = primitive(wl, G);
        let pr = primitive(wr, G);
        let (sl, sr) = (wl.rho.sqrt(), wr.rho.sqrt());
        let u = (sl * pl.u[0] + sr * pr.u[0]) / (sl + sr);
        let v = (sl * pl.u[1] + sr * pr.u[1]) / (sl + sr);
        let h = (sl * (wl.rho_e + pl.p) / wl.rho + sr * (wr.rho_e + pr.p) / wr.rho) / (sl + sr);
        let a = jacobian(u, v, h, n);
        let abs_a = matrix_abs(&a);
        let dw = Vector4::from(wr.to_array()) - Vector4::from(wl.to_array());
        // Roe property: A (wR - wL) = F(wR) - F(wL).
        let df = Vector4::from(convective_flux_normal(wr, n, G)) - Vector4::from(convective_flux_normal(wl, n, G));
        assert!((a * dw - df).norm() < 1e-12 * df.norm().max(1.0));
        let avg = 0.5
            * (Vector4::from(convective_flux_normal(wl, n, G)) + Vector4::from(convective_flux_normal(wr, n, G)));
        avg - 0.5 * abs_a * dw
    }

    #[test]
    fn roe_matches_matrix_sign_oracle() {
        let wl = ConservedState::from_primitive(1.0, [1.0, 0.0], 1.0, G);
        let wr = ConservedState::from_primitive(0.9, [1.1, 0.0], 0.95, G);
        let n = [1.0, 0.0];
        let f = roe_flux(&wl, &wr, n, G, RoeOptions::default()).unwrap();
        let o = roe_oracle(&wl, &wr, n);
        for k in 0..4 {
            assert!((f[k] - o[k]).abs() <= 1e-10 * o[k].abs().max(1e-3), "{k}: {} vs {}", f[k], o[k]);
        }
        // Oblique normal with shear.
        let wl = ConservedState::from_primitive(1.2, [0.3, 0.8], 2.0, G);
        let wr = ConservedState::from_primitive(0.7, [-0.2, 0.1], 1.1, G);
        let s = 0.5f64.sqrt();
        let n = [s, -s];
        let f = roe_flux(&wl, &wr, n, G, RoeOptions::default()).unwrap();
        let o = roe_oracle(&wl, &wr, n);
        let scale = DMatrix::from_row_slice(1, 4, &f).norm();
        for k in 0..4 {
            assert!((f[k] - o[k]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn roe_consistency_and_conservation() {
        let w = ConservedState::from_primitive(1.0, [20.0, 3.0], 3174.6, G);
        for n in [[1.0, 0.0], [0.0, -1.0], [0.6, 0.8]] {
            let f = roe_flux(&w, &w, n, G, RoeOptions::default()).unwrap();
            let fc = convective_flux_normal(&w, n, G);
            for k in 0..4 {
                assert!((f[k] - fc[k]).abs() <= 1e-13 * fc[k].abs().max(1.0));
            }
        }
        let wl = ConservedState::from_primitive(1.0, [1.0, 0.2], 1.0, G);
        let wr = ConservedState::from_primitive(0.8, [0.5, -0.1], 0.7, G);
        for fix in [None, Some(0.05)] {
            let opts = RoeOptions { entropy_fix: fix };
            let n = [0.6, 0.8];
            let a = roe_flux(&wl, &wr, n, G, opts).unwrap();
            let b = roe_flux(&wr, &wl, [-0.6, -0.8], G, opts).unwrap();
            for k in 0..4 {
                assert!((a[k] + b[k]).abs() < 1e-13);
            }
        }
        // Supersonic left-to-right flow: pure upwinding.
        let wl = ConservedState::from_primitive(1.0, [3.0, 0.1], 1.0, G);
        let wr = ConservedState::from_primitive(1.1, [2.9, 0.0], 1.05, G);
        let f = roe_flux(&wl, &wr, [1.0, 0.0], G, RoeOptions::default()).unwrap();
        let fl = convective_flux_normal(&wl, [1.0, 0.0], G);
        for k in 0..4 {
            assert!((f[k] - fl[k]).abs() < 1e-12 * fl[k].abs().max(1.0));
        }
    }

    #[test]
    fn roe_rejects_bad_average() {
        let wl = ConservedState {
            rho: 1.0,
            mom: [0.0, 0.0],
            rho_e: -5.0,
        };
        let wr = wl;
        assert!(roe_flux(&wl, &wr, [1.0, 0.0], G, RoeOptions::default()).is_err());
    }

    #[test]
    fn interior_penalty_examples() {
        let g = gas();
        let w = ConservedState::from_primitive(1.0, [1.0, 0.5], 1.0, G);
        let grad: GradTensor = [[0.1, 0.0], [0.2, -0.3], [0.0, 0.4], [0.5, 0.1]];
        let n = [0.0, 1.0];
        let f = interior_penalty_viscous_flux(&w, &w, &grad, &grad, n, 0.5, 2, &g, 4.0);
        let fv = viscous_flux(&w, &grad, &g);
        for k in 0..4 {
            assert_eq!(f[k], fv[k][0] * n[0] + fv[k][1] * n[1]);
        }
        let wr = ConservedState::from_primitive(1.1, [0.9, 0.5], 1.2, G);
        let zero = [[0.0; 2]; 4];
        let f = interior_penalty_viscous_flux(&w, &wr, &zero, &zero, n, 0.5, 2, &g, 4.0);
        let tau = 4.0 * 9.0 * g.mu / 0.5;
        for k in 0..4 {
            let jump = wr.to_array()[k] - w.to_array()[k];
            assert!((f[k] - tau * jump).abs() < 1e-12 * tau);
        }
    }

    #[test]
    fn boundary_states() {
        let g = gas();
        let params = BoundaryParams {
            inlet_velocity: 20.0,
            inlet_density: 1.0,
            inlet_half_width: 1.25,
            outlet_pressure: 3174.6,
        };
        assert_eq!(params.inlet_profile(0.0), 20.0);
        assert_eq!(params.inlet_profile(1.25), 0.0);
        assert_eq!(params.inlet_profile(-1.25), 0.0);
        assert!((params.inlet_profile(0.625) - 15.0).abs() < 1e-12);

        let zero = [[0.0; 2]; 4];
        let w = ConservedState::from_primitive(1.05, [10.0, 1.0], 3000.0, G);
        let gi = boundary_state(&w, &zero, BoundaryTag::Inlet, [-1.0, 0.0], [0.0, 0.0], &params, &g);
        let pi = primitive(&gi.convective, G);
        assert_eq!(pi.rho, 1.0);
        assert_eq!(pi.u, [20.0, 0.0]);
        assert!((pi.p - 3000.0).abs() < 1e-9);

        let go = boundary_state(&w, &zero, BoundaryTag::Outlet, [1.0, 0.0], [50.0, 0.0], &params, &g);
        let po = primitive(&go.convective, G);
        assert!((po.p - 3174.6).abs() < 1e-9);
        assert!((po.rho - 1.05).abs() < 1e-15 && (po.u[0] - 10.0).abs() < 1e-12);

        let fast = ConservedState::from_primitive(1.0, [80.0, 0.0], 3000.0, G);
        let gs = boundary_state(&fast, &zero, BoundaryTag::Outlet, [1.0, 0.0], [50.0, 0.0], &params, &g);
        assert_eq!(gs.convective, fast);

        let ww = ConservedState::from_primitive(1.0, [3.0, 4.0], 2.0, G);
        let gw = boundary_state(&ww, &zero, BoundaryTag::Wall, [0.0, 1.0], [20.0, 3.75], &params, &g);
        let pc = primitive(&gw.convective, G);
        assert!((pc.u[0] - 3.0).abs() < 1e-14 && (pc.u[1] + 4.0).abs() < 1e-14);
        assert_eq!(gw.viscous.velocity(), [0.0, 0.0]);
        assert!((primitive(&gw.viscous, G).p - 2.0).abs() < 1e-14);

        // Adiabatic wall: no normal heat flux in the ghost gradient.
        let grad: GradTensor = [[0.1, 0.2], [0.3, -0.4], [0.2, 0.1], [0.7, 1.3]];
        let gw = boundary_state(&ww, &grad, BoundaryTag::Wall, [0.0, 1.0], [20.0, 3.75], &params, &g);
        let pg = primitive_gradient(&gw.viscous, &gw.gradient, &g);
        assert!(pg.t[1].abs() < 1e-12);
        let fv = viscous_flux(&gw.viscous, &gw.gradient, &g);
        assert!(fv[3][1].abs() < 1e-12);
    }

    #[test]
    fn transformed_and_mach() {
        let p_out = outlet_pressure_for_mach(1.0, 20.0, G, 0.3);
        let w = ConservedState::from_primitive(1.0, [20.0, 0.0], p_out, G);
        assert!((local_mach(&w, G) - 0.3).abs() < 1e-12);
        let q = ConservedState::from_primitive(1.0, [0.0, 0.0], 1.0, G);
        assert_eq!(local_mach(&q, G), 0.0);
        let t = TransformedState::from_conserved(&ConservedState::from_primitive(2.0, [1.0, -3.0], 5.0, G), G);
        assert_eq!(t.specific_volume, 0.5);
        assert!((t.u2 + 3.0).abs() < 1e-15 && (t.p - 5.0).abs() < 1e-13);
        assert!((gas().conductivity(0.7) - 0.7 * 1.4 / (0.4 * 0.72)).abs() < 1e-14);
    }
}

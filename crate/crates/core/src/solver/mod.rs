//! Explicit pseudo-time marching of the channel flow to a steady state.

mod av;
mod residual;

use std::collections::VecDeque;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use av::{artificial_viscosity, modal_sensor, AvParams};
pub use residual::{stable_dt, BoundaryModel, Discretization, Workspace};

use crate::dg::{DGField, PointEvaluator, ReferenceElement};
use crate::error::{Error, Result};
use crate::mesh::{ChannelGeometry, QuadMesh};
use crate::physics::{
    local_mach, outlet_pressure_for_mach, primitive, BoundaryParams, ConservedState, GasModel, RoeOptions,
};

/// Pseudo-time marching controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub cfl: f64,
    /// Residual threshold relative to the residual at `reference_step`.
    pub steady_tol: f64,
    /// Probe drift threshold over the trailing window, as a fraction of the inlet velocity.
    pub probe_tol: f64,
    pub max_steps: usize,
    pub reference_step: usize,
    pub window: usize,
    /// Seed amplitude as a fraction of the inlet velocity.
    pub perturbation_eps: f64,
    pub perturbation_sign: f64,
    /// `None` switches artificial viscosity on for Mach >= 0.8.
    pub av_enabled: Option<bool>,
    pub av_params: AvParams,
    pub c_ip: f64,
    pub entropy_fix: Option<f64>,
    /// Keep every n-th step in the recorded histories.
    pub history_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            steady_tol: 1e-6,
            probe_tol: 1e-6,
            max_steps: 2_000_000,
            reference_step: 100,
            window: 1000,
            perturbation_eps: 1e-3,
            perturbation_sign: 1.0,
            av_enabled: None,
            av_params: AvParams::default(),
            c_ip: 4.0,
            entropy_fix: None,
            history_stride: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(Error::Config {
                path: format!("solver.{path}"),
                message,
            })
        };
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl", format!("must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.steady_tol > 0.0) {
            return bad("steady_tol", format!("must be > 0, got {}", self.steady_tol));
        }
        if !(self.probe_tol > 0.0) {
            return bad("probe_tol", format!("must be > 0, got {}", self.probe_tol));
        }
        if self.max_steps == 0 {
            return bad("max_steps", "must be > 0".into());
        }
        if self.window == 0 {
            return bad("window", "must be > 0".into());
        }
        if self.perturbation_sign != 1.0 && self.perturbation_sign != -1.0 {
            return bad("perturbation_sign", format!("must be +1 or -1, got {}", self.perturbation_sign));
        }
        if !(self.perturbation_eps >= 0.0 && self.perturbation_eps.is_finite()) {
            return bad("perturbation_eps", format!("must be >= 0, got {}", self.perturbation_eps));
        }
        if !(self.c_ip > 0.0) {
            return bad("c_ip", format!("must be > 0, got {}", self.c_ip));
        }
        if self.history_stride == 0 {
            return bad("history_stride", "must be > 0".into());
        }
        Ok(())
    }

    pub fn av_active(&self, mach: f64) -> bool {
        self.av_enabled.unwrap_or(mach >= 0.8)
    }
}

/// Inflow data and gas shared by every case of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConditions {
    pub inlet_velocity: f64,
    pub inlet_density: f64,
}

impl Default for FlowConditions {
    fn default() -> Self {
        Self {
            inlet_velocity: 20.0,
            inlet_density: 1.0,
        }
    }
}

/// One point of the parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowCase {
    pub mu: f64,
    pub mach: f64,
}

/// Mesh, element and physical setup of the channel problem.
#[derive(Debug, Clone)]
pub struct Channel<'a> {
    pub mesh: &'a QuadMesh,
    pub re: &'a ReferenceElement,
    pub geometry: ChannelGeometry,
    pub gas: GasModel,
    pub flow: FlowConditions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxSteps,
    Aborted,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_field: DGField,
    /// `(t, u_y)` at the probe.
    pub probe_history: Vec<(f64, f64)>,
    /// `(t, ||M dw/dt|| / reference)`.
    pub residual_history: Vec<(f64, f64)>,
    pub status: RunStatus,
    pub steps: usize,
    pub final_probe: f64,
    pub final_residual: f64,
    /// Residual norm used to normalize `residual_history`.
    pub reference_residual: f64,
    pub message: Option<String>,
    pub wall_time: f64,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    /// Histories as CSV with header `t,uy_probe,residual`.
    pub fn write_history_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,uy_probe,residual")?;
        for ((t, uy), (_, r)) in self.probe_history.iter().zip(&self.residual_history) {
            writeln!(out, "{t:?},{uy:?},{r:?}")?;
        }
        Ok(())
    }
}

/// Restart from an earlier solution. The residual keeps the normalization
/// of the cold start it descends from, so the steady test stays comparable.
#[derive(Debug, Clone, Copy)]
pub struct WarmStart<'a> {
    pub field: &'a DGField,
    pub reference_residual: f64,
}

/// Scratch space of the three-stage scheme.
#[derive(Debug, Clone)]
pub struct RkBuffers {
    r0: Vec<f64>,
    r1: Vec<f64>,
    r2: Vec<f64>,
    stage: Vec<f64>,
}

impl RkBuffers {
    pub fn new(n: usize) -> Self {
        Self {
            r0: vec![0.0; n],
            r1: vec![0.0; n],
            r2: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }

    /// Right-hand side at the start of the last step.
    pub fn initial_rate(&self) -> &[f64] {
        &self.r0
    }
}

/// One strong-stability-preserving three-stage Runge-Kutta step, written in
/// increment form so a vanishing right-hand side leaves `u` untouched.
pub fn ssprk3_step<F>(u: &mut [f64], dt: f64, buf: &mut RkBuffers, mut rhs: F) -> Result<()>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let RkBuffers { r0, r1, r2, stage } = buf;
    rhs(u, r0)?;
    for i in 0..u.len() {
        stage[i] = u[i] + dt * r0[i];
    }
    rhs(stage, r1)?;
    for i in 0..u.len() {
        stage[i] = u[i] + 0.25 * dt * (r0[i] + r1[i]);
    }
    rhs(stage, r2)?;
    for i in 0..u.len() {
        u[i] += dt * ((r0[i] + r1[i]) / 6.0 + 2.0 / 3.0 * r2[i]);
    }
    Ok(())
}

/// Smooth 0-to-1 damping of the initial velocity near walls.
fn wall_mask(d: f64) -> f64 {
    let s = (d / 0.5).min(1.0);
    s * s * (3.0 - 2.0 * s)
}

impl<'a> Channel<'a> {
    pub fn new(mesh: &'a QuadMesh, re: &'a ReferenceElement, geometry: ChannelGeometry, gas: GasModel, flow: FlowConditions) -> Self {
        Self {
            mesh,
            re,
            geometry,
            gas,
            flow,
        }
    }

    pub fn outlet_pressure(&self, mach: f64) -> f64 {
        outlet_pressure_for_mach(self.flow.inlet_density, self.flow.inlet_velocity, self.gas.gamma, mach)
    }

    pub fn boundary_params(&self, mach: f64) -> BoundaryParams {
        BoundaryParams {
            inlet_velocity: self.flow.inlet_velocity,
            inlet_density: self.flow.inlet_density,
            inlet_half_width: self.geometry.inlet_half_width,
            outlet_pressure: self.outlet_pressure(mach),
        }
    }

    pub fn discretization(&self, case: FlowCase, cfg: &SolverConfig) -> Discretization<'a> {
        Discretization {
            mesh: self.mesh,
            re: self.re,
            gas: self.gas.with_mu(case.mu),
            boundary: BoundaryModel::Channel(self.boundary_params(case.mach)),
            viscous: true,
            c_ip: cfg.c_ip,
            roe: RoeOptions {
                entropy_fix: cfg.entropy_fix,
            },
            av: cfg.av_active(case.mach).then_some(cfg.av_params),
        }
    }

    /// Initial field: half the inlet speed, damped at walls, outlet pressure,
    /// plus a localized vertical-velocity seed just past the step.
    pub fn initialize(&self, mach: f64, cfg: &SolverConfig) -> DGField {
        let rho = self.flow.inlet_density;
        let p = self.outlet_pressure(mach);
        let u_in = self.flow.inlet_velocity;
        let amp = cfg.perturbation_sign * cfg.perturbation_eps * u_in;
        let gamma = self.gas.gamma;
        let geom = self.geometry;
        crate::dg::l2_project(self.mesh, self.re, 4, |x, y, out| {
            let ux = 0.5 * u_in * wall_mask(geom.wall_distance(x, y));
            let uy = amp * (-((x - 11.0).powi(2) + (y - 1.0).powi(2))).exp();
            out.copy_from_slice(&ConservedState::from_primitive(rho, [ux, uy], p, gamma).to_array());
        })
    }

    /// March from `start` (or the default initial field) until steady.
    pub fn run_to_steady(&self, case: FlowCase, cfg: &SolverConfig, start: Option<WarmStart<'_>>) -> Result<RunResult> {
        cfg.validate()?;
        let clock = Instant::now();
        let disc = self.discretization(case, cfg);
        let mut field = match &start {
            Some(ws) => ws.field.clone(),
            None => self.initialize(case.mach, cfg),
        };
        let n = disc.n_dofs();
        if field.data().len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: field.data().len(),
            });
        }
        let probe = PointEvaluator::new(self.mesh, self.re, 15.0, 0.0)?;
        let probe_tol = cfg.probe_tol * self.flow.inlet_velocity;
        let mut ws = Workspace::new(self.mesh, self.re);
        let mut buf = RkBuffers::new(n);
        let mut mu_elem = vec![0.0; self.mesh.n_elements()];
        let mut recent: VecDeque<f64> = VecDeque::with_capacity(cfg.window + 1);
        let mut probe_history = Vec::new();
        let mut residual_history = Vec::new();
        let mut reference = start.as_ref().map_or(f64::NAN, |ws| ws.reference_residual);
        let mut t = 0.0;
        let mut status = RunStatus::MaxSteps;
        let mut message = None;
        let mut rel = f64::NAN;
        let mut steps = 0;

        let w = field.data_mut();
        for step in 0..cfg.max_steps {
            disc.element_viscosity(w, &mut mu_elem);
            let dt = disc.stable_dt(w, cfg.cfl, &mu_elem);
            if let Err(err) = ssprk3_step(w, dt, &mut buf, |u, r| disc.residual(u, r, &mut ws)) {
                status = RunStatus::Aborted;
                message = Some(format!("step {step}: {err}"));
                break;
            }
            let norm = disc.weighted_norm(buf.initial_rate());
            // Provisional normalization until the reference step is reached.
            if start.is_none() && (step == 0 || step == cfg.reference_step) {
                reference = norm;
            }
            rel = norm / reference;
            t += dt;
            steps = step + 1;
            let uy = probe_uy(&probe, w, self.re.n_nodes());
            if !uy.is_finite() || !norm.is_finite() {
                status = RunStatus::Aborted;
                message = Some(format!("step {step}: non-finite solution"));
                break;
            }
            if recent.len() == cfg.window {
                recent.pop_front();
            }
            recent.push_back(uy);
            if step % cfg.history_stride == 0 {
                probe_history.push((t, uy));
                residual_history.push((t, rel));
            }
            if step >= cfg.reference_step && recent.len() == cfg.window && rel <= cfg.steady_tol {
                let (lo, hi) = recent
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                if hi - lo <= probe_tol {
                    status = RunStatus::Converged;
                    break;
                }
            }
        }
        let final_probe = recent.back().copied().unwrap_or(f64::NAN);
        if probe_history.last().map(|p| p.0) != Some(t) && steps > 0 && status != RunStatus::Aborted {
            probe_history.push((t, final_probe));
            residual_history.push((t, rel));
        }
        Ok(RunResult {
            final_field: field,
            probe_history,
            residual_history,
            status,
            steps,
            final_probe,
            final_residual: rel,
            reference_residual: reference,
            message,
            wall_time: clock.elapsed().as_secs_f64(),
        })
    }
}

fn probe_uy(probe: &PointEvaluator, w: &[f64], nn: usize) -> f64 {
    probe.eval_with(|e, out| {
        let base = e * 4 * nn;
        for (k, o) in out.iter_mut().enumerate() {
            *o = w[base + 2 * nn + k] / w[base + k];
        }
    })
}

/// Scalar quantities that can be probed from a conserved field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Density,
    U1,
    U2,
    Pressure,
    Mach,
}

impl Quantity {
    fn eval(self, s: &ConservedState, gamma: f64) -> f64 {
        let prim = primitive(s, gamma);
        match self {
            Quantity::Density => prim.rho,
            Quantity::U1 => prim.u[0],
            Quantity::U2 => prim.u[1],
            Quantity::Pressure => prim.p,
            Quantity::Mach => local_mach(s, gamma),
        }
    }
}

/// Nodal values of `quantity` as a one-variable field.
pub fn derived_field(field: &DGField, gamma: f64, quantity: Quantity) -> DGField {
    let nn = field.n_nodes();
    let ne = field.n_elements();
    let mut out = DGField::zeros(ne, 1, nn);
    for e in 0..ne {
        let vals = field.element(e);
        let dst = out.element_var_mut(e, 0);
        for k in 0..nn {
            let s = ConservedState {
                rho: vals[k],
                mom: [vals[nn + k], vals[2 * nn + k]],
                rho_e: vals[3 * nn + k],
            };
            dst[k] = quantity.eval(&s, gamma);
        }
    }
    out
}

/// Local Mach number `|u| / c` at every node.
pub fn local_mach_field(field: &DGField, gas: &GasModel) -> DGField {
    derived_field(field, gas.gamma, Quantity::Mach)
}

/// Point value of a derived quantity, by tensor-product Lagrange interpolation.
pub fn probe(field: &DGField, mesh: &QuadMesh, re: &ReferenceElement, x: f64, y: f64, quantity: Quantity, gamma: f64) -> Result<f64> {
    let pe = PointEvaluator::new(mesh, re, x, y)?;
    let nn = re.n_nodes();
    Ok(pe.eval_with(|e, out| {
        let vals = field.element(e);
        for (k, o) in out.iter_mut().enumerate() {
            let s = ConservedState {
                rho: vals[k],
                mom: [vals[nn + k], vals[2 * nn + k]],
                rho_e: vals[3 * nn + k],
            };
            *o = quantity.eval(&s, gamma);
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::l2_project;
    use crate::mesh::{build_channel_mesh, build_periodic_mesh};
    use proptest::prelude::*;

    const GAMMA: f64 = 1.4;

    /// Translating isentropic vortex centred at the origin at t = 0.
    fn vortex(x: f64, y: f64, out: &mut [f64]) {
        let beta = 5.0;
        let r2 = x * x + y * y;
        let du = beta / (2.0 * std::f64::consts::PI) * (0.5 * (1.0 - r2)).exp();
        let t = 1.0 - (GAMMA - 1.0) * beta * beta / (8.0 * GAMMA * std::f64::consts::PI.powi(2)) * (1.0 - r2).exp();
        let rho = t.powf(1.0 / (GAMMA - 1.0));
        let s = ConservedState::from_primitive(rho, [1.0 - du * y, 0.5 + du * x], rho * t, GAMMA);
        out.copy_from_slice(&s.to_array());
    }

    fn euler<'a>(mesh: &'a QuadMesh, re: &'a ReferenceElement, boundary: BoundaryModel) -> Discretization<'a> {
        Discretization {
            mesh,
            re,
            gas: GasModel::default().with_mu(0.0),
            boundary,
            viscous: false,
            c_ip: 4.0,
            roe: RoeOptions::default(),
            av: None,
        }
    }

    fn totals(disc: &Discretization<'_>, w: &[f64]) -> [f64; 4] {
        let mass = disc.re.local_mass_matrix(disc.mesh.h());
        let nn = mass.len();
        let mut t = [0.0; 4];
        for (i, x) in w.iter().enumerate() {
            t[(i / nn) % 4] += mass[i % nn] * x;
        }
        t
    }

    fn channel(n_y: usize, order: usize) -> (QuadMesh, ReferenceElement) {
        (
            build_channel_mesh(&ChannelGeometry::default(), n_y).unwrap(),
            ReferenceElement::new(order).unwrap(),
        )
    }

    #[test]
    fn free_stream_is_preserved() {
        let (mesh, re) = channel(2, 3);
        let state = ConservedState::from_primitive(1.2, [0.7, -0.3], 0.9, GAMMA);
        for viscous in [false, true] {
            let disc = Discretization {
                viscous,
                gas: GasModel::default().with_mu(0.05),
                ..euler(&mesh, &re, BoundaryModel::Exact(state))
            };
            let w = l2_project(&mesh, &re, 4, |_, _, out| out.copy_from_slice(&state.to_array())).into_data();
            let mut r = vec![1.0; w.len()];
            disc.residual(&w, &mut r, &mut Workspace::new(&mesh, &re)).unwrap();
            let linf = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(linf <= 1e-12, "viscous = {viscous}: {linf}");
        }
    }

    #[test]
    fn periodic_euler_conserves_totals() {
        let mesh = build_periodic_mesh([-5.0, -5.0], 10.0, 6).unwrap();
        let re = ReferenceElement::new(3).unwrap();
        let disc = euler(&mesh, &re, BoundaryModel::Exact(ConservedState::from_primitive(1.0, [0.0; 2], 1.0, GAMMA)));
        let mut w = l2_project(&mesh, &re, 4, vortex).into_data();
        let before = totals(&disc, &w);
        let mut ws = Workspace::new(&mesh, &re);
        let mut buf = RkBuffers::new(w.len());
        let dt = stable_dt(&disc, &w, 0.9);
        for _ in 0..20 {
            ssprk3_step(&mut w, dt, &mut buf, |u, r| disc.residual(u, r, &mut ws)).unwrap();
        }
        let after = totals(&disc, &w);
        for v in 0..4 {
            let scale = before[v].abs().max(before[0].abs());
            assert!((after[v] - before[v]).abs() <= 20.0 * 1e-12 * scale, "var {v}: {} -> {}", before[v], after[v]);
        }
    }

    #[test]
    fn rk_zero_rate_is_bitwise_identity() {
        let mut u = vec![0.1, -3.7e5, 1e-300, f64::MIN_POSITIVE];
        let orig = u.clone();
        let mut buf = RkBuffers::new(u.len());
        ssprk3_step(&mut u, 0.37, &mut buf, |_, r| {
            r.fill(0.0);
            Ok(())
        })
        .unwrap();
        assert_eq!(u, orig);
    }

    #[test]
    fn rk_linear_amplification() {
        let dt: f64 = 0.1;
        let g = 1.0 - dt + dt * dt / 2.0 - dt.powi(3) / 6.0;
        let mut u = vec![1.0, -2.5, 7.0];
        let orig = u.clone();
        ssprk3_step(&mut u, dt, &mut RkBuffers::new(3), |x, r| {
            for (ri, xi) in r.iter_mut().zip(x) {
                *ri = -xi;
            }
            Ok(())
        })
        .unwrap();
        for (a, b) in u.iter().zip(&orig) {
            assert!((a - g * b).abs() <= 1e-15 * b.abs(), "{a} vs {}", g * b);
        }
    }

    #[test]
    fn rk_step_halving_is_third_order() {
        let mesh = build_periodic_mesh([-5.0, -5.0], 10.0, 4).unwrap();
        let re = ReferenceElement::new(2).unwrap();
        let disc = euler(&mesh, &re, BoundaryModel::Exact(ConservedState::from_primitive(1.0, [0.0; 2], 1.0, GAMMA)));
        let w0 = l2_project(&mesh, &re, 4, vortex).into_data();
        let mut ws = Workspace::new(&mesh, &re);
        let mut buf = RkBuffers::new(w0.len());
        let mut gap = |dt: f64| {
            let mut one = w0.clone();
            ssprk3_step(&mut one, dt, &mut buf, |u, r| disc.residual(u, r, &mut ws)).unwrap();
            let mut two = w0.clone();
            for _ in 0..2 {
                ssprk3_step(&mut two, dt / 2.0, &mut buf, |u, r| disc.residual(u, r, &mut ws)).unwrap();
            }
            one.iter().zip(&two).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        let dt = 0.5 * stable_dt(&disc, &w0, 0.9);
        let (g1, g2) = (gap(dt), gap(dt / 2.0));
        let rate = (g1 / g2).log2();
        assert!(rate >= 3.0, "gaps {g1:e} {g2:e}, rate {rate}");
    }

    #[test]
    fn viscous_dominated_march_is_stable() {
        // Slow sound and large mu, so the viscous bound sets dt.
        let mesh = build_periodic_mesh([0.0, 0.0], 10.0, 6).unwrap();
        let re = ReferenceElement::new(2).unwrap();
        let rest = ConservedState::from_primitive(1.0, [0.0; 2], 100.0, GAMMA);
        let disc = Discretization {
            viscous: true,
            gas: GasModel::default().with_mu(5.0),
            ..euler(&mesh, &re, BoundaryModel::Exact(rest))
        };
        let k = 2.0 * std::f64::consts::PI / 10.0;
        let mut w = l2_project(&mesh, &re, 4, |x, y, out| {
            let s = ConservedState::from_primitive(1.0, [(k * y).sin(), 0.5 * (k * x).cos()], 100.0 + 10.0 * (k * (x + y)).sin(), GAMMA);
            out.copy_from_slice(&s.to_array());
        })
        .into_data();
        let momentum = |w: &[f64]| {
            let nn = re.n_nodes();
            w.chunks(4 * nn).flat_map(|e| e[nn..3 * nn].iter()).map(|m| m * m).sum::<f64>()
        };
        let m0 = momentum(&w);
        let mut ws = Workspace::new(&mesh, &re);
        let mut buf = RkBuffers::new(w.len());
        for _ in 0..400 {
            let dt = stable_dt(&disc, &w, 0.9);
            ssprk3_step(&mut w, dt, &mut buf, |u, r| disc.residual(u, r, &mut ws)).unwrap();
        }
        let m1 = momentum(&w);
        assert!(m1.is_finite() && m1 < m0, "{m0} -> {m1}");
    }

    fn quiescent_dt(order: usize, mu: f64) -> f64 {
        // Periodic square of side 2 split in 2 x 2 gives h = 1.
        let mesh = build_periodic_mesh([0.0, 0.0], 2.0, 2).unwrap();
        let re = ReferenceElement::new(order).unwrap();
        let state = ConservedState::from_primitive(1.0, [0.0; 2], 1.0 / GAMMA, GAMMA);
        let disc = Discretization {
            viscous: mu > 0.0,
            gas: GasModel::default().with_mu(mu),
            ..euler(&mesh, &re, BoundaryModel::Exact(state))
        };
        let w = l2_project(&mesh, &re, 4, |_, _, out| out.copy_from_slice(&state.to_array())).into_data();
        stable_dt(&disc, &w, 1.0)
    }

    #[test]
    fn stable_dt_examples() {
        assert!((quiescent_dt(1, 0.0) - 0.25).abs() < 1e-15);
        let (a, b) = (quiescent_dt(1, 10.0), quiescent_dt(1, 20.0));
        assert!((a / b - 2.0).abs() < 1e-12, "{a} {b}");
        let dts: Vec<f64> = (1..=6).map(|p| quiescent_dt(p, 0.0)).collect();
        assert!(dts.windows(2).all(|w| w[1] < w[0]), "{dts:?}");
    }

    fn mirror_gap(mesh: &QuadMesh, re: &ReferenceElement, w: &[f64]) -> [f64; 4] {
        let n1 = re.n1();
        let nn = re.n_nodes();
        let mut gap = [0.0f64; 4];
        for e in 0..mesh.n_elements() {
            let m = mesh.mirror_element(e).expect("mirror exists");
            for b in 0..n1 {
                for a in 0..n1 {
                    let k = a + n1 * b;
                    let km = a + n1 * (n1 - 1 - b);
                    for v in 0..4 {
                        let sign = if v == 2 { -1.0 } else { 1.0 };
                        let d = w[e * 4 * nn + v * nn + k] - sign * w[m * 4 * nn + v * nn + km];
                        gap[v] = gap[v].max(d.abs());
                    }
                }
            }
        }
        gap
    }

    #[test]
    fn initial_field_examples() {
        let (mesh, re) = channel(2, 3);
        let ch = Channel::new(&mesh, &re, ChannelGeometry::default(), GasModel::default(), FlowConditions::default());
        let flat = SolverConfig {
            perturbation_eps: 0.0,
            ..SolverConfig::default()
        };
        let sym = ch.initialize(0.3, &flat);
        assert_eq!(mirror_gap(&mesh, &re, sym.data()), [0.0; 4]);

        let seeded = ch.initialize(0.3, &SolverConfig::default());
        assert!(probe(&seeded, &mesh, &re, 11.0, 1.0, Quantity::U2, GAMMA).unwrap() > 0.0);
        let down = ch.initialize(0.3, &SolverConfig { perturbation_sign: -1.0, ..SolverConfig::default() });
        assert!(probe(&down, &mesh, &re, 11.0, 1.0, Quantity::U2, GAMMA).unwrap() < 0.0);

        let disc = ch.discretization(FlowCase { mu: 1.0, mach: 0.3 }, &flat);
        let mass = totals(&disc, seeded.data())[0];
        assert!((mass - 325.0).abs() <= 1e-12 * 325.0, "{mass}");
        assert_eq!(seeded, ch.initialize(0.3, &SolverConfig::default()));
    }

    #[test]
    fn symmetric_start_stays_symmetric() {
        let (mesh, re) = channel(2, 2);
        let ch = Channel::new(&mesh, &re, ChannelGeometry::default(), GasModel::default(), FlowConditions::default());
        let cfg = SolverConfig {
            perturbation_eps: 0.0,
            cfl: 0.9,
            max_steps: 10_000,
            steady_tol: 1e-300,
            ..SolverConfig::default()
        };
        let run = ch.run_to_steady(FlowCase { mu: 2.0, mach: 0.3 }, &cfg, None).unwrap();
        assert_eq!(run.status, RunStatus::MaxSteps);
        assert_eq!(run.steps, 10_000);
        let w = run.final_field.data();
        let gap = mirror_gap(&mesh, &re, w);
        let p_out = ch.outlet_pressure(0.3);
        let scale = [1.0, 20.0, 20.0, p_out / (GAMMA - 1.0)];
        for v in 0..4 {
            assert!(gap[v] <= 1e-10 * scale[v], "var {v}: {}", gap[v]);
        }
        assert!(run.final_probe.abs() <= 1e-10 * 20.0, "probe {}", run.final_probe);
    }

    #[test]
    fn warm_start_keeps_reference() {
        let (mesh, re) = channel(2, 1);
        let ch = Channel::new(&mesh, &re, ChannelGeometry::default(), GasModel::default(), FlowConditions::default());
        let cfg = SolverConfig {
            max_steps: 150,
            window: 10,
            ..SolverConfig::default()
        };
        let case = FlowCase { mu: 1.0, mach: 0.3 };
        let cold = ch.run_to_steady(case, &cfg, None).unwrap();
        assert!(cold.reference_residual > 0.0);
        let warm = ch
            .run_to_steady(
                case,
                &SolverConfig { max_steps: 5, ..cfg.clone() },
                Some(WarmStart {
                    field: &cold.final_field,
                    reference_residual: 123.0,
                }),
            )
            .unwrap();
        assert_eq!(warm.reference_residual, 123.0);
        assert_eq!(warm.steps, 5);
        let wrong = DGField::zeros(3, 4, re.n_nodes());
        let bad = ch.run_to_steady(
            case,
            &cfg,
            Some(WarmStart {
                field: &wrong,
                reference_residual: 1.0,
            }),
        );
        assert!(matches!(bad, Err(Error::Dimension { .. })));
    }

    #[test]
    fn history_csv_layout() {
        let (mesh, re) = channel(2, 1);
        let ch = Channel::new(&mesh, &re, ChannelGeometry::default(), GasModel::default(), FlowConditions::default());
        let cfg = SolverConfig {
            max_steps: 25,
            history_stride: 10,
            ..SolverConfig::default()
        };
        let run = ch.run_to_steady(FlowCase { mu: 1.0, mach: 0.3 }, &cfg, None).unwrap();
        let mut out = Vec::new();
        run.write_history_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,uy_probe,residual");
        // Steps 0, 10, 20 plus the final step.
        assert_eq!(lines.len(), 5);
        assert_eq!(run.probe_history.last().unwrap().1, run.final_probe);
    }

    #[test]
    fn probe_examples() {
        let (mesh, re) = channel(2, 3);
        let f = crate::dg::l2_project_scalar(&mesh, &re, |_, y| y);
        let pe = PointEvaluator::new(&mesh, &re, 15.0, 0.0).unwrap();
        assert!(pe.eval_dofs(f.data()).abs() < 1e-14);

        let p0 = 3.25;
        let w = l2_project(&mesh, &re, 4, |x, y, out| {
            let s = ConservedState::from_primitive(1.0 + 0.01 * x, [0.1 * y, 0.2], p0, GAMMA);
            out.copy_from_slice(&s.to_array());
        });
        for (x, y) in [(15.0, 0.0), (3.3, 0.2), (42.0, -3.0)] {
            let p = probe(&w, &mesh, &re, x, y, Quantity::Pressure, GAMMA).unwrap();
            assert!((p - p0).abs() < 1e-12, "{p}");
        }
        // Inlet corner, owned by one element: the stored nodal value, bitwise.
        let (x, y) = (0.0, -1.25);
        let (hit, _) = mesh.locate_point(x, y).unwrap();
        let got = probe(&w, &mesh, &re, x, y, Quantity::Density, GAMMA).unwrap();
        assert_eq!(got, w.element_var(hit, 0)[nearest_node(&mesh, &re, hit, x, y)]);
        // Interior vertex of a smooth field: all traces agree.
        let got = probe(&w, &mesh, &re, 15.0, 1.25, Quantity::Density, GAMMA).unwrap();
        assert!((got - 1.15).abs() < 1e-14, "{got}");
        assert!(probe(&w, &mesh, &re, 5.0, 2.0, Quantity::Density, GAMMA).is_err());
    }

    fn nearest_node(mesh: &QuadMesh, re: &ReferenceElement, e: usize, x: f64, y: f64) -> usize {
        (0..re.n_nodes())
            .min_by(|&a, &b| {
                let d = |k: usize| {
                    let [xi, eta] = re.node_coords(k);
                    let [px, py] = mesh.map_to_physical(e, xi, eta);
                    (px - x).hypot(py - y)
                };
                d(a).total_cmp(&d(b))
            })
            .unwrap()
    }

    #[test]
    fn local_mach_examples() {
        let (mesh, re) = channel(2, 1);
        let gas = GasModel::default();
        let flow = FlowConditions::default();
        let ch = Channel::new(&mesh, &re, ChannelGeometry::default(), gas, flow);
        let p_out = ch.outlet_pressure(0.3);
        let quiet = l2_project(&mesh, &re, 4, |_, _, out| {
            out.copy_from_slice(&ConservedState::from_primitive(1.0, [0.0; 2], p_out, GAMMA).to_array())
        });
        assert!(local_mach_field(&quiet, &gas).data().iter().all(|&m| m == 0.0));
        let peak = l2_project(&mesh, &re, 4, |_, _, out| {
            out.copy_from_slice(&ConservedState::from_primitive(1.0, [flow.inlet_velocity, 0.0], p_out, GAMMA).to_array())
        });
        for m in local_mach_field(&peak, &gas).data() {
            assert!((m - 0.3).abs() <= 1e-12, "{m}");
        }
    }

    proptest! {
        #[test]
        fn local_mach_grows_with_speed(a in 0.0f64..50.0, b in 0.0f64..50.0, angle in 0.0f64..6.28) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let m = |s: f64| crate::physics::local_mach(
                &ConservedState::from_primitive(1.1, [s * angle.cos(), s * angle.sin()], 2.0, GAMMA), GAMMA);
            prop_assert!(m(lo) <= m(hi) + 1e-15);
        }

        #[test]
        fn stable_dt_positive_finite(rho in 0.1f64..5.0, u in -30.0f64..30.0, p in 0.1f64..1e4, mu in 0.0f64..5.0) {
            let (mesh, re) = (build_periodic_mesh([0.0, 0.0], 2.0, 2).unwrap(), ReferenceElement::new(2).unwrap());
            let state = ConservedState::from_primitive(rho, [u, 0.3 * u], p, GAMMA);
            let disc = Discretization {
                viscous: true,
                gas: GasModel::default().with_mu(mu),
                ..euler(&mesh, &re, BoundaryModel::Exact(state))
            };
            let w = l2_project(&mesh, &re, 4, |_, _, out| out.copy_from_slice(&state.to_array())).into_data();
            let dt = stable_dt(&disc, &w, 0.5);
            prop_assert!(dt > 0.0 && dt.is_finite());
        }
    }
}

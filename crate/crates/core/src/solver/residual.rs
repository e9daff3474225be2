//! Semi-discrete DG operator: `dw/dt = M^-1 R(w)`.
//!
//! Written in the strong (collocated SBP) form, which is algebraically the
//! integrated-by-parts weak form under GLL collocation. Viscous terms use a
//! BR1 lifting of the conserved-variable gradient (central trace values) and
//! an interior-penalty jump term on the primal flux.

use crate::dg::ReferenceElement;
use crate::error::{Error, Result};
use crate::mesh::{FaceLink, QuadMesh, FACE_NORMALS};
use crate::physics::{
    boundary_state, penalty_coefficient, primitive_gradient, roe_flux, viscous_flux_primitive,
    BoundaryParams, ConservedState, FluxTensor, GasModel, GradTensor, RoeOptions,
};

use super::av::{artificial_viscosity, AvParams};

/// How exterior states are built on boundary faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryModel {
    /// Inlet / outlet / adiabatic wall conditions of the channel.
    Channel(BoundaryParams),
    /// Every boundary sees the given exact state (free-stream tests).
    Exact(ConservedState),
}

/// Everything the residual needs that does not change during a run.
#[derive(Debug, Clone)]
pub struct Discretization<'a> {
    pub mesh: &'a QuadMesh,
    pub re: &'a ReferenceElement,
    pub gas: GasModel,
    pub boundary: BoundaryModel,
    pub viscous: bool,
    pub c_ip: f64,
    pub roe: RoeOptions,
    pub av: Option<AvParams>,
}

/// Scratch buffers reused across residual evaluations.
#[derive(Debug, Clone)]
pub struct Workspace {
    face_pos: Vec<[f64; 2]>,
    wstar: Vec<[f64; 4]>,
    grad: Vec<GradTensor>,
    fv: Vec<FluxTensor>,
    ftot: Vec<FluxTensor>,
    fhat: Vec<[f64; 4]>,
    mu_elem: Vec<f64>,
}

impl Workspace {
    pub fn new(mesh: &QuadMesh, re: &ReferenceElement) -> Self {
        let n1 = re.n1();
        let ne = mesh.n_elements();
        let nn = re.n_nodes();
        let mut face_pos = vec![[0.0; 2]; ne * 4 * n1];
        for e in 0..ne {
            for f in 0..4 {
                for k in 0..n1 {
                    let [xi, eta] = re.node_coords(re.face_node(f, k));
                    face_pos[(e * 4 + f) * n1 + k] = mesh.map_to_physical(e, xi, eta);
                }
            }
        }
        Self {
            face_pos,
            wstar: vec![[0.0; 4]; ne * 4 * n1],
            grad: vec![[[0.0; 2]; 4]; ne * nn],
            fv: vec![[[0.0; 2]; 4]; ne * nn],
            ftot: vec![[[0.0; 2]; 4]; ne * nn],
            fhat: vec![[0.0; 4]; ne * 4 * n1],
            mu_elem: vec![0.0; ne],
        }
    }

    /// Effective viscosity per element from the last residual evaluation.
    pub fn element_viscosity(&self) -> &[f64] {
        &self.mu_elem
    }
}

#[inline]
fn load(w: &[f64], e: usize, node: usize, nn: usize) -> ConservedState {
    let base = e * 4 * nn + node;
    ConservedState {
        rho: w[base],
        mom: [w[base + nn], w[base + 2 * nn]],
        rho_e: w[base + 3 * nn],
    }
}

#[inline]
fn normal_component(f: &FluxTensor, n: [f64; 2]) -> [f64; 4] {
    std::array::from_fn(|v| f[v][0] * n[0] + f[v][1] * n[1])
}

impl Discretization<'_> {
    pub fn n_dofs(&self) -> usize {
        self.mesh.n_elements() * 4 * self.re.n_nodes()
    }

    /// Check positivity of density and pressure at every node.
    pub fn check_admissible(&self, w: &[f64]) -> Result<()> {
        let nn = self.re.n_nodes();
        let g1 = self.gas.gamma - 1.0;
        for e in 0..self.mesh.n_elements() {
            for node in 0..nn {
                let s = load(w, e, node, nn);
                let p = g1 * (s.rho_e - 0.5 * (s.mom[0] * s.mom[0] + s.mom[1] * s.mom[1]) / s.rho);
                if !(s.rho > 0.0 && p > 0.0 && p.is_finite()) {
                    return Err(Error::State {
                        element: e,
                        node,
                        reason: format!("rho = {}, p = {}", s.rho, p),
                    });
                }
            }
        }
        Ok(())
    }

    /// Per-element effective viscosity (molecular plus artificial).
    pub fn element_viscosity(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|m| *m = self.gas.mu);
        if let Some(av) = &self.av {
            let mu_av = artificial_viscosity(w, self.mesh, self.re, av);
            for (m, a) in out.iter_mut().zip(mu_av) {
                *m += a;
            }
        }
    }

    /// Evaluate `dw/dt` into `out`.
    pub fn residual(&self, w: &[f64], out: &mut [f64], ws: &mut Workspace) -> Result<()> {
        assert_eq!(w.len(), self.n_dofs(), "field length");
        assert_eq!(out.len(), self.n_dofs(), "output length");
        // Monomorphize the element kernels on the point count so the small
        // tensor loops unroll.
        match self.re.n1() {
            2 => self.residual_n::<2, 4>(w, out, ws),
            3 => self.residual_n::<3, 9>(w, out, ws),
            4 => self.residual_n::<4, 16>(w, out, ws),
            5 => self.residual_n::<5, 25>(w, out, ws),
            6 => self.residual_n::<6, 36>(w, out, ws),
            7 => self.residual_n::<7, 49>(w, out, ws),
            8 => self.residual_n::<8, 64>(w, out, ws),
            9 => self.residual_n::<9, 81>(w, out, ws),
            10 => self.residual_n::<10, 100>(w, out, ws),
            11 => self.residual_n::<11, 121>(w, out, ws),
            12 => self.residual_n::<12, 144>(w, out, ws),
            13 => self.residual_n::<13, 169>(w, out, ws),
            n => unreachable!("unsupported point count {n}"),
        }
    }

    fn residual_n<const N: usize, const NN: usize>(&self, w: &[f64], out: &mut [f64], ws: &mut Workspace) -> Result<()> {
        let mesh = self.mesh;
        let re = self.re;
        let ne = mesh.n_elements();
        let h = mesh.h();
        let scale = 2.0 / h;
        let lift = scale / re.weights_1d()[0];
        let gamma = self.gas.gamma;
        let g1 = gamma - 1.0;
        let gas = &self.gas;
        let dm: [[f64; N]; N] = std::array::from_fn(|i| std::array::from_fn(|j| re.diff(i, j)));
        let fnode: [[usize; N]; 4] = std::array::from_fn(|f| std::array::from_fn(|k| re.face_node(f, k)));

        self.element_viscosity(w, &mut ws.mu_elem);
        let zero_grad: GradTensor = [[0.0; 2]; 4];

        if self.viscous {
            // Trace values for the gradient lifting.
            for e in 0..ne {
                for f in 0..4 {
                    let n = FACE_NORMALS[f];
                    for k in 0..N {
                        let inner = load(w, e, fnode[f][k], NN);
                        let slot = (e * 4 + f) * N + k;
                        ws.wstar[slot] = match mesh.links(e)[f] {
                            FaceLink::Interior { element, face } => {
                                let outer = load(w, element, fnode[face][k], NN);
                                let (a, b) = (inner.to_array(), outer.to_array());
                                std::array::from_fn(|v| 0.5 * (a[v] + b[v]))
                            }
                            FaceLink::Boundary(tag) => {
                                self.ghost(&inner, &zero_grad, tag, n, ws.face_pos[slot]).viscous.to_array()
                            }
                        };
                    }
                }
            }

            // Lifted gradients.
            for e in 0..ne {
                let we: &[f64] = &w[e * 4 * NN..(e + 1) * 4 * NN];
                let wstar: &[[f64; 4]] = &ws.wstar[e * 4 * N..(e + 1) * 4 * N];
                let grad: &mut [GradTensor; NN] = (&mut ws.grad[e * NN..(e + 1) * NN]).try_into().unwrap();
                for v in 0..4 {
                    let vals: &[f64; NN] = we[v * NN..(v + 1) * NN].try_into().unwrap();
                    for b in 0..N {
                        for a in 0..N {
                            let mut gx = 0.0;
                            let mut gy = 0.0;
                            for m in 0..N {
                                gx += dm[a][m] * vals[m + N * b];
                                gy += dm[b][m] * vals[a + N * m];
                            }
                            grad[a + N * b][v] = [scale * gx, scale * gy];
                        }
                    }
                    for k in 0..N {
                        // Faces 1/3 carry x-jumps, faces 0/2 y-jumps; signs follow the normals.
                        let r = N - 1 + N * k;
                        grad[r][v][0] += lift * (wstar[N + k][v] - vals[r]);
                        let l = N * k;
                        grad[l][v][0] -= lift * (wstar[3 * N + k][v] - vals[l]);
                        let t = k + N * (N - 1);
                        grad[t][v][1] += lift * (wstar[2 * N + k][v] - vals[t]);
                        grad[k][v][1] -= lift * (wstar[k][v] - vals[k]);
                    }
                }
            }
        }

        // Volume term: -div(F_c - F_v). Admissibility is checked on the way.
        for e in 0..ne {
            let mu = ws.mu_elem[e];
            let kappa = gas.conductivity(mu);
            let we: &[f64] = &w[e * 4 * NN..(e + 1) * 4 * NN];
            let ftot: &mut [FluxTensor; NN] = (&mut ws.ftot[e * NN..(e + 1) * NN]).try_into().unwrap();
            let fvs: &mut [FluxTensor; NN] = (&mut ws.fv[e * NN..(e + 1) * NN]).try_into().unwrap();
            let grad: &[GradTensor] = &ws.grad[e * NN..(e + 1) * NN];
            for node in 0..NN {
                let s = ConservedState {
                    rho: we[node],
                    mom: [we[NN + node], we[2 * NN + node]],
                    rho_e: we[3 * NN + node],
                };
                let inv_rho = 1.0 / s.rho;
                let u = [s.mom[0] * inv_rho, s.mom[1] * inv_rho];
                let p = g1 * (s.rho_e - 0.5 * (s.mom[0] * u[0] + s.mom[1] * u[1]));
                if !(s.rho > 0.0 && p > 0.0 && p.is_finite()) {
                    return Err(Error::State {
                        element: e,
                        node,
                        reason: format!("rho = {}, p = {}", s.rho, p),
                    });
                }
                let hh = s.rho_e + p;
                let fc = [
                    [s.mom[0], s.mom[1]],
                    [s.mom[0] * u[0] + p, s.mom[0] * u[1]],
                    [s.mom[1] * u[0], s.mom[1] * u[1] + p],
                    [hh * u[0], hh * u[1]],
                ];
                let fv = if self.viscous {
                    let pg = primitive_gradient(&s, &grad[node], gas);
                    viscous_flux_primitive(u, &pg, mu, kappa)
                } else {
                    [[0.0; 2]; 4]
                };
                fvs[node] = fv;
                ftot[node] = std::array::from_fn(|v| [fc[v][0] - fv[v][0], fc[v][1] - fv[v][1]]);
            }
            let oe: &mut [f64] = &mut out[e * 4 * NN..(e + 1) * 4 * NN];
            for v in 0..4 {
                let ov: &mut [f64; NN] = (&mut oe[v * NN..(v + 1) * NN]).try_into().unwrap();
                for b in 0..N {
                    for a in 0..N {
                        let mut d = 0.0;
                        for m in 0..N {
                            d += dm[a][m] * ftot[m + N * b][v][0] + dm[b][m] * ftot[a + N * m][v][1];
                        }
                        ov[a + N * b] = -scale * d;
                    }
                }
            }
        }

        // Numerical fluxes on interior faces, stored from each side's outward view.
        for face in mesh.interior_faces() {
            let n = FACE_NORMALS[face.left_face];
            let mu = ws.mu_elem[face.left].max(ws.mu_elem[face.right]);
            let tau = penalty_coefficient(self.c_ip, re.order(), mu, h);
            for k in 0..N {
                let nl = fnode[face.left_face][k];
                let nr = fnode[face.right_face][k];
                let wl = load(w, face.left, nl, NN);
                let wr = load(w, face.right, nr, NN);
                let mut fhat = roe_flux(&wl, &wr, n, gamma, self.roe).map_err(|err| locate(err, face.left, nl))?;
                if self.viscous {
                    let fl = normal_component(&ws.fv[face.left * NN + nl], n);
                    let fr = normal_component(&ws.fv[face.right * NN + nr], n);
                    let (al, ar) = (wl.to_array(), wr.to_array());
                    for v in 0..4 {
                        fhat[v] -= 0.5 * (fl[v] + fr[v]) + tau * (ar[v] - al[v]);
                    }
                }
                ws.fhat[(face.left * 4 + face.left_face) * N + k] = fhat;
                ws.fhat[(face.right * 4 + face.right_face) * N + k] = fhat.map(|x| -x);
            }
        }

        // Boundary faces.
        for bf in mesh.boundary_faces() {
            let (e, f) = (bf.element, bf.face);
            let n = FACE_NORMALS[f];
            let mu = ws.mu_elem[e];
            let tau = penalty_coefficient(self.c_ip, re.order(), mu, h);
            for k in 0..N {
                let node = fnode[f][k];
                let slot = (e * 4 + f) * N + k;
                let wi = load(w, e, node, NN);
                let gi = if self.viscous { ws.grad[e * NN + node] } else { zero_grad };
                let ghost = self.ghost(&wi, &gi, bf.tag, n, ws.face_pos[slot]);
                let mut fhat = roe_flux(&wi, &ghost.convective, n, gamma, self.roe).map_err(|err| locate(err, e, node))?;
                if self.viscous {
                    let pg = primitive_gradient(&ghost.viscous, &ghost.gradient, gas);
                    let fb = viscous_flux_primitive(ghost.viscous.velocity(), &pg, mu, gas.conductivity(mu));
                    let fbn = normal_component(&fb, n);
                    let (ab, ai) = (ghost.viscous.to_array(), wi.to_array());
                    for v in 0..4 {
                        fhat[v] -= fbn[v] + tau * (ab[v] - ai[v]);
                    }
                }
                ws.fhat[slot] = fhat;
            }
        }

        // Surface correction (F_hat - F_inner) . n lifted to the face nodes.
        for e in 0..ne {
            let oe: &mut [f64] = &mut out[e * 4 * NN..(e + 1) * 4 * NN];
            let ftot: &[FluxTensor] = &ws.ftot[e * NN..(e + 1) * NN];
            let fhat: &[[f64; 4]] = &ws.fhat[e * 4 * N..(e + 1) * 4 * N];
            for f in 0..4 {
                let n = FACE_NORMALS[f];
                for k in 0..N {
                    let node = fnode[f][k];
                    let ft = &ftot[node];
                    let fh = &fhat[f * N + k];
                    for v in 0..4 {
                        let inner = ft[v][0] * n[0] + ft[v][1] * n[1];
                        oe[v * NN + node] -= lift * (fh[v] - inner);
                    }
                }
            }
        }
        Ok(())
    }

    fn ghost(
        &self,
        w: &ConservedState,
        grad: &GradTensor,
        tag: crate::mesh::BoundaryTag,
        n: [f64; 2],
        pos: [f64; 2],
    ) -> crate::physics::BoundaryGhost {
        match &self.boundary {
            BoundaryModel::Channel(params) => boundary_state(w, grad, tag, n, pos, params, &self.gas),
            BoundaryModel::Exact(state) => crate::physics::BoundaryGhost {
                convective: *state,
                viscous: *state,
                gradient: *grad,
            },
        }
    }

    /// Largest stable explicit step for the current field.
    pub fn stable_dt(&self, w: &[f64], cfl: f64, mu_elem: &[f64]) -> f64 {
        let nn = self.re.n_nodes();
        let n1 = self.re.n1() as f64;
        let h = self.mesh.h();
        let gamma = self.gas.gamma;
        // Heat conduction diffuses faster than momentum for Pr < gamma.
        let diffusivity = (4.0 / 3.0f64).max(gamma / self.gas.prandtl);
        let mut dt = f64::INFINITY;
        for e in 0..self.mesh.n_elements() {
            let mu = mu_elem[e];
            for node in 0..nn {
                let s = load(w, e, node, nn);
                let [u, v] = s.velocity();
                let p = (gamma - 1.0) * (s.rho_e - 0.5 * s.rho * (u * u + v * v));
                let c = (gamma * p / s.rho).sqrt();
                let speed = (u * u + v * v).sqrt() + c;
                dt = dt.min(h / (n1 * n1 * speed));
                if self.viscous && mu > 0.0 {
                    dt = dt.min(h * h * s.rho / (VISCOUS_SPREAD * diffusivity * n1.powi(4) * mu));
                }
            }
        }
        cfl * dt
    }

    /// Mass-weighted L2 norm `|| M dw/dt ||_2`.
    pub fn weighted_norm(&self, r: &[f64]) -> f64 {
        let mass = self.re.local_mass_matrix(self.mesh.h());
        let nn = mass.len();
        r.iter()
            .enumerate()
            .map(|(i, x)| {
                let m = mass[i % nn];
                (m * x) * (m * x)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// BR1 with the interface penalty has about four times the spectral radius of
/// the plain `(P+1)^4 mu / h^2` estimate (measured on viscous-dominated runs).
const VISCOUS_SPREAD: f64 = 4.0;

fn locate(err: Error, element: usize, node: usize) -> Error {
    match err {
        Error::State { reason, .. } => Error::State { element, node, reason },
        other => other,
    }
}

/// Stable time step for a field (convenience wrapper computing element viscosity).
pub fn stable_dt(disc: &Discretization<'_>, w: &[f64], cfl: f64) -> f64 {
    let mut mu = vec![0.0; disc.mesh.n_elements()];
    disc.element_viscosity(w, &mut mu);
    disc.stable_dt(w, cfl, &mu)
}

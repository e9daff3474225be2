//! Reference-element machinery for nodal tensor-product DG on squares.
//!
//! The basis is the Lagrange basis at the Gauss-Lobatto-Legendre (GLL)
//! points. Quadrature is collocated at the same points, which makes the
//! element mass matrix diagonal and face traces a pure index selection.
//!
//! Nodes of an element are numbered `a + n1 * b`, where `a` runs along `x`
//! (`xi`) and `b` along `y` (`eta`), with `n1 = P + 1`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::QuadMesh;

/// Gauss-Lobatto-Legendre points and weights on `[-1, 1]`, ascending.
///
/// Newton iteration on `(1 - x^2) L_n'(x)` started from the
/// Chebyshev-Gauss-Lobatto points.
pub fn gll_nodes_weights(n_points: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n_points >= 2, "GLL rule needs at least two points");
    let n = n_points - 1;
    let mut x: Vec<f64> = (0..=n)
        .map(|i| -(std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let mut legendre = vec![vec![0.0; n + 1]; n_points];
    for _ in 0..100 {
        let mut max_delta: f64 = 0.0;
        for (i, xi) in x.iter_mut().enumerate() {
            let p = &mut legendre[i];
            p[0] = 1.0;
            p[1] = *xi;
            for k in 2..=n {
                p[k] = ((2 * k - 1) as f64 * *xi * p[k - 1] - (k - 1) as f64 * p[k - 2]) / k as f64;
            }
            let delta = (*xi * p[n] - p[n - 1]) / (n_points as f64 * p[n]);
            *xi -= delta;
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta <= 1e-15 {
            break;
        }
    }
    // Final Legendre values at the converged nodes for the weights.
    let mut w = vec![0.0; n_points];
    for (i, &xi) in x.iter().enumerate() {
        let (mut p0, mut p1) = (1.0, xi);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * xi * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        w[i] = 2.0 / ((n * (n + 1)) as f64 * p1 * p1);
    }
    // Enforce exact symmetry about zero.
    for i in 0..n_points / 2 {
        let j = n_points - 1 - i;
        let xm = 0.5 * (x[j] - x[i]);
        x[i] = -xm;
        x[j] = xm;
        let wm = 0.5 * (w[i] + w[j]);
        w[i] = wm;
        w[j] = wm;
    }
    if n_points % 2 == 1 {
        x[n_points / 2] = 0.0;
    }
    x[0] = -1.0;
    x[n] = 1.0;
    (x, w)
}

/// Values of the Lagrange basis on `nodes` at point `x`.
pub fn lagrange_basis(nodes: &[f64], x: f64) -> Vec<f64> {
    let mut out = vec![1.0; nodes.len()];
    for (j, out_j) in out.iter_mut().enumerate() {
        for (k, &xk) in nodes.iter().enumerate() {
            if k != j {
                *out_j *= (x - xk) / (nodes[j] - xk);
            }
        }
    }
    out
}

/// Orthonormal Legendre polynomial of degree `k` on `[-1, 1]` at `x`.
fn legendre_normalized(k: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    let pk = match k {
        0 => 1.0,
        1 => x,
        _ => {
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    };
    pk * ((2 * k + 1) as f64 / 2.0).sqrt()
}

/// Nodal tensor-product reference square of polynomial order `P`.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    order: usize,
    nodes_1d: Vec<f64>,
    weights_1d: Vec<f64>,
    /// Row-major `(P+1) x (P+1)` differentiation matrix.
    diff_1d: Vec<f64>,
    /// Row-major nodal-to-modal (orthonormal Legendre) transform.
    to_modal_1d: Vec<f64>,
}

impl ReferenceElement {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 || order > 12 {
            return Err(Error::Config {
                path: "discretization.order".into(),
                message: format!("polynomial order must be in 1..=12, got {order}"),
            });
        }
        let n1 = order + 1;
        let (nodes_1d, weights_1d) = gll_nodes_weights(n1);

        let bary: Vec<f64> = (0..n1)
            .map(|j| {
                1.0 / (0..n1)
                    .filter(|&k| k != j)
                    .map(|k| nodes_1d[j] - nodes_1d[k])
                    .product::<f64>()
            })
            .collect();
        let mut diff_1d = vec![0.0; n1 * n1];
        for i in 0..n1 {
            let mut row_sum = 0.0;
            for j in 0..n1 {
                if i != j {
                    let d = (bary[j] / bary[i]) / (nodes_1d[i] - nodes_1d[j]);
                    diff_1d[i * n1 + j] = d;
                    row_sum += d;
                }
            }
            diff_1d[i * n1 + i] = -row_sum;
        }

        let vandermonde = DMatrix::from_fn(n1, n1, |i, k| legendre_normalized(k, nodes_1d[i]));
        let inv = vandermonde
            .try_inverse()
            .ok_or_else(|| Error::Linalg("singular Legendre Vandermonde matrix".into()))?;
        let to_modal_1d = (0..n1 * n1).map(|idx| inv[(idx / n1, idx % n1)]).collect();

        Ok(Self {
            order,
            nodes_1d,
            weights_1d,
            diff_1d,
            to_modal_1d,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Points per direction, `P + 1`.
    pub fn n1(&self) -> usize {
        self.order + 1
    }

    /// Nodes per element, `(P + 1)^2`.
    pub fn n_nodes(&self) -> usize {
        self.n1() * self.n1()
    }

    pub fn nodes_1d(&self) -> &[f64] {
        &self.nodes_1d
    }

    pub fn weights_1d(&self) -> &[f64] {
        &self.weights_1d
    }

    /// Entry `(i, j)` of the 1D differentiation matrix.
    #[inline]
    pub fn diff(&self, i: usize, j: usize) -> f64 {
        self.diff_1d[i * self.n1() + j]
    }

    pub fn diff_matrix(&self) -> &[f64] {
        &self.diff_1d
    }

    /// Reference coordinates `(xi, eta)` of node `k`.
    pub fn node_coords(&self, k: usize) -> [f64; 2] {
        let n1 = self.n1();
        [self.nodes_1d[k % n1], self.nodes_1d[k / n1]]
    }

    /// Diagonal of the local mass matrix of a square element of side `h`.
    pub fn local_mass_matrix(&self, h: f64) -> Vec<f64> {
        let n1 = self.n1();
        let jac = 0.25 * h * h;
        (0..self.n_nodes())
            .map(|k| jac * self.weights_1d[k % n1] * self.weights_1d[k / n1])
            .collect()
    }

    /// Physical gradient `(d/dx, d/dy)` of nodal values on an element of side `h`.
    pub fn gradient(&self, values: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
        let n1 = self.n1();
        let scale = 2.0 / h;
        let mut dx = vec![0.0; self.n_nodes()];
        let mut dy = vec![0.0; self.n_nodes()];
        for b in 0..n1 {
            for a in 0..n1 {
                let mut sx = 0.0;
                let mut sy = 0.0;
                for m in 0..n1 {
                    sx += self.diff(a, m) * values[m + n1 * b];
                    sy += self.diff(b, m) * values[a + n1 * m];
                }
                dx[a + n1 * b] = scale * sx;
                dy[a + n1 * b] = scale * sy;
            }
        }
        (dx, dy)
    }

    /// Node index of the `k`-th point of local face `face`, ordered by
    /// increasing `x` (faces 0, 2) or increasing `y` (faces 1, 3).
    #[inline]
    pub fn face_node(&self, face: usize, k: usize) -> usize {
        let n1 = self.n1();
        match face {
            0 => k,
            1 => (n1 - 1) + n1 * k,
            2 => k + n1 * (n1 - 1),
            _ => n1 * k,
        }
    }

    /// Face values of an element's nodal data.
    pub fn trace(&self, values: &[f64], face: usize) -> Result<Vec<f64>> {
        if face > 3 {
            return Err(Error::Dimension {
                expected: 4,
                found: face,
            });
        }
        Ok((0..self.n1())
            .map(|k| values[self.face_node(face, k)])
            .collect())
    }

    /// Orthonormal-Legendre tensor coefficients of nodal values, indexed like nodes.
    pub fn to_modal(&self, values: &[f64]) -> Vec<f64> {
        let n1 = self.n1();
        let mut tmp = vec![0.0; self.n_nodes()];
        for b in 0..n1 {
            for i in 0..n1 {
                tmp[i + n1 * b] = (0..n1)
                    .map(|a| self.to_modal_1d[i * n1 + a] * values[a + n1 * b])
                    .sum();
            }
        }
        let mut out = vec![0.0; self.n_nodes()];
        for j in 0..n1 {
            for i in 0..n1 {
                out[i + n1 * j] = (0..n1)
                    .map(|b| self.to_modal_1d[j * n1 + b] * tmp[i + n1 * b])
                    .sum();
            }
        }
        out
    }

    /// Interpolation weights of every node at reference point `(xi, eta)`.
    pub fn interpolation_weights(&self, xi: f64, eta: f64) -> Vec<f64> {
        let lx = lagrange_basis(&self.nodes_1d, xi);
        let ly = lagrange_basis(&self.nodes_1d, eta);
        let n1 = self.n1();
        (0..self.n_nodes()).map(|k| lx[k % n1] * ly[k / n1]).collect()
    }
}

/// Nodal DG data: per element, per variable, `(P+1)^2` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DGField {
    n_elements: usize,
    n_vars: usize,
    n_nodes: usize,
    data: Vec<f64>,
}

impl DGField {
    pub fn zeros(n_elements: usize, n_vars: usize, n_nodes: usize) -> Self {
        Self {
            n_elements,
            n_vars,
            n_nodes,
            data: vec![0.0; n_elements * n_vars * n_nodes],
        }
    }

    pub fn from_data(n_elements: usize, n_vars: usize, n_nodes: usize, data: Vec<f64>) -> Result<Self> {
        let expected = n_elements * n_vars * n_nodes;
        if data.len() != expected {
            return Err(Error::Dimension {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            n_elements,
            n_vars,
            n_nodes,
            data,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, e: usize, var: usize, node: usize) -> usize {
        (e * self.n_vars + var) * self.n_nodes + node
    }

    /// Nodal values of one variable in one element.
    pub fn element_var(&self, e: usize, var: usize) -> &[f64] {
        let start = self.index(e, var, 0);
        &self.data[start..start + self.n_nodes]
    }

    pub fn element_var_mut(&mut self, e: usize, var: usize) -> &mut [f64] {
        let start = self.index(e, var, 0);
        let n = self.n_nodes;
        &mut self.data[start..start + n]
    }

    /// All variables of one element, variable-major.
    pub fn element(&self, e: usize) -> &[f64] {
        let stride = self.n_vars * self.n_nodes;
        &self.data[e * stride..(e + 1) * stride]
    }

    /// Extract one variable as a DOF vector in element-major order.
    pub fn variable_dofs(&self, var: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_elements * self.n_nodes);
        for e in 0..self.n_elements {
            out.extend_from_slice(self.element_var(e, var));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Interpolate `f` at the nodes of every element.
pub fn l2_project(
    mesh: &QuadMesh,
    re: &ReferenceElement,
    n_vars: usize,
    f: impl Fn(f64, f64, &mut [f64]),
) -> DGField {
    let n_nodes = re.n_nodes();
    let mut field = DGField::zeros(mesh.n_elements(), n_vars, n_nodes);
    let mut buf = vec![0.0; n_vars];
    for e in 0..mesh.n_elements() {
        for k in 0..n_nodes {
            let [xi, eta] = re.node_coords(k);
            let [x, y] = mesh.map_to_physical(e, xi, eta);
            f(x, y, &mut buf);
            for (v, &val) in buf.iter().enumerate() {
                let idx = field.index(e, v, k);
                field.data[idx] = val;
            }
        }
    }
    field
}

/// Interpolate a scalar function.
pub fn l2_project_scalar(mesh: &QuadMesh, re: &ReferenceElement, f: impl Fn(f64, f64) -> f64) -> DGField {
    l2_project(mesh, re, 1, |x, y, out| out[0] = f(x, y))
}

/// L2 norm of `field[var] - f` over the mesh.
///
/// Evaluated with a GLL rule of `P + 3` points per direction so that the
/// interpolation error between nodes is seen.
pub fn l2_error(
    field: &DGField,
    var: usize,
    mesh: &QuadMesh,
    re: &ReferenceElement,
    f: impl Fn(f64, f64) -> f64,
) -> f64 {
    let nq = re.n1() + 2;
    let (qx, qw) = gll_nodes_weights(nq);
    let interp: Vec<Vec<f64>> = qx.iter().map(|&x| lagrange_basis(re.nodes_1d(), x)).collect();
    let n1 = re.n1();
    let jac = 0.25 * mesh.h() * mesh.h();
    let mut sum = 0.0;
    for e in 0..mesh.n_elements() {
        let vals = field.element_var(e, var);
        for (qb, lb) in interp.iter().enumerate() {
            for (qa, la) in interp.iter().enumerate() {
                let mut u = 0.0;
                for b in 0..n1 {
                    for a in 0..n1 {
                        u += la[a] * lb[b] * vals[a + n1 * b];
                    }
                }
                let [x, y] = mesh.map_to_physical(e, qx[qa], qx[qb]);
                let d = u - f(x, y);
                sum += jac * qw[qa] * qw[qb] * d * d;
            }
        }
    }
    sum.sqrt()
}

/// Precomputed point evaluation functional for a mesh location.
///
/// A broken DG field is multivalued on element faces; a point on a face or
/// vertex evaluates to the mean of the traces of all elements sharing it.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEvaluator {
    parts: Vec<(usize, Vec<f64>)>,
}

fn dot_nonzero(weights: &[f64], vals: &[f64]) -> f64 {
    // Exact at nodes: skip zero weights so a node hit returns the stored value bitwise.
    let mut s = 0.0;
    for (w, v) in weights.iter().zip(vals) {
        if *w != 0.0 {
            s += w * v;
        }
    }
    s
}

impl PointEvaluator {
    pub fn new(mesh: &QuadMesh, re: &ReferenceElement, x: f64, y: f64) -> Result<Self> {
        let parts = mesh
            .locate_all(x, y)?
            .into_iter()
            .map(|(e, [xi, eta])| (e, re.interpolation_weights(xi, eta)))
            .collect();
        Ok(Self { parts })
    }

    /// Elements sharing the point.
    pub fn elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.parts.iter().map(|(e, _)| *e)
    }

    /// Evaluate a scalar DOF vector laid out element-major.
    pub fn eval_dofs(&self, dofs: &[f64]) -> f64 {
        let sum: f64 = self
            .parts
            .iter()
            .map(|(e, w)| dot_nonzero(w, &dofs[e * w.len()..(e + 1) * w.len()]))
            .sum();
        sum / self.parts.len() as f64
    }

    /// Evaluate from nodal values produced per element by `fill(e, out)`.
    pub fn eval_with(&self, mut fill: impl FnMut(usize, &mut [f64])) -> f64 {
        let mut buf = vec![0.0; self.parts[0].1.len()];
        let mut sum = 0.0;
        for (e, w) in &self.parts {
            fill(*e, &mut buf);
            sum += dot_nonzero(w, &buf);
        }
        sum / self.parts.len() as f64
    }
}

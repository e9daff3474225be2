//! Linear density wave: uniform velocity and pressure, so the Euler
//! equations reduce to advection of density and the exact solution is a
//! shifted profile.

use coanda::dg::{l2_error, l2_project, DGField, ReferenceElement};
use coanda::mesh::build_periodic_mesh;
use coanda::physics::{ConservedState, GasModel, RoeOptions};
use coanda::solver::{ssprk3_step, stable_dt, BoundaryModel, Discretization, RkBuffers, Workspace};

const GAMMA: f64 = 1.4;
const U: [f64; 2] = [1.0, 0.5];
const K: f64 = std::f64::consts::PI / 2.0;

fn rho(x: f64, y: f64) -> f64 {
    1.0 + 0.1 * (K * x).sin() * (K * y).cos()
}

/// `-(u . grad) rho`
fn rho_rate(x: f64, y: f64) -> f64 {
    -0.1 * K * (U[0] * (K * x).cos() * (K * y).cos() - U[1] * (K * x).sin() * (K * y).sin())
}

/// L2 errors of the residual and of the solution marched to t = 1.
fn errors(order: usize, n: usize) -> (f64, f64) {
    let mesh = build_periodic_mesh([0.0, 0.0], 4.0, n).unwrap();
    let re = ReferenceElement::new(order).unwrap();
    let disc = Discretization {
        mesh: &mesh,
        re: &re,
        gas: GasModel::default().with_mu(0.0),
        boundary: BoundaryModel::Exact(ConservedState::from_primitive(1.0, U, 1.0, GAMMA)),
        viscous: false,
        c_ip: 4.0,
        roe: RoeOptions::default(),
        av: None,
    };
    let mut field = l2_project(&mesh, &re, 4, |x, y, out| {
        out.copy_from_slice(&ConservedState::from_primitive(rho(x, y), U, 1.0, GAMMA).to_array())
    });
    let mut ws = Workspace::new(&mesh, &re);
    let mut r = vec![0.0; field.data().len()];
    disc.residual(field.data(), &mut r, &mut ws).unwrap();
    let rate = DGField::from_data(mesh.n_elements(), 4, re.n_nodes(), r).unwrap();
    let e_res = l2_error(&rate, 0, &mesh, &re, rho_rate);

    let t_end = 1.0;
    let steps = (t_end / stable_dt(&disc, field.data(), 0.5)).ceil() as usize;
    let dt = t_end / steps as f64;
    let mut buf = RkBuffers::new(field.data().len());
    for _ in 0..steps {
        ssprk3_step(field.data_mut(), dt, &mut buf, |u, out| disc.residual(u, out, &mut ws)).unwrap();
    }
    let e_sol = l2_error(&field, 0, &mesh, &re, |x, y| rho(x - U[0] * t_end, y - U[1] * t_end));
    (e_res, e_sol)
}

#[test]
fn density_wave_orders() {
    for order in [2, 3] {
        let levels = [4, 8, 16, 32];
        let errs: Vec<(f64, f64)> = levels.iter().map(|&n| errors(order, n)).collect();
        for pair in errs.windows(2) {
            let res_rate = (pair[0].0 / pair[1].0).log2();
            let sol_rate = (pair[0].1 / pair[1].1).log2();
            // The nodal residual carries the O(h^P) truncation error of the
            // collocated derivative; the solution converges one order higher.
            assert!(res_rate >= order as f64 - 0.05, "P={order}: residual rate {res_rate}");
            assert!(sol_rate >= order as f64 + 0.5, "P={order}: solution rate {sol_rate}");
        }
    }
}

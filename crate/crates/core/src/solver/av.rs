//! Modal-decay shock sensor and element-wise artificial viscosity.

use serde::{Deserialize, Serialize};

use crate::dg::ReferenceElement;
use crate::mesh::QuadMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvParams {
    /// Sensor level (log10) at the centre of the activation ramp.
    pub s0: f64,
    /// Half-width of the ramp in log10 units.
    pub kappa: f64,
    /// Saturated viscosity is `c_max * h / (P + 1)`.
    pub c_max: f64,
}

impl Default for AvParams {
    fn default() -> Self {
        Self {
            s0: -6.0,
            kappa: 1.0,
            c_max: 0.5,
        }
    }
}

/// Smooth ramp: 0 below -1, 1 above 1, sinusoidal in between.
fn ramp(t: f64) -> f64 {
    if t <= -1.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 + (0.5 * std::f64::consts::PI * t).sin())
    }
}

/// log10 of the fraction of modal energy of `values` in the outermost shell
/// (modes with `max(i, j) = P`). `-inf` for fields without such content.
pub fn modal_sensor(values: &[f64], re: &ReferenceElement) -> f64 {
    let n1 = re.n1();
    let p = re.order();
    let modes = re.to_modal(values);
    let mut total = 0.0;
    let mut top = 0.0;
    for (k, c) in modes.iter().enumerate() {
        let e = c * c;
        total += e;
        if k % n1 == p || k / n1 == p {
            top += e;
        }
    }
    if total > 0.0 {
        (top / total).log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Artificial viscosity per element, driven by the density sensor.
pub fn artificial_viscosity(w: &[f64], mesh: &QuadMesh, re: &ReferenceElement, av: &AvParams) -> Vec<f64> {
    let nn = re.n_nodes();
    let mu_max = av.c_max * mesh.h() / re.n1() as f64;
    (0..mesh.n_elements())
        .map(|e| {
            let rho = &w[e * 4 * nn..e * 4 * nn + nn];
            let s = modal_sensor(rho, re);
            mu_max * ramp((s - av.s0) / av.kappa)
        })
        .collect()
}

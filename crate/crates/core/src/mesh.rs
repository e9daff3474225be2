//! Conforming all-square quadrilateral meshes.
//!
//! The channel mesh covers a symmetric sudden expansion: a narrow inlet
//! section followed by a wider outlet section, both centred on `y = 0`.
//! Every element is an axis-aligned square of side `h`, so the mesh is a
//! subset of a uniform lattice and element lookups are O(1).
//!
//! Local face numbering follows the counter-clockwise vertex order:
//! face 0 is the bottom edge (`eta = -1`), 1 the right edge (`xi = +1`),
//! 2 the top edge (`eta = +1`) and 3 the left edge (`xi = -1`).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Outward unit normal of each local face.
pub const FACE_NORMALS: [[f64; 2]; 4] = [[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];

/// Relative tolerance used when checking that extents are multiples of `h`.
const COMMENSURATE_TOL: f64 = 1e-9;

/// Dimensions of the symmetric sudden-expansion channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelGeometry {
    pub inlet_length: f64,
    pub inlet_half_width: f64,
    pub outlet_length: f64,
    pub expansion_half_width: f64,
}

impl Default for ChannelGeometry {
    fn default() -> Self {
        Self {
            inlet_length: 10.0,
            inlet_half_width: 1.25,
            outlet_length: 40.0,
            expansion_half_width: 3.75,
        }
    }
}

impl ChannelGeometry {
    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("inlet_length", self.inlet_length),
            ("inlet_half_width", self.inlet_half_width),
            ("outlet_length", self.outlet_length),
            ("expansion_half_width", self.expansion_half_width),
        ];
        for (name, v) in extents {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Mesh(format!("{name} must be positive, got {v}")));
            }
        }
        if self.inlet_half_width >= self.expansion_half_width {
            return Err(Error::Mesh(format!(
                "inlet half-width {} must be smaller than expansion half-width {}",
                self.inlet_half_width, self.expansion_half_width
            )));
        }
        Ok(())
    }

    pub fn inlet_width(&self) -> f64 {
        2.0 * self.inlet_half_width
    }

    pub fn total_length(&self) -> f64 {
        self.inlet_length + self.outlet_length
    }

    pub fn area(&self) -> f64 {
        2.0 * self.inlet_half_width * self.inlet_length
            + 2.0 * self.expansion_half_width * self.outlet_length
    }

    /// Whether `(x, y)` lies in the closed domain.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if x < 0.0 || x > self.total_length() {
            return false;
        }
        if x <= self.inlet_length && y.abs() <= self.inlet_half_width {
            return true;
        }
        x >= self.inlet_length && y.abs() <= self.expansion_half_width
    }

    /// Euclidean distance from an interior point to the nearest wall segment.
    pub fn wall_distance(&self, x: f64, y: f64) -> f64 {
        let (li, hi, he) = (self.inlet_length, self.inlet_half_width, self.expansion_half_width);
        let lt = self.total_length();
        let segments = [
            ([0.0, hi], [li, hi]),
            ([0.0, -hi], [li, -hi]),
            ([li, hi], [li, he]),
            ([li, -hi], [li, -he]),
            ([li, he], [lt, he]),
            ([li, -he], [lt, -he]),
        ];
        segments
            .iter()
            .map(|(a, b)| segment_distance([x, y], *a, *b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Inlet,
    Outlet,
    Wall,
}

/// A face shared by two elements. `left` is always the lower element index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteriorFace {
    pub left: usize,
    pub left_face: usize,
    pub right: usize,
    pub right_face: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFace {
    pub element: usize,
    pub face: usize,
    pub tag: BoundaryTag,
}

/// What lies across a local element face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceLink {
    Interior { element: usize, face: usize },
    Boundary(BoundaryTag),
}

/// Uniform lattice underlying a mesh: cell `(i, j)` maps to an element.
#[derive(Debug, Clone, PartialEq)]
struct Lattice {
    x0: f64,
    y0: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Option<usize>>,
}

impl Lattice {
    fn get(&self, i: i64, j: i64) -> Option<usize> {
        if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
            return None;
        }
        self.cells[j as usize * self.nx + i as usize]
    }
}

/// Conforming mesh of identical axis-aligned squares.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    h: f64,
    vertices: Vec<[f64; 2]>,
    elements: Vec<[usize; 4]>,
    interior_faces: Vec<InteriorFace>,
    boundary_faces: Vec<BoundaryFace>,
    links: Vec<[FaceLink; 4]>,
    lattice: Lattice,
}

/// On-disk mesh document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshDocument {
    pub h: f64,
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 4]>,
    pub interior_faces: Vec<[usize; 4]>,
    pub boundary_faces: Vec<BoundaryFace>,
}

/// Build the sudden-expansion channel mesh with `n_y` elements across the inlet.
pub fn build_channel_mesh(geometry: &ChannelGeometry, n_y: usize) -> Result<QuadMesh> {
    geometry.validate()?;
    if n_y < 2 {
        return Err(Error::Mesh(format!("n_y must be at least 2, got {n_y}")));
    }
    let h = geometry.inlet_width() / n_y as f64;
    let count = |name: &str, extent: f64| -> Result<usize> {
        let k = extent / h;
        let r = k.round();
        if r < 1.0 || (k - r).abs() > COMMENSURATE_TOL * k.max(1.0) {
            return Err(Error::Mesh(format!(
                "{name} = {extent} is not an integer multiple of h = {h} (n_y = {n_y})"
            )));
        }
        Ok(r as usize)
    };
    let nx_in = count("inlet_length", geometry.inlet_length)?;
    let nx_out = count("outlet_length", geometry.outlet_length)?;
    let ny_total = count("expansion width", 2.0 * geometry.expansion_half_width)?;
    let step = count(
        "expansion step",
        geometry.expansion_half_width - geometry.inlet_half_width,
    )?;
    debug_assert_eq!(ny_total, 2 * step + n_y);

    let nx = nx_in + nx_out;
    let x0 = 0.0;
    let y0 = -geometry.expansion_half_width;
    let inside = |i: usize, j: usize| i >= nx_in || (j >= step && j < step + n_y);

    let total_length = geometry.total_length();
    let builder = LatticeBuilder {
        x0,
        y0,
        h,
        nx,
        ny: ny_total,
        periodic: false,
    };
    let mesh = builder.build(inside, |_, face, x_mid, _| {
        let on_inlet = face == 3 && x_mid.abs() <= 1e-12 * total_length;
        let on_outlet = face == 1 && (x_mid - total_length).abs() <= 1e-12 * total_length;
        if on_inlet {
            BoundaryTag::Inlet
        } else if on_outlet {
            BoundaryTag::Outlet
        } else {
            BoundaryTag::Wall
        }
    });
    Ok(mesh)
}

/// Doubly periodic `n × n` square mesh on `[origin, origin + length]²`.
pub fn build_periodic_mesh(origin: [f64; 2], length: f64, n: usize) -> Result<QuadMesh> {
    if n < 2 || !(length > 0.0) {
        return Err(Error::Mesh(format!(
            "periodic mesh needs n >= 2 and positive length, got n = {n}, length = {length}"
        )));
    }
    let builder = LatticeBuilder {
        x0: origin[0],
        y0: origin[1],
        h: length / n as f64,
        nx: n,
        ny: n,
        periodic: true,
    };
    Ok(builder.build(|_, _| true, |_, _, _, _| BoundaryTag::Wall))
}

struct LatticeBuilder {
    x0: f64,
    y0: f64,
    h: f64,
    nx: usize,
    ny: usize,
    periodic: bool,
}

impl LatticeBuilder {
    fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h]
    }

    fn build(
        &self,
        inside: impl Fn(usize, usize) -> bool,
        tag: impl Fn(usize, usize, f64, f64) -> BoundaryTag,
    ) -> QuadMesh {
        let (nx, ny) = (self.nx, self.ny);
        let mut cells = vec![None; nx * ny];
        let mut cell_ij = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if inside(i, j) {
                    cells[j * nx + i] = Some(cell_ij.len());
                    cell_ij.push((i, j));
                }
            }
        }

        let mut vertex_id = vec![usize::MAX; (nx + 1) * (ny + 1)];
        let mut vertices = Vec::new();
        let mut elements = Vec::with_capacity(cell_ij.len());
        for &(i, j) in &cell_ij {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let mut ids = [0usize; 4];
            for (k, &(vi, vj)) in corners.iter().enumerate() {
                let slot = vj * (nx + 1) + vi;
                if vertex_id[slot] == usize::MAX {
                    vertex_id[slot] = vertices.len();
                    vertices.push(self.coord(vi, vj));
                }
                ids[k] = vertex_id[slot];
            }
            elements.push(ids);
        }

        let lattice = Lattice {
            x0: self.x0,
            y0: self.y0,
            nx,
            ny,
            cells,
        };
        // (di, dj) offset of the neighbour across each local face, and the
        // matching face on the neighbour.
        let offsets: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
        let mut links = Vec::with_capacity(cell_ij.len());
        let mut interior_faces = Vec::new();
        let mut boundary_faces = Vec::new();
        for (e, &(i, j)) in cell_ij.iter().enumerate() {
            let mut row = [FaceLink::Boundary(BoundaryTag::Wall); 4];
            for (f, &(di, dj)) in offsets.iter().enumerate() {
                let (mut ni, mut nj) = (i as i64 + di, j as i64 + dj);
                if self.periodic {
                    ni = ni.rem_euclid(nx as i64);
                    nj = nj.rem_euclid(ny as i64);
                }
                let opposite = (f + 2) % 4;
                match lattice.get(ni, nj) {
                    Some(other) => {
                        row[f] = FaceLink::Interior {
                            element: other,
                            face: opposite,
                        };
                        if e < other || (e == other && f < opposite) {
                            interior_faces.push(InteriorFace {
                                left: e,
                                left_face: f,
                                right: other,
                                right_face: opposite,
                            });
                        }
                    }
                    None => {
                        let [xa, ya] = self.coord(i, j);
                        let mid = match f {
                            0 => (xa + 0.5 * self.h, ya),
                            1 => (xa + self.h, ya + 0.5 * self.h),
                            2 => (xa + 0.5 * self.h, ya + self.h),
                            _ => (xa, ya + 0.5 * self.h),
                        };
                        let t = tag(e, f, mid.0, mid.1);
                        row[f] = FaceLink::Boundary(t);
                        boundary_faces.push(BoundaryFace {
                            element: e,
                            face: f,
                            tag: t,
                        });
                    }
                }
            }
            links.push(row);
        }

        QuadMesh {
            h: self.h,
            vertices,
            elements,
            interior_faces,
            boundary_faces,
            links,
            lattice,
        }
    }
}

impl QuadMesh {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    /// Neighbour information for each local face of element `e`.
    pub fn links(&self, e: usize) -> &[FaceLink; 4] {
        &self.links[e]
    }

    /// Lower-left corner of element `e`.
    pub fn origin(&self, e: usize) -> [f64; 2] {
        self.vertices[self.elements[e][0]]
    }

    pub fn center(&self, e: usize) -> [f64; 2] {
        let [x, y] = self.origin(e);
        [x + 0.5 * self.h, y + 0.5 * self.h]
    }

    /// Physical coordinates of reference point `(xi, eta)` in element `e`.
    pub fn map_to_physical(&self, e: usize, xi: f64, eta: f64) -> [f64; 2] {
        let [x0, y0] = self.origin(e);
        [x0 + 0.5 * (xi + 1.0) * self.h, y0 + 0.5 * (eta + 1.0) * self.h]
    }

    /// Sum of element areas.
    pub fn area(&self) -> f64 {
        self.elements.len() as f64 * self.h * self.h
    }

    /// Find the element containing `(x, y)` and the reference coordinates of
    /// the point. Points on shared faces resolve to the lowest element index.
    pub fn locate_point(&self, x: f64, y: f64) -> Result<(usize, [f64; 2])> {
        Ok(self.locate_all(x, y)?[0])
    }

    /// Every element whose closure contains the point, ascending by index,
    /// with the reference coordinates of the point in each.
    pub fn locate_all(&self, x: f64, y: f64) -> Result<Vec<(usize, [f64; 2])>> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::OutsideDomain { x, y });
        }
        let lat = &self.lattice;
        let tol = 1e-12 * (1.0 + x.abs().max(y.abs())) / self.h;
        let fx = (x - lat.x0) / self.h;
        let fy = (y - lat.y0) / self.h;
        let mut hits = Vec::new();
        for i in [fx.floor() as i64 - 1, fx.floor() as i64, fx.floor() as i64 + 1] {
            for j in [fy.floor() as i64 - 1, fy.floor() as i64, fy.floor() as i64 + 1] {
                let inside_cell = fx >= i as f64 - tol
                    && fx <= (i + 1) as f64 + tol
                    && fy >= j as f64 - tol
                    && fy <= (j + 1) as f64 + tol;
                if !inside_cell {
                    continue;
                }
                if let Some(e) = lat.get(i, j) {
                    hits.push(e);
                }
            }
        }
        if hits.is_empty() {
            return Err(Error::OutsideDomain { x, y });
        }
        hits.sort_unstable();
        hits.dedup();
        let to_ref = |v: f64| {
            let r = 2.0 * v / self.h - 1.0;
            if (r - 1.0).abs() <= 1e-12 {
                1.0
            } else if (r + 1.0).abs() <= 1e-12 {
                -1.0
            } else {
                r.clamp(-1.0, 1.0)
            }
        };
        Ok(hits
            .into_iter()
            .map(|e| {
                let [x0, y0] = self.origin(e);
                (e, [to_ref(x - x0), to_ref(y - y0)])
            })
            .collect())
    }

    /// Element occupying the lattice cell mirrored about `y = y_mid` of the
    /// bounding lattice, if any.
    pub fn mirror_element(&self, e: usize) -> Option<usize> {
        let [x, y] = self.center(e);
        let lat = &self.lattice;
        let i = ((x - lat.x0) / self.h).floor() as i64;
        let j = ((y - lat.y0) / self.h).floor() as i64;
        lat.get(i, lat.ny as i64 - 1 - j)
    }

    pub fn to_document(&self) -> MeshDocument {
        MeshDocument {
            h: self.h,
            vertices: self.vertices.clone(),
            elements: self.elements.clone(),
            interior_faces: self
                .interior_faces
                .iter()
                .map(|f| [f.left, f.left_face, f.right, f.right_face])
                .collect(),
            boundary_faces: self.boundary_faces.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("mesh serialises")
    }

    /// Stable content hash of the mesh (hex SHA-256 of its JSON document).
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_document()).expect("mesh serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

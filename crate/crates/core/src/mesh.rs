//! Structured tetrahedral meshes for the parametric test geometries.
//!
//! Two generators are provided: a rectangular bar with an optional double
//! notch (a strain concentrator made by removing element columns over a
//! y-interval) and a plus-shaped cruciform for biaxial loading. Hexahedral
//! cells are split into six positively-oriented tetrahedra each, which keeps
//! the subdivision uniform across neighboring cells.
//!
//! Boundary faces are tagged by coordinate extremes of the bounding box:
//! the minimal-y face (and for the cruciform also the minimal-x face) is the
//! Dirichlet surface, the maximal-y (and maximal-x) face carries traction,
//! and the maximal-z face is where surface displacement data lives.

use std::collections::HashMap;
use std::io::Write;

use crate::{Error, Result};

/// Degrees of freedom per node: three displacement components plus pressure.
pub const DOFS_PER_NODE: usize = 4;
/// Element degrees of freedom: 4 nodes x (3 displacement + 1 pressure).
pub const ELEM_DOFS: usize = 16;

/// Which boundary group a tagged face belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceSet {
    /// Homogeneous displacement boundary.
    Dirichlet,
    /// Traction in the y-direction (`h = [0, h_y, 0]`).
    TractionY,
    /// Traction in the x-direction (`h = [h_x, 0, 0]`), biaxial runs only.
    TractionX,
    /// The surface where displacement data is defined (maximal z).
    Dic,
}

/// A boundary triangle: three node ids plus the element that owns it.
#[derive(Clone, Debug)]
pub struct BoundaryFace {
    pub nodes: [usize; 3],
    pub element: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    /// Reference-configuration coordinates.
    pub coords: Vec<[f64; 3]>,
    /// Tetrahedra as 4-tuples of node indices, positively oriented.
    pub tets: Vec<[usize; 4]>,
    pub elem_volume: Vec<f64>,
    pub dirichlet: Vec<BoundaryFace>,
    pub traction_y: Vec<BoundaryFace>,
    pub traction_x: Vec<BoundaryFace>,
    pub dic: Vec<BoundaryFace>,
    /// Boundary triangles not in any named set.
    pub free_surface: Vec<BoundaryFace>,
    /// Exact volume of the generated domain, for validation.
    pub analytic_volume: f64,
}

/// Optional notch for [`generate_bar`]: element columns whose centers fall in
/// `y0..y1` and within `depth_fraction * extent_x` of either x-face are
/// removed, creating a reduced cross-section.
#[derive(Clone, Copy, Debug)]
pub struct Notch {
    pub y0: f64,
    pub y1: f64,
    pub depth_fraction: f64,
}

fn tet_volume(coords: &[[f64; 3]], tet: &[usize; 4]) -> f64 {
    let a = coords[tet[0]];
    let b = coords[tet[1]];
    let c = coords[tet[2]];
    let d = coords[tet[3]];
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
    let cx = v[1] * w[2] - v[2] * w[1];
    let cy = v[2] * w[0] - v[0] * w[2];
    let cz = v[0] * w[1] - v[1] * w[0];
    (u[0] * cx + u[1] * cy + u[2] * cz) / 6.0
}

/// The six permutations of (x, y, z) that partition a hex into tetrahedra
/// sharing the main diagonal v0-v7. Vertices are bit codes into the hex
/// corner array; each row is ordered for positive volume.
const HEX_TO_TETS: [[usize; 4]; 6] = [
    [0b000, 0b001, 0b011, 0b111],
    [0b000, 0b011, 0b010, 0b111],
    [0b000, 0b010, 0b110, 0b111],
    [0b000, 0b110, 0b100, 0b111],
    [0b000, 0b100, 0b101, 0b111],
    [0b000, 0b101, 0b001, 0b111],
];

struct GridBuilder {
    nx: usize,
    ny: usize,
    nz: usize,
    hx: f64,
    hy: f64,
    hz: f64,
    origin: [f64; 3],
    /// Hex cells kept (cell index -> keep flag).
    keep: Vec<bool>,
}

impl GridBuilder {
    fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    fn node_key(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.ny + 1) + j) * (self.nx + 1) + i
    }

    fn node_coord(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.hx,
            self.origin[1] + j as f64 * self.hy,
            self.origin[2] + k as f64 * self.hz,
        ]
    }

    fn build(&self) -> (Vec<[f64; 3]>, Vec<[usize; 4]>) {
        // compact node numbering over referenced nodes only
        let mut node_of_key: HashMap<usize, usize> = HashMap::new();
        let mut coords = Vec::new();
        let mut tets = Vec::new();
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    if !self.keep[self.cell_index(i, j, k)] {
                        continue;
                    }
                    let corner_keys: [usize; 8] = std::array::from_fn(|b| {
                        self.node_key(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1))
                    });
                    let corner_ids: [usize; 8] = std::array::from_fn(|b| {
                        let key = corner_keys[b];
                        *node_of_key.entry(key).or_insert_with(|| {
                            let bits = (b & 1, (b >> 1) & 1, (b >> 2) & 1);
                            coords.push(self.node_coord(i + bits.0, j + bits.1, k + bits.2));
                            coords.len() - 1
                        })
                    });
                    for tet in &HEX_TO_TETS {
                        tets.push([
                            corner_ids[tet[0]],
                            corner_ids[tet[1]],
                            corner_ids[tet[2]],
                            corner_ids[tet[3]],
                        ]);
                    }
                }
            }
        }
        (coords, tets)
    }
}

/// Extracts boundary triangles (faces referenced by exactly one tet) and
/// sorts them into the named sets by coordinate-plane membership.
fn classify_boundary(
    coords: &[[f64; 3]],
    tets: &[[usize; 4]],
    dirichlet_planes: &[(usize, f64)],
    traction_y_plane: f64,
    traction_x_plane: Option<f64>,
    dic_plane: f64,
) -> (
    Vec<BoundaryFace>,
    Vec<BoundaryFace>,
    Vec<BoundaryFace>,
    Vec<BoundaryFace>,
    Vec<BoundaryFace>,
) {
    const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
    let mut counter: HashMap<[usize; 3], (usize, [usize; 3], usize)> = HashMap::new();
    for (e, tet) in tets.iter().enumerate() {
        for f in &FACES {
            let tri = [tet[f[0]], tet[f[1]], tet[f[2]]];
            let mut key = tri;
            key.sort_unstable();
            let entry = counter.entry(key).or_insert((0, tri, e));
            entry.0 += 1;
        }
    }
    // faces referenced by exactly one tet are the boundary; sort so the
    // classification order is independent of hash iteration
    let mut boundary: Vec<(usize, [usize; 3])> = counter
        .into_values()
        .filter(|&(count, _, _)| count == 1)
        .map(|(_, tri, elem)| (elem, tri))
        .collect();
    boundary.sort_unstable();

    let tol = 1e-9;
    let on_plane = |nodes: &[usize; 3], axis: usize, value: f64| {
        nodes.iter().all(|&n| (coords[n][axis] - value).abs() < tol)
    };

    let mut dirichlet = Vec::new();
    let mut traction_y = Vec::new();
    let mut traction_x = Vec::new();
    let mut dic = Vec::new();
    let mut free = Vec::new();
    for (elem, tri) in boundary {
        let face = BoundaryFace {
            nodes: tri,
            element: elem,
        };
        if dirichlet_planes
            .iter()
            .any(|&(axis, v)| on_plane(&tri, axis, v))
        {
            dirichlet.push(face);
        } else if on_plane(&tri, 1, traction_y_plane) {
            traction_y.push(face);
        } else if traction_x_plane.is_some_and(|v| on_plane(&tri, 0, v)) {
            traction_x.push(face);
        } else if on_plane(&tri, 2, dic_plane) {
            dic.push(face);
        } else {
            free.push(face);
        }
    }
    (dirichlet, traction_y, traction_x, dic, free)
}

fn validate(mesh: &Mesh) -> Result<()> {
    for (e, tet) in mesh.tets.iter().enumerate() {
        if mesh.elem_volume[e] <= 0.0 {
            return Err(Error::Mesh(format!(
                "tet {e} has non-positive volume {} (nodes {tet:?})",
                mesh.elem_volume[e]
            )));
        }
    }
    let total: f64 = mesh.elem_volume.iter().sum();
    let rel = ((total - mesh.analytic_volume) / mesh.analytic_volume).abs();
    if rel > 1e-12 {
        return Err(Error::Mesh(format!(
            "mesh volume {total} deviates from analytic volume {} by {rel:.3e}",
            mesh.analytic_volume
        )));
    }
    Ok(())
}

/// Generates a structured bar `[0, Lx] x [0, Ly] x [0, Lz]` with the given
/// cell divisions and an optional double notch.
pub fn generate_bar(
    extents: [f64; 3],
    divisions: [usize; 3],
    notch: Option<Notch>,
) -> Result<Mesh> {
    if extents.iter().any(|&e| e <= 0.0) || divisions.iter().any(|&d| d == 0) {
        return Err(Error::Mesh(
            "bar extents and divisions must be positive".into(),
        ));
    }
    let [nx, ny, nz] = divisions;
    let hx = extents[0] / nx as f64;
    let hy = extents[1] / ny as f64;
    let hz = extents[2] / nz as f64;

    let mut keep = vec![true; nx * ny * nz];
    let mut removed = 0usize;
    if let Some(n) = notch {
        if !(n.y0 < n.y1) || n.y0 < 0.0 || n.y1 > extents[1] {
            return Err(Error::Mesh("notch interval must lie inside the bar".into()));
        }
        if n.depth_fraction <= 0.0 || 2.0 * n.depth_fraction >= 1.0 {
            return Err(Error::Mesh(
                "notch depth must leave a positive cross-section".into(),
            ));
        }
        let depth = n.depth_fraction * extents[0];
        let mut any_column_removed = false;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let xc = (i as f64 + 0.5) * hx;
                    let yc = (j as f64 + 0.5) * hy;
                    let near_face = xc < depth || xc > extents[0] - depth;
                    if yc > n.y0 && yc < n.y1 && near_face {
                        keep[(k * ny + j) * nx + i] = false;
                        removed += 1;
                        any_column_removed = true;
                    }
                }
            }
        }
        // a notch that removes an entire cross-section disconnects the bar
        for j in 0..ny {
            let all_gone = (0..nz).all(|k| (0..nx).all(|i| !keep[(k * ny + j) * nx + i]));
            if all_gone {
                return Err(Error::Mesh(
                    "notch removes a full cross-section; the bar is disconnected".into(),
                ));
            }
        }
        if !any_column_removed {
            return Err(Error::Mesh(
                "notch parameters remove no elements; widen the interval or deepen it".into(),
            ));
        }
    }

    let builder = GridBuilder {
        nx,
        ny,
        nz,
        hx,
        hy,
        hz,
        origin: [0.0, 0.0, 0.0],
        keep,
    };
    let (coords, tets) = builder.build();
    let elem_volume: Vec<f64> = tets.iter().map(|t| tet_volume(&coords, t)).collect();
    let (dirichlet, traction_y, traction_x, dic, free_surface) = classify_boundary(
        &coords,
        &tets,
        &[(1, 0.0)],
        extents[1],
        None,
        extents[2],
    );
    let analytic_volume =
        extents[0] * extents[1] * extents[2] - removed as f64 * hx * hy * hz;
    let mesh = Mesh {
        coords,
        tets,
        elem_volume,
        dirichlet,
        traction_y,
        traction_x,
        dic,
        free_surface,
        analytic_volume,
    };
    validate(&mesh)?;
    Ok(mesh)
}

/// Generates a plus-shaped cruciform: the union of `{|x| <= L, |y| <= w}` and
/// `{|x| <= w, |y| <= L}` extruded over `[0, thickness]`.
///
/// `divisions = (n_xy, n_z)` where `n_xy` counts cells across the full
/// `[-L, L]` span and must align cell boundaries with the arm half-width.
pub fn generate_cruciform(
    arm_half_width: f64,
    arm_length: f64,
    thickness: f64,
    divisions: (usize, usize),
) -> Result<Mesh> {
    let (nxy, nz) = divisions;
    if arm_half_width <= 0.0 || arm_length <= arm_half_width || thickness <= 0.0 || nxy == 0 || nz == 0
    {
        return Err(Error::Mesh(
            "cruciform requires 0 < arm_half_width < arm_length, positive thickness and divisions"
                .into(),
        ));
    }
    let h = 2.0 * arm_length / nxy as f64;
    let cells_to_arm = arm_half_width / h;
    if (cells_to_arm - cells_to_arm.round()).abs() > 1e-9 || cells_to_arm.round() < 1.0 {
        return Err(Error::Mesh(format!(
            "arm half-width {arm_half_width} is not a whole number of cells (cell size {h})"
        )));
    }

    let mut keep = vec![false; nxy * nxy * nz];
    for k in 0..nz {
        for j in 0..nxy {
            for i in 0..nxy {
                let xc = -arm_length + (i as f64 + 0.5) * h;
                let yc = -arm_length + (j as f64 + 0.5) * h;
                let inside = xc.abs() < arm_half_width || yc.abs() < arm_half_width;
                keep[(k * nxy + j) * nxy + i] = inside;
            }
        }
    }

    let builder = GridBuilder {
        nx: nxy,
        ny: nxy,
        nz,
        hx: h,
        hy: h,
        hz: thickness / nz as f64,
        origin: [-arm_length, -arm_length, 0.0],
        keep,
    };
    let (coords, tets) = builder.build();
    let elem_volume: Vec<f64> = tets.iter().map(|t| tet_volume(&coords, t)).collect();
    let (dirichlet, traction_y, traction_x, dic, free_surface) = classify_boundary(
        &coords,
        &tets,
        &[(1, -arm_length), (0, -arm_length)],
        arm_length,
        Some(arm_length),
        thickness,
    );
    let (l, w) = (arm_length, arm_half_width);
    let analytic_volume = (8.0 * l * w - 4.0 * w * w) * thickness;
    let mesh = Mesh {
        coords,
        tets,
        elem_volume,
        dirichlet,
        traction_x,
        traction_y,
        dic,
        free_surface,
        analytic_volume,
    };
    validate(&mesh)?;
    Ok(mesh)
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elements(&self) -> usize {
        self.tets.len()
    }

    pub fn n_dofs(&self) -> usize {
        DOFS_PER_NODE * self.n_nodes()
    }

    /// Global dof index of `component` (0..2 displacement, 3 pressure) at a
    /// node; node-major ordering.
    #[inline]
    pub fn dof(&self, node: usize, component: usize) -> usize {
        DOFS_PER_NODE * node + component
    }

    /// Element dof map: 16 global indices in node-major (ux, uy, uz, p)
    /// order.
    pub fn element_dofs(&self, element: usize) -> [usize; ELEM_DOFS] {
        let tet = &self.tets[element];
        std::array::from_fn(|l| self.dof(tet[l / DOFS_PER_NODE], l % DOFS_PER_NODE))
    }

    /// Collects element-local dofs from a global vector.
    pub fn gather(&self, global: &[f64], element: usize) -> [f64; ELEM_DOFS] {
        let map = self.element_dofs(element);
        std::array::from_fn(|l| global[map[l]])
    }

    /// Adds element-local values into a global vector.
    pub fn scatter_add(&self, global: &mut [f64], element: usize, local: &[f64; ELEM_DOFS]) {
        let map = self.element_dofs(element);
        for l in 0..ELEM_DOFS {
            global[map[l]] += local[l];
        }
    }

    /// Global dof indices held fixed by the homogeneous Dirichlet boundary
    /// (all three displacement components of every Dirichlet-face node),
    /// sorted and deduplicated.
    pub fn fixed_dofs(&self) -> Vec<usize> {
        let mut fixed: Vec<usize> = self
            .dirichlet
            .iter()
            .flat_map(|f| f.nodes)
            .flat_map(|n| (0..3).map(move |c| DOFS_PER_NODE * n + c))
            .collect();
        fixed.sort_unstable();
        fixed.dedup();
        fixed
    }

    /// Node ids on the data surface, sorted.
    pub fn dic_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self.dic.iter().flat_map(|f| f.nodes).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// Reference-configuration area of a boundary triangle.
    pub fn face_area(&self, face: &BoundaryFace) -> f64 {
        let [a, b, c] = face.nodes.map(|n| self.coords[n]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cx = u[1] * v[2] - u[2] * v[1];
        let cy = u[2] * v[0] - u[0] * v[2];
        let cz = u[0] * v[1] - u[1] * v[0];
        0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
    }

    /// Content hash of the reference geometry, recorded in data files so a
    /// dataset cannot silently be used with a different mesh.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for c in &self.coords {
            for v in c {
                hasher.update(v.to_le_bytes());
            }
        }
        for t in &self.tets {
            for n in t {
                hasher.update((*n as u64).to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the mesh with nodal displacement/pressure and per-element
    /// equivalent plastic strain as a legacy-VTK-style text file (see
    /// `docs/file-formats.md`).
    pub fn write_vtk(
        &self,
        path: &std::path::Path,
        displacement_pressure: Option<&[f64]>,
        alpha: Option<&[f64]>,
    ) -> Result<()> {
        let mut out = String::new();
        out.push_str("# vtk DataFile Version 3.0\n");
        out.push_str("epcal field output\nASCII\nDATASET UNSTRUCTURED_GRID\n");
        out.push_str(&format!("POINTS {} double\n", self.n_nodes()));
        for c in &self.coords {
            out.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", c[0], c[1], c[2]));
        }
        out.push_str(&format!(
            "CELLS {} {}\n",
            self.n_elements(),
            5 * self.n_elements()
        ));
        for t in &self.tets {
            out.push_str(&format!("4 {} {} {} {}\n", t[0], t[1], t[2], t[3]));
        }
        out.push_str(&format!("CELL_TYPES {}\n", self.n_elements()));
        for _ in &self.tets {
            out.push_str("10\n");
        }
        if let Some(u) = displacement_pressure {
            assert_eq!(u.len(), self.n_dofs());
            out.push_str(&format!("POINT_DATA {}\n", self.n_nodes()));
            out.push_str("VECTORS displacement double\n");
            for n in 0..self.n_nodes() {
                out.push_str(&format!(
                    "{:.17e} {:.17e} {:.17e}\n",
                    u[self.dof(n, 0)],
                    u[self.dof(n, 1)],
                    u[self.dof(n, 2)]
                ));
            }
            out.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
            for n in 0..self.n_nodes() {
                out.push_str(&format!("{:.17e}\n", u[self.dof(n, 3)]));
            }
        }
        if let Some(a) = alpha {
            assert_eq!(a.len(), self.n_elements());
            out.push_str(&format!("CELL_DATA {}\n", self.n_elements()));
            out.push_str("SCALARS eqps double 1\nLOOKUP_TABLE default\n");
            for v in a {
                out.push_str(&format!("{v:.17e}\n"));
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }
}

//! Closed simplicial meshes of the catalog surfaces.
//!
//! Vertices always lie on the surface. Two-dimensional implicit surfaces start from the
//! icosahedron, three-dimensional ones from the boundary of the 16-cell, and both are refined
//! by edge midpoints pushed back onto the surface. Tori are structured grids on the parameter
//! square; every element keeps unwrapped parameters at its corners so interpolation never
//! crosses the chart seam.

mod quadrature;

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::immersion::{sample_geometry, Flavor, GeometrySample, SurfaceKind, SurfacePoint, SurfaceSpec};
use crate::scalar::{factorial, Real};

pub use quadrature::{quadrature, QuadratureRule};

/// Grid cells per direction on a level-0 torus.
pub const DEFAULT_TORUS_BASE: usize = 8;

const MIN_MEASURE: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct SimplicialMesh<T: Real> {
    surface: SurfaceSpec<T>,
    coord_dim: usize,
    vertices: Vec<T>,
    /// Wrapped chart parameters per vertex (parametric surfaces).
    params: Option<Vec<T>>,
    elements: Vec<usize>,
    /// Unwrapped chart parameters per element corner (parametric surfaces).
    corner_params: Option<Vec<T>>,
    /// Elements whose first two vertices were exchanged to orient them outward. Refinement
    /// undoes the exchange so children follow the parent's vertex order.
    swapped: Vec<bool>,
    level: usize,
}

impl<T: Real> SimplicialMesh<T> {
    pub fn surface(&self) -> &SurfaceSpec<T> {
        &self.surface
    }

    pub fn dim(&self) -> usize {
        self.surface.dim()
    }

    /// Number of Cartesian coordinates per vertex.
    pub fn coord_dim(&self) -> usize {
        self.coord_dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len() / self.coord_dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (self.dim() + 1)
    }

    pub fn vertex(&self, i: usize) -> &[T] {
        &self.vertices[i * self.coord_dim..(i + 1) * self.coord_dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.dim() + 1;
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn vertex_params(&self, i: usize) -> Option<&[T]> {
        let n = self.dim();
        self.params.as_ref().map(|p| &p[i * n..(i + 1) * n])
    }

    /// Unwrapped chart parameters of the corners of element `e`, `dim` values per corner.
    pub fn corner_params(&self, e: usize) -> Option<&[T]> {
        let stride = (self.dim() + 1) * self.dim();
        self.corner_params
            .as_ref()
            .map(|p| &p[e * stride..(e + 1) * stride])
    }

    /// Edge vectors `v_k - v_0` of element `e` as the columns of a `coord_dim x n` matrix.
    pub fn edge_matrix(&self, e: usize) -> DMatrix<T> {
        let el = self.element(e);
        let v0 = self.vertex(el[0]);
        DMatrix::from_fn(self.coord_dim, self.dim(), |row, k| {
            self.vertex(el[k + 1])[row] - v0[row]
        })
    }

    /// Flat-simplex measure `sqrt(det G) / n!`.
    pub fn element_measure(&self, e: usize) -> Result<T> {
        let edges = self.edge_matrix(e);
        let gram = edges.transpose() * &edges;
        let det = gram.determinant();
        let measure = det.max(T::zero()).sqrt() / T::lit(factorial(self.dim()) as f64);
        if !(measure > T::lit(MIN_MEASURE)) {
            return Err(Error::DegenerateElement {
                element: e,
                measure: measure.as_f64(),
            });
        }
        Ok(measure)
    }

    pub fn total_measure(&self) -> Result<T> {
        (0..self.n_elements()).map(|e| self.element_measure(e)).sum()
    }

    /// Point of the flat simplex with barycentric coordinates `bary`.
    pub fn flat_point(&self, e: usize, bary: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.coord_dim];
        for (&v, &w) in self.element(e).iter().zip(bary) {
            for (o, x) in out.iter_mut().zip(self.vertex(v)) {
                *o += w * *x;
            }
        }
        out
    }

    /// Surface point associated with barycentric coordinates: the projected flat point on
    /// implicit surfaces, the image of the interpolated parameters on parametric ones.
    pub fn surface_point(&self, e: usize, bary: &[T]) -> Result<Vec<T>> {
        match self.surface.flavor() {
            Flavor::Implicit => self.surface.project(&self.flat_point(e, bary)),
            Flavor::Parametric => self.surface.eval_params(&self.interpolated_params(e, bary)),
        }
    }

    fn interpolated_params(&self, e: usize, bary: &[T]) -> Vec<T> {
        let n = self.dim();
        let corners = self.corner_params(e).expect("parametric mesh has corner parameters");
        (0..n)
            .map(|a| (0..=n).map(|k| bary[k] * corners[k * n + a]).sum())
            .collect()
    }

    /// Exact geometry at the surface point associated with `bary` in element `e`.
    pub fn sample(&self, e: usize, bary: &[T]) -> Result<GeometrySample<T>> {
        match self.surface.flavor() {
            Flavor::Implicit => {
                let p = self.surface.project(&self.flat_point(e, bary))?;
                sample_geometry(&self.surface, SurfacePoint::Ambient(&p))
            }
            Flavor::Parametric => {
                let u = self.interpolated_params(e, bary);
                sample_geometry(&self.surface, SurfacePoint::Params(&u))
            }
        }
    }

    /// Exact geometry at vertex `i`.
    pub fn vertex_sample(&self, i: usize) -> Result<GeometrySample<T>> {
        match self.vertex_params(i) {
            Some(u) => sample_geometry(&self.surface, SurfacePoint::Params(u)),
            None => sample_geometry(&self.surface, SurfacePoint::Ambient(self.vertex(i))),
        }
    }

    /// Largest deviation of a vertex from the surface.
    pub fn max_surface_residual(&self) -> Result<T> {
        let mut worst = T::zero();
        for i in 0..self.n_vertices() {
            let r = match self.surface.flavor() {
                Flavor::Implicit => (self.surface.implicit_value(self.vertex(i))? - T::one()).abs(),
                Flavor::Parametric => {
                    let u = self.vertex_params(i).expect("parametric mesh has vertex parameters");
                    let x = self.surface.eval_params(u)?;
                    x.iter()
                        .zip(self.vertex(i))
                        .map(|(a, b)| (*a - *b).abs())
                        .fold(T::zero(), |m, d| m.max(d))
                }
            };
            worst = worst.max(r);
        }
        Ok(worst)
    }

    /// Every `(n-1)`-face is shared by exactly two elements.
    pub fn is_closed(&self) -> bool {
        self.facet_balance().values().all(|&(count, _)| count == 2)
    }

    /// Every shared face is induced with opposite orientations by its two elements.
    pub fn is_consistently_oriented(&self) -> bool {
        self.facet_balance().values().all(|&(_, sign)| sign == 0)
    }

    fn facet_balance(&self) -> HashMap<Vec<usize>, (usize, i32)> {
        let mut faces: HashMap<Vec<usize>, (usize, i32)> = HashMap::new();
        for e in 0..self.n_elements() {
            let el = self.element(e);
            for skip in 0..el.len() {
                let face: Vec<usize> = el
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                let mut sorted = face.clone();
                sorted.sort_unstable();
                let parity = inversions(&face) % 2;
                let sign = if (skip + parity).is_multiple_of(2) { 1 } else { -1 };
                let entry = faces.entry(sorted).or_insert((0, 0));
                entry.0 += 1;
                entry.1 += sign;
            }
        }
        faces
    }

    /// Plain-text export: header `newtonspec-mesh 1 n N count_v count_e`, then one
    /// `v x1 ... xN` line per vertex and one `s i0 ... in` line per element (0-based).
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "newtonspec-mesh 1 {} {} {} {}",
            self.dim(),
            self.coord_dim,
            self.n_vertices(),
            self.n_elements()
        )?;
        for i in 0..self.n_vertices() {
            let coords: Vec<String> = self.vertex(i).iter().map(|x| format!("{:.16e}", x)).collect();
            writeln!(out, "v {}", coords.join(" "))?;
        }
        for e in 0..self.n_elements() {
            let idx: Vec<String> = self.element(e).iter().map(|i| i.to_string()).collect();
            writeln!(out, "s {}", idx.join(" "))?;
        }
        Ok(())
    }

    fn from_parts(
        surface: SurfaceSpec<T>,
        vertices: Vec<T>,
        params: Option<Vec<T>>,
        elements: Vec<usize>,
        corner_params: Option<Vec<T>>,
        level: usize,
    ) -> Self {
        let coord_dim = surface.ambient().coordinate_dim();
        let swapped = vec![false; elements.len() / (surface.dim() + 1)];
        Self {
            surface,
            coord_dim,
            vertices,
            params,
            elements,
            corner_params,
            swapped,
            level,
        }
    }

    /// Orients every element of a star-shaped hypersurface so that its normal points away from
    /// the origin.
    fn orient_outward(&mut self) {
        let n = self.dim();
        if self.coord_dim != n + 1 {
            return;
        }
        for e in 0..self.n_elements() {
            let el = self.element(e).to_vec();
            let v0 = self.vertex(el[0]);
            let centroid = self.flat_point(e, &vec![T::one() / T::from_usize_lossy(n + 1); n + 1]);
            let m = DMatrix::from_fn(n + 1, n + 1, |row, col| {
                if col < n {
                    self.vertex(el[col + 1])[row] - v0[row]
                } else {
                    centroid[row]
                }
            });
            if m.determinant() < T::zero() {
                let k = n + 1;
                self.elements.swap(e * k, e * k + 1);
                self.swapped[e] = !self.swapped[e];
            }
        }
    }
}

fn inversions(v: &[usize]) -> usize {
    let mut count = 0;
    for a in 0..v.len() {
        for b in a + 1..v.len() {
            if v[a] > v[b] {
                count += 1;
            }
        }
    }
    count
}

/// Mesh of `spec` at refinement `level`.
pub fn generate<T: Real>(spec: &SurfaceSpec<T>, level: usize) -> Result<SimplicialMesh<T>> {
    generate_with_base(spec, level, DEFAULT_TORUS_BASE)
}

/// As [`generate`], with `torus_base` grid cells per direction at level 0 for tori.
pub fn generate_with_base<T: Real>(
    spec: &SurfaceSpec<T>,
    level: usize,
    torus_base: usize,
) -> Result<SimplicialMesh<T>> {
    match (spec.kind(), spec.dim()) {
        (SurfaceKind::Sphere | SurfaceKind::Ellipsoid, 2) => {
            let mut mesh = icosahedron(spec)?;
            for _ in 0..level {
                mesh = refine(&mesh)?;
            }
            Ok(mesh)
        }
        (SurfaceKind::Sphere | SurfaceKind::Ellipsoid, 3) => {
            let mut mesh = cross_polytope(spec)?;
            for _ in 0..level {
                mesh = refine(&mesh)?;
            }
            Ok(mesh)
        }
        (SurfaceKind::FlatTorusR4 | SurfaceKind::CliffordTorusS3, 2) => {
            if torus_base < 3 {
                return Err(Error::InvalidInput("torus grid needs at least 3 cells".into()));
            }
            torus_grid(spec, torus_base << level, level)
        }
        (kind, n) => Err(Error::Unsupported(format!(
            "no closed mesh for {kind:?} of dimension {n}"
        ))),
    }
}

fn icosahedron<T: Real>(spec: &SurfaceSpec<T>) -> Result<SimplicialMesh<T>> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw: [[f64; 3]; 12] = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut vertices = Vec::with_capacity(36);
    for v in raw {
        vertices.extend(push_to_surface(spec, &v.map(T::lit))?);
    }
    let mut mesh = SimplicialMesh::from_parts(
        spec.clone(),
        vertices,
        None,
        faces.iter().flatten().copied().collect(),
        None,
        0,
    );
    mesh.orient_outward();
    Ok(mesh)
}

/// Boundary of the 16-cell: vertices `+-e_k`, one tetrahedron per choice of sign per axis.
fn cross_polytope<T: Real>(spec: &SurfaceSpec<T>) -> Result<SimplicialMesh<T>> {
    let mut vertices = Vec::with_capacity(32);
    for k in 0..4 {
        for s in [1.0, -1.0] {
            let mut v = [T::zero(); 4];
            v[k] = T::lit(s);
            vertices.extend(push_to_surface(spec, &v)?);
        }
    }
    let mut elements = Vec::with_capacity(64);
    for mask in 0..16usize {
        for k in 0..4 {
            elements.push(2 * k + ((mask >> k) & 1));
        }
    }
    let mut mesh = SimplicialMesh::from_parts(spec.clone(), vertices, None, elements, None, 0);
    mesh.orient_outward();
    Ok(mesh)
}

/// Radial direction `d` mapped onto an implicit surface.
fn push_to_surface<T: Real>(spec: &SurfaceSpec<T>, d: &[T]) -> Result<Vec<T>> {
    spec.project(d)
}

fn torus_grid<T: Real>(spec: &SurfaceSpec<T>, cells: usize, level: usize) -> Result<SimplicialMesh<T>> {
    let step = T::lit(std::f64::consts::TAU / cells as f64);
    let param = |i: usize| T::from_usize_lossy(i) * step;
    let index = |i: usize, j: usize| (i % cells) * cells + (j % cells);
    let mut vertices = Vec::with_capacity(cells * cells * 4);
    let mut params = Vec::with_capacity(cells * cells * 2);
    for i in 0..cells {
        for j in 0..cells {
            let u = [param(i), param(j)];
            vertices.extend(spec.eval_params(&u)?);
            params.extend(u);
        }
    }
    let mut elements = Vec::with_capacity(cells * cells * 6);
    let mut corners = Vec::with_capacity(cells * cells * 12);
    for i in 0..cells {
        for j in 0..cells {
            // counter-clockwise in the parameter square, split along the (i,j)-(i+1,j+1) diagonal
            for tri in [[(i, j), (i + 1, j), (i + 1, j + 1)], [(i, j), (i + 1, j + 1), (i, j + 1)]] {
                for (a, b) in tri {
                    elements.push(index(a, b));
                    corners.push(param(a));
                    corners.push(param(b));
                }
            }
        }
    }
    Ok(SimplicialMesh::from_parts(
        spec.clone(),
        vertices,
        Some(params),
        elements,
        Some(corners),
        level,
    ))
}

/// One level of edge-midpoint subdivision (4-to-1 triangles, 8-to-1 tetrahedra), with new
/// vertices placed on the surface.
pub fn refine<T: Real>(mesh: &SimplicialMesh<T>) -> Result<SimplicialMesh<T>> {
    let n = mesh.dim();
    let spec = mesh.surface();
    let parametric = spec.flavor() == Flavor::Parametric;
    let mut vertices = mesh.vertices.clone();
    let mut params = mesh.params.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut elements = Vec::with_capacity(mesh.elements.len() * (1 << n));
    let mut corners: Option<Vec<T>> = parametric.then(Vec::new);
    let half = T::lit(0.5);

    for e in 0..mesh.n_elements() {
        let mut el = mesh.element(e).to_vec();
        let mut cp = mesh.corner_params(e).map(<[T]>::to_vec);
        if mesh.swapped[e] {
            el.swap(0, 1);
            if let Some(c) = cp.as_mut() {
                for d in 0..n {
                    c.swap(d, n + d);
                }
            }
        }
        // local nodes: corners 0..=n followed by edge midpoints in (a, b) lexicographic order
        let mut nodes: Vec<usize> = el.clone();
        let mut node_params: Vec<Vec<T>> = match &cp {
            Some(c) => (0..=n).map(|k| c[k * n..(k + 1) * n].to_vec()).collect(),
            None => Vec::new(),
        };
        for a in 0..=n {
            for b in a + 1..=n {
                let key = (el[a].min(el[b]), el[a].max(el[b]));
                let mid_params: Option<Vec<T>> = cp.as_ref().map(|_| {
                    (0..n)
                        .map(|d| (node_params[a][d] + node_params[b][d]) * half)
                        .collect()
                });
                let index = match midpoints.get(&key) {
                    Some(&index) => index,
                    None => {
                        let position = match &mid_params {
                            Some(u) => spec.eval_params(u)?,
                            None => {
                                let (pa, pb) = (mesh.vertex(el[a]), mesh.vertex(el[b]));
                                let mid: Vec<T> =
                                    pa.iter().zip(pb).map(|(x, y)| (*x + *y) * half).collect();
                                spec.project(&mid)?
                            }
                        };
                        let index = vertices.len() / mesh.coord_dim;
                        vertices.extend(position);
                        if let (Some(p), Some(u)) = (params.as_mut(), &mid_params) {
                            p.extend(u.iter().map(|x| wrap_angle(*x)));
                        }
                        midpoints.insert(key, index);
                        index
                    }
                };
                nodes.push(index);
                if let Some(u) = mid_params {
                    node_params.push(u);
                }
            }
        }
        let children: Vec<Vec<usize>> = if n == 2 {
            // nodes: 0,1,2, m01=3, m02=4, m12=5
            vec![vec![0, 3, 4], vec![3, 1, 5], vec![4, 5, 2], vec![3, 5, 4]]
        } else {
            tetra_children()
        };
        for child in children {
            for &local in &child {
                elements.push(nodes[local]);
                if let Some(c) = corners.as_mut() {
                    c.extend_from_slice(&node_params[local]);
                }
            }
        }
    }

    let mut out = SimplicialMesh::from_parts(
        spec.clone(),
        vertices,
        params,
        elements,
        corners,
        mesh.level + 1,
    );
    if !parametric {
        out.orient_outward();
    }
    Ok(out)
}

/// Eight children of a tetrahedron `(x0, x1, x2, x3)` with local nodes `0..=3` (corners) and
/// `4..=9` (midpoints m01, m02, m03, m12, m13, m23), after Bey: the inner octahedron is always
/// cut along m02-m13 and every child lists its vertices in the order inherited from the parent,
/// so repeated refinement produces at most three similarity classes per initial tetrahedron.
fn tetra_children() -> Vec<Vec<usize>> {
    let (m01, m02, m03, m12, m13, m23) = (4, 5, 6, 7, 8, 9);
    vec![
        vec![0, m01, m02, m03],
        vec![m01, 1, m12, m13],
        vec![m02, m12, 2, m23],
        vec![m03, m13, m23, 3],
        vec![m01, m02, m03, m13],
        vec![m01, m02, m12, m13],
        vec![m02, m03, m13, m23],
        vec![m02, m12, m13, m23],
    ]
}

fn wrap_angle<T: Real>(x: T) -> T {
    let tau = T::two_pi();
    let mut y = x % tau;
    if y < T::zero() {
        y += tau;
    }
    y
}

/// Reads the text produced by [`SimplicialMesh::write_text`]:
/// `(n, coordinates per vertex, vertices, elements)`.
#[allow(clippy::type_complexity)]
pub fn read_text<R: BufRead>(input: R) -> Result<(usize, usize, Vec<Vec<f64>>, Vec<Vec<usize>>)> {
    let bad = |msg: &str| Error::InvalidInput(format!("mesh text: {msg}"));
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty input"))?
        .map_err(|e| bad(&e.to_string()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "newtonspec-mesh" || fields[1] != "1" {
        return Err(bad("bad header"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header count"));
    let (n, dim, nv, ne) = (num(fields[2])?, num(fields[3])?, num(fields[4])?, num(fields[5])?);
    let mut vertices = Vec::with_capacity(nv);
    let mut elements = Vec::with_capacity(ne);
    for line in lines {
        let line = line.map_err(|e| bad(&e.to_string()))?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let v = parts
                    .map(|t| t.parse::<f64>().map_err(|_| bad("bad coordinate")))
                    .collect::<Result<Vec<_>>>()?;
                if v.len() != dim {
                    return Err(bad("wrong coordinate count"));
                }
                vertices.push(v);
            }
            Some("s") => {
                let s = parts
                    .map(|t| t.parse::<usize>().map_err(|_| bad("bad index")))
                    .collect::<Result<Vec<_>>>()?;
                if s.len() != n + 1 || s.iter().any(|&i| i >= nv) {
                    return Err(bad("bad element"));
                }
                elements.push(s);
            }
            None => {}
            Some(_) => return Err(bad("unknown record")),
        }
    }
    if vertices.len() != nv || elements.len() != ne {
        return Err(bad("counts do not match header"));
    }
    Ok((n, dim, vertices, elements))
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// Unit right triangle in the `z = 0` plane, sharing the surface of `mesh`.
    pub fn single_triangle(mesh: &mut SimplicialMesh<f64>) -> SimplicialMesh<f64> {
        SimplicialMesh::from_parts(
            mesh.surface.clone(),
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            None,
            vec![0, 1, 2],
            None,
            0,
        )
    }
}

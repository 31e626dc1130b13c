//! Fixed simplicial background mesh of the unit square, its facets, global
//! Lagrange node numbering, and the uniform time partition.

use std::collections::HashMap;
use std::io::Write;

use crate::basis::TriangleLagrange;

/// Edge of the triangulation with its one or two neighbouring elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Facet {
    pub vertices: [usize; 2],
    pub elements: [usize; 2],
    pub boundary: bool,
}

impl Facet {
    /// The two-element patch `omega_F`, `None` on the boundary.
    pub fn patch(&self) -> Option<[usize; 2]> {
        (!self.boundary).then_some(self.elements)
    }
}

/// Affine map `x = origin + mat * xi` from the reference triangle to an element.
#[derive(Clone, Copy, Debug)]
pub struct Affine {
    pub origin: [f64; 2],
    /// Columns are the edge vectors `p1 - p0`, `p2 - p0`.
    pub mat: [[f64; 2]; 2],
    pub inv: [[f64; 2]; 2],
    pub det: f64,
}

impl Affine {
    pub fn from_vertices(p: [[f64; 2]; 3]) -> Self {
        let mat = [
            [p[1][0] - p[0][0], p[2][0] - p[0][0]],
            [p[1][1] - p[0][1], p[2][1] - p[0][1]],
        ];
        let det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0];
        let inv = [
            [mat[1][1] / det, -mat[0][1] / det],
            [-mat[1][0] / det, mat[0][0] / det],
        ];
        Self {
            origin: p[0],
            mat,
            inv,
            det,
        }
    }

    #[inline]
    pub fn apply(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.mat[0][0] * xi[0] + self.mat[0][1] * xi[1],
            self.origin[1] + self.mat[1][0] * xi[0] + self.mat[1][1] * xi[1],
        ]
    }

    #[inline]
    pub fn pull_back(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// Physical gradient `A^{-T} g` of a reference gradient `g`.
    #[inline]
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }

    /// Maps a reference direction to physical space.
    #[inline]
    pub fn push_vector(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.mat[0][0] * v[0] + self.mat[0][1] * v[1],
            self.mat[1][0] * v[0] + self.mat[1][1] * v[1],
        ]
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }
}

#[derive(Clone, Debug)]
pub struct BackgroundMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    /// Facet ids of each element; local facet `i` is opposite local vertex `i`.
    pub element_facets: Vec<[usize; 3]>,
    /// Longest edge length.
    pub h: f64,
    affine: Vec<Affine>,
}

impl BackgroundMesh {
    /// Builds a mesh from vertices and CCW elements, deriving facets.
    pub fn from_elements(vertices: Vec<[f64; 2]>, elements: Vec<[usize; 3]>) -> Self {
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        let mut element_facets = vec![[usize::MAX; 3]; elements.len()];
        let mut h: f64 = 0.0;
        for (e, tri) in elements.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                let len = dist(vertices[a], vertices[b]);
                h = h.max(len);
                let id = *edge_map.entry(key).or_insert_with(|| {
                    facets.push(Facet {
                        vertices: [key.0, key.1],
                        elements: [e, e],
                        boundary: true,
                    });
                    facets.len() - 1
                });
                if facets[id].elements[0] != e {
                    facets[id].elements[1] = e;
                    facets[id].boundary = false;
                }
                element_facets[e][i] = id;
            }
        }
        let affine = elements
            .iter()
            .map(|t| Affine::from_vertices([vertices[t[0]], vertices[t[1]], vertices[t[2]]]))
            .collect();
        Self {
            vertices,
            elements,
            facets,
            element_facets,
            h,
            affine,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn affine(&self, e: usize) -> &Affine {
        &self.affine[e]
    }

    pub fn element_vertices(&self, e: usize) -> [[f64; 2]; 3] {
        let t = self.elements[e];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn signed_area(&self, e: usize) -> f64 {
        0.5 * self.affine[e].det
    }

    pub fn interior_facets(&self) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets.iter().enumerate().filter(|(_, f)| !f.boundary)
    }

    pub fn boundary_facets(&self) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets.iter().enumerate().filter(|(_, f)| f.boundary)
    }

    /// Elements sharing at least one vertex with `e` (including `e`).
    pub fn vertex_neighbours(&self) -> Vec<Vec<usize>> {
        let mut by_vertex = vec![Vec::new(); self.vertices.len()];
        for (e, t) in self.elements.iter().enumerate() {
            for &v in t {
                by_vertex[v].push(e);
            }
        }
        self.elements
            .iter()
            .map(|t| {
                let mut n: Vec<usize> = t.iter().flat_map(|&v| by_vertex[v].iter().copied()).collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect()
    }

    /// Plain-text dump: `v x y` lines followed by `t a b c` lines.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {} {}", v[0], v[1])?;
        }
        for t in &self.elements {
            writeln!(out, "t {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Uniform `n x n` criss-cross triangulation of `[0,1]^2` with
/// `n = ceil(1 / h_target)`; every square is split along its `(0,0)-(1,1)`
/// diagonal.
pub fn build_structured_mesh(h_target: f64) -> BackgroundMesh {
    assert!(h_target > 0.0, "mesh size must be positive");
    // guard against 1/0.2 = 5.000000000000001
    let n = ((1.0 / h_target) - 1e-9).ceil().max(1.0) as usize;
    let stride = n + 1;
    let mut vertices = Vec::with_capacity(stride * stride);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * stride + i;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            elements.push([v00, v10, v11]);
            elements.push([v00, v11, v01]);
        }
    }
    BackgroundMesh::from_elements(vertices, elements)
}

/// `(facet id, [element, element])` for every interior facet.
pub fn build_facet_patches(mesh: &BackgroundMesh) -> Vec<(usize, [usize; 2])> {
    mesh.facets
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.patch().map(|p| (i, p)))
        .collect()
}

/// Global numbering of the continuous `P^k` Lagrange nodes of a mesh,
/// sorted lexicographically by `(x, y)`.
#[derive(Clone, Debug)]
pub struct LagrangeNodes {
    pub order: usize,
    pub basis: TriangleLagrange,
    pub coords: Vec<[f64; 2]>,
    /// Local-to-global node map per element (local order of [`TriangleLagrange`]).
    pub element_nodes: Vec<Vec<usize>>,
}

impl LagrangeNodes {
    pub fn new(mesh: &BackgroundMesh, order: usize) -> Self {
        let basis = TriangleLagrange::new(order);
        let mut ids: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
        let mut coords: Vec<[f64; 2]> = Vec::new();
        let mut element_nodes = Vec::with_capacity(mesh.n_elements());
        for (e, tri) in mesh.elements.iter().enumerate() {
            let aff = mesh.affine(e);
            let mut local = Vec::with_capacity(basis.len());
            for (i, m) in basis.multi_indices().iter().enumerate() {
                let mut key: Vec<(usize, usize)> =
                    (0..3).filter(|&c| m[c] > 0).map(|c| (tri[c], m[c])).collect();
                key.sort_unstable();
                let id = *ids.entry(key).or_insert_with(|| {
                    coords.push(aff.apply(basis.node(i)));
                    coords.len() - 1
                });
                local.push(id);
            }
            element_nodes.push(local);
        }
        // deterministic lexicographic renumbering
        let mut order_idx: Vec<usize> = (0..coords.len()).collect();
        order_idx.sort_by(|&a, &b| {
            coords[a][0]
                .total_cmp(&coords[b][0])
                .then(coords[a][1].total_cmp(&coords[b][1]))
        });
        let mut rank = vec![0; coords.len()];
        for (r, &old) in order_idx.iter().enumerate() {
            rank[old] = r;
        }
        let coords = order_idx.iter().map(|&i| coords[i]).collect();
        for local in &mut element_nodes {
            for id in local.iter_mut() {
                *id = rank[*id];
            }
        }
        Self {
            order,
            basis,
            coords,
            element_nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Uniform partition of `[0, T]` into `N` slabs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimePartition {
    pub t_final: f64,
    pub n_slabs: usize,
    pub dt: f64,
}

impl TimePartition {
    pub fn new(t_final: f64, n_slabs: usize) -> Self {
        assert!(n_slabs >= 1 && t_final > 0.0);
        Self {
            t_final,
            n_slabs,
            dt: t_final / n_slabs as f64,
        }
    }

    /// Partition with slab length `dt`; `T / dt` must be (close to) integral.
    pub fn from_step(t_final: f64, dt: f64) -> Self {
        let n = (t_final / dt).round().max(1.0) as usize;
        Self::new(t_final, n)
    }

    /// `t_n`, with `t_N == T` exactly.
    pub fn node(&self, n: usize) -> f64 {
        if n == self.n_slabs {
            self.t_final
        } else {
            n as f64 * self.dt
        }
    }

    /// `I_n = [t_{n-1}, t_n]` for `n = 1..=N`.
    pub fn slab(&self, n: usize) -> (f64, f64) {
        assert!(n >= 1 && n <= self.n_slabs);
        (self.node(n - 1), self.node(n))
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_slabs).map(|n| self.node(n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_mesh_counts() {
        let m = build_structured_mesh(0.2);
        assert_eq!(m.n_elements(), 50);
        assert_eq!(m.n_vertices(), 36);
        let m = build_structured_mesh(1.0);
        assert_eq!((m.n_elements(), m.n_vertices(), m.facets.len()), (2, 4, 5));
        let m = build_structured_mesh(0.2 * 0.5f64.powi(3));
        assert_eq!(m.n_elements(), 3200);
        let m = build_structured_mesh(3.0);
        assert_eq!(m.n_elements(), 2);
    }

    #[test]
    fn mesh_size_is_longest_edge() {
        let m = build_structured_mesh(0.2);
        assert!((m.h - 2f64.sqrt() / 5.0).abs() < 1e-15);
    }

    #[test]
    fn areas_positive_and_sum_to_one() {
        for n in [1.0, 0.2, 0.05, 0.0125] {
            let m = build_structured_mesh(n);
            let mut total = 0.0;
            for e in 0..m.n_elements() {
                let a = m.signed_area(e);
                assert!(a > 0.0);
                total += a;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn facet_adjacency_is_consistent() {
        let m = build_structured_mesh(0.2);
        for (i, f) in m.facets.iter().enumerate() {
            let count = if f.boundary { 1 } else { 2 };
            let els: Vec<usize> = f.elements[..count].to_vec();
            for e in els {
                assert!(m.element_facets[e].contains(&i));
            }
        }
        // each element lists three distinct facets
        for ef in &m.element_facets {
            assert!(ef[0] != ef[1] && ef[1] != ef[2] && ef[0] != ef[2]);
        }
    }

    #[test]
    fn facet_patches_and_euler() {
        let m = build_structured_mesh(1.0);
        let p = build_facet_patches(&m);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].1, [0, 1]);

        let m = build_structured_mesh(0.2);
        let p = build_facet_patches(&m);
        let boundary = m.facets.iter().filter(|f| f.boundary).count();
        assert_eq!(p.len(), m.facets.len() - boundary);
        assert_eq!(boundary, 20);
        // V - E + F = 1 for a triangulated disk
        let euler = m.n_vertices() as i64 - m.facets.len() as i64 + m.n_elements() as i64;
        assert_eq!(euler, 1);
        // enumeration oracle for interior facets: 3 per triangle, shared twice
        assert_eq!(p.len(), (3 * m.n_elements() - boundary) / 2);
    }

    #[test]
    fn lagrange_node_counts() {
        let m = build_structured_mesh(0.2);
        for k in 1..=4 {
            let nodes = LagrangeNodes::new(&m, k);
            assert_eq!(nodes.len(), (5 * k + 1) * (5 * k + 1));
            // each node coordinate matches the element local node
            for (e, local) in nodes.element_nodes.iter().enumerate() {
                for (i, &g) in local.iter().enumerate() {
                    let x = m.affine(e).apply(nodes.basis.node(i));
                    assert!(dist(x, nodes.coords[g]) < 1e-14);
                }
            }
        }
    }

    #[test]
    fn time_partition_nodes() {
        let tp = TimePartition::from_step(0.5, 0.25);
        assert_eq!(tp.n_slabs, 2);
        assert_eq!(tp.node(0), 0.0);
        assert_eq!(tp.node(2), 0.5);
        let tp = TimePartition::from_step(0.5, 0.5f64.powi(6));
        assert_eq!(tp.n_slabs, 32);
        for n in 1..=tp.n_slabs {
            let (a, b) = tp.slab(n);
            assert!((b - a - tp.dt).abs() < 1e-15);
        }
    }
}

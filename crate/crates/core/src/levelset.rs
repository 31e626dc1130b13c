//! Level-set geometry per slab: the piecewise-linear-in-space,
//! polynomial-in-time interpolant, element classification and the active
//! element/facet sets.

use crate::basis::Lagrange1d;
use crate::error::{Error, Result};
use crate::mesh::BackgroundMesh;

/// Vertex values closer to zero than this are moved to `+ZERO_SHIFT`.
pub const ZERO_SHIFT: f64 = 1e-14;

/// Smooth level-set function; the bulk domain is `{phi < 0}`.
pub trait LevelsetField: Sync {
    fn phi(&self, x: [f64; 2], t: f64) -> f64;
    fn grad(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn dt(&self, x: [f64; 2], t: f64) -> f64;
}

/// Deterministic removal of exact zeros.
#[inline]
pub fn perturb(v: f64) -> f64 {
    if v.abs() < ZERO_SHIFT {
        ZERO_SHIFT
    } else {
        v
    }
}

/// Vertex-wise polynomial-in-time interpolant of `phi` on one slab.
#[derive(Clone, Debug)]
pub struct SlabLevelsetLin {
    pub t_start: f64,
    pub dt: f64,
    pub time_basis: Lagrange1d<f64>,
    /// `values[v * m + j]`: `phi(vertex v, t_j)` at the `m` Lobatto nodes.
    values: Vec<f64>,
    elements: Vec<[usize; 3]>,
}

impl SlabLevelsetLin {
    pub fn time_order(&self) -> usize {
        self.time_basis.len() - 1
    }

    #[inline]
    fn m(&self) -> usize {
        self.time_basis.len()
    }

    pub fn time_at(&self, tau: f64) -> f64 {
        self.t_start + tau * self.dt
    }

    /// Value at vertex `v` and reference time `tau` in `[0, 1]`.
    pub fn vertex_value(&self, v: usize, tau: f64) -> f64 {
        let m = self.m();
        self.time_basis.interpolate(&self.values[v * m..(v + 1) * m], tau)
    }

    /// Interpolation data at the `j`-th time node (exact `phi` values).
    pub fn node_value(&self, v: usize, j: usize) -> f64 {
        self.values[v * self.m() + j]
    }

    /// Raw vertex values of element `e` at reference time `tau`.
    pub fn element_values(&self, e: usize, tau: f64) -> [f64; 3] {
        let tri = self.elements[e];
        let basis = self.time_basis.values(tau);
        let m = self.m();
        let mut out = [0.0; 3];
        for (c, &v) in tri.iter().enumerate() {
            out[c] = basis
                .iter()
                .zip(&self.values[v * m..(v + 1) * m])
                .map(|(b, p)| b * p)
                .sum();
        }
        out
    }

    /// Vertex values with exact zeros shifted away.
    pub fn element_values_perturbed(&self, e: usize, tau: f64) -> [f64; 3] {
        self.element_values(e, tau).map(perturb)
    }
}

/// Interpolates `phi` at the `order + 1` Gauss-Lobatto nodes of the slab at
/// every mesh vertex.
pub fn interpolate_slab_levelset<L: LevelsetField + ?Sized>(
    phi: &L,
    mesh: &BackgroundMesh,
    t_start: f64,
    t_end: f64,
    order: usize,
) -> SlabLevelsetLin {
    assert!(order >= 1, "temporal level-set order must be >= 1");
    let time_basis = Lagrange1d::<f64>::lobatto(order + 1);
    let dt = t_end - t_start;
    let m = order + 1;
    let mut values = Vec::with_capacity(mesh.n_vertices() * m);
    for &x in &mesh.vertices {
        for &tau in time_basis.nodes() {
            let t = if tau == 1.0 { t_end } else { t_start + tau * dt };
            values.push(phi.phi(x, t));
        }
    }
    SlabLevelsetLin {
        t_start,
        dt,
        time_basis,
        values,
        elements: mesh.elements.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    Neg,
    Pos,
    Cut,
}

impl Mark {
    pub fn of(values: [f64; 3]) -> Self {
        let neg = values.iter().filter(|&&v| v < 0.0).count();
        match neg {
            0 => Mark::Pos,
            3 => Mark::Neg,
            _ => Mark::Cut,
        }
    }
}

/// Active elements and stabilisation facets of one slab.
#[derive(Clone, Debug)]
pub struct ActiveSets {
    /// Bulk-active flag per element.
    pub bulk: Vec<bool>,
    /// Surface-active flag per element.
    pub surface: Vec<bool>,
    /// Ghost-penalty facet ids.
    pub facets: Vec<usize>,
    /// Reference sample times in `[0, 1]`.
    pub sample_times: Vec<f64>,
    /// `marks[e][s]` at `sample_times[s]`.
    pub marks: Vec<Vec<Mark>>,
}

impl ActiveSets {
    pub fn bulk_elements(&self) -> Vec<usize> {
        flags_to_list(&self.bulk)
    }

    pub fn surface_elements(&self) -> Vec<usize> {
        flags_to_list(&self.surface)
    }

    /// Element is NEG at every sample time.
    pub fn always_inside(&self, e: usize) -> bool {
        self.marks[e].iter().all(|&m| m == Mark::Neg)
    }

    pub fn ever_cut(&self, e: usize) -> bool {
        self.marks[e].contains(&Mark::Cut)
    }
}

fn flags_to_list(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter_map(|(i, &f)| f.then_some(i))
        .collect()
}

/// `n` uniformly spaced reference times in `[0, 1]`, endpoints included.
pub fn uniform_samples(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Classifies elements by sign sampling of the vertex polynomials.
///
/// An element is bulk-active if some sampled vertex value is below
/// `strip_width` (`0` gives the plain `{phi_lin < 0}` rule), and
/// surface-active if its vertex values change sign at some sample.
pub fn classify_slab(
    slab: &SlabLevelsetLin,
    mesh: &BackgroundMesh,
    sample_times: &[f64],
    strip_width: f64,
) -> Result<ActiveSets> {
    let mut samples = sample_times.to_vec();
    samples.sort_by(f64::total_cmp);
    samples.dedup();
    let n_el = mesh.n_elements();
    let mut bulk = vec![false; n_el];
    let mut surface = vec![false; n_el];
    let mut marks = Vec::with_capacity(n_el);
    // vertex values at all samples, computed once
    let vals: Vec<Vec<f64>> = samples
        .iter()
        .map(|&tau| (0..mesh.n_vertices()).map(|v| perturb(slab.vertex_value(v, tau))).collect())
        .collect();
    for (e, tri) in mesh.elements.iter().enumerate() {
        let mut em = Vec::with_capacity(samples.len());
        let mut min = f64::INFINITY;
        for sv in &vals {
            let v = [sv[tri[0]], sv[tri[1]], sv[tri[2]]];
            min = min.min(v[0].min(v[1]).min(v[2]));
            em.push(Mark::of(v));
        }
        bulk[e] = min < 0.0 || min < strip_width;
        surface[e] = em.contains(&Mark::Cut);
        marks.push(em);
    }
    if !bulk.iter().any(|&b| b) {
        return Err(Error::EmptyActiveSet);
    }
    let mut active = ActiveSets {
        bulk,
        surface,
        facets: Vec::new(),
        sample_times: samples,
        marks,
    };
    active.facets = build_facet_set(&active, mesh);
    Ok(active)
}

/// Ghost-penalty facets: interior facets whose two patch elements are
/// bulk-active and at least one of which is not inside the bulk at every
/// sample time (cut, or in the safety strip).
pub fn build_facet_set(active: &ActiveSets, mesh: &BackgroundMesh) -> Vec<usize> {
    mesh.interior_facets()
        .filter(|(_, f)| {
            let [a, b] = f.elements;
            active.bulk[a]
                && active.bulk[b]
                && (!active.always_inside(a) || !active.always_inside(b))
        })
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;

    struct Plane;
    impl LevelsetField for Plane {
        fn phi(&self, x: [f64; 2], _t: f64) -> f64 {
            x[0] - 0.5
        }
        fn grad(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
            [1.0, 0.0]
        }
        fn dt(&self, _x: [f64; 2], _t: f64) -> f64 {
            0.0
        }
    }

    struct Quadratic;
    impl LevelsetField for Quadratic {
        fn phi(&self, _x: [f64; 2], t: f64) -> f64 {
            t * t
        }
        fn grad(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
            [0.0, 0.0]
        }
        fn dt(&self, _x: [f64; 2], t: f64) -> f64 {
            2.0 * t
        }
    }

    #[test]
    fn plane_levelset_is_constant_in_time() {
        let mesh = build_structured_mesh(0.25);
        let s = interpolate_slab_levelset(&Plane, &mesh, 0.0, 0.1, 2);
        for v in 0..mesh.n_vertices() {
            let expect = mesh.vertices[v][0] - 0.5;
            for tau in [0.0, 0.3, 1.0] {
                assert!((s.vertex_value(v, tau) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn temporal_interpolation_reproduces_quadratic() {
        let mesh = build_structured_mesh(1.0);
        let (t0, t1) = (0.3, 0.55);
        let s = interpolate_slab_levelset(&Quadratic, &mesh, t0, t1, 2);
        for i in 0..10 {
            let tau = (i as f64 * 0.37).fract();
            let t = t0 + tau * (t1 - t0);
            assert!((s.vertex_value(0, tau) - t * t).abs() < 1e-12);
        }
    }

    #[test]
    fn marks_follow_sign_pattern() {
        assert_eq!(Mark::of([0.1, 0.2, 0.3]), Mark::Pos);
        assert_eq!(Mark::of([-1.0, -1.0, -1.0]), Mark::Neg);
        assert_eq!(Mark::of([-1.0, 1.0, -1.0]), Mark::Cut);
    }

    #[test]
    fn plane_classification() {
        let mesh = build_structured_mesh(0.25);
        let s = interpolate_slab_levelset(&Plane, &mesh, 0.0, 0.1, 1);
        let a = classify_slab(&s, &mesh, &uniform_samples(7), 0.0).unwrap();
        // x = 0.5 is a grid line: its vertex values 0 become +1e-14, so the
        // column [0.25, 0.5] is cut and the interface sits on its right edge
        assert_eq!(a.surface_elements().len(), 8);
        assert_eq!(a.bulk_elements().len(), 16);
        let inside = a.bulk_elements().iter().filter(|&&e| a.always_inside(e)).count();
        assert_eq!(inside, 8);
    }

    #[test]
    fn surface_subset_of_bulk_and_facets_valid() {
        let mesh = build_structured_mesh(0.1);
        struct Circle;
        impl LevelsetField for Circle {
            fn phi(&self, x: [f64; 2], t: f64) -> f64 {
                0.2 - ((x[0] - 0.5 - 0.1 * t).powi(2) + (x[1] - 0.5).powi(2)).sqrt()
            }
            fn grad(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
                unimplemented!()
            }
            fn dt(&self, _x: [f64; 2], _t: f64) -> f64 {
                unimplemented!()
            }
        }
        let s = interpolate_slab_levelset(&Circle, &mesh, 0.0, 0.5, 2);
        let a = classify_slab(&s, &mesh, &uniform_samples(9), 0.05).unwrap();
        for e in 0..mesh.n_elements() {
            if a.surface[e] {
                assert!(a.bulk[e]);
            }
        }
        for &f in &a.facets {
            let facet = &mesh.facets[f];
            assert!(!facet.boundary);
            assert!(a.bulk[facet.elements[0]] && a.bulk[facet.elements[1]]);
        }
        // every interior facet of a cut element with an active neighbour is a
        // stabilisation facet
        for e in a.surface_elements() {
            for &f in &mesh.element_facets[e] {
                let facet = &mesh.facets[f];
                if !facet.boundary && a.bulk[facet.elements[0]] && a.bulk[facet.elements[1]] {
                    assert!(a.facets.contains(&f));
                }
            }
        }
    }
}

//! Manufactured test problems: a circular hole of radius 0.18 orbiting the
//! centre of the unit square inside a rigidly rotating flow.

use num_dual::{first_derivative, second_derivative, Dual, DualNum};

use crate::levelset::LevelsetField;
use crate::model::{ExactSolution, ModelData, ModelParams};

use std::f64::consts::PI;

pub const RADIUS: f64 = 0.18;
pub const ORBIT: f64 = 0.28;
pub const T_FINAL: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingModel {
    Henry,
    Langmuir,
}

impl std::str::FromStr for CouplingModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "henry" => Ok(Self::Henry),
            "langmuir" => Ok(Self::Langmuir),
            _ => Err(format!("unknown model '{s}' (expected henry or langmuir)")),
        }
    }
}

impl std::fmt::Display for CouplingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Henry => "henry",
            Self::Langmuir => "langmuir",
        })
    }
}

/// Default constants of the test case.
pub fn default_params(model: CouplingModel) -> ModelParams {
    ModelParams {
        k_b: 0.01,
        k_s: 1.0,
        b_b: 1.0,
        b_s: 1.0,
        b_bs: match model {
            CouplingModel::Henry => 0.0,
            CouplingModel::Langmuir => 1.0,
        },
        gamma_b: 0.05,
        gamma_s: 0.05,
    }
}

/// Hole centre `c(t)`.
pub fn centre(t: f64) -> [f64; 2] {
    [0.5 + ORBIT * (PI * t).sin(), 0.5 + ORBIT * (PI * t).cos()]
}

fn centre_dual<D: DualNum<Primitive = f64> + Copy>(t: D) -> [D; 2] {
    let pt = t * PI;
    [pt.sin() * ORBIT + 0.5, pt.cos() * ORBIT + 0.5]
}

/// `w = pi (y - 0.5, 0.5 - x)`, the clockwise rotation that carries the hole along its orbit.
pub fn rotation(x: [f64; 2]) -> [f64; 2] {
    [PI * (x[1] - 0.5), PI * (0.5 - x[0])]
}

fn level(x: [f64; 2], t: f64) -> (f64, [f64; 2], f64) {
    let c = centre(t);
    let d = [x[0] - c[0], x[1] - c[1]];
    let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let cdot = [ORBIT * PI * (PI * t).cos(), -ORBIT * PI * (PI * t).sin()];
    if r == 0.0 {
        return (RADIUS, [0.0, 0.0], 0.0);
    }
    let g = [-d[0] / r, -d[1] / r];
    // d_t phi = (x - c) . c' / r
    (RADIUS - r, g, (d[0] * cdot[0] + d[1] * cdot[1]) / r)
}

fn u_bulk_dual<D: DualNum<Primitive = f64> + Copy>(x: D, y: D, t: D) -> D {
    (x * PI).cos() * (y * PI).sin() * (t * (2.0 * PI)).cos() * 0.4 + 0.5
}

fn grad_bulk_dual<D: DualNum<Primitive = f64> + Copy>(x: D, y: D, t: D) -> [D; 2] {
    let ct = (t * (2.0 * PI)).cos() * (0.4 * PI);
    [
        -(x * PI).sin() * (y * PI).sin() * ct,
        (x * PI).cos() * (y * PI).cos() * ct,
    ]
}

/// `u_B = 0.5 + 0.4 cos(pi x) sin(pi y) cos(2 pi t)`.
pub fn u_bulk(x: [f64; 2], t: f64) -> f64 {
    u_bulk_dual(x[0], x[1], t)
}

pub fn grad_u_bulk(x: [f64; 2], t: f64) -> [f64; 2] {
    grad_bulk_dual(x[0], x[1], t)
}

/// `d_t u_B + w . grad u_B - k_B lap u_B`.
pub fn bulk_source(x: [f64; 2], t: f64, k_b: f64) -> f64 {
    let s = (PI * x[0]).cos() * (PI * x[1]).sin();
    let ut = -0.8 * PI * s * (2.0 * PI * t).sin();
    let lap = -2.0 * PI * PI * 0.4 * s * (2.0 * PI * t).cos();
    let g = grad_u_bulk(x, t);
    let w = rotation(x);
    ut + w[0] * g[0] + w[1] * g[1] - k_b * lap
}

/// Manufactured surface data along the circle, parametrised by angle `theta`.
#[derive(Clone, Copy, Debug)]
struct SurfaceLaw {
    p: ModelParams,
}

impl SurfaceLaw {
    /// `f_coupl = -k_B grad u_B . n` with `n` pointing out of the bulk (into the hole).
    fn coupling<D: DualNum<Primitive = f64> + Copy>(&self, theta: D, t: D) -> D {
        let c = centre_dual(t);
        let (s, co) = (theta.sin(), theta.cos());
        let px = c[0] + co * RADIUS;
        let py = c[1] + s * RADIUS;
        let g = grad_bulk_dual(px, py, t);
        // -k_B grad u . (-(cos, sin))
        (g[0] * co + g[1] * s) * self.p.k_b
    }

    fn u_surface<D: DualNum<Primitive = f64> + Copy>(&self, theta: D, t: D) -> D {
        let c = centre_dual(t);
        let px = c[0] + theta.cos() * RADIUS;
        let py = c[1] + theta.sin() * RADIUS;
        let ub = u_bulk_dual(px, py, t);
        let f = self.coupling(theta, t);
        (ub * self.p.b_b - f) / (ub * self.p.b_bs + self.p.b_s)
    }

    /// `(U, U_t, U_theta, U_thetatheta)`.
    fn derivatives(&self, theta: f64, t: f64) -> (f64, f64, f64, f64) {
        let (u, ut) = first_derivative(|tt: Dual<f64>| self.u_surface(Dual::from_re(theta), tt), t);
        let (_, uth, uthth) = second_derivative(
            |th: num_dual::Dual2<f64>| self.u_surface(th, num_dual::Dual2::from_re(t)),
            theta,
        );
        (u, ut, uth, uthth)
    }
}

fn angle(x: [f64; 2], t: f64) -> f64 {
    let c = centre(t);
    (x[1] - c[1]).atan2(x[0] - c[0])
}

/// The orbiting-hole problem with manufactured sources.
#[derive(Clone, Debug)]
pub struct ManufacturedProblem {
    pub model: CouplingModel,
    pub params: ModelParams,
    law: SurfaceLaw,
}

impl ManufacturedProblem {
    pub fn new(model: CouplingModel) -> Self {
        Self::with_params(model, default_params(model))
    }

    pub fn with_params(model: CouplingModel, params: ModelParams) -> Self {
        Self {
            model,
            params,
            law: SurfaceLaw { p: params },
        }
    }

    /// `f_coupl` at the circle point of angle `theta`.
    pub fn coupling_flux(&self, theta: f64, t: f64) -> f64 {
        self.law.coupling(theta, t)
    }

    /// Exact surface concentration, extended constantly along normals.
    pub fn u_surface(&self, x: [f64; 2], t: f64) -> f64 {
        self.law.u_surface(angle(x, t), t)
    }

    /// Surface source at the circle point of angle `theta`.
    pub fn surface_source_at(&self, theta: f64, t: f64) -> f64 {
        let (_, ut, uth, uthth) = self.law.derivatives(theta, t);
        let c = centre(t);
        let p = [c[0] + RADIUS * theta.cos(), c[1] + RADIUS * theta.sin()];
        let tang = [-theta.sin(), theta.cos()];
        let cdot = [ORBIT * PI * (PI * t).cos(), -ORBIT * PI * (PI * t).sin()];
        let w = rotation(p);
        let rel = (w[0] - cdot[0]) * tang[0] + (w[1] - cdot[1]) * tang[1];
        // div_Gamma w vanishes for a rigid rotation
        ut + uth * rel / RADIUS - self.params.k_s * uthth / (RADIUS * RADIUS) - self.law.coupling(theta, t)
    }
}

impl LevelsetField for ManufacturedProblem {
    fn phi(&self, x: [f64; 2], t: f64) -> f64 {
        level(x, t).0
    }
    fn grad(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        level(x, t).1
    }
    fn dt(&self, x: [f64; 2], t: f64) -> f64 {
        level(x, t).2
    }
}

impl ModelData for ManufacturedProblem {
    fn velocity(&self, x: [f64; 2], _t: f64) -> [f64; 2] {
        rotation(x)
    }
    fn velocity_jacobian(&self, _x: [f64; 2], _t: f64) -> [[f64; 2]; 2] {
        [[0.0, PI], [-PI, 0.0]]
    }
    fn source_bulk(&self, x: [f64; 2], t: f64) -> f64 {
        bulk_source(x, t, self.params.k_b)
    }
    fn source_surface(&self, x: [f64; 2], t: f64) -> f64 {
        self.surface_source_at(angle(x, t), t)
    }
    fn boundary_flux(&self, x: [f64; 2], t: f64, n: [f64; 2]) -> f64 {
        let g = grad_u_bulk(x, t);
        self.params.k_b * (g[0] * n[0] + g[1] * n[1])
    }
    fn initial_bulk(&self, x: [f64; 2]) -> f64 {
        u_bulk(x, 0.0)
    }
    fn initial_surface(&self, x: [f64; 2]) -> f64 {
        self.u_surface(x, 0.0)
    }
    fn params(&self) -> &ModelParams {
        &self.params
    }
    fn t_final(&self) -> f64 {
        T_FINAL
    }
}

impl ExactSolution for ManufacturedProblem {
    fn bulk(&self, x: [f64; 2], t: f64) -> f64 {
        u_bulk(x, t)
    }
    fn surface(&self, x: [f64; 2], t: f64) -> f64 {
        self.u_surface(x, t)
    }
}

/// Same geometry and flow, no sources, constant initial data `c` in both phases.
#[derive(Clone, Debug)]
pub struct ConstantPair {
    pub value: f64,
    pub params: ModelParams,
}

impl ConstantPair {
    pub fn new(value: f64) -> Self {
        let mut params = default_params(CouplingModel::Henry);
        params.b_bs = 0.0;
        Self { value, params }
    }
}

impl LevelsetField for ConstantPair {
    fn phi(&self, x: [f64; 2], t: f64) -> f64 {
        level(x, t).0
    }
    fn grad(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        level(x, t).1
    }
    fn dt(&self, x: [f64; 2], t: f64) -> f64 {
        level(x, t).2
    }
}

impl ModelData for ConstantPair {
    fn velocity(&self, x: [f64; 2], _t: f64) -> [f64; 2] {
        rotation(x)
    }
    fn velocity_jacobian(&self, _x: [f64; 2], _t: f64) -> [[f64; 2]; 2] {
        [[0.0, PI], [-PI, 0.0]]
    }
    fn initial_bulk(&self, _x: [f64; 2]) -> f64 {
        self.value
    }
    fn initial_surface(&self, _x: [f64; 2]) -> f64 {
        self.value
    }
    fn params(&self) -> &ModelParams {
        &self.params
    }
    fn t_final(&self) -> f64 {
        T_FINAL
    }
}

impl ExactSolution for ConstantPair {
    fn bulk(&self, _x: [f64; 2], _t: f64) -> f64 {
        self.value
    }
    fn surface(&self, _x: [f64; 2], _t: f64) -> f64 {
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        assert!((u_bulk([0.5, 0.5], 0.0) - 0.5).abs() < 1e-15);
        let c = centre(0.0);
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 0.78).abs() < 1e-15);
        let c = centre(0.5);
        assert!((c[0] - 0.78).abs() < 1e-15 && (c[1] - 0.5).abs() < 1e-15);
        let p = ManufacturedProblem::new(CouplingModel::Henry);
        assert!((p.phi([0.5, 0.78], 0.0) - 0.18).abs() < 1e-15);
        let j = p.velocity_jacobian([0.3, 0.3], 0.0);
        assert_eq!(j[0][0] + j[1][1], 0.0);
        // the hole centre is transported by the flow
        for t in [0.0, 0.13, 0.4] {
            let e = 1e-6;
            let (a, b) = (centre(t + e), centre(t - e));
            let w = rotation(centre(t));
            assert!(((a[0] - b[0]) / (2.0 * e) - w[0]).abs() < 1e-8);
            assert!(((a[1] - b[1]) / (2.0 * e) - w[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn henry_relation_with_fd_gradient() {
        let p = ManufacturedProblem::new(CouplingModel::Henry);
        let t = 0.0;
        let c = centre(t);
        let x = [c[0], c[1] + RADIUS];
        let eps = 1e-6;
        let gy = (u_bulk([x[0], x[1] + eps], t) - u_bulk([x[0], x[1] - eps], t)) / (2.0 * eps);
        let gx = (u_bulk([x[0] + eps, x[1]], t) - u_bulk([x[0] - eps, x[1]], t)) / (2.0 * eps);
        // n out of the bulk at the top of the hole is (0, -1)
        let f = -0.01 * (gx * 0.0 + gy * -1.0);
        let expect = u_bulk(x, t) - f;
        assert!((p.u_surface(x, t) - expect).abs() < 1e-9);
    }

    #[test]
    fn surface_source_matches_finite_differences() {
        for model in [CouplingModel::Henry, CouplingModel::Langmuir] {
            let p = ManufacturedProblem::new(model);
            let law = p.law;
            for &(th, t) in &[(0.3, 0.1), (2.0, 0.37), (-1.2, 0.45)] {
                let e = 1e-4;
                let u = |a: f64, b: f64| law.u_surface(a, b);
                let ut = (u(th, t + e) - u(th, t - e)) / (2.0 * e);
                let uth = (u(th + e, t) - u(th - e, t)) / (2.0 * e);
                let utt = (u(th + e, t) - 2.0 * u(th, t) + u(th - e, t)) / (e * e);
                let (_, a, b, c) = law.derivatives(th, t);
                assert!((a - ut).abs() < 1e-6, "{a} {ut}");
                assert!((b - uth).abs() < 1e-6);
                assert!((c - utt).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn bulk_source_matches_finite_differences() {
        let x = [0.31, 0.77];
        let t = 0.2;
        let e = 1e-4;
        let ut = (u_bulk(x, t + e) - u_bulk(x, t - e)) / (2.0 * e);
        let lap = (u_bulk([x[0] + e, x[1]], t) + u_bulk([x[0] - e, x[1]], t) + u_bulk([x[0], x[1] + e], t)
            + u_bulk([x[0], x[1] - e], t)
            - 4.0 * u_bulk(x, t))
            / (e * e);
        let g = grad_u_bulk(x, t);
        let w = rotation(x);
        let f = ut + w[0] * g[0] + w[1] * g[1] - 0.01 * lap;
        assert!((f - bulk_source(x, t, 0.01)).abs() < 1e-6);
    }

    #[test]
    fn coupling_law_holds() {
        let p = ManufacturedProblem::new(CouplingModel::Langmuir);
        let t = 0.3;
        let th = 1.1;
        let c = centre(t);
        let x = [c[0] + RADIUS * th.cos(), c[1] + RADIUS * th.sin()];
        let ub = u_bulk(x, t);
        let us = p.u_surface(x, t);
        let f = p.coupling_flux(th, t);
        assert!((f - (ub - us - ub * us)).abs() < 1e-13);
    }
}

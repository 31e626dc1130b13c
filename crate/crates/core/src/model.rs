//! Model constants and problem data closures.

use crate::error::{Error, Result};
use crate::levelset::LevelsetField;

/// Material and stabilisation constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub k_b: f64,
    pub k_s: f64,
    pub b_b: f64,
    pub b_s: f64,
    pub b_bs: f64,
    pub gamma_b: f64,
    pub gamma_s: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_b > 0.0 && self.k_s > 0.0) {
            return Err(Error::InvalidConfig("diffusivities must be positive".into()));
        }
        if self.gamma_b < 0.0 || self.gamma_s < 0.0 {
            return Err(Error::InvalidConfig("stabilisation constants must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.b_bs == 0.0
    }
}

/// Geometry, velocity, sources and initial data of a coupled problem.
///
/// The bulk is `{phi < 0}` and the interface normal points out of the bulk.
pub trait ModelData: LevelsetField {
    fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2];
    /// `jac[i][j] = d w_i / d x_j`.
    fn velocity_jacobian(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2];
    fn source_bulk(&self, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }
    fn source_surface(&self, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }
    /// Prescribed `k_B grad u_B . n` on the outer boundary (`n` outward).
    fn boundary_flux(&self, _x: [f64; 2], _t: f64, _n: [f64; 2]) -> f64 {
        0.0
    }
    fn initial_bulk(&self, x: [f64; 2]) -> f64;
    fn initial_surface(&self, x: [f64; 2]) -> f64;
    fn params(&self) -> &ModelParams;
    fn t_final(&self) -> f64;
}

/// Reference solution used for error measurement.
pub trait ExactSolution: Sync {
    fn bulk(&self, x: [f64; 2], t: f64) -> f64;
    fn surface(&self, x: [f64; 2], t: f64) -> f64;
}

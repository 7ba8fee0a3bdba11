//! Physical and discretization parameters of the coupled model problem.

use crate::error::ConfigError;

/// Parameters of the heat/wave system and its Nitsche coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Diffusion coefficient of the heat equation.
    pub nu: f64,
    /// Transport direction of the heat equation.
    pub beta: [f64; 2],
    /// Wave stiffness (squared propagation speed).
    pub lambda: f64,
    /// Wave damping, `delta >= 0`.
    pub delta: f64,
    /// Nitsche penalty; interface terms scale with `gamma / h`.
    pub gamma: f64,
    /// Spatial cell width; `4/h` and `1/h` must be integers.
    pub h: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            nu: 0.001,
            beta: [2.0, 0.0],
            lambda: 1000.0,
            delta: 0.1,
            gamma: 1000.0,
            h: 0.25,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Constraint(what.to_string()))
            }
        };
        check(self.nu > 0.0, "nu must be positive")?;
        check(self.lambda > 0.0, "lambda must be positive")?;
        check(self.delta >= 0.0, "delta must be nonnegative")?;
        check(self.gamma > 0.0, "gamma must be positive")?;
        check(
            self.h > 0.0 && crate::mesh::divides_evenly(4.0, self.h) && crate::mesh::divides_evenly(1.0, self.h),
            "h must be positive with 4/h and 1/h integral",
        )?;
        check(self.beta.iter().all(|b| b.is_finite()), "beta must be finite")?;
        Ok(())
    }

    /// Nitsche penalty factor `gamma / h`.
    pub fn penalty(&self) -> f64 {
        self.gamma / self.h
    }
}

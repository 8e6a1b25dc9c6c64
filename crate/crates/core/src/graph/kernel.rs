use serde::{Deserialize, Serialize};

use super::{GraphError, Result};

/// Profile `eta` of a radial kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelShape {
    /// `eta(t) = height` for `t <= radius`, else 0.
    Indicator { height: f64, radius: f64 },
    /// `eta(t) = 1 - t / radius` for `t <= radius`, else 0.
    Triangular { radius: f64 },
    /// Step function: `eta(t) = values[k]` on `(radii[k-1], radii[k]]`, 0 past the last radius.
    Table { radii: Vec<f64>, values: Vec<f64> },
}

/// Kernel profile plus the `eps^{-d}` normalization it is used with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub shape: KernelShape,
    /// Intrinsic dimension `d` in the `eps^{-d}` factor.
    pub intrinsic_dim: usize,
    /// Whether weights carry the `eps^{-d}` factor; raw 0/1 weights when false.
    pub normalized: bool,
}

const ADMISSIBILITY_GRID: usize = 1024;

impl Kernel {
    pub fn new(shape: KernelShape, intrinsic_dim: usize, normalized: bool) -> Result<Self> {
        let k = Self {
            shape,
            intrinsic_dim,
            normalized,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn indicator(height: f64, radius: f64, intrinsic_dim: usize, normalized: bool) -> Result<Self> {
        Self::new(KernelShape::Indicator { height, radius }, intrinsic_dim, normalized)
    }

    pub fn triangular(radius: f64, intrinsic_dim: usize, normalized: bool) -> Result<Self> {
        Self::new(KernelShape::Triangular { radius }, intrinsic_dim, normalized)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.shape {
            KernelShape::Indicator { height, radius } => {
                if (0.0..=*radius).contains(&t) {
                    *height
                } else {
                    0.0
                }
            }
            KernelShape::Triangular { radius } => {
                if (0.0..=*radius).contains(&t) {
                    1.0 - t / radius
                } else {
                    0.0
                }
            }
            KernelShape::Table { radii, values } => {
                if t < 0.0 {
                    return 0.0;
                }
                radii
                    .iter()
                    .position(|&r| t <= r)
                    .map_or(0.0, |k| values[k])
            }
        }
    }

    /// Radius past which `eta` vanishes.
    pub fn support_radius(&self) -> f64 {
        match &self.shape {
            KernelShape::Indicator { radius, .. } | KernelShape::Triangular { radius } => *radius,
            KernelShape::Table { radii, .. } => radii.last().copied().unwrap_or(0.0),
        }
    }

    /// Radii where `eta` may be discontinuous or change formula, ending with the support radius.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            KernelShape::Table { radii, .. } => radii.clone(),
            _ => vec![self.support_radius()],
        }
    }

    /// Weight prefactor for scale `epsilon`.
    pub fn scale(&self, epsilon: f64) -> f64 {
        if self.normalized {
            epsilon.powi(-(self.intrinsic_dim as i32))
        } else {
            1.0
        }
    }

    /// Checks the profile is non-increasing, positive at zero and compactly supported.
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(GraphError::InvalidKernel(s));
        match &self.shape {
            KernelShape::Indicator { height, radius } => {
                if !(height.is_finite() && *height > 0.0) {
                    return bad(format!("indicator height {height} must be positive"));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad(format!("indicator radius {radius} must be positive"));
                }
            }
            KernelShape::Triangular { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad(format!("triangular radius {radius} must be positive"));
                }
            }
            KernelShape::Table { radii, values } => {
                if radii.is_empty() || radii.len() != values.len() {
                    return bad("table needs one value per radius".into());
                }
                if radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("table radii must be positive and increasing".into());
                }
                if radii.iter().chain(values).any(|x| !x.is_finite()) || values.iter().any(|v| *v < 0.0) {
                    return bad("table entries must be finite and values nonnegative".into());
                }
            }
        }
        let r = self.support_radius();
        if self.eval(0.0) <= 0.0 {
            return bad("eta(0) must be positive".into());
        }
        let grid: Vec<f64> = (0..=ADMISSIBILITY_GRID)
            .map(|s| 1.5 * r * s as f64 / ADMISSIBILITY_GRID as f64)
            .collect();
        for w in grid.windows(2) {
            if self.eval(w[1]) > self.eval(w[0]) {
                return bad(format!("eta increases between {} and {}", w[0], w[1]));
            }
        }
        if grid.iter().any(|&t| t > r && self.eval(t) != 0.0) {
            return bad("eta must vanish past its support radius".into());
        }
        Ok(())
    }
}

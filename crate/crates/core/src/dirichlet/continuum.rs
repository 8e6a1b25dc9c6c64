//! Continuum energy and Laplace–Beltrami operator on the translation family.
//!
//! For measures `E(theta) = base + theta`, the tangent norm of a parameter
//! direction `h` is `|h|`, so the continuum energy of `f = f_hat o E^{-1}` is
//!
//! ```text
//! E_inf(f) = int_S int_{R^d} |grad f_hat(theta) . h|^p eta(|h|) rho(theta)^2 dh dtheta
//! ```
//!
//! and its first-variation operator is
//!
//! ```text
//! Delta f(theta) = -(p / rho(theta)) int h . grad_theta[eta(|h|) rho^2 |G|^{p-2} G] dh,
//!                  G = grad f_hat(theta) . h.
//! ```
//!
//! The `h` integral is taken in polar coordinates `h = r w`: a midpoint rule in
//! `r` on each smooth piece of `eta`, and a midpoint rule over the angles of the
//! unit sphere (`d <= 3`). The `theta` integral is a midpoint tensor grid on the
//! density box, aligned with the density's breakpoints.

use serde::{Deserialize, Serialize};

use super::{abs_pow, signed_pow, DirichletError, Result};
use crate::graph::Kernel;
use crate::transport::pairwise_sum;

/// Density `rho_S` of the parameter distribution on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    /// Uniform on `[lower, upper]`.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// Uniform-box density tilted by `1 + slope . (theta - center)`; `slope` must
    /// keep it positive on the box.
    Affine {
        lower: Vec<f64>,
        upper: Vec<f64>,
        slope: Vec<f64>,
    },
    /// Product of one-dimensional piecewise-constant densities; axis `a` takes
    /// value `values[a][k]` on `[breakpoints[a][k], breakpoints[a][k+1]]`.
    Piecewise {
        breakpoints: Vec<Vec<f64>>,
        values: Vec<Vec<f64>>,
    },
}

impl Density {
    pub fn uniform_unit(dim: usize) -> Self {
        Density::Uniform {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Density::Uniform { lower, .. } | Density::Affine { lower, .. } => lower.len(),
            Density::Piecewise { breakpoints, .. } => breakpoints.len(),
        }
    }

    /// Per-axis grid breakpoints, box ends included.
    fn axis_breaks(&self) -> Vec<Vec<f64>> {
        match self {
            Density::Uniform { lower, upper } | Density::Affine { lower, upper, .. } => {
                lower.iter().zip(upper).map(|(&a, &b)| vec![a, b]).collect()
            }
            Density::Piecewise { breakpoints, .. } => breakpoints.clone(),
        }
    }

    fn volume(lower: &[f64], upper: &[f64]) -> f64 {
        lower.iter().zip(upper).map(|(a, b)| b - a).product()
    }

    fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(DirichletError::InvalidSpec(s.to_string()));
        for breaks in self.axis_breaks() {
            if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
                return bad("density box must have increasing breakpoints");
            }
            if breaks.iter().any(|x| !x.is_finite()) {
                return bad("density box must be finite");
            }
        }
        match self {
            Density::Uniform { lower, upper } => {
                if lower.len() != upper.len() {
                    return bad("box bounds differ in dimension");
                }
            }
            Density::Affine { lower, upper, slope } => {
                if lower.len() != upper.len() || slope.len() != lower.len() {
                    return bad("box bounds and slope differ in dimension");
                }
                let half_range: f64 = slope
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(s, (a, b))| s.abs() * (b - a) / 2.0)
                    .sum();
                if half_range >= 1.0 {
                    return bad("affine density must stay positive on the box");
                }
            }
            Density::Piecewise { breakpoints, values } => {
                if breakpoints.len() != values.len() {
                    return bad("one value list per axis");
                }
                for (b, v) in breakpoints.iter().zip(values) {
                    if v.len() + 1 != b.len() {
                        return bad("one more breakpoint than values per axis");
                    }
                    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                        return bad("piecewise density must be positive on its box");
                    }
                    let mass: f64 = v.iter().zip(b.windows(2)).map(|(x, w)| x * (w[1] - w[0])).sum();
                    if (mass - 1.0).abs() > 1e-12 {
                        return bad("each axis density must integrate to 1");
                    }
                }
            }
        }
        Ok(())
    }

    /// `rho(theta)`; zero outside the box.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        let breaks = self.axis_breaks();
        let inside = theta
            .iter()
            .zip(&breaks)
            .all(|(t, b)| *t >= b[0] && *t <= b[b.len() - 1]);
        if !inside {
            return 0.0;
        }
        match self {
            Density::Uniform { lower, upper } => 1.0 / Self::volume(lower, upper),
            Density::Affine { lower, upper, slope } => {
                let tilt: f64 = slope
                    .iter()
                    .zip(theta)
                    .zip(lower.iter().zip(upper))
                    .map(|((s, t), (a, b))| s * (t - (a + b) / 2.0))
                    .sum();
                (1.0 + tilt) / Self::volume(lower, upper)
            }
            Density::Piecewise { breakpoints, values } => theta
                .iter()
                .zip(breakpoints.iter().zip(values))
                .map(|(t, (b, v))| {
                    let k = b.windows(2).position(|w| *t <= w[1]).unwrap_or(v.len() - 1);
                    v[k]
                })
                .product(),
        }
    }

    /// `grad rho(theta)` at points where the density is differentiable; `None`
    /// on the box boundary, outside it, or on a breakpoint.
    pub fn gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        for (t, b) in theta.iter().zip(self.axis_breaks()) {
            if b.iter().any(|x| x == t) || *t < b[0] || *t > b[b.len() - 1] {
                return None;
            }
        }
        Some(match self {
            Density::Uniform { .. } | Density::Piecewise { .. } => vec![0.0; theta.len()],
            Density::Affine { lower, upper, slope } => {
                let vol = Self::volume(lower, upper);
                slope.iter().map(|s| s / vol).collect()
            }
        })
    }
}

/// Test function `f_hat(theta) = 1/2 theta^T H theta + a . theta + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Linear { a: Vec<f64>, b: f64 },
    /// `hessian` is the row-major symmetric `d x d` matrix `H`.
    Quadratic { hessian: Vec<f64>, a: Vec<f64>, b: f64 },
}

impl TestFunction {
    fn dim(&self) -> usize {
        match self {
            TestFunction::Linear { a, .. } | TestFunction::Quadratic { a, .. } => a.len(),
        }
    }

    fn hessian(&self) -> Vec<f64> {
        match self {
            TestFunction::Linear { a, .. } => vec![0.0; a.len() * a.len()],
            TestFunction::Quadratic { hessian, .. } => hessian.clone(),
        }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        let d = self.dim();
        let h = self.hessian();
        let (a, b) = match self {
            TestFunction::Linear { a, b } | TestFunction::Quadratic { a, b, .. } => (a, *b),
        };
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += theta[i] * h[i * d + j] * theta[j];
            }
        }
        0.5 * quad + a.iter().zip(theta).map(|(x, t)| x * t).sum::<f64>() + b
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let h = self.hessian();
        let a = match self {
            TestFunction::Linear { a, .. } | TestFunction::Quadratic { a, .. } => a,
        };
        (0..d)
            .map(|i| a[i] + (0..d).map(|j| h[i * d + j] * theta[j]).sum::<f64>())
            .collect()
    }

    /// `self + delta * other` (same dimension).
    pub fn add_scaled(&self, other: &TestFunction, delta: f64) -> TestFunction {
        let d = self.dim();
        let (a1, b1) = match self {
            TestFunction::Linear { a, b } | TestFunction::Quadratic { a, b, .. } => (a, *b),
        };
        let (a2, b2) = match other {
            TestFunction::Linear { a, b } | TestFunction::Quadratic { a, b, .. } => (a, *b),
        };
        let hessian: Vec<f64> = self
            .hessian()
            .iter()
            .zip(other.hessian())
            .map(|(x, y)| x + delta * y)
            .collect();
        debug_assert_eq!(hessian.len(), d * d);
        TestFunction::Quadratic {
            hessian,
            a: a1.iter().zip(a2).map(|(x, y)| x + delta * y).collect(),
            b: b1 + delta * b2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumSpec {
    pub density: Density,
    pub function: TestFunction,
    pub kernel: Kernel,
    pub p: f64,
}

/// Quadrature value at resolution `N` with an error estimate from resolution `N/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub value: f64,
    /// `|Q(N) - Q(N/2)|`, which bounds the error of `Q(N)` when the rule is in its
    /// `O(h^2)` regime.
    pub error_estimate: f64,
    /// Richardson extrapolation `Q(N) + (Q(N) - Q(N/2)) / 3`.
    pub extrapolated: f64,
}

impl ContinuumSpec {
    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(1..=3).contains(&d) {
            return Err(DirichletError::InvalidSpec(format!(
                "parameter dimension {d} unsupported (1 to 3)"
            )));
        }
        self.density.validate()?;
        if self.function.dim() != d {
            return Err(DirichletError::InvalidSpec("test function dimension differs".into()));
        }
        if let TestFunction::Quadratic { hessian, .. } = &self.function {
            if hessian.len() != d * d {
                return Err(DirichletError::InvalidSpec("hessian must be d x d".into()));
            }
        }
        self.kernel
            .validate()
            .map_err(|e| DirichletError::InvalidSpec(e.to_string()))?;
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(DirichletError::InvalidExponent(self.p));
        }
        Ok(())
    }
}

fn check_resolution(n: usize) -> Result<()> {
    if n < 8 || !n.is_multiple_of(2) {
        return Err(DirichletError::InvalidSpec(format!(
            "quadrature resolution must be even and at least 8, got {n}"
        )));
    }
    Ok(())
}

/// `int_0^R eta(r) r^power dr`, midpoint rule with `n` nodes per kernel piece.
fn radial_moment(kernel: &Kernel, power: f64, n: usize) -> f64 {
    let mut lo = 0.0;
    let mut parts = Vec::new();
    for hi in kernel.breakpoints() {
        let step = (hi - lo) / n as f64;
        for s in 0..n {
            let r = lo + (s as f64 + 0.5) * step;
            parts.push(kernel.eval(r) * r.powf(power) * step);
        }
        lo = hi;
    }
    pairwise_sum(&parts)
}

/// Midpoint nodes and weights on the unit sphere `S^{d-1}` (`d <= 3`).
fn sphere_rule(d: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    use std::f64::consts::PI;
    match d {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => (0..n)
            .map(|s| {
                let phi = 2.0 * PI * (s as f64 + 0.5) / n as f64;
                (vec![phi.cos(), phi.sin()], 2.0 * PI / n as f64)
            })
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(2 * n * n);
            for s in 0..n {
                let polar = PI * (s as f64 + 0.5) / n as f64;
                for t in 0..2 * n {
                    let az = PI * (t as f64 + 0.5) / n as f64;
                    let w = polar.sin() * (PI / n as f64) * (PI / n as f64);
                    out.push((
                        vec![polar.sin() * az.cos(), polar.sin() * az.sin(), polar.cos()],
                        w,
                    ));
                }
            }
            out
        }
    }
}

/// Midpoint tensor grid over the density box, aligned with its breakpoints.
fn theta_grid(density: &Density, n: usize) -> Vec<(Vec<f64>, f64)> {
    let axes: Vec<Vec<(f64, f64)>> = density
        .axis_breaks()
        .iter()
        .map(|b| {
            b.windows(2)
                .flat_map(|w| {
                    let step = (w[1] - w[0]) / n as f64;
                    (0..n).map(move |s| (w[0] + (s as f64 + 0.5) * step, step))
                })
                .collect()
        })
        .collect();
    let mut grid = vec![(Vec::new(), 1.0)];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|(pt, w)| {
                axis.iter().map(move |&(x, dx)| {
                    let mut next = pt.clone();
                    next.push(x);
                    (next, w * dx)
                })
            })
            .collect();
    }
    grid
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy_at_resolution(spec: &ContinuumSpec, n: usize) -> f64 {
    let d = spec.dim();
    let moment = radial_moment(&spec.kernel, spec.p + d as f64 - 1.0, n);
    let sphere = sphere_rule(d, n);
    let terms: Vec<f64> = theta_grid(&spec.density, n)
        .into_iter()
        .map(|(theta, w)| {
            let rho = spec.density.eval(&theta);
            let g = spec.function.gradient(&theta);
            let angular: f64 = sphere.iter().map(|(om, wt)| wt * abs_pow(dot(&g, om), spec.p)).sum();
            w * rho * rho * angular
        })
        .collect();
    moment * pairwise_sum(&terms)
}

/// Continuum energy by quadrature with `quadrature_points` nodes per axis and kernel piece.
pub fn continuum_energy(spec: &ContinuumSpec, quadrature_points: usize) -> Result<Quadrature> {
    spec.validate()?;
    check_resolution(quadrature_points)?;
    let fine = energy_at_resolution(spec, quadrature_points);
    let coarse = energy_at_resolution(spec, quadrature_points / 2);
    Ok(Quadrature {
        value: fine,
        error_estimate: (fine - coarse).abs(),
        extrapolated: fine + (fine - coarse) / 3.0,
    })
}

fn laplace_beltrami_at_resolution(spec: &ContinuumSpec, theta: &[f64], grad_rho: &[f64], n: usize) -> f64 {
    let d = spec.dim();
    let p = spec.p;
    let rho = spec.density.eval(theta);
    let g = spec.function.gradient(theta);
    let h = spec.function.hessian();
    let moment = radial_moment(&spec.kernel, p + d as f64 - 1.0, n);
    let angular: Vec<f64> = sphere_rule(d, n)
        .iter()
        .map(|(om, wt)| {
            let s = dot(&g, om);
            let curvature: f64 = (0..d)
                .map(|i| om[i] * (0..d).map(|j| h[i * d + j] * om[j]).sum::<f64>())
                .sum();
            let tilt = 2.0 * rho * dot(grad_rho, om) * signed_pow(s, p);
            let bend = rho * rho * (p - 1.0) * abs_pow(s, p - 2.0) * curvature;
            wt * (tilt + bend)
        })
        .collect();
    -(p / rho) * moment * pairwise_sum(&angular)
}

/// Laplace–Beltrami operator of the translation family at an interior parameter `theta`.
pub fn laplace_beltrami_translation(
    spec: &ContinuumSpec,
    theta: &[f64],
    quadrature_points: usize,
) -> Result<Quadrature> {
    spec.validate()?;
    check_resolution(quadrature_points)?;
    if spec.p < 2.0 {
        return Err(DirichletError::InvalidExponent(spec.p));
    }
    if theta.len() != spec.dim() {
        return Err(DirichletError::ShapeMismatch {
            expected: spec.dim(),
            found: theta.len(),
        });
    }
    let grad_rho = spec
        .density
        .gradient(theta)
        .ok_or_else(|| DirichletError::BoundaryPoint(theta.to_vec()))?;
    let fine = laplace_beltrami_at_resolution(spec, theta, &grad_rho, quadrature_points);
    let coarse = laplace_beltrami_at_resolution(spec, theta, &grad_rho, quadrature_points / 2);
    Ok(Quadrature {
        value: fine,
        error_estimate: (fine - coarse).abs(),
        extrapolated: fine + (fine - coarse) / 3.0,
    })
}

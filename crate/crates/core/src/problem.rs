//! Problem data for the convection-diffusion-reaction equation
//! ∂_t u − ε∆u + b·∇u + αu = f on the unit square: coefficients, forcing,
//! initial and boundary values, plus the two built-in manufactured solutions
//! with hand-derived closed-form derivatives (the forcing is evaluated at
//! every quadrature point, so it must be cheap and exact).

use crate::{Error, Result};

/// Built-in manufactured solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// A hill of amplitude arctan(5π)/3 rotating counterclockwise on a
    /// circle of radius 1/4 around the domain center while its height
    /// oscillates through zero twice per revolution; period 1. Smooth in
    /// space, continuous in time with a slope kink at t̂ = 1/2 (and at the
    /// period wrap), non-homogeneous Dirichlet data given by its trace.
    RotatingHill,
    /// A hump centered in the domain whose height follows sin(πt) and whose
    /// flank steepness scales with ε^{-1/2}; cut off by x(1-x)y(1-y), so the
    /// boundary values are homogeneous. Convection-dominated for small ε.
    MovingHump,
}

/// Which goal functional a run targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalKind {
    /// L²-norm of the error over the whole space-time cylinder.
    SpaceTimeError,
    /// L²-norm of the error at the final time.
    FinalTimeError,
}

/// Closed-form values of a manufactured solution at one space-time point.
#[derive(Debug, Clone, Copy)]
pub struct ExactValues {
    pub u: f64,
    pub dt: f64,
    pub grad: (f64, f64),
    pub laplace: f64,
}

/// Coefficients and data of one problem instance.
#[derive(Debug, Clone)]
pub struct Problem {
    pub epsilon: f64,
    pub convection: (f64, f64),
    pub reaction: f64,
    pub final_time: f64,
    /// Scale δ₀ of the streamline-diffusion stabilization (0 disables it).
    pub delta0: f64,
    preset: Preset,
}

impl Problem {
    /// The rotating-hill problem: ε = 1, b = (2,3)ᵀ, α = 1, T = 1, no
    /// stabilization.
    pub fn rotating_hill() -> Self {
        Self {
            epsilon: 1.0,
            convection: (2.0, 3.0),
            reaction: 1.0,
            final_time: 1.0,
            delta0: 0.0,
            preset: Preset::RotatingHill,
        }
    }

    /// The moving-hump problem at the given diffusion coefficient:
    /// b = (2,3)ᵀ, α = 1, T = 1/2, stabilization scale δ₀ = 1.
    pub fn moving_hump(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "diffusion coefficient must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            convection: (2.0, 3.0),
            reaction: 1.0,
            final_time: 0.5,
            delta0: 1.0,
            preset: Preset::MovingHump,
        })
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    pub fn preset_name(&self) -> &'static str {
        match self.preset {
            Preset::RotatingHill => "ex1-rotating-hill",
            Preset::MovingHump => "ex2-moving-hump",
        }
    }

    /// The goal functional conventionally paired with this problem.
    pub fn default_goal(&self) -> GoalKind {
        match self.preset {
            Preset::RotatingHill => GoalKind::SpaceTimeError,
            Preset::MovingHump => GoalKind::FinalTimeError,
        }
    }

    /// Exact solution value.
    pub fn exact(&self, x: f64, y: f64, t: f64) -> f64 {
        self.exact_all(x, y, t).u
    }

    /// Exact solution and derivatives.
    pub fn exact_all(&self, x: f64, y: f64, t: f64) -> ExactValues {
        match self.preset {
            Preset::RotatingHill => rotating_hill_values(x, y, t),
            Preset::MovingHump => moving_hump_values(x, y, t, self.epsilon),
        }
    }

    /// Forcing consistent with the exact solution:
    /// f = ∂_t u − ε∆u + b·∇u + αu.
    pub fn forcing(&self, x: f64, y: f64, t: f64) -> f64 {
        let v = self.exact_all(x, y, t);
        v.dt - self.epsilon * v.laplace
            + self.convection.0 * v.grad.0
            + self.convection.1 * v.grad.1
            + self.reaction * v.u
    }

    /// Initial value u(·, 0).
    pub fn initial(&self, x: f64, y: f64) -> f64 {
        self.exact(x, y, 0.0)
    }

    /// Dirichlet boundary value; the point must lie on ∂(0,1)².
    pub fn dirichlet(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        let on_boundary = [x, y, 1.0 - x, 1.0 - y]
            .iter()
            .any(|&d| d.abs() <= 1e-12);
        let inside = (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y);
        if !on_boundary || !inside {
            return Err(Error::InvalidInput(format!(
                "point ({x}, {y}) is not on the domain boundary"
            )));
        }
        Ok(self.trace(x, y, t))
    }

    /// Boundary trace without membership validation (used by the solver at
    /// nodes already classified as boundary nodes).
    pub fn trace(&self, x: f64, y: f64, t: f64) -> f64 {
        match self.preset {
            Preset::RotatingHill => self.exact(x, y, t),
            Preset::MovingHump => 0.0,
        }
    }
}

/// Rotating hill: u = ν₁(t̂)·s·arctan(ν₂(t̂)) / (1 + a‖x − m(t)‖²) with
/// m(t) = (1/2 + cos(2πt)/4, 1/2 + sin(2πt)/4), s = 1/3, a = 50, and the
/// two half-period branches ν₁ = ∓1, ν₂ = 5π(4t̂ − 1) resp. 5π(4t̂ − 3).
/// Continuous across t̂ = 1/2 and the period wrap (both one-sided limits are
/// ∓s·arctan(5π)); the time derivative jumps there.
fn rotating_hill_values(x: f64, y: f64, t: f64) -> ExactValues {
    const S: f64 = 1.0 / 3.0;
    const A: f64 = 50.0;
    let two_pi_t = 2.0 * std::f64::consts::PI * t;
    let m1 = 0.5 + two_pi_t.cos() / 4.0;
    let m2 = 0.5 + two_pi_t.sin() / 4.0;
    let m1_dt = -0.5 * std::f64::consts::PI * two_pi_t.sin();
    let m2_dt = 0.5 * std::f64::consts::PI * two_pi_t.cos();

    let th = t - t.floor();
    let five_pi = 5.0 * std::f64::consts::PI;
    let (nu1, nu2) = if th < 0.5 {
        (-1.0, five_pi * (4.0 * th - 1.0))
    } else {
        (1.0, five_pi * (4.0 * th - 3.0))
    };
    let p = nu1 * S * nu2.atan();
    let p_dt = nu1 * S * (4.0 * five_pi) / (1.0 + nu2 * nu2);

    let dx = x - m1;
    let dy = y - m2;
    let r2 = dx * dx + dy * dy;
    let d = 1.0 + A * r2;
    let d2 = d * d;
    let r2_dt = -2.0 * (dx * m1_dt + dy * m2_dt);

    ExactValues {
        u: p / d,
        dt: p_dt / d - p * A * r2_dt / d2,
        grad: (-2.0 * A * p * dx / d2, -2.0 * A * p * dy / d2),
        laplace: -4.0 * A * p / d2 + 8.0 * A * A * p * r2 / (d2 * d),
    }
}

/// Moving hump: u = (16/π)·sin(πt)·x(1−x)y(1−y)·(1/2 + arctan(w)) with
/// w = 2ε^{-1/2}(r₀² − (x−1/2)² − (y−1/2)²) and r₀ = 1/4.
fn moving_hump_values(x: f64, y: f64, t: f64, epsilon: f64) -> ExactValues {
    const R0: f64 = 0.25;
    let pi = std::f64::consts::PI;
    let s = (16.0 / pi) * (pi * t).sin();
    let s_dt = 16.0 * (pi * t).cos();

    let b = x * (1.0 - x) * y * (1.0 - y);
    let bx = (1.0 - 2.0 * x) * y * (1.0 - y);
    let by = x * (1.0 - x) * (1.0 - 2.0 * y);
    let bxx = -2.0 * y * (1.0 - y);
    let byy = -2.0 * x * (1.0 - x);

    let c = 2.0 / epsilon.sqrt();
    let px = x - 0.5;
    let py = y - 0.5;
    let w = c * (R0 * R0 - px * px - py * py);
    let g = 1.0 / (1.0 + w * w);
    let a = 0.5 + w.atan();
    let ax = -2.0 * c * px * g;
    let ay = -2.0 * c * py * g;
    let axx = -2.0 * c * g - 2.0 * w * (2.0 * c * px) * (2.0 * c * px) * g * g;
    let ayy = -2.0 * c * g - 2.0 * w * (2.0 * c * py) * (2.0 * c * py) * g * g;

    ExactValues {
        u: s * b * a,
        dt: s_dt * b * a,
        grad: (s * (bx * a + b * ax), s * (by * a + b * ay)),
        laplace: s * ((bxx + byy) * a + 2.0 * (bx * ax + by * ay) + b * (axx + ayy)),
    }
}

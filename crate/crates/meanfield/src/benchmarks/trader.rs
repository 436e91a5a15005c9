//! Closed-form solutions of the execution problem.
//!
//! Both regimes admit linear feedback controls whose coefficients solve
//! scalar Riccati equations backward from the terminal penalty. In the
//! competitive (game) solution the adjoint ansatz `Y_t = η_t X_t + χ_t`
//! with mean ansatz `ȳ_t = η̄_t x̄_t` gives
//!
//! - `η̇ = η²/c_α − c_X`, `η_T = c_g` (individual slope),
//! - `η̄̇ = (η̄² − γ·η̄)/c_α − c_X`, `η̄_T = c_g` (mean slope),
//! - `x̄_t = x̄_0·exp(−∫_0^t η̄_s ds / c_α)`, `χ_t = (η̄_t − η_t)·x̄_t`,
//! - control `α̂(t, x) = −(η_t·x + χ_t)/c_α`.
//!
//! In the cooperative (planner) solution the optimality condition picks up
//! the derivative of the Hamiltonian with respect to the control
//! distribution; the individual slope `φ_t` coincides with `η_t`, while the
//! mean slope solves
//!
//! - `φ̄̇ = (φ̄ − γ)²/c_α − c_X`, `φ̄_T = c_g`,
//! - `x̄_t = x̄_0·exp(−(∫_0^t φ̄_s ds − γ·t)/c_α)`,
//! - control `α*(t, x) = −(φ_t·x + (φ̄_t − φ_t − γ)·x̄_t)/c_α`.
//!
//! With zero price impact the two mean slopes solve the same equation and
//! the two controls coincide.

use crate::benchmarks::cumulative_simpson;
use crate::env::TraderParams;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

const SINGULARITY_GUARD: f64 = 1e-10;
/// Refinement of the Simpson rule relative to the evaluation grid.
const SIMPSON_REFINE: usize = 10;

/// Individual slope `η_t`: the explicit solution of
/// `η̇ = η²/c_α − c_X, η_T = c_g`.
pub fn mfg_individual_slope_at(params: &TraderParams, t: f64) -> f64 {
    let kappa = (params.trading_cost * params.inventory_cost).sqrt();
    let s = (params.inventory_cost / params.trading_cost).sqrt();
    let e = (2.0 * s * (params.horizon - t)).exp();
    let c_g = params.terminal_cost;
    -kappa * (kappa - c_g - (kappa + c_g) * e) / (kappa - c_g + (kappa + c_g) * e)
}

/// Mean slope `η̄_t` of the competitive solution.
pub fn mfg_mean_slope_at(params: &TraderParams, t: f64) -> Result<f64> {
    let b = 1.0 / params.trading_cost;
    let c = params.inventory_cost;
    let d = -params.price_impact / (2.0 * params.trading_cost);
    let r = d * d + b * c;
    let delta_plus = -d + r.sqrt();
    let delta_minus = -d - r.sqrt();
    let c_g = params.terminal_cost;
    let e = ((delta_plus - delta_minus) * (params.horizon - t)).exp();
    let numerator = -c * (e - 1.0) - c_g * (delta_plus * e - delta_minus);
    let denominator = (delta_minus * e - delta_plus) - c_g * b * (e - 1.0);
    if denominator.abs() < SINGULARITY_GUARD {
        return Err(Error::SingularRiccati { t });
    }
    Ok(numerator / denominator)
}

/// Mean slope `φ̄_t` of the cooperative solution.
pub fn mfc_mean_slope_at(params: &TraderParams, t: f64) -> Result<f64> {
    let r = 1.0 / params.trading_cost;
    let gamma = params.price_impact;
    let a = 2.0 * gamma * r;
    let b = r * (gamma * gamma * r - params.inventory_cost);
    let discriminant = a * a - 4.0 * b;
    if discriminant < 0.0 {
        return Err(Error::ParameterRegime(format!(
            "complex Riccati roots (discriminant {discriminant})"
        )));
    }
    let c1 = (-a + discriminant.sqrt()) / 2.0;
    let c2 = (-a - discriminant.sqrt()) / 2.0;
    let c_g = params.terminal_cost;
    let e = ((params.horizon - t) * (c2 - c1)).exp();
    let numerator = (c2 + r * c_g) * c1 * e - c2 * (c1 + r * c_g);
    let denominator = (c2 + r * c_g) * e - (c1 + r * c_g);
    if denominator.abs() < SINGULARITY_GUARD {
        return Err(Error::SingularRiccati { t });
    }
    Ok(-numerator / (r * denominator))
}

/// Coefficient functions of the competitive solution evaluated on a time
/// grid.
#[derive(Debug, Clone)]
pub struct TraderMfgSolution {
    params: TraderParams,
    times: Vec<f64>,
    /// `η_t`.
    pub individual_slope: Vec<f64>,
    /// `η̄_t`.
    pub mean_slope: Vec<f64>,
    /// `x̄_t`.
    pub mean_state: Vec<f64>,
    /// `χ_t = (η̄_t − η_t)·x̄_t`.
    pub intercept: Vec<f64>,
}

impl TraderMfgSolution {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn params(&self) -> &TraderParams {
        &self.params
    }

    /// Equilibrium feedback control `α̂(t_n, x)`.
    pub fn control(&self, n: usize, x: f64) -> f64 {
        -(self.individual_slope[n] * x + self.intercept[n]) / self.params.trading_cost
    }

    /// Population mean trading rate `E[α̂(t_n, X_{t_n})]`.
    pub fn mean_control(&self, n: usize) -> f64 {
        -self.mean_slope[n] * self.mean_state[n] / self.params.trading_cost
    }
}

/// Evaluates the competitive closed form on `grid`, with the `x̄` integral
/// computed by composite Simpson on a 10× refinement.
pub fn trader_mfg_solve(
    params: &TraderParams,
    x_bar_0: f64,
    grid: &TimeGrid,
) -> Result<TraderMfgSolution> {
    params.validate()?;
    let times = grid.points();
    let individual_slope: Vec<f64> =
        times.iter().map(|&t| mfg_individual_slope_at(params, t)).collect();
    let mean_slope: Vec<f64> =
        times.iter().map(|&t| mfg_mean_slope_at(params, t)).collect::<Result<_>>()?;
    // Guard the refinement points too before integrating through them.
    let integral = cumulative_simpson(&times, SIMPSON_REFINE, |t| {
        mfg_mean_slope_at(params, t).unwrap_or(f64::NAN)
    });
    if integral.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularRiccati { t: f64::NAN });
    }
    let mean_state: Vec<f64> = integral
        .iter()
        .map(|&int| x_bar_0 * (-int / params.trading_cost).exp())
        .collect();
    let intercept: Vec<f64> = (0..times.len())
        .map(|n| (mean_slope[n] - individual_slope[n]) * mean_state[n])
        .collect();
    Ok(TraderMfgSolution {
        params: *params,
        times,
        individual_slope,
        mean_slope,
        mean_state,
        intercept,
    })
}

/// Coefficient functions of the cooperative solution evaluated on a time
/// grid.
#[derive(Debug, Clone)]
pub struct TraderMfcSolution {
    params: TraderParams,
    times: Vec<f64>,
    /// `φ_t`, identical to the competitive `η_t`.
    pub individual_slope: Vec<f64>,
    /// `φ̄_t`.
    pub mean_slope: Vec<f64>,
    /// `x̄_t`.
    pub mean_state: Vec<f64>,
    /// `ψ_t = (φ̄_t − φ_t)·x̄_t`.
    pub intercept: Vec<f64>,
}

impl TraderMfcSolution {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn params(&self) -> &TraderParams {
        &self.params
    }

    /// Optimal feedback control `α*(t_n, x)`.
    pub fn control(&self, n: usize, x: f64) -> f64 {
        let gamma = self.params.price_impact;
        -(self.individual_slope[n] * x
            + (self.mean_slope[n] - self.individual_slope[n] - gamma) * self.mean_state[n])
            / self.params.trading_cost
    }

    /// Population mean trading rate `E[α*(t_n, X_{t_n})]`.
    pub fn mean_control(&self, n: usize) -> f64 {
        -(self.mean_slope[n] - self.params.price_impact) * self.mean_state[n]
            / self.params.trading_cost
    }
}

/// Evaluates the cooperative closed form on `grid`.
pub fn trader_mfc_solve(
    params: &TraderParams,
    x_bar_0: f64,
    grid: &TimeGrid,
) -> Result<TraderMfcSolution> {
    params.validate()?;
    let times = grid.points();
    let individual_slope: Vec<f64> =
        times.iter().map(|&t| mfg_individual_slope_at(params, t)).collect();
    let mean_slope: Vec<f64> =
        times.iter().map(|&t| mfc_mean_slope_at(params, t)).collect::<Result<_>>()?;
    let integral = cumulative_simpson(&times, SIMPSON_REFINE, |t| {
        mfc_mean_slope_at(params, t).unwrap_or(f64::NAN)
    });
    if integral.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularRiccati { t: f64::NAN });
    }
    let mean_state: Vec<f64> = times
        .iter()
        .zip(integral.iter())
        .map(|(&t, &int)| {
            x_bar_0 * (-(int - params.price_impact * t) / params.trading_cost).exp()
        })
        .collect();
    let intercept: Vec<f64> = (0..times.len())
        .map(|n| (mean_slope[n] - individual_slope[n]) * mean_state[n])
        .collect();
    Ok(TraderMfcSolution {
        params: *params,
        times,
        individual_slope,
        mean_slope,
        mean_state,
        intercept,
    })
}

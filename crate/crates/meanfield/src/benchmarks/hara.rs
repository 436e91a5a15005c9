//! Fixed-point solution of the accumulation game.
//!
//! With mean investment path `z = (z_0, …, z_{T−1})` define
//! `Φ(z) = ρ·E[G^γ(z, W)]`, `φ(z) = Φ(z)^{1/(γ−1)}` and `Ψ(z) = E[G(z, W)]`.
//! Against a fixed path the best response is linear in wealth,
//! `α̂_t(x) = x/(1 + φ(z_t)·D_{t+1})`, with value coefficients
//! `D_t = φ(z_t)·D_{t+1}/(1 + φ(z_t)·D_{t+1})`, `D_T = 1`, and the final
//! investment forced to zero. The equilibrium path is the fixed point of the
//! map `Λ` that sends a candidate path to the mean investment it induces:
//!
//! `Λ_k(z) = m_0 · Ψ(z_0)···Ψ(z_{k−1}) · R_{k+1}(z)/R_0(z)`,
//!
//! where `R_j(z) = Σ_{l=j}^{T} Π_{m=l}^{T−1} φ(z_m)` (empty products are 1).
//! The fixed point is found by damped Picard iteration.

use crate::env::HaraParams;
use crate::error::Result;

/// `Φ(z) = ρ·E[(g(z)·W)^γ] = ρ·E[W^γ]·g(z)^γ`.
pub fn big_phi(params: &HaraParams, z: f64) -> f64 {
    let gamma = params.utility_exponent;
    params.discount
        * params.noise_moment(gamma)
        * params.production_factor(z).powf(gamma)
}

/// `φ(z) = Φ(z)^{1/(γ−1)}`. Increasing in `z` for `γ ∈ (0, 1)` since `Φ` is
/// decreasing and the exponent is negative.
pub fn phi(params: &HaraParams, z: f64) -> f64 {
    big_phi(params, z).powf(1.0 / (params.utility_exponent - 1.0))
}

/// `Ψ(z) = E[G(z, W)] = g(z)·E[W]`.
pub fn psi(params: &HaraParams, z: f64) -> f64 {
    params.production_factor(z) * params.noise_moment(1.0)
}

/// Applies the equilibrium-consistency map `Λ` to a candidate mean
/// investment path.
pub fn lambda_map(params: &HaraParams, m0: f64, z: &[f64]) -> Vec<f64> {
    let horizon = z.len();
    let phis: Vec<f64> = z.iter().map(|&zt| phi(params, zt)).collect();
    // P_j = Π_{m=j}^{T−1} φ(z_m) and R_j = Σ_{l=j}^{T} P_l, built backward
    // from the empty product P_T = 1.
    let mut p = vec![0.0; horizon + 1];
    p[horizon] = 1.0;
    for j in (0..horizon).rev() {
        p[j] = phis[j] * p[j + 1];
    }
    let mut big_r = vec![0.0; horizon + 2];
    for j in (0..=horizon).rev() {
        big_r[j] = big_r[j + 1] + p[j];
    }

    let mut psi_product = 1.0;
    (0..horizon)
        .map(|k| {
            let value = m0 * psi_product * big_r[k + 1] / big_r[0];
            psi_product *= psi(params, z[k]);
            value
        })
        .collect()
}

/// Equilibrium of the accumulation game: the fixed-point mean investment
/// path, the value coefficients and the linear feedback controls.
#[derive(Debug, Clone)]
pub struct HaraMfgSolution {
    params: HaraParams,
    /// `z*_t` for `t = 0..T−1`.
    pub mean_investment: Vec<f64>,
    /// `D_t` for `t = 0..=T`; `D_T = 1`.
    pub value_coefficients: Vec<f64>,
    /// Sup-norm of `Λ(z*) − z*` at return.
    pub residual: f64,
    pub converged: bool,
    phis: Vec<f64>,
}

impl HaraMfgSolution {
    pub fn params(&self) -> &HaraParams {
        &self.params
    }

    /// Number of decision periods `T`.
    pub fn horizon(&self) -> usize {
        self.mean_investment.len()
    }

    /// Slope of the linear feedback control at period `t`:
    /// `1/(1 + φ(z_t)·D_{t+1})` for `t < T`, zero at the horizon.
    pub fn control_slope(&self, t: usize) -> f64 {
        if t >= self.horizon() {
            0.0
        } else {
            1.0 / (1.0 + self.phis[t] * self.value_coefficients[t + 1])
        }
    }

    /// Equilibrium feedback control `α̂_t(x)`; identically zero at `t = T`.
    pub fn control(&self, t: usize, wealth: f64) -> f64 {
        self.control_slope(t) * wealth
    }

    /// Equilibrium mean investment `E[α̂_t]`; zero at the horizon.
    pub fn mean_control(&self, t: usize) -> f64 {
        if t >= self.horizon() {
            0.0
        } else {
            self.mean_investment[t]
        }
    }
}

/// Solves the fixed point by damped Picard iteration
/// `z ← (1−λ)·z + λ·Λ(z)` with `λ = 1/2`, starting from the constant path
/// `(m_0, …, m_0)`, until `‖Λ(z) − z‖_∞ < 1e−10` or 10⁴ iterations. A run
/// that exhausts the budget is returned with `converged = false`.
pub fn hara_mfg_solve(params: &HaraParams, m0: f64, horizon: usize) -> Result<HaraMfgSolution> {
    params.validate()?;
    if !(m0 > 0.0) {
        return Err(crate::error::Error::InvalidConfig(format!(
            "initial mean wealth must be positive, got {m0}"
        )));
    }
    if horizon == 0 {
        return Err(crate::error::Error::InvalidConfig(
            "the accumulation game needs at least one decision period".into(),
        ));
    }
    const DAMPING: f64 = 0.5;
    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 10_000;

    let mut z = vec![m0; horizon];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        let mapped = lambda_map(params, m0, &z);
        residual = z
            .iter()
            .zip(mapped.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual < TOL {
            converged = true;
            break;
        }
        for (zt, mt) in z.iter_mut().zip(mapped.iter()) {
            *zt = (1.0 - DAMPING) * *zt + DAMPING * *mt;
        }
    }

    let phis: Vec<f64> = z.iter().map(|&zt| phi(params, zt)).collect();
    let mut value_coefficients = vec![1.0; horizon + 1];
    for t in (0..horizon).rev() {
        let w = phis[t] * value_coefficients[t + 1];
        value_coefficients[t] = w / (1.0 + w);
    }
    Ok(HaraMfgSolution {
        params: params.clone(),
        mean_investment: z,
        value_coefficients,
        residual,
        converged,
        phis,
    })
}

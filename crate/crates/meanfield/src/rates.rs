//! Two-timescale learning-rate schedules.
//!
//! The whole method turns on the relative decay of two rates: the Q-table
//! rate `ρ^Q = 1/(1 + N_T·visits)^{ω^Q}` driven by per-`(x, a, t_n)` visit
//! counts, and the distribution rate `ρ^ν = 1/(1 + k)^{ω^ν}` driven by the
//! episode index. Choosing `ρ^Q > ρ^ν` (eventually) makes the learner treat
//! the population as quasi-static and converge to the competitive (game)
//! solution; the reverse ordering yields the cooperative (control) solution.

use crate::error::{Error, Result};

/// Exponent pair `(ω^Q, ω^ν)` defining the two learning-rate schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSchedule {
    omega_q: f64,
    omega_nu: f64,
}

impl RateSchedule {
    /// `ω^Q` must lie in `(1/2, 1]`; `ω^ν` in `(0, 1]`. Small `ω^ν` (slowly
    /// decaying, hence fast distribution updates) selects the cooperative
    /// solution, large `ω^ν` the competitive one.
    pub fn new(omega_q: f64, omega_nu: f64) -> Result<Self> {
        if !(omega_q > 0.5 && omega_q <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "omega_q must lie in (0.5, 1], got {omega_q}"
            )));
        }
        if !(omega_nu > 0.0 && omega_nu <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "omega_nu must lie in (0, 1], got {omega_nu}"
            )));
        }
        Ok(Self { omega_q, omega_nu })
    }

    pub fn omega_q(&self) -> f64 {
        self.omega_q
    }

    pub fn omega_nu(&self) -> f64 {
        self.omega_nu
    }

    /// Q-update rate `1/(1 + N_T·visits)^{ω^Q}` for an entry visited `visits`
    /// times (the current visit included).
    pub fn rho_q(&self, n_steps: usize, visits: u64) -> f64 {
        (1.0 + n_steps as f64 * visits as f64).powf(-self.omega_q)
    }

    /// Distribution-update rate `1/(1 + k)^{ω^ν}` at episode `k` (0-based, so
    /// the very first episode overwrites the uninformative initialization).
    pub fn rho_nu(&self, episode: u64) -> f64 {
        (1.0 + episode as f64).powf(-self.omega_nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn validates_exponents() {
        assert!(RateSchedule::new(0.5, 0.5).is_err());
        assert!(RateSchedule::new(1.01, 0.5).is_err());
        assert!(RateSchedule::new(0.7, 0.0).is_err());
        assert!(RateSchedule::new(0.7, 1.2).is_err());
        assert!(RateSchedule::new(0.55, 0.85).is_ok());
        assert!(RateSchedule::new(0.7, 0.05).is_ok());
    }

    #[test]
    fn rho_q_values() {
        let s = RateSchedule::new(0.55, 0.85).unwrap();
        assert_eq!(s.rho_q(5, 0), 1.0);
        // 1/9^0.55 computed independently: exp(-0.55·ln 9).
        assert_abs_diff_eq!(s.rho_q(2, 4), 0.2986528199469207, epsilon = 1e-12);
        let unit = RateSchedule::new(1.0, 0.85).unwrap();
        assert_abs_diff_eq!(unit.rho_q(16, 1), 1.0 / 17.0, epsilon = 1e-15);
    }

    #[test]
    fn rho_nu_values() {
        let s = RateSchedule::new(0.55, 0.85).unwrap();
        assert_eq!(s.rho_nu(0), 1.0);
        // 1/100^0.85 = 10^(-1.7).
        assert_abs_diff_eq!(s.rho_nu(99), 0.0199526231496888, epsilon = 1e-12);
        let slow = RateSchedule::new(0.7, 0.05).unwrap();
        // 1/4^0.05 = exp(-0.05·ln 4).
        assert_abs_diff_eq!(slow.rho_nu(3), 0.9330329915368074, epsilon = 1e-12);
    }

    #[test]
    fn schedules_are_monotone_decreasing() {
        let s = RateSchedule::new(0.55, 0.85).unwrap();
        for k in 0..999u64 {
            assert!(s.rho_nu(k) >= s.rho_nu(k + 1));
            assert!(s.rho_q(3, k) >= s.rho_q(3, k + 1));
        }
    }

    // Partial sums of ρ^ν keep growing while partial sums of (ρ^ν)² plateau,
    // the usual stochastic-approximation conditions for ω^ν ∈ (1/2, 1].
    #[test]
    fn summability_profile() {
        let s = RateSchedule::new(0.55, 0.85).unwrap();
        let sum: f64 = (0..200_000u64).map(|k| s.rho_nu(k)).sum();
        let tail: f64 = (200_000..400_000u64).map(|k| s.rho_nu(k)).sum();
        assert!(tail > 0.05 * sum, "rate sum should keep diverging");
        let sq: f64 = (0..200_000u64).map(|k| s.rho_nu(k).powi(2)).sum();
        let sq_tail: f64 = (200_000..400_000u64).map(|k| s.rho_nu(k).powi(2)).sum();
        assert!(sq_tail < 0.01 * sq, "squared rates should be summable");
    }
}

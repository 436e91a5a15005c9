//! Ground-truth solvers that the learner is measured against: closed-form
//! Riccati solutions for the execution problem (competitive and
//! cooperative), a fixed-point solver for the accumulation game, and an
//! exhaustive feedback-policy oracle for tiny cooperative instances.

mod enumeration;
mod hara;
mod trader;

pub use enumeration::{evaluate_feedback_policy, mfc_policy_enumeration_oracle, PolicyEnumeration};
pub use hara::{big_phi, hara_mfg_solve, lambda_map, phi, psi, HaraMfgSolution};
pub use trader::{
    mfc_mean_slope_at, mfg_individual_slope_at, mfg_mean_slope_at, trader_mfc_solve,
    trader_mfg_solve, TraderMfcSolution, TraderMfgSolution,
};

/// Cumulative integral of `f` on a uniform grid by composite Simpson with
/// `refine` subintervals per grid step (must be even). Returns the integral
/// from the first grid point to each grid point.
pub(crate) fn cumulative_simpson(
    times: &[f64],
    refine: usize,
    mut f: impl FnMut(f64) -> f64,
) -> Vec<f64> {
    assert!(refine >= 2 && refine % 2 == 0, "refinement must be even");
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in times.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let h = (hi - lo) / refine as f64;
        let mut sum = f(lo) + f(hi);
        for i in 1..refine {
            let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += weight * f(lo + i as f64 * h);
        }
        acc += sum * h / 3.0;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let times: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let integral = cumulative_simpson(&times, 10, |t| t * t * t);
        for (i, t) in times.iter().enumerate() {
            assert_abs_diff_eq!(integral[i], t.powi(4) / 4.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn simpson_handles_exponentials() {
        let times: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
        let integral = cumulative_simpson(&times, 10, f64::exp);
        for (i, t) in times.iter().enumerate() {
            assert_abs_diff_eq!(integral[i], t.exp() - 1.0, epsilon = 1e-9);
        }
    }
}

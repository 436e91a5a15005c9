//! Exhaustive feedback-policy search for tiny cooperative instances.
//!
//! The cooperative optimum moves the population with the control, so the
//! cost of a feedback policy must be evaluated under the dynamics it itself
//! induces. On instances small enough to enumerate, this gives an exact
//! oracle: propagate the state distribution under each deterministic
//! feedback policy (the policy's own action marginal entering the costs and
//! the kernel) and keep the cheapest.

use ndarray::Array2;
use rayon::prelude::*;

use crate::deterministic::TabularModel;
use crate::distribution::StateActionDistribution;
use crate::error::{Error, Result};

/// Result of an exhaustive policy search.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEnumeration {
    /// Exact cost of the best policy under its own induced population flow.
    pub cost: f64,
    /// `policy[n][x]`, for all time points; the terminal row is fixed to the
    /// lowest admissible action (no decision is taken there).
    pub policy: Vec<Vec<usize>>,
    /// Number of feedback policies evaluated.
    pub evaluated: u64,
}

/// Exact cost of a feedback policy under its own induced dynamics:
/// `Σ_n Σ_x μ_n(x)·f(x, α_n(x), ν_n) + Σ_x μ_{N_T}(x)·g(x, μ_{N_T})` with
/// `ν_n = μ_n ⊗ δ_{α_n}` and `μ_{n+1}` the kernel pushforward of `μ_n`.
pub fn evaluate_feedback_policy<M: TabularModel + ?Sized>(
    model: &M,
    policy: &[Vec<usize>],
) -> Result<f64> {
    let (nx, na, n_steps) = (model.n_states(), model.n_actions(), model.n_steps());
    assert!(policy.len() > n_steps, "policy must cover every decision time");
    let mut mu = model.initial_distribution();
    let mut total = 0.0;
    let mut row = vec![0.0; nx];
    for (n, controls) in policy.iter().enumerate().take(n_steps) {
        let mut weights = Array2::zeros((nx, na));
        for x in 0..nx {
            weights[(x, controls[x])] = mu[x];
        }
        let nu = StateActionDistribution::from_weights(weights)?;
        let ctx = model.prepare(n, &nu);
        let mut next_mu = vec![0.0; nx];
        for x in 0..nx {
            if mu[x] == 0.0 {
                continue;
            }
            total += mu[x] * model.running_cost(n, x, controls[x], &ctx);
            model.transition_into(n, x, controls[x], &ctx, &mut row);
            for (to, p) in row.iter().enumerate() {
                next_mu[to] += mu[x] * p;
            }
        }
        mu = next_mu;
    }
    for x in 0..nx {
        if mu[x] > 0.0 {
            total += mu[x] * model.terminal_cost(x, &mu);
        }
    }
    Ok(total)
}

/// Enumerates every deterministic feedback policy over the decision times
/// `n = 0..N_T`, evaluates each exactly, and returns the global minimizer
/// (the lexicographically first policy on cost ties). Fails up front when
/// the policy space exceeds `cap`.
pub fn mfc_policy_enumeration_oracle<M: TabularModel + Sync + ?Sized>(
    model: &M,
    cap: u64,
) -> Result<PolicyEnumeration> {
    let (nx, n_steps) = (model.n_states(), model.n_steps());

    // Slot layout: (n, x) in lexicographic order, n major. Earlier slots are
    // more significant so that ascending indices enumerate policies in
    // lexicographic order.
    let slots: Vec<(usize, usize)> =
        (0..n_steps).flat_map(|n| (0..nx).map(move |x| (n, x))).collect();
    let radices: Vec<std::ops::Range<usize>> =
        slots.iter().map(|&(n, x)| model.admissible(n, x)).collect();
    let mut cardinality: u128 = 1;
    for r in &radices {
        if r.is_empty() {
            return Err(Error::InvalidModel(format!(
                "no admissible action at a decision slot ({} states, {} steps)",
                nx, n_steps
            )));
        }
        cardinality = cardinality.saturating_mul(r.len() as u128);
    }
    if cardinality > cap as u128 {
        return Err(Error::SearchSpaceTooLarge { cardinality: cardinality as f64, cap });
    }
    let cardinality = cardinality as u64;

    let decode = |index: u64| -> Vec<Vec<usize>> {
        let mut digits = vec![0usize; slots.len()];
        let mut rest = index;
        for i in (0..slots.len()).rev() {
            let len = radices[i].len() as u64;
            digits[i] = radices[i].start + (rest % len) as usize;
            rest /= len;
        }
        let mut policy: Vec<Vec<usize>> = digits.chunks(nx).map(|c| c.to_vec()).collect();
        // Terminal row: no decision, pinned to the lowest admissible action.
        policy.push((0..nx).map(|x| model.admissible(n_steps, x).start).collect());
        policy
    };

    let best = (0..cardinality)
        .into_par_iter()
        .map(|index| {
            let policy = decode(index);
            let cost = evaluate_feedback_policy(model, &policy)
                .expect("kernel validated during evaluation");
            (cost, index)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("at least one policy exists");

    Ok(PolicyEnumeration { cost: best.0, policy: decode(best.1), evaluated: cardinality })
}

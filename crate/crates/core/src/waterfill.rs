//! Single-user water-filling and the best-response residual map.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::{self, NetworkInstance, PowerProfile, FEASIBILITY_TOL};

const MAX_BISECTIONS: usize = 200;
const SUM_REL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillResult {
    pub allocation: Vec<f64>,
    pub water_level: f64,
    /// Channels with strictly positive allocation, ascending.
    pub active_set: Vec<usize>,
}

/// Maximizes `Σ_k ln(1 + x_k / e_k)` over `x ≥ 0`, `Σ x = budget`,
/// `x ≤ mask`.
///
/// The solution is `x_k = clamp(level − e_k, 0, mask_k)`. Without finite caps
/// the level comes from one pass over the sorted effective noise. With caps it
/// is bracketed by bisection, which fixes the active and capped sets, and
/// then solved in closed form on those sets.
pub fn water_fill(
    effective_noise: &[f64],
    budget: f64,
    mask: Option<&[f64]>,
) -> Result<WaterfillResult> {
    if effective_noise.is_empty() {
        return Err(Error::InvalidInstance("water-filling over zero channels".into()));
    }
    if effective_noise.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("effective noise"));
    }
    if effective_noise.iter().any(|e| *e <= 0.0) {
        return Err(Error::InvalidInstance("effective noise must be positive".into()));
    }
    if !budget.is_finite() {
        return Err(Error::NonFinite("budget"));
    }
    if budget <= 0.0 {
        return Err(Error::InvalidInstance(format!("budget {budget} must be positive")));
    }
    if let Some(m) = mask {
        if m.len() != effective_noise.len() {
            return Err(Error::DimensionMismatch {
                what: "mask entries",
                expected: effective_noise.len(),
                found: m.len(),
            });
        }
        if m.iter().any(|c| c.is_nan() || *c <= 0.0) {
            return Err(Error::InvalidInstance("mask entries must be positive".into()));
        }
        let capacity: f64 = m.iter().sum();
        if capacity < budget {
            return Err(Error::InfeasibleMask { capacity, budget });
        }
    }

    let cap = |k: usize| mask.map_or(f64::INFINITY, |m| m[k]);
    if (0..effective_noise.len()).all(|k| cap(k) == f64::INFINITY) {
        return Ok(finish(effective_noise, uncapped_level(effective_noise, budget), cap));
    }
    let fill = |level: f64| -> f64 {
        effective_noise
            .iter()
            .enumerate()
            .map(|(k, e)| (level - e).clamp(0.0, cap(k)))
            .sum()
    };

    let mut lo = effective_noise.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = effective_noise.iter().copied().fold(0.0, f64::max) + budget;
    let mut level = hi;
    for _ in 0..MAX_BISECTIONS {
        level = 0.5 * (lo + hi);
        let excess = fill(level) - budget;
        if excess.abs() <= SUM_REL_TOL * budget {
            break;
        }
        if excess < 0.0 {
            lo = level;
        } else {
            hi = level;
        }
        if hi - lo <= f64::EPSILON * hi {
            level = 0.5 * (lo + hi);
            break;
        }
    }

    // Closed-form level on the sets identified by bisection.
    let mut capped_total = 0.0;
    let mut free_noise = 0.0;
    let mut free_count = 0usize;
    for (k, e) in effective_noise.iter().enumerate() {
        if level > *e {
            if level - e >= cap(k) {
                capped_total += cap(k);
            } else {
                free_noise += e;
                free_count += 1;
            }
        }
    }
    if free_count > 0 {
        let exact = (budget - capped_total + free_noise) / free_count as f64;
        let consistent = effective_noise.iter().enumerate().all(|(k, e)| {
            let was_free = level > *e && level - e < cap(k);
            let is_free = exact > *e && exact - e < cap(k);
            was_free == is_free
        });
        if consistent {
            level = exact;
        }
    }

    Ok(finish(effective_noise, level, cap))
}

/// Exact level without caps: scan the channels by increasing effective noise
/// until the next one would stay dry.
fn uncapped_level(effective_noise: &[f64], budget: f64) -> f64 {
    let mut sorted = effective_noise.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    let mut threshold = sorted[sorted.len() - 1];
    for (m, e) in sorted.iter().enumerate() {
        prefix += e;
        let level = (budget + prefix) / (m + 1) as f64;
        if sorted.get(m + 1).is_none_or(|next| level <= *next) {
            threshold = *e;
            break;
        }
    }
    // Summing in channel order keeps the result independent of the sort.
    let (mut total, mut count) = (0.0, 0usize);
    for e in effective_noise.iter().filter(|e| **e <= threshold) {
        total += e;
        count += 1;
    }
    (budget + total) / count as f64
}

fn finish(effective_noise: &[f64], level: f64, cap: impl Fn(usize) -> f64) -> WaterfillResult {
    let allocation: Vec<f64> = effective_noise
        .iter()
        .enumerate()
        .map(|(k, e)| (level - e).clamp(0.0, cap(k)))
        .collect();
    let active_set = allocation
        .iter()
        .enumerate()
        .filter(|(_, x)| **x > 0.0)
        .map(|(k, _)| k)
        .collect();
    WaterfillResult {
        allocation,
        water_level: level,
        active_set,
    }
}

pub(crate) fn best_response_from_broadcast(
    inst: &NetworkInstance,
    p: &PowerProfile,
    broadcast: &[f64],
    i: usize,
) -> Result<WaterfillResult> {
    let ipn = model::ipn_from_broadcast(inst, p, broadcast, i);
    let effective: Vec<f64> = ipn
        .iter()
        .zip(inst.gain_row(i))
        .map(|(d, g)| d / g)
        .collect();
    water_fill(&effective, inst.budget()[i], inst.mask_row(i))
}

/// User `i`'s rate-maximizing allocation against the others' current powers.
pub fn best_response(inst: &NetworkInstance, p: &PowerProfile, i: usize) -> Result<WaterfillResult> {
    model::check_feasible(inst, p)?;
    inst.check_user(i)?;
    let broadcast = model::broadcast_unchecked(inst, p);
    best_response_from_broadcast(inst, p, &broadcast, i)
}

/// All best responses `Φ(p)` computed from one snapshot of the broadcast.
pub(crate) fn best_responses_unchecked(inst: &NetworkInstance, p: &PowerProfile) -> Result<PowerProfile> {
    let broadcast = model::broadcast_unchecked(inst, p);
    let mut phi = PowerProfile::zeros(inst.n_users(), inst.n_channels());
    for i in 0..inst.n_users() {
        let br = best_response_from_broadcast(inst, p, &broadcast, i)?;
        phi.row_mut(i).copy_from_slice(&br.allocation);
    }
    Ok(phi)
}

pub(crate) fn residual_unchecked(inst: &NetworkInstance, p: &PowerProfile) -> Result<Array2<f64>> {
    let phi = best_responses_unchecked(inst, p)?;
    Ok(phi.into_array() - p.as_array())
}

pub(crate) fn inf_norm(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fails with [`Error::SlackBudget`] unless every user spends its whole budget.
pub fn check_budget_tight(inst: &NetworkInstance, p: &PowerProfile) -> Result<()> {
    for (i, budget) in inst.budget().iter().enumerate() {
        let allocated = p.row_sum(i);
        if (allocated - budget).abs() > FEASIBILITY_TOL {
            return Err(Error::SlackBudget {
                user: i,
                allocated,
                budget: *budget,
            });
        }
    }
    Ok(())
}

/// `s(p) = Φ(p) − p`. Rows sum to zero because both `Φ_i` and `p_i` spend the
/// full budget; slack profiles are rejected.
pub fn br_residual(inst: &NetworkInstance, p: &PowerProfile) -> Result<Array2<f64>> {
    model::check_feasible(inst, p)?;
    check_budget_tight(inst, p)?;
    residual_unchecked(inst, p)
}

/// `‖s(p)‖_∞`.
pub fn residual_inf(inst: &NetworkInstance, p: &PowerProfile) -> Result<f64> {
    Ok(inf_norm(&br_residual(inst, p)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{example1_hat, example1_tilde, make_example1};
    use approx::assert_relative_eq;

    /// Bisection-only reference used to cross-check the closed-form step.
    fn bisection_level(e: &[f64], budget: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, e.iter().copied().fold(0.0, f64::max) + budget);
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            let s: f64 = e.iter().map(|x| (mid - x).max(0.0)).sum();
            if s < budget {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn example1_user1_best_response() {
        let r = water_fill(&[1.0, 1.5], 1.0, None).unwrap();
        assert_eq!(r.allocation, vec![0.75, 0.25]);
        assert_eq!(r.water_level, 1.75);
        assert_eq!(r.active_set, vec![0, 1]);
    }

    #[test]
    fn single_channel_takes_everything() {
        let r = water_fill(&[2.5], 0.7, None).unwrap();
        assert_relative_eq!(r.allocation[0], 0.7, epsilon = 1e-15);
        assert_relative_eq!(r.water_level, 3.2, epsilon = 1e-15);
    }

    #[test]
    fn only_best_channel_active() {
        let r = water_fill(&[0.5, 1.0, 2.0], 0.3, None).unwrap();
        assert_relative_eq!(r.allocation[0], 0.3, epsilon = 1e-15);
        assert_eq!(&r.allocation[1..], &[0.0, 0.0]);
        assert_relative_eq!(r.water_level, 0.8, epsilon = 1e-15);
        assert_relative_eq!(r.water_level, bisection_level(&[0.5, 1.0, 2.0], 0.3), epsilon = 1e-14);
    }

    #[test]
    fn masked_fill_respects_caps() {
        let r = water_fill(&[0.1, 0.2, 5.0], 2.0, Some(&[0.5, 0.5, 10.0])).unwrap();
        assert_eq!(&r.allocation[..2], &[0.5, 0.5]);
        assert_relative_eq!(r.allocation[2], 1.0, epsilon = 1e-13);
        assert_relative_eq!(r.water_level, 6.0, epsilon = 1e-13);
    }

    #[test]
    fn infinite_mask_is_bit_identical_to_unmasked() {
        let e = [0.3, 0.9, 0.31, 2.2, 1.7];
        let a = water_fill(&e, 1.3, None).unwrap();
        let b = water_fill(&e, 1.3, Some(&[f64::INFINITY; 5])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            water_fill(&[1.0, 1.0], 2.0, Some(&[0.5, 0.5])),
            Err(Error::InfeasibleMask { .. })
        ));
        assert!(matches!(water_fill(&[f64::NAN], 1.0, None), Err(Error::NonFinite(_))));
        assert!(water_fill(&[1.0], 0.0, None).is_err());
        assert!(water_fill(&[0.0, 1.0], 1.0, None).is_err());
    }

    #[test]
    fn example1_equilibria_are_fixed_points() {
        let inst = make_example1();
        let p = example1_tilde();
        assert_eq!(best_response(&inst, &p, 0).unwrap().allocation, vec![0.75, 0.25]);
        assert_eq!(best_response(&inst, &p, 1).unwrap().allocation, vec![0.0, 1.0]);
        assert_eq!(residual_inf(&inst, &p).unwrap(), 0.0);
        assert_eq!(residual_inf(&inst, &example1_hat()).unwrap(), 0.0);
    }

    #[test]
    fn residual_away_from_equilibrium() {
        let inst = make_example1();
        let p = PowerProfile::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let s = br_residual(&inst, &p).unwrap();
        // Each user sees ipn [2, 1] → effective noise [2, 0.5] → all power on channel 2.
        assert_eq!(s, ndarray::array![[-1.0, 1.0], [-1.0, 1.0]]);
        for row in s.outer_iter() {
            assert!(row.sum().abs() <= 1e-10);
        }
    }

    #[test]
    fn residual_rejects_slack_profiles() {
        let inst = make_example1();
        let p = PowerProfile::from_rows(&[vec![0.2, 0.2], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(br_residual(&inst, &p), Err(Error::SlackBudget { user: 0, .. })));
    }

    #[test]
    fn single_user_best_response_is_classical_water_filling() {
        let inst = NetworkInstance::from_rows(&[vec![2.0, 1.0, 0.25]], vec![1.0, 0.5, 1.0], vec![1.0]).unwrap();
        let br = best_response(&inst, &PowerProfile::zeros(1, 3), 0).unwrap();
        let direct = water_fill(&[0.5, 0.5, 4.0], 1.0, None).unwrap();
        assert_eq!(br, direct);
        assert_eq!(br.allocation, vec![0.5, 0.5, 0.0]);
    }
}

//! Spectrum-sharing statistics computed from a power profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, NetworkInstance, PowerProfile};
use crate::oracle::OptimumCertificate;

/// Default relative activity factor: user `i` counts as active on channel `k`
/// when `p_i(k) > 1e-6 · p̄_i / K`.
pub const DEFAULT_ACTIVITY_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityThreshold {
    /// Multiple of each user's even share `p̄_i / K`.
    Relative(f64),
    Absolute(f64),
}

impl Default for ActivityThreshold {
    fn default() -> Self {
        ActivityThreshold::Relative(DEFAULT_ACTIVITY_FACTOR)
    }
}

impl ActivityThreshold {
    pub fn for_user(&self, inst: &NetworkInstance, i: usize) -> f64 {
        match *self {
            ActivityThreshold::Relative(f) => f * inst.budget()[i] / inst.n_channels() as f64,
            ActivityThreshold::Absolute(a) => a,
        }
    }
}

/// Users active on each channel, ascending.
pub fn channel_occupants(
    inst: &NetworkInstance,
    p: &PowerProfile,
    threshold: ActivityThreshold,
) -> Vec<Vec<usize>> {
    let limits: Vec<f64> = (0..inst.n_users()).map(|i| threshold.for_user(inst, i)).collect();
    (0..inst.n_channels())
        .map(|k| {
            (0..inst.n_users())
                .filter(|&i| p.get(i, k) > limits[i])
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    /// Channels with two or more active users.
    pub collided_channels: usize,
    /// `Σ_k n_k (n_k − 1) / 2` over per-channel active counts `n_k`.
    pub total_collisions: usize,
    pub activity_threshold: ActivityThreshold,
}

pub fn count_collisions(
    inst: &NetworkInstance,
    p: &PowerProfile,
    activity_threshold: ActivityThreshold,
) -> Result<CollisionStats> {
    model::check_feasible(inst, p)?;
    let occupants = channel_occupants(inst, p, activity_threshold);
    let mut collided_channels = 0;
    let mut total_collisions = 0;
    for users in &occupants {
        let n = users.len();
        if n >= 2 {
            collided_channels += 1;
            total_collisions += n * (n - 1) / 2;
        }
    }
    Ok(CollisionStats {
        collided_channels,
        total_collisions,
        activity_threshold,
    })
}

/// Sum rate relative to the certified optimum of the potential.
///
/// The potential upper-bounds the sum rate, so the ratio can exceed one only
/// by the certificate's own slack.
pub fn efficiency(inst: &NetworkInstance, p: &PowerProfile, cert: &OptimumCertificate) -> Result<f64> {
    let rate = model::sum_rate(inst, p)?;
    if cert.p_star.n_users() != inst.n_users() || cert.p_star.n_channels() != inst.n_channels() {
        return Err(Error::Config("certificate belongs to a different instance".into()));
    }
    if !(cert.value > 0.0) {
        return Err(Error::Config(format!("certified optimum {} is not positive", cert.value)));
    }
    if rate > cert.value + cert.gap_bound + 1e-12 {
        return Err(Error::Config(format!(
            "sum rate {rate} exceeds certified optimum {} + {}",
            cert.value, cert.gap_bound
        )));
    }
    Ok(rate / cert.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve_max_potential;
    use crate::scenario::{example1_tilde, make_example1};
    use approx::assert_relative_eq;

    #[test]
    fn example1_equilibrium_has_one_collision() {
        let s = count_collisions(&make_example1(), &example1_tilde(), ActivityThreshold::default()).unwrap();
        assert_eq!((s.collided_channels, s.total_collisions), (1, 1));
    }

    #[test]
    fn fdma_has_no_collisions() {
        let inst = make_example1();
        let p = PowerProfile::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = count_collisions(&inst, &p, ActivityThreshold::default()).unwrap();
        assert_eq!((s.collided_channels, s.total_collisions), (0, 0));
    }

    #[test]
    fn three_users_on_one_channel() {
        let inst = NetworkInstance::from_rows(
            &[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap();
        let p = PowerProfile::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let s = count_collisions(&inst, &p, ActivityThreshold::default()).unwrap();
        assert_eq!((s.collided_channels, s.total_collisions), (1, 3));
    }

    #[test]
    fn threshold_ignores_dust() {
        let inst = make_example1();
        let p = PowerProfile::from_rows(&[vec![1.0 - 1e-9, 1e-9], vec![0.0, 1.0]]).unwrap();
        let s = count_collisions(&inst, &p, ActivityThreshold::default()).unwrap();
        assert_eq!(s.collided_channels, 0);
        let s = count_collisions(&inst, &p, ActivityThreshold::Absolute(0.0)).unwrap();
        assert_eq!(s.collided_channels, 1);
    }

    #[test]
    fn efficiency_examples() {
        let inst = make_example1();
        let cert = solve_max_potential(&inst, 1e-12).unwrap();
        assert_eq!(efficiency(&inst, &PowerProfile::zeros(2, 2), &cert).unwrap(), 0.0);
        let fdma = PowerProfile::from_rows(&[vec![0.75, 0.25], vec![0.0, 1.0]]).unwrap();
        let shared_rate = model::sum_rate(&inst, &fdma).unwrap();
        assert_relative_eq!(efficiency(&inst, &fdma, &cert).unwrap(), shared_rate / cert.value, epsilon = 1e-15);
        assert!(efficiency(&inst, &fdma, &cert).unwrap() < 1.0);
    }
}

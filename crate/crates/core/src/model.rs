//! Network data model and the closed-form quantities of the game.
//!
//! All rates are in nats and carry the `1/K` bandwidth normalization, and so
//! do the potential and its gradient, so that `∂P/∂p_i(k) = ∂R_i/∂p_i(k)`
//! holds exactly.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Absolute slack allowed on budgets, masks and nonnegativity.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Static problem data: power gains `|h_i(k)|²`, per-channel noise `n(k)`,
/// per-user budgets `p̄_i` and optional per-channel power caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct NetworkInstance {
    gain: Array2<f64>,
    noise: Vec<f64>,
    budget: Vec<f64>,
    mask: Option<Array2<f64>>,
}

/// On-disk layout of a [`NetworkInstance`]. Matrices are row-major with one
/// row per user.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    n_users: usize,
    n_channels: usize,
    gain: Vec<f64>,
    noise: Vec<f64>,
    budget: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<f64>>,
}

impl TryFrom<InstanceFile> for NetworkInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        let shape = (f.n_users, f.n_channels);
        let found = f.gain.len();
        let gain = Array2::from_shape_vec(shape, f.gain).map_err(|_| Error::DimensionMismatch {
            what: "gain entries",
            expected: f.n_users * f.n_channels,
            found,
        })?;
        let inst = NetworkInstance::new(gain, f.noise, f.budget)?;
        match f.mask {
            None => Ok(inst),
            Some(mask) => {
                let found = mask.len();
                let mask = Array2::from_shape_vec(shape, mask).map_err(|_| {
                    Error::DimensionMismatch {
                        what: "mask entries",
                        expected: shape.0 * shape.1,
                        found,
                    }
                })?;
                inst.with_mask(mask)
            }
        }
    }
}

impl From<NetworkInstance> for InstanceFile {
    fn from(inst: NetworkInstance) -> Self {
        InstanceFile {
            n_users: inst.n_users(),
            n_channels: inst.n_channels(),
            gain: inst.gain.iter().copied().collect(),
            noise: inst.noise,
            budget: inst.budget,
            mask: inst.mask.map(|m| m.iter().copied().collect()),
        }
    }
}

impl NetworkInstance {
    /// Builds an instance from an `N×K` gain matrix. Every gain, noise level
    /// and budget must be finite and strictly positive.
    pub fn new(gain: Array2<f64>, noise: Vec<f64>, budget: Vec<f64>) -> Result<Self> {
        let (n, k) = gain.dim();
        if n == 0 || k == 0 {
            return Err(Error::InvalidInstance(format!(
                "need at least one user and one channel, got {n}x{k}"
            )));
        }
        if noise.len() != k {
            return Err(Error::DimensionMismatch {
                what: "noise entries",
                expected: k,
                found: noise.len(),
            });
        }
        if budget.len() != n {
            return Err(Error::DimensionMismatch {
                what: "budget entries",
                expected: n,
                found: budget.len(),
            });
        }
        if let Some(((i, c), g)) = gain
            .indexed_iter()
            .find(|(_, g)| !(g.is_finite() && **g > 0.0))
        {
            return Err(Error::InvalidInstance(format!(
                "gain of user {i} on channel {c} is {g}; gains must be finite and positive"
            )));
        }
        if let Some((c, v)) = noise.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInstance(format!("noise on channel {c} is {v}")));
        }
        if let Some((i, v)) = budget.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInstance(format!("budget of user {i} is {v}")));
        }
        Ok(NetworkInstance {
            gain: gain.as_standard_layout().into_owned(),
            noise,
            budget,
            mask: None,
        })
    }

    pub fn from_rows(gain: &[Vec<f64>], noise: Vec<f64>, budget: Vec<f64>) -> Result<Self> {
        NetworkInstance::new(rows_to_array(gain, "gain")?, noise, budget)
    }

    /// Attaches per-channel power caps. Entries may be `+∞`; each user's caps
    /// must admit its full budget.
    pub fn with_mask(mut self, mask: Array2<f64>) -> Result<Self> {
        if mask.dim() != self.gain.dim() {
            return Err(Error::DimensionMismatch {
                what: "mask entries",
                expected: self.gain.len(),
                found: mask.len(),
            });
        }
        if mask.iter().any(|m| m.is_nan() || *m <= 0.0) {
            return Err(Error::InvalidInstance("mask entries must be positive".into()));
        }
        for (i, row) in mask.outer_iter().enumerate() {
            let capacity: f64 = row.sum();
            if capacity < self.budget[i] {
                return Err(Error::InfeasibleMask {
                    capacity,
                    budget: self.budget[i],
                });
            }
        }
        self.mask = Some(mask.as_standard_layout().into_owned());
        Ok(self)
    }

    pub fn n_users(&self) -> usize {
        self.gain.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.gain.ncols()
    }

    pub fn gain(&self) -> ArrayView2<'_, f64> {
        self.gain.view()
    }

    pub fn gain_row(&self, i: usize) -> &[f64] {
        row_slice(&self.gain, i)
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn budget(&self) -> &[f64] {
        &self.budget
    }

    pub fn mask(&self) -> Option<ArrayView2<'_, f64>> {
        self.mask.as_ref().map(|m| m.view())
    }

    pub fn mask_row(&self, i: usize) -> Option<&[f64]> {
        self.mask.as_ref().map(|m| row_slice(m, i))
    }

    /// Each user spreads its budget evenly over all channels, then any user
    /// whose caps cut that off is re-tightened by water-filling on flat
    /// effective noise.
    pub fn uniform_profile(&self) -> PowerProfile {
        let k = self.n_channels() as f64;
        let mut p = Array2::from_shape_fn(self.gain.dim(), |(i, _)| self.budget[i] / k);
        if let Some(mask) = &self.mask {
            for i in 0..self.n_users() {
                let caps = row_slice(mask, i);
                if p.row(i).iter().zip(caps).any(|(x, m)| x > m) {
                    let flat = vec![1.0; self.n_channels()];
                    let fill = crate::waterfill::water_fill(&flat, self.budget[i], Some(caps))
                        .expect("mask admits the budget by construction");
                    p.row_mut(i)
                        .iter_mut()
                        .zip(fill.allocation)
                        .for_each(|(x, v)| *x = v);
                }
            }
        }
        PowerProfile(p)
    }

    pub fn check_user(&self, i: usize) -> Result<()> {
        if i >= self.n_users() {
            Err(Error::UserIndex {
                index: i,
                n_users: self.n_users(),
            })
        } else {
            Ok(())
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("instance serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

/// The joint strategy: an `N×K` matrix of transmit powers `p_i(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile(Array2<f64>);

impl PowerProfile {
    pub fn zeros(n_users: usize, n_channels: usize) -> Self {
        PowerProfile(Array2::zeros((n_users, n_channels)))
    }

    pub fn from_array(p: Array2<f64>) -> Self {
        PowerProfile(p.as_standard_layout().into_owned())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(PowerProfile(rows_to_array(rows, "profile")?))
    }

    pub fn n_users(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.0[[i, k]]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        row_slice(&self.0, i)
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        self.0
            .row_mut(i)
            .into_slice()
            .expect("profiles are kept in standard layout")
    }

    /// `λ·self + (1 − λ)·other`.
    pub fn convex_combination(&self, other: &PowerProfile, lambda: f64) -> PowerProfile {
        PowerProfile(&self.0 * lambda + &other.0 * (1.0 - lambda))
    }

    pub fn distance_sq(&self, other: &PowerProfile) -> f64 {
        compensated_sum(self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b) * (a - b)))
    }

    pub fn max_abs_diff(&self, other: &PowerProfile) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        compensated_sum(self.row(i).iter().copied())
    }
}

fn row_slice(a: &Array2<f64>, i: usize) -> &[f64] {
    a.row(i)
        .to_slice()
        .expect("matrices are kept in standard layout")
}

fn rows_to_array(rows: &[Vec<f64>], what: &'static str) -> Result<Array2<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            what,
            expected: k,
            found: bad.len(),
        });
    }
    Ok(Array2::from_shape_vec((n, k), rows.concat()).expect("row lengths checked"))
}

fn check_shape(inst: &NetworkInstance, p: &PowerProfile) -> Result<()> {
    if p.n_users() != inst.n_users() {
        return Err(Error::DimensionMismatch {
            what: "profile rows",
            expected: inst.n_users(),
            found: p.n_users(),
        });
    }
    if p.n_channels() != inst.n_channels() {
        return Err(Error::DimensionMismatch {
            what: "profile columns",
            expected: inst.n_channels(),
            found: p.n_channels(),
        });
    }
    Ok(())
}

/// Checks nonnegativity, budgets and masks to within [`FEASIBILITY_TOL`].
pub fn check_feasible(inst: &NetworkInstance, p: &PowerProfile) -> Result<()> {
    check_shape(inst, p)?;
    if p.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("power profile"));
    }
    for i in 0..inst.n_users() {
        let row = p.row(i);
        if let Some((k, x)) = row.iter().enumerate().find(|(_, x)| **x < -FEASIBILITY_TOL) {
            return Err(Error::Infeasible(format!(
                "user {i} has negative power {x} on channel {k}"
            )));
        }
        let total = p.row_sum(i);
        if total > inst.budget[i] + FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!(
                "user {i} allocates {total} over its budget {}",
                inst.budget[i]
            )));
        }
        if let Some(caps) = inst.mask_row(i) {
            if let Some((k, _)) = row
                .iter()
                .zip(caps)
                .enumerate()
                .find(|(_, (x, m))| **x > **m + FEASIBILITY_TOL)
            {
                return Err(Error::Infeasible(format!(
                    "user {i} exceeds its mask on channel {k}"
                )));
            }
        }
    }
    Ok(())
}

/// Row-level version of [`check_feasible`] for user `i`.
pub(crate) fn check_feasible_row(inst: &NetworkInstance, i: usize, row: &[f64]) -> bool {
    let total = compensated_sum(row.iter().copied());
    row.iter().all(|x| x.is_finite() && *x >= -FEASIBILITY_TOL)
        && total <= inst.budget[i] + FEASIBILITY_TOL
        && inst
            .mask_row(i)
            .is_none_or(|caps| row.iter().zip(caps).all(|(x, m)| *x <= m + FEASIBILITY_TOL))
}

/// Per-channel received power `Σ_i |h_i(k)|² p_i(k)`, without noise.
pub(crate) fn received_power(inst: &NetworkInstance, p: &PowerProfile) -> Vec<f64> {
    // Column-wise Neumaier sums, accumulated row by row for locality.
    let k = inst.n_channels();
    let mut sum = vec![0.0; k];
    let mut carry = vec![0.0; k];
    for i in 0..inst.n_users() {
        for (((s, c), g), x) in sum.iter_mut().zip(carry.iter_mut()).zip(inst.gain_row(i)).zip(p.row(i)) {
            let v = g * x;
            let t = *s + v;
            if s.abs() >= v.abs() {
                *c += (*s - t) + v;
            } else {
                *c += (v - t) + *s;
            }
            *s = t;
        }
    }
    sum.iter().zip(&carry).map(|(s, c)| s + c).collect()
}

pub(crate) fn broadcast_unchecked(inst: &NetworkInstance, p: &PowerProfile) -> Vec<f64> {
    received_power(inst, p)
        .into_iter()
        .zip(&inst.noise)
        .map(|(r, n)| n + r)
        .collect()
}

/// Interference plus noise seen by user `i`, derived from the broadcast
/// aggregate by removing the user's own contribution.
pub(crate) fn ipn_from_broadcast(
    inst: &NetworkInstance,
    p: &PowerProfile,
    broadcast: &[f64],
    i: usize,
) -> Vec<f64> {
    broadcast
        .iter()
        .zip(inst.gain_row(i))
        .zip(p.row(i))
        .map(|((s, g), x)| s - g * x)
        .collect()
}

pub(crate) fn potential_unchecked(inst: &NetworkInstance, p: &PowerProfile) -> f64 {
    potential_from_received(inst, &received_power(inst, p))
}

pub(crate) fn potential_from_received(inst: &NetworkInstance, received: &[f64]) -> f64 {
    let k = inst.n_channels() as f64;
    compensated_sum(received.iter().zip(&inst.noise).map(|(r, n)| (r / n).ln_1p())) / k
}

pub(crate) fn user_rate_unchecked(
    inst: &NetworkInstance,
    p: &PowerProfile,
    broadcast: &[f64],
    i: usize,
) -> f64 {
    let k = inst.n_channels() as f64;
    let ipn = ipn_from_broadcast(inst, p, broadcast, i);
    compensated_sum(
        inst.gain_row(i)
            .iter()
            .zip(p.row(i))
            .zip(&ipn)
            .map(|((g, x), d)| (g * x / d).ln_1p()),
    ) / k
}

pub(crate) fn sum_rate_unchecked(inst: &NetworkInstance, p: &PowerProfile) -> f64 {
    let broadcast = broadcast_unchecked(inst, p);
    compensated_sum((0..inst.n_users()).map(|i| user_rate_unchecked(inst, p, &broadcast, i)))
}

pub(crate) fn gradient_from_broadcast(inst: &NetworkInstance, broadcast: &[f64]) -> Array2<f64> {
    let k = inst.n_channels() as f64;
    Array2::from_shape_fn(inst.gain.dim(), |(i, c)| inst.gain[[i, c]] / broadcast[c] / k)
}

/// Rate of user `i` under single-user decoding, in nats per channel use of
/// the whole band.
pub fn user_rate(inst: &NetworkInstance, p: &PowerProfile, i: usize) -> Result<f64> {
    check_feasible(inst, p)?;
    inst.check_user(i)?;
    let broadcast = broadcast_unchecked(inst, p);
    Ok(user_rate_unchecked(inst, p, &broadcast, i))
}

pub fn sum_rate(inst: &NetworkInstance, p: &PowerProfile) -> Result<f64> {
    check_feasible(inst, p)?;
    Ok(sum_rate_unchecked(inst, p))
}

/// The potential `P(p)`. It upper-bounds the sum rate and equals it on FDMA
/// profiles.
pub fn potential(inst: &NetworkInstance, p: &PowerProfile) -> Result<f64> {
    check_feasible(inst, p)?;
    Ok(potential_unchecked(inst, p))
}

/// `∇P(p)`, entry `(i, k) = (1/K)·|h_i(k)|² / (n(k) + Σ_j |h_j(k)|² p_j(k))`.
pub fn potential_gradient(inst: &NetworkInstance, p: &PowerProfile) -> Result<Array2<f64>> {
    check_feasible(inst, p)?;
    Ok(gradient_from_broadcast(inst, &broadcast_unchecked(inst, p)))
}

/// Interference plus noise seen by user `i` on every channel.
pub fn ipn(inst: &NetworkInstance, p: &PowerProfile, i: usize) -> Result<Vec<f64>> {
    check_feasible(inst, p)?;
    inst.check_user(i)?;
    let broadcast = broadcast_unchecked(inst, p);
    Ok(ipn_from_broadcast(inst, p, &broadcast, i))
}

/// Total received power plus noise per channel: the only cross-user quantity
/// the access point feeds back.
pub fn aggregate_broadcast(inst: &NetworkInstance, p: &PowerProfile) -> Result<Vec<f64>> {
    check_feasible(inst, p)?;
    Ok(broadcast_unchecked(inst, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{example1_hat, example1_tilde, make_example1};
    use approx::assert_relative_eq;

    #[test]
    fn user_rate_at_example1_equilibrium() {
        let inst = make_example1();
        let p = example1_tilde();
        let r2 = user_rate(&inst, &p, 1).unwrap();
        assert_relative_eq!(r2, 0.5 * (7.0f64 / 3.0).ln(), epsilon = 1e-15);
        assert_relative_eq!(r2, 0.42365, epsilon = 1e-5);
    }

    #[test]
    fn single_user_single_channel_rate() {
        let inst = NetworkInstance::from_rows(&[vec![1.0]], vec![1.0], vec![1.0]).unwrap();
        let p = PowerProfile::from_rows(&[vec![1.0]]).unwrap();
        assert_relative_eq!(user_rate(&inst, &p, 0).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn zero_profile_has_zero_rates_and_potential() {
        let inst = make_example1();
        let p = PowerProfile::zeros(2, 2);
        assert_eq!(user_rate(&inst, &p, 0).unwrap(), 0.0);
        assert_eq!(sum_rate(&inst, &p).unwrap(), 0.0);
        assert_eq!(potential(&inst, &p).unwrap(), 0.0);
        assert_eq!(aggregate_broadcast(&inst, &p).unwrap(), inst.noise().to_vec());
        assert_eq!(ipn(&inst, &p, 1).unwrap(), inst.noise().to_vec());
    }

    #[test]
    fn example1_sum_rate_by_hand() {
        // R1 = ½[ln(1 + 0.75/1) + ln(1 + 0.5/3)], R2 = ½ ln(1 + 2/1.5).
        let inst = make_example1();
        let p = example1_tilde();
        let r1 = 0.5 * ((7.0f64 / 4.0).ln() + (7.0f64 / 6.0).ln());
        let r2 = 0.5 * (7.0f64 / 3.0).ln();
        assert_relative_eq!(sum_rate(&inst, &p).unwrap(), r1 + r2, epsilon = 1e-15);
        assert!(sum_rate(&inst, &p).unwrap() < potential(&inst, &p).unwrap());
    }

    #[test]
    fn example1_potential_is_equal_at_both_equilibria() {
        let inst = make_example1();
        let expected = 0.5 * ((7.0f64 / 4.0).ln() + (7.0f64 / 2.0).ln());
        assert_relative_eq!(potential(&inst, &example1_tilde()).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(potential(&inst, &example1_hat()).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, 0.906_189_378, epsilon = 1e-9);
    }

    #[test]
    fn gradient_and_broadcast_at_example1() {
        let inst = make_example1();
        let p = example1_tilde();
        let g = potential_gradient(&inst, &p).unwrap();
        assert_relative_eq!(g[[0, 0]], 2.0 / 7.0, epsilon = 1e-15);
        let b = aggregate_broadcast(&inst, &p).unwrap();
        assert_eq!(b, vec![1.75, 3.5]);
        assert_eq!(ipn(&inst, &p, 0).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn gradient_at_zero_is_gain_over_noise() {
        let inst = NetworkInstance::from_rows(
            &[vec![0.5, 2.0, 3.0], vec![1.0, 0.1, 4.0]],
            vec![0.5, 1.0, 2.0],
            vec![1.0, 2.0],
        )
        .unwrap();
        let g = potential_gradient(&inst, &PowerProfile::zeros(2, 3)).unwrap();
        for i in 0..2 {
            for k in 0..3 {
                assert_eq!(g[[i, k]], inst.gain()[[i, k]] / inst.noise()[k] / 3.0);
            }
        }
    }

    #[test]
    fn fdma_profile_sum_rate_equals_potential() {
        let inst = make_example1();
        let p = PowerProfile::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_relative_eq!(
            sum_rate(&inst, &p).unwrap(),
            potential(&inst, &p).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rejects_bad_instances_and_profiles() {
        assert!(NetworkInstance::from_rows(&[vec![0.0, 1.0]], vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(NetworkInstance::from_rows(&[vec![1.0, 1.0]], vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(NetworkInstance::from_rows(&[vec![1.0, 1.0]], vec![1.0, 1.0], vec![-1.0]).is_err());
        assert!(NetworkInstance::from_rows(&[vec![1.0, 1.0]], vec![1.0], vec![1.0]).is_err());
        let inst = make_example1();
        let over = PowerProfile::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(potential(&inst, &over), Err(Error::Infeasible(_))));
        let neg = PowerProfile::from_rows(&[vec![-0.1, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(sum_rate(&inst, &neg).is_err());
        assert!(matches!(
            user_rate(&inst, &example1_tilde(), 2),
            Err(Error::UserIndex { .. })
        ));
    }

    #[test]
    fn mask_must_admit_budget() {
        let inst = make_example1();
        let tight = Array2::from_elem((2, 2), 0.4);
        assert!(matches!(inst.clone().with_mask(tight), Err(Error::InfeasibleMask { .. })));
        let ok = Array2::from_elem((2, 2), f64::INFINITY);
        assert!(inst.with_mask(ok).is_ok());
    }

    #[test]
    fn instance_toml_round_trip() {
        let inst = make_example1()
            .with_mask(ndarray::array![[f64::INFINITY, 0.9], [0.8, f64::INFINITY]])
            .unwrap();
        let text = inst.to_toml_string();
        assert!(text.contains("n_users = 2"));
        assert_eq!(NetworkInstance::from_toml_str(&text).unwrap(), inst);
    }
}

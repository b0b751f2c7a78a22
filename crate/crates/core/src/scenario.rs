//! Seeded random instances and the canonical two-user fixture.
//!
//! Random stream: `ChaCha8Rng::seed_from_u64(seed)` from `rand_chacha`. Every
//! uniform draw is `((next_u64() >> 11) + 0.5) · 2⁻⁵³`, which lies strictly
//! inside `(0, 1)`. Draw order:
//!
//! 1. access point `(x, y)`, each `side · u`;
//! 2. users `0..N` in order, `(x, y)` each, redrawn while closer than
//!    [`MIN_DISTANCE`] to the access point;
//! 3. gains, user by user:
//!    * independent fading: channel by channel, `|h|² = −ln(u) / d²`;
//!    * correlated fading: `K + L − 1` complex taps per user, each from one
//!      Box–Muller pair `(u₁, u₂)` as `√(−2 ln u₁)·(cos 2πu₂, sin 2πu₂)·√(1/(2d²))`,
//!      then `h(k) = L^{-1/2} Σ_{m=k}^{k+L−1} tap(m)` and `|h(k)|²`.
//!
//! `L = max(1, round(B_c · K))`; with `L = 1` the independent generator is used.

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkInstance, PowerProfile};

/// Users closer than this (meters) to the access point are redrawn.
pub const MIN_DISTANCE: f64 = 0.1;
pub const DEFAULT_AREA_SIDE: f64 = 10.0;
pub const DEFAULT_BUDGET: f64 = 1.0;
/// Noise power per channel. A user 5 m from the access point that puts its
/// whole unit budget on one channel sees an average SNR of 4 (6 dB).
pub const DEFAULT_NOISE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetPolicy {
    Uniform(f64),
    PerUser(Vec<f64>),
}

impl Default for BudgetPolicy {
    fn default() -> Self {
        BudgetPolicy::Uniform(DEFAULT_BUDGET)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    #[default]
    Independent,
    /// Coherence bandwidth as a fraction of the (unit) total band.
    Correlated(f64),
}

impl Fading {
    pub fn label(&self) -> String {
        match self {
            Fading::Independent => "independent".to_string(),
            Fading::Correlated(bc) => format!("{bc}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_users: usize,
    pub n_channels: usize,
    #[serde(default = "default_area")]
    pub area_side: f64,
    #[serde(default)]
    pub budget: BudgetPolicy,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub fading: Fading,
    #[serde(default)]
    pub seed: u64,
}

fn default_area() -> f64 {
    DEFAULT_AREA_SIDE
}

fn default_noise() -> f64 {
    DEFAULT_NOISE
}

impl ScenarioSpec {
    pub fn new(n_users: usize, n_channels: usize, seed: u64) -> Self {
        ScenarioSpec {
            n_users,
            n_channels,
            area_side: DEFAULT_AREA_SIDE,
            budget: BudgetPolicy::default(),
            noise: DEFAULT_NOISE,
            fading: Fading::Independent,
            seed,
        }
    }

    pub fn with_fading(mut self, fading: Fading) -> Self {
        self.fading = fading;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_channels == 0 {
            return Err(Error::Config("scenario needs at least one user and one channel".into()));
        }
        if !(self.area_side.is_finite() && self.area_side > MIN_DISTANCE) {
            return Err(Error::Config(format!("area side {} too small", self.area_side)));
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return Err(Error::Config(format!("noise {} must be positive", self.noise)));
        }
        match &self.budget {
            BudgetPolicy::Uniform(b) if !(b.is_finite() && *b > 0.0) => {
                return Err(Error::Config(format!("budget {b} must be positive")))
            }
            BudgetPolicy::PerUser(v) if v.len() != self.n_users => {
                return Err(Error::Config(format!(
                    "{} budgets given for {} users",
                    v.len(),
                    self.n_users
                )))
            }
            _ => {}
        }
        if let Fading::Correlated(bc) = self.fading {
            if !(bc > 0.0 && bc <= 1.0) {
                return Err(Error::Config(format!("coherence bandwidth {bc} outside (0, 1]")));
            }
        }
        Ok(())
    }

    fn budgets(&self) -> Vec<f64> {
        match &self.budget {
            BudgetPolicy::Uniform(b) => vec![*b; self.n_users],
            BudgetPolicy::PerUser(v) => v.clone(),
        }
    }
}

/// Node placement drawn for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub access_point: (f64, f64),
    pub users: Vec<(f64, f64)>,
    pub distance: Vec<f64>,
}

fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn draw_layout(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Layout {
    let side = spec.area_side;
    let access_point = (side * uniform_open(rng), side * uniform_open(rng));
    let mut users = Vec::with_capacity(spec.n_users);
    let mut distance = Vec::with_capacity(spec.n_users);
    for _ in 0..spec.n_users {
        loop {
            let pos = (side * uniform_open(rng), side * uniform_open(rng));
            let d = (pos.0 - access_point.0).hypot(pos.1 - access_point.1);
            if d >= MIN_DISTANCE {
                users.push(pos);
                distance.push(d);
                break;
            }
        }
    }
    Layout {
        access_point,
        users,
        distance,
    }
}

/// Taps per moving-average window for coherence bandwidth `bc` over `k` channels.
pub fn coherence_window(bc: f64, n_channels: usize) -> usize {
    ((bc * n_channels as f64).round() as usize).max(1)
}

/// Draws a network and returns it with the geometry it came from.
pub fn generate_with_layout(spec: &ScenarioSpec) -> Result<(NetworkInstance, Layout)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layout = draw_layout(spec, &mut rng);
    let (n, k) = (spec.n_users, spec.n_channels);
    let window = match spec.fading {
        Fading::Independent => 1,
        Fading::Correlated(bc) => coherence_window(bc, k),
    };
    let mut gain = Array2::zeros((n, k));
    for (i, d) in layout.distance.iter().enumerate() {
        let mean = 1.0 / (d * d);
        if window == 1 {
            for c in 0..k {
                gain[[i, c]] = -mean * uniform_open(&mut rng).ln();
            }
        } else {
            let scale = (0.5 * mean).sqrt();
            let taps: Vec<(f64, f64)> = (0..k + window - 1)
                .map(|_| {
                    let r = (-2.0 * uniform_open(&mut rng).ln()).sqrt();
                    let theta = std::f64::consts::TAU * uniform_open(&mut rng);
                    (scale * r * theta.cos(), scale * r * theta.sin())
                })
                .collect();
            let norm = (window as f64).sqrt();
            for c in 0..k {
                let (re, im) = taps[c..c + window]
                    .iter()
                    .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
                gain[[i, c]] = (re * re + im * im) / (norm * norm);
            }
        }
    }
    let inst = NetworkInstance::new(gain, vec![spec.noise; k], spec.budgets())?;
    Ok((inst, layout))
}

/// Independent Rayleigh fading: `|h_i(k)|² ~ Exp(mean 1/d_i²)`, i.i.d. over `k`.
pub fn generate(spec: &ScenarioSpec) -> Result<NetworkInstance> {
    generate_with_layout(spec).map(|(inst, _)| inst)
}

/// Frequency-correlated fading through a moving average of complex Gaussian
/// taps; see the module docs for the exact construction.
pub fn generate_correlated(spec: &ScenarioSpec) -> Result<NetworkInstance> {
    if !matches!(spec.fading, Fading::Correlated(_)) {
        return Err(Error::Config("generate_correlated needs correlated fading".into()));
    }
    generate(spec)
}

/// Two users, two channels: gains `[[1, 2], [1, 2]]`, unit noise and budgets.
pub fn make_example1() -> NetworkInstance {
    NetworkInstance::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]], vec![1.0, 1.0], vec![1.0, 1.0])
        .expect("fixture is valid")
}

/// First equilibrium of [`make_example1`]: user 1 `[3/4, 1/4]`, user 2 `[0, 1]`.
pub fn example1_tilde() -> PowerProfile {
    PowerProfile::from_rows(&[vec![0.75, 0.25], vec![0.0, 1.0]]).expect("fixture is valid")
}

/// The same equilibrium with the users swapped.
pub fn example1_hat() -> PowerProfile {
    PowerProfile::from_rows(&[vec![0.0, 1.0], vec![0.75, 0.25]]).expect("fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_fixture() {
        let inst = make_example1();
        assert_eq!(inst.gain()[[0, 0]], 1.0);
        assert_eq!(inst.gain()[[0, 1]], 2.0);
        assert_eq!(inst.gain()[[1, 1]], 2.0);
        assert_eq!(inst.noise(), &[1.0, 1.0]);
        assert_eq!(inst.budget(), &[1.0, 1.0]);
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = ScenarioSpec::new(6, 40, 99);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = ScenarioSpec::new(6, 40, 100);
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn users_respect_minimum_distance() {
        for seed in 0..50 {
            let (inst, layout) = generate_with_layout(&ScenarioSpec::new(8, 4, seed)).unwrap();
            assert!(layout.distance.iter().all(|d| *d >= MIN_DISTANCE));
            assert!(inst.gain().iter().all(|g| *g > 0.0));
        }
    }

    #[test]
    fn window_of_one_reduces_to_independent() {
        let k = 20;
        let indep = ScenarioSpec::new(3, k, 5);
        let corr = indep.clone().with_fading(Fading::Correlated(1.0 / k as f64));
        assert_eq!(coherence_window(1.0 / k as f64, k), 1);
        assert_eq!(generate(&indep).unwrap(), generate_correlated(&corr).unwrap());
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = ScenarioSpec::new(2, 2, 0).with_fading(Fading::Correlated(1.5));
        assert!(generate(&spec).is_err());
        spec.fading = Fading::Correlated(0.0);
        assert!(generate(&spec).is_err());
        spec.fading = Fading::Independent;
        spec.budget = BudgetPolicy::PerUser(vec![1.0]);
        assert!(generate(&spec).is_err());
        assert!(generate_correlated(&ScenarioSpec::new(2, 2, 0)).is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let spec: ScenarioSpec = toml::from_str(
            "n_users = 4\nn_channels = 16\nbudget = [1.0, 2.0, 1.0, 0.5]\nfading = { correlated = 0.2 }\nseed = 3\n",
        )
        .unwrap();
        assert_eq!(spec.fading, Fading::Correlated(0.2));
        assert_eq!(spec.budget, BudgetPolicy::PerUser(vec![1.0, 2.0, 1.0, 0.5]));
        assert_eq!(spec.area_side, DEFAULT_AREA_SIDE);
        let inst = generate(&spec).unwrap();
        assert_eq!(inst.budget(), &[1.0, 2.0, 1.0, 0.5]);
    }
}

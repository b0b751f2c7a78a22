//! Equilibrium-seeking dynamics.
//!
//! * [`run_aiwf`]: averaged iterative water-filling. Every user moves a
//!   fraction `α_t` of the way toward its best response, all from the same
//!   snapshot.
//! * [`run_siwf`]: sequential iterative water-filling. One user per step
//!   jumps to its exact best response, round-robin.
//! * [`run_pgd`]: projected gradient ascent on the potential with
//!   diminishing steps.
//! * [`run_simultaneous_iwf`]: everybody jumps to the best response at once.
//!   It does not converge in general on this network; it is kept as the
//!   baseline that fails.
//!
//! Every algorithm body reads other users only through the aggregate the
//! access point broadcasts (`n(k) + Σ_j |h_j(k)|² p_j(k)`) plus the user's
//! own row.
//!
//! Iterate `t = 0` is the (repaired) starting profile. The record for iterate
//! `t ≥ 1` carries the step size `α_t` that produced it and, for gradient
//! ascent, the error term `ε_{t−1} = 2α_t (p^t − p^{t−1})ᵀ ∇P(p^{t−1})`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, NetworkInstance, PowerProfile};
use crate::numeric::compensated_sum;
use crate::waterfill::{self, water_fill};

/// Default number of iterations before simultaneous IWF is declared divergent.
pub const DEFAULT_DIVERGENCE_GUARD: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// The parameter-free default `α_t = 1/(t + 2)`.
    Harmonic,
    Custom,
}

/// Step sizes `α_t = a / (b + t)` for `t ≥ 1`.
///
/// Restricting to this family with `0 < a < b + 1` keeps every step inside
/// `(0, 1)` while `Σ α_t` diverges and `Σ α_t²` converges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleParams")]
pub struct StepSchedule {
    kind: ScheduleKind,
    a: f64,
    b: f64,
}

#[derive(Deserialize)]
struct ScheduleParams {
    #[serde(default = "custom_kind")]
    kind: ScheduleKind,
    #[serde(default = "one")]
    a: f64,
    #[serde(default = "two")]
    b: f64,
}

fn custom_kind() -> ScheduleKind {
    ScheduleKind::Custom
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}

impl TryFrom<ScheduleParams> for StepSchedule {
    type Error = Error;

    fn try_from(p: ScheduleParams) -> Result<Self> {
        match p.kind {
            ScheduleKind::Harmonic => Ok(StepSchedule::harmonic()),
            ScheduleKind::Custom => StepSchedule::new(p.a, p.b),
        }
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::harmonic()
    }
}

impl StepSchedule {
    pub fn harmonic() -> Self {
        StepSchedule {
            kind: ScheduleKind::Harmonic,
            a: 1.0,
            b: 2.0,
        }
    }

    /// `α_t = 200 / (200 + t)`: the default for projected gradient ascent.
    /// Gradients of the potential are small (`g/(K·S)`), so the harmonic
    /// schedule crawls; this one stays above one half for the first 200
    /// iterations.
    pub fn gradient_default() -> Self {
        StepSchedule::new(200.0, 200.0).expect("valid schedule")
    }

    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidSchedule(format!("non-finite parameters a={a}, b={b}")));
        }
        if b < 0.0 {
            return Err(Error::InvalidSchedule(format!("b = {b} must be nonnegative")));
        }
        if !(a > 0.0 && a < b + 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < a < b + 1 for steps in (0, 1), got a={a}, b={b}"
            )));
        }
        Ok(StepSchedule {
            kind: ScheduleKind::Custom,
            a,
            b,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn params(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// `α_t`, with `t` counted from 1.
    pub fn alpha(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        self.a / (self.b + t as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapTarget {
    pub optimum: f64,
    pub tol: f64,
}

/// Composable stopping conditions; the first one met ends the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iters: usize,
    pub residual_tol: Option<f64>,
    pub potential_gap: Option<GapTarget>,
}

impl StoppingRule {
    pub fn max_iters(max_iters: usize) -> Self {
        StoppingRule {
            max_iters,
            residual_tol: None,
            potential_gap: None,
        }
    }

    pub fn with_residual_tol(mut self, tol: f64) -> Self {
        self.residual_tol = Some(tol);
        self
    }

    /// Stop once `optimum − P(p) ≤ tol`.
    pub fn with_potential_gap(mut self, optimum: f64, tol: f64) -> Self {
        self.potential_gap = Some(GapTarget { optimum, tol });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    DivergedGuard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub t: usize,
    pub potential: f64,
    pub sum_rate: f64,
    /// `‖Φ(p^t) − p^t‖_∞`, when evaluated at this iterate.
    pub residual_inf: Option<f64>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: String,
    pub records: Vec<IterRecord>,
    pub snapshots: Vec<(usize, PowerProfile)>,
    pub termination: Termination,
    pub final_profile: PowerProfile,
}

impl RunTrace {
    pub fn last(&self) -> &IterRecord {
        self.records.last().expect("a trace always records its first iterate")
    }

    /// Last evaluated residual, if any.
    pub fn final_residual(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.residual_inf)
    }

    /// Iterations performed.
    pub fn iterations(&self) -> usize {
        self.last().t
    }

    /// CSV with header `t,potential,sum_rate,residual_inf,alpha,epsilon_t`.
    /// Missing values are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,potential,sum_rate,residual_inf,alpha,epsilon_t\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t,
                r.potential,
                r.sum_rate,
                opt(r.residual_inf),
                opt(r.alpha),
                opt(r.epsilon)
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// How much of a run is kept in the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Keep every n-th iterate's record (the first and last are always kept).
    pub record_every: usize,
    /// Evaluate the best-response residual every n-th iterate when the
    /// algorithm does not produce it for free. `None` picks one sweep for
    /// the sequential algorithm and every iterate otherwise.
    pub residual_every: Option<usize>,
    pub snapshot_every: Option<usize>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            record_every: 1,
            residual_every: None,
            snapshot_every: None,
        }
    }
}

/// Order in which users take turns in the sequential algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    #[default]
    RoundRobin,
    /// A fresh permutation per sweep, drawn from `ChaCha8Rng::seed_from_u64(seed)`.
    Shuffled(u64),
}

/// Euclidean projection of `v` onto `{x ≥ 0, Σ x ≤ budget}`.
pub fn project_simplex(v: &[f64], budget: f64) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::InvalidInstance(format!("budget {budget} must be positive")));
    }
    let positive: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if compensated_sum(positive.iter().copied()) <= budget {
        return Ok(positive);
    }
    let mut sorted = positive;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - budget) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    Ok(v.iter().map(|x| (x - theta).max(0.0)).collect())
}

/// Projection onto `{0 ≤ x ≤ cap, Σ x ≤ budget}`. A capped projection that
/// must land on the budget face is a water-filling problem on the reflected
/// point.
fn project_row(v: &[f64], budget: f64, cap: Option<&[f64]>) -> Result<Vec<f64>> {
    let Some(cap) = cap else {
        return project_simplex(v, budget);
    };
    let clipped: Vec<f64> = v.iter().zip(cap).map(|(x, m)| x.clamp(0.0, *m)).collect();
    if compensated_sum(clipped.iter().copied()) <= budget {
        return Ok(clipped);
    }
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let reflected: Vec<f64> = v.iter().map(|x| top - x).collect();
    Ok(water_fill(&reflected, budget, Some(cap))?.allocation)
}

/// Enforces feasibility after an update: nonnegative, under the mask, and
/// the row sum no larger than the budget.
fn clamp_row(row: &mut [f64], budget: f64, cap: Option<&[f64]>) {
    for (k, x) in row.iter_mut().enumerate() {
        let upper = cap.map_or(f64::INFINITY, |m| m[k]);
        *x = x.clamp(0.0, upper);
    }
    let total = compensated_sum(row.iter().copied());
    if total > budget {
        let scale = budget / total;
        row.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Makes a starting point feasible and budget-tight. Infeasible rows are
/// projected; slack is then poured over the existing row by water-filling,
/// so the lowest entries are raised first.
pub fn prepare_start(inst: &NetworkInstance, p0: &PowerProfile) -> Result<PowerProfile> {
    if p0.n_users() != inst.n_users() || p0.n_channels() != inst.n_channels() {
        return Err(Error::DimensionMismatch {
            what: "starting profile entries",
            expected: inst.n_users() * inst.n_channels(),
            found: p0.n_users() * p0.n_channels(),
        });
    }
    let mut p = p0.clone();
    for i in 0..inst.n_users() {
        let budget = inst.budget()[i];
        let cap = inst.mask_row(i);
        let row = p.row(i).to_vec();
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("starting profile"));
        }
        let mut row = if model::check_feasible_row(inst, i, &row) {
            row
        } else {
            project_row(&row, budget, cap)?
        };
        let slack = budget - compensated_sum(row.iter().copied());
        if slack > model::FEASIBILITY_TOL {
            let floor: Vec<f64> = row.iter().map(|x| x + 1.0).collect();
            let room: Option<Vec<f64>> =
                cap.map(|m| m.iter().zip(&row).map(|(c, x)| (c - x).max(f64::MIN_POSITIVE)).collect());
            let extra = water_fill(&floor, slack, room.as_deref())?;
            row.iter_mut().zip(extra.allocation).for_each(|(x, e)| *x += e);
            clamp_row(&mut row, budget, cap);
        }
        p.row_mut(i).copy_from_slice(&row);
    }
    Ok(p)
}

/// What one transition produced.
/// The iterate a step leads to.
enum Next {
    Profile(PowerProfile),
    /// Only one user's row changes.
    Row(usize, Vec<f64>),
}

struct Step {
    next: Next,
    alpha: Option<f64>,
    epsilon: Option<f64>,
    /// Residual of the iterate the step started from, when it came for free.
    residual: Option<f64>,
    /// Potential of `next`, when the step maintains it cheaply.
    potential: Option<f64>,
}

/// Called with `(t, p^t)` for every iterate, starting at `t = 0`.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &PowerProfile);

struct Driver<'a> {
    inst: &'a NetworkInstance,
    stop: StoppingRule,
    trace: TraceOptions,
    residual_every: usize,
    guard: Option<usize>,
}

impl Driver<'_> {
    fn run(
        &self,
        algorithm: &str,
        start: PowerProfile,
        observer: Observer<'_>,
        mut step: impl FnMut(usize, &PowerProfile) -> Result<Step>,
    ) -> Result<RunTrace> {
        let inst = self.inst;
        let mut p = start;
        let mut records = Vec::new();
        let mut snapshots = Vec::new();
        let mut pending_alpha = None;
        let mut pending_epsilon = None;
        let mut known_potential = None;
        let limit = match self.guard {
            Some(g) => g.min(self.stop.max_iters),
            None => self.stop.max_iters,
        };
        let mut t = 0usize;
        let termination = loop {
            observer(t, &p);
            if self.trace.snapshot_every.is_some_and(|s| s > 0 && t.is_multiple_of(s)) {
                snapshots.push((t, p.clone()));
            }
            let potential = match known_potential.take() {
                Some(v) => v,
                None => model::potential_unchecked(inst, &p),
            };
            if !potential.is_finite() {
                return Err(Error::NonFinite("potential along the trajectory"));
            }
            let at_limit = t >= limit;
            let next = if at_limit { None } else { Some(step(t + 1, &p)?) };
            let residual = match next.as_ref().and_then(|s| s.residual) {
                Some(r) => Some(r),
                None if at_limit || t.is_multiple_of(self.residual_every) => {
                    Some(waterfill::inf_norm(&waterfill::residual_unchecked(inst, &p)?))
                }
                None => None,
            };
            let converged = self.stop.residual_tol.is_some_and(|tol| residual.is_some_and(|r| r <= tol))
                || self.stop.potential_gap.is_some_and(|g| g.optimum - potential <= g.tol);
            let finished = converged || at_limit;
            if t.is_multiple_of(self.trace.record_every.max(1)) || finished {
                records.push(IterRecord {
                    t,
                    potential,
                    sum_rate: model::sum_rate_unchecked(inst, &p),
                    residual_inf: residual,
                    alpha: pending_alpha,
                    epsilon: pending_epsilon,
                });
            }
            if converged {
                break Termination::Converged;
            }
            if at_limit {
                break if self.guard.is_some_and(|g| t >= g) {
                    Termination::DivergedGuard
                } else {
                    Termination::MaxIters
                };
            }
            let s = next.expect("a step is taken below the limit");
            pending_alpha = s.alpha;
            pending_epsilon = s.epsilon;
            known_potential = s.potential;
            match s.next {
                Next::Profile(next) => {
                    if next.as_array().iter().any(|x| !x.is_finite()) {
                        return Err(Error::NonFinite("iterate"));
                    }
                    p = next;
                }
                Next::Row(user, row) => {
                    if row.iter().any(|x| !x.is_finite()) {
                        return Err(Error::NonFinite("iterate"));
                    }
                    p.row_mut(user).copy_from_slice(&row);
                }
            }
            t += 1;
        };
        Ok(RunTrace {
            algorithm: algorithm.to_string(),
            records,
            snapshots,
            termination,
            final_profile: p,
        })
    }
}

/// Relaxed simultaneous best-response step with per-user step sizes.
fn averaged_step(inst: &NetworkInstance, p: &PowerProfile, alphas: &[f64]) -> Result<(PowerProfile, f64)> {
    let broadcast = model::broadcast_unchecked(inst, p);
    let mut next = p.clone();
    let mut residual = 0.0f64;
    for (i, &alpha) in alphas.iter().enumerate().take(inst.n_users()) {
        let br = waterfill::best_response_from_broadcast(inst, p, &broadcast, i)?;
        let row = next.row_mut(i);
        for (x, phi) in row.iter_mut().zip(&br.allocation) {
            residual = residual.max((phi - *x).abs());
            *x = if alpha == 1.0 { *phi } else { (1.0 - alpha) * *x + alpha * phi };
        }
        clamp_row(row, inst.budget()[i], inst.mask_row(i));
    }
    Ok((next, residual))
}

fn check_schedules(inst: &NetworkInstance, per_user: Option<&[StepSchedule]>) -> Result<()> {
    if let Some(s) = per_user {
        if s.len() != inst.n_users() {
            return Err(Error::InvalidSchedule(format!(
                "{} per-user schedules for {} users",
                s.len(),
                inst.n_users()
            )));
        }
    }
    Ok(())
}

/// Averaged iterative water-filling:
/// `p_i^{t+1} = (1 − α_t) p_i^t + α_t Φ_i(p_{−i}^t)` for all users at once.
/// Users may follow their own schedules.
pub fn run_aiwf(
    inst: &NetworkInstance,
    p0: &PowerProfile,
    schedule: StepSchedule,
    per_user_schedules: Option<&[StepSchedule]>,
    stop: StoppingRule,
) -> Result<RunTrace> {
    run_aiwf_with(inst, p0, schedule, per_user_schedules, stop, TraceOptions::default(), &mut |_, _| {})
}

pub fn run_aiwf_with(
    inst: &NetworkInstance,
    p0: &PowerProfile,
    schedule: StepSchedule,
    per_user_schedules: Option<&[StepSchedule]>,
    stop: StoppingRule,
    trace: TraceOptions,
    observer: Observer<'_>,
) -> Result<RunTrace> {
    check_schedules(inst, per_user_schedules)?;
    let start = prepare_start(inst, p0)?;
    let driver = Driver {
        inst,
        stop,
        trace,
        residual_every: trace.residual_every.unwrap_or(1).max(1),
        guard: None,
    };
    driver.run("aiwf", start, observer, |t, p| {
        let alphas: Vec<f64> = match per_user_schedules {
            Some(s) => s.iter().map(|s| s.alpha(t)).collect(),
            None => vec![schedule.alpha(t); inst.n_users()],
        };
        let (next, residual) = averaged_step(inst, p, &alphas)?;
        Ok(Step {
            next: Next::Profile(next),
            alpha: Some(schedule.alpha(t)),
            epsilon: None,
            residual: Some(residual),
            potential: None,
        })
    })
}

/// Sequential iterative water-filling: step `t` replaces one user's row by
/// its exact best response. The potential never decreases.
pub fn run_siwf(inst: &NetworkInstance, p0: &PowerProfile, stop: StoppingRule) -> Result<RunTrace> {
    run_siwf_with(inst, p0, SweepOrder::RoundRobin, stop, TraceOptions::default(), &mut |_, _| {})
}

pub fn run_siwf_with(
    inst: &NetworkInstance,
    p0: &PowerProfile,
    order: SweepOrder,
    stop: StoppingRule,
    trace: TraceOptions,
    observer: Observer<'_>,
) -> Result<RunTrace> {
    let start = prepare_start(inst, p0)?;
    let n = inst.n_users();
    let driver = Driver {
        inst,
        stop,
        trace,
        residual_every: trace.residual_every.unwrap_or(n).max(1),
        guard: None,
    };
    let mut turns: Vec<usize> = (0..n).collect();
    let mut rng = match order {
        SweepOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        SweepOrder::RoundRobin => None,
    };
    // Received power is updated in place within a sweep and rebuilt exactly
    // at the start of each one.
    let mut received = Vec::new();
    driver.run("siwf", start, observer, |t, p| {
        let slot = (t - 1) % n;
        if slot == 0 {
            if let Some(rng) = rng.as_mut() {
                turns.shuffle(rng);
            }
            received = model::received_power(inst, p);
        }
        let user = turns[slot];
        let broadcast: Vec<f64> = received.iter().zip(inst.noise()).map(|(r, n)| n + r).collect();
        let br = waterfill::best_response_from_broadcast(inst, p, &broadcast, user)?;
        for (((r, g), new), old) in received.iter_mut().zip(inst.gain_row(user)).zip(&br.allocation).zip(p.row(user)) {
            *r = (*r + g * (new - old)).max(0.0);
        }
        Ok(Step {
            next: Next::Row(user, br.allocation),
            alpha: None,
            epsilon: None,
            residual: None,
            potential: Some(model::potential_from_received(inst, &received)),
        })
    })
}

/// Projected gradient ascent on the potential,
/// `p_i^{t+1} = Proj_{P_i}(p_i^t + α_t ∇_{p_i} P(p^t))`, all users at once.
pub fn run_pgd(
    inst: &NetworkInstance,
    p0: &PowerProfile,
    schedule: StepSchedule,
    stop: StoppingRule,
) -> Result<RunTrace> {
    run_pgd_with(inst, p0, schedule, stop, TraceOptions::default(), &mut |_, _| {})
}

pub fn run_pgd_with(
    inst: &NetworkInstance,
    p0: &PowerProfile,
    schedule: StepSchedule,
    stop: StoppingRule,
    trace: TraceOptions,
    observer: Observer<'_>,
) -> Result<RunTrace> {
    let start = prepare_start(inst, p0)?;
    let driver = Driver {
        inst,
        stop,
        trace,
        residual_every: trace.residual_every.unwrap_or(1).max(1),
        guard: None,
    };
    driver.run("pgd", start, observer, |t, p| {
        let alpha = schedule.alpha(t);
        let broadcast = model::broadcast_unchecked(inst, p);
        let grad = model::gradient_from_broadcast(inst, &broadcast);
        let mut next = p.clone();
        for i in 0..inst.n_users() {
            let moved: Vec<f64> = p
                .row(i)
                .iter()
                .zip(grad.row(i))
                .map(|(x, g)| x + alpha * g)
                .collect();
            let mut row = project_row(&moved, inst.budget()[i], inst.mask_row(i))?;
            clamp_row(&mut row, inst.budget()[i], inst.mask_row(i));
            next.row_mut(i).copy_from_slice(&row);
        }
        let ascent = compensated_sum(
            next.as_array()
                .iter()
                .zip(p.as_array().iter())
                .zip(grad.iter())
                .map(|((a, b), g)| (a - b) * g),
        );
        // Projection guarantees α·ascent ≥ ‖next − p‖² ≥ 0; the floor only
        // absorbs rounding when the step is tiny.
        let epsilon = 2.0 * (alpha * ascent).max(next.distance_sq(p));
        Ok(Step {
            next: Next::Profile(next),
            alpha: Some(alpha),
            epsilon: Some(epsilon),
            residual: None,
            potential: None,
        })
    })
}

/// Classical simultaneous IWF, `p^{t+1} = Φ(p^t)`. Ends with
/// [`Termination::DivergedGuard`] if the residual tolerance is not met within
/// `divergence_guard` iterations; non-convergence is an outcome, not an error.
pub fn run_simultaneous_iwf(
    inst: &NetworkInstance,
    p0: &PowerProfile,
    stop: StoppingRule,
    divergence_guard: usize,
) -> Result<RunTrace> {
    run_simultaneous_iwf_with(inst, p0, stop, divergence_guard, TraceOptions::default(), &mut |_, _| {})
}

pub fn run_simultaneous_iwf_with(
    inst: &NetworkInstance,
    p0: &PowerProfile,
    stop: StoppingRule,
    divergence_guard: usize,
    trace: TraceOptions,
    observer: Observer<'_>,
) -> Result<RunTrace> {
    let start = prepare_start(inst, p0)?;
    let driver = Driver {
        inst,
        stop,
        trace,
        residual_every: 1,
        guard: Some(divergence_guard),
    };
    let ones = vec![1.0; inst.n_users()];
    driver.run("simultaneous_iwf", start, observer, |_, p| {
        let (next, residual) = averaged_step(inst, p, &ones)?;
        Ok(Step {
            next: Next::Profile(next),
            alpha: Some(1.0),
            epsilon: None,
            residual: Some(residual),
            potential: None,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve_max_potential;
    use crate::scenario::{example1_tilde, make_example1};
    use approx::assert_relative_eq;

    fn p_star_example1() -> f64 {
        0.5 * ((7.0f64 / 4.0).ln() + (7.0f64 / 2.0).ln())
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::new(1.0, 1.0).is_ok());
        assert!(StepSchedule::new(2.0, 1.0).is_err());
        assert!(StepSchedule::new(0.0, 1.0).is_err());
        assert!(StepSchedule::new(0.5, -0.1).is_err());
        let s = StepSchedule::harmonic();
        assert_eq!(s.alpha(1), 1.0 / 3.0);
        assert_eq!(StepSchedule::new(1.0, 1.0).unwrap().alpha(1), 0.5);
        let parsed: std::result::Result<StepSchedule, _> = toml::from_str("a = 3.0\nb = 1.0\n");
        assert!(parsed.is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.2, 0.1], 1.0).unwrap(), vec![0.2, 0.1]);
        assert_eq!(project_simplex(&[2.0, 0.0], 1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(project_simplex(&[1.0, 1.0], 1.0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[-1.0, 0.3], 1.0).unwrap(), vec![0.0, 0.3]);
        assert!(project_simplex(&[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn capped_projection_matches_kkt() {
        let v = [3.0, 0.5, 0.2];
        let x = project_row(&v, 1.0, Some(&[0.4, 10.0, 10.0])).unwrap();
        // θ solves min(3 − θ, 0.4) + (0.5 − θ)⁺ + (0.2 − θ)⁺ = 1 → θ = 0.05.
        assert_relative_eq!(x[0], 0.4, epsilon = 1e-12);
        assert_relative_eq!(x[1], 0.45, epsilon = 1e-12);
        assert_relative_eq!(x[2], 0.15, epsilon = 1e-12);
    }

    #[test]
    fn aiwf_converges_on_example1() {
        let inst = make_example1();
        let trace = run_aiwf(
            &inst,
            &inst.uniform_profile(),
            StepSchedule::harmonic(),
            None,
            StoppingRule::max_iters(100_000).with_residual_tol(1e-8),
        )
        .unwrap();
        assert_eq!(trace.termination, Termination::Converged);
        assert!(trace.final_residual().unwrap() <= 1e-8);
        assert!((trace.last().potential - p_star_example1()).abs() <= 1e-6);
    }

    #[test]
    fn fixed_point_start_terminates_immediately() {
        let inst = make_example1();
        let stop = StoppingRule::max_iters(50).with_residual_tol(1e-8);
        for trace in [
            run_aiwf(&inst, &example1_tilde(), StepSchedule::harmonic(), None, stop).unwrap(),
            run_siwf(&inst, &example1_tilde(), stop).unwrap(),
            run_pgd(&inst, &example1_tilde(), StepSchedule::harmonic(), stop).unwrap(),
            run_simultaneous_iwf(&inst, &example1_tilde(), stop, 100).unwrap(),
        ] {
            assert_eq!(trace.records.len(), 1, "{}", trace.algorithm);
            assert_eq!(trace.final_profile, example1_tilde());
        }
    }

    #[test]
    fn max_iters_zero_reports_start_only() {
        let inst = make_example1();
        let trace = run_pgd(&inst, &inst.uniform_profile(), StepSchedule::harmonic(), StoppingRule::max_iters(0)).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.termination, Termination::MaxIters);
        assert_eq!(trace.final_profile, inst.uniform_profile());
    }

    #[test]
    fn siwf_reaches_equilibrium_on_example1() {
        let inst = make_example1();
        let trace = run_siwf(&inst, &inst.uniform_profile(), StoppingRule::max_iters(20).with_residual_tol(1e-12)).unwrap();
        assert_eq!(trace.termination, Termination::Converged);
        assert!((trace.last().potential - p_star_example1()).abs() <= 1e-9);
    }

    #[test]
    fn pgd_on_example1() {
        let inst = make_example1();
        let schedule = StepSchedule::gradient_default();
        let trace = run_pgd(&inst, &inst.uniform_profile(), schedule, StoppingRule::max_iters(20_000)).unwrap();
        let gap = p_star_example1() - trace.last().potential;
        assert!(gap <= 1e-5, "gap {gap} final {:?}", trace.final_profile);
        let worst = trace.records.iter().filter_map(|r| r.epsilon).fold(f64::INFINITY, f64::min);
        assert!(worst >= 0.0, "{worst}");
    }

    #[test]
    fn simultaneous_iwf_oscillates_on_example1() {
        let inst = make_example1();
        let start = PowerProfile::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let trace = run_simultaneous_iwf(&inst, &start, StoppingRule::max_iters(usize::MAX).with_residual_tol(1e-3), 10_000).unwrap();
        assert_eq!(trace.termination, Termination::DivergedGuard);
        assert!(trace.records.iter().all(|r| r.residual_inf.unwrap() >= 0.5));
    }

    #[test]
    fn gap_rule_stops_aiwf() {
        let inst = make_example1();
        let cert = solve_max_potential(&inst, 1e-12).unwrap();
        let trace = run_aiwf(
            &inst,
            &inst.uniform_profile(),
            StepSchedule::harmonic(),
            None,
            StoppingRule::max_iters(10_000).with_potential_gap(cert.value, 1e-6),
        )
        .unwrap();
        assert_eq!(trace.termination, Termination::Converged);
        assert!(cert.value - trace.last().potential <= 1e-6);
    }

    #[test]
    fn prepare_start_repairs_and_tightens() {
        let inst = make_example1();
        let bad = PowerProfile::from_rows(&[vec![3.0, -1.0], vec![0.1, 0.3]]).unwrap();
        let p = prepare_start(&inst, &bad).unwrap();
        assert_eq!(p.row(0), &[1.0, 0.0]);
        // Slack 0.6 poured over [0.1, 0.3] levels both entries at 0.5.
        assert_relative_eq!(p.row(1)[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p.row(1)[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let inst = make_example1();
        let trace = run_pgd(&inst, &inst.uniform_profile(), StepSchedule::harmonic(), StoppingRule::max_iters(3)).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,potential,sum_rate,residual_inf,alpha,epsilon_t");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(",,"));
        assert!(lines[2].starts_with("1,"));
    }

    #[test]
    fn per_user_schedule_count_is_checked() {
        let inst = make_example1();
        let one = [StepSchedule::harmonic()];
        assert!(run_aiwf(&inst, &inst.uniform_profile(), StepSchedule::harmonic(), Some(&one), StoppingRule::max_iters(1)).is_err());
    }
}

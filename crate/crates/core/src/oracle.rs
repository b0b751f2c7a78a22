//! Centralized ground truth for the game.
//!
//! [`solve_max_potential`] maximizes the potential directly with Frank–Wolfe
//! steps over the product of the users' budget sets. Its linear subproblem is
//! combinatorial (a user's best vertex puts the whole budget on its steepest
//! channel), it never calls the water-filling code, and its duality gap is a
//! certified bound on the distance to the optimum. That lets it arbitrate the
//! distributed dynamics.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, ActivityThreshold, CollisionStats};
use crate::model::{self, NetworkInstance, PowerProfile};
use crate::numeric::compensated_sum;
use crate::waterfill;

/// Sweeps of pairwise steps before the solver gives up.
pub const DEFAULT_MAX_SWEEPS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumCertificate {
    pub p_star: PowerProfile,
    /// `P(p_star)`.
    pub value: f64,
    /// Frank–Wolfe duality gap at `p_star`, an upper bound on `P* − value`.
    pub gap_bound: f64,
    pub iterations: usize,
}

impl OptimumCertificate {
    /// Upper end of the certified interval for `P*`.
    pub fn upper_bound(&self) -> f64 {
        self.value + self.gap_bound
    }
}

/// Best feasible vertex for a linear objective `grad` over
/// `{0 ≤ x ≤ cap, Σ x = budget}`: greedy fill by descending gradient.
fn linear_oracle(grad: &[f64], budget: f64, cap: Option<&[f64]>) -> Vec<f64> {
    let mut vertex = vec![0.0; grad.len()];
    match cap {
        None => {
            let best = argmax(grad, |_| true);
            vertex[best] = budget;
        }
        Some(cap) => {
            let mut order: Vec<usize> = (0..grad.len()).collect();
            order.sort_by(|a, b| grad[*b].total_cmp(&grad[*a]));
            let mut left = budget;
            for k in order {
                if left <= 0.0 {
                    break;
                }
                let take = cap[k].min(left);
                vertex[k] = take;
                left -= take;
            }
        }
    }
    vertex
}

fn argmax(values: &[f64], allowed: impl Fn(usize) -> bool) -> usize {
    let mut best = usize::MAX;
    for (k, v) in values.iter().enumerate() {
        if allowed(k) && (best == usize::MAX || *v > values[best]) {
            best = k;
        }
    }
    best
}

/// Frank–Wolfe duality gap of one user's block: `max_s ⟨g, s − p_i⟩`.
fn block_gap(grad: &[f64], row: &[f64], budget: f64, cap: Option<&[f64]>) -> f64 {
    match cap {
        None => {
            let top = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let spent = compensated_sum(row.iter().copied());
            compensated_sum(
                row.iter()
                    .zip(grad)
                    .map(|(x, g)| x * (top - g))
                    .chain(std::iter::once((budget - spent) * top)),
            )
        }
        Some(cap) => {
            let vertex = linear_oracle(grad, budget, Some(cap));
            compensated_sum(vertex.iter().zip(row).zip(grad).map(|((s, x), g)| (s - x) * g))
        }
    }
}

/// Duality gap `Σ_i max_{s_i} ⟨∇_i P(p), s_i − p_i⟩` of any feasible profile.
pub fn duality_gap(inst: &NetworkInstance, p: &PowerProfile) -> Result<f64> {
    model::check_feasible(inst, p)?;
    Ok(duality_gap_unchecked(inst, p))
}

fn duality_gap_unchecked(inst: &NetworkInstance, p: &PowerProfile) -> f64 {
    let broadcast = model::broadcast_unchecked(inst, p);
    let grad = model::gradient_from_broadcast(inst, &broadcast);
    compensated_sum((0..inst.n_users()).map(|i| {
        block_gap(
            grad.row(i).to_slice().expect("standard layout"),
            p.row(i),
            inst.budget()[i],
            inst.mask_row(i),
        )
    }))
}

/// Certified maximizer of the potential.
///
/// Starts every user at its linear-oracle vertex for the noise-only gradient
/// and then performs pairwise Frank–Wolfe steps: per user, mass moves from
/// the active channel with the smallest partial derivative to the channel
/// with the largest one, with an exact line search. Along such a direction
/// only two channel aggregates change, so the 1-D maximizer of
/// `ln(S_s + g_s δ) + ln(S_a − g_a δ)` is available in closed form. Stops when
/// the duality gap drops to `tol`.
pub fn solve_max_potential(inst: &NetworkInstance, tol: f64) -> Result<OptimumCertificate> {
    solve_max_potential_with(inst, tol, DEFAULT_MAX_SWEEPS)
}

pub fn solve_max_potential_with(
    inst: &NetworkInstance,
    tol: f64,
    max_sweeps: usize,
) -> Result<OptimumCertificate> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Config(format!("oracle tolerance {tol} must be positive")));
    }
    let (n, k) = (inst.n_users(), inst.n_channels());
    let mut p = PowerProfile::zeros(n, k);
    let noise_grad = model::gradient_from_broadcast(inst, inst.noise());
    for i in 0..n {
        let vertex = linear_oracle(
            noise_grad.row(i).to_slice().expect("standard layout"),
            inst.budget()[i],
            inst.mask_row(i),
        );
        p.row_mut(i).copy_from_slice(&vertex);
    }

    let mut best_gap = f64::INFINITY;
    let mut grad = vec![0.0; k];
    for sweep in 0..=max_sweeps {
        // Aggregates are rebuilt every sweep so incremental updates cannot drift.
        let mut broadcast = model::broadcast_unchecked(inst, &p);
        let gap = duality_gap_unchecked(inst, &p);
        best_gap = best_gap.min(gap);
        if gap <= tol {
            let value = model::potential_unchecked(inst, &p);
            return Ok(OptimumCertificate {
                p_star: p,
                value,
                gap_bound: gap.max(0.0),
                iterations: sweep,
            });
        }
        if sweep == max_sweeps {
            break;
        }
        for i in 0..n {
            let gains = inst.gain_row(i);
            let cap = inst.mask_row(i);
            // A handful of pair moves per user keeps sweeps balanced across users.
            let moves = 1 + p.row(i).iter().filter(|x| **x > 0.0).count().min(8);
            for _ in 0..moves {
                for c in 0..k {
                    grad[c] = gains[c] / broadcast[c];
                }
                let row = p.row(i);
                let to = argmax(&grad, |c| cap.is_none_or(|m| row[c] < m[c]));
                let mut from = usize::MAX;
                for c in 0..k {
                    if row[c] > 0.0 && (from == usize::MAX || grad[c] < grad[from]) {
                        from = c;
                    }
                }
                if from == usize::MAX || to == usize::MAX || grad[to] <= grad[from] {
                    break;
                }
                let (gs, ga) = (gains[to], gains[from]);
                let (ss, sa) = (broadcast[to], broadcast[from]);
                let room = cap.map_or(f64::INFINITY, |m| m[to] - row[to]);
                let limit = row[from].min(room);
                let step = ((gs * sa - ga * ss) / (2.0 * gs * ga)).clamp(0.0, limit);
                if step <= 0.0 {
                    break;
                }
                let row = p.row_mut(i);
                if step >= row[from] {
                    row[to] += row[from];
                    row[from] = 0.0;
                } else {
                    row[to] += step;
                    row[from] -= step;
                }
                broadcast[to] = ss + gs * step;
                broadcast[from] = sa - ga * step;
            }
        }
    }
    Err(Error::NotConverged {
        what: "Frank-Wolfe oracle",
        best: best_gap,
    })
}

/// Tolerances for declaring a profile an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeTolerance {
    /// Bound on `‖Φ(p) − p‖_∞`.
    pub residual: f64,
    /// Bound on `P* − P(p)`, on top of the certificate's own slack.
    pub gap: f64,
}

impl NeTolerance {
    /// Gap tolerance ten times the residual tolerance.
    pub fn new(residual: f64) -> Self {
        NeTolerance {
            residual,
            gap: 10.0 * residual,
        }
    }
}

impl From<f64> for NeTolerance {
    fn from(residual: f64) -> Self {
        NeTolerance::new(residual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub residual_inf: f64,
    /// `cert.value − P(p)`; may be slightly negative.
    pub potential_gap: f64,
    /// Fixed-point test: `residual_inf ≤ tol.residual`.
    pub is_ne: bool,
    /// Optimality test: `potential_gap ≤ tol.gap + cert.gap_bound`.
    pub gap_within_tol: bool,
    /// Both tests agree; a disagreement is a diagnostic, not an error.
    pub tests_agree: bool,
    /// Active channels per user.
    pub supports: Vec<Vec<usize>>,
    pub collisions: CollisionStats,
}

/// Checks `p` against both characterizations of equilibrium: fixed point of
/// the best-response map and maximizer of the potential.
pub fn verify_ne(
    inst: &NetworkInstance,
    p: &PowerProfile,
    cert: &OptimumCertificate,
    tol: impl Into<NeTolerance>,
) -> Result<EquilibriumReport> {
    let tol = tol.into();
    model::check_feasible(inst, p)?;
    let residual_inf = waterfill::inf_norm(&waterfill::residual_unchecked(inst, p)?);
    let potential_gap = cert.value - model::potential_unchecked(inst, p);
    let is_ne = residual_inf <= tol.residual;
    let gap_within_tol = potential_gap <= tol.gap + cert.gap_bound;
    let threshold = ActivityThreshold::default();
    let supports = (0..inst.n_users())
        .map(|i| {
            let limit = threshold.for_user(inst, i);
            (0..inst.n_channels()).filter(|&k| p.get(i, k) > limit).collect()
        })
        .collect();
    Ok(EquilibriumReport {
        residual_inf,
        potential_gap,
        is_ne,
        gap_within_tol,
        tests_agree: is_ne == gap_within_tol,
        supports,
        collisions: metrics::count_collisions(inst, p, threshold)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceMatrices {
    /// `H(k)[q][r] = |h_r(k)|² / |h_q(k)|²` off the diagonal, zero on it.
    pub per_channel: Vec<Array2<f64>>,
    /// Entrywise maximum over channels.
    pub max: Array2<f64>,
}

/// Normalized cross-interference matrices of the network seen as co-located
/// transmitter–receiver pairs.
pub fn interference_matrices(inst: &NetworkInstance) -> InterferenceMatrices {
    let n = inst.n_users();
    let gain = inst.gain();
    let per_channel: Vec<Array2<f64>> = (0..inst.n_channels())
        .map(|k| {
            Array2::from_shape_fn((n, n), |(q, r)| {
                if q == r {
                    0.0
                } else {
                    gain[[r, k]] / gain[[q, k]]
                }
            })
        })
        .collect();
    let mut max = Array2::zeros((n, n));
    for h in &per_channel {
        max.zip_mut_with(h, |m, v| *m = f64::max(*m, *v));
    }
    InterferenceMatrices { per_channel, max }
}

const POWER_ITERATION_CAP: usize = 1_000_000;

/// Perron root of a nonnegative square matrix by power iteration.
///
/// Each step multiplies by `M + cI` with `c` the current upper estimate of
/// the root; the shift keeps iterates strictly positive and separates the
/// Perron root from eigenvalues of equal modulus (such as the `±ρ` pair of a
/// 2×2 off-diagonal matrix), and tracking `ρ` keeps the contraction factor
/// away from one. Convergence is judged by the Collatz–Wielandt bracket
/// `min_i (Mx)_i/x_i ≤ ρ(M) ≤ max_i (Mx)_i/x_i`, valid for any `x > 0`.
pub fn spectral_radius(m: &Array2<f64>, tol: f64) -> Result<f64> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            what: "matrix columns",
            expected: rows,
            found: cols,
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    if m.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInstance("matrix must be nonnegative".into()));
    }
    if rows == 0 || m.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let mut x = vec![1.0; rows];
    let mut previous_upper = f64::INFINITY;
    for it in 0..POWER_ITERATION_CAP {
        let mx: Vec<f64> = (0..rows)
            .map(|q| compensated_sum((0..rows).map(|r| m[[q, r]] * x[r])))
            .collect();
        let (mut lower, mut upper) = (f64::INFINITY, 0.0f64);
        for (a, b) in mx.iter().zip(&x) {
            let ratio = a / b;
            lower = lower.min(ratio);
            upper = upper.max(ratio);
        }
        if upper == 0.0 {
            return Ok(0.0);
        }
        if upper - lower <= tol * upper {
            return Ok(0.5 * (lower + upper));
        }
        // Reducible matrices can keep the lower bound away from ρ; then the
        // monotone upper bound settling is the signal.
        if it > 100 && (previous_upper - upper).abs() <= 1e-3 * tol * upper {
            return Ok(upper);
        }
        previous_upper = upper;
        let y: Vec<f64> = mx.iter().zip(&x).map(|(a, b)| a + upper * b).collect();
        let scale = y.iter().copied().fold(0.0, f64::max);
        x = y.iter().map(|v| v / scale).collect();
    }
    Err(Error::NotConverged {
        what: "power iteration",
        best: previous_upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceGridReport {
    /// Best objective over all gridded 2×2 covariances.
    pub full_max: f64,
    /// Best objective over the diagonal (zero-correlation) grid points.
    pub diagonal_max: f64,
    /// Best objective over rank-one inputs (correlation ±1).
    pub rank_one_max: f64,
    /// Lipschitz bound on what the grid spacing can hide.
    pub resolution_bound: f64,
    pub points: usize,
}

impl CovarianceGridReport {
    pub fn diagonal_is_optimal(&self) -> bool {
        self.diagonal_max >= self.full_max - self.resolution_bound
    }
}

/// Exhaustive search of `(1/K)[ln det(Σ_i H_i Σ_i H_iᵀ + N) − ln det N]`
/// over 2×2 input covariances with `tr Σ_i ≤ budget_i`, for one or two users.
///
/// Each covariance is `[[a, c], [c, b]]` with `c = ρ√(ab)`; `a` and `b` step
/// through `budget/steps` with `a + b ≤ budget` and `ρ` through `2/steps` on
/// `[−1, 1]`. Budgets may be zero.
pub fn covariance_grid_search(
    gains: &[[f64; 2]],
    noise: [f64; 2],
    budgets: &[f64],
    steps: usize,
) -> Result<CovarianceGridReport> {
    if gains.is_empty() || gains.len() > 2 || budgets.len() != gains.len() {
        return Err(Error::Unsupported(format!(
            "covariance search needs one or two users with budgets, got {} gains and {} budgets",
            gains.len(),
            budgets.len()
        )));
    }
    if steps == 0 || !steps.is_multiple_of(2) {
        return Err(Error::Unsupported("grid steps must be even and positive".into()));
    }
    if gains.len() == 2 && steps > 24 {
        return Err(Error::Unsupported("two-user grids are limited to 24 steps".into()));
    }
    if budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) || noise.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::InvalidInstance("budgets must be nonnegative and noise positive".into()));
    }

    // Per-user candidate received covariances (H Σ Hᵀ entries) tagged by kind.
    struct Candidate {
        xx: f64,
        yy: f64,
        xy: f64,
        diagonal: bool,
        rank_one: bool,
    }
    let candidates: Vec<Vec<Candidate>> = gains
        .iter()
        .zip(budgets)
        .map(|(g, budget)| {
            let mut out = Vec::new();
            let cross = (g[0] * g[1]).sqrt();
            for u in 0..=steps {
                for v in 0..=steps - u {
                    let a = budget * u as f64 / steps as f64;
                    let b = budget * v as f64 / steps as f64;
                    for w in 0..=steps {
                        let rho = -1.0 + 2.0 * w as f64 / steps as f64;
                        out.push(Candidate {
                            xx: g[0] * a,
                            yy: g[1] * b,
                            xy: cross * rho * (a * b).sqrt(),
                            diagonal: 2 * w == steps,
                            rank_one: w == 0 || w == steps,
                        });
                    }
                }
            }
            out
        })
        .collect();

    let log_det_noise = noise[0].ln() + noise[1].ln();
    let objective = |xx: f64, yy: f64, xy: f64| {
        let det = (xx + noise[0]) * (yy + noise[1]) - xy * xy;
        0.5 * (det.ln() - log_det_noise)
    };
    let mut report = CovarianceGridReport {
        full_max: f64::NEG_INFINITY,
        diagonal_max: f64::NEG_INFINITY,
        rank_one_max: f64::NEG_INFINITY,
        resolution_bound: 0.0,
        points: 0,
    };
    let mut visit = |xx: f64, yy: f64, xy: f64, diagonal: bool, rank_one: bool| {
        let value = objective(xx, yy, xy);
        report.points += 1;
        report.full_max = report.full_max.max(value);
        if diagonal {
            report.diagonal_max = report.diagonal_max.max(value);
        }
        if rank_one {
            report.rank_one_max = report.rank_one_max.max(value);
        }
    };
    match candidates.as_slice() {
        [only] => {
            for c in only {
                visit(c.xx, c.yy, c.xy, c.diagonal, c.rank_one);
            }
        }
        [first, second] => {
            for c in first {
                for d in second {
                    visit(c.xx + d.xx, c.yy + d.yy, c.xy + d.xy, c.diagonal && d.diagonal, c.rank_one || d.rank_one);
                }
            }
        }
        _ => unreachable!("user count checked above"),
    }
    // ∂C/∂a ≤ (1/2)·g/n per diagonal entry; grid spacing budget/steps in each of a and b.
    report.resolution_bound = gains
        .iter()
        .zip(budgets)
        .map(|(g, b)| 0.5 * (g[0] / noise[0]).max(g[1] / noise[1]) * 2.0 * b / steps as f64)
        .sum();
    Ok(report)
}

/// Grid check that diagonal input covariances (per-channel power loading)
/// lose nothing against general 2×2 covariances on a two-channel instance.
pub fn diagonal_optimality_check(inst: &NetworkInstance, grid_steps: usize) -> Result<CovarianceGridReport> {
    if inst.n_channels() != 2 || inst.n_users() > 2 {
        return Err(Error::Unsupported(format!(
            "diagonal check needs K = 2 and N ≤ 2, got N = {}, K = {}",
            inst.n_users(),
            inst.n_channels()
        )));
    }
    let gains: Vec<[f64; 2]> = (0..inst.n_users())
        .map(|i| [inst.gain_row(i)[0], inst.gain_row(i)[1]])
        .collect();
    covariance_grid_search(&gains, [inst.noise()[0], inst.noise()[1]], inst.budget(), grid_steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdmaViolation {
    pub channel: usize,
    pub occupant: usize,
    pub challenger: usize,
    /// `σ_occupant |h_occupant|² − σ_challenger |h_challenger|²`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdmaReport {
    /// Recovered water level of each user.
    pub levels: Vec<f64>,
    pub single_occupancy: usize,
    pub satisfied: usize,
    pub violations: Vec<FdmaViolation>,
    pub shared_channels: Vec<usize>,
    pub idle_channels: Vec<usize>,
}

impl FdmaReport {
    /// Fraction of single-occupancy channels meeting the level condition;
    /// one when there are none.
    pub fn satisfied_fraction(&self) -> f64 {
        if self.single_occupancy == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.single_occupancy as f64
        }
    }
}

/// At an equilibrium, a channel held by user `i` alone must satisfy
/// `σ_i |h_i(k)|² ≥ σ_j |h_j(k)|²` for every other user `j`, where `σ` are the
/// users' water levels. Levels are recovered as
/// `σ_i = max_{k active} (p_i(k) + IPN_i(k)/|h_i(k)|²)`.
pub fn fdma_condition_check(inst: &NetworkInstance, p: &PowerProfile, tol: f64) -> Result<FdmaReport> {
    model::check_feasible(inst, p)?;
    let residual = waterfill::inf_norm(&waterfill::residual_unchecked(inst, p)?);
    if residual > tol {
        return Err(Error::NotEquilibrium { residual, tol });
    }
    let broadcast = model::broadcast_unchecked(inst, p);
    let threshold = ActivityThreshold::default();
    let occupants = metrics::channel_occupants(inst, p, threshold);
    let levels: Vec<f64> = (0..inst.n_users())
        .map(|i| {
            let ipn = model::ipn_from_broadcast(inst, p, &broadcast, i);
            let limit = threshold.for_user(inst, i);
            let floors = ipn.iter().zip(inst.gain_row(i)).map(|(d, g)| d / g);
            let active = p
                .row(i)
                .iter()
                .zip(floors.clone())
                .filter(|(x, _)| **x > limit)
                .map(|(x, f)| x + f)
                .fold(f64::NEG_INFINITY, f64::max);
            if active.is_finite() {
                active
            } else {
                floors.fold(f64::INFINITY, f64::min)
            }
        })
        .collect();
    let mut report = FdmaReport {
        levels: levels.clone(),
        single_occupancy: 0,
        satisfied: 0,
        violations: Vec::new(),
        shared_channels: Vec::new(),
        idle_channels: Vec::new(),
    };
    for (k, users) in occupants.iter().enumerate() {
        match users.as_slice() {
            [] => report.idle_channels.push(k),
            [i] => {
                report.single_occupancy += 1;
                let own = levels[*i] * inst.gain()[[*i, k]];
                let mut ok = true;
                for j in (0..inst.n_users()).filter(|j| j != i) {
                    let margin = own - levels[j] * inst.gain()[[j, k]];
                    if margin < -tol {
                        ok = false;
                        report.violations.push(FdmaViolation {
                            channel: k,
                            occupant: *i,
                            challenger: j,
                            margin,
                        });
                    }
                }
                if ok {
                    report.satisfied += 1;
                }
            }
            _ => report.shared_channels.push(k),
        }
    }
    Ok(report)
}

//! Numerical verification of the synthesis preconditions on a finite
//! time grid.
//!
//! For a fully actuated plant the conditions are: bounded trajectory and
//! disturbance (sup norms `gamma_xd, gamma_ud, gamma_w`), full rank of
//! `B(t)`, exponential envelopes `||B^-1(t)||_F <= beta1 exp(lambda* t)`
//! and `||B^-1(t) A(t)||_F <= beta2 exp(lambda* t)`, and a power-law
//! remainder bound `|r(e, 0, w(t))| <= beta3 |e|^alpha` on a probe ball
//! `|e| <= kappa`. For `m < n` the same conditions are checked with the
//! augmented matrix `B̃(t)` in place of `B(t)` and rank `m` required of
//! `B(t)` itself.
//!
//! Everything here is estimation over a grid, not a proof over all
//! `t >= 0`; fitted envelopes are inflated by a relative safety factor
//! and re-certified at every grid point, so the reported constants hold
//! with slack >= 0 wherever they were sampled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{EvalFailure, SystemModel};
use crate::synthesis::{self, SynthesisError};
use crate::{Matrix, Vector};

/// Relative inflation applied to every fitted envelope constant.
pub const EPS_SAFETY: f64 = 1e-9;
/// Default number of grid intervals (the grid has `intervals + 1` points,
/// so doubling refines the grid in place).
pub const DEFAULT_INTERVALS: usize = 200;
/// Default number of random unit directions for the remainder probe.
pub const DEFAULT_DIRECTIONS: usize = 32;
/// Log-spaced radii per probe, spanning `[1e-4 kappa, kappa]`.
const PROBE_RADII: usize = 16;
/// Below this magnitude a sampled remainder is treated as identically
/// zero (affine plants short-circuit to `beta3 = 0`).
pub const REMAINDER_ZERO_TOL: f64 = 1e-14;
/// Smallest admissible fitted growth exponent.
const ALPHA_MIN: f64 = 1e-6;
/// Seed for the remainder probe directions; fixed so repeated checks are
/// bit-identical.
const PROBE_SEED: u64 = 0x0ddba11;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("{0}")]
    Eval(#[from] EvalFailure),
    #[error("non-finite {what} at t = {t}")]
    NonFinite { what: String, t: f64 },
    #[error("exponential fit requires positive samples, got {value} at t = {t}")]
    NonPositiveSample { t: f64, value: f64 },
    #[error("{0}")]
    Synthesis(#[from] SynthesisError),
}

/// Uniform check grid over `[0, horizon]` with `intervals + 1` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub horizon: f64,
    pub intervals: usize,
}

impl Grid {
    pub fn new(horizon: f64, intervals: usize) -> Grid {
        assert!(horizon > 0.0 && intervals >= 1);
        Grid { horizon, intervals }
    }

    /// Grid matching the model's simulation horizon with the default
    /// resolution.
    pub fn default_for(model: &SystemModel) -> Grid {
        Grid::new(model.simulate_settings().horizon, DEFAULT_INTERVALS)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.intervals;
        let horizon = self.horizon;
        (0..=n).map(move |k| horizon * k as f64 / n as f64)
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Verdict for one checked condition.
#[derive(Debug, Clone, PartialEq)]
pub enum AssumptionStatus {
    VerifiedOnGrid,
    Violated { t: f64, detail: String },
}

impl AssumptionStatus {
    pub fn passed(&self) -> bool {
        matches!(self, AssumptionStatus::VerifiedOnGrid)
    }
}

/// Rank report for `B(t)` over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub required: usize,
    pub min_rank: usize,
    pub min_sigma: f64,
    pub first_violation: Option<f64>,
}

/// Fitted constants plus per-condition verdicts.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub grid: Grid,
    /// True for `m = n`; false means the tilded, augmented variants were
    /// checked.
    pub fully_actuated: bool,
    pub gamma_xd: f64,
    pub gamma_ud: f64,
    pub gamma_w: f64,
    pub rank: RankReport,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_star: f64,
    pub alpha: f64,
    pub beta3: f64,
    pub kappa: f64,
    /// Condition number of `B̃` over the grid (worst case); only for
    /// underactuated plants.
    pub btilde_condition: Option<f64>,
    /// Whether `sqrt(n) = ||B B^-1||_F <= ||B||_F ||B^-1||_F` held at
    /// every grid time with an invertible effective matrix.
    pub sqrt_n_ok: bool,
    /// Statuses of the five conditions, in order.
    pub statuses: [AssumptionStatus; 5],
}

impl AssumptionReport {
    /// `2 max(lambda*/alpha, lambda*)`: every eigenvalue of the target
    /// dynamics must lie below the negative of this.
    pub fn eigenvalue_threshold(&self) -> f64 {
        synthesis::eigenvalue_threshold(self.lambda_star, self.alpha)
    }

    pub fn all_pass(&self) -> bool {
        self.statuses.iter().all(|s| s.passed()) && self.sqrt_n_ok
    }

    /// Flat `key = value` rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let push = |out: &mut String, k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push(
            &mut out,
            "case",
            if self.fully_actuated {
                "m=n".into()
            } else {
                "m<n (augmented)".into()
            },
        );
        push(&mut out, "T_check", format!("{}", self.grid.horizon));
        push(&mut out, "N_check", format!("{}", self.grid.intervals));
        push(&mut out, "gamma_xd", format!("{:.6e}", self.gamma_xd));
        push(&mut out, "gamma_ud", format!("{:.6e}", self.gamma_ud));
        push(&mut out, "gamma_w", format!("{:.6e}", self.gamma_w));
        push(&mut out, "rank_required", format!("{}", self.rank.required));
        push(&mut out, "rank_min", format!("{}", self.rank.min_rank));
        push(
            &mut out,
            "sigma_min",
            format!("{:.6e}", self.rank.min_sigma),
        );
        push(&mut out, "beta1", format!("{:.9e}", self.beta1));
        push(&mut out, "beta2", format!("{:.9e}", self.beta2));
        push(&mut out, "lambda_star", format!("{:.9e}", self.lambda_star));
        push(&mut out, "alpha", format!("{:.6}", self.alpha));
        push(&mut out, "beta3", format!("{:.9e}", self.beta3));
        push(&mut out, "kappa", format!("{}", self.kappa));
        if let Some(cond) = self.btilde_condition {
            push(&mut out, "btilde_condition", format!("{cond:.6e}"));
        }
        push(
            &mut out,
            "sqrt_n_check",
            if self.sqrt_n_ok {
                "pass".into()
            } else {
                "fail".into()
            },
        );
        push(
            &mut out,
            "eigenvalue_threshold",
            format!("{:.9e}", self.eigenvalue_threshold()),
        );
        for (i, status) in self.statuses.iter().enumerate() {
            let label = format!("A{}", i + 1);
            match status {
                AssumptionStatus::VerifiedOnGrid => {
                    push(&mut out, &label, "verified-on-grid".into())
                }
                AssumptionStatus::Violated { t, detail } => {
                    push(&mut out, &label, format!("violated at t = {t}: {detail}"))
                }
            }
        }
        out
    }
}

/// Sup norms of the desired trajectory, desired input and disturbance
/// over the grid.
pub fn check_bounds(model: &SystemModel, grid: &Grid) -> Result<(f64, f64, f64), CheckError> {
    let mut gamma_xd = 0.0f64;
    let mut gamma_ud = 0.0f64;
    let mut gamma_w = 0.0f64;
    for t in grid.times() {
        let xd = model.desired_state(t)?;
        let ud = model.desired_input(t)?;
        let w = model.disturbance(t)?;
        for (what, v) in [("x_d", &xd), ("u_d", &ud), ("w", &w)] {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(CheckError::NonFinite {
                    what: what.into(),
                    t,
                });
            }
        }
        gamma_xd = gamma_xd.max(xd.norm());
        gamma_ud = gamma_ud.max(ud.norm());
        gamma_w = gamma_w.max(w.norm());
    }
    Ok((gamma_xd, gamma_ud, gamma_w))
}

/// Numerical rank of `B(t)` at every grid time.
pub fn check_rank(model: &SystemModel, grid: &Grid) -> Result<RankReport, CheckError> {
    let required = if model.is_fully_actuated() {
        model.n()
    } else {
        model.m()
    };
    let mut min_rank = usize::MAX;
    let mut min_sigma = f64::INFINITY;
    let mut first_violation = None;
    for t in grid.times() {
        let b = model.frame(t)?.b;
        let (rank, sigma_min) = synthesis::numerical_rank(&b);
        min_rank = min_rank.min(rank);
        min_sigma = min_sigma.min(sigma_min);
        if rank < required && first_violation.is_none() {
            first_violation = Some(t);
        }
    }
    Ok(RankReport {
        required,
        min_rank,
        min_sigma,
        first_violation,
    })
}

/// Least-squares slope of `ln y` against `t`.
fn log_slope(series: &[(f64, f64)]) -> f64 {
    let n = series.len() as f64;
    let t_mean = series.iter().map(|(t, _)| t).sum::<f64>() / n;
    let z_mean = series.iter().map(|(_, y)| y.ln()).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in series {
        num += (t - t_mean) * (y.ln() - z_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Envelope prefactor such that `y_k <= beta exp(lambda t_k)` holds at
/// every sample, inflated by the safety factor.
fn envelope(series: &[(f64, f64)], lambda: f64) -> f64 {
    let raw = series
        .iter()
        .map(|(t, y)| y * (-lambda * t).exp())
        .fold(0.0f64, f64::max);
    (1.0 + EPS_SAFETY) * raw
}

/// Fits `(beta, lambda)` with `y_k <= beta exp(lambda t_k)` at every
/// sample: `lambda = max(0, log-slope)`, `beta` the inflated envelope
/// maximum. All samples must be positive.
pub fn fit_exponential_bound(series: &[(f64, f64)]) -> Result<(f64, f64), CheckError> {
    for &(t, y) in series {
        if !(y > 0.0) {
            return Err(CheckError::NonPositiveSample { t, value: y });
        }
    }
    let lambda = log_slope(series).max(0.0);
    Ok((envelope(series, lambda), lambda))
}

/// Slope of a series that may contain exact zeros (dropped from the fit;
/// they satisfy any envelope).
fn log_slope_filtered(series: &[(f64, f64)]) -> f64 {
    let positive: Vec<(f64, f64)> = series.iter().copied().filter(|&(_, y)| y > 0.0).collect();
    if positive.len() < 2 {
        return 0.0;
    }
    log_slope(&positive)
}

/// Fitted remainder growth law `|r(e, 0, w(t))| <= beta3 |e|^alpha` for
/// `|e| <= kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderFit {
    pub alpha: f64,
    pub beta3: f64,
    pub kappa: f64,
}

/// Samples `|r(rho d, 0, w(t), t)|` over log-spaced radii, random unit
/// directions and grid times; fits the growth exponent by log-log least
/// squares, clamped to `(0, 2]`, and the prefactor as an inflated
/// envelope maximum. A remainder below [`REMAINDER_ZERO_TOL`] everywhere
/// short-circuits to `(2, 0, kappa)`.
pub fn estimate_remainder_growth(
    model: &SystemModel,
    grid: &Grid,
    kappa_probe: f64,
    directions: usize,
) -> Result<RemainderFit, CheckError> {
    assert!(kappa_probe > 0.0);
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let dirs: Vec<Vector> = (0..directions)
        .map(|_| loop {
            let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let norm = v.norm();
            if norm > 1e-6 {
                break v / norm;
            }
        })
        .collect();
    let radii: Vec<f64> = (0..PROBE_RADII)
        .map(|i| kappa_probe * 10f64.powf(-4.0 * (1.0 - i as f64 / (PROBE_RADII - 1) as f64)))
        .collect();

    let v_zero = Vector::zeros(model.m());
    let mut max_by_radius = vec![0.0f64; radii.len()];
    for t in grid.times() {
        let frame = model.frame(t)?;
        for dir in &dirs {
            for (i, &rho) in radii.iter().enumerate() {
                let r = frame.remainder(&(dir * rho), &v_zero)?;
                max_by_radius[i] = max_by_radius[i].max(r.norm());
            }
        }
    }

    let global_max = max_by_radius.iter().copied().fold(0.0f64, f64::max);
    if global_max < REMAINDER_ZERO_TOL {
        return Ok(RemainderFit {
            alpha: 2.0,
            beta3: 0.0,
            kappa: kappa_probe,
        });
    }

    let points: Vec<(f64, f64)> = radii
        .iter()
        .zip(max_by_radius.iter())
        .filter(|&(_, &m)| m > 0.0)
        .map(|(&rho, &m)| (rho.ln(), m.ln()))
        .collect();
    // reuse the linear regression on (ln rho, ln max)
    let slope = {
        let series: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x, y.exp())).collect();
        log_slope(&series)
    };
    let alpha = slope.clamp(ALPHA_MIN, 2.0);
    let beta3 = (1.0 + EPS_SAFETY)
        * radii
            .iter()
            .zip(max_by_radius.iter())
            .map(|(&rho, &m)| m / rho.powf(alpha))
            .fold(0.0f64, f64::max);
    Ok(RemainderFit {
        alpha,
        beta3,
        kappa: kappa_probe,
    })
}

/// Effective input matrix for the norm conditions: `B` when `m = n`,
/// the augmented `B̃` otherwise.
fn effective_b(
    model: &SystemModel,
    t: f64,
    prev: &mut Option<Matrix>,
) -> Result<(Matrix, Option<f64>), SynthesisError> {
    let b = model.frame(t)?.b;
    if model.is_fully_actuated() {
        return Ok((b, None));
    }
    let settings = model.synthesis_settings();
    let aug = if settings.columns.is_empty() {
        synthesis::augment(t, &b, prev.as_ref())?
    } else {
        let cols: Vec<Vector> = settings
            .columns
            .values()
            .map(|c| Vector::from_column_slice(c))
            .collect();
        synthesis::augment_with_columns(t, &b, &Matrix::from_columns(&cols))?
    };
    *prev = Some(aug.columns.clone());
    Ok((aug.b_tilde, Some(aug.condition)))
}

/// Runs the full battery and assembles the report.
pub fn check_assumptions(
    model: &SystemModel,
    grid: &Grid,
    kappa_probe: f64,
) -> Result<AssumptionReport, CheckError> {
    let (gamma_xd, gamma_ud, gamma_w) = check_bounds(model, grid)?;
    let a1 = AssumptionStatus::VerifiedOnGrid; // non-finite values already errored

    let rank = check_rank(model, grid)?;
    let a2 = match rank.first_violation {
        None => AssumptionStatus::VerifiedOnGrid,
        Some(t) => AssumptionStatus::Violated {
            t,
            detail: format!("rank {} < required {}", rank.min_rank, rank.required),
        },
    };

    // norm series of B^-1 (or B̃^-1) and B^-1 A over the grid
    let mut binv_series = Vec::with_capacity(grid.len());
    let mut binv_a_series = Vec::with_capacity(grid.len());
    let mut sqrt_n_ok = true;
    let mut worst_condition: Option<f64> = None;
    let mut norm_failure: Option<(f64, String)> = None;
    let mut prev_cols: Option<Matrix> = None;
    if rank.first_violation.is_none() {
        let n = model.n() as f64;
        for t in grid.times() {
            let (b_eff, condition) = match effective_b(model, t, &mut prev_cols) {
                Ok(pair) => pair,
                Err(err) => {
                    norm_failure = Some((t, err.to_string()));
                    break;
                }
            };
            if let Some(c) = condition {
                worst_condition = Some(worst_condition.map_or(c, |w: f64| w.max(c)));
            }
            let Some(binv) = b_eff.clone().try_inverse() else {
                norm_failure = Some((t, "effective input matrix not invertible".into()));
                break;
            };
            let a = model.frame(t)?.a;
            binv_series.push((t, binv.norm()));
            binv_a_series.push((t, (&binv * &a).norm()));
            // sqrt(n) = ||B B^-1||_F <= ||B||_F ||B^-1||_F
            if b_eff.norm() * binv.norm() < n.sqrt() * (1.0 - 1e-9) {
                sqrt_n_ok = false;
            }
        }
    } else if let Some(t) = rank.first_violation {
        norm_failure = Some((t, "rank deficiency prevents the inverse-norm fits".into()));
    }

    let (beta1, beta2, lambda_star, a3, a4) = match norm_failure {
        Some((t, detail)) => (
            f64::INFINITY,
            f64::INFINITY,
            0.0,
            AssumptionStatus::Violated {
                t,
                detail: detail.clone(),
            },
            AssumptionStatus::Violated { t, detail },
        ),
        None => {
            // one lambda* serves both fits: the larger of the two slopes
            let slope_binv = log_slope_filtered(&binv_series);
            let slope_binv_a = log_slope_filtered(&binv_a_series);
            let lambda_star = slope_binv.max(slope_binv_a).max(0.0);
            let beta1 = envelope(&binv_series, lambda_star);
            let beta2_max = binv_a_series.iter().map(|&(_, y)| y).fold(0.0f64, f64::max);
            let beta2 = if beta2_max == 0.0 {
                0.0
            } else {
                envelope(&binv_a_series, lambda_star)
            };
            (
                beta1,
                beta2,
                lambda_star,
                AssumptionStatus::VerifiedOnGrid,
                AssumptionStatus::VerifiedOnGrid,
            )
        }
    };

    let (fit, a5) = match estimate_remainder_growth(model, grid, kappa_probe, DEFAULT_DIRECTIONS) {
        Ok(fit) => (fit, AssumptionStatus::VerifiedOnGrid),
        Err(CheckError::Eval(e)) => (
            RemainderFit {
                alpha: 2.0,
                beta3: f64::INFINITY,
                kappa: kappa_probe,
            },
            AssumptionStatus::Violated {
                t: 0.0,
                detail: e.to_string(),
            },
        ),
        Err(e) => return Err(e),
    };

    Ok(AssumptionReport {
        grid: *grid,
        fully_actuated: model.is_fully_actuated(),
        gamma_xd,
        gamma_ud,
        gamma_w,
        rank,
        beta1,
        beta2,
        lambda_star,
        alpha: fit.alpha,
        beta3: fit.beta3,
        kappa: fit.kappa,
        btilde_condition: worst_condition,
        sqrt_n_ok,
        statuses: [a1, a2, a3, a4, a5],
    })
}

/// Re-evaluates every fitted inequality at every grid point; returns the
/// minimum slack (nonnegative when the report certifies).
pub fn certify(model: &SystemModel, report: &AssumptionReport) -> Result<f64, CheckError> {
    let mut min_slack = f64::INFINITY;
    let mut prev_cols: Option<Matrix> = None;
    for t in report.grid.times() {
        let xd = model.desired_state(t)?;
        let ud = model.desired_input(t)?;
        let w = model.disturbance(t)?;
        min_slack = min_slack
            .min(report.gamma_xd - xd.norm())
            .min(report.gamma_ud - ud.norm())
            .min(report.gamma_w - w.norm());
        let (b_eff, _) = effective_b(model, t, &mut prev_cols)?;
        if let Some(binv) = b_eff.clone().try_inverse() {
            let growth = (report.lambda_star * t).exp();
            min_slack = min_slack.min(report.beta1 * growth - binv.norm());
            let a = model.frame(t)?.a;
            min_slack = min_slack.min(report.beta2 * growth - (&binv * &a).norm());
        }
    }
    Ok(min_slack)
}

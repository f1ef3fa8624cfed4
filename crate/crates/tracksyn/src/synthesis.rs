//! Feedback synthesis.
//!
//! The control correction `v*(e, w, t)` is the unique fixed point of the
//! map `K_e(v) = -B^-1(t) [A(t) e + r(e, v, w(t)) - Δ e]`; plugging the
//! fixed point into the error dynamics reduces the closed loop to
//! `ė = Δ e` for the chosen diagonal Hurwitz matrix `Δ`. The solver
//! iterates `K_e` from the linear-part initial iterate
//! `v0 = -B^-1 (A - Δ) e`, which is already exact whenever the remainder
//! has no `v` dependence (linear plants, plants affine in `u`).
//!
//! Underactuated plants (`m < n`) are handled by appending columns
//! `l_{m+1}..l_n` to `B(t)` so that `B̃(t) = (B | l_{m+1} | .. | l_n)` is
//! invertible, synthesizing the augmented law `ṽ*`, and applying only its
//! first `m` components to the plant. The remaining components are
//! virtual; along the ideal error path `ẽ(t) = exp(Δ̃ t) e(0)` they are
//! available from [`FeedbackLaw::virtual_path`].

use rand::Rng;

use crate::assumptions::AssumptionReport;
use crate::model::{EvalFailure, Frame, SystemModel};
use crate::sysfile::EigenSpec;
use crate::{Matrix, Vector};

/// Fixed-point tolerance on successive iterates.
pub const TOL_FP_DEFAULT: f64 = 1e-12;
/// Iteration cap; contraction inside the admissible ball converges
/// geometrically, so hitting this means the ball was exited.
pub const MAX_ITER_DEFAULT: usize = 100;
/// Consecutive non-contracting steps before divergence is declared.
const DIVERGENCE_STRIKES: usize = 3;
/// Bisection steps used when probing the admissible initial-error radius.
pub const PROBE_BISECTION_STEPS: usize = 8;

/// Residual tolerance `|A e + B v* + r - Δ e| <= 1e-10 (1 + |e|)`.
pub fn tol_residual(e_norm: f64) -> f64 {
    1e-10 * (1.0 + e_norm)
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SynthesisError {
    #[error("margin must be positive, got {0}")]
    NonPositiveMargin(f64),
    #[error("expected {expected} eigenvalues, got {got}")]
    EigenvalueCount { expected: usize, got: usize },
    #[error("eigenvalue {0} is not in the open left half-plane")]
    NotHurwitz(f64),
    #[error(
        "eigenvalue inequality violated: 2 max(lambda*/alpha, lambda*) + max lambda_i \
         = {threshold} + {max_eig} = {sum} must be <= -margin = {neg_margin}"
    )]
    EigenvalueInequality {
        threshold: f64,
        max_eig: f64,
        sum: f64,
        neg_margin: f64,
    },
    #[error("B(t) is rank deficient at t = {t}: rank {rank} < required {required}")]
    RankDeficient {
        t: f64,
        rank: usize,
        required: usize,
    },
    #[error("matrix is numerically singular at t = {t}")]
    SingularB { t: f64 },
    #[error("system is fully actuated (m = n); augmentation does not apply")]
    NotUnderactuated,
    #[error("augmentation columns must be {expected} column(s) of length {n}")]
    BadColumnOverride { expected: usize, n: usize },
    #[error(
        "contraction failure at t = {t}, |e| = {e_norm:.3e} after {iterations} iterations; \
         the error lies outside the contraction ball, reduce the initial error"
    )]
    ContractionFailure {
        t: f64,
        e_norm: f64,
        iterations: usize,
    },
    #[error("contraction estimate {gamma} >= 1; the bound does not apply")]
    GammaTooLarge { gamma: f64 },
    #[error("{0}")]
    Eval(#[from] EvalFailure),
}

/// Diagonal real Hurwitz target dynamics `Δ` plus the margin it was
/// validated against.
#[derive(Debug, Clone, PartialEq)]
pub struct HurwitzSpec {
    eigenvalues: Vec<f64>,
    margin: f64,
    source: EigenSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSource {
    Auto,
    User,
}

/// `2 max(lambda*/alpha, lambda*)`: the amount by which every eigenvalue
/// of `Δ` must clear zero.
pub fn eigenvalue_threshold(lambda_star: f64, alpha: f64) -> f64 {
    2.0 * (lambda_star / alpha).max(lambda_star)
}

impl HurwitzSpec {
    /// Auto selection: places every eigenvalue at
    /// `-(2 max(lambda*/alpha, lambda*) + margin)`.
    pub fn auto(
        lambda_star: f64,
        alpha: f64,
        n: usize,
        margin: f64,
    ) -> Result<HurwitzSpec, SynthesisError> {
        if !(margin > 0.0) {
            return Err(SynthesisError::NonPositiveMargin(margin));
        }
        let lam = -(eigenvalue_threshold(lambda_star, alpha) + margin);
        Ok(HurwitzSpec {
            eigenvalues: vec![lam; n],
            margin,
            source: EigenSource::Auto,
        })
    }

    /// Validates user-supplied eigenvalues against
    /// `2 max(lambda*/alpha, lambda*) + max lambda_i <= -margin < 0`.
    pub fn from_user(
        eigenvalues: &[f64],
        lambda_star: f64,
        alpha: f64,
        n: usize,
        margin: f64,
    ) -> Result<HurwitzSpec, SynthesisError> {
        if !(margin > 0.0) {
            return Err(SynthesisError::NonPositiveMargin(margin));
        }
        if eigenvalues.len() != n {
            return Err(SynthesisError::EigenvalueCount {
                expected: n,
                got: eigenvalues.len(),
            });
        }
        for &lam in eigenvalues {
            if !(lam < 0.0) {
                return Err(SynthesisError::NotHurwitz(lam));
            }
        }
        let threshold = eigenvalue_threshold(lambda_star, alpha);
        let max_eig = eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if threshold + max_eig > -margin {
            return Err(SynthesisError::EigenvalueInequality {
                threshold,
                max_eig,
                sum: threshold + max_eig,
                neg_margin: -margin,
            });
        }
        Ok(HurwitzSpec {
            eigenvalues: eigenvalues.to_vec(),
            margin,
            source: EigenSource::User,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn source(&self) -> EigenSource {
        self.source
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The diagonal matrix `Δ`.
    pub fn matrix(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_column_slice(&self.eigenvalues))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// `exp(Δ t)`: diagonal with entries `exp(lambda_i t)`.
    pub fn matrix_exp(&self, t: f64) -> Matrix {
        Matrix::from_diagonal(&Vector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|l| (l * t).exp()),
        ))
    }

    /// `exp(Δ t) e0`, componentwise.
    pub fn propagate(&self, e0: &Vector, t: f64) -> Vector {
        Vector::from_iterator(
            self.dim(),
            self.eigenvalues
                .iter()
                .zip(e0.iter())
                .map(|(l, e)| (l * t).exp() * e),
        )
    }

    /// `Δ e`, componentwise.
    pub fn apply(&self, e: &Vector) -> Vector {
        Vector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().zip(e.iter()).map(|(l, e)| l * e),
        )
    }
}

/// Auto eigenvalue placement from the fitted constants.
pub fn select_delta(
    lambda_star: f64,
    alpha: f64,
    n: usize,
    margin: f64,
) -> Result<HurwitzSpec, SynthesisError> {
    HurwitzSpec::auto(lambda_star, alpha, n, margin)
}

fn svd_rank(m: &Matrix) -> (usize, f64, f64) {
    let svd = m.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    let tol = sigma_max * m.nrows().max(m.ncols()) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    (rank, sigma_min, sigma_max)
}

/// Numerical rank via singular values with threshold
/// `sigma_max * max(rows, cols) * eps`.
pub fn numerical_rank(m: &Matrix) -> (usize, f64) {
    let (rank, sigma_min, _) = svd_rank(m);
    (rank, sigma_min)
}

/// Result of augmenting a tall `B(t)` to an invertible square matrix.
#[derive(Debug, Clone)]
pub struct Augmentation {
    /// Orthonormal columns spanning the complement of `col B`, or the
    /// user-supplied override.
    pub columns: Matrix,
    /// `B̃ = (B | l_{m+1} | .. | l_n)`.
    pub b_tilde: Matrix,
    /// Condition number of `B̃`.
    pub condition: f64,
}

/// Completes `B(t)` (n x m, rank m, m < n) with an orthonormal basis of
/// the orthogonal complement of its column space. When `prev` is given,
/// each new column is sign-aligned with its predecessor to keep the
/// augmentation continuous in `t`.
pub fn augment(t: f64, b: &Matrix, prev: Option<&Matrix>) -> Result<Augmentation, SynthesisError> {
    let (n, m) = (b.nrows(), b.ncols());
    if m >= n {
        return Err(SynthesisError::NotUnderactuated);
    }
    let (rank, _, _) = svd_rank(b);
    if rank < m {
        return Err(SynthesisError::RankDeficient {
            t,
            rank,
            required: m,
        });
    }

    // orthonormal basis of col B, then completion from the standard basis
    let mut basis: Vec<Vector> = Vec::with_capacity(n);
    for j in 0..m {
        let mut v: Vector = b.column(j).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        let norm = v.norm();
        if norm <= 1e-12 {
            return Err(SynthesisError::RankDeficient {
                t,
                rank: j,
                required: m,
            });
        }
        basis.push(v / norm);
    }
    let mut complement: Vec<Vector> = Vec::with_capacity(n - m);
    for k in 0..n {
        if basis.len() + complement.len() == n {
            break;
        }
        let mut v = Vector::zeros(n);
        v[k] = 1.0;
        for _ in 0..2 {
            for q in basis.iter().chain(complement.iter()) {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            complement.push(v / norm);
        }
    }
    debug_assert_eq!(complement.len(), n - m);

    if let Some(prev) = prev {
        for (i, col) in complement.iter_mut().enumerate() {
            if i < prev.ncols() && col.dot(&prev.column(i).into_owned()) < 0.0 {
                *col = -&*col;
            }
        }
    }

    let columns = Matrix::from_columns(&complement);
    finish_augmentation(t, b, columns)
}

fn finish_augmentation(
    t: f64,
    b: &Matrix,
    columns: Matrix,
) -> Result<Augmentation, SynthesisError> {
    let n = b.nrows();
    let mut b_tilde = Matrix::zeros(n, n);
    b_tilde.view_mut((0, 0), (n, b.ncols())).copy_from(b);
    b_tilde
        .view_mut((0, b.ncols()), (n, n - b.ncols()))
        .copy_from(&columns);
    let (rank, sigma_min, sigma_max) = svd_rank(&b_tilde);
    if rank < n {
        return Err(SynthesisError::SingularB { t });
    }
    Ok(Augmentation {
        columns,
        b_tilde,
        condition: sigma_max / sigma_min,
    })
}

/// Builds the augmentation using user-supplied columns instead of the
/// orthonormal complement.
pub fn augment_with_columns(
    t: f64,
    b: &Matrix,
    columns: &Matrix,
) -> Result<Augmentation, SynthesisError> {
    let (n, m) = (b.nrows(), b.ncols());
    if m >= n {
        return Err(SynthesisError::NotUnderactuated);
    }
    if columns.nrows() != n || columns.ncols() != n - m {
        return Err(SynthesisError::BadColumnOverride { expected: n - m, n });
    }
    let (rank, _, _) = svd_rank(b);
    if rank < m {
        return Err(SynthesisError::RankDeficient {
            t,
            rank,
            required: m,
        });
    }
    finish_augmentation(t, b, columns.clone())
}

/// Solver knobs for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol_fp: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol_fp: TOL_FP_DEFAULT,
            max_iter: MAX_ITER_DEFAULT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawMode {
    FullyActuated,
    Augmented,
}

/// A synthesized feedback law. Immutable after construction; solving is a
/// pure function of `(e, t)` and safe to call concurrently.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    mode: LawMode,
    delta: HurwitzSpec,
    settings: SolverSettings,
    /// Initial tracking error, fixing the reference path `exp(Δ t) e(0)`.
    e0: Vector,
    /// User-supplied augmentation columns, if any.
    override_columns: Option<Matrix>,
    /// Augmentation columns at t = 0 (alignment anchor).
    initial_columns: Option<Matrix>,
    m: usize,
}

impl FeedbackLaw {
    /// Synthesizes the law for a model from its `[synthesis]` settings and
    /// a fitted assumption report.
    pub fn synthesize(
        model: &SystemModel,
        report: &AssumptionReport,
    ) -> Result<FeedbackLaw, SynthesisError> {
        let settings = model.synthesis_settings();
        let delta = match &settings.eigenvalues {
            EigenSpec::Auto => {
                HurwitzSpec::auto(report.lambda_star, report.alpha, model.n(), settings.margin)?
            }
            EigenSpec::List(list) => HurwitzSpec::from_user(
                list,
                report.lambda_star,
                report.alpha,
                model.n(),
                settings.margin,
            )?,
        };
        let e0 = model.initial_state()? - model.desired_state(0.0)?;
        Self::with_spec(model, delta, e0)
    }

    /// Builds the law from an explicit Hurwitz spec and initial error.
    pub fn with_spec(
        model: &SystemModel,
        delta: HurwitzSpec,
        e0: Vector,
    ) -> Result<FeedbackLaw, SynthesisError> {
        let mode = if model.is_fully_actuated() {
            LawMode::FullyActuated
        } else {
            LawMode::Augmented
        };
        let override_columns = collect_override(model)?;
        let initial_columns = match mode {
            LawMode::FullyActuated => None,
            LawMode::Augmented => {
                let b0 = model.frame(0.0)?.b;
                let aug = match &override_columns {
                    Some(cols) => augment_with_columns(0.0, &b0, cols)?,
                    None => augment(0.0, &b0, None)?,
                };
                Some(aug.columns)
            }
        };
        Ok(FeedbackLaw {
            mode,
            delta,
            settings: SolverSettings::default(),
            e0,
            override_columns,
            initial_columns,
            m: model.m(),
        })
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> FeedbackLaw {
        self.settings = settings;
        self
    }

    /// Replaces the initial error anchoring the reference path.
    pub fn with_initial_error(mut self, e0: Vector) -> FeedbackLaw {
        self.e0 = e0;
        self
    }

    pub fn mode(&self) -> LawMode {
        self.mode
    }

    pub fn is_augmented(&self) -> bool {
        self.mode == LawMode::Augmented
    }

    pub fn delta(&self) -> &HurwitzSpec {
        &self.delta
    }

    pub fn settings(&self) -> SolverSettings {
        self.settings
    }

    pub fn initial_error(&self) -> &Vector {
        &self.e0
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    /// The reference error path `ẽ(t) = exp(Δ t) e(0)`.
    pub fn reference_error(&self, t: f64) -> Vector {
        self.delta.propagate(&self.e0, t)
    }

    /// Prepares the per-time solve context: trajectory frame, effective
    /// input matrix (`B` or `B̃`) and its factorization.
    pub fn context<'a>(
        &'a self,
        model: &'a SystemModel,
        t: f64,
        prev_columns: Option<&Matrix>,
    ) -> Result<LawContext<'a>, SynthesisError> {
        let frame = model.frame(t)?;
        let (b_eff, columns) = match self.mode {
            LawMode::FullyActuated => {
                let (rank, _, _) = svd_rank(&frame.b);
                if rank < frame.b.nrows() {
                    return Err(SynthesisError::SingularB { t });
                }
                (frame.b.clone(), None)
            }
            LawMode::Augmented => {
                let aug = match &self.override_columns {
                    Some(cols) => augment_with_columns(t, &frame.b, cols)?,
                    None => {
                        let anchor = prev_columns.or(self.initial_columns.as_ref());
                        augment(t, &frame.b, anchor)?
                    }
                };
                (aug.b_tilde, Some(aug.columns))
            }
        };
        let lu = b_eff.clone().lu();
        Ok(LawContext {
            law: self,
            frame,
            b_eff,
            lu,
            columns,
        })
    }

    /// Virtual control components `ṽ*_{m+1..n}` evaluated along the
    /// reference path at time `t`. Empty in fully actuated mode.
    pub fn virtual_path(&self, model: &SystemModel, t: f64) -> Result<Vector, SynthesisError> {
        if self.mode == LawMode::FullyActuated {
            return Ok(Vector::zeros(0));
        }
        let ctx = self.context(model, t, None)?;
        let e_ref = self.reference_error(t);
        let (v, _) = ctx.solve(&e_ref)?;
        Ok(v.rows(self.m, v.len() - self.m).into_owned())
    }
}

fn collect_override(model: &SystemModel) -> Result<Option<Matrix>, SynthesisError> {
    let settings = model.synthesis_settings();
    if settings.columns.is_empty() {
        return Ok(None);
    }
    let (n, m) = (model.n(), model.m());
    let expected: Vec<usize> = (m + 1..=n).collect();
    let got: Vec<usize> = settings.columns.keys().copied().collect();
    if got != expected {
        return Err(SynthesisError::BadColumnOverride { expected: n - m, n });
    }
    let cols: Vec<Vector> = settings
        .columns
        .values()
        .map(|c| Vector::from_column_slice(c))
        .collect();
    Ok(Some(Matrix::from_columns(&cols)))
}

/// Per-iteration convergence record of a fixed-point solve.
#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    /// Number of corrective iterations performed.
    pub iterations: usize,
    /// Observed step ratios `|v_{k+1} - v_k| / |v_k - v_{k-1}|`.
    pub ratios: Vec<f64>,
    /// Final equation residual `|A e + B v* + r - Δ e|`.
    pub residual: f64,
}

/// Solve context at a fixed time: everything `K_e` needs.
pub struct LawContext<'a> {
    law: &'a FeedbackLaw,
    pub frame: Frame<'a>,
    pub b_eff: Matrix,
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    columns: Option<Matrix>,
}

impl LawContext<'_> {
    pub fn t(&self) -> f64 {
        self.frame.t
    }

    /// Augmentation columns in effect, if any.
    pub fn columns(&self) -> Option<&Matrix> {
        self.columns.as_ref()
    }

    fn solve_linear(&self, rhs: &Vector) -> Result<Vector, SynthesisError> {
        self.lu
            .solve(rhs)
            .ok_or(SynthesisError::SingularB { t: self.frame.t })
    }

    /// Remainder of the effective system. Augmentation columns enter the
    /// field linearly, so the augmented remainder equals the original one
    /// evaluated at the first `m` components of `v`.
    pub fn remainder(&self, e: &Vector, v: &Vector) -> Result<Vector, EvalFailure> {
        let v_plant = v.rows(0, self.law.m).into_owned();
        self.frame.remainder(e, &v_plant)
    }

    /// Runs the fixed-point iteration from the default initial iterate
    /// `v0 = -B^-1 (A - Δ) e`.
    pub fn solve(&self, e: &Vector) -> Result<(Vector, SolveDiagnostics), SynthesisError> {
        self.solve_from(e, None)
    }

    /// Runs the iteration from an explicit starting iterate.
    pub fn solve_from(
        &self,
        e: &Vector,
        start: Option<Vector>,
    ) -> Result<(Vector, SolveDiagnostics), SynthesisError> {
        let nv = self.b_eff.ncols();
        let t = self.frame.t;
        // zero error demands zero correction, exactly
        if e.iter().all(|&x| x == 0.0) && start.is_none() {
            let residual = self.remainder(e, &Vector::zeros(nv))?.norm();
            return Ok((
                Vector::zeros(nv),
                SolveDiagnostics {
                    iterations: 0,
                    ratios: Vec::new(),
                    residual,
                },
            ));
        }

        let delta_e = self.law.delta.apply(e);
        let ae = &self.frame.a * e;
        let mut v = match start {
            Some(v0) => v0,
            None => self.solve_linear(&(&delta_e - &ae))?,
        };
        let mut r_v = self.remainder(e, &v)?;
        let tol_res = tol_residual(e.norm());
        let mut ratios = Vec::new();
        let mut prev_step: Option<f64> = None;
        let mut strikes = 0usize;

        for iteration in 1..=self.law.settings.max_iter {
            let v_next = self.solve_linear(&(&delta_e - &ae - &r_v))?;
            let step = (&v_next - &v).norm();
            if let Some(prev) = prev_step {
                let rho = step / prev;
                ratios.push(rho);
                if rho >= 1.0 {
                    strikes += 1;
                    if strikes >= DIVERGENCE_STRIKES {
                        return Err(SynthesisError::ContractionFailure {
                            t,
                            e_norm: e.norm(),
                            iterations: iteration,
                        });
                    }
                } else {
                    strikes = 0;
                }
            }
            let r_next = self.remainder(e, &v_next)?;
            let residual = (&ae + &self.b_eff * &v_next + &r_next - &delta_e).norm();
            if step <= self.law.settings.tol_fp && residual <= tol_res {
                return Ok((
                    v_next,
                    SolveDiagnostics {
                        iterations: iteration,
                        ratios,
                        residual,
                    },
                ));
            }
            v = v_next;
            r_v = r_next;
            prev_step = Some(step);
        }
        Err(SynthesisError::ContractionFailure {
            t,
            e_norm: e.norm(),
            iterations: self.law.settings.max_iter,
        })
    }

    /// The control correction applied to the plant: the first `m`
    /// components of the solved fixed point.
    pub fn control(&self, e: &Vector) -> Result<(Vector, SolveDiagnostics), SynthesisError> {
        let (v, diag) = self.solve(e)?;
        Ok((v.rows(0, self.law.m).into_owned(), diag))
    }

    /// Observed contraction factor `||B^-1 J_v r||_F`, by central finite
    /// differences of the remainder in `v` at the given iterate.
    pub fn gamma_obs(&self, e: &Vector, v: &Vector) -> Result<f64, SynthesisError> {
        let nv = self.b_eff.ncols();
        let h = 1e-6 * (1.0 + v.norm());
        let mut jac = Matrix::zeros(e.len(), nv);
        for j in 0..nv {
            let mut vp = v.clone();
            vp[j] += h;
            let mut vm = v.clone();
            vm[j] -= h;
            let col = (self.remainder(e, &vp)? - self.remainder(e, &vm)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let scaled = self
            .lu
            .solve(&jac)
            .ok_or(SynthesisError::SingularB { t: self.frame.t })?;
        Ok(scaled.norm())
    }
}

/// Solves the fixed point at `(e, t)`; convenience wrapper constructing a
/// fresh context.
pub fn solve_feedback(
    model: &SystemModel,
    law: &FeedbackLaw,
    e: &Vector,
    t: f64,
) -> Result<(Vector, SolveDiagnostics), SynthesisError> {
    law.context(model, t, None)?.solve(e)
}

/// Contraction diagnostics at a probe point.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionParams {
    /// Observed contraction factor `||B^-1 J_v r||_F` at the fixed point.
    pub gamma: f64,
    /// Slack implied by `gamma = ||B^-1|| / (||B^-1|| + eta)`; infinite
    /// when the remainder does not depend on `v`.
    pub eta: f64,
    pub tol_fp: f64,
    pub max_iter: usize,
    /// Radius of the ball the iterates stayed in.
    pub a: f64,
    /// Error radius actually probed; `a_prime <= a`.
    pub a_prime: f64,
    /// Admissible initial-error radius observed at this probe.
    pub delta: f64,
    /// False when `gamma >= 1` was observed.
    pub contraction_ok: bool,
}

/// Estimates the contraction factor at `(e, t)` after solving for the
/// fixed point there.
pub fn estimate_contraction(
    model: &SystemModel,
    law: &FeedbackLaw,
    e: &Vector,
    t: f64,
) -> Result<ContractionParams, SynthesisError> {
    let ctx = law.context(model, t, None)?;
    let (v, _) = ctx.solve(e)?;
    let gamma = ctx.gamma_obs(e, &v)?;
    let binv_norm = frobenius_inverse_norm(&ctx.b_eff).ok_or(SynthesisError::SingularB { t })?;
    let eta = if gamma > 0.0 {
        binv_norm * (1.0 - gamma) / gamma
    } else {
        f64::INFINITY
    };
    let a = e.norm().max(v.norm());
    Ok(ContractionParams {
        gamma,
        eta,
        tol_fp: law.settings.tol_fp,
        max_iter: law.settings.max_iter,
        a,
        a_prime: e.norm(),
        delta: e.norm(),
        contraction_ok: gamma < 1.0,
    })
}

pub(crate) fn frobenius_inverse_norm(m: &Matrix) -> Option<f64> {
    m.clone().try_inverse().map(|inv| inv.norm())
}

/// A priori bound on `|v*|` from the fitted constants and the actual
/// norms at `t`:
/// `(||B^-1 A|| |e| + ||B^-1|| beta3 |e|^alpha + ||B^-1|| ||Δ|| |e|) / (1 - Γ)`.
pub fn bound_vstar(
    model: &SystemModel,
    law: &FeedbackLaw,
    report: &AssumptionReport,
    e: &Vector,
    t: f64,
    gamma: f64,
) -> Result<f64, SynthesisError> {
    if gamma >= 1.0 {
        return Err(SynthesisError::GammaTooLarge { gamma });
    }
    let ctx = law.context(model, t, None)?;
    let binv = ctx
        .b_eff
        .clone()
        .try_inverse()
        .ok_or(SynthesisError::SingularB { t })?;
    let binv_a_norm = (&binv * &ctx.frame.a).norm();
    let binv_norm = binv.norm();
    let e_norm = e.norm();
    let bound = (binv_a_norm * e_norm
        + binv_norm * report.beta3 * e_norm.powf(report.alpha)
        + binv_norm * law.delta.frobenius_norm() * e_norm)
        / (1.0 - gamma);
    Ok(bound)
}

/// Closed-form linear gain recovered by probing, when the fixed point is
/// reproduced in one corrective iteration (plants affine in `(x, u)`).
#[derive(Debug, Clone)]
pub struct RecoveredGain {
    /// `K = B^-1 (A - Δ)` at `t = 0`; the law acts as `v* = -K e`.
    pub k: Matrix,
    pub max_mismatch: f64,
}

/// Checks whether the solved law matches `v* = -B^-1 (A - Δ) e` at random
/// probe points; returns the gain when it does.
pub fn recover_linear_gain(
    model: &SystemModel,
    law: &FeedbackLaw,
) -> Result<Option<RecoveredGain>, SynthesisError> {
    use rand::SeedableRng;
    let ctx = law.context(model, 0.0, None)?;
    let binv = match ctx.b_eff.clone().try_inverse() {
        Some(inv) => inv,
        None => return Ok(None),
    };
    let k = &binv * (&ctx.frame.a - law.delta.matrix());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x6a11);
    let mut max_mismatch = 0.0f64;
    for _ in 0..20 {
        let e = Vector::from_fn(law.delta.dim(), |_, _| rng.gen_range(-0.05..0.05));
        let (v, diag) = ctx.solve(&e)?;
        if diag.iterations > 1 {
            return Ok(None);
        }
        let mismatch = (&v + &k * &e).norm();
        if mismatch > 1e-8 * (1.0 + v.norm()) {
            return Ok(None);
        }
        max_mismatch = max_mismatch.max(mismatch);
    }
    Ok(Some(RecoveredGain { k, max_mismatch }))
}

/// Admissible initial-error radius found by bisection: the largest probed
/// `|e(0)|` for which the solver succeeds along the whole simulated
/// trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaProbe {
    pub radius: f64,
    /// True when the largest tested radius already succeeded.
    pub saturated: bool,
    pub simulations: usize,
}

/// Bisects over `|e(0)|` along the direction of the configured initial
/// error (or the diagonal direction when it is zero), re-simulating the
/// closed loop at each probe.
pub fn probe_delta(model: &SystemModel, law: &FeedbackLaw, r_max: f64) -> DeltaProbe {
    let n = model.n();
    let e0 = law.initial_error();
    let dir = if e0.norm() > 0.0 {
        e0 / e0.norm()
    } else {
        Vector::from_element(n, 1.0 / (n as f64).sqrt())
    };
    let sim = model.simulate_settings();
    let mut simulations = 0;
    let mut succeeds = |radius: f64| -> bool {
        simulations += 1;
        let e_init = &dir * radius;
        let law_probe = law.clone().with_initial_error(e_init.clone());
        match model.desired_state(0.0) {
            Ok(xd0) => crate::sim::integrate_closed_loop(
                model,
                &law_probe,
                &(xd0 + e_init),
                sim.horizon,
                sim.dt,
            )
            .map(|r| r.completed())
            .unwrap_or(false),
            Err(_) => false,
        }
    };

    if succeeds(r_max) {
        return DeltaProbe {
            radius: r_max,
            saturated: true,
            simulations,
        };
    }
    let mut lo = 0.0f64;
    let mut hi = r_max;
    for _ in 0..PROBE_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if succeeds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    DeltaProbe {
        radius: lo,
        saturated: false,
        simulations,
    }
}

//! Closed-loop simulation with fixed-step classical RK4.
//!
//! The plant `ẋ = f(x, u_d + v*(x - x_d, t), w(t))` is integrated with
//! the feedback re-solved at every stage evaluation, not held over the
//! step; the continuous-feedback semantics of the synthesis carry over to
//! the discrete trace. Runs are single-threaded and deterministic.
//!
//! For underactuated plants the run also integrates the gap
//! `E = ẽ - e` between the ideal error path `ẽ(t) = exp(Δ̃ t) e(0)` and
//! the true error, as its own initial value problem
//! `Ė = F̃(ẽ, ṽ*(ẽ)) - F(ẽ - E, v*(ẽ - E, t))`, `E(0) = 0`; the two
//! routes to `E` (direct integration versus `ẽ - e` from the state
//! trace) are compared by [`SimulationResult::gap_cross_check`].
//!
//! A solver failure mid-run truncates the result and flags it; there is
//! no silent fallback to the linear law.

use crate::model::{EvalFailure, SystemModel};
use crate::synthesis::{FeedbackLaw, SynthesisError};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("initial state has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid step: dt = {dt}, T = {horizon} (need dt > 0, T >= dt)")]
    BadStep { dt: f64, horizon: f64 },
    #[error("{0}")]
    Model(#[from] EvalFailure),
}

/// Why and where a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum SimStatus {
    Completed,
    SolverFailure { t: f64, message: String },
    DomainError { t: f64, message: String },
}

impl SimStatus {
    fn from_synthesis(t: f64, err: SynthesisError) -> SimStatus {
        match err {
            SynthesisError::Eval(e) => SimStatus::DomainError {
                t,
                message: e.to_string(),
            },
            other => SimStatus::SolverFailure {
                t,
                message: other.to_string(),
            },
        }
    }
}

/// Solver diagnostics stored with each trace row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub fp_iterations: usize,
    pub gamma_obs: f64,
    pub residual: f64,
}

/// Time-series output of a closed-loop run. Row `k` holds the state at
/// `t_k = k dt`, the error bookkeeping `e_k = x_k - x_d(t_k)` (stored
/// exactly as subtracted), the applied input `u_k = u_d + v*(e_k, t_k)`,
/// and the solve diagnostics at that row.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub dt: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub errors: Vec<Vector>,
    pub controls: Vec<Vector>,
    pub error_norms: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Ideal error path `ẽ(t_k)`; underactuated runs only.
    pub reference_errors: Option<Vec<Vector>>,
    /// Integrated gap `E(t_k)`; underactuated runs only.
    pub gap: Option<Vec<Vector>>,
    pub status: SimStatus,
}

impl SimulationResult {
    pub fn completed(&self) -> bool {
        self.status == SimStatus::Completed
    }

    pub fn final_error_norm(&self) -> f64 {
        self.error_norms.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_gap_norm(&self) -> Option<f64> {
        self.gap.as_ref().and_then(|g| g.last()).map(|e| e.norm())
    }

    /// Max over stored rows of `|(ẽ - e) - E|`: agreement of the two
    /// independent computations of the gap.
    pub fn gap_cross_check(&self) -> Option<f64> {
        let (etilde, gap) = (self.reference_errors.as_ref()?, self.gap.as_ref()?);
        let rows = etilde.len().min(gap.len()).min(self.errors.len());
        let mut worst = 0.0f64;
        for k in 0..rows {
            worst = worst.max((&etilde[k] - &self.errors[k] - &gap[k]).norm());
        }
        Some(worst)
    }
}

/// One classical RK4 step of `ẋ = field(t, x)`.
pub fn rk4_step<E>(
    field: &mut impl FnMut(f64, &Vector) -> Result<Vector, E>,
    t: f64,
    x: &Vector,
    dt: f64,
) -> Result<Vector, E> {
    let k1 = field(t, x)?;
    let k2 = field(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)))?;
    let k3 = field(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)))?;
    let k4 = field(t + dt, &(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

fn step_count(horizon: f64, dt: f64) -> usize {
    (horizon / dt).round().max(1.0) as usize
}

/// Integrates the closed loop under the synthesized law.
pub fn integrate_closed_loop(
    model: &SystemModel,
    law: &FeedbackLaw,
    x0: &Vector,
    horizon: f64,
    dt: f64,
) -> Result<SimulationResult, SimError> {
    if x0.len() != model.n() {
        return Err(SimError::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    if !(dt > 0.0) || horizon < dt {
        return Err(SimError::BadStep { dt, horizon });
    }
    let steps = step_count(horizon, dt);
    let m = model.m();

    let mut out = SimulationResult {
        dt,
        horizon,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        errors: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        error_norms: Vec::with_capacity(steps + 1),
        diagnostics: Vec::with_capacity(steps + 1),
        reference_errors: law.is_augmented().then(Vec::new),
        gap: None,
        status: SimStatus::Completed,
    };

    let mut x = x0.clone();
    let mut prev_cols: Option<Matrix> = None;
    for k in 0..=steps {
        let t = k as f64 * dt;
        // row solve: context at t_k, shared with the first RK4 stage
        let ctx = match law.context(model, t, prev_cols.as_ref()) {
            Ok(ctx) => ctx,
            Err(err) => {
                out.status = SimStatus::from_synthesis(t, err);
                break;
            }
        };
        prev_cols = ctx.columns().cloned();
        let e = &x - &ctx.frame.xd;
        let (v, diag) = match ctx.solve(&e) {
            Ok(pair) => pair,
            Err(err) => {
                out.status = SimStatus::from_synthesis(t, err);
                break;
            }
        };
        let gamma_obs = match ctx.gamma_obs(&e, &v) {
            Ok(g) => g,
            Err(err) => {
                out.status = SimStatus::from_synthesis(t, err);
                break;
            }
        };
        let u = &ctx.frame.ud + v.rows(0, m);

        out.times.push(t);
        out.states.push(x.clone());
        out.errors.push(e.clone());
        out.controls.push(u.clone());
        out.error_norms.push(e.norm());
        out.diagnostics.push(StepDiagnostics {
            fp_iterations: diag.iterations,
            gamma_obs,
            residual: diag.residual,
        });
        if let Some(refs) = out.reference_errors.as_mut() {
            refs.push(law.reference_error(t));
        }
        if k == steps {
            break;
        }

        // stage field: re-solve the feedback at each stage point
        let stage = |ctx: &crate::synthesis::LawContext<'_>,
                     x: &Vector|
         -> Result<Vector, SynthesisError> {
            let e = x - &ctx.frame.xd;
            let (v, _) = ctx.solve(&e)?;
            let u = &ctx.frame.ud + v.rows(0, m);
            Ok(model.field(x, &u, &ctx.frame.w, ctx.t())?)
        };
        let step_result = (|| -> Result<Vector, SynthesisError> {
            // stage 1 is the row state; its solve is already done
            let k1 = model.field(&x, &u, &ctx.frame.w, ctx.t())?;
            let ctx_mid = law.context(model, t + 0.5 * dt, prev_cols.as_ref())?;
            let k2 = stage(&ctx_mid, &(&x + &k1 * (0.5 * dt)))?;
            let k3 = stage(&ctx_mid, &(&x + &k2 * (0.5 * dt)))?;
            let ctx_end = law.context(model, (k + 1) as f64 * dt, prev_cols.as_ref())?;
            let k4 = stage(&ctx_end, &(&x + &k3 * dt))?;
            Ok(&x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
        })();
        match step_result {
            Ok(next) => x = next,
            Err(err) => {
                out.status = SimStatus::from_synthesis(t, err);
                break;
            }
        }
    }
    Ok(out)
}

/// Gap trace from integrating `Ė = H(E, ẽ, w(t), t)`, `E(0) = 0`.
#[derive(Debug, Clone)]
pub struct GapTrace {
    pub times: Vec<f64>,
    pub reference_errors: Vec<Vector>,
    pub gap: Vec<Vector>,
    pub status: SimStatus,
}

/// Integrates the gap dynamics for an underactuated law: the difference
/// between the augmented field along the ideal path and the plant's error
/// field under the associated feedback at `e = ẽ - E`.
pub fn integrate_gap_dynamics(
    model: &SystemModel,
    law: &FeedbackLaw,
    horizon: f64,
    dt: f64,
) -> Result<GapTrace, SimError> {
    if !(dt > 0.0) || horizon < dt {
        return Err(SimError::BadStep { dt, horizon });
    }
    let steps = step_count(horizon, dt);
    let n = model.n();
    let m = model.m();

    let mut trace = GapTrace {
        times: Vec::with_capacity(steps + 1),
        reference_errors: Vec::with_capacity(steps + 1),
        gap: Vec::with_capacity(steps + 1),
        status: SimStatus::Completed,
    };

    // H(E, ẽ(t), w(t), t)
    let field =
        |t: f64, gap: &Vector, prev_cols: Option<&Matrix>| -> Result<Vector, SynthesisError> {
            let ctx = law.context(model, t, prev_cols)?;
            let e_ref = law.reference_error(t);
            let (v_ref, _) = ctx.solve(&e_ref)?;
            let v_ref_plant = v_ref.rows(0, m).into_owned();
            let mut augmented = ctx.frame.error_field(&e_ref, &v_ref_plant)?;
            if let Some(cols) = ctx.columns() {
                augmented += cols * v_ref.rows(m, n - m);
            }
            let e_live = &e_ref - gap;
            let (v_live, _) = ctx.solve(&e_live)?;
            let plant = ctx
                .frame
                .error_field(&e_live, &v_live.rows(0, m).into_owned())?;
            Ok(augmented - plant)
        };

    let mut gap = Vector::zeros(n);
    for k in 0..=steps {
        let t = k as f64 * dt;
        trace.times.push(t);
        trace.reference_errors.push(law.reference_error(t));
        trace.gap.push(gap.clone());
        if k == steps {
            break;
        }
        let step_result = (|| -> Result<Vector, SynthesisError> {
            let k1 = field(t, &gap, None)?;
            let k2 = field(t + 0.5 * dt, &(&gap + &k1 * (0.5 * dt)), None)?;
            let k3 = field(t + 0.5 * dt, &(&gap + &k2 * (0.5 * dt)), None)?;
            let k4 = field((k + 1) as f64 * dt, &(&gap + &k3 * dt), None)?;
            Ok(&gap + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
        })();
        match step_result {
            Ok(next) => gap = next,
            Err(err) => {
                trace.status = SimStatus::from_synthesis(t, err);
                break;
            }
        }
    }
    Ok(trace)
}

/// Full run: closed loop plus, for underactuated laws, the gap dynamics.
pub fn simulate(
    model: &SystemModel,
    law: &FeedbackLaw,
    x0: &Vector,
    horizon: f64,
    dt: f64,
) -> Result<SimulationResult, SimError> {
    let mut result = integrate_closed_loop(model, law, x0, horizon, dt)?;
    if law.is_augmented() && result.completed() {
        let trace = integrate_gap_dynamics(model, law, horizon, dt)?;
        if trace.status == SimStatus::Completed {
            result.gap = Some(trace.gap);
        } else {
            result.gap = Some(trace.gap);
            result.status = trace.status;
        }
    }
    Ok(result)
}

/// The componentwise ideal error path `ẽ_i(t) = exp(lambda_i t) e0_i`.
pub fn reference_error_path(law: &FeedbackLaw, e0: &Vector, t: f64) -> Vector {
    law.delta().propagate(e0, t)
}

/// Time-varying comparison law for the three-state chained plant:
/// `u1 = -x1 + x3 sin t`, `u2 = -x2 - x3^2 cos t`. Asymptotically
/// stabilizes the origin where every static law stalls.
pub fn sinusoid_reference_controller(x: &Vector, t: f64) -> Result<Vector, SimError> {
    if x.len() != 3 {
        return Err(SimError::DimensionMismatch {
            expected: 3,
            got: x.len(),
        });
    }
    Ok(Vector::from_column_slice(&[
        -x[0] + x[2] * t.sin(),
        -x[1] - x[2] * x[2] * t.cos(),
    ]))
}

/// Integrates the plant under an arbitrary state/time control law
/// `u = controller(x, t)`; used for reference-controller comparisons.
pub fn integrate_controller(
    model: &SystemModel,
    controller: impl Fn(&Vector, f64) -> Result<Vector, SimError>,
    x0: &Vector,
    horizon: f64,
    dt: f64,
) -> Result<SimulationResult, SimError> {
    if x0.len() != model.n() {
        return Err(SimError::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    if !(dt > 0.0) || horizon < dt {
        return Err(SimError::BadStep { dt, horizon });
    }
    let steps = step_count(horizon, dt);
    let mut out = SimulationResult {
        dt,
        horizon,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        errors: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        error_norms: Vec::with_capacity(steps + 1),
        diagnostics: Vec::with_capacity(steps + 1),
        reference_errors: None,
        gap: None,
        status: SimStatus::Completed,
    };

    let mut field = |t: f64, x: &Vector| -> Result<Vector, SimError> {
        let u = controller(x, t)?;
        Ok(model.field(x, &u, &model.disturbance(t)?, t)?)
    };

    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let e = &x - &model.desired_state(t)?;
        let u = match controller(&x, t) {
            Ok(u) => u,
            Err(err) => {
                out.status = SimStatus::DomainError {
                    t,
                    message: err.to_string(),
                };
                break;
            }
        };
        out.times.push(t);
        out.states.push(x.clone());
        out.errors.push(e.clone());
        out.controls.push(u);
        out.error_norms.push(e.norm());
        out.diagnostics.push(StepDiagnostics {
            fp_iterations: 0,
            gamma_obs: 0.0,
            residual: 0.0,
        });
        if k == steps {
            break;
        }
        match rk4_step(&mut field, t, &x, dt) {
            Ok(next) => x = next,
            Err(err) => {
                out.status = SimStatus::DomainError {
                    t,
                    message: err.to_string(),
                };
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assumptions::{check_assumptions, Grid};
    use crate::builtin;
    use std::convert::Infallible;

    fn load(name: &str) -> SystemModel {
        SystemModel::from_str(builtin::source(name).unwrap(), ".").unwrap()
    }

    fn law_for(model: &SystemModel) -> FeedbackLaw {
        let report = check_assumptions(model, &Grid::default_for(model), 1.0).unwrap();
        FeedbackLaw::synthesize(model, &report).unwrap()
    }

    #[test]
    fn rk4_is_fourth_order_on_linear_dynamics() {
        let delta = Matrix::from_diagonal(&Vector::from_column_slice(&[-1.0, -2.0]));
        let x0 = Vector::from_column_slice(&[1.0, 1.0]);
        let run = |dt: f64| -> f64 {
            let mut field = |_t: f64, x: &Vector| -> Result<Vector, Infallible> { Ok(&delta * x) };
            let steps = (5.0 / dt).round() as usize;
            let mut x = x0.clone();
            let mut worst = 0.0f64;
            for k in 0..steps {
                let t = k as f64 * dt;
                x = rk4_step(&mut field, t, &x, dt).unwrap();
                let t1 = (k + 1) as f64 * dt;
                let exact = Vector::from_column_slice(&[(-t1).exp(), (-2.0 * t1).exp()]);
                worst = worst.max((&x - exact).norm());
            }
            worst
        };
        let coarse = run(2e-3);
        let fine = run(1e-3);
        assert!(
            coarse / fine >= 14.0,
            "error ratio {} below fourth-order expectation",
            coarse / fine
        );
    }

    #[test]
    fn zero_initial_error_tracks_exactly() {
        let model = load("pendulum2");
        let law = law_for(&model);
        let x0 = model.desired_state(0.0).unwrap();
        let result = integrate_closed_loop(&model, &law, &x0, 2.0, 1e-3).unwrap();
        assert!(result.completed());
        let worst = result.error_norms.iter().copied().fold(0.0f64, f64::max);
        assert!(worst <= 1e-12, "drift {worst}");
        // control reduces to the desired input
        for (k, u) in result.controls.iter().enumerate().step_by(500) {
            let ud = model.desired_input(result.times[k]).unwrap();
            assert!((u - ud).norm() <= 1e-12);
        }
    }

    #[test]
    fn pendulum_error_follows_the_target_dynamics() {
        let model = load("pendulum2");
        let law = law_for(&model);
        let e0 = Vector::from_column_slice(&[1e-2 / 2.0f64.sqrt(), 1e-2 / 2.0f64.sqrt()]);
        let law = law.with_initial_error(e0.clone());
        let x0 = model.desired_state(0.0).unwrap() + &e0;
        let result = integrate_closed_loop(&model, &law, &x0, 10.0, 1e-3).unwrap();
        assert!(result.completed());
        let mut worst = 0.0f64;
        for (k, e) in result.errors.iter().enumerate() {
            let expected = law.delta().propagate(&e0, result.times[k]);
            worst = worst.max((e - expected).norm());
        }
        assert!(worst <= 1e-6, "max deviation {worst}");
    }

    #[test]
    fn bookkeeping_identity_is_exact() {
        let model = load("driftless2");
        let law = law_for(&model);
        let x0 = model.initial_state().unwrap();
        let result = integrate_closed_loop(&model, &law, &x0, 5.0, 1e-2).unwrap();
        for k in (0..result.times.len()).step_by(37) {
            let xd = model.desired_state(result.times[k]).unwrap();
            let recomposed = &result.errors[k] + &xd;
            assert_eq!(recomposed, result.states[k]);
        }
    }

    #[test]
    fn paper2d_gap_component_two_stays_zero() {
        let model = load("paper2d");
        let law = law_for(&model);
        let trace = integrate_gap_dynamics(&model, &law, 10.0, 1e-3).unwrap();
        assert_eq!(trace.status, SimStatus::Completed);
        for gap in trace.gap.iter().step_by(100) {
            assert!(gap[1].abs() <= 1e-13, "E2 = {}", gap[1]);
        }
    }

    #[test]
    fn paper2d_gap_cross_check() {
        let model = load("paper2d");
        let law = law_for(&model);
        let x0 = model.initial_state().unwrap();
        let result = simulate(&model, &law, &x0, 20.0, 1e-3).unwrap();
        assert!(result.completed());
        let mismatch = result.gap_cross_check().unwrap();
        assert!(mismatch <= 1e-8, "cross-check mismatch {mismatch}");
    }

    #[test]
    fn truncation_is_flagged_not_hidden() {
        let text = "\
[system]
n = 1
m = 1
p = 0
f1 = x1 + u1 + u1^3

[trajectory]
xd1 = 0
ud1 = 0

[synthesis]
eigenvalues = -1
margin = 0.5

[simulate]
x0 = 2.5
T = 2
dt = 0.01
";
        let model = SystemModel::from_str(text, ".").unwrap();
        let report = check_assumptions(&model, &Grid::default_for(&model), 1.0).unwrap();
        let law = FeedbackLaw::synthesize(&model, &report).unwrap();
        let result =
            integrate_closed_loop(&model, &law, &Vector::from_column_slice(&[2.5]), 2.0, 0.01)
                .unwrap();
        assert!(
            matches!(result.status, SimStatus::SolverFailure { .. }),
            "{:?}",
            result.status
        );
        assert!(result.times.len() < 201);
    }

    #[test]
    fn sinusoid_controller_values() {
        let zero = Vector::zeros(3);
        assert_eq!(
            sinusoid_reference_controller(&zero, 1.3).unwrap(),
            Vector::zeros(2)
        );
        let x = Vector::from_column_slice(&[1.0, 1.0, 1.0]);
        let u = sinusoid_reference_controller(&x, 0.0).unwrap();
        assert_eq!(u, Vector::from_column_slice(&[-1.0, -2.0]));
        let x = Vector::from_column_slice(&[0.0, 0.0, 2.0]);
        let u = sinusoid_reference_controller(&x, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((u[0] - 2.0).abs() < 1e-15);
        assert!(u[1].abs() < 1e-15);
        assert!(sinusoid_reference_controller(&Vector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn reference_path_examples() {
        let model = load("paper2d");
        let law = law_for(&model);
        let e0 = Vector::from_column_slice(&[1.0, 2.0]);
        assert_eq!(reference_error_path(&law, &e0, 0.0), e0);
        let half = reference_error_path(&law, &e0, 2.0f64.ln());
        assert!((half[0] - 0.5).abs() < 1e-15);
        assert!((half[1] - 1.0).abs() < 1e-15);
        let far = reference_error_path(&law, &e0, 100.0);
        assert!(far.norm() < 1e-40);
    }
}

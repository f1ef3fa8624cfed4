//! Plant model, desired trajectory and disturbance, plus the derived
//! tracking-error dynamics.
//!
//! A [`SystemModel`] holds the vector field `f` of `ẋ = f(x, u, w(t))`
//! as parsed expressions over `x1..xn, u1..um, w1..wp, t`, the desired
//! pair `(x_d, u_d)` as expressions over `t`, and the disturbance
//! channels. Loading validates dimensions, free variables and the
//! trajectory consistency residual `|d/dt x_d - f(x_d, u_d, w)| <= 1e-8`
//! on a check grid: the desired pair must actually solve the plant.
//!
//! [`ErrorDynamics`] exposes the shifted field
//! `F(e, v, w, t) = f(e + x_d, v + u_d, w) - f(x_d, u_d, w)`, its exact
//! symbolic Jacobians `A(t) = J_e F|_(0,0)` and `B(t) = J_v F|_(0,0)`,
//! and the Taylor remainder `r = F - A e - B v`.
//!
//! Everything is immutable after load; evaluators are reentrant.

use std::path::Path;

use thiserror::Error;

use crate::expr::{self, EvalError, Expr, ParseError, SlotExpr, VarLayout};
use crate::sysfile::{self, DisturbanceSpec, FileError, SimulateSection, SynthesisSection};
use crate::{Matrix, Vector};

/// Maximum allowed trajectory consistency residual.
pub const TOL_TRAJ: f64 = 1e-8;

const CONSISTENCY_POINTS: usize = 200;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0}")]
    File(#[from] FileError),
    #[error("{context}: {source}")]
    Parse { context: String, source: ParseError },
    #[error("{context}: unknown variable `{name}` (allowed: {allowed})")]
    UnknownVariable {
        context: String,
        name: String,
        allowed: String,
    },
    #[error("{0}")]
    Eval(#[from] EvalFailure),
    #[error(
        "desired trajectory does not satisfy the plant at t = {t}: \
         |d/dt x_d - f(x_d, u_d, w)| = {residual:e} > {tol:e}"
    )]
    TrajectoryInconsistent { t: f64, residual: f64, tol: f64 },
}

/// Runtime evaluation failure, tagged with what was being evaluated
/// (component name and time).
#[derive(Debug, Clone, Error, PartialEq)]
#[error("evaluating {context}: {source}")]
pub struct EvalFailure {
    pub context: String,
    pub source: EvalError,
}

fn eval_slot(
    expr: &SlotExpr,
    slots: &[f64],
    context: impl Fn() -> String,
) -> Result<f64, EvalFailure> {
    expr.eval(slots).map_err(|source| EvalFailure {
        context: context(),
        source,
    })
}

/// One disturbance channel.
#[derive(Debug, Clone)]
pub enum Disturbance {
    Expr {
        src: Expr,
        compiled: SlotExpr,
    },
    /// Sampled `(t, value)` pairs; linear interpolation, end values held
    /// outside the sampled range.
    Samples(Vec<(f64, f64)>),
}

impl Disturbance {
    fn at(&self, t: f64, index: usize) -> Result<f64, EvalFailure> {
        match self {
            Disturbance::Expr { compiled, .. } => {
                eval_slot(compiled, &[t], || format!("w{} at t = {t}", index + 1))
            }
            Disturbance::Samples(samples) => Ok(interpolate(samples, t)),
        }
    }
}

fn interpolate(samples: &[(f64, f64)], t: f64) -> f64 {
    match samples.binary_search_by(|(ti, _)| ti.total_cmp(&t)) {
        Ok(i) => samples[i].1,
        Err(0) => samples[0].1,
        Err(i) if i == samples.len() => samples[samples.len() - 1].1,
        Err(i) => {
            let (t0, v0) = samples[i - 1];
            let (t1, v1) = samples[i];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

/// The plant together with its desired trajectory and disturbances.
#[derive(Debug)]
pub struct SystemModel {
    n: usize,
    m: usize,
    p: usize,
    layout: VarLayout,
    f_src: Vec<Expr>,
    f: Vec<SlotExpr>,
    xd_src: Vec<Expr>,
    xd: Vec<SlotExpr>,
    xd_dot: Vec<SlotExpr>,
    ud_src: Vec<Expr>,
    ud: Vec<SlotExpr>,
    w: Vec<Disturbance>,
    /// Row-major `d f_i / d x_j`, compiled.
    a_exprs: Vec<SlotExpr>,
    /// Row-major `d f_i / d u_j`, compiled.
    b_exprs: Vec<SlotExpr>,
    synthesis: SynthesisSection,
    simulate: SimulateSection,
}

impl SystemModel {
    pub fn from_file(path: &Path) -> Result<SystemModel, ModelError> {
        Self::build(sysfile::parse_file(path)?)
    }

    pub fn from_str(
        text: &str,
        base_dir: impl Into<std::path::PathBuf>,
    ) -> Result<SystemModel, ModelError> {
        Self::build(sysfile::parse_str(text, base_dir.into())?)
    }

    fn build(file: sysfile::SystemFile) -> Result<SystemModel, ModelError> {
        let (n, m, p) = (file.n, file.m, file.p);
        let layout = VarLayout::canonical(n, m, p);
        let time_layout = VarLayout::new(vec!["t".to_string()]);

        let parse_all = |texts: &[String],
                         prefix: &str,
                         lay: &VarLayout|
         -> Result<(Vec<Expr>, Vec<SlotExpr>), ModelError> {
            let mut src = Vec::with_capacity(texts.len());
            let mut compiled = Vec::with_capacity(texts.len());
            for (i, text) in texts.iter().enumerate() {
                let context = format!("{prefix}{}", i + 1);
                let e = expr::parse(text).map_err(|source| ModelError::Parse {
                    context: context.clone(),
                    source,
                })?;
                let c = e.compile(lay).map_err(|err| match err {
                    EvalError::UnboundVariable(name) => ModelError::UnknownVariable {
                        context: context.clone(),
                        name,
                        allowed: lay.names().join(", "),
                    },
                    other => ModelError::Eval(EvalFailure {
                        context: context.clone(),
                        source: other,
                    }),
                })?;
                src.push(e);
                compiled.push(c);
            }
            Ok((src, compiled))
        };

        let (f_src, f) = parse_all(&file.f, "f", &layout)?;
        let (xd_src, xd) = parse_all(&file.xd, "xd", &time_layout)?;
        let (ud_src, ud) = parse_all(&file.ud, "ud", &time_layout)?;

        // d/dt x_d, symbolic, for the consistency check
        let xd_dot = xd_src
            .iter()
            .map(|e| {
                e.differentiate("t")
                    .compile(&time_layout)
                    .expect("xd is over t only")
            })
            .collect();

        let mut w = Vec::with_capacity(p);
        for (i, spec) in file.w.iter().enumerate() {
            match spec {
                DisturbanceSpec::Expr(text) => {
                    let context = format!("w{}", i + 1);
                    let src = expr::parse(text).map_err(|source| ModelError::Parse {
                        context: context.clone(),
                        source,
                    })?;
                    let compiled = src.compile(&time_layout).map_err(|err| match err {
                        EvalError::UnboundVariable(name) => ModelError::UnknownVariable {
                            context: context.clone(),
                            name,
                            allowed: "t".into(),
                        },
                        other => ModelError::Eval(EvalFailure {
                            context,
                            source: other,
                        }),
                    })?;
                    w.push(Disturbance::Expr { src, compiled });
                }
                DisturbanceSpec::Samples(rel) => {
                    let path = if rel.is_absolute() {
                        rel.clone()
                    } else {
                        file.base_dir.join(rel)
                    };
                    w.push(Disturbance::Samples(sysfile::read_samples(&path)?));
                }
            }
        }

        // exact symbolic Jacobians of f in x and u
        let mut a_exprs = Vec::with_capacity(n * n);
        let mut b_exprs = Vec::with_capacity(n * m);
        for fi in &f_src {
            for j in 1..=n {
                a_exprs.push(
                    fi.differentiate(&format!("x{j}"))
                        .compile(&layout)
                        .expect("f vars validated"),
                );
            }
        }
        for fi in &f_src {
            for j in 1..=m {
                b_exprs.push(
                    fi.differentiate(&format!("u{j}"))
                        .compile(&layout)
                        .expect("f vars validated"),
                );
            }
        }

        let model = SystemModel {
            n,
            m,
            p,
            layout,
            f_src,
            f,
            xd_src,
            xd,
            xd_dot,
            ud_src,
            ud,
            w,
            a_exprs,
            b_exprs,
            synthesis: file.synthesis,
            simulate: file.simulate,
        };
        model.check_trajectory_consistency()?;
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_fully_actuated(&self) -> bool {
        self.m == self.n
    }

    pub fn synthesis_settings(&self) -> &SynthesisSection {
        &self.synthesis
    }

    pub fn simulate_settings(&self) -> &SimulateSection {
        &self.simulate
    }

    /// Source expressions of the plant field, for reporting.
    pub fn field_sources(&self) -> &[Expr] {
        &self.f_src
    }

    pub fn trajectory_sources(&self) -> (&[Expr], &[Expr]) {
        (&self.xd_src, &self.ud_src)
    }

    /// Initial state: the file's `x0`, or `x_d(0)` when absent.
    pub fn initial_state(&self) -> Result<Vector, EvalFailure> {
        match &self.simulate.x0 {
            Some(x0) => Ok(Vector::from_column_slice(x0)),
            None => self.desired_state(0.0),
        }
    }

    pub fn desired_state(&self, t: f64) -> Result<Vector, EvalFailure> {
        let slots = [t];
        let mut out = Vector::zeros(self.n);
        for (i, e) in self.xd.iter().enumerate() {
            out[i] = eval_slot(e, &slots, || format!("xd{} at t = {t}", i + 1))?;
        }
        Ok(out)
    }

    pub fn desired_input(&self, t: f64) -> Result<Vector, EvalFailure> {
        let slots = [t];
        let mut out = Vector::zeros(self.m);
        for (i, e) in self.ud.iter().enumerate() {
            out[i] = eval_slot(e, &slots, || format!("ud{} at t = {t}", i + 1))?;
        }
        Ok(out)
    }

    pub fn desired_state_rate(&self, t: f64) -> Result<Vector, EvalFailure> {
        let slots = [t];
        let mut out = Vector::zeros(self.n);
        for (i, e) in self.xd_dot.iter().enumerate() {
            out[i] = eval_slot(e, &slots, || format!("d/dt xd{} at t = {t}", i + 1))?;
        }
        Ok(out)
    }

    pub fn disturbance(&self, t: f64) -> Result<Vector, EvalFailure> {
        let mut out = Vector::zeros(self.p);
        for (i, ch) in self.w.iter().enumerate() {
            out[i] = ch.at(t, i)?;
        }
        Ok(out)
    }

    fn fill_slots(&self, slots: &mut [f64], x: &Vector, u: &Vector, w: &Vector, t: f64) {
        slots[..self.n].copy_from_slice(x.as_slice());
        slots[self.n..self.n + self.m].copy_from_slice(u.as_slice());
        slots[self.n + self.m..self.n + self.m + self.p].copy_from_slice(w.as_slice());
        slots[self.n + self.m + self.p] = t;
    }

    /// Evaluates the plant field `f(x, u, w, t)`.
    pub fn field(&self, x: &Vector, u: &Vector, w: &Vector, t: f64) -> Result<Vector, EvalFailure> {
        let mut slots = vec![0.0; self.layout.len()];
        self.fill_slots(&mut slots, x, u, w, t);
        let mut out = Vector::zeros(self.n);
        for (i, e) in self.f.iter().enumerate() {
            out[i] = eval_slot(e, &slots, || format!("f{} at t = {t}", i + 1))?;
        }
        Ok(out)
    }

    /// Snapshot of the trajectory data and linearization at time `t`.
    pub fn frame(&self, t: f64) -> Result<Frame<'_>, EvalFailure> {
        let xd = self.desired_state(t)?;
        let ud = self.desired_input(t)?;
        let w = self.disturbance(t)?;
        let f_desired = self.field(&xd, &ud, &w, t)?;

        let mut slots = vec![0.0; self.layout.len()];
        self.fill_slots(&mut slots, &xd, &ud, &w, t);
        let mut a = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                a[(i, j)] = eval_slot(&self.a_exprs[i * self.n + j], &slots, || {
                    format!("d f{}/d x{} at t = {t}", i + 1, j + 1)
                })?;
            }
        }
        let mut b = Matrix::zeros(self.n, self.m);
        for i in 0..self.n {
            for j in 0..self.m {
                b[(i, j)] = eval_slot(&self.b_exprs[i * self.m + j], &slots, || {
                    format!("d f{}/d u{} at t = {t}", i + 1, j + 1)
                })?;
            }
        }

        Ok(Frame {
            model: self,
            t,
            xd,
            ud,
            w,
            f_desired,
            a,
            b,
        })
    }

    /// View of the derived error dynamics.
    pub fn error_dynamics(&self) -> ErrorDynamics<'_> {
        ErrorDynamics { model: self }
    }

    fn check_trajectory_consistency(&self) -> Result<(), ModelError> {
        let horizon = self.simulate.horizon;
        for k in 0..=CONSISTENCY_POINTS {
            let t = horizon * k as f64 / CONSISTENCY_POINTS as f64;
            let xd = self.desired_state(t)?;
            let ud = self.desired_input(t)?;
            let w = self.disturbance(t)?;
            let residual = (self.desired_state_rate(t)? - self.field(&xd, &ud, &w, t)?).norm();
            if !(residual <= TOL_TRAJ) {
                return Err(ModelError::TrajectoryInconsistent {
                    t,
                    residual,
                    tol: TOL_TRAJ,
                });
            }
        }
        Ok(())
    }
}

/// Per-time snapshot: desired point, disturbance, `f` at the desired
/// point, and the linearization `A(t), B(t)`.
#[derive(Debug, Clone)]
pub struct Frame<'a> {
    model: &'a SystemModel,
    pub t: f64,
    pub xd: Vector,
    pub ud: Vector,
    pub w: Vector,
    pub f_desired: Vector,
    pub a: Matrix,
    pub b: Matrix,
}

impl Frame<'_> {
    /// `F(e, v, w(t), t) = f(e + x_d, v + u_d, w) - f(x_d, u_d, w)`.
    pub fn error_field(&self, e: &Vector, v: &Vector) -> Result<Vector, EvalFailure> {
        let shifted = self
            .model
            .field(&(e + &self.xd), &(v + &self.ud), &self.w, self.t)?;
        Ok(shifted - &self.f_desired)
    }

    /// Taylor remainder `r(e, v, w(t), t) = F - A e - B v`.
    pub fn remainder(&self, e: &Vector, v: &Vector) -> Result<Vector, EvalFailure> {
        Ok(self.error_field(e, v)? - &self.a * e - &self.b * v)
    }
}

/// Tracking-error dynamics derived from a [`SystemModel`].
#[derive(Debug, Clone, Copy)]
pub struct ErrorDynamics<'a> {
    model: &'a SystemModel,
}

impl<'a> ErrorDynamics<'a> {
    pub fn model(&self) -> &'a SystemModel {
        self.model
    }

    /// `F(e, v, w(t), t)`; vanishes at `(e, v) = (0, 0)` for all `t`.
    pub fn error_field(&self, e: &Vector, v: &Vector, t: f64) -> Result<Vector, EvalFailure> {
        self.model.frame(t)?.error_field(e, v)
    }

    /// `A(t)`: exact Jacobian of `F` in `e` at the origin, equal to
    /// `J_x f` along the desired trajectory.
    pub fn jacobian_a(&self, t: f64) -> Result<Matrix, EvalFailure> {
        Ok(self.model.frame(t)?.a)
    }

    /// `B(t)`: exact Jacobian of `F` in `v` at the origin.
    pub fn jacobian_b(&self, t: f64) -> Result<Matrix, EvalFailure> {
        Ok(self.model.frame(t)?.b)
    }

    /// `r(e, v, w(t), t) = F(e, v, w(t), t) - A(t) e - B(t) v`.
    pub fn remainder(&self, e: &Vector, v: &Vector, t: f64) -> Result<Vector, EvalFailure> {
        self.model.frame(t)?.remainder(e, v)
    }
}

//! Empirical stability classification of a finite-horizon run.
//!
//! The verdict is a statement about the realized trace only, never a
//! proof: `asymptotic` means the error norm decayed below tolerance with
//! a non-increasing envelope over the last half of the horizon;
//! `lyapunov_stable` means it stayed within a factor of the initial error
//! without converging; `attenuated` means a user-supplied `|e| <= eps for
//! t >= T_hold` criterion held; anything else is `diverging` (including
//! truncated runs).

use crate::sim::{SimStatus, SimulationResult};

/// Tolerance under which the final error counts as converged:
/// `1e-6 * max(1, |e(0)|)`.
pub fn asymptotic_tolerance(initial_error_norm: f64) -> f64 {
    1e-6 * initial_error_norm.max(1.0)
}

/// Default bound factor for Lyapunov stability: `|e(t)| <= C |e(0)|`.
pub const DEFAULT_STABLE_FACTOR: f64 = 10.0;

/// Windows used for the monotone-envelope check over the last half of
/// the horizon.
const ENVELOPE_WINDOWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilityClass {
    Asymptotic,
    LyapunovStable,
    Attenuated { eps: f64, t_hold: f64 },
    Diverging,
}

impl StabilityClass {
    pub fn label(&self) -> String {
        match self {
            StabilityClass::Asymptotic => "asymptotic".into(),
            StabilityClass::LyapunovStable => "lyapunov_stable".into(),
            StabilityClass::Attenuated { eps, t_hold } => {
                format!("attenuated(eps={eps}, T={t_hold})")
            }
            StabilityClass::Diverging => "diverging".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifySettings {
    /// `C` in the Lyapunov criterion `|e(t)| <= C |e(0)|`.
    pub stable_factor: f64,
    /// Optional attenuation criterion `(eps, T_hold)`.
    pub attenuation: Option<(f64, f64)>,
}

impl Default for ClassifySettings {
    fn default() -> Self {
        ClassifySettings {
            stable_factor: DEFAULT_STABLE_FACTOR,
            attenuation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub class: StabilityClass,
    /// Least-squares decay rate of `ln |e|` over the last half-horizon.
    pub lambda_fit: f64,
    pub final_error: f64,
    pub final_gap: Option<f64>,
    pub tol_asym: f64,
    pub stable_factor: f64,
}

/// Maxima of `|e|` over consecutive windows of the trailing half of the
/// trace; the envelope decays when each is at most its predecessor (up to
/// rounding) or already below tolerance.
fn envelope_decays(norms: &[f64], tol: f64) -> bool {
    let start = norms.len() / 2;
    let tail = &norms[start..];
    if tail.len() < ENVELOPE_WINDOWS {
        return tail.windows(2).all(|w| w[1] <= w[0].max(tol));
    }
    let mut maxima = Vec::with_capacity(ENVELOPE_WINDOWS);
    for chunk in 0..ENVELOPE_WINDOWS {
        let lo = start + chunk * tail.len() / ENVELOPE_WINDOWS;
        let hi = start + (chunk + 1) * tail.len() / ENVELOPE_WINDOWS;
        maxima.push(
            norms[lo..hi.min(norms.len())]
                .iter()
                .copied()
                .fold(0.0f64, f64::max),
        );
    }
    maxima
        .windows(2)
        .all(|w| w[1] <= (w[0] * (1.0 + 1e-9)).max(tol))
}

/// Least-squares slope of `ln |e(t)|` over the last half of the horizon.
pub fn fit_decay_rate(times: &[f64], norms: &[f64]) -> f64 {
    let start = times.len() / 2;
    let pts: Vec<(f64, f64)> = times[start..]
        .iter()
        .zip(norms[start..].iter())
        .map(|(&t, &n)| (t, n.max(1e-300).ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let zm = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, z) in pts {
        num += (t - tm) * (z - zm);
        den += (t - tm) * (t - tm);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Classifies a finished run.
pub fn classify(result: &SimulationResult, settings: &ClassifySettings) -> StabilityVerdict {
    let norms = &result.error_norms;
    let e0 = norms.first().copied().unwrap_or(f64::NAN);
    let tol_asym = asymptotic_tolerance(e0);
    let final_error = result.final_error_norm();
    let completed = result.status == SimStatus::Completed;

    let class = if completed && final_error <= tol_asym && envelope_decays(norms, tol_asym) {
        StabilityClass::Asymptotic
    } else if completed && e0 > 0.0 && norms.iter().all(|&n| n <= settings.stable_factor * e0) {
        StabilityClass::LyapunovStable
    } else if let Some((eps, t_hold)) = settings.attenuation {
        let held = completed
            && result
                .times
                .iter()
                .zip(norms.iter())
                .filter(|(&t, _)| t >= t_hold)
                .all(|(_, &n)| n <= eps);
        if held {
            StabilityClass::Attenuated { eps, t_hold }
        } else {
            StabilityClass::Diverging
        }
    } else {
        StabilityClass::Diverging
    };

    StabilityVerdict {
        class,
        lambda_fit: fit_decay_rate(&result.times, norms),
        final_error,
        final_gap: result.final_gap_norm(),
        tol_asym,
        stable_factor: settings.stable_factor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{SimStatus, SimulationResult, StepDiagnostics};
    use crate::Vector;

    fn result_from_norms(norms: Vec<f64>, status: SimStatus) -> SimulationResult {
        let n = norms.len();
        SimulationResult {
            dt: 0.01,
            horizon: 0.01 * (n - 1) as f64,
            times: (0..n).map(|k| k as f64 * 0.01).collect(),
            states: norms
                .iter()
                .map(|&x| Vector::from_column_slice(&[x]))
                .collect(),
            errors: norms
                .iter()
                .map(|&x| Vector::from_column_slice(&[x]))
                .collect(),
            controls: vec![Vector::zeros(1); n],
            error_norms: norms,
            diagnostics: vec![
                StepDiagnostics {
                    fp_iterations: 1,
                    gamma_obs: 0.0,
                    residual: 0.0
                };
                n
            ],
            reference_errors: None,
            gap: None,
            status,
        }
    }

    #[test]
    fn exponential_decay_is_asymptotic() {
        let norms: Vec<f64> = (0..=2000).map(|k| (-(k as f64) * 0.01).exp()).collect();
        let verdict = classify(
            &result_from_norms(norms, SimStatus::Completed),
            &Default::default(),
        );
        assert_eq!(verdict.class, StabilityClass::Asymptotic);
        assert!(
            (verdict.lambda_fit + 1.0).abs() < 0.05,
            "{}",
            verdict.lambda_fit
        );
    }

    #[test]
    fn bounded_plateau_is_lyapunov() {
        let norms: Vec<f64> = (0..=2000)
            .map(|k| 0.5 + 0.5 * (-(k as f64) * 0.01).exp())
            .collect();
        let verdict = classify(
            &result_from_norms(norms, SimStatus::Completed),
            &Default::default(),
        );
        assert_eq!(verdict.class, StabilityClass::LyapunovStable);
    }

    #[test]
    fn growth_is_diverging() {
        let norms: Vec<f64> = (0..=2000)
            .map(|k| 0.1 * ((k as f64) * 0.005).exp())
            .collect();
        let verdict = classify(
            &result_from_norms(norms, SimStatus::Completed),
            &Default::default(),
        );
        assert_eq!(verdict.class, StabilityClass::Diverging);
    }

    #[test]
    fn attenuation_criterion() {
        // settles into a 0.05 ball but far above the asymptotic tolerance
        // and above 10x the small initial error
        let norms: Vec<f64> = (0..=2000)
            .map(|k| {
                let t = k as f64 * 0.01;
                0.04 + 0.3 * (-t).exp()
            })
            .collect();
        let mut norms = norms;
        norms[0] = 0.01; // small initial error
        let result = result_from_norms(norms, SimStatus::Completed);
        let settings = ClassifySettings {
            stable_factor: 10.0,
            attenuation: Some((0.05, 10.0)),
        };
        let verdict = classify(&result, &settings);
        assert!(
            matches!(verdict.class, StabilityClass::Attenuated { .. }),
            "{verdict:?}"
        );
        // without the attenuation criterion the same trace diverges
        let verdict = classify(&result, &Default::default());
        assert_eq!(verdict.class, StabilityClass::Diverging);
    }

    #[test]
    fn truncated_runs_never_classify_as_stable() {
        let norms: Vec<f64> = (0..=100)
            .map(|k| (-(k as f64) * 0.01).exp() * 1e-9)
            .collect();
        let verdict = classify(
            &result_from_norms(
                norms,
                SimStatus::SolverFailure {
                    t: 1.0,
                    message: "test".into(),
                },
            ),
            &Default::default(),
        );
        assert_eq!(verdict.class, StabilityClass::Diverging);
    }

    #[test]
    fn asymptotic_requires_final_error_below_tolerance() {
        // decays but stalls at 1e-3
        let norms: Vec<f64> = (0..=2000)
            .map(|k| 1e-3 + (-(k as f64) * 0.01).exp())
            .collect();
        let verdict = classify(
            &result_from_norms(norms, SimStatus::Completed),
            &Default::default(),
        );
        assert_ne!(verdict.class, StabilityClass::Asymptotic);
    }

    #[test]
    fn zero_error_trace_is_asymptotic() {
        let norms: Vec<f64> = vec![0.0; 1000];
        let verdict = classify(
            &result_from_norms(norms, SimStatus::Completed),
            &Default::default(),
        );
        assert_eq!(verdict.class, StabilityClass::Asymptotic);
    }
}

//! Cross-module invariant checks that go beyond per-module unit tests:
//! determinism of whole runs, residual-to-trajectory transfer, the two
//! independent gap computations, and augmentation geometry along the
//! grid.

use tracksyn::assumptions::{check_assumptions, Grid};
use tracksyn::classify::{classify, ClassifySettings, StabilityClass};
use tracksyn::cli::{cmd_simulate, SimFlags};
use tracksyn::model::SystemModel;
use tracksyn::sim;
use tracksyn::synthesis::{augment, solve_feedback, FeedbackLaw};
use tracksyn::{builtin, Vector};

fn load(name: &str) -> SystemModel {
    SystemModel::from_str(builtin::source(name).unwrap(), ".").unwrap()
}

fn law_for(model: &SystemModel) -> FeedbackLaw {
    let report = check_assumptions(model, &Grid::default_for(model), 1.0).unwrap();
    FeedbackLaw::synthesize(model, &report).unwrap()
}

#[test]
fn identical_runs_produce_bit_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        let flags = SimFlags {
            horizon: Some(2.0),
            dt: Some(1e-3),
            eps: None,
            hold: None,
            stable_c: 10.0,
            kappa: 1.0,
            out: dir.path().to_path_buf(),
        };
        let out = cmd_simulate(builtin::PAPER2D, dir.path().to_path_buf(), flags).unwrap();
        let csv = std::fs::read(out.dir.join("trace.csv")).unwrap();
        let report = std::fs::read(out.dir.join("report.txt")).unwrap();
        (out.verdict, csv, report)
    };
    let (verdict_a, csv_a, report_a) = run();
    let (verdict_b, csv_b, report_b) = run();
    assert_eq!(verdict_a, verdict_b);
    assert_eq!(
        csv_a, csv_b,
        "trace CSV must be bit-identical across reruns"
    );
    assert_eq!(report_a, report_b);
}

#[test]
fn decay_rate_fit_matches_slowest_eigenvalue() {
    let model = load("pendulum2");
    let law = law_for(&model);
    let x0 = model.initial_state().unwrap();
    let result = sim::integrate_closed_loop(&model, &law, &x0, 10.0, 1e-3).unwrap();
    let verdict = classify(&result, &ClassifySettings::default());
    let max_eig = law.delta().max_eigenvalue();
    assert!(
        (verdict.lambda_fit - max_eig).abs() <= 0.05,
        "lambda_fit = {} vs max eigenvalue {max_eig}",
        verdict.lambda_fit
    );
}

#[test]
fn residuals_transfer_to_trajectory_accuracy() {
    // pendulum with a small initial error, and the linear plant with a
    // moderate one
    let cases = [("pendulum2", 1e-2), ("lti", 0.5)];
    for (name, e0_scale) in cases {
        let model = load(name);
        let e0 = Vector::from_element(2, e0_scale / 2f64.sqrt());
        let law = law_for(&model).with_initial_error(e0.clone());
        let x0 = model.desired_state(0.0).unwrap() + &e0;
        let result = sim::integrate_closed_loop(&model, &law, &x0, 10.0, 1e-3).unwrap();
        assert!(result.completed());
        let residual_ok = result
            .diagnostics
            .iter()
            .zip(result.error_norms.iter())
            .all(|(d, e)| d.residual <= 1e-10 * (1.0 + e));
        assert!(residual_ok, "{name}: residual precondition failed");
        let mut worst = 0.0f64;
        for (k, e) in result.errors.iter().enumerate() {
            let expected = law.delta().propagate(&e0, result.times[k]);
            worst = worst.max((e - expected).norm());
        }
        assert!(
            worst <= 1e-6 * e0.norm(),
            "{name}: max deviation {worst:.3e} vs 1e-6 |e0| = {:.3e}",
            1e-6 * e0.norm()
        );
    }
}

#[test]
fn gap_routes_agree_for_underactuated_builtins() {
    for name in ["paper2d", "chained3"] {
        let model = load(name);
        let law = law_for(&model);
        let x0 = model.initial_state().unwrap();
        let settings = model.simulate_settings();
        let result = sim::simulate(&model, &law, &x0, settings.horizon, settings.dt).unwrap();
        assert!(result.completed(), "{name}");
        let gap = result.gap.as_ref().unwrap();
        // the gap starts at zero exactly
        assert!(gap[0].iter().all(|&x| x == 0.0), "{name}: E(0) != 0");
        let mismatch = result.gap_cross_check().unwrap();
        assert!(
            mismatch <= 1e-8,
            "{name}: |(etilde - e) - E| = {mismatch:.3e}"
        );
    }
}

#[test]
fn augmentation_geometry_along_the_grid() {
    // default orthonormal complement (no override): drop the l2 line
    let text = builtin::PAPER2D.replace("l2 = 1, 0\n", "");
    let model = SystemModel::from_str(&text, ".").unwrap();
    let grid = Grid::new(20.0, 50);
    let mut prev = None;
    for t in grid.times() {
        let b = model.frame(t).unwrap().b;
        let aug = augment(t, &b, prev.as_ref()).unwrap();
        let det = aug.b_tilde.determinant();
        assert!(det.abs() > 1e-9, "t = {t}: det = {det}");
        // complement columns orthonormal and orthogonal to col B
        let cols = &aug.columns;
        for i in 0..cols.ncols() {
            assert!((cols.column(i).norm() - 1.0).abs() < 1e-12);
            for j in 0..b.ncols() {
                assert!(cols.column(i).dot(&b.column(j)).abs() < 1e-12);
            }
        }
        prev = Some(aug.columns.clone());
    }

    let chained = load("chained3");
    for t in Grid::new(15.0, 20).times() {
        let b = chained.frame(t).unwrap().b;
        let aug = augment(t, &b, None).unwrap();
        assert!(aug.b_tilde.determinant().abs() > 1e-9);
    }
}

#[test]
fn zero_correction_at_zero_error_for_all_builtins_and_times() {
    for name in builtin::NAMES {
        let model = load(name);
        let law = law_for(&model);
        for t in [0.0, 0.37, 2.0, 11.5] {
            let (v, diag) = solve_feedback(&model, &law, &Vector::zeros(model.n()), t).unwrap();
            assert!(v.iter().all(|&x| x == 0.0), "{name} at t = {t}");
            assert_eq!(diag.iterations, 0);
        }
    }
}

#[test]
fn classifier_reports_attenuation_when_requested() {
    // chained plant under the static law settles near (0, 0, 0.5): with a
    // generous epsilon ball around the residual level it attenuates
    let model = load("chained3");
    let law = law_for(&model);
    let x0 = model.initial_state().unwrap();
    let result = sim::simulate(&model, &law, &x0, 15.0, 1e-3).unwrap();
    let verdict = classify(
        &result,
        &ClassifySettings {
            stable_factor: 1e-9, // force the Lyapunov branch to fail
            attenuation: Some((0.6, 10.0)),
        },
    );
    assert!(
        matches!(verdict.class, StabilityClass::Attenuated { .. }),
        "{verdict:?}"
    );
}

#[test]
fn sampled_disturbance_runs_the_whole_pipeline() {
    // a two-point sample table of the constant disturbance must reproduce
    // the expression form exactly (linear interpolation of constants)
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("wind.csv"), "t,value\n0,-2\n20,-2\n").unwrap();
    let text = builtin::PAPER2D.replace("w1 = -2", "w1 = samples:wind.csv");
    let sampled = SystemModel::from_str(&text, dir.path()).unwrap();
    let expr_model = load("paper2d");

    let report_s = check_assumptions(&sampled, &Grid::default_for(&sampled), 1.0).unwrap();
    let report_e = check_assumptions(&expr_model, &Grid::default_for(&expr_model), 1.0).unwrap();
    assert!(report_s.all_pass());
    assert_eq!(report_s.gamma_w, report_e.gamma_w);
    assert_eq!(report_s.beta1, report_e.beta1);

    let law_s = FeedbackLaw::synthesize(&sampled, &report_s).unwrap();
    let law_e = FeedbackLaw::synthesize(&expr_model, &report_e).unwrap();
    let x0 = sampled.initial_state().unwrap();
    let run_s = sim::simulate(&sampled, &law_s, &x0, 2.0, 1e-3).unwrap();
    let run_e = sim::simulate(&expr_model, &law_e, &x0, 2.0, 1e-3).unwrap();
    assert!(run_s.completed());
    for k in (0..run_s.states.len()).step_by(100) {
        assert_eq!(run_s.states[k], run_e.states[k], "step {k}");
    }
}

#[test]
fn example_command_writes_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    tracksyn::cli::cmd_example("driftless2", dir.path()).unwrap();
    // out/<example-id>/<run-id>/{trace.csv,report.txt,assumptions.txt}
    let example_dir = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .expect("example directory");
    assert!(example_dir.join("driftless2.system").exists());
    let run_dir = std::fs::read_dir(&example_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .expect("run directory");
    for file in ["trace.csv", "report.txt", "assumptions.txt"] {
        assert!(run_dir.join(file).exists(), "{file} missing");
    }
    let report = std::fs::read_to_string(run_dir.join("report.txt")).unwrap();
    assert!(report.contains("verdict:"), "{report}");
}

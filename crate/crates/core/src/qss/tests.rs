use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ode::LinearOde;

fn exp_opts(method: QssMethod) -> QssOptions {
    QssOptions { method, mode: QuantumMode::Min, abs_tol: 1e-3, rel_tol: 1e-3, per_state_abs: None, grouped: false }
}

#[test]
fn quantum_rules() {
    assert_eq!(compute_quantum(1.0, 1e-3, 1e-3, QuantumMode::Min).unwrap(), 1e-3);
    assert_eq!(compute_quantum(0.0, 1e-3, 1e-3, QuantumMode::Max).unwrap(), 1e-3);
    assert_eq!(compute_quantum(100.0, 1e-3, 1e-3, QuantumMode::Max).unwrap(), 0.1);
    // Min rule with q0 = 0 hits the floor instead of collapsing.
    assert_eq!(compute_quantum(0.0, 1e-3, 1e-3, QuantumMode::Min).unwrap(), 1e-9);
    assert!(compute_quantum(1.0, 0.0, 1e-3, QuantumMode::Min).is_err());
}

#[test]
fn state_model_of_exponential_qss1() {
    let model = LinearOde::exponential_decay();
    let solver = QssSolver::new(&model, exp_opts(QssMethod::Qss1), 0.0, vec![]).unwrap();
    let c = solver.component(0);
    assert_eq!(c.state.coeffs, vec![1.0, -1.0]);
    // x̂(t) = 1 - t, q̂ = 1, Δq = 1e-3: first crossing at t = 1e-3.
    assert!((c.next_time - 1e-3).abs() < 1e-15);
}

#[test]
fn state_model_of_exponential_qss2() {
    let model = LinearOde::exponential_decay();
    let solver = QssSolver::new(&model, exp_opts(QssMethod::Qss2), 0.0, vec![]).unwrap();
    let c = solver.component(0);
    assert_eq!(c.state.coeffs[0], 1.0);
    assert_eq!(c.state.coeffs[1], -1.0);
    // Forward difference of f along the quantized trajectory gives the
    // Taylor curvature of e^{-t}: +0.5.
    assert!((c.state.coeffs[2] - 0.5).abs() < 1e-6);
}

#[test]
fn zero_derivative_constant_state_model() {
    let model = LinearOde::new(
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, 0.0),
        DVector::from_element(1, 2.5),
    );
    let solver = QssSolver::new(&model, exp_opts(QssMethod::Qss1), 0.0, vec![PolySegment::constant(7.0)]).unwrap();
    let c = solver.component(0);
    assert_eq!(c.state.coeffs, vec![2.5, 0.0]);
    assert_eq!(c.next_time, f64::INFINITY);
}

#[test]
fn first_requantization_of_exponential() {
    let model = LinearOde::exponential_decay();
    let mut solver = QssSolver::new(&model, exp_opts(QssMethod::Qss1), 0.0, vec![]).unwrap();
    let t = solver.next_event_time();
    solver.fire(&model, t).unwrap();
    // Analytic continuation of the first step: q̂ = 1 - 1e-3.
    assert!((solver.component(0).quantized.coeffs[0] - 0.999).abs() < 1e-12);
}

#[test]
fn liqss1_offset_stays_within_quantum() {
    let model = LinearOde::exponential_decay();
    let solver = QssSolver::new(&model, exp_opts(QssMethod::Liqss1), 0.0, vec![]).unwrap();
    let q0 = solver.component(0).quantized.coeffs[0];
    let dq = solver.component(0).quantum;
    assert!((q0 - 1.0).abs() <= dq);
    // Trajectory decays, so the offset lands on the lower side.
    assert!(q0 < 1.0);
}

#[test]
fn exponential_accuracy_and_event_counts() {
    let model = LinearOde::exponential_decay();
    let exact = (-3.0_f64).exp();

    let t1 = integrate(&model, exp_opts(QssMethod::Qss1), 3.0).unwrap();
    assert_eq!(*t1.times.last().unwrap(), 3.0);
    assert!((t1.final_state()[0] - exact).abs() < 5e-4, "qss1 err {}", (t1.final_state()[0] - exact).abs());

    let t2 = integrate(&model, exp_opts(QssMethod::Qss2), 3.0).unwrap();
    assert!((t2.final_state()[0] - exact).abs() < 5e-4, "qss2 err {}", (t2.final_state()[0] - exact).abs());
    assert!(t2.event_count < t1.event_count);

    let t3 = integrate(&model, exp_opts(QssMethod::Liqss1), 3.0).unwrap();
    assert!((t3.final_state()[0] - exact).abs() < 5e-3, "liqss1 err {}", (t3.final_state()[0] - exact).abs());
}

#[test]
fn zero_dynamics_single_initial_event() {
    let model = LinearOde::autonomous(DMatrix::zeros(1, 1), DVector::from_element(1, 4.0));
    let trace = integrate(&model, exp_opts(QssMethod::Qss1), 10.0).unwrap();
    assert_eq!(trace.event_count, 1);
    assert!(trace.states.iter().all(|x| x[0] == 4.0));
}

#[test]
fn grouped_matches_ungrouped_on_exponential() {
    let model = LinearOde::exponential_decay();
    let mut grouped = exp_opts(QssMethod::Qss2);
    grouped.grouped = true;
    let a = integrate(&model, exp_opts(QssMethod::Qss2), 3.0).unwrap();
    let b = integrate(&model, grouped, 3.0).unwrap();
    let dq = 2.0 * 1e-3;
    assert!((a.final_state()[0] - b.final_state()[0]).abs() <= dq);
}

/// Drive the solver manually and check the hysteresis band, segment
/// continuity, and prediction consistency over every validity window.
#[test]
fn band_continuity_and_prediction_invariants() {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.5, -2.0]);
    let model = LinearOde::autonomous(a, DVector::from_vec(vec![1.0, -0.5]));
    let opts = QssOptions { method: QssMethod::Qss2, mode: QuantumMode::Max, abs_tol: 1e-3, rel_tol: 1e-3, per_state_abs: None, grouped: false };
    let mut solver = QssSolver::new(&model, opts, 0.0, vec![]).unwrap();
    let mut t_prev = 0.0;
    for _ in 0..500 {
        let t = solver.next_event_time();
        if !t.is_finite() || t > 8.0 {
            break;
        }
        for j in 0..2 {
            let c = solver.component(j);
            // Band holds over the whole validity window of this segment pair.
            for k in 0..=10 {
                let s = t_prev + (t - t_prev) * k as f64 / 10.0;
                let dev = (c.state.eval(s) - c.quantized.eval(s)).abs();
                assert!(dev <= c.quantum * (1.0 + 1e-9) + 1e-15, "band violated: {dev} > {}", c.quantum);
            }
            // Evaluating the difference at the predicted time hits the
            // quantum exactly.
            if c.next_time.is_finite() {
                let dev = (c.state.eval(c.next_time) - c.quantized.eval(c.next_time)).abs();
                assert!((dev - c.quantum).abs() <= 1e-12 * c.quantum.max(dev));
            }
        }
        let before: Vec<f64> = (0..2).map(|j| solver.component(j).state.eval(t)).collect();
        solver.fire(&model, t).unwrap();
        for j in 0..2 {
            let after = solver.component(j).state.eval(t);
            assert!((after - before[j]).abs() <= 1e-12 * before[j].abs().max(1.0), "state model discontinuity");
        }
        t_prev = t;
    }
}

/// QSS2 against the matrix exponential on random stable linear systems.
#[test]
fn linear_system_matches_matrix_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    for _ in 0..10 {
        let n = rng.random_range(2..=4usize);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = if i == j {
                    -rng.random_range(0.5..2.0)
                } else {
                    rng.random_range(-0.2..0.2) / n as f64
                };
            }
        }
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let lambda_min = a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re.abs())
            .fold(f64::INFINITY, f64::min);
        let horizon = 10.0 / lambda_min;

        let opts = QssOptions { method: QssMethod::Qss2, mode: QuantumMode::Max, abs_tol: 1e-3, rel_tol: 0.0, per_state_abs: None, grouped: false };
        let model = LinearOde::autonomous(a.clone(), x0.clone());
        let mut solver = QssSolver::new(&model, opts, 0.0, vec![]).unwrap();

        let steps = 200;
        let dt = horizon / steps as f64;
        let propagator = (a * dt).exp();
        let mut exact = x0.clone();
        let mut worst = 0.0_f64;
        let mut x = vec![0.0; n];
        for k in 1..=steps {
            let t = k as f64 * dt;
            while solver.next_event_time() <= t {
                let te = solver.next_event_time();
                solver.fire(&model, te).unwrap();
            }
            exact = &propagator * exact;
            solver.continuous_state(t, &mut x);
            for j in 0..n {
                worst = worst.max((x[j] - exact[j]).abs());
            }
        }
        let max_quantum = (0..n).map(|j| solver.component(j).quantum).fold(0.0, f64::max);
        assert!(worst <= 10.0 * max_quantum, "worst {worst} vs quantum {max_quantum}");
    }
}

#[test]
fn input_change_induces_state_event() {
    // dx/dt = -x + u with a step on u: the state model must re-form at the
    // step instant.
    let model = LinearOde::new(
        DMatrix::from_element(1, 1, -1.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 0.0),
    );
    let opts = exp_opts(QssMethod::Qss2);
    let mut solver = QssSolver::new(&model, opts, 0.0, vec![PolySegment::constant(0.0)]).unwrap();
    assert_eq!(solver.component(0).state.coeffs[1], 0.0);
    solver.set_input(&model, 0, PolySegment::constant(1.0), 0.5).unwrap();
    let c = solver.component(0);
    assert_eq!(c.state.anchor, 0.5);
    assert!((c.state.coeffs[1] - 1.0).abs() < 1e-12);
    assert!(c.next_time > 0.5 && c.next_time.is_finite());
}

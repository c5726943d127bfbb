//! Independent oracles and helpers for the integration suites. Everything
//! here deliberately avoids the implementation paths it checks: the RK4
//! integrator drives the same derivative function without quantization, and
//! the load-flow oracle is a polar Newton-Raphson solve built from the bus
//! admittance matrix.

use nalgebra::{Complex, DMatrix, DVector};

use cosim_core::ode::OdeModel;
use cosim_core::powerflow::FeederNetwork;
use cosim_core::series::TimeSeries;

/// Fixed-step RK4 over an [`OdeModel`] with time-series inputs, sampling the
/// state every `sample_every` steps. Inputs are evaluated exactly like the
/// solver sees them (interpolated values of the same series).
pub fn rk4_trace(
    model: &dyn OdeModel,
    inputs: &[TimeSeries],
    dt: f64,
    t_end: f64,
    sample_every: usize,
) -> Vec<(f64, Vec<f64>)> {
    let n = model.dim();
    let mut x = model.initial_state();
    let mut u = vec![0.0; inputs.len()];
    let mut samples = vec![(0.0, x.clone())];
    let steps = (t_end / dt).round() as usize;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let eval = |t: f64, x: &[f64], u: &mut Vec<f64>, out: &mut Vec<f64>| {
        for (uk, s) in u.iter_mut().zip(inputs) {
            *uk = s.value_at(t);
        }
        for j in 0..n {
            out[j] = model.derivative(j, x, u, t);
        }
    };
    for k in 0..steps {
        let t = k as f64 * dt;
        eval(t, &x, &mut u, &mut k1);
        for j in 0..n {
            xt[j] = x[j] + 0.5 * dt * k1[j];
        }
        eval(t + 0.5 * dt, &xt, &mut u, &mut k2);
        for j in 0..n {
            xt[j] = x[j] + 0.5 * dt * k2[j];
        }
        eval(t + 0.5 * dt, &xt, &mut u, &mut k3);
        for j in 0..n {
            xt[j] = x[j] + dt * k3[j];
        }
        eval(t + dt, &xt, &mut u, &mut k4);
        for j in 0..n {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if (k + 1) % sample_every == 0 {
            samples.push(((k + 1) as f64 * dt, x.clone()));
        }
    }
    samples
}

/// Exact zero-order-hold propagation of `dx = A x + B v` with `v` held
/// constant over each step: `x' = E x + F v`, `E = exp(A h)`,
/// `F = A^{-1}(E - I)B`.
pub struct ZohStepper {
    e: DMatrix<f64>,
    f: DMatrix<f64>,
}

impl ZohStepper {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, h: f64) -> Self {
        let n = a.nrows();
        let e = (a * h).exp();
        let f = a
            .clone()
            .lu()
            .solve(&(&e - DMatrix::<f64>::identity(n, n)))
            .expect("A invertible (stable)")
            * b;
        ZohStepper { e, f }
    }

    pub fn step(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.e * x + &self.f * v
    }
}

/// Bus admittance matrix in per unit.
pub fn ybus(net: &FeederNetwork) -> DMatrix<Complex<f64>> {
    let n = net.buses.len();
    let mut ybus = DMatrix::<Complex<f64>>::zeros(n, n);
    for br in &net.branches {
        let from = net.bus_index(&br.from).unwrap();
        let to = net.bus_index(&br.to).unwrap();
        let kv = net.buses[to].kv;
        let z_base = kv * kv * 1000.0 / net.s_base_kva;
        let z = Complex::new(br.r_ohm / z_base, br.x_ohm / z_base);
        let y = Complex::new(1.0, 0.0) / z;
        ybus[(from, from)] += y;
        ybus[(to, to)] += y;
        ybus[(from, to)] -= y;
        ybus[(to, from)] -= y;
    }
    ybus
}

/// Polar Newton-Raphson load flow on the bus admittance matrix. Injections
/// are load-positive kW/kvar, matching the sweep's convention. Returns the
/// complex bus voltages.
pub fn newton_raphson(
    net: &FeederNetwork,
    injections: &[(f64, f64)],
    tol: f64,
) -> Vec<Complex<f64>> {
    let n = net.buses.len();
    let slack = net.slack_index();
    let ybus = ybus(net);
    // Scheduled injections in pu, generator convention (negative of load).
    let p_sched: Vec<f64> = injections.iter().map(|i| -i.0 / net.s_base_kva).collect();
    let q_sched: Vec<f64> = injections.iter().map(|i| -i.1 / net.s_base_kva).collect();

    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut vm: Vec<f64> = vec![net.slack_v_pu; n];
    let mut va = vec![0.0_f64; n];

    for _iter in 0..60 {
        // Computed injections.
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for k in 0..n {
                let y = ybus[(i, k)];
                let theta = va[i] - va[k];
                p[i] += vm[i] * vm[k] * (y.re * theta.cos() + y.im * theta.sin());
                q[i] += vm[i] * vm[k] * (y.re * theta.sin() - y.im * theta.cos());
            }
        }
        let mut mismatch = DVector::zeros(2 * m);
        for (r, &i) in pq.iter().enumerate() {
            mismatch[r] = p_sched[i] - p[i];
            mismatch[m + r] = q_sched[i] - q[i];
        }
        if mismatch.amax() < tol {
            break;
        }
        // Full Jacobian in polar form.
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                let y = ybus[(i, k)];
                if i == k {
                    jac[(r, c)] = -q[i] - y.im * vm[i] * vm[i];
                    jac[(r, m + c)] = p[i] / vm[i] + y.re * vm[i];
                    jac[(m + r, c)] = p[i] - y.re * vm[i] * vm[i];
                    jac[(m + r, m + c)] = q[i] / vm[i] - y.im * vm[i];
                } else {
                    let theta = va[i] - va[k];
                    let (s, co) = (theta.sin(), theta.cos());
                    jac[(r, c)] = vm[i] * vm[k] * (y.re * s - y.im * co);
                    jac[(r, m + c)] = vm[i] * (y.re * co + y.im * s);
                    jac[(m + r, c)] = -vm[i] * vm[k] * (y.re * co + y.im * s);
                    jac[(m + r, m + c)] = vm[i] * (y.re * s - y.im * co);
                }
            }
        }
        let dx = jac.lu().solve(&mismatch).expect("Jacobian invertible");
        for (r, &i) in pq.iter().enumerate() {
            va[i] += dx[r];
            vm[i] += dx[m + r];
        }
    }
    (0..n).map(|i| Complex::from_polar(vm[i], va[i])).collect()
}

/// Series losses (kW, kvar) from complex bus voltages.
pub fn losses_from_voltages(net: &FeederNetwork, v: &[Complex<f64>]) -> (f64, f64) {
    let mut s_loss = Complex::new(0.0, 0.0);
    for br in &net.branches {
        let from = net.bus_index(&br.from).unwrap();
        let to = net.bus_index(&br.to).unwrap();
        let kv = net.buses[to].kv;
        let z_base = kv * kv * 1000.0 / net.s_base_kva;
        let z = Complex::new(br.r_ohm / z_base, br.x_ohm / z_base);
        let i = (v[from] - v[to]) / z;
        s_loss += i * i.conj() * z;
    }
    (s_loss.re * net.s_base_kva, s_loss.im * net.s_base_kva)
}

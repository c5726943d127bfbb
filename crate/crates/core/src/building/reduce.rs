//! Balanced-truncation model-order reduction.
//!
//! Square-root algorithm: factor both Gramians, SVD the cross product,
//! keep the `r` directions with the largest Hankel singular values. The
//! truncated model matches the full model's transfer function within the
//! usual bound `2·Σ_{i>r} σ_i`, which also bounds the DC-gain error per
//! channel.

use nalgebra::{DMatrix, SVD};

use crate::error::SimError;

use super::lyapunov::solve_lyapunov;

#[derive(Clone, Debug)]
pub struct Reduction {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Right transformation: `x ≈ T x_r`.
    pub t: DMatrix<f64>,
    /// Left transformation: `x_r = L x` (projects initial conditions).
    pub l: DMatrix<f64>,
    /// All Hankel singular values of the balanced realization, descending.
    pub hankel: Vec<f64>,
    /// `2·Σ_{i>r} σ_i`.
    pub truncation_bound: f64,
}

/// Stability check with a bounded Schur iteration; a decomposition that
/// fails to converge counts as not certified rather than spinning.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    match a.clone().try_schur(1e-12, 200_000) {
        Some(schur) => schur.complex_eigenvalues().iter().all(|l| l.re < 0.0),
        None => false,
    }
}

/// Symmetric PSD square-root factor `S` with `S Sᵀ = M` (eigen-based, tiny
/// negative eigenvalues clipped).
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = m.nrows();
    let mut s = eig.eigenvectors.clone();
    for j in 0..n {
        let lam = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            s[(i, j)] *= lam;
        }
    }
    s
}

/// Reduce `(a, b, c)` to order `r` by balanced truncation.
pub fn balanced_truncation(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: usize,
) -> Result<Reduction, SimError> {
    let n = a.nrows();
    if r == 0 || r >= n {
        return Err(SimError::Module {
            module: String::new(),
            msg: format!("reduction order must satisfy 0 < r < n (r={r}, n={n})"),
        });
    }
    if !is_hurwitz(a) {
        return Err(SimError::Module {
            module: String::new(),
            msg: "balanced truncation requires a stable A".into(),
        });
    }
    let wc = solve_lyapunov(a, &(b * b.transpose()))?;
    let wo = solve_lyapunov(&a.transpose(), &(c.transpose() * c))?;

    let s = psd_factor(&wc); // Wc = S Sᵀ
    let rf = psd_factor(&wo); // Wo = R Rᵀ
    let svd = SVD::new(rf.transpose() * &s, true, true);
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let hankel: Vec<f64> = svd.singular_values.iter().copied().collect();

    if hankel[r - 1] <= 1e-13 * hankel[0].max(f64::MIN_POSITIVE) {
        return Err(SimError::Module {
            module: String::new(),
            msg: format!(
                "requested order {r} exceeds the numerical rank (sigma_{r} = {:.3e})",
                hankel[r - 1]
            ),
        });
    }

    // T = S V Σ^{-1/2}, L = Σ^{-1/2} Uᵀ Rᵀ; then L A T is balanced.
    let mut t = &s * vt.transpose().columns(0, r).clone_owned();
    let mut l = u.columns(0, r).transpose().clone_owned() * rf.transpose();
    for k in 0..r {
        let scale = hankel[k].sqrt();
        for i in 0..n {
            t[(i, k)] /= scale;
            l[(k, i)] /= scale;
        }
    }

    let a_r = &l * a * &t;
    let b_r = &l * b;
    let c_r = c * &t;
    let truncation_bound = 2.0 * hankel[r..].iter().sum::<f64>();
    Ok(Reduction { a: a_r, b: b_r, c: c_r, t, l, hankel, truncation_bound })
}

/// DC gain matrix `-C A⁻¹ B` (the steady-state output per unit input).
pub fn dc_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>, SimError> {
    let x = a.clone().lu().solve(b).ok_or_else(|| SimError::Module {
        module: String::new(),
        msg: "singular A in DC gain".into(),
    })?;
    Ok(-(c * x))
}

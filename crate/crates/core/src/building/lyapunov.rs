//! Continuous Lyapunov solver, Bartels–Stewart style: reduce `A` to real
//! Schur form, back-substitute over the quasi-triangular blocks, transform
//! back. Sized for the dense building models handled here (n up to a few
//! hundred).

use nalgebra::DMatrix;

use crate::error::SimError;

const RESIDUAL_TOL: f64 = 1e-10;

/// Solve `A X + X Aᵀ + Q = 0` for symmetric `Q` and stable `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, SimError> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(q.shape(), (n, n));
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let schur = a.clone().try_schur(1e-12, 10_000).ok_or_else(|| SimError::Module {
        module: String::new(),
        msg: "Schur decomposition did not converge".into(),
    })?;
    let (u, t) = schur.unpack();
    let q_t = u.transpose() * q * &u;
    let y = solve_quasi_triangular(&t, &q_t)?;
    let x = &u * y * u.transpose();
    // Symmetrize (the exact solution is symmetric; back-substitution is not).
    let x = (&x + x.transpose()) * 0.5;

    let residual = a * &x + &x * a.transpose() + q;
    let scale = (2.0 * a.norm() * x.norm() + q.norm()).max(1.0);
    if residual.norm() > RESIDUAL_TOL * scale {
        return Err(SimError::Module {
            module: String::new(),
            msg: format!(
                "Lyapunov residual {:.3e} exceeds tolerance (scale {:.3e})",
                residual.norm(),
                scale
            ),
        });
    }
    Ok(x)
}

/// Solve `T Y + Y Tᵀ + C = 0` with `T` upper quasi-triangular, by block
/// back-substitution over the 1x1/2x2 diagonal blocks.
fn solve_quasi_triangular(t: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>, SimError> {
    let n = t.nrows();
    // Diagonal block boundaries.
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && t[(i + 1, i)] != 0.0 { 2 } else { 1 };
        blocks.push((i, size));
        i += size;
    }
    let nb = blocks.len();
    let mut y = DMatrix::zeros(n, n);

    // Y_{ij} depends on Y_{kj} for k > i and Y_{il} for l > j, so walk both
    // block indices downward.
    for bi in (0..nb).rev() {
        let (i0, si) = blocks[bi];
        for bj in (0..nb).rev() {
            let (j0, sj) = blocks[bj];
            // RHS = -C_{ij} - sum_{k>i} T_{ik} Y_{kj} - sum_{l>j} Y_{il} T_{jl}ᵀ
            let mut rhs = -c.view((i0, j0), (si, sj)).clone_owned();
            if i0 + si < n {
                let t_ik = t.view((i0, i0 + si), (si, n - i0 - si));
                let y_kj = y.view((i0 + si, j0), (n - i0 - si, sj));
                rhs -= t_ik * y_kj;
            }
            if j0 + sj < n {
                let y_il = y.view((i0, j0 + sj), (si, n - j0 - sj));
                let t_jl = t.view((j0, j0 + sj), (sj, n - j0 - sj));
                rhs -= y_il * t_jl.transpose();
            }
            // T_{ii} Y_{ij} + Y_{ij} T_{jj}ᵀ = RHS, via the small Kronecker
            // system (I ⊗ T_ii + T_jj ⊗ I) vec(Y_ij) = vec(RHS).
            let t_ii = t.view((i0, i0), (si, si));
            let t_jj = t.view((j0, j0), (sj, sj));
            let m = si * sj;
            let mut k = DMatrix::zeros(m, m);
            for col in 0..sj {
                for row in 0..si {
                    let r = col * si + row;
                    for col2 in 0..sj {
                        for row2 in 0..si {
                            let cidx = col2 * si + row2;
                            let mut v = 0.0;
                            if col == col2 {
                                v += t_ii[(row, row2)];
                            }
                            if row == row2 {
                                v += t_jj[(col, col2)];
                            }
                            k[(r, cidx)] += v;
                        }
                    }
                }
            }
            let rhs_vec =
                nalgebra::DVector::from_iterator(m, (0..sj).flat_map(|cc| (0..si).map(move |rr| (rr, cc))).map(|(rr, cc)| rhs[(rr, cc)]));
            let sol = k.lu().solve(&rhs_vec).ok_or_else(|| SimError::Module {
                module: String::new(),
                msg: "singular block in Lyapunov back-substitution (A may share mirrored eigenvalues)"
                    .into(),
            })?;
            for cc in 0..sj {
                for rr in 0..si {
                    y[(i0 + rr, j0 + cc)] = sol[cc * si + rr];
                }
            }
        }
    }
    Ok(y)
}

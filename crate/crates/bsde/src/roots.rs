//! Root finding used by the solver, recovery and static extension.
//!
//! Scalar equations are solved by bracket expansion plus bisection, which
//! only needs continuity and a sign change and so copes with the piecewise
//! maps that min/max style drivers produce. Vector equations use damped
//! Newton with a forward-difference Jacobian; all systems in this crate are
//! tiny (K x K with K the value dimension), so the dense LU from nalgebra is
//! plenty.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Residual magnitude accepted as "solved".
pub(crate) const RESIDUAL_TOL: f64 = 1e-10;
/// Bisection drives the residual to this when it can.
const BISECT_RESIDUAL_TARGET: f64 = 1e-12;
/// Bracket half-widths are doubled up to this factor before giving up.
const MAX_BRACKET_FACTOR: f64 = (1u64 << 40) as f64;
const NEWTON_FD_STEP: f64 = 1e-7;
const NEWTON_MAX_ITERS: usize = 100;

#[derive(Clone, Copy, Debug, Default)]
pub struct RootDiagnostics {
    pub iterations: usize,
    pub residual: f64,
}

/// Finds x with f(x) = 0 near `center`, assuming f is continuous and crosses
/// zero. Expands a bracket around `center` by doubling until a sign change
/// appears, then bisects.
pub(crate) fn bisect_from(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    center: f64,
    initial_radius: f64,
) -> Result<(f64, RootDiagnostics)> {
    let mut evals = 0usize;
    let mut call = |x: f64, evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let v = f(x)?;
        if !v.is_finite() {
            return Err(Error::RootFindDivergence(format!(
                "objective returned a non-finite value at x = {x}"
            )));
        }
        Ok(v)
    };

    let fc = call(center, &mut evals)?;
    if fc.abs() <= BISECT_RESIDUAL_TARGET {
        return Ok((
            center,
            RootDiagnostics {
                iterations: evals,
                residual: fc.abs(),
            },
        ));
    }

    let mut radius = initial_radius.max(f64::EPSILON);
    let (mut lo, mut hi, mut flo) = loop {
        let lo = center - radius;
        let hi = center + radius;
        let flo = call(lo, &mut evals)?;
        if flo == 0.0 {
            return Ok((
                lo,
                RootDiagnostics {
                    iterations: evals,
                    residual: 0.0,
                },
            ));
        }
        let fhi = call(hi, &mut evals)?;
        if fhi == 0.0 {
            return Ok((
                hi,
                RootDiagnostics {
                    iterations: evals,
                    residual: 0.0,
                },
            ));
        }
        if flo.signum() != fhi.signum() {
            break (lo, hi, flo);
        }
        radius *= 2.0;
        if radius > initial_radius.max(1.0) * MAX_BRACKET_FACTOR {
            return Err(Error::RootFindDivergence(format!(
                "no sign change within radius {radius:.3e} of {center:.6e}"
            )));
        }
    };

    let mut best = (center, fc.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = call(mid, &mut evals)?;
        if fmid.abs() < best.1 {
            best = (mid, fmid.abs());
        }
        if fmid.abs() <= BISECT_RESIDUAL_TARGET {
            return Ok((
                mid,
                RootDiagnostics {
                    iterations: evals,
                    residual: fmid.abs(),
                },
            ));
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }

    Ok((
        best.0,
        RootDiagnostics {
            iterations: evals,
            residual: best.1,
        },
    ))
}

/// Solves the vector system f(x) = 0 by damped Newton iteration with a
/// forward-difference Jacobian. The damping halves on residual increase.
pub(crate) fn newton_damped(
    f: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    x0: &[f64],
) -> Result<(Vec<f64>, RootDiagnostics)> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x)?;
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
    let mut res = inf(&fx);

    for iter in 0..NEWTON_MAX_ITERS {
        if !res.is_finite() {
            return Err(Error::RootFindDivergence(
                "newton iterate produced a non-finite residual".into(),
            ));
        }
        if res <= BISECT_RESIDUAL_TARGET {
            return Ok((
                x,
                RootDiagnostics {
                    iterations: iter,
                    residual: res,
                },
            ));
        }

        // Forward-difference Jacobian, column by column.
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = NEWTON_FD_STEP * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let fp = f(&xp)?;
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fx[i]) / h;
            }
        }

        let rhs = DVector::from_iterator(n, fx.iter().map(|v| -v));
        let step = jac.lu().solve(&rhs).ok_or_else(|| {
            Error::RootFindDivergence("singular jacobian in newton iteration".into())
        })?;

        let mut damping = 1.0;
        loop {
            let cand: Vec<f64> = x
                .iter()
                .zip(step.iter())
                .map(|(xi, si)| xi + damping * si)
                .collect();
            let fc = f(&cand)?;
            let rc = inf(&fc);
            if rc.is_finite() && rc < res {
                x = cand;
                fx = fc;
                res = rc;
                break;
            }
            damping *= 0.5;
            if damping < 2.0_f64.powi(-30) {
                return Err(Error::RootFindDivergence(format!(
                    "newton stalled at residual {res:.3e}"
                )));
            }
        }
    }

    if res <= RESIDUAL_TOL {
        Ok((
            x,
            RootDiagnostics {
                iterations: NEWTON_MAX_ITERS,
                residual: res,
            },
        ))
    } else {
        Err(Error::RootFindDivergence(format!(
            "newton exhausted {NEWTON_MAX_ITERS} iterations at residual {res:.3e}"
        )))
    }
}

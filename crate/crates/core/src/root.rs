//! Bracketed scalar root finding: secant steps safeguarded by bisection.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootError {
    /// f(lo) and f(hi) have the same sign.
    NotBracketed { f_lo: f64, f_hi: f64 },
    /// Iteration cap reached; carries the best point found.
    MaxIterations(Root),
}

/// Finds x in [lo, hi] with |f(x)| <= f_tol, or an interval narrower than x_tol.
///
/// Requires f(lo) and f(hi) of opposite sign (or one of them already within
/// `f_tol`). Each iteration tries the secant through the bracket ends, with the
/// Illinois down-weighting of a stagnant end; if the secant point falls outside
/// the bracket or the bracket does not shrink by half every two iterations, the
/// step is replaced by bisection.
pub fn bracketed_secant<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    f_tol: f64,
    x_tol: f64,
    max_iter: usize,
) -> Result<Root, RootError>
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    if f_lo.abs() <= f_tol {
        return Ok(Root {
            x: lo,
            fx: f_lo,
            iterations: 0,
        });
    }
    let mut f_hi = f(hi);
    if f_hi.abs() <= f_tol {
        return Ok(Root {
            x: hi,
            fx: f_hi,
            iterations: 0,
        });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(RootError::NotBracketed { f_lo, f_hi });
    }

    let mut best = if f_lo.abs() < f_hi.abs() {
        Root { x: lo, fx: f_lo, iterations: 0 }
    } else {
        Root { x: hi, fx: f_hi, iterations: 0 }
    };
    // unweighted residuals at the bracket ends
    let (mut raw_lo, mut raw_hi) = (f_lo, f_hi);
    // which end was replaced last: -1 lo, +1 hi
    let mut side = 0i8;
    let mut width_two_ago = f64::INFINITY;
    let mut width_prev = f64::INFINITY;

    for iter in 1..=max_iter {
        let width = (hi - lo).abs();
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let inside = x.is_finite() && x > lo.min(hi) && x < lo.max(hi);
        if !inside || width > 0.5 * width_two_ago {
            x = 0.5 * (lo + hi);
            side = 0;
        }
        width_two_ago = width_prev;
        width_prev = width;

        let fx = f(x);
        if fx.abs() < best.fx.abs() {
            best = Root { x, fx, iterations: iter };
        }
        if fx.abs() <= f_tol {
            return Ok(Root { x, fx, iterations: iter });
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
            raw_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            raw_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if (hi - lo).abs() <= x_tol {
            let (x, fx) = if raw_lo.abs() <= raw_hi.abs() { (lo, raw_lo) } else { (hi, raw_hi) };
            return Ok(Root { x, fx, iterations: iter });
        }
    }
    best.iterations = max_iter;
    Err(RootError::MaxIterations(best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bracketed_secant(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 0.0, 100).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-13);
        assert!(r.iterations < 20);
    }

    #[test]
    fn reversed_bracket_and_decreasing_function() {
        let r = bracketed_secant(|x| 3.0 - x, 10.0, -5.0, 1e-12, 0.0, 100).unwrap();
        assert!((r.x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbracketed() {
        let e = bracketed_secant(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 0.0, 100).unwrap_err();
        assert!(matches!(e, RootError::NotBracketed { .. }));
    }

    #[test]
    fn steep_exponential_converges() {
        let r = bracketed_secant(|x| (50.0 * x).exp() - 2.0, -1.0, 1.0, 1e-12, 0.0, 200).unwrap();
        assert!((r.x - 2f64.ln() / 50.0).abs() < 1e-12);
    }

    #[test]
    fn x_tolerance_stops_on_step_function() {
        let r = bracketed_secant(|x| if x < 0.3 { -1.0 } else { 1.0 }, 0.0, 1.0, 1e-12, 1e-10, 200)
            .unwrap();
        assert!((r.x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_reports_best() {
        let e = bracketed_secant(|x| x * x * x - 0.3, 0.0, 1.0, 0.0, 0.0, 2).unwrap_err();
        match e {
            RootError::MaxIterations(best) => assert!(best.fx.abs() < 0.3),
            _ => panic!("expected MaxIterations"),
        }
    }
}

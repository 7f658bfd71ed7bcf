//! Adaptive Simpson quadrature used by the emission integrals.

/// Result of an adaptive integration: value plus a flag for intervals that
/// hit the recursion floor before meeting the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub converged: bool,
}

/// Adaptive Simpson on [a, b] with absolute tolerance `tol`. `max_depth`
/// bounds the bisection recursion.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> QuadResult {
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> QuadResult {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || (b - a) < 1e-14 {
        return QuadResult {
            value: left + right + err / 15.0,
            converged: true,
        };
    }
    if depth == 0 {
        return QuadResult {
            value: left + right + err / 15.0,
            converged: false,
        };
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    QuadResult {
        value: l.value + r.value,
        converged: l.converged && r.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomials_exactly() {
        let q = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12, 30);
        assert!(q.converged);
        assert_relative_eq!(q.value, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn handles_narrow_lorentzian() {
        let gamma = 1e-4;
        let f = |x: f64| gamma / ((x - 0.5).powi(2) + gamma * gamma);
        let q = adaptive_simpson(&f, 0.0, 1.0, 1e-10, 48);
        assert!(q.converged);
        // integral of a Lorentzian over the full line is pi; the tails
        // outside [0,1] contribute ~2*gamma
        assert_relative_eq!(q.value, std::f64::consts::PI, epsilon = 1e-3);
    }
}

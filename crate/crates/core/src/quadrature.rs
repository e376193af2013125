//! Adaptive Simpson quadrature for the closed-form comparison integrals.

/// `∫_a^b f`, absolute tolerance `tol`. Integrands with an integrable log singularity at
/// `a` should be passed through [`integrate_from_singular`].
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let c = 0.5 * (a + b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson(f, a, b, fa, fc, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fc: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, c, fa, fd, fc, left, 0.5 * tol, depth - 1) + simpson(f, c, b, fc, fe, fb, right, 0.5 * tol, depth - 1)
}

/// `∫_0^t f` via `s = t w²`, which tames `log s` behaviour at the origin.
pub fn integrate_from_singular(f: &dyn Fn(f64) -> f64, t: f64, tol: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let g = |w: f64| {
        if w == 0.0 {
            0.0
        } else {
            f(t * w * w) * 2.0 * t * w
        }
    };
    integrate(&g, 0.0, 1.0, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_integral() {
        // ∫_0^1 log(3s) ds = log 3 - 1.
        let v = integrate_from_singular(&|s: f64| (3.0 * s).ln(), 1.0, 1e-13);
        assert!((v - (3.0_f64.ln() - 1.0)).abs() < 1e-10, "{v}");
    }

    #[test]
    fn smooth_integral() {
        let v = integrate(&|x: f64| x.exp(), 0.0, 2.0, 1e-13);
        assert!((v - (2.0_f64.exp() - 1.0)).abs() < 1e-11);
    }
}

//! Bracketed root finding and one-dimensional maximization.

use crate::error::{Error, Result};

/// Safeguarded Newton iteration for an increasing or decreasing `f` on `[lo, hi]`.
///
/// `f` returns `(value, derivative)`. Steps leaving the current bracket are
/// replaced by bisection, so convergence only needs a sign change.
pub fn newton_bracketed<F: FnMut(f64) -> (f64, f64)>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    x0: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Ok((lo, 0));
    }
    if fhi == 0.0 {
        return Ok((hi, 0));
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NonConvergence {
            method: "newton-bracketed",
            iterations: 0,
            detail: format!("no sign change on [{lo}, {hi}]: f = ({flo}, {fhi})"),
        });
    }
    let increasing = fhi > 0.0;
    let mut x = if x0 > lo && x0 < hi {
        x0
    } else {
        0.5 * (lo + hi)
    };
    for it in 1..=max_iter {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok((x, it));
        }
        if (fx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx.is_finite() && dfx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= xtol * x.abs().max(f64::MIN_POSITIVE) || hi - lo <= xtol * hi.abs() {
            return Ok((x, it));
        }
    }
    Err(Error::NonConvergence {
        method: "newton-bracketed",
        iterations: max_iter,
        detail: format!("bracket [{lo}, {hi}] after {max_iter} steps"),
    })
}

/// Brent's method on a sign-changing bracket.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NonConvergence {
            method: "brent",
            iterations: 0,
            detail: format!("no sign change on [{a}, {b}]"),
        });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::NonConvergence {
        method: "brent",
        iterations: max_iter,
        detail: format!("last iterate {b}"),
    })
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (a, b);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > xtol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximize on `[a, b]` by a uniform scan of `samples` points followed by
/// golden-section refinement around the best sample. Endpoints are always scanned.
pub fn scan_max<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    samples: usize,
    xtol: f64,
) -> (f64, f64) {
    let n = samples.max(3);
    let h = (b - a) / (n - 1) as f64;
    let mut best = (a, f(a));
    for i in 1..n {
        let x = if i == n - 1 { b } else { a + h * i as f64 };
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let lo = (best.0 - h).max(a);
    let hi = (best.0 + h).min(b);
    let refined = golden_max(&mut f, lo, hi, xtol);
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_finds_cubic_root() {
        let (x, _) = newton_bracketed(
            |x| (x * x * x - 2.0, 3.0 * x * x),
            0.0,
            2.0,
            1.0,
            1e-15,
            100,
        )
        .unwrap();
        assert!((x - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn newton_survives_flat_derivative() {
        // Derivative vanishes at the initial guess; bisection takes over.
        let (x, _) = newton_bracketed(
            |x| ((x - 1.0).powi(3), 3.0 * (x - 1.0).powi(2)),
            0.0,
            3.0,
            1.5,
            1e-12,
            500,
        )
        .unwrap();
        assert!((x - 1.0).abs() < 1e-4);
    }

    #[test]
    fn brent_matches_known_root() {
        let x = brent(|x| x.cos() - x, 0.0, 1.0, 1e-15, 100).unwrap();
        assert!((x - 0.739_085_133_215_160_6).abs() < 1e-14);
    }

    #[test]
    fn brent_rejects_missing_bracket() {
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 50).is_err());
    }

    #[test]
    fn scan_max_finds_interior_and_endpoint_maxima() {
        let (x, v) = scan_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 11, 1e-10);
        assert!((x - 0.3).abs() < 1e-6 && v.abs() < 1e-12);
        let (x, _) = scan_max(|x| x, 0.0, 1.0, 5, 1e-10);
        assert_eq!(x, 1.0);
    }
}

//! Finite-difference operators used as oracles and for data derivatives.

/// Step used for first derivatives of smooth scalar functions: max(1e−8, 1e−5·|x|).
pub fn default_step(x: f64) -> f64 {
    (1e-5 * x.abs()).max(1e-8)
}

pub fn central<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Richardson-extrapolated central difference, O(h⁴).
pub fn richardson<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let d1 = central(&mut f, x, h);
    let d2 = central(&mut f, x, 0.5 * h);
    (4.0 * d2 - d1) / 3.0
}

/// Richardson-extrapolated second derivative, O(h⁴).
pub fn richardson_second<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let f0 = f(x);
    let mut second = |h: f64| (f(x + h) - 2.0 * f0 + f(x - h)) / (h * h);
    let d1 = second(h);
    let d2 = second(0.5 * h);
    (4.0 * d2 - d1) / 3.0
}

/// Richardson-extrapolated mixed partial ∂²f/∂x∂y.
pub fn richardson_mixed<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    x: f64,
    y: f64,
    hx: f64,
    hy: f64,
) -> f64 {
    let mut mixed = |s: f64| {
        let (a, b) = (s * hx, s * hy);
        (f(x + a, y + b) - f(x + a, y - b) - f(x - a, y + b) + f(x - a, y - b)) / (4.0 * a * b)
    };
    let d1 = mixed(1.0);
    let d2 = mixed(0.5);
    (4.0 * d2 - d1) / 3.0
}

/// Fourth-order first derivative of uniformly sampled data. One-sided
/// fourth-order stencils are used within two points of either end.
pub fn first_derivative_4(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 5, "need at least five samples");
    let v = values;
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * dx)
            } else if i < 2 {
                let j = i;
                let s = &v[0..5];
                // Derivative at node j of the quartic through the first five samples.
                lagrange5_derivative(s, j) / dx
            } else {
                let j = i - (n - 5);
                lagrange5_derivative(&v[n - 5..n], j) / dx
            }
        })
        .collect()
}

/// Fourth-order second derivative of uniformly sampled data.
pub fn second_derivative_4(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 6, "need at least six samples");
    let v = values;
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (-v[i - 2] + 16.0 * v[i - 1] - 30.0 * v[i] + 16.0 * v[i + 1] - v[i + 2])
                    / (12.0 * dx * dx)
            } else if i < 2 {
                lagrange6_second(&v[0..6], i) / (dx * dx)
            } else {
                lagrange6_second(&v[n - 6..n], i - (n - 6)) / (dx * dx)
            }
        })
        .collect()
}

/// Periodic fourth-order first derivative (samples cover one period).
pub fn first_derivative_4_periodic(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 5, "need at least five samples");
    let v = |i: isize| values[i.rem_euclid(n as isize) as usize];
    (0..n as isize)
        .map(|i| (v(i - 2) - 8.0 * v(i - 1) + 8.0 * v(i + 1) - v(i + 2)) / (12.0 * dx))
        .collect()
}

pub fn second_derivative_4_periodic(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 5, "need at least five samples");
    let v = |i: isize| values[i.rem_euclid(n as isize) as usize];
    (0..n as isize)
        .map(|i| {
            (-v(i - 2) + 16.0 * v(i - 1) - 30.0 * v(i) + 16.0 * v(i + 1) - v(i + 2))
                / (12.0 * dx * dx)
        })
        .collect()
}

// Weights of d/dx at node j for the interpolant through nodes 0..5 (unit spacing).
fn lagrange5_derivative(s: &[f64], j: usize) -> f64 {
    const W: [[f64; 5]; 5] = [
        [-25.0, 48.0, -36.0, 16.0, -3.0],
        [-3.0, -10.0, 18.0, -6.0, 1.0],
        [1.0, -8.0, 0.0, 8.0, -1.0],
        [-1.0, 6.0, -18.0, 10.0, 3.0],
        [3.0, -16.0, 36.0, -48.0, 25.0],
    ];
    W[j].iter().zip(s).map(|(w, v)| w * v).sum::<f64>() / 12.0
}

fn lagrange6_second(s: &[f64], j: usize) -> f64 {
    const W: [[f64; 6]; 6] = [
        [45.0, -154.0, 214.0, -156.0, 61.0, -10.0],
        [10.0, -15.0, -4.0, 14.0, -6.0, 1.0],
        [-1.0, 16.0, -30.0, 16.0, -1.0, 0.0],
        [0.0, -1.0, 16.0, -30.0, 16.0, -1.0],
        [1.0, -6.0, 14.0, -4.0, -15.0, 10.0],
        [-10.0, 61.0, -156.0, 214.0, -154.0, 45.0],
    ];
    W[j].iter().zip(s).map(|(w, v)| w * v).sum::<f64>() / 12.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_is_fourth_order() {
        let d = richardson(f64::exp, 0.5, 1e-2);
        assert!((d - 0.5f64.exp()).abs() < 1e-10);
        let d2 = richardson_second(f64::sin, 0.7, 1e-2);
        assert!((d2 + 0.7f64.sin()).abs() < 1e-9);
        let dm = richardson_mixed(|x, y| (x * y).sin(), 0.3, 0.4, 1e-2, 1e-2);
        let exact = (0.12f64).cos() - 0.12 * (0.12f64).sin();
        assert!((dm - exact).abs() < 1e-9);
    }

    #[test]
    fn sampled_derivatives_exact_on_quartics() {
        let dx = 0.1;
        let xs: Vec<f64> = (0..12).map(|i| i as f64 * dx).collect();
        let f: Vec<f64> = xs.iter().map(|x| x.powi(4) - x.powi(3) + 2.0 * x).collect();
        let d = first_derivative_4(&f, dx);
        for (x, di) in xs.iter().zip(&d) {
            assert!(
                (di - (4.0 * x.powi(3) - 3.0 * x * x + 2.0)).abs() < 1e-10,
                "{x}"
            );
        }
        let d2 = second_derivative_4(&f, dx);
        for (x, di) in xs.iter().zip(&d2) {
            assert!((di - (12.0 * x * x - 6.0 * x)).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn periodic_derivatives_of_a_sine() {
        let n = 64;
        let dx = 1.0 / n as f64;
        let tau = 2.0 * std::f64::consts::PI;
        let f: Vec<f64> = (0..n).map(|i| (tau * i as f64 * dx).sin()).collect();
        let d = first_derivative_4_periodic(&f, dx);
        let d2 = second_derivative_4_periodic(&f, dx);
        for i in 0..n {
            let x = tau * i as f64 * dx;
            assert!((d[i] - tau * x.cos()).abs() < 1e-4 * tau);
            assert!((d2[i] + tau * tau * x.sin()).abs() < 1e-4 * tau * tau);
        }
    }
}

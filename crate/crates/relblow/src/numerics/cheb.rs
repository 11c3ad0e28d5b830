//! Chebyshev interpolation on panels: spectral antiderivatives and Fejér weights.

use std::f64::consts::PI;

/// First-kind Chebyshev points on [−1, 1], in decreasing order.
pub fn nodes(k: usize) -> Vec<f64> {
    (0..k)
        .map(|j| (PI * (j as f64 + 0.5) / k as f64).cos())
        .collect()
}

/// Coefficients `a` with f ≈ Σ a_m T_m from values at [`nodes`].
pub fn coefficients(values: &[f64]) -> Vec<f64> {
    let k = values.len();
    let mut a = vec![0.0; k];
    for (m, am) in a.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, v) in values.iter().enumerate() {
            s += v * (PI * m as f64 * (j as f64 + 0.5) / k as f64).cos();
        }
        *am = 2.0 * s / k as f64;
    }
    a[0] *= 0.5;
    a
}

/// Coefficients of the antiderivative on [−1, 1] that vanishes at −1,
/// scaled by `half_width` so it integrates in the panel's own variable.
pub fn antiderivative(a: &[f64], half_width: f64) -> Vec<f64> {
    let k = a.len();
    let get = |m: usize| if m < k { a[m] } else { 0.0 };
    let mut b = vec![0.0; k + 1];
    b[1] = get(0) - 0.5 * get(2);
    for (m, bm) in b.iter_mut().enumerate().skip(2) {
        *bm = (get(m - 1) - get(m + 1)) / (2.0 * m as f64);
    }
    let mut at_minus_one = 0.0;
    for (m, bm) in b.iter().enumerate().skip(1) {
        at_minus_one += if m % 2 == 0 { *bm } else { -*bm };
    }
    b[0] = -at_minus_one;
    b.iter_mut().for_each(|v| *v *= half_width);
    b
}

/// Evaluate Σ b_m T_m(x) by Clenshaw recurrence.
pub fn clenshaw(b: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in b.iter().skip(1).rev() {
        let t = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = t;
    }
    x * b1 - b2 + b[0]
}

/// Fejér first-rule weights for [`nodes`] on [−1, 1].
pub fn fejer_weights(k: usize) -> Vec<f64> {
    (0..k)
        .map(|j| {
            let theta = PI * (j as f64 + 0.5) / k as f64;
            let mut s = 0.0;
            for l in 1..=k / 2 {
                s += (2.0 * l as f64 * theta).cos() / (4.0 * (l * l) as f64 - 1.0);
            }
            2.0 / k as f64 * (1.0 - 2.0 * s)
        })
        .collect()
}

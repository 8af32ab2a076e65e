//! Bessel functions of the first kind for integer order.

/// Arguments up to this magnitude use the power series.
const SERIES_LIMIT: f64 = 1.0;

/// `J_n(x)` for any integer `n` and finite real `x`.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let order = n.unsigned_abs() as usize;
    // J_{-n} = (-1)^n J_n and J_n(-x) = (-1)^n J_n(x).
    let flips = (n < 0) as usize + (x < 0.0) as usize;
    let sign = if order % 2 == 1 && flips % 2 == 1 { -1.0 } else { 1.0 };
    let ax = x.abs();
    let v = if ax <= SERIES_LIMIT {
        series(order, ax)
    } else {
        miller(order, ax)
    };
    sign * v
}

/// `sum_k (-1)^k (x/2)^(2k+n) / (k! (n+k)!)`.
fn series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = -half * half;
    let mut sum = term;
    for k in 1..200 {
        term *= q / (k * (n + k)) as f64;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Downward recurrence from a high order, normalised with
/// `J_0 + 2 (J_2 + J_4 + ..) = 1`.
fn miller(n: usize, x: f64) -> f64 {
    let top = n.max(x.ceil() as usize);
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    start += start % 2;
    let (mut next, mut cur) = (0.0f64, 1e-30f64);
    let mut norm = 0.0;
    let mut wanted = 0.0;
    for k in (1..=start).rev() {
        // cur = J_k (unnormalised), next = J_{k+1}.
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // cur is now J_{k-1}.
        if k - 1 == n {
            wanted = cur;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            wanted *= 1e-250;
        }
    }
    norm += cur;
    wanted / norm
}

/// `|J_n(x)| <= (|x|/2)^n / n!` for `n >= 0`.
pub fn tail_term_bound(n: usize, x: f64) -> f64 {
    let half = 0.5 * x.abs();
    (1..=n).fold(1.0, |acc, k| acc * half / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Trapezoid rule on the periodic integrand of Bessel's integral, which
    /// converges geometrically.
    fn quadrature(n: i32, x: f64) -> f64 {
        let m = 4000;
        let h = 2.0 * PI / m as f64;
        let s: f64 = (0..m)
            .map(|i| {
                let t = i as f64 * h;
                (n as f64 * t - x * t.sin()).cos()
            })
            .sum();
        s * h / (2.0 * PI)
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0), 1.0);
        for n in 1..12 {
            assert_eq!(bessel_j(n, 0.0), 0.0);
        }
    }

    #[test]
    fn matches_quadrature() {
        for n in -12..=12 {
            for i in 0..80 {
                let x = -12.0 + 0.3 * i as f64 + 0.01;
                let (a, b) = (bessel_j(n, x), quadrature(n, x));
                assert!((a - b).abs() < 1e-12, "J_{n}({x}) = {a} vs {b}");
            }
        }
    }

    #[test]
    fn recurrence_holds() {
        for i in 0..50 {
            let x = 0.1 + 0.098 * i as f64;
            for n in 1..10 {
                let lhs = bessel_j(n + 1, x);
                let rhs = 2.0 * n as f64 / x * bessel_j(n, x) - bessel_j(n - 1, x);
                assert!((lhs - rhs).abs() < 1e-10, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn jacobi_anger_coefficients() {
        assert!((2.0 * bessel_j(1, 0.5) - 0.484_536_9).abs() < 1e-7);
        assert!((2.0 * bessel_j(3, 0.5) - 0.005_127_5).abs() < 1e-7);
    }

    #[test]
    fn tail_bound_dominates() {
        for n in 0..10usize {
            for x in [0.2, 0.5, 1.0, -2.0] {
                assert!(bessel_j(n as i32, x).abs() <= tail_term_bound(n, x) + 1e-16);
            }
        }
    }
}

//! Bessel and Hankel functions of integer order and real argument.
//!
//! Backed by `puruspe` and evaluated in `f64`; relative accuracy is about
//! 1e-15 for orders 0 and 1 over the arguments the solvers use.

use num_complex::Complex64;

/// `J_n(x)` for integer `n` (any sign) and `x > 0`.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let v = puruspe::Jn(n.unsigned_abs(), x);
    if n < 0 && n % 2 != 0 {
        -v
    } else {
        v
    }
}

/// `Y_n(x)` for integer `n` (any sign) and `x > 0`.
pub fn bessel_y(n: i32, x: f64) -> f64 {
    let v = puruspe::Yn(n.unsigned_abs(), x);
    if n < 0 && n % 2 != 0 {
        -v
    } else {
        v
    }
}

/// Hankel function of the first kind `H_n^(1)(x) = J_n(x) + i·Y_n(x)`, `x > 0`.
pub fn hankel1(n: i32, x: f64) -> Complex64 {
    Complex64::new(bessel_j(n, x), bessel_y(n, x))
}

/// `J_n'(x)` from the recurrence `J_n' = (J_{n-1} - J_{n+1}) / 2`.
pub fn bessel_j_prime(n: i32, x: f64) -> f64 {
    0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))
}

/// `H_n^(1)'(x)`.
pub fn hankel1_prime(n: i32, x: f64) -> Complex64 {
    0.5 * (hankel1(n - 1, x) - hankel1(n + 1, x))
}

/// Fundamental solution of the 2D Helmholtz equation, `Φ(r) = (i/4)·H_0^(1)(k·r)`, `r > 0`.
pub fn helmholtz_green(k: f64, r: f64) -> Complex64 {
    Complex64::new(0.0, 0.25) * hankel1(0, k * r)
}

/// Integral of `Φ` over the disk of radius `a` centred at the singularity:
/// `2π ∫_0^a (i/4) H_0^(1)(k r) r dr = (iπ a / 2k)·H_1^(1)(k a) − 1/k²`.
pub fn helmholtz_green_disk_integral(k: f64, a: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    i * std::f64::consts::FRAC_PI_2 * a / k * hankel1(1, k * a) - 1.0 / (k * k)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.special.
    const TABLE: &[(f64, f64, f64, f64, f64)] = &[
        // x, J0, Y0, J1, Y1
        (0.0375, 0.99964846839784105, -2.1631062602154665, 0.018746704294675891, -17.023062520995385),
        (1.0, 0.76519768655796649, 0.08825696421567697, 0.44005058574493355, -0.7812128213002888),
        (2.5, -0.048383776468198039, 0.49807035961523199, 0.49709410246427399, 0.14591813796678577),
        (10.0, -0.24593576445134832, 0.05567116728359961, 0.043472746168861411, 0.24901542420695388),
    ];

    #[test]
    fn matches_reference_table() {
        for &(x, j0, y0, j1, y1) in TABLE {
            let tol = 1e-13;
            assert!(((bessel_j(0, x) - j0) / j0).abs() < tol, "J0({x})");
            assert!(((bessel_y(0, x) - y0) / y0).abs() < tol, "Y0({x})");
            assert!(((bessel_j(1, x) - j1) / j1).abs() < tol, "J1({x})");
            assert!(((bessel_y(1, x) - y1) / y1).abs() < tol, "Y1({x})");
        }
    }

    #[test]
    fn wronskian_holds_for_many_orders() {
        // J_{n+1} Y_n − J_n Y_{n+1} = 2/(π x)
        for &x in &[0.3, 1.0, 1.414, 4.0, 15.0] {
            for n in 0..30 {
                let w = bessel_j(n + 1, x) * bessel_y(n, x) - bessel_j(n, x) * bessel_y(n + 1, x);
                let expect = 2.0 / (std::f64::consts::PI * x);
                assert!(((w - expect) / expect).abs() < 1e-10, "n={n}, x={x}, w={w}");
            }
        }
    }

    #[test]
    fn negative_orders_reflect() {
        assert_eq!(bessel_j(-3, 2.0), -bessel_j(3, 2.0));
        assert_eq!(bessel_y(-2, 2.0), bessel_y(2, 2.0));
    }

    #[test]
    fn disk_integral_matches_quadrature() {
        // Composite midpoint in r on the radial integral, singularity r·log r is integrable.
        let (k, a) = (1.3, 0.05);
        let m = 200_000;
        let dr = a / m as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..m {
            let r = (i as f64 + 0.5) * dr;
            acc += helmholtz_green(k, r) * r * dr;
        }
        acc *= 2.0 * std::f64::consts::PI;
        let closed = helmholtz_green_disk_integral(k, a);
        assert!((acc - closed).norm() / closed.norm() < 1e-8, "{acc} vs {closed}");
    }
}

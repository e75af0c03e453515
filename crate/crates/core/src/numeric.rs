//! Small compensated-arithmetic helpers.

use num_complex::Complex64;

/// Error-free product: `a * b = p + e` exactly.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Error-free sum: `a + b = s + e` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Dot product evaluated as if in twice the working precision.
pub fn dot2(xs: &[f64], ys: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let (p, ep) = two_prod(x, y);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    s + c
}

/// `a d - b c` for complex entries with compensated summation, so the result
/// carries only the rounding already present in the inputs.
pub fn det2(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let re = dot2(
        &[a.re, -a.im, -b.re, b.im],
        &[d.re, d.im, c.re, c.im],
    );
    let im = dot2(
        &[a.re, a.im, -b.re, -b.im],
        &[d.im, d.re, c.im, c.re],
    );
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot2_recovers_cancelled_terms() {
        let big = 1e8;
        let xs = [big, 1.0, -big];
        let ys = [big, 1e-8, big];
        assert_eq!(dot2(&xs, &ys), 1e-8);
    }

    #[test]
    fn det2_identity() {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        assert_eq!(det2(one, zero, zero, one), one);
    }
}

// Dense complex polynomials, coefficients in ascending order.

use num_complex::Complex64;

pub(crate) fn trim(mut c: Vec<Complex64>) -> Vec<Complex64> {
    while c.len() > 1 && c.last().map_or(false, |x| x.norm() == 0.0) {
        c.pop();
    }
    if c.is_empty() {
        c.push(Complex64::new(0.0, 0.0));
    }
    c
}

pub(crate) fn degree(c: &[Complex64]) -> usize {
    c.iter().rposition(|x| x.norm() != 0.0).unwrap_or(0)
}

/// Value and first derivative by Horner's rule.
pub(crate) fn eval_d(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

pub(crate) fn eval(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |p, &a| p * z + a)
}

pub(crate) fn mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub(crate) fn sub(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or_default() - b.get(i).copied().unwrap_or_default())
        .collect()
}

/// All complex roots by Aberth–Ehrlich iteration followed by Newton polishing.
pub(crate) fn roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let c = trim(coeffs.to_vec());
    let n = degree(&c);
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let monic: Vec<Complex64> = c[..=n].iter().map(|x| x / lead).collect();
    let radius = monic[..n]
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm() > 0.0)
        .map(|(k, a)| a.norm().powf(1.0 / (n - k) as f64))
        .fold(0.0_f64, f64::max)
        .max(1e-3);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, std::f64::consts::TAU * k as f64 / n as f64 + 0.4))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0_f64;
        for k in 0..n {
            let (p, dp) = eval_d(&monic, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let s: Complex64 = (0..n).filter(|&j| j != k).map(|j| (z[k] - z[j]).inv()).sum();
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            if w.is_finite() {
                z[k] -= w;
                moved = moved.max(w.norm() / (1.0 + z[k].norm()));
            }
        }
        if moved < 1e-16 {
            break;
        }
    }
    for r in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = eval_d(&monic, *r);
            let step = p / dp;
            if !step.is_finite() || step.norm() > 1e-6 * (1.0 + r.norm()) {
                break;
            }
            *r -= step;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_cubic() {
        // z^3 - 1
        let c = vec![Complex64::new(-1.0, 0.0), 0.0.into(), 0.0.into(), 1.0.into()];
        let r = roots(&c);
        assert_eq!(r.len(), 3);
        for z in r {
            assert!((z * z * z - 1.0).norm() < 1e-13);
        }
    }

    #[test]
    fn horner_derivative() {
        let c = vec![Complex64::new(1.0, 0.0), 2.0.into(), 3.0.into()];
        let (p, dp) = eval_d(&c, Complex64::new(2.0, 0.0));
        assert_eq!(p, Complex64::new(17.0, 0.0));
        assert_eq!(dp, Complex64::new(14.0, 0.0));
    }
}

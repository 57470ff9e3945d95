use ndarray::Array2;
use num_complex::Complex64;

/// Maximum absolute row sum.
pub(crate) fn norm_inf(a: &Array2<Complex64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor
/// series. Accurate to round-off for the small, well-conditioned matrices
/// used by the propagation oracle.
pub(crate) fn expm(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let norm = norm_inf(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.mapv(|x| x / 2f64.powi(squarings));
    let mut result = Array2::<Complex64>::eye(n);
    let mut term = Array2::<Complex64>::eye(n);
    for k in 1..40 {
        term = term.dot(&scaled).mapv(|x| x / k as f64);
        result += &term;
        if norm_inf(&term) <= 1e-18 * norm_inf(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exponential_of_rotation_generator() {
        let t = 2.7;
        let z = Complex64::new(0.0, 0.0);
        let a = array![[z, Complex64::new(-t, 0.0)], [Complex64::new(t, 0.0), z]];
        let e = expm(&a);
        assert!((e[[0, 0]].re - t.cos()).abs() < 1e-14);
        assert!((e[[1, 0]].re - t.sin()).abs() < 1e-14);
    }

    #[test]
    fn exponential_of_diagonal() {
        let d = [Complex64::new(-3.0, 2.0), Complex64::new(0.5, -7.0)];
        let a = Array2::from_diag(&ndarray::arr1(&d));
        let e = expm(&a);
        for i in 0..2 {
            assert!((e[[i, i]] - d[i].exp()).norm() < 1e-13 * d[i].exp().norm().max(1.0));
        }
        assert!(e[[0, 1]].norm() < 1e-15);
    }
}

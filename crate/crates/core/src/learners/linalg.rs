//! Small dense symmetric solver used by the Newton steps.

/// Lower-triangular Cholesky factor of a dense symmetric matrix (row-major, n×n).
pub(crate) struct Cholesky {
    n: usize,
    l: Vec<f64>,
    /// Smallest squared pivot relative to the largest diagonal entry.
    pub min_pivot_ratio: f64,
}

impl Cholesky {
    /// Factors `a`; only the lower triangle is read. `None` if not positive definite.
    pub fn factor(a: &[f64], n: usize) -> Option<Cholesky> {
        let mut l = vec![0.0; n * n];
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
        let mut min_ratio = f64::INFINITY;
        for j in 0..n {
            let mut d = a[j * n + j];
            let lj = &l[j * n..j * n + j];
            d -= lj.iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            if max_diag > 0.0 {
                min_ratio = min_ratio.min(d / max_diag);
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                let (li, lj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                s -= li.iter().zip(lj).map(|(x, y)| x * y).sum::<f64>();
                l[i * n + j] = s / djj;
            }
        }
        Some(Cholesky {
            n,
            l,
            min_pivot_ratio: min_ratio,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.l[i * n + k] * y[k]).sum();
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| self.l[k * n + i] * y[k]).sum();
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let ch = Cholesky::factor(&a, 3).unwrap();
        let x = ch.solve(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|k| a[i * 3 + k] * x[k]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        assert!(Cholesky::factor(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}

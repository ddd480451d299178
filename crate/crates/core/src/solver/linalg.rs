use crate::error::{Error, Result};

/// Symmetric positive definite band matrix, stored as the lower band:
/// `band[i][k]` holds `A[i][i − k]` for `k ≤ bw`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, band: vec![0.0; n * (bw + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Adds `v` to `A[i][j]` and `A[j][i]` (once when `i == j`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = r - c;
        assert!(k <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        self.band[r * (self.bw + 1) + k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.band[r * (self.bw + 1) + r - c]
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.band[i * (self.bw + 1) + i - j];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }
}

/// Cholesky factor `L` of a band matrix, same band layout.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let (n, bw) = (a.n, a.bw);
        let w = bw + 1;
        let mut l = a.band.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = l[i * w + i - j];
                let kl = lo.max(j.saturating_sub(bw));
                for k in kl..j {
                    s -= l[i * w + i - k] * l[j * w + j - k];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "matrix is not positive definite (pivot {s:e} at row {i})"
                        )));
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + i - j] = s / l[j * w];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.l[i * w + i - k] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= self.l[k * w + k - i] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal() {
        let n = 50;
        let mut a = BandMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul(&x);
        let sol = BandCholesky::factor(&a).unwrap().solve(&b);
        for i in 0..n {
            assert!((sol[i] - x[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn solves_wide_band() {
        let (n, bw) = (40, 7);
        let mut a = BandMatrix::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 20.0);
            for k in 1..=bw.min(i) {
                a.add(i, i - k, 1.0 / (1.0 + k as f64 + i as f64 * 0.1));
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let sol = BandCholesky::factor(&a).unwrap().solve(&a.mul(&x));
        for i in 0..n {
            assert!((sol[i] - x[i]).abs() < 1e-10);
        }
        assert_eq!(a.get(3, 5), a.get(5, 3));
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandMatrix::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(0, 1, 2.0);
        assert!(BandCholesky::factor(&a).is_err());
    }
}

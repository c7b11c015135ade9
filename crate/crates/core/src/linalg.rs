//! Small dense solvers used by the surrogate fit and the inpainting fallback.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Clone, Debug)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    /// Solves `A x = b` for symmetric positive definite `A` by Cholesky
    /// factorization. Pivots below `rel_tol * max|diag|` are reported as
    /// singular.
    pub fn cholesky_solve(&self, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max);
        if n > 0 && scale == 0.0 {
            return Err(Error::SingularSystem("zero matrix".into()));
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= rel_tol * scale {
                return Err(Error::SingularSystem(format!("pivot {j} is {d:e}")));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        Ok(x)
    }
}

//! Thomas algorithm for the Newton systems.

use crate::error::{Error, Result};

/// Tridiagonal matrix with one extra entry at `(0, 2)`, which is where the
/// one-sided center stencil lands.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    /// `lower[i]` multiplies `x[i - 1]` in row `i` (`lower[0]` unused).
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// `upper[i]` multiplies `x[i + 1]` in row `i` (last entry unused).
    pub upper: Vec<f64>,
    pub corner: f64,
}

impl Tridiagonal {
    pub fn zeros(m: usize) -> Self {
        Self { lower: vec![0.0; m], diag: vec![0.0; m], upper: vec![0.0; m], corner: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let m = self.len();
        (0..m)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.lower[i] * x[i - 1];
                }
                if i + 1 < m {
                    v += self.upper[i] * x[i + 1];
                }
                if i == 0 && m > 2 {
                    v += self.corner * x[2];
                }
                v
            })
            .collect()
    }

    /// Solves `A x = rhs`, consuming the matrix.
    pub fn solve(mut self, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = self.len();
        if rhs.len() != m || m < 3 {
            return Err(Error::InvalidArgument("tridiagonal system size mismatch".into()));
        }
        let mut r = rhs.to_vec();
        if self.corner != 0.0 {
            // Eliminate (0, 2) with row 1.
            if self.upper[1] == 0.0 {
                return Err(Error::InvalidArgument("cannot eliminate corner entry".into()));
            }
            let k = self.corner / self.upper[1];
            self.diag[0] -= k * self.lower[1];
            self.upper[0] -= k * self.diag[1];
            r[0] -= k * r[1];
            self.corner = 0.0;
        }
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        let mut pivot = self.diag[0];
        for i in 0..m {
            if i > 0 {
                pivot = self.diag[i] - self.lower[i] * c[i - 1];
            }
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::InvalidArgument(format!("singular tridiagonal pivot at row {i}")));
            }
            c[i] = if i + 1 < m { self.upper[i] / pivot } else { 0.0 };
            d[i] = if i > 0 { (r[i] - self.lower[i] * d[i - 1]) / pivot } else { r[0] / pivot };
        }
        let mut x = d;
        for i in (0..m - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn solves_diagonally_dominant_systems(
            seed in proptest::collection::vec(-1.0f64..1.0, 40),
            corner in -0.5f64..0.5,
        ) {
            let m = 10;
            let mut a = Tridiagonal::zeros(m);
            for i in 0..m {
                a.lower[i] = if i > 0 { seed[i] } else { 0.0 };
                a.upper[i] = if i + 1 < m { seed[10 + i] } else { 0.0 };
                a.diag[i] = 3.0 + seed[20 + i].abs();
            }
            a.upper[1] = 1.0;
            a.corner = corner;
            let x_true: Vec<f64> = seed[30..40].to_vec();
            let b = a.matvec(&x_true);
            let x = a.solve(&b).unwrap();
            for (x, t) in x.iter().zip(&x_true) {
                prop_assert!((x - t).abs() < 1e-12);
            }
        }
    }
}

//! Pentadiagonal solver for the z-lines of the marching scheme.

use crate::error::{Error, Result};

/// Row n holds coefficients of unknowns n−2 ..= n+2 in `band[n][0..5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Penta {
    pub band: Vec<[f64; 5]>,
}

impl Penta {
    pub fn zeros(n: usize) -> Self {
        Penta {
            band: vec![[0.0; 5]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.band.len()
    }

    pub fn is_empty(&self) -> bool {
        self.band.is_empty()
    }

    /// Identity row with value carried by the right-hand side.
    pub fn set_identity(&mut self, n: usize) {
        self.band[n] = [0.0, 0.0, 1.0, 0.0, 0.0];
    }

    /// Adds `w` to the coefficient of unknown `col` in row `row`.
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, w: f64) {
        let off = col + 2 - row;
        self.band[row][off] += w;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|r| {
                let mut s = 0.0;
                for (o, &w) in self.band[r].iter().enumerate() {
                    let c = r as isize + o as isize - 2;
                    if c >= 0 && (c as usize) < n && w != 0.0 {
                        s += w * x[c as usize];
                    }
                }
                s
            })
            .collect()
    }

    /// Gaussian elimination without pivoting; the matrix is consumed.
    /// Fails on a zero or non-finite pivot.
    pub fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::InvalidInput(
                "right-hand side length mismatch".into(),
            ));
        }
        let b = &mut self.band;
        for p in 0..n {
            let piv = b[p][2];
            if !(piv.is_finite() && piv != 0.0) {
                return Err(Error::InvalidInput(format!(
                    "singular pivot {piv:e} at row {p}"
                )));
            }
            for r in p + 1..(p + 3).min(n) {
                // entry (r, p) sits at offset p + 2 − r
                let off = p + 2 - r;
                let f = b[r][off] / piv;
                if f == 0.0 {
                    continue;
                }
                b[r][off] = 0.0;
                for c in p + 1..(p + 3).min(n) {
                    let v = b[p][c + 2 - p];
                    b[r][c + 2 - r] -= f * v;
                }
                rhs[r] -= f * rhs[p];
            }
        }
        for p in (0..n).rev() {
            let mut s = rhs[p];
            for c in p + 1..(p + 3).min(n) {
                s -= b[p][c + 2 - p] * rhs[c];
            }
            rhs[p] = s / b[p][2];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_rows() {
        let mut m = Penta::zeros(4);
        for r in 0..4 {
            m.set_identity(r);
        }
        let mut x = vec![1.0, -2.0, 3.0, 0.5];
        m.solve(&mut x).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0, 0.5]);
    }

    #[test]
    fn singular_pivot_rejected() {
        let m = Penta::zeros(3);
        assert!(m.solve(&mut [1.0, 1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn solves_diagonally_dominant(n in 3usize..40, seed in 0u64..1000) {
            let mut m = Penta::zeros(n);
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut rnd = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            };
            for r in 0..n {
                for c in r.saturating_sub(2)..(r + 3).min(n) {
                    if c != r {
                        m.add(r, c, rnd());
                    }
                }
                m.add(r, r, 3.0 + rnd());
            }
            let x: Vec<f64> = (0..n).map(|_| rnd()).collect();
            let mut b = m.mul_vec(&x);
            m.solve(&mut b).unwrap();
            for (a, e) in b.iter().zip(&x) {
                prop_assert!((a - e).abs() < 1e-12);
            }
        }
    }
}

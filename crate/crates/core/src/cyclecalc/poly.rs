//! Laurent polynomials with real coefficients.

use crate::protomatrix::EdgeDistribution;
use serde::{Deserialize, Serialize};

/// `sum_i c_i X^(min_degree + i)`. An empty coefficient vector is the zero polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentPoly {
    min_degree: i64,
    coeffs: Vec<f64>,
}

impl LaurentPoly {
    pub fn new(min_degree: i64, coeffs: Vec<f64>) -> Self {
        LaurentPoly { min_degree, coeffs }
    }

    pub fn zero() -> Self {
        LaurentPoly::new(0, Vec::new())
    }

    pub fn constant(c: f64) -> Self {
        LaurentPoly::new(0, vec![c])
    }

    /// `sum_j w_j X^(offset + j)`.
    pub fn from_distribution(d: &EdgeDistribution) -> Self {
        LaurentPoly::new(d.offset as i64, d.weights.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn min_degree(&self) -> i64 {
        self.min_degree
    }

    /// Largest stored degree (`min_degree - 1` for the zero polynomial).
    pub fn max_degree(&self) -> i64 {
        self.min_degree + self.coeffs.len() as i64 - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `[h(X)]_i`, zero outside the stored range.
    pub fn coeff(&self, i: i64) -> f64 {
        let k = i - self.min_degree;
        if k < 0 || k >= self.coeffs.len() as i64 {
            0.0
        } else {
            self.coeffs[k as usize]
        }
    }

    pub fn sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        LaurentPoly::new(self.min_degree, self.coeffs.iter().map(|v| v * c).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let lo = self.min_degree.min(other.min_degree);
        let hi = self.max_degree().max(other.max_degree());
        let coeffs = (lo..=hi).map(|i| self.coeff(i) + other.coeff(i)).collect();
        LaurentPoly::new(lo, coeffs)
    }

    /// Exact convolution.
    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return LaurentPoly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (a, &x) in self.coeffs.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (b, &y) in other.coeffs.iter().enumerate() {
                out[a + b] += x * y;
            }
        }
        LaurentPoly::new(self.min_degree + other.min_degree, out)
    }

    pub fn pow(&self, n: usize) -> Self {
        let mut acc = LaurentPoly::constant(1.0);
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// `h(X^-1)`.
    pub fn mirror(&self) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.reverse();
        LaurentPoly::new(-self.max_degree(), coeffs)
    }

    /// `sum_i [self]_i [other]_{shift - i}`, i.e. `[self * other]_shift`.
    pub fn paired_sum(&self, other: &Self, shift: i64) -> f64 {
        let mut s = 0.0;
        for (k, &a) in self.coeffs.iter().enumerate() {
            let i = self.min_degree + k as i64;
            s += a * other.coeff(shift - i);
        }
        s
    }
}

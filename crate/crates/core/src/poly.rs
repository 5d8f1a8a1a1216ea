//! Real polynomials in the monomial basis, coefficients in ascending degree.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            return Self::constant(0.0);
        }
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// `τ - root`
    pub fn linear_factor(root: f64) -> Self {
        Self { coeffs: vec![-root, 1.0] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn mul(&self, rhs: &Poly) -> Poly {
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly { coeffs: out }
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly { coeffs: self.coeffs.iter().map(|c| c * k).collect() }
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::constant(0.0);
        }
        Poly { coeffs: self.coeffs.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect() }
    }

    /// Antiderivative vanishing at zero.
    pub fn antiderivative(&self) -> Poly {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(0.0);
        out.extend(self.coeffs.iter().enumerate().map(|(k, c)| c / (k + 1) as f64));
        Poly { coeffs: out }
    }

    /// `∫_a^b p(σ) dσ`
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let p = self.antiderivative();
        p.eval(b) - p.eval(a)
    }

    /// `∫_{-w}^{w} p(σ) dσ`, summing only the even-degree terms.
    pub fn integrate_symmetric(&self, w: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .step_by(2)
            .rev()
            .map(|(k, c)| 2.0 * c * libm::pow(w, (k + 1) as f64) / (k + 1) as f64)
            .sum()
    }
}

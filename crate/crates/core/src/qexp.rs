//! Quasi-exponential curves `ξ ↦ Σ p_i(ξ) e^{λ_i ξ}`.
//!
//! The family is closed under differentiation, antidifferentiation and
//! products, so volatilities, their integrated forms and the Wiener drift
//! terms `σ Σ` all stay symbolic. Volatilities must be decaying (`λ ≤ 0`);
//! growing terms appear only as generators on a bounded grid.

use std::sync::Arc;

use crate::curve::{CurveGrid, ForwardCurve};
use crate::error::{Error, Result};

const RATE_EPS: f64 = 1e-14;

/// One term `p(ξ) e^{rate ξ}`, polynomial coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct QeTerm {
    pub poly: Vec<f64>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuasiExp {
    terms: Vec<QeTerm>,
}

impl QuasiExp {
    pub fn new(terms: Vec<QeTerm>) -> Result<Self> {
        for t in &terms {
            if !t.rate.is_finite() {
                return Err(Error::NotQuasiExponential(format!("rate {} is not finite", t.rate)));
            }
            if t.poly.iter().any(|c| !c.is_finite()) {
                return Err(Error::NotQuasiExponential("non-finite coefficient".into()));
            }
        }
        Ok(Self { terms }.normalized())
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: vec![QeTerm { poly: vec![c], rate: 0.0 }] }.normalized()
    }

    /// `c · e^{-decay ξ}`, the Vasicek / Hull–White volatility shape.
    pub fn vasicek(c: f64, decay: f64) -> Result<Self> {
        Self::new(vec![QeTerm { poly: vec![c], rate: -decay }])
    }

    /// Every rate is `≤ 0`, so the curve lies in `H_w` for any weight.
    pub fn is_decaying(&self) -> bool {
        self.terms.iter().all(|t| t.rate <= 0.0)
    }

    /// `e^{rate ξ}`.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(vec![QeTerm { poly: vec![1.0], rate }])
    }

    pub fn terms(&self) -> &[QeTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Flat curve: a single degree-zero term with rate zero.
    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [] => Some(0.0),
            [t] if t.rate == 0.0 && t.poly.len() == 1 => Some(t.poly[0]),
            _ => None,
        }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        self.terms.iter().map(|t| horner(&t.poly, xi) * (t.rate * xi).exp()).sum()
    }

    pub fn sample(&self, grid: &Arc<CurveGrid>) -> ForwardCurve {
        let values = grid.nodes().iter().map(|&x| self.eval(x)).collect();
        ForwardCurve::raw(grid.clone(), values)
    }

    pub fn derivative(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut poly: Vec<f64> = t.poly.iter().map(|c| c * t.rate).collect();
                for (k, c) in t.poly.iter().enumerate().skip(1) {
                    poly[k - 1] += k as f64 * c;
                }
                QeTerm { poly, rate: t.rate }
            })
            .collect();
        Self { terms }.normalized()
    }

    /// `ξ ↦ ∫_0^ξ f`.
    pub fn antiderivative(&self) -> Self {
        let mut terms = Vec::new();
        let mut constant = 0.0;
        for t in &self.terms {
            if t.rate == 0.0 {
                let mut poly = vec![0.0; t.poly.len() + 1];
                for (k, c) in t.poly.iter().enumerate() {
                    poly[k + 1] = c / (k + 1) as f64;
                }
                terms.push(QeTerm { poly, rate: 0.0 });
            } else {
                // q' + λ q = p  ⇒  q = Σ_k (-1)^k p^{(k)} / λ^{k+1}
                let mut q = vec![0.0; t.poly.len()];
                let mut deriv = t.poly.clone();
                let mut sign = 1.0;
                let mut lam_pow = t.rate;
                while !deriv.is_empty() {
                    for (k, c) in deriv.iter().enumerate() {
                        q[k] += sign * c / lam_pow;
                    }
                    deriv = poly_derivative(&deriv);
                    sign = -sign;
                    lam_pow *= t.rate;
                }
                constant -= q.first().copied().unwrap_or(0.0);
                terms.push(QeTerm { poly: q, rate: t.rate });
            }
        }
        terms.push(QeTerm { poly: vec![constant], rate: 0.0 });
        Self { terms }.normalized()
    }

    /// `Σ(ξ) = −∫_0^ξ σ`.
    pub fn integrated_vol(&self) -> Self {
        self.antiderivative().scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        let terms =
            self.terms.iter().map(|t| QeTerm { poly: t.poly.iter().map(|p| p * c).collect(), rate: t.rate }).collect();
        Self { terms }.normalized()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { terms }.normalized()
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                let mut poly = vec![0.0; a.poly.len() + b.poly.len() - 1];
                for (i, x) in a.poly.iter().enumerate() {
                    for (j, y) in b.poly.iter().enumerate() {
                        poly[i + j] += x * y;
                    }
                }
                terms.push(QeTerm { poly, rate: a.rate + b.rate });
            }
        }
        Self { terms }.normalized()
    }

    /// The monomials `ξ^j e^{λξ}` spanning all derivatives of this curve.
    pub fn derivative_span(&self) -> Vec<QuasiExp> {
        let mut out = Vec::new();
        for t in &self.terms {
            for j in 0..t.poly.len() {
                let mut poly = vec![0.0; j + 1];
                poly[j] = 1.0;
                out.push(QuasiExp { terms: vec![QeTerm { poly, rate: t.rate }] });
            }
        }
        out
    }

    fn normalized(mut self) -> Self {
        for t in &mut self.terms {
            if t.rate.abs() <= RATE_EPS {
                t.rate = 0.0;
            }
        }
        self.terms.sort_by(|a, b| b.rate.total_cmp(&a.rate));
        let mut merged: Vec<QeTerm> = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            match merged.last_mut() {
                Some(last) if (last.rate - t.rate).abs() <= RATE_EPS => {
                    if last.poly.len() < t.poly.len() {
                        last.poly.resize(t.poly.len(), 0.0);
                    }
                    for (a, b) in last.poly.iter_mut().zip(&t.poly) {
                        *a += b;
                    }
                }
                _ => merged.push(t),
            }
        }
        for t in &mut merged {
            while t.poly.last() == Some(&0.0) {
                t.poly.pop();
            }
        }
        merged.retain(|t| !t.poly.is_empty());
        Self { terms: merged }
    }
}

fn horner(poly: &[f64], x: f64) -> f64 {
    poly.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_derivative(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect()
}

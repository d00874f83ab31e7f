//! Forward curves as grid-sampled elements of the weighted space `H_w`.
//!
//! A curve `h` on `[0, xi_max]` carries the norm
//!
//! ```text
//! ‖h‖² = |h(0)|² + ∫ |h'(ξ)|² w(ξ) dξ,   w(ξ) = exp(α ξ)
//! ```
//!
//! The integral is evaluated cell by cell: the difference quotient of each
//! cell is the derivative at the cell midpoint, weighted by `w` there. This
//! quadrature is second order and positive definite on grid functions, so
//! the norm vanishes exactly for the zero curve only.
//!
//! Beyond `xi_max` curves are extended by their last value, which keeps
//! shifted curves inside `H_w` (flat tails have no derivative).

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const DEFAULT_XI_MAX: f64 = 30.0;
pub const DEFAULT_N_POINTS: usize = 601;
pub const DEFAULT_WEIGHT_ALPHA: f64 = 0.1;

/// Uniform maturity grid with exponential weight `w(ξ) = e^{αξ}`.
#[derive(Debug, Clone)]
pub struct CurveGrid {
    xi_max: f64,
    step: f64,
    weight_alpha: f64,
    nodes: Vec<f64>,
    /// `sqrt(w(mid_i) / step)` per cell, the isometric embedding weights.
    cell_weights: Vec<f64>,
}

pub const MAX_GRID_POINTS: usize = 1 << 20;

impl CurveGrid {
    pub fn uniform(xi_max: f64, n_points: usize, weight_alpha: f64) -> Result<Arc<Self>> {
        if !(xi_max.is_finite() && xi_max > 0.0) {
            return Err(Error::InvalidGrid(format!("xi_max must be positive, got {xi_max}")));
        }
        if !(3..=MAX_GRID_POINTS).contains(&n_points) {
            return Err(Error::InvalidGrid(format!("need 3 to {MAX_GRID_POINTS} points, got {n_points}")));
        }
        if !(weight_alpha.is_finite() && weight_alpha > 0.0) {
            return Err(Error::InvalidGrid(format!("weight_alpha must be positive, got {weight_alpha}")));
        }
        if (weight_alpha * xi_max) > 600.0 {
            return Err(Error::InvalidGrid("weight overflows on this horizon".into()));
        }
        let step = xi_max / (n_points - 1) as f64;
        let nodes: Vec<f64> = (0..n_points).map(|i| i as f64 * step).collect();
        let cell_weights =
            (0..n_points - 1).map(|i| ((weight_alpha * (nodes[i] + 0.5 * step)).exp() / step).sqrt()).collect();
        Ok(Arc::new(Self { xi_max, step, weight_alpha, nodes, cell_weights }))
    }

    pub fn default_grid() -> Arc<Self> {
        Self::uniform(DEFAULT_XI_MAX, DEFAULT_N_POINTS, DEFAULT_WEIGHT_ALPHA).expect("default grid is valid")
    }

    /// Same horizon and weight with twice the resolution.
    pub fn refined(&self) -> Arc<Self> {
        Self::uniform(self.xi_max, 2 * (self.n_points() - 1) + 1, self.weight_alpha)
            .expect("refinement of a valid grid is valid")
    }

    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    pub fn n_points(&self) -> usize {
        self.nodes.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn weight_alpha(&self) -> f64 {
        self.weight_alpha
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weight(&self, xi: f64) -> f64 {
        (self.weight_alpha * xi).exp()
    }

    fn same_as(&self, other: &CurveGrid) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.xi_max.to_bits() == other.xi_max.to_bits()
            && self.weight_alpha.to_bits() == other.weight_alpha.to_bits()
    }
}

/// A forward curve sampled on a [`CurveGrid`].
#[derive(Debug, Clone)]
pub struct ForwardCurve {
    grid: Arc<CurveGrid>,
    values: Vec<f64>,
}

impl PartialEq for ForwardCurve {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.values == other.values
    }
}

impl ForwardCurve {
    pub fn from_values(grid: Arc<CurveGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidCurve(format!("expected {} values, got {}", grid.n_points(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Unchecked constructor for values produced by arithmetic on valid curves.
    pub(crate) fn raw(grid: Arc<CurveGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points());
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<CurveGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&xi| f(xi)).collect();
        Self::from_values(grid, values)
    }

    pub fn constant(grid: Arc<CurveGrid>, c: f64) -> Result<Self> {
        let n = grid.n_points();
        Self::from_values(grid, vec![c; n])
    }

    pub fn zeros(grid: Arc<CurveGrid>) -> Self {
        let n = grid.n_points();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn grid(&self) -> &Arc<CurveGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `h(0)`, the short rate when the curve is a forward curve.
    pub fn left(&self) -> f64 {
        self.values[0]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_same_grid(&self, other: &ForwardCurve) -> Result<()> {
        self.check_grid(&other.grid)
    }

    pub fn check_grid(&self, grid: &Arc<CurveGrid>) -> Result<()> {
        if Arc::ptr_eq(&self.grid, grid) || self.grid.same_as(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::InvalidCurve(format!("non-finite value at node {i}"))),
            None => Ok(()),
        }
    }

    /// Coordinates of the isometric embedding of `H_w` grid functions into
    /// Euclidean space: the inner product of two curves is the dot product
    /// of their features.
    pub fn h_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        out.push(self.values[0]);
        out.extend(self.values.windows(2).zip(&self.grid.cell_weights).map(|(w, &c)| (w[1] - w[0]) * c));
        out
    }

    pub fn h_norm(&self) -> Result<f64> {
        self.check_finite()?;
        Ok(self.h_norm_sq_unchecked().sqrt())
    }

    fn h_norm_sq_unchecked(&self) -> f64 {
        let head = self.values[0] * self.values[0];
        head + self
            .values
            .windows(2)
            .zip(&self.grid.cell_weights)
            .map(|(w, &c)| {
                let d = (w[1] - w[0]) * c;
                d * d
            })
            .sum::<f64>()
    }

    pub fn inner_product(&self, other: &ForwardCurve) -> Result<f64> {
        self.check_same_grid(other)?;
        self.check_finite()?;
        other.check_finite()?;
        let head = self.values[0] * other.values[0];
        let tail: f64 = self
            .values
            .windows(2)
            .zip(other.values.windows(2))
            .zip(&self.grid.cell_weights)
            .map(|((a, b), &c)| (a[1] - a[0]) * (b[1] - b[0]) * c * c)
            .sum();
        Ok(head + tail)
    }

    /// Musiela shift `(S_t h)(ξ) = h(ξ + t)` by monotone cubic interpolation.
    pub fn shift(&self, t: f64) -> Result<ForwardCurve> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeShift(t));
        }
        let n = self.values.len();
        let h = self.grid.step;
        let last = self.values[n - 1];
        let pos = t / h;
        let whole = pos.round();
        if (pos - whole).abs() < 1e-9 {
            let k = whole as usize;
            let values = (0..n).map(|j| if j + k < n { self.values[j + k] } else { last }).collect();
            return Ok(Self::raw(self.grid.clone(), values));
        }
        let k = pos.floor() as usize;
        let s = pos - k as f64;
        let slopes = pchip_slopes(&self.values, h);
        let (h00, h10, h01, h11) = hermite_basis(s);
        let values = (0..n)
            .map(|j| {
                let i = j + k;
                if i + 1 >= n {
                    last
                } else {
                    h00 * self.values[i] + h10 * h * slopes[i] + h01 * self.values[i + 1] + h11 * h * slopes[i + 1]
                }
            })
            .collect();
        Ok(Self::raw(self.grid.clone(), values))
    }

    /// Value at an arbitrary maturity by monotone cubic interpolation, with
    /// the flat extension past the horizon.
    pub fn value_at(&self, xi: f64) -> f64 {
        let n = self.values.len();
        let h = self.grid.step;
        if xi <= 0.0 {
            return self.values[0];
        }
        if xi >= self.grid.xi_max {
            return self.values[n - 1];
        }
        let pos = xi / h;
        let i = (pos.floor() as usize).min(n - 2);
        let s = pos - i as f64;
        // Local slopes only: the two cells around i.
        let slope = |j: usize| pchip_slope_at(&self.values, h, j);
        let (h00, h10, h01, h11) = hermite_basis(s);
        h00 * self.values[i] + h10 * h * slope(i) + h01 * self.values[i + 1] + h11 * h * slope(i + 1)
    }

    /// `ξ ↦ −∫_0^ξ vol(η) dη` by cumulative trapezoid.
    pub fn integrated_vol(&self) -> ForwardCurve {
        let h = self.grid.step;
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(-acc);
        }
        Self::raw(self.grid.clone(), out)
    }

    /// `∫_0^ξ h` by cumulative trapezoid.
    pub fn cumulative_integral(&self) -> ForwardCurve {
        let mut out = self.integrated_vol();
        out.values.iter_mut().for_each(|v| *v = -*v);
        out
    }

    /// Trapezoid integral over `[0, tau]`, the last partial cell using the
    /// linear interpolant.
    pub fn integral_to(&self, tau: f64) -> f64 {
        let h = self.grid.step;
        let n = self.values.len();
        let pos = (tau / h).max(0.0);
        let full = (pos.floor() as usize).min(n - 1);
        let mut acc = 0.0;
        for i in 0..full {
            acc += 0.5 * h * (self.values[i] + self.values[i + 1]);
        }
        let frac = pos - full as f64;
        if frac > 0.0 && full + 1 < n {
            let end = self.values[full] + frac * (self.values[full + 1] - self.values[full]);
            acc += 0.5 * frac * h * (self.values[full] + end);
        } else if frac > 0.0 {
            // past the horizon: flat extension
            acc += frac * h * self.values[n - 1];
        }
        acc
    }

    /// Central differences inside, second-order one-sided at both ends.
    pub fn derivative(&self) -> ForwardCurve {
        let v = &self.values;
        let n = v.len();
        let h = self.grid.step;
        let mut out = vec![0.0; n];
        out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
        for i in 1..n - 1 {
            out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
        }
        out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        Self::raw(self.grid.clone(), out)
    }

    pub fn scaled(&self, c: f64) -> ForwardCurve {
        Self::raw(self.grid.clone(), self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: f64, other: &ForwardCurve) -> Result<ForwardCurve> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Self::raw(self.grid.clone(), values))
    }

    pub fn add_assign_scaled(&mut self, c: f64, other: &ForwardCurve) {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += c * b);
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ForwardCurve) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// The curve restricted to the nodes with `ξ ≤ xi`.
    pub fn truncated(&self, xi: f64) -> Result<ForwardCurve> {
        let keep = self.grid.nodes.iter().take_while(|&&x| x <= xi + 1e-9 * self.grid.step()).count();
        if keep < 2 {
            return Err(Error::InvalidGrid(format!("truncation at {xi} leaves fewer than two nodes")));
        }
        let grid = CurveGrid::uniform(self.grid.nodes[keep - 1], keep, self.grid.weight_alpha)?;
        Ok(Self::raw(grid, self.values[..keep].to_vec()))
    }

    /// CSV rows `xi,value` under a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("xi,value\n");
        for (xi, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(s, "{xi:?},{v:?}");
        }
        s
    }

    /// Reads the format written by [`ForwardCurve::to_csv`]. The nodes must
    /// form a uniform grid starting at zero.
    pub fn from_csv(text: &str, weight_alpha: f64) -> Result<ForwardCurve> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line == "xi,value") {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::InvalidCurve(format!("line {}: expected `xi,value`", lineno + 1)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidCurve(format!("line {}: bad number `{}`", lineno + 1, s.trim())))
            };
            xs.push(parse(a)?);
            vs.push(parse(b)?);
        }
        if xs.len() < 3 {
            return Err(Error::InvalidCurve("need at least 3 rows".into()));
        }
        let xi_max = *xs.last().unwrap();
        let grid = CurveGrid::uniform(xi_max, xs.len(), weight_alpha)?;
        let tol = 1e-9 * grid.step().max(1.0);
        for (i, (&x, &node)) in xs.iter().zip(grid.nodes()).enumerate() {
            if !((x - node).abs() <= tol) {
                return Err(Error::InvalidCurve(format!("row {i}: node {x} off the uniform grid")));
            }
        }
        ForwardCurve::from_values(grid, vs)
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2)
}

/// Fritsch–Carlson slopes on a uniform grid (harmonic mean of secants,
/// zero at local extrema, shape-preserving three-point ends).
fn pchip_slopes(v: &[f64], h: f64) -> Vec<f64> {
    (0..v.len()).map(|j| pchip_slope_at(v, h, j)).collect()
}

fn pchip_slope_at(v: &[f64], h: f64, j: usize) -> f64 {
    let n = v.len();
    let secant = |i: usize| (v[i + 1] - v[i]) / h;
    if j == 0 || j == n - 1 {
        let (d0, d1) = if j == 0 { (secant(0), secant(1)) } else { (secant(n - 2), secant(n - 3)) };
        let d = 0.5 * (3.0 * d0 - d1);
        if d.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            d
        }
    } else {
        let a = secant(j - 1);
        let b = secant(j);
        if a * b <= 0.0 {
            0.0
        } else {
            2.0 * a * b / (a + b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<CurveGrid> {
        CurveGrid::default_grid()
    }

    #[test]
    fn constant_curve_norm_is_abs_value() {
        let c = ForwardCurve::constant(grid(), -0.042).unwrap();
        assert!((c.h_norm().unwrap() - 0.042).abs() < 1e-15);
        assert_eq!(ForwardCurve::zeros(grid()).h_norm().unwrap(), 0.0);
    }

    #[test]
    fn norm_of_exponential_matches_closed_form() {
        // 1 + ∫ e^{-2ξ} e^{0.5ξ} dξ = 5/3
        let g = CurveGrid::uniform(30.0, 601, 0.5).unwrap();
        let h = ForwardCurve::from_fn(g, |x| (-x).exp()).unwrap();
        let n = h.h_norm().unwrap();
        assert!((n - (5.0_f64 / 3.0).sqrt()).abs() < 2e-4, "{n}");
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(ForwardCurve::from_values(grid(), vec![f64::NAN; 601]).is_err());
        let mut c = ForwardCurve::zeros(grid());
        c.values_mut()[7] = f64::INFINITY;
        assert!(matches!(c.h_norm(), Err(Error::InvalidCurve(_))));
    }

    #[test]
    fn inner_product_requires_same_grid() {
        let a = ForwardCurve::zeros(grid());
        let b = ForwardCurve::zeros(CurveGrid::uniform(30.0, 301, 0.1).unwrap());
        assert_eq!(a.inner_product(&b), Err(Error::GridMismatch));
        let h = ForwardCurve::from_fn(grid(), |x| x.sin()).unwrap();
        assert_eq!(h.inner_product(&a).unwrap(), 0.0);
        let n = h.h_norm().unwrap();
        assert!((h.inner_product(&h).unwrap() - n * n).abs() < 1e-12 * n * n);
    }

    #[test]
    fn shift_zero_is_identity_and_negative_fails() {
        let h = ForwardCurve::from_fn(grid(), |x| 0.03 + 0.01 * (-x).exp()).unwrap();
        assert_eq!(h.shift(0.0).unwrap(), h);
        assert_eq!(h.shift(-0.1), Err(Error::NegativeShift(-0.1)));
    }

    #[test]
    fn shift_of_exponential() {
        let h = ForwardCurve::from_fn(grid(), |x| (-x).exp()).unwrap();
        let s = h.shift(0.5).unwrap();
        let want = ForwardCurve::from_fn(grid(), |x| (-(x + 0.5f64).min(30.0)).exp()).unwrap();
        assert!(s.max_abs_diff(&want).unwrap() < 1e-14);
        let s = h.shift(0.123).unwrap();
        let want = ForwardCurve::from_fn(grid(), |x| (-(x + 0.123f64).min(30.0)).exp()).unwrap();
        let err = s.max_abs_diff(&want).unwrap();
        assert!(err < INTERP_TOL, "{err}");
    }

    /// Observed monotone-cubic error on e^{-ξ} at the default spacing is
    /// ~1e-6; the tolerance keeps an order of magnitude of headroom.
    pub(crate) const INTERP_TOL: f64 = 1e-5;

    #[test]
    fn shift_extends_flat_past_horizon() {
        let h = ForwardCurve::from_fn(grid(), |x| x).unwrap();
        let s = h.shift(40.0).unwrap();
        assert!(s.values().iter().all(|&v| v == 30.0));
    }

    #[test]
    fn integrated_vol_examples() {
        let c = ForwardCurve::constant(grid(), 0.02).unwrap().integrated_vol();
        for (xi, v) in grid().nodes().iter().zip(c.values()) {
            assert!((v + 0.02 * xi).abs() < 1e-14);
        }
        assert_eq!(c.left(), 0.0);
        let e = ForwardCurve::from_fn(grid(), |x| 0.02 * (-0.1 * x).exp()).unwrap().integrated_vol();
        // node 20 is ξ = 1
        let want = -0.02 * (1.0 - (-0.1f64).exp()) / 0.1;
        assert!((e.values()[20] - want).abs() < 1e-7);
        assert!((want + 0.0190326).abs() < 1e-7);
        assert_eq!(ForwardCurve::zeros(grid()).integrated_vol().max_abs(), 0.0);
    }

    #[test]
    fn derivative_examples() {
        let c = ForwardCurve::constant(grid(), 3.0).unwrap().derivative();
        assert_eq!(c.max_abs(), 0.0);
        let l = ForwardCurve::from_fn(grid(), |x| 1.0 + 0.25 * x).unwrap().derivative();
        assert!(l.values().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn derivative_converges_at_second_order() {
        let err = |n: usize| {
            let g = CurveGrid::uniform(10.0, n, 0.1).unwrap();
            let d = ForwardCurve::from_fn(g.clone(), |x| (-x).exp()).unwrap().derivative();
            let want = ForwardCurve::from_fn(g, |x| -(-x).exp()).unwrap();
            d.max_abs_diff(&want).unwrap()
        };
        let (e1, e2, e3) = (err(101), err(201), err(401));
        assert!((e1 / e2).log2() > 1.8 && (e2 / e3).log2() > 1.8, "{e1} {e2} {e3}");
    }

    #[test]
    fn bond_integral_partial_cell() {
        let c = ForwardCurve::constant(grid(), 0.03).unwrap();
        assert!((c.integral_to(2.0) - 0.06).abs() < 1e-15);
        assert!((c.integral_to(1.234) - 0.03 * 1.234).abs() < 1e-15);
        assert_eq!(c.integral_to(0.0), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let h = ForwardCurve::from_fn(CurveGrid::uniform(5.0, 11, 0.1).unwrap(), |x| 0.01 * x).unwrap();
        let back = ForwardCurve::from_csv(&h.to_csv(), 0.1).unwrap();
        assert_eq!(back, h);
        assert!(ForwardCurve::from_csv("xi,value\n0,1\n1,2\n5,3\n", 0.1).is_err());
        assert!(ForwardCurve::from_csv("garbage", 0.1).is_err());
    }
}

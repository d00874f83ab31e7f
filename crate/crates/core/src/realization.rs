//! Affine realizations: the subspace `V`, the foliation `M_t = ψ(t) + V`,
//! numerical tangency checks and the finite-dimensional factor model.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curve::{CurveGrid, ForwardCurve};
use crate::drift::alpha;
use crate::error::{Error, Result};
use crate::levy::{sample_increments, IncrementMatrix};
use crate::model::ModelSpec;
use crate::mpr::{simulate_state_with, StateProcessSpec};
use crate::qexp::QuasiExp;
use crate::sim::step;
use crate::span_rank::DEFAULT_RANK_TOL;
use rayon::prelude::*;

/// Residual bound for a positive certificate.
pub const CERTIFY_TOL: f64 = 1e-6;
/// Residual above which the check counts as a refutation.
pub const REFUTE_TOL: f64 = 1e-3;

/// Orthonormal basis of `V` with exact derivatives of the basis curves.
#[derive(Debug, Clone)]
pub struct Subspace {
    grid: Arc<CurveGrid>,
    generators: Vec<QuasiExp>,
    basis: Vec<ForwardCurve>,
    basis_features: Vec<Vec<f64>>,
    derivs: Vec<ForwardCurve>,
    singular_values: Vec<f64>,
    tol: f64,
}

impl Subspace {
    /// Orthonormalises the sampled generators; directions with singular
    /// value below `tol × largest` are dropped.
    pub fn from_generators(grid: &Arc<CurveGrid>, generators: Vec<QuasiExp>, tol: f64) -> Result<Self> {
        let mut vals = Vec::new();
        let mut ders = Vec::new();
        let mut feats = Vec::new();
        for g in &generators {
            let s = g.sample(grid);
            if !s.is_finite() {
                return Err(Error::InvalidModel("generator not finite on grid".into()));
            }
            let f = s.h_features();
            let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                continue;
            }
            feats.push(f.iter().map(|v| v / n).collect::<Vec<_>>());
            vals.push(s.scaled(1.0 / n));
            ders.push(g.derivative().sample(grid).scaled(1.0 / n));
        }
        let mut out = Self {
            grid: grid.clone(),
            generators,
            basis: vec![],
            basis_features: vec![],
            derivs: vec![],
            singular_values: vec![],
            tol,
        };
        if feats.is_empty() {
            return Ok(out);
        }
        let cols = feats[0].len();
        let m = DMatrix::from_row_slice(feats.len(), cols, &feats.concat());
        let svd = m.svd(true, false);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        let top = sv.iter().cloned().fold(0.0, f64::max);
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
        let mut basis = Vec::new();
        let mut derivs = Vec::new();
        for &i in order.iter().filter(|&&i| sv[i] >= tol * top) {
            let mut e = ForwardCurve::zeros(grid.clone());
            let mut de = ForwardCurve::zeros(grid.clone());
            for g in 0..vals.len() {
                let c = u[(g, i)] / sv[i];
                e.add_assign_scaled(c, &vals[g]);
                de.add_assign_scaled(c, &ders[g]);
            }
            basis.push(e);
            derivs.push(de);
        }
        // Two Gram–Schmidt sweeps remove the rounding left by 1/σ_i.
        for _ in 0..2 {
            for i in 0..basis.len() {
                for j in 0..i {
                    let c = basis[i].inner_product(&basis[j])?;
                    let (bj, dj) = (basis[j].clone(), derivs[j].clone());
                    basis[i].add_assign_scaled(-c, &bj);
                    derivs[i].add_assign_scaled(-c, &dj);
                }
                let n = basis[i].h_norm()?;
                basis[i] = basis[i].scaled(1.0 / n);
                derivs[i] = derivs[i].scaled(1.0 / n);
            }
        }
        let mut sorted = sv;
        sorted.sort_by(|a, b| b.total_cmp(a));
        out.basis_features = basis.iter().map(|b| b.h_features()).collect();
        out.basis = basis;
        out.derivs = derivs;
        out.singular_values = sorted;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn grid(&self) -> &Arc<CurveGrid> {
        &self.grid
    }

    pub fn basis(&self) -> &[ForwardCurve] {
        &self.basis
    }

    pub fn basis_derivatives(&self) -> &[ForwardCurve] {
        &self.derivs
    }

    pub fn generators(&self) -> &[QuasiExp] {
        &self.generators
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `⟨e_i, f⟩` for every basis curve.
    pub fn coords(&self, f: &ForwardCurve) -> Vec<f64> {
        let ff = f.h_features();
        self.basis_features.iter().map(|b| b.iter().zip(&ff).map(|(x, y)| x * y).sum()).collect()
    }

    pub fn embed(&self, z: &[f64]) -> ForwardCurve {
        let mut out = ForwardCurve::zeros(self.grid.clone());
        for (c, e) in z.iter().zip(&self.basis) {
            out.add_assign_scaled(*c, e);
        }
        out
    }

    /// `d/dξ` of `Σ z_i e_i`, exact on `V`.
    pub fn derivative_of(&self, z: &[f64]) -> ForwardCurve {
        let mut out = ForwardCurve::zeros(self.grid.clone());
        for (c, e) in z.iter().zip(&self.derivs) {
            out.add_assign_scaled(*c, e);
        }
        out
    }

    pub fn project(&self, f: &ForwardCurve) -> ForwardCurve {
        self.embed(&self.coords(f))
    }

    /// `(I − P_V) f`.
    pub fn complement(&self, f: &ForwardCurve) -> Result<ForwardCurve> {
        f.axpy(-1.0, &self.project(f))
    }

    /// Exact derivative of [`Subspace::generator_combination`].
    pub fn generator_combination_derivative(&self, coeffs: &[f64]) -> ForwardCurve {
        let mut out = ForwardCurve::zeros(self.grid.clone());
        for (c, g) in coeffs.iter().zip(&self.generators) {
            out.add_assign_scaled(*c, &g.derivative().sample(&self.grid));
        }
        out
    }

    /// Curve built from generator coefficients, grid independent.
    pub fn generator_combination(&self, coeffs: &[f64]) -> ForwardCurve {
        let mut out = ForwardCurve::zeros(self.grid.clone());
        for (c, g) in coeffs.iter().zip(&self.generators) {
            out.add_assign_scaled(*c, &g.sample(&self.grid));
        }
        out
    }
}

/// Quasi-exponential generators whose derivative span is `V`.
///
/// With `frozen_at = Some(h)` every state-scaled volatility is replaced by
/// its value at `h`.
pub fn subspace_generators(model: &ModelSpec, frozen_at: Option<&ForwardCurve>) -> Result<Vec<QuasiExp>> {
    let r0 = frozen_at.map_or(0.0, |h| h.left());
    let factor = |v: &crate::model::VolSpec| match (frozen_at, v.state_scale) {
        (_, None) => Ok(1.0),
        (Some(_), Some(_)) => Ok(v.factor_at(r0)),
        (None, Some(_)) => {
            Err(Error::NotQuasiExponential("state-dependent volatility: freeze at a reference curve".into()))
        }
    };
    let mut gens = Vec::new();
    for s in model.sigma() {
        factor(s)?;
        gens.extend(s.shape.derivative_span());
        gens.extend(s.shape.mul(&s.shape.integrated_vol()).derivative_span());
    }
    for (k, g) in model.gamma().iter().enumerate() {
        let c = factor(g)?;
        if g.shape.is_zero() || c == 0.0 {
            continue;
        }
        gens.extend(g.shape.derivative_span());
        let comp = &model.drivers().components()[k];
        let jumps = comp
            .jumps()
            .ok_or_else(|| Error::NotQuasiExponential("jump drift κ'(ϑ+Γ) of a parametric measure".into()))?;
        let g0 = g
            .shape
            .as_constant()
            .ok_or_else(|| Error::NotQuasiExponential("jump drift γ·e^{xΓ} with a non-flat γ".into()))?;
        for j in jumps {
            gens.push(QuasiExp::exponential(-j.size * c * g0)?);
        }
    }
    Ok(gens)
}

pub fn build_subspace_v(model: &ModelSpec) -> Result<Subspace> {
    Subspace::from_generators(model.grid(), subspace_generators(model, None)?, DEFAULT_RANK_TOL)
}

/// `V` for a model whose volatilities are frozen at `h_ref`.
pub fn build_subspace_v_frozen(model: &ModelSpec, h_ref: &ForwardCurve) -> Result<Subspace> {
    Subspace::from_generators(model.grid(), subspace_generators(model, Some(h_ref))?, DEFAULT_RANK_TOL)
}

/// `M_t = ψ(t) + V` on the time grid `t_j = j·dt`.
#[derive(Debug, Clone)]
pub struct Foliation {
    pub subspace: Subspace,
    pub dt: f64,
    pub psi: Vec<ForwardCurve>,
    /// `ψ'(t_j) = dψ/dξ + (I − P_V) α(ψ, y*)`.
    pub psi_dot: Vec<ForwardCurve>,
}

impl Foliation {
    pub fn times(&self) -> Vec<f64> {
        (0..self.psi.len()).map(|j| j as f64 * self.dt).collect()
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        let j = (t / self.dt).round();
        if j < 0.0 || j as usize >= self.psi.len() || (j * self.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::OffGrid(t));
        }
        Ok(j as usize)
    }

    /// `dist_H(r, M_t)` at time index `j`.
    pub fn distance(&self, j: usize, r: &ForwardCurve) -> Result<f64> {
        self.subspace.complement(&r.axpy(-1.0, &self.psi[j])?)?.h_norm()
    }
}

/// Advances `ψ' = dψ/dξ + (I − P_V) α(ψ, y*)` from `ψ(0) = h0` by the
/// same Euler–shift splitting as the forward-curve simulator.
pub fn parametrize_foliation(
    model: &ModelSpec,
    subspace: Subspace,
    h0: &ForwardCurve,
    t_max: f64,
    dt: f64,
) -> Result<Foliation> {
    h0.check_grid(model.grid())?;
    if !(dt > 0.0 && t_max >= 0.0) {
        return Err(Error::InvalidModel(format!("bad time grid t_max={t_max}, dt={dt}")));
    }
    let n = (t_max / dt).round() as usize;
    let y_star = model.mpr().y_star();
    let blow_up = 1e6 * (1.0 + h0.h_norm()?);
    let mut psi = Vec::with_capacity(n + 1);
    let mut psi_dot = Vec::with_capacity(n + 1);
    let mut cur = h0.clone();
    for j in 0..=n {
        let a = subspace.complement(&alpha(model, &cur, y_star)?)?;
        let dot = cur.derivative().axpy(1.0, &a)?;
        psi.push(cur.clone());
        psi_dot.push(dot);
        if j == n {
            break;
        }
        let next = cur.axpy(dt, &a)?.shift(dt)?;
        if !next.is_finite() || next.h_norm()? > blow_up {
            return Err(Error::FoliationBlowUp(j + 1));
        }
        cur = next;
    }
    Ok(Foliation { subspace, dt, psi, psi_dot })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::Refuted => "refuted",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub t: f64,
    pub y_index: usize,
    pub drift: f64,
    pub vol: Vec<f64>,
    pub jump: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub rows: Vec<ResidualRow>,
    pub max_drift: f64,
    pub max_vol: f64,
    pub max_jump: f64,
    pub dim: usize,
    pub certify_tol: f64,
    pub refute_tol: f64,
    pub verdict: Verdict,
}

impl InvarianceReport {
    pub fn max_residual(&self) -> f64 {
        self.max_drift.max(self.max_vol).max(self.max_jump)
    }
}

/// Perturbations `v ∈ V` as generator coefficients: zero first, then
/// `count` random draws, each generator scaled to H-norm at most `scale`.
pub fn default_v_samples(subspace: &Subspace, count: usize, scale: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let norms = subspace.generators().iter().map(|g| g.sample(subspace.grid()).h_norm()).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![0.0; norms.len()]];
    for _ in 0..count {
        out.push(
            norms
                .iter()
                .map(|&n| {
                    let u: f64 = rng.random_range(-1.0..1.0);
                    if n > 0.0 {
                        scale * u / (n * norms.len() as f64)
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
    }
    Ok(out)
}

/// Tangency residuals at `h = ψ(t) + v` for every sampled `t`, `v` and
/// every `y` in the model's state sample.
pub fn check_invariance(
    model: &ModelSpec,
    foliation: &Foliation,
    t_samples: &[f64],
    v_samples: &[Vec<f64>],
) -> Result<InvarianceReport> {
    let sub = &foliation.subspace;
    let d = model.drivers().wiener();
    let n = model.drivers().n_jump();
    let mut rows = Vec::new();
    for &t in t_samples {
        let j = foliation.index_of(t)?;
        let psi = &foliation.psi[j];
        let psi_fd = psi.derivative();
        for coeffs in v_samples {
            let v = sub.generator_combination(coeffs);
            let h = psi.axpy(1.0, &v)?;
            let ah = psi_fd.axpy(1.0, &sub.generator_combination_derivative(coeffs))?;
            let vol = (0..d).map(|k| sub.complement(&model.sigma_at(k, &h))?.h_norm()).collect::<Result<Vec<_>>>()?;
            let jump = (0..n).map(|k| sub.complement(&model.gamma_at(k, &h))?.h_norm()).collect::<Result<Vec<_>>>()?;
            for (yi, &y) in model.mpr().y_samples().iter().enumerate() {
                let target = ah.axpy(1.0, &alpha(model, &h, y)?)?.axpy(-1.0, &foliation.psi_dot[j])?;
                let drift = sub.complement(&target)?.h_norm()?;
                rows.push(ResidualRow { t, y_index: yi, drift, vol: vol.clone(), jump: jump.clone() });
            }
        }
    }
    let max_of = |f: &dyn Fn(&ResidualRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let max_drift = max_of(&|r| r.drift);
    let max_vol = max_of(&|r| r.vol.iter().cloned().fold(0.0, f64::max));
    let max_jump = max_of(&|r| r.jump.iter().cloned().fold(0.0, f64::max));
    let worst = max_drift.max(max_vol).max(max_jump);
    let verdict = if worst <= CERTIFY_TOL {
        Verdict::Certified
    } else if worst > REFUTE_TOL {
        Verdict::Refuted
    } else {
        Verdict::Inconclusive
    };
    Ok(InvarianceReport {
        rows,
        max_drift,
        max_vol,
        max_jump,
        dim: sub.dim(),
        certify_tol: CERTIFY_TOL,
        refute_tol: REFUTE_TOL,
        verdict,
    })
}

/// Coordinates of the invariant dynamics on `V`:
/// `dz = (D z + a(t, z, y)) dt + Σ b^k dW^k + Σ c^k dX^k`.
#[derive(Debug, Clone)]
pub struct FactorModel {
    /// `D_ij = ⟨e_i, d/dξ e_j⟩`.
    pub d_matrix: DMatrix<f64>,
    /// Coordinates of `σ^k(ψ(0))`.
    pub b: Vec<Vec<f64>>,
    /// Coordinates of `γ^k(ψ(0))`.
    pub c: Vec<Vec<f64>>,
}

pub fn finite_dim_realization(
    model: &ModelSpec,
    foliation: &Foliation,
    report: &InvarianceReport,
) -> Result<FactorModel> {
    if report.verdict != Verdict::Certified {
        return Err(Error::NotCertified(report.max_residual()));
    }
    let sub = &foliation.subspace;
    let m = sub.dim();
    let mut d_matrix = DMatrix::zeros(m, m);
    for (j, de) in sub.basis_derivatives().iter().enumerate() {
        for (i, v) in sub.coords(de).into_iter().enumerate() {
            d_matrix[(i, j)] = v;
        }
    }
    let h0 = &foliation.psi[0];
    let b = (0..model.drivers().wiener()).map(|k| sub.coords(&model.sigma_at(k, h0))).collect();
    let c = (0..model.drivers().n_jump()).map(|k| sub.coords(&model.gamma_at(k, h0))).collect();
    Ok(FactorModel { d_matrix, b, c })
}

impl FactorModel {
    /// Euler–Maruyama for the factor SDE on the foliation's time grid.
    /// Returns `r_t = ψ(t) + Σ z^i e_i` at every step.
    pub fn simulate(
        &self,
        model: &ModelSpec,
        foliation: &Foliation,
        y_path: &[f64],
        increments: &IncrementMatrix,
    ) -> Result<Vec<ForwardCurve>> {
        let sub = &foliation.subspace;
        let n = increments.n_steps();
        if foliation.psi.len() < n + 1 || y_path.len() < n + 1 {
            return Err(Error::InvalidModel("factor simulation longer than the foliation".into()));
        }
        if (increments.dt() - foliation.dt).abs() > 1e-12 {
            return Err(Error::InvalidModel("factor and foliation time steps differ".into()));
        }
        let dt = increments.dt();
        let m = sub.dim();
        let mut z = nalgebra::DVector::zeros(m);
        let mut out = Vec::with_capacity(n + 1);
        for s in 0..=n {
            let r = foliation.psi[s].axpy(1.0, &sub.embed(z.as_slice()))?;
            if s == n {
                out.push(r);
                break;
            }
            let a = sub.coords(&alpha(model, &r, y_path[s])?);
            let mut dz = &self.d_matrix * &z * dt;
            for i in 0..m {
                dz[i] += a[i] * dt;
            }
            for (k, w) in increments.dw(s).iter().enumerate() {
                let b = sub.coords(&model.sigma_at(k, &r));
                for i in 0..m {
                    dz[i] += b[i] * w;
                }
            }
            for (k, x) in increments.dx(s).iter().enumerate() {
                let c = sub.coords(&model.gamma_at(k, &r));
                for i in 0..m {
                    dz[i] += c[i] * x;
                }
            }
            z += dz;
            out.push(r);
        }
        Ok(out)
    }
}

/// Terminal-curve discrepancy between the forward-curve simulator and the
/// factor model driven by the same increments.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorComparison {
    pub dt: f64,
    /// Relative H-norm errors per path, measured on `[0, ξ_max − t_max]`.
    pub errors: Vec<f64>,
    pub worst: f64,
    pub mean: f64,
}

/// Runs both simulators over the foliation horizon. Maturities within
/// `t_max` of `ξ_max` are excluded from the norm: there the grid boundary,
/// not the dynamics, decides the curve.
pub fn compare_factor_model(
    model: &ModelSpec,
    foliation: &Foliation,
    factor: &FactorModel,
    state: &StateProcessSpec,
    n_paths: usize,
    seed: u64,
) -> Result<FactorComparison> {
    let dt = foliation.dt;
    let n = foliation.psi.len() - 1;
    let horizon = model.grid().xi_max() - n as f64 * dt;
    let errors = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let inc = sample_increments(model.drivers(), dt, n, seed.wrapping_add(p))?;
            let w = if inc.n_wiener() > 0 { inc.wiener_column(0) } else { vec![0.0; n] };
            let st = simulate_state_with(state, dt, &w)?;
            let fac = factor.simulate(model, foliation, &st.y, &inc)?;
            let mut r = foliation.psi[0].clone();
            for s in 0..n {
                r = step(model, &r, st.y[s], dt, inc.dw(s), inc.dx(s))?;
            }
            let diff = r.axpy(-1.0, &fac[n])?.truncated(horizon)?.h_norm()?;
            Ok(diff / r.truncated(horizon)?.h_norm()?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = errors.iter().fold(0.0_f64, |m, e| m.max(*e));
    let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    Ok(FactorComparison { dt, errors, worst, mean })
}

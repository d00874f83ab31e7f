//! Model assembly: grid, volatilities, drivers and market prices of risk.

use std::sync::Arc;

use crate::curve::{CurveGrid, ForwardCurve};
use crate::error::{Error, Result};
use crate::levy::DriverConfig;
use crate::mpr::MprFamily;
use crate::qexp::QuasiExp;

/// A volatility `h ↦ c(h)·g` with `g` quasi-exponential and `c(h) = 1`,
/// or `c(h) = scale·h(0)` when state-scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSpec {
    pub shape: QuasiExp,
    pub state_scale: Option<f64>,
}

impl VolSpec {
    pub fn fixed(shape: QuasiExp) -> Self {
        Self { shape, state_scale: None }
    }

    pub fn state_scaled(shape: QuasiExp, scale: f64) -> Self {
        Self { shape, state_scale: Some(scale) }
    }

    pub fn factor(&self, h: &ForwardCurve) -> f64 {
        self.factor_at(h.left())
    }

    pub fn factor_at(&self, r0: f64) -> f64 {
        match self.state_scale {
            None => 1.0,
            Some(s) => s * r0,
        }
    }

    pub fn is_state_dependent(&self) -> bool {
        self.state_scale.is_some()
    }
}

/// Grid samples of a volatility shape and of its integrated form.
#[derive(Debug, Clone, PartialEq)]
pub struct VolCache {
    pub shape: ForwardCurve,
    pub integrated: ForwardCurve,
}

impl VolCache {
    fn new(spec: &VolSpec, grid: &Arc<CurveGrid>) -> Result<Self> {
        let shape = spec.shape.sample(grid);
        let integrated = spec.shape.integrated_vol().sample(grid);
        if !shape.is_finite() || !integrated.is_finite() {
            return Err(Error::InvalidModel("volatility not finite on grid".into()));
        }
        Ok(Self { shape, integrated })
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    grid: Arc<CurveGrid>,
    sigma: Vec<VolSpec>,
    gamma: Vec<VolSpec>,
    drivers: DriverConfig,
    mpr: MprFamily,
    sigma_cache: Vec<VolCache>,
    gamma_cache: Vec<VolCache>,
}

impl ModelSpec {
    pub fn new(
        grid: Arc<CurveGrid>,
        sigma: Vec<VolSpec>,
        gamma: Vec<VolSpec>,
        drivers: DriverConfig,
        mpr: MprFamily,
    ) -> Result<Self> {
        if sigma.len() != drivers.wiener() {
            return Err(Error::InvalidModel(format!(
                "{} Wiener volatilities for {} Wiener drivers",
                sigma.len(),
                drivers.wiener()
            )));
        }
        if gamma.len() != drivers.n_jump() {
            return Err(Error::InvalidModel(format!(
                "{} jump volatilities for {} jump drivers",
                gamma.len(),
                drivers.n_jump()
            )));
        }
        for v in sigma.iter().chain(&gamma) {
            if !v.shape.is_decaying() {
                return Err(Error::NotQuasiExponential("volatility with a growing exponential".into()));
            }
        }
        let sigma_cache = sigma.iter().map(|s| VolCache::new(s, &grid)).collect::<Result<Vec<_>>>()?;
        let gamma_cache = gamma.iter().map(|g| VolCache::new(g, &grid)).collect::<Result<Vec<_>>>()?;
        let model = Self { grid, sigma, gamma, drivers, mpr, sigma_cache, gamma_cache };
        model.check_cumulant_envelope()?;
        Ok(model)
    }

    /// Fixed-factor jump volatilities on parametric drivers must keep
    /// `ϑ(y) + Γ(ξ)` inside the cumulant domain on the whole grid.
    fn check_cumulant_envelope(&self) -> Result<()> {
        for (k, comp) in self.drivers.components().iter().enumerate() {
            if comp.is_finite_activity() || self.gamma[k].is_state_dependent() {
                continue;
            }
            let big_g = &self.gamma_cache[k].integrated;
            for &y in self.mpr.y_samples() {
                let shift = self.mpr.exp_vartheta(y).unwrap_or(0.0);
                for &g in big_g.values() {
                    comp.check_domain(shift + g)?;
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<CurveGrid> {
        &self.grid
    }

    pub fn sigma(&self) -> &[VolSpec] {
        &self.sigma
    }

    pub fn gamma(&self) -> &[VolSpec] {
        &self.gamma
    }

    pub fn drivers(&self) -> &DriverConfig {
        &self.drivers
    }

    pub fn mpr(&self) -> &MprFamily {
        &self.mpr
    }

    pub fn sigma_cache(&self) -> &[VolCache] {
        &self.sigma_cache
    }

    pub fn gamma_cache(&self) -> &[VolCache] {
        &self.gamma_cache
    }

    pub fn with_mpr(&self, mpr: MprFamily) -> Result<Self> {
        Self::new(self.grid.clone(), self.sigma.clone(), self.gamma.clone(), self.drivers.clone(), mpr)
    }

    /// Same model on another grid.
    pub fn on_grid(&self, grid: Arc<CurveGrid>) -> Result<Self> {
        Self::new(grid, self.sigma.clone(), self.gamma.clone(), self.drivers.clone(), self.mpr.clone())
    }

    /// `σ^k(h)` sampled on the grid.
    pub fn sigma_at(&self, k: usize, h: &ForwardCurve) -> ForwardCurve {
        self.sigma_cache[k].shape.scaled(self.sigma[k].factor(h))
    }

    /// `γ^k(h)` sampled on the grid.
    pub fn gamma_at(&self, k: usize, h: &ForwardCurve) -> ForwardCurve {
        self.gamma_cache[k].shape.scaled(self.gamma[k].factor(h))
    }

    /// `Γ^k(h) = −∫_0^· γ^k(h)`.
    pub fn big_gamma_at(&self, k: usize, h: &ForwardCurve) -> ForwardCurve {
        self.gamma_cache[k].integrated.scaled(self.gamma[k].factor(h))
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma_cache.iter().all(|c| c.shape.max_abs() == 0.0)
            && self.gamma_cache.iter().all(|c| c.shape.max_abs() == 0.0)
    }
}

//! Real-world HJMM path simulation by Euler–shift splitting.

use rayon::prelude::*;

use crate::curve::ForwardCurve;
use crate::drift::alpha_into;
use crate::error::{Error, Result};
use crate::levy::{sample_increments, IncrementMatrix};
use crate::model::ModelSpec;
use crate::mpr::{density_candidate, psi_compensator, simulate_state_with, StateKind, StateProcessSpec};

/// Fewest paths accepted by [`martingale_statistic`].
pub const MIN_PATHS: usize = 30;

/// `P(τ) = exp(−∫_0^τ h)`.
pub fn bond_price(curve: &ForwardCurve, tau: f64) -> Result<f64> {
    let xi_max = curve.grid().xi_max();
    if !(0.0..=xi_max * (1.0 + 1e-12)).contains(&tau) {
        return Err(Error::MaturityOutOfRange { tau, xi_max });
    }
    if tau == 0.0 {
        return Ok(1.0);
    }
    Ok((-curve.integral_to(tau.min(xi_max))).exp())
}

/// One splitting step: `shift(r + α(r,y)dt + Σσ^k ΔW^k + Σγ^k ΔX^k, dt)`.
pub fn step(model: &ModelSpec, curve: &ForwardCurve, y: f64, dt: f64, dw: &[f64], dx: &[f64]) -> Result<ForwardCurve> {
    step_indexed(model, curve, y, dt, dw, dx, 0)
}

fn step_indexed(
    model: &ModelSpec,
    curve: &ForwardCurve,
    y: f64,
    dt: f64,
    dw: &[f64],
    dx: &[f64],
    index: usize,
) -> Result<ForwardCurve> {
    let n = model.grid().n_points();
    let mut next = vec![0.0; n];
    alpha_into(model, curve, y, &mut next).map_err(|e| abort(index, e.to_string()))?;
    for (o, r) in next.iter_mut().zip(curve.values()) {
        *o = r + *o * dt;
    }
    for (k, w) in dw.iter().enumerate() {
        let c = model.sigma()[k].factor(curve) * w;
        if c != 0.0 {
            for (o, s) in next.iter_mut().zip(model.sigma_cache()[k].shape.values()) {
                *o += c * s;
            }
        }
    }
    for (k, x) in dx.iter().enumerate() {
        let c = model.gamma()[k].factor(curve) * x;
        if c != 0.0 {
            for (o, g) in next.iter_mut().zip(model.gamma_cache()[k].shape.values()) {
                *o += c * g;
            }
        }
    }
    let moved = ForwardCurve::from_values(model.grid().clone(), next).map_err(|e| abort(index, e.to_string()))?;
    moved.shift(dt)
}

fn abort(step: usize, reason: String) -> Error {
    Error::PathAborted { step, reason }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_max: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Absolute maturities `T` with `T ≤ ξ_max`.
    pub maturities: Vec<f64>,
    pub state: StateProcessSpec,
    /// Record every `record_every`-th step (the last step is always kept).
    pub record_every: usize,
    pub store_curves: bool,
}

impl SimConfig {
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if !(self.dt > 0.0 && self.t_max >= 0.0 && self.dt.is_finite() && self.t_max.is_finite()) {
            return Err(Error::InvalidModel(format!("bad time grid t_max={}, dt={}", self.t_max, self.dt)));
        }
        if ((self.t_max / self.dt).round() * self.dt - self.t_max).abs() > 1e-9 * self.t_max.max(1.0) {
            return Err(Error::InvalidModel("t_max is not a multiple of dt".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidModel("record_every must be positive".into()));
        }
        let xi_max = model.grid().xi_max();
        for &t in &self.maturities {
            if !(t >= 0.0 && t <= xi_max) {
                return Err(Error::MaturityOutOfRange { tau: t, xi_max });
            }
        }
        if self.state.kind == StateKind::BesselInverse && model.drivers().wiener() == 0 {
            return Err(Error::InvalidModel("the Bessel state needs a Wiener driver".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPath {
    pub path_id: usize,
    pub times: Vec<f64>,
    pub curves: Vec<ForwardCurve>,
    pub short_rate: Vec<f64>,
    pub bank: Vec<f64>,
    pub gop: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    /// `bonds[i][j] = P_{t_j}(T_i)`, NaN once `t_j > T_i`.
    pub bonds: Vec<Vec<f64>>,
    /// `P_{t_j}(T_i) / S_{t_j}`.
    pub benchmarked: Vec<Vec<f64>>,
    pub floor_hits: usize,
}

impl SimulationPath {
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0)).ok_or(Error::OffGrid(t))
    }
}

/// Simulates one path from its own increments.
pub fn simulate_path(
    model: &ModelSpec,
    h0: &ForwardCurve,
    cfg: &SimConfig,
    increments: &IncrementMatrix,
    path_id: usize,
) -> Result<SimulationPath> {
    h0.check_grid(model.grid())?;
    let dt = cfg.dt;
    let n = increments.n_steps();
    let d = model.drivers().wiener();
    let mpr = model.mpr();
    let state = match cfg.state.kind {
        StateKind::Frozen => simulate_state_with(&cfg.state, dt, &vec![0.0; n])?,
        StateKind::BesselInverse => simulate_state_with(&cfg.state, dt, &increments.wiener_column(0))?,
    };
    let z_full = density_candidate(mpr, model.drivers(), &state.y, increments)?;

    let n_mat = cfg.maturities.len();
    let mut out = SimulationPath {
        path_id,
        times: Vec::new(),
        curves: Vec::new(),
        short_rate: Vec::new(),
        bank: Vec::new(),
        gop: Vec::new(),
        z: Vec::new(),
        y: Vec::new(),
        bonds: vec![Vec::new(); n_mat],
        benchmarked: vec![Vec::new(); n_mat],
        floor_hits: state.floor_hits,
    };
    let mut r = h0.clone();
    let mut log_bank: f64 = 0.0;
    let mut log_gop: f64 = 0.0;
    for s in 0..=n {
        let t = s as f64 * dt;
        let y = state.y[s];
        if s % cfg.record_every == 0 || s == n {
            let bank = log_bank.exp();
            let gop = log_gop.exp();
            out.times.push(t);
            out.short_rate.push(r.left());
            out.bank.push(bank);
            out.gop.push(gop);
            out.z.push(z_full[s]);
            out.y.push(y);
            for (i, &big_t) in cfg.maturities.iter().enumerate() {
                let tau = big_t - t;
                let p = if tau < -1e-9 * big_t.max(1.0) { f64::NAN } else { bond_price(&r, tau.max(0.0))? };
                out.bonds[i].push(p);
                out.benchmarked[i].push(p / gop);
            }
            if cfg.store_curves {
                out.curves.push(r.clone());
            }
        }
        if s == n {
            break;
        }
        let rate = r.left();
        log_bank += rate * dt;
        let mut theta_sq = 0.0;
        let mut theta_dw = 0.0;
        for (k, w) in increments.dw(s).iter().enumerate().take(d) {
            let th = mpr.theta_component(y, k)?;
            theta_sq += th * th;
            theta_dw += th * w;
        }
        let mut jump_log = 0.0;
        for ev in increments.jumps(s) {
            jump_log -= (1.0 - mpr.psi(y, ev.size)).ln();
        }
        log_gop += (rate + 0.5 * theta_sq - psi_compensator(mpr, model.drivers(), y)?) * dt + theta_dw + jump_log;
        r = step_indexed(model, &r, y, dt, increments.dw(s), increments.dx(s), s)?;
    }
    Ok(out)
}

/// Simulates `cfg.n_paths` independent paths; path `i` uses seed `cfg.seed + i`.
pub fn simulate(model: &ModelSpec, h0: &ForwardCurve, cfg: &SimConfig) -> Result<Vec<SimulationPath>> {
    cfg.validate(model)?;
    let n = cfg.n_steps();
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let inc = sample_increments(model.drivers(), cfg.dt, n, cfg.seed.wrapping_add(i as u64))?;
            simulate_path(model, h0, cfg, &inc, i)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `P_t(T_i) / B_t`.
    Discounted(usize),
    /// `P_t(T_i) / S_t`.
    Benchmarked(usize),
    Z,
    /// `B_t / S_t`.
    BenchmarkedBank,
}

impl Quantity {
    fn value(&self, p: &SimulationPath, j: usize) -> f64 {
        match *self {
            Quantity::Discounted(i) => p.bonds[i][j] / p.bank[j],
            Quantity::Benchmarked(i) => p.benchmarked[i][j],
            Quantity::Z => p.z[j],
            Quantity::BenchmarkedBank => p.bank[j] / p.gop[j],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleStat {
    /// Mean of `X_t − X_0` across paths.
    pub mean: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub initial: f64,
}

pub fn martingale_statistic(paths: &[SimulationPath], q: Quantity, t: f64) -> Result<MartingaleStat> {
    if paths.len() < MIN_PATHS {
        return Err(Error::UnderPowered { needed: MIN_PATHS, got: paths.len() });
    }
    let j = paths[0].time_index(t)?;
    let diffs: Vec<f64> = paths.iter().map(|p| q.value(p, j) - q.value(p, 0)).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let z_score = if std_error == 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        }
    } else {
        mean / std_error
    };
    Ok(MartingaleStat { mean, std_error, z_score, initial: q.value(&paths[0], 0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::CurveGrid;
    use crate::levy::{DriverConfig, Jump, LevyComponentSpec};
    use crate::model::VolSpec;
    use crate::mpr::MprFamily;
    use crate::qexp::QuasiExp;

    fn frozen() -> StateProcessSpec {
        StateProcessSpec::new(StateKind::Frozen, 0.0).unwrap()
    }

    fn cfg(n_paths: usize, t_max: f64, dt: f64) -> SimConfig {
        SimConfig {
            t_max,
            dt,
            n_paths,
            seed: 7,
            maturities: vec![2.0],
            state: frozen(),
            record_every: 1,
            store_curves: false,
        }
    }

    #[test]
    fn bond_price_examples() {
        let grid = CurveGrid::default_grid();
        let flat = ForwardCurve::constant(grid.clone(), 0.03).unwrap();
        assert_eq!(bond_price(&flat, 0.0).unwrap(), 1.0);
        assert!((bond_price(&flat, 2.0).unwrap() - (-0.06f64).exp()).abs() < 1e-12);
        let fine = CurveGrid::uniform(2.0, 2001, 0.1).unwrap();
        let e = ForwardCurve::from_fn(fine, |x| 0.05 * (-x).exp()).unwrap();
        let want = (-0.05 * (1.0 - (-1.0f64).exp())).exp();
        assert!((bond_price(&e, 1.0).unwrap() - want).abs() < 1e-8);
        assert!(bond_price(&flat, 31.0).is_err());
        assert!(bond_price(&flat, -0.1).is_err());
    }

    #[test]
    fn deterministic_flat_curve() {
        let grid = CurveGrid::uniform(5.0, 101, 0.1).unwrap();
        let drivers = DriverConfig::new(1, vec![]).unwrap();
        let m = ModelSpec::new(
            grid.clone(),
            vec![VolSpec::fixed(QuasiExp::zero())],
            vec![],
            drivers,
            MprFamily::risk_neutral(),
        )
        .unwrap();
        let h0 = ForwardCurve::constant(grid, 0.04).unwrap();
        let paths = simulate(&m, &h0, &cfg(30, 1.0, 0.05)).unwrap();
        let p = &paths[3];
        for (j, &t) in p.times.iter().enumerate() {
            assert!((p.bonds[0][j] - (-0.04 * (2.0 - t)).exp()).abs() < 1e-12);
            assert!((p.bank[j] - (0.04 * t).exp()).abs() < 1e-12);
            assert_eq!(p.gop[j], p.bank[j]);
        }
        let st = martingale_statistic(&paths, Quantity::Discounted(0), 1.0).unwrap();
        assert_eq!(st.z_score, 0.0);
        assert!(martingale_statistic(&paths[..29], Quantity::Z, 1.0).is_err());
        assert!(martingale_statistic(&paths, Quantity::Z, 0.512).is_err());
    }

    #[test]
    fn short_rate_is_left_endpoint() {
        let grid = CurveGrid::uniform(5.0, 101, 0.1).unwrap();
        let drivers = DriverConfig::new(1, vec![]).unwrap();
        let m = ModelSpec::new(
            grid.clone(),
            vec![VolSpec::fixed(QuasiExp::vasicek(0.01, 0.5).unwrap())],
            vec![],
            drivers,
            MprFamily::risk_neutral(),
        )
        .unwrap();
        let h0 = ForwardCurve::constant(grid, 0.02).unwrap();
        let mut c = cfg(1, 1.0, 0.05);
        c.store_curves = true;
        let paths = simulate(&m, &h0, &c).unwrap();
        for (j, curve) in paths[0].curves.iter().enumerate() {
            assert_eq!(paths[0].short_rate[j], curve.values()[0]);
        }
        let last = paths[0].times.len() - 1;
        assert!(paths[0].bonds[0][last].is_finite());
    }

    #[test]
    fn jump_response_is_linear() {
        let grid = CurveGrid::uniform(5.0, 101, 0.1).unwrap();
        let comp = LevyComponentSpec::jump_table(vec![Jump { size: 1.0, intensity: 1.0 }], false).unwrap();
        let drivers = DriverConfig::new(0, vec![comp]).unwrap();
        let g = QuasiExp::vasicek(0.01, 0.3).unwrap();
        let m =
            ModelSpec::new(grid.clone(), vec![], vec![VolSpec::fixed(g.clone())], drivers, MprFamily::risk_neutral())
                .unwrap();
        let h = ForwardCurve::constant(grid.clone(), 0.02).unwrap();
        let a = step(&m, &h, 0.0, 0.05, &[], &[0.0]).unwrap();
        let b = step(&m, &h, 0.0, 0.05, &[], &[1.0]).unwrap();
        let want = g.sample(&grid).shift(0.05).unwrap();
        for i in 0..grid.n_points() {
            assert!((b.values()[i] - a.values()[i] - want.values()[i]).abs() < 1e-15);
        }
    }
}

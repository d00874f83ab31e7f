//! Market prices of risk `(Θ, Ψ)`, `Φ = 1 − Ψ`, and the state process `Y`.
//!
//! The state space is represented by a finite sample list that must contain
//! the distinguished state `y*` at which both prices of risk vanish. At `y*`
//! every family evaluates to zero by construction: the state space may be
//! extended by such a point without changing the model elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::levy::{DriverConfig, IncrementMatrix, LevyKind};

/// Floor applied to the squared Bessel state before inversion.
pub const BESQ_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaKind {
    Zero,
    Constant(Vec<f64>),
    /// `Θ(y) = 2√y` in every Wiener component.
    BesselSqrt,
}

/// State map `y ↦ ϑ(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Vartheta {
    Const(f64),
    Linear(f64),
}

impl Vartheta {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Vartheta::Const(c) => c,
            Vartheta::Linear(a) => a * y,
        }
    }
}

/// Jump map `x ↦ ξ(x)` of the product form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiMap {
    Identity,
    Scale(f64),
    Tanh,
}

impl XiMap {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            XiMap::Identity => x,
            XiMap::Scale(b) => b * x,
            XiMap::Tanh => x.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PsiKind {
    Zero,
    /// `Ψ(y, x) = −y`.
    ConstantInX,
    /// `Φ(y, x) = exp(x ϑ(y))`.
    ExpInX(Vartheta),
    /// `Φ(y, x) = exp(ϑ(y) ξ(x))`.
    ProductForm(Vartheta, XiMap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MprFamily {
    theta: ThetaKind,
    psi: PsiKind,
    y_star: f64,
    y_samples: Vec<f64>,
}

/// Default state sample: eight points including `y* = 0`.
pub fn default_y_samples() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 1.0]
}

impl MprFamily {
    /// Validates the family against the Wiener dimension and the jump
    /// supports of the drivers it will be used with.
    pub fn new(
        theta: ThetaKind,
        psi: PsiKind,
        y_star: f64,
        y_samples: Vec<f64>,
        drivers: &DriverConfig,
    ) -> Result<Self> {
        if y_samples.is_empty() {
            return Err(Error::InvalidMpr("y_samples is empty".into()));
        }
        if y_samples.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidMpr("non-finite state sample".into()));
        }
        if !y_samples.contains(&y_star) {
            return Err(Error::InvalidMpr(format!("y_samples must contain y* = {y_star}")));
        }
        if let ThetaKind::Constant(c) = &theta {
            if c.len() != drivers.wiener() {
                return Err(Error::InvalidMpr(format!(
                    "theta has {} components, drivers have {}",
                    c.len(),
                    drivers.wiener()
                )));
            }
        }
        if theta == ThetaKind::BesselSqrt && y_samples.iter().any(|&y| y < 0.0) {
            return Err(Error::InvalidMpr("bessel theta needs y ≥ 0".into()));
        }
        let family = Self { theta, psi, y_star, y_samples };
        // Ψ < 1 on the reachable support, i.e. Φ > 0.
        for comp in drivers.components() {
            let support: Vec<f64> = match comp.kind() {
                LevyKind::JumpTable(j) => j.iter().map(|j| j.size).collect(),
                LevyKind::BilateralGamma { .. } => vec![-1.0, 1.0],
            };
            for &y in &family.y_samples {
                for &x in &support {
                    let p = family.psi(y, x);
                    if !(p < 1.0) {
                        return Err(Error::InvalidMpr(format!("Ψ({y}, {x}) = {p} is not < 1")));
                    }
                }
            }
        }
        Ok(family)
    }

    /// `(Θ, Ψ) = 0` with the single state `y* = 0`.
    pub fn risk_neutral() -> Self {
        Self { theta: ThetaKind::Zero, psi: PsiKind::Zero, y_star: 0.0, y_samples: vec![0.0] }
    }

    pub fn theta_kind(&self) -> &ThetaKind {
        &self.theta
    }

    pub fn psi_kind(&self) -> &PsiKind {
        &self.psi
    }

    pub fn y_star(&self) -> f64 {
        self.y_star
    }

    pub fn y_samples(&self) -> &[f64] {
        &self.y_samples
    }

    pub fn with_y_samples(&self, y_samples: Vec<f64>) -> Result<Self> {
        if !y_samples.contains(&self.y_star) {
            return Err(Error::InvalidMpr(format!("y_samples must contain y* = {}", self.y_star)));
        }
        Ok(Self { y_samples, ..self.clone() })
    }

    pub fn is_zero(&self) -> bool {
        self.theta == ThetaKind::Zero && self.psi == PsiKind::Zero
    }

    /// `Θ^k(y)` for component `k`.
    pub fn theta_component(&self, y: f64, k: usize) -> Result<f64> {
        if y == self.y_star {
            return Ok(0.0);
        }
        match &self.theta {
            ThetaKind::Zero => Ok(0.0),
            ThetaKind::Constant(c) => Ok(c[k]),
            ThetaKind::BesselSqrt => {
                if y < 0.0 {
                    Err(Error::InvalidMpr(format!("negative state {y} for sqrt theta")))
                } else {
                    Ok(2.0 * y.sqrt())
                }
            }
        }
    }

    pub fn theta(&self, y: f64, d: usize) -> Result<Vec<f64>> {
        (0..d).map(|k| self.theta_component(y, k)).collect()
    }

    /// `Ψ(y, x)`.
    pub fn psi(&self, y: f64, x: f64) -> f64 {
        if y == self.y_star {
            return 0.0;
        }
        match &self.psi {
            PsiKind::Zero => 0.0,
            PsiKind::ConstantInX => -y,
            PsiKind::ExpInX(v) => -(x * v.eval(y)).exp_m1(),
            PsiKind::ProductForm(v, xi) => -(v.eval(y) * xi.eval(x)).exp_m1(),
        }
    }

    /// `Φ(y, x) = 1 − Ψ(y, x)`.
    pub fn phi(&self, y: f64, x: f64) -> f64 {
        1.0 - self.psi(y, x)
    }

    /// `ϑ(y)` when `Φ` has the exponential form, zero when `Ψ ≡ 0`.
    pub fn exp_vartheta(&self, y: f64) -> Option<f64> {
        if y == self.y_star {
            return Some(0.0);
        }
        match &self.psi {
            PsiKind::Zero => Some(0.0),
            PsiKind::ExpInX(v) => Some(v.eval(y)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateKind {
    /// `Y_t ≡ y0`.
    Frozen,
    /// `Y = 1/B` with `B` a squared Bessel process of dimension four.
    BesselInverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateProcessSpec {
    pub kind: StateKind,
    pub y0: f64,
}

impl StateProcessSpec {
    pub fn new(kind: StateKind, y0: f64) -> Result<Self> {
        if !y0.is_finite() || (kind == StateKind::BesselInverse && y0 <= 0.0) {
            return Err(Error::InvalidMpr(format!("invalid initial state {y0}")));
        }
        Ok(Self { kind, y0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    /// `Y` at every grid time, length `n_steps + 1`.
    pub y: Vec<f64>,
    /// The Wiener increments that drove `B`, for reuse by the caller.
    pub dw: Vec<f64>,
    /// Steps at which `B` was clamped to [`BESQ_FLOOR`].
    pub floor_hits: usize,
}

/// Simulates the state with its own Wiener increments.
pub fn simulate_state(spec: &StateProcessSpec, t_max: f64, dt: f64, seed: u64) -> Result<StatePath> {
    if !(dt > 0.0 && t_max >= 0.0) {
        return Err(Error::InvalidMpr(format!("bad time grid t_max={t_max}, dt={dt}")));
    }
    let n_steps = (t_max / dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    let dw: Vec<f64> = (0..n_steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sqrt_dt * z
        })
        .collect();
    simulate_state_with(spec, dt, &dw)
}

/// Simulates the state driven by given Wiener increments. The Bessel kind
/// runs `dB = 4dt + 2√B dW` by Euler with full truncation and inverts.
pub fn simulate_state_with(spec: &StateProcessSpec, dt: f64, dw: &[f64]) -> Result<StatePath> {
    let mut y = Vec::with_capacity(dw.len() + 1);
    let mut floor_hits = 0;
    match spec.kind {
        StateKind::Frozen => y.resize(dw.len() + 1, spec.y0),
        StateKind::BesselInverse => {
            let mut b = 1.0 / spec.y0;
            y.push(spec.y0);
            for &w in dw {
                b += 4.0 * dt + 2.0 * b.max(0.0).sqrt() * w;
                if b < BESQ_FLOOR {
                    b = BESQ_FLOOR;
                    floor_hits += 1;
                }
                y.push(1.0 / b);
            }
        }
    }
    Ok(StatePath { y, dw: dw.to_vec(), floor_hits })
}

/// `Σ_k ∫ Ψ^k(y, x) F^k(dx)`, the compensator rate of `ψ * μ^X`.
pub fn psi_compensator(family: &MprFamily, drivers: &DriverConfig, y: f64) -> Result<f64> {
    let mut acc = 0.0;
    for comp in drivers.components() {
        match comp.jumps() {
            Some(jumps) => acc += jumps.iter().map(|j| j.intensity * family.psi(y, j.size)).sum::<f64>(),
            None => {
                if y != family.y_star() && family.psi_kind() != &PsiKind::Zero {
                    return Err(Error::Unsupported("nonzero Ψ on an infinite-activity component".into()));
                }
            }
        }
    }
    Ok(acc)
}

/// Candidate density `Z = 𝓔(−θ·W − ψ*(μ^X − ν))` by multiplicative Euler:
/// `exp(−θΔW − ½|θ|²Δt)` per step, `(1 − ψ(x))` per jump and
/// `exp(Δt ∫ψ dF)` for the compensator.
pub fn density_candidate(
    family: &MprFamily,
    drivers: &DriverConfig,
    y_path: &[f64],
    increments: &IncrementMatrix,
) -> Result<Vec<f64>> {
    let n = increments.n_steps();
    if y_path.len() != n + 1 {
        return Err(Error::InvalidMpr("state path and increments are not aligned".into()));
    }
    let dt = increments.dt();
    let d = increments.n_wiener();
    let mut z = Vec::with_capacity(n + 1);
    let mut log_z = 0.0;
    z.push(1.0);
    for s in 0..n {
        let y = y_path[s];
        let mut incr = 0.0;
        for (k, &w) in increments.dw(s).iter().enumerate().take(d) {
            let th = family.theta_component(y, k)?;
            incr += -th * w - 0.5 * th * th * dt;
        }
        incr += dt * psi_compensator(family, drivers, y)?;
        for ev in increments.jumps(s) {
            incr += (1.0 - family.psi(y, ev.size)).ln();
        }
        log_z += incr;
        z.push(log_z.exp());
    }
    Ok(z)
}

/// Jump part `𝓔(−ψ*(μ^X − ν))` alone, same scheme as [`density_candidate`].
pub fn jump_density_factor(
    family: &MprFamily,
    drivers: &DriverConfig,
    y_path: &[f64],
    increments: &IncrementMatrix,
) -> Result<Vec<f64>> {
    let n = increments.n_steps();
    let dt = increments.dt();
    let mut out = Vec::with_capacity(n + 1);
    let mut log_e = 0.0;
    out.push(1.0);
    for s in 0..n {
        let y = y_path[s];
        log_e += dt * psi_compensator(family, drivers, y)?;
        for ev in increments.jumps(s) {
            log_e += (1.0 - family.psi(y, ev.size)).ln();
        }
        out.push(log_e.exp());
    }
    Ok(out)
}

/// Pathwise check of `Z = (Y / y0) · 𝓔(−ψ*(μ^X − ν))` for the Bessel family.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselIdentity {
    /// `max_t |y0 Z_t − Y_t 𝓔_t| / (Y_t 𝓔_t)` per path.
    pub max_rel_error: Vec<f64>,
    pub z_terminal: Vec<f64>,
    pub floor_hits: usize,
}

impl BesselIdentity {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().fold(0.0, |m, e| m.max(*e))
    }

    pub fn mean_error(&self) -> f64 {
        self.max_rel_error.iter().sum::<f64>() / self.max_rel_error.len().max(1) as f64
    }

    /// Mean and standard error of `Z_{t_max}`.
    pub fn terminal_mean(&self) -> (f64, f64) {
        let n = self.z_terminal.len() as f64;
        let mean = self.z_terminal.iter().sum::<f64>() / n;
        let var = self.z_terminal.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

/// Runs `n_paths` paths with seeds `seed, seed + 1, …`. The state is driven
/// by the first Wiener component, as in the forward-curve simulator.
pub fn bessel_identity(
    family: &MprFamily,
    drivers: &DriverConfig,
    state: &StateProcessSpec,
    t_max: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<BesselIdentity> {
    use rayon::prelude::*;
    if family.theta_kind() != &ThetaKind::BesselSqrt || state.kind != StateKind::BesselInverse {
        return Err(Error::InvalidMpr("the identity needs Θ = 2√y and the Bessel state".into()));
    }
    if drivers.wiener() == 0 {
        return Err(Error::InvalidMpr("the Bessel state needs a Wiener driver".into()));
    }
    let n = (t_max / dt).round() as usize;
    let rows = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let inc = crate::levy::sample_increments(drivers, dt, n, seed.wrapping_add(p))?;
            let st = simulate_state_with(state, dt, &inc.wiener_column(0))?;
            let z = density_candidate(family, drivers, &st.y, &inc)?;
            let e = jump_density_factor(family, drivers, &st.y, &inc)?;
            let err = z
                .iter()
                .zip(&st.y)
                .zip(&e)
                .map(|((z, y), e)| ((state.y0 * z - y * e) / (y * e)).abs())
                .fold(0.0, f64::max);
            Ok((err, z[n], st.floor_hits))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BesselIdentity {
        max_rel_error: rows.iter().map(|r| r.0).collect(),
        z_terminal: rows.iter().map(|r| r.1).collect(),
        floor_hits: rows.iter().map(|r| r.2).sum(),
    })
}

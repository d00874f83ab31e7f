//! Wiener and pure-jump Lévy drivers.
//!
//! A jump component is either a finite jump table (compound Poisson with
//! finitely many jump sizes) or a bilateral Gamma process. Uncompensated
//! components are `X = x * μ^X`; compensated ones are `X = x * (μ^X − ν)`
//! and carry the drift `−t ∫ x F(dx)` inside their increments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Highest cumulant derivative order served.
pub const MAX_CUMULANT_ORDER: u32 = 12;

/// Relative distance kept from the singularities of a bilateral Gamma
/// cumulant.
pub const DOMAIN_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub size: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevyKind {
    JumpTable(Vec<Jump>),
    BilateralGamma { alpha_plus: f64, lambda_plus: f64, alpha_minus: f64, lambda_minus: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyComponentSpec {
    kind: LevyKind,
    compensated: bool,
}

impl LevyComponentSpec {
    pub fn jump_table(jumps: Vec<Jump>, compensated: bool) -> Result<Self> {
        if jumps.is_empty() {
            return Err(Error::InvalidDriver("jump table is empty".into()));
        }
        for (i, j) in jumps.iter().enumerate() {
            if !(j.size.is_finite() && j.size != 0.0) {
                return Err(Error::InvalidDriver(format!("jump size {} must be finite and nonzero", j.size)));
            }
            if !(j.intensity.is_finite() && j.intensity > 0.0) {
                return Err(Error::InvalidDriver(format!("intensity {} must be positive", j.intensity)));
            }
            if jumps[..i].iter().any(|k| k.size == j.size) {
                return Err(Error::InvalidDriver(format!("duplicate jump size {}", j.size)));
            }
        }
        Ok(Self { kind: LevyKind::JumpTable(jumps), compensated })
    }

    pub fn bilateral_gamma(
        alpha_plus: f64,
        lambda_plus: f64,
        alpha_minus: f64,
        lambda_minus: f64,
        compensated: bool,
    ) -> Result<Self> {
        for (name, v) in
            [("alpha+", alpha_plus), ("lambda+", lambda_plus), ("alpha-", alpha_minus), ("lambda-", lambda_minus)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidDriver(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { kind: LevyKind::BilateralGamma { alpha_plus, lambda_plus, alpha_minus, lambda_minus }, compensated })
    }

    pub fn kind(&self) -> &LevyKind {
        &self.kind
    }

    pub fn compensated(&self) -> bool {
        self.compensated
    }

    pub fn is_finite_activity(&self) -> bool {
        matches!(self.kind, LevyKind::JumpTable(_))
    }

    pub fn jumps(&self) -> Option<&[Jump]> {
        match &self.kind {
            LevyKind::JumpTable(j) => Some(j),
            LevyKind::BilateralGamma { .. } => None,
        }
    }

    pub fn total_intensity(&self) -> f64 {
        match &self.kind {
            LevyKind::JumpTable(j) => j.iter().map(|j| j.intensity).sum(),
            LevyKind::BilateralGamma { .. } => f64::INFINITY,
        }
    }

    /// `∫ x F(dx)`.
    pub fn mean_jump(&self) -> f64 {
        match &self.kind {
            LevyKind::JumpTable(j) => j.iter().map(|j| j.intensity * j.size).sum(),
            LevyKind::BilateralGamma { alpha_plus, lambda_plus, alpha_minus, lambda_minus } => {
                alpha_plus / lambda_plus - alpha_minus / lambda_minus
            }
        }
    }

    /// Open interval on which the cumulant is finite.
    pub fn admissible_interval(&self) -> (f64, f64) {
        match &self.kind {
            LevyKind::JumpTable(_) => (f64::NEG_INFINITY, f64::INFINITY),
            LevyKind::BilateralGamma { lambda_plus, lambda_minus, .. } => (-lambda_minus, *lambda_plus),
        }
    }

    pub fn check_domain(&self, z: f64) -> Result<()> {
        let (lo, hi) = self.admissible_interval();
        let ok = match &self.kind {
            LevyKind::JumpTable(_) => z.is_finite(),
            LevyKind::BilateralGamma { .. } => {
                z.is_finite() && z < hi * (1.0 - DOMAIN_MARGIN) && z > lo * (1.0 - DOMAIN_MARGIN)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::CumulantDomain { z, lo, hi })
        }
    }

    /// Cumulant generating function: `∫(e^{zx}−1)F(dx)` uncompensated,
    /// `∫(e^{zx}−1−zx)F(dx)` compensated.
    pub fn cumulant(&self, z: f64) -> Result<f64> {
        self.cumulant_deriv(z, 0)
    }

    /// `κ^{(order)}(z)` in closed form; order 0 is `κ` itself.
    pub fn cumulant_deriv(&self, z: f64, order: u32) -> Result<f64> {
        if order > MAX_CUMULANT_ORDER {
            return Err(Error::OrderTooHigh(order, MAX_CUMULANT_ORDER));
        }
        self.check_domain(z)?;
        let raw = self.uncompensated_deriv(z, order);
        Ok(match (self.compensated, order) {
            (true, 0) => raw - z * self.mean_jump(),
            (true, 1) => raw - self.mean_jump(),
            _ => raw,
        })
    }

    /// `∫(e^{zx}−1)F(dx)` and its derivatives regardless of compensation.
    pub fn uncompensated_cumulant(&self, z: f64) -> Result<f64> {
        self.check_domain(z)?;
        Ok(self.uncompensated_deriv(z, 0))
    }

    fn uncompensated_deriv(&self, z: f64, order: u32) -> f64 {
        match &self.kind {
            LevyKind::JumpTable(jumps) => jumps
                .iter()
                .map(|j| {
                    if order == 0 {
                        j.intensity * (z * j.size).exp_m1()
                    } else {
                        j.intensity * j.size.powi(order as i32) * (z * j.size).exp()
                    }
                })
                .sum(),
            LevyKind::BilateralGamma { alpha_plus, lambda_plus, alpha_minus, lambda_minus } => {
                if order == 0 {
                    -alpha_plus * (-z / lambda_plus).ln_1p() - alpha_minus * (z / lambda_minus).ln_1p()
                } else {
                    let m = order as i32;
                    let fact: f64 = (1..order).map(f64::from).product();
                    let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
                    fact * (alpha_plus / (lambda_plus - z).powi(m) + sign * alpha_minus / (lambda_minus + z).powi(m))
                }
            }
        }
    }
}

/// Driving noise: `d` Wiener components and `n` jump components.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverConfig {
    wiener: usize,
    components: Vec<LevyComponentSpec>,
}

impl DriverConfig {
    pub fn new(wiener: usize, components: Vec<LevyComponentSpec>) -> Result<Self> {
        if wiener + components.len() == 0 {
            return Err(Error::InvalidDriver("need at least one driver".into()));
        }
        Ok(Self { wiener, components })
    }

    pub fn wiener(&self) -> usize {
        self.wiener
    }

    pub fn components(&self) -> &[LevyComponentSpec] {
        &self.components
    }

    pub fn n_jump(&self) -> usize {
        self.components.len()
    }
}

/// A single jump of component `component` inside a time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub component: usize,
    pub size: f64,
}

/// Increments of all drivers over `n_steps` steps of length `dt`.
///
/// Finite-activity components also record their individual jumps so that
/// jump-size dependent factors (densities, GOP) can be applied exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementMatrix {
    dt: f64,
    n_steps: usize,
    n_wiener: usize,
    n_jump: usize,
    dw: Vec<f64>,
    dx: Vec<f64>,
    events: Vec<JumpEvent>,
    event_offsets: Vec<usize>,
}

impl IncrementMatrix {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_wiener(&self) -> usize {
        self.n_wiener
    }

    pub fn n_jump(&self) -> usize {
        self.n_jump
    }

    pub fn dw(&self, step: usize) -> &[f64] {
        &self.dw[step * self.n_wiener..(step + 1) * self.n_wiener]
    }

    pub fn dx(&self, step: usize) -> &[f64] {
        &self.dx[step * self.n_jump..(step + 1) * self.n_jump]
    }

    pub fn jumps(&self, step: usize) -> &[JumpEvent] {
        &self.events[self.event_offsets[step]..self.event_offsets[step + 1]]
    }

    /// Wiener increments of one component over all steps.
    pub fn wiener_column(&self, k: usize) -> Vec<f64> {
        (0..self.n_steps).map(|s| self.dw(s)[k]).collect()
    }

    /// Builds a matrix directly from per-step increments; used for
    /// deterministic scenarios and tests.
    pub fn from_parts(
        dt: f64,
        n_wiener: usize,
        n_jump: usize,
        dw: Vec<f64>,
        dx: Vec<f64>,
        events: Vec<Vec<JumpEvent>>,
    ) -> Result<Self> {
        let n_steps = events.len();
        if dw.len() != n_steps * n_wiener || dx.len() != n_steps * n_jump {
            return Err(Error::InvalidDriver("increment shapes do not match".into()));
        }
        let mut flat = Vec::new();
        let mut offsets = vec![0];
        for e in events {
            flat.extend(e);
            offsets.push(flat.len());
        }
        Ok(Self { dt, n_steps, n_wiener, n_jump, dw, dx, events: flat, event_offsets: offsets })
    }

    /// Sums groups of `factor` consecutive steps: the same noise on a
    /// coarser time grid.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::InvalidDriver(format!("cannot coarsen {} steps by {factor}", self.n_steps)));
        }
        let n_steps = self.n_steps / factor;
        let mut dw = vec![0.0; n_steps * self.n_wiener];
        let mut dx = vec![0.0; n_steps * self.n_jump];
        let mut events = Vec::new();
        let mut offsets = vec![0];
        for s in 0..n_steps {
            for f in 0..factor {
                let fine = s * factor + f;
                for (a, b) in dw[s * self.n_wiener..(s + 1) * self.n_wiener].iter_mut().zip(self.dw(fine)) {
                    *a += b;
                }
                for (a, b) in dx[s * self.n_jump..(s + 1) * self.n_jump].iter_mut().zip(self.dx(fine)) {
                    *a += b;
                }
                events.extend_from_slice(self.jumps(fine));
            }
            offsets.push(events.len());
        }
        Ok(Self {
            dt: self.dt * factor as f64,
            n_steps,
            n_wiener: self.n_wiener,
            n_jump: self.n_jump,
            dw,
            dx,
            events,
            event_offsets: offsets,
        })
    }
}

/// Draws all driver increments for one path. Deterministic given `seed`;
/// parallel paths use `seed + path_index`.
pub fn sample_increments(config: &DriverConfig, dt: f64, n_steps: usize, seed: u64) -> Result<IncrementMatrix> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidDriver(format!("dt must be positive, got {dt}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.wiener;
    let n = config.components.len();
    let sqrt_dt = dt.sqrt();

    // Per-component samplers, built once.
    enum Sampler {
        Table { poisson: Option<Poisson<f64>>, cdf: Vec<f64>, sizes: Vec<f64>, drift: f64 },
        Gamma { up: Gamma<f64>, down: Gamma<f64>, drift: f64 },
    }
    let samplers = config
        .components
        .iter()
        .map(|c| {
            let drift = if c.compensated { -dt * c.mean_jump() } else { 0.0 };
            match &c.kind {
                LevyKind::JumpTable(jumps) => {
                    let total: f64 = jumps.iter().map(|j| j.intensity).sum();
                    let mut acc = 0.0;
                    let cdf = jumps
                        .iter()
                        .map(|j| {
                            acc += j.intensity / total;
                            acc
                        })
                        .collect();
                    let poisson = Poisson::new(total * dt).ok();
                    Ok(Sampler::Table { poisson, cdf, sizes: jumps.iter().map(|j| j.size).collect(), drift })
                }
                LevyKind::BilateralGamma { alpha_plus, lambda_plus, alpha_minus, lambda_minus } => {
                    let up = Gamma::new(alpha_plus * dt, 1.0 / lambda_plus)
                        .map_err(|e| Error::InvalidDriver(e.to_string()))?;
                    let down = Gamma::new(alpha_minus * dt, 1.0 / lambda_minus)
                        .map_err(|e| Error::InvalidDriver(e.to_string()))?;
                    Ok(Sampler::Gamma { up, down, drift })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dw = Vec::with_capacity(n_steps * d);
    let mut dx = Vec::with_capacity(n_steps * n);
    let mut events = Vec::new();
    let mut offsets = Vec::with_capacity(n_steps + 1);
    offsets.push(0);
    for _ in 0..n_steps {
        for _ in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            dw.push(sqrt_dt * z);
        }
        for (k, s) in samplers.iter().enumerate() {
            match s {
                Sampler::Table { poisson, cdf, sizes, drift } => {
                    let count = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
                    let mut sum = *drift;
                    for _ in 0..count {
                        let u: f64 = rng.random();
                        let idx = cdf.iter().position(|&c| u < c).unwrap_or(sizes.len() - 1);
                        sum += sizes[idx];
                        events.push(JumpEvent { component: k, size: sizes[idx] });
                    }
                    dx.push(sum);
                }
                Sampler::Gamma { up, down, drift } => {
                    dx.push(up.sample(&mut rng) - down.sample(&mut rng) + drift);
                }
            }
        }
        offsets.push(events.len());
    }
    Ok(IncrementMatrix { dt, n_steps, n_wiener: d, n_jump: n, dw, dx, events, event_offsets: offsets })
}

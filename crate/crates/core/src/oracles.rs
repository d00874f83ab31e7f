//! Finite-dimensional independence and uniqueness checks: exact Vandermonde
//! determinants, evaluation-point selection and Laplace transforms of
//! discrete measures.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Relative determinant below which a family counts as dependent.
pub const INDEPENDENCE_TOL: f64 = 1e-10;
/// Agreement tolerance for two Laplace transforms on a grid.
pub const TRANSFORM_TOL: f64 = 1e-12;
/// Bound on the residual of the mass-difference solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;
/// Condition number above which the mass-difference solve is not trusted.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VandermondeForm {
    /// `[e^{t_j f(x_i)}]`
    Exponential,
    /// `[t_j^i]`
    Power,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VandermondeCertificate {
    /// Determinant, possibly `±0` or `±inf` when outside `f64` range.
    pub determinant: f64,
    /// `log2 |det|`, `-inf` for an exactly singular matrix.
    pub log2_abs_det: f64,
    /// `|det|` over the smaller of the products of row or column norms.
    pub relative: f64,
    pub independent: bool,
}

/// Exact determinant of the Vandermonde-type matrix built from the first
/// `m = multipliers.len()` distinct entries of `values`.
///
/// Entries are rounded to `f64` once and then treated as exact dyadic
/// rationals, so no cancellation happens inside the determinant.
pub fn vandermonde_certificate(
    values: &[f64],
    multipliers: &[f64],
    form: VandermondeForm,
) -> Result<VandermondeCertificate> {
    let m = multipliers.len();
    if m == 0 {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    if values.iter().chain(multipliers).any(|v| !v.is_finite()) {
        return Err(Error::InvalidCurve("non-finite Vandermonde input".into()));
    }
    let mut points: Vec<f64> = Vec::with_capacity(m);
    for &v in values {
        if points.len() == m {
            break;
        }
        if !points.contains(&v) {
            points.push(v);
        }
    }
    if form == VandermondeForm::Exponential && points.len() < m {
        return Err(Error::InsufficientPoints { needed: m, got: points.len() });
    }
    let rows: Vec<Vec<BigRational>> = match form {
        VandermondeForm::Exponential => points
            .iter()
            .map(|&f| multipliers.iter().map(|&t| exact((t * f).exp())).collect::<Result<_>>())
            .collect::<Result<_>>()?,
        VandermondeForm::Power => {
            let ts: Vec<BigRational> = multipliers.iter().map(|&t| exact(t)).collect::<Result<_>>()?;
            (0..m).map(|i| ts.iter().map(|t| pow(t, i)).collect()).collect()
        }
    };
    let (det, log2_det) = exact_determinant(&rows);
    // Hadamard ratio against rows or columns, whichever is larger, so that
    // rescaling a single function does not change the verdict
    let log2_rows: f64 = rows.iter().map(|r| 0.5 * log2_sum_squares(r)).sum();
    let log2_cols: f64 =
        (0..m).map(|j| 0.5 * log2_sum_squares(&rows.iter().map(|r| r[j].clone()).collect::<Vec<_>>())).sum();
    let relative = if det.is_zero() { 0.0 } else { (log2_det - log2_rows.min(log2_cols)).exp2() };
    let sign = if det.is_negative() { -1.0 } else { 1.0 };
    let determinant = if det.is_zero() { 0.0 } else { sign * log2_det.exp2() };
    Ok(VandermondeCertificate {
        determinant,
        log2_abs_det: if det.is_zero() { f64::NEG_INFINITY } else { log2_det },
        relative,
        independent: relative > INDEPENDENCE_TOL,
    })
}

fn exact(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::InvalidCurve(format!("{v} has no exact rational form")))
}

fn pow(t: &BigRational, i: usize) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..i {
        acc *= t;
    }
    acc
}

fn log2_abs_int(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.abs().to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 60;
    let top: BigInt = n.abs() >> shift;
    top.to_f64().unwrap_or(f64::INFINITY).log2() + shift as f64
}

fn log2_abs(q: &BigRational) -> f64 {
    log2_abs_int(q.numer()) - log2_abs_int(q.denom())
}

fn log2_sum_squares(row: &[BigRational]) -> f64 {
    let s: BigRational = row.iter().map(|v| v * v).fold(BigRational::zero(), |a, b| a + b);
    if s.is_zero() {
        f64::NEG_INFINITY
    } else {
        log2_abs(&s)
    }
}

/// Determinant by fraction-free Bareiss elimination on the integer matrix
/// obtained by clearing all denominators.
fn exact_determinant(rows: &[Vec<BigRational>]) -> (BigRational, f64) {
    let m = rows.len();
    let mut lcm = BigInt::one();
    for r in rows {
        for v in r {
            // denominators of rounded floats are powers of two
            if v.denom() > &lcm {
                lcm = v.denom().clone();
            }
        }
    }
    let mut a: Vec<Vec<BigInt>> =
        rows.iter().map(|r| r.iter().map(|v| v.numer() * (&lcm / v.denom())).collect()).collect();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..m {
        if a[k][k].is_zero() {
            match (k + 1..m).find(|&i| !a[i][k].is_zero()) {
                Some(p) => {
                    a.swap(k, p);
                    sign = -sign;
                }
                None => return (BigRational::zero(), f64::NEG_INFINITY),
            }
        }
        for i in k + 1..m {
            for j in k + 1..m {
                let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = a[k][k].clone();
    }
    let det_int = sign * &a[m - 1][m - 1];
    let scale = pow(&BigRational::from_integer(lcm), m);
    let det = BigRational::from_integer(det_int) / scale;
    let l = log2_abs(&det);
    (det, l)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectionVerdict {
    Selected,
    /// No grid point adds a new direction after `found` points.
    Dependent {
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSelection {
    /// Chosen points in increasing order.
    pub points: Vec<f64>,
    /// `det [f_i(θ_j)]` with `θ` in increasing order.
    pub determinant: f64,
    /// `|det|` over the product of row norms of the full grid matrix.
    pub relative: f64,
    pub verdict: SelectionVerdict,
}

/// Greedy choice of `m` grid points making `[f_i(θ_j)]` as far from
/// singular as possible.
///
/// Each step picks the grid point whose value vector `(f_1(θ), …, f_m(θ))`
/// has the largest component orthogonal to those already chosen. The choice
/// depends only on these vectors, so reordering the family permutes rows and
/// changes the determinant by a sign at most.
pub fn select_eval_points<F: Fn(f64) -> f64>(family: &[F], grid: &[f64]) -> PointSelection {
    let m = family.len();
    let mut cols: Vec<(f64, DVector<f64>)> = grid
        .iter()
        .map(|&x| (x, DVector::from_iterator(m, family.iter().map(|f| f(x)))))
        .filter(|(_, v)| v.iter().all(|c| c.is_finite()))
        .collect();
    let scale = cols.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
    let mut chosen: Vec<(f64, DVector<f64>)> = Vec::new();
    let mut residual: Vec<DVector<f64>> = cols.iter().map(|(_, v)| v.clone()).collect();
    while chosen.len() < m {
        let best =
            residual.iter().enumerate().map(|(i, r)| (i, r.norm())).fold(None, |acc: Option<(usize, f64)>, (i, n)| {
                match acc {
                    Some((_, bn)) if bn >= n => acc,
                    _ => Some((i, n)),
                }
            });
        let Some((idx, norm)) = best else { break };
        if !(norm > INDEPENDENCE_TOL * scale) {
            break;
        }
        let q = &residual[idx] / norm;
        for r in residual.iter_mut() {
            let c = q.dot(r);
            r.axpy(-c, &q, 1.0);
        }
        let (x, v) = cols.swap_remove(idx);
        residual.swap_remove(idx);
        chosen.push((x, v));
    }
    chosen.sort_by(|a, b| a.0.total_cmp(&b.0));
    let points: Vec<f64> = chosen.iter().map(|(x, _)| *x).collect();
    if chosen.len() < m {
        return PointSelection {
            points,
            determinant: 0.0,
            relative: 0.0,
            verdict: SelectionVerdict::Dependent { found: chosen.len() },
        };
    }
    let mat = DMatrix::from_fn(m, m, |i, j| chosen[j].1[i]);
    let determinant = mat.clone().determinant();
    let row_norms: f64 = mat.row_iter().map(|r| r.norm()).product();
    let relative = if row_norms > 0.0 { determinant.abs() / row_norms } else { 0.0 };
    let verdict = if relative > INDEPENDENCE_TOL {
        SelectionVerdict::Selected
    } else {
        SelectionVerdict::Dependent { found: m - 1 }
    };
    PointSelection { points, determinant, relative, verdict }
}

/// A finite measure with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
    strip: Option<(f64, f64)>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(x, m)) in atoms.iter().enumerate() {
            if !x.is_finite() || !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidMeasure(format!("atom ({x}, {m})")));
            }
            if atoms[..i].iter().any(|&(y, _)| y == x) {
                return Err(Error::InvalidMeasure(format!("repeated location {x}")));
            }
        }
        Ok(Self { atoms, strip: None })
    }

    pub fn empty() -> Self {
        Self { atoms: Vec::new(), strip: None }
    }

    /// Declares the admissible `λ` range for atoms on the negative axis.
    pub fn with_strip(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidMeasure(format!("empty strip [{lo}, {hi}]")));
        }
        self.strip = Some((lo, hi));
        Ok(self)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn strip(&self) -> Option<(f64, f64)> {
        self.strip
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn is_one_sided(&self) -> bool {
        self.atoms.iter().all(|a| a.0 >= 0.0)
    }
}

/// `∫ e^{−λx} μ(dx)`.
pub fn laplace(mu: &DiscreteMeasure, lambda: f64) -> Result<f64> {
    if !mu.is_one_sided() {
        let (lo, hi) = mu.strip.unwrap_or((0.0, 0.0));
        if !(lambda >= lo && lambda <= hi) {
            return Err(Error::StripViolation { lambda, lo, hi });
        }
    }
    Ok(mu.atoms.iter().map(|&(x, m)| m * (-lambda * x).exp()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniquenessVerdict {
    Equal,
    Distinct,
    Inconclusive,
}

impl UniquenessVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            UniquenessVerdict::Equal => "equal",
            UniquenessVerdict::Distinct => "distinct",
            UniquenessVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub verdict: UniquenessVerdict,
    /// `max_λ |L_μ(λ) − L_ν(λ)|` over the grid.
    pub max_gap: f64,
    /// Condition number of `[e^{−λ_g u_k}]` on the union support.
    pub condition: f64,
    /// Residual norm of the mass-difference solve.
    pub residual: f64,
    /// `(u_k, μ{u_k} − ν{u_k})` as recovered from the transforms.
    pub mass_differences: Vec<(f64, f64)>,
}

/// Decides `μ = ν` from the transforms on a finite `λ` grid.
///
/// Transforms that differ by more than the agreement tolerance prove the
/// measures distinct. Otherwise the mass differences on the union support
/// are recovered by least squares and compared with zero; an ill-conditioned
/// system gives an inconclusive verdict.
pub fn laplace_uniqueness_harness(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    lambda_grid: &[f64],
) -> Result<UniquenessReport> {
    let needed = mu.atoms.len() + nu.atoms.len();
    let mut grid: Vec<f64> = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < needed.max(1) {
        return Err(Error::InsufficientPoints { needed: needed.max(1), got: grid.len() });
    }
    let mut gaps = Vec::with_capacity(grid.len());
    let mut scale: f64 = 0.0;
    for &l in &grid {
        let a = laplace(mu, l)?;
        let b = laplace(nu, l)?;
        scale = scale.max(a.abs()).max(b.abs());
        gaps.push(a - b);
    }
    let max_gap = gaps.iter().fold(0.0_f64, |m, g| m.max(g.abs()));

    let mut support: Vec<f64> = mu.atoms.iter().chain(&nu.atoms).map(|a| a.0).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    let mass_of = |m: &DiscreteMeasure, x: f64| m.atoms.iter().find(|a| a.0 == x).map_or(0.0, |a| a.1);

    if support.is_empty() {
        return Ok(UniquenessReport {
            verdict: UniquenessVerdict::Equal,
            max_gap,
            condition: 1.0,
            residual: 0.0,
            mass_differences: Vec::new(),
        });
    }

    let a = DMatrix::from_fn(grid.len(), support.len(), |g, k| (-grid[g] * support[k]).exp());
    let b = DVector::from_vec(gaps);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let x = svd.solve(&b, smax * f64::EPSILON).map_err(|e| Error::InvalidMeasure(e.to_string()))?;
    let residual = (&a * &x - &b).norm();
    let mass_differences: Vec<(f64, f64)> = support.iter().cloned().zip(x.iter().cloned()).collect();

    let total = mu.total_mass().max(nu.total_mass()).max(f64::MIN_POSITIVE);
    let verdict = if max_gap > TRANSFORM_TOL * scale.max(1.0) {
        UniquenessVerdict::Distinct
    } else if condition > MAX_CONDITION || residual > SOLVE_RESIDUAL_TOL {
        UniquenessVerdict::Inconclusive
    } else {
        let direct = support.iter().map(|&u| (mass_of(mu, u) - mass_of(nu, u)).abs()).fold(0.0, f64::max);
        let recovered = x.amax();
        if recovered <= SOLVE_RESIDUAL_TOL * total && direct <= SOLVE_RESIDUAL_TOL * total {
            UniquenessVerdict::Equal
        } else if recovered > SOLVE_RESIDUAL_TOL * total {
            UniquenessVerdict::Distinct
        } else {
            UniquenessVerdict::Inconclusive
        }
    };
    Ok(UniquenessReport { verdict, max_gap, condition, residual, mass_differences })
}

/// Outcome of comparing [`vandermonde_certificate`] with
/// [`numerical_rank`](crate::span_rank::numerical_rank) on random families
/// `{e^{t_j ξ}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementSummary {
    pub cases: usize,
    pub disagreements: usize,
    pub independent_cases: usize,
    /// Smallest relative determinant among families judged independent.
    pub min_relative: f64,
}

/// Families of size 1..=8 with rates drawn with replacement from
/// `{−2, −1.5, …, 2}`, sampled on `[0, 5]`. Evaluation points come from
/// [`select_eval_points`], padded with the remaining grid nodes when the
/// family is dependent.
pub fn exponential_family_agreement(cases: usize, seed: u64) -> Result<AgreementSummary> {
    use crate::curve::{CurveGrid, ForwardCurve};
    use crate::span_rank::{numerical_rank, SpanSampleSet, DEFAULT_RANK_TOL};
    use rand::{Rng, SeedableRng};

    let grid = CurveGrid::uniform(5.0, 61, 0.1)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = AgreementSummary { cases, disagreements: 0, independent_cases: 0, min_relative: f64::INFINITY };
    for _ in 0..cases {
        let m = rng.random_range(1..=8usize);
        let ts: Vec<f64> = (0..m).map(|_| rng.random_range(-4i32..=4) as f64 * 0.5).collect();
        let curves =
            ts.iter().map(|&t| ForwardCurve::from_fn(grid.clone(), |x| (t * x).exp())).collect::<Result<Vec<_>>>()?;
        let rank = numerical_rank(&SpanSampleSet::from_curves(&curves, DEFAULT_RANK_TOL)?).rank;
        let family: Vec<_> = ts.iter().map(|&t| move |x: f64| (t * x).exp()).collect();
        let mut points = select_eval_points(&family, grid.nodes()).points;
        points.extend(grid.nodes().iter().filter(|x| !points.contains(x)).cloned().collect::<Vec<_>>());
        let cert = vandermonde_certificate(&points, &ts, VandermondeForm::Exponential)?;
        if cert.independent != (rank == m) {
            out.disagreements += 1;
        }
        if cert.independent {
            out.independent_cases += 1;
            out.min_relative = out.min_relative.min(cert.relative);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceBattery {
    pub pairs: usize,
    /// Distinct pairs reported distinct.
    pub separated: usize,
    /// Equal pairs reported equal.
    pub confirmed_equal: usize,
    /// Equal pairs reported distinct.
    pub false_separations: usize,
    pub inconclusive: usize,
    pub worst_residual: f64,
    pub worst_condition: f64,
}

/// Random measures with 1 to 4 atoms on `[0, 3]` (two decimals) and masses
/// in `[0.1, 2)`. Each round pairs two independent draws and one draw with
/// a shuffled copy of itself, on the grid `λ = 0, 0.5, …` with twice as
/// many points as atoms.
pub fn laplace_battery(pairs: usize, seed: u64) -> Result<LaplaceBattery> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<DiscreteMeasure> {
        let k = rng.random_range(1..=4usize);
        let mut xs: Vec<f64> = Vec::with_capacity(k);
        while xs.len() < k {
            let x = (rng.random_range(0.0..3.0f64) * 100.0).round() / 100.0;
            if !xs.contains(&x) {
                xs.push(x);
            }
        }
        DiscreteMeasure::new(xs.into_iter().map(|x| (x, rng.random_range(0.1..2.0))).collect())
    };
    let mut out = LaplaceBattery {
        pairs,
        separated: 0,
        confirmed_equal: 0,
        false_separations: 0,
        inconclusive: 0,
        worst_residual: 0.0,
        worst_condition: 0.0,
    };
    for _ in 0..pairs {
        let mu = draw(&mut rng)?;
        let mut nu = draw(&mut rng)?;
        while nu == mu {
            nu = draw(&mut rng)?;
        }
        let n = mu.atoms().len() + nu.atoms().len();
        let grid: Vec<f64> = (0..2 * n).map(|i| i as f64 * 0.5).collect();
        let r = laplace_uniqueness_harness(&mu, &nu, &grid)?;
        match r.verdict {
            UniquenessVerdict::Distinct => out.separated += 1,
            UniquenessVerdict::Inconclusive => out.inconclusive += 1,
            UniquenessVerdict::Equal => {}
        }
        out.worst_residual = out.worst_residual.max(r.residual);

        let mut atoms = mu.atoms().to_vec();
        atoms.shuffle(&mut rng);
        let same = DiscreteMeasure::new(atoms)?;
        let r = laplace_uniqueness_harness(&mu, &same, &grid)?;
        match r.verdict {
            UniquenessVerdict::Equal => out.confirmed_equal += 1,
            UniquenessVerdict::Distinct => out.false_separations += 1,
            UniquenessVerdict::Inconclusive => out.inconclusive += 1,
        }
        out.worst_residual = out.worst_residual.max(r.residual);
        out.worst_condition = out.worst_condition.max(r.condition);
    }
    Ok(out)
}

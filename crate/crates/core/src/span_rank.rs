//! Numerical dimension of sampled function spans.
//!
//! Every element is mapped to Euclidean features whose dot product is the
//! ambient inner product. Rank is the number of singular values of the
//! row-normalised feature matrix at or above `tol × largest`.
//!
//! Sampled ranks are numerical evidence at the stated tolerance: a finite
//! sample of `h ∈ H`, `y ∈ 𝒴` can only understate the dimension of the span.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::curve::ForwardCurve;
use crate::error::{Error, Result};
use crate::levy::LevyComponentSpec;
use crate::model::ModelSpec;
use crate::mpr::{MprFamily, PsiKind};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Rows with norm below this fraction of the largest row count as zero.
const ZERO_ROW: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ambient {
    CurveSpace,
    WeightedL2,
    CurveValuedL2,
}

impl Ambient {
    pub fn name(&self) -> &'static str {
        match self {
            Ambient::CurveSpace => "H",
            Ambient::WeightedL2 => "L2(F)",
            Ambient::CurveValuedL2 => "L2(F;H)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanSampleSet {
    ambient: Ambient,
    features: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
    tol: f64,
}

impl SpanSampleSet {
    pub fn from_features(ambient: Ambient, features: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidModel(format!("rank tolerance {tol} outside (0, 1)")));
        }
        if let Some(first) = features.first() {
            if features.iter().any(|f| f.len() != first.len()) {
                return Err(Error::InvalidModel("feature vectors of unequal length".into()));
            }
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite span element".into()));
        }
        let n = features.len();
        let gram: Vec<Vec<f64>> =
            (0..n).into_par_iter().map(|i| (0..n).map(|j| dot(&features[i], &features[j])).collect()).collect();
        Ok(Self { ambient, features, gram, tol })
    }

    pub fn from_curves(curves: &[ForwardCurve], tol: f64) -> Result<Self> {
        if let Some(first) = curves.first() {
            for c in curves {
                first.check_same_grid(c)?;
            }
        }
        Self::from_features(Ambient::CurveSpace, curves.iter().map(|c| c.h_features()).collect(), tol)
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn gram(&self) -> &[Vec<f64>] {
        &self.gram
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// The first `n` elements.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        Self::from_features(self.ambient, self.features[..n.min(self.len())].to_vec(), self.tol)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// Singular values of the row-normalised feature matrix, descending.
    pub singular_values: Vec<f64>,
    pub tol: f64,
    pub n_samples: usize,
}

pub fn numerical_rank(set: &SpanSampleSet) -> RankReport {
    let norms: Vec<f64> = set.features.iter().map(|f| dot(f, f).sqrt()).collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let rows: Vec<&Vec<f64>> =
        set.features.iter().zip(&norms).filter(|(_, &n)| n > 0.0 && n > ZERO_ROW * max_norm).map(|(f, _)| f).collect();
    if rows.is_empty() {
        return RankReport { rank: 0, singular_values: vec![], tol: set.tol, n_samples: set.len() };
    }
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in &rows {
        let n = dot(r, r).sqrt();
        data.extend(r.iter().map(|v| v / n));
    }
    let m = DMatrix::from_row_slice(rows.len(), cols, &data);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s >= set.tol * top).count();
    RankReport { rank, singular_values: sv, tol: set.tol, n_samples: set.len() }
}

/// `∫ Ψ(y,x) e^{xΓ} F(dx)` for one component.
pub fn psi_gamma_integral(comp: &LevyComponentSpec, mpr: &MprFamily, y: f64, big_gamma: f64) -> Result<f64> {
    if y == mpr.y_star() {
        return Ok(0.0);
    }
    if let Some(jumps) = comp.jumps() {
        return Ok(jumps.iter().map(|j| j.intensity * mpr.psi(y, j.size) * (j.size * big_gamma).exp()).sum());
    }
    match mpr.psi_kind() {
        PsiKind::Zero => Ok(0.0),
        PsiKind::ExpInX(v) => {
            Ok(comp.uncompensated_cumulant(big_gamma)? - comp.uncompensated_cumulant(v.eval(y) + big_gamma)?)
        }
        _ => Err(Error::Unsupported("this Ψ on a parametric Lévy measure has no finite jump integral".into())),
    }
}

/// Elements `ξ ↦ Σ_k ∫ Ψ^k(y,x) e^{xΓ^k(h)(ξ)} F^k(dx)` for every `(h, y)`.
pub fn sample_u_psi_gamma(
    model: &ModelSpec,
    h_samples: &[ForwardCurve],
    y_samples: &[f64],
    tol: f64,
) -> Result<SpanSampleSet> {
    if h_samples.is_empty() || y_samples.is_empty() {
        return Err(Error::InvalidModel("empty sample set".into()));
    }
    let grid = model.grid();
    let pairs: Vec<(&ForwardCurve, f64)> =
        h_samples.iter().flat_map(|h| y_samples.iter().map(move |&y| (h, y))).collect();
    let curves = pairs
        .par_iter()
        .map(|(h, y)| {
            h.check_grid(grid)?;
            let mut v = vec![0.0; grid.n_points()];
            for (k, comp) in model.drivers().components().iter().enumerate() {
                let big_g = model.big_gamma_at(k, h);
                for (o, g) in v.iter_mut().zip(big_g.values()) {
                    *o += psi_gamma_integral(comp, model.mpr(), *y, *g)?;
                }
            }
            ForwardCurve::from_values(grid.clone(), v)
        })
        .collect::<Result<Vec<_>>>()?;
    SpanSampleSet::from_curves(&curves, tol)
}

/// `U_{Ψ^k}`: elements `x ↦ Ψ^k(y, x)` in `L²(F^k)`.
pub fn rank_u_psi(model: &ModelSpec, k: usize, y_samples: &[f64], tol: f64) -> Result<(SpanSampleSet, RankReport)> {
    let comp = component(model, k)?;
    let jumps = comp.jumps().ok_or_else(|| Error::Unsupported("U_Ψ rank needs a finite jump table".into()))?;
    let features = y_samples
        .iter()
        .map(|&y| jumps.iter().map(|j| j.intensity.sqrt() * model.mpr().psi(y, j.size)).collect())
        .collect();
    let set = SpanSampleSet::from_features(Ambient::WeightedL2, features, tol)?;
    let report = numerical_rank(&set);
    Ok((set, report))
}

/// `U_{γ^k}`: elements `x ↦ e^{xΓ^k(h)}` in `L²(F^k; H)`.
pub fn rank_u_gamma(
    model: &ModelSpec,
    k: usize,
    h_samples: &[ForwardCurve],
    tol: f64,
) -> Result<(SpanSampleSet, RankReport)> {
    let comp = component(model, k)?;
    let jumps = comp.jumps().ok_or_else(|| Error::Unsupported("U_γ rank needs a finite jump table".into()))?;
    let mut features = Vec::with_capacity(h_samples.len());
    for h in h_samples {
        h.check_grid(model.grid())?;
        let big_g = model.big_gamma_at(k, h);
        let mut f = Vec::new();
        for j in jumps {
            let curve = ForwardCurve::from_values(
                model.grid().clone(),
                big_g.values().iter().map(|g| (j.size * g).exp()).collect(),
            )?;
            let w = j.intensity.sqrt();
            f.extend(curve.h_features().into_iter().map(|v| w * v));
        }
        features.push(f);
    }
    let set = SpanSampleSet::from_features(Ambient::CurveValuedL2, features, tol)?;
    let report = numerical_rank(&set);
    Ok((set, report))
}

fn component(model: &ModelSpec, k: usize) -> Result<&LevyComponentSpec> {
    model.drivers().components().get(k).ok_or_else(|| Error::InvalidModel(format!("no jump component {k}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantRankProfile {
    /// `profile[m]` is the rank of `{κ', …, κ^{(m+1)}}` on the grid.
    pub profile: Vec<usize>,
    pub singular_values: Vec<f64>,
    pub tol: f64,
}

impl CumulantRankProfile {
    pub fn strictly_increasing(&self) -> bool {
        self.profile.windows(2).all(|w| w[1] > w[0])
    }

    /// Rank from which the profile stays constant to the end.
    pub fn plateau(&self) -> Option<usize> {
        let last = *self.profile.last()?;
        let start = self.profile.iter().rposition(|&r| r != last).map_or(0, |i| i + 1);
        (start + 1 < self.profile.len()).then_some(last)
    }
}

/// Rank profile of the derivative span of the drift kernel `κ'` over
/// `z_grid`, for derivative counts `0..=max_order`.
pub fn cumulant_span_rank(
    spec: &LevyComponentSpec,
    max_order: u32,
    z_grid: &[f64],
    tol: f64,
) -> Result<CumulantRankProfile> {
    if z_grid.is_empty() {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    let rows = (1..=max_order + 1)
        .map(|m| z_grid.iter().map(|&z| spec.cumulant_deriv(z, m)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    let set = SpanSampleSet::from_features(Ambient::WeightedL2, rows, tol)?;
    let mut profile = Vec::with_capacity(set.len());
    let mut last = RankReport { rank: 0, singular_values: vec![], tol, n_samples: 0 };
    for n in 1..=set.len() {
        last = numerical_rank(&set.prefix(n)?);
        profile.push(last.rank);
    }
    Ok(CumulantRankProfile { profile, singular_values: last.singular_values, tol })
}

/// Evenly spaced grid strictly inside the cumulant domain, clipped to `[-cap, cap]`.
pub fn interior_z_grid(spec: &LevyComponentSpec, n: usize, cap: f64) -> Vec<f64> {
    let (lo, hi) = spec.admissible_interval();
    let lo = (0.9 * lo).max(-cap);
    let hi = (0.9 * hi).min(cap);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::CurveGrid;
    use crate::levy::Jump;

    fn exps(rates: &[f64]) -> Vec<ForwardCurve> {
        let grid = CurveGrid::default_grid();
        rates.iter().map(|&r| ForwardCurve::from_fn(grid.clone(), |x| (-r * x).exp()).unwrap()).collect()
    }

    #[test]
    fn rank_examples() {
        let e = exps(&[1.0, 1.0]);
        assert_eq!(numerical_rank(&SpanSampleSet::from_curves(&e, DEFAULT_RANK_TOL).unwrap()).rank, 1);
        let e = exps(&[1.0, 2.0, 3.0]);
        let set = SpanSampleSet::from_curves(&e, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(numerical_rank(&set).rank, 3);
        for i in 0..3 {
            for j in 0..3 {
                assert!((set.gram()[i][j] - e[i].inner_product(&e[j]).unwrap()).abs() < 1e-12);
            }
        }
        let z = vec![ForwardCurve::zeros(CurveGrid::default_grid()); 4];
        assert_eq!(numerical_rank(&SpanSampleSet::from_curves(&z, DEFAULT_RANK_TOL).unwrap()).rank, 0);
        assert_eq!(numerical_rank(&SpanSampleSet::from_curves(&[], DEFAULT_RANK_TOL).unwrap()).rank, 0);
    }

    #[test]
    fn table_profile_plateaus_at_table_size() {
        let spec = LevyComponentSpec::jump_table(
            vec![
                Jump { size: -0.5, intensity: 1.0 },
                Jump { size: 0.3, intensity: 0.5 },
                Jump { size: 1.0, intensity: 2.0 },
            ],
            false,
        )
        .unwrap();
        let z: Vec<f64> = (0..101).map(|i| -2.0 + 0.04 * i as f64).collect();
        let p = cumulant_span_rank(&spec, 8, &z, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.profile, vec![1, 2, 3, 3, 3, 3, 3, 3, 3]);
        assert_eq!(p.plateau(), Some(3));
        let p0 = cumulant_span_rank(&spec, 0, &z, DEFAULT_RANK_TOL).unwrap();
        assert!(p0.profile[0] <= 1);
    }

    #[test]
    fn bilateral_gamma_profile_grows() {
        let spec = LevyComponentSpec::bilateral_gamma(1.2, 3.0, 0.8, 2.0, true).unwrap();
        let z = interior_z_grid(&spec, 201, 10.0);
        let p = cumulant_span_rank(&spec, 8, &z, DEFAULT_RANK_TOL).unwrap();
        assert!(p.strictly_increasing(), "{:?} {:?}", p.profile, p.singular_values);
        assert_eq!(p.profile.last(), Some(&9));
    }

    #[test]
    fn domain_violation_is_an_error() {
        let spec = LevyComponentSpec::bilateral_gamma(1.0, 3.0, 1.0, 2.0, true).unwrap();
        assert!(cumulant_span_rank(&spec, 2, &[0.0, 3.5], DEFAULT_RANK_TOL).is_err());
    }
}

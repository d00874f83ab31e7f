//! Real-world HJM drift
//!
//! `α(h,y) = −Σ_k σ^k(Σ^k − Θ^k(y)) − Σ_k γ^k J^k(y, Γ^k)` where the jump
//! integral `J` is `∫ xΦe^{xΓ} F(dx)` for uncompensated components and
//! `∫ x(Φe^{xΓ} − 1) F(dx)` for compensated ones.

use crate::curve::ForwardCurve;
use crate::error::{Error, Result};
use crate::levy::LevyComponentSpec;
use crate::model::ModelSpec;
use crate::mpr::{MprFamily, PsiKind};

/// Jump integral `J(y, Γ)` of one component at a single value of `Γ`.
pub fn jump_drift_integral(comp: &LevyComponentSpec, mpr: &MprFamily, y: f64, big_gamma: f64) -> Result<f64> {
    if let Some(jumps) = comp.jumps() {
        let mut acc = 0.0;
        for j in jumps {
            let phi = mpr.phi(y, j.size);
            let e = (j.size * big_gamma).exp();
            acc += if comp.compensated() {
                j.intensity * j.size * (phi * e - 1.0)
            } else {
                j.intensity * j.size * phi * e
            };
        }
        return Ok(acc);
    }
    if y == mpr.y_star() {
        return comp.cumulant_deriv(big_gamma, 1);
    }
    match mpr.psi_kind() {
        PsiKind::Zero => comp.cumulant_deriv(big_gamma, 1),
        PsiKind::ExpInX(v) => comp.cumulant_deriv(v.eval(y) + big_gamma, 1),
        PsiKind::ConstantInX => {
            let d = comp.cumulant_deriv(big_gamma, 1)?;
            if comp.compensated() {
                Ok((1.0 + y) * d + y * comp.mean_jump())
            } else {
                Ok((1.0 + y) * d)
            }
        }
        PsiKind::ProductForm(..) => Err(Error::Unsupported("product-form Ψ on a parametric Lévy measure".into())),
    }
}

/// Writes `α(h, y)` into `out`.
pub fn alpha_into(model: &ModelSpec, h: &ForwardCurve, y: f64, out: &mut [f64]) -> Result<()> {
    h.check_grid(model.grid())?;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (k, (spec, cache)) in model.sigma().iter().zip(model.sigma_cache()).enumerate() {
        let c = spec.factor(h);
        if c == 0.0 {
            continue;
        }
        let th = model.mpr().theta_component(y, k)?;
        for ((o, s), big_s) in out.iter_mut().zip(cache.shape.values()).zip(cache.integrated.values()) {
            *o -= c * s * (c * big_s - th);
        }
    }
    for (k, comp) in model.drivers().components().iter().enumerate() {
        let spec = &model.gamma()[k];
        let cache = &model.gamma_cache()[k];
        let c = spec.factor(h);
        if c == 0.0 {
            continue;
        }
        for ((o, g), big_g) in out.iter_mut().zip(cache.shape.values()).zip(cache.integrated.values()) {
            if *g == 0.0 {
                continue;
            }
            *o -= c * g * jump_drift_integral(comp, model.mpr(), y, c * big_g)?;
        }
    }
    Ok(())
}

pub fn alpha(model: &ModelSpec, h: &ForwardCurve, y: f64) -> Result<ForwardCurve> {
    let mut out = vec![0.0; model.grid().n_points()];
    alpha_into(model, h, y, &mut out)?;
    ForwardCurve::from_values(model.grid().clone(), out)
}

/// The classical drift `α(h, y*)`.
pub fn alpha_risk_neutral(model: &ModelSpec, h: &ForwardCurve) -> Result<ForwardCurve> {
    alpha(model, h, model.mpr().y_star())
}

/// `max_ξ |∫_0^ξ α(h,y*) − ½Σ_k Σ^k(ξ)² − Σ_k κ_k(Γ^k(ξ))|`.
///
/// The left side integrates the sampled drift by the trapezoid rule, the
/// right side evaluates the integrated volatilities symbolically.
pub fn drift_potential_check(model: &ModelSpec, h: &ForwardCurve) -> Result<f64> {
    let lhs = alpha_risk_neutral(model, h)?.cumulative_integral();
    let nodes = model.grid().nodes();
    let r0 = h.left();
    let sigma_int: Vec<_> = model.sigma().iter().map(|s| (s.factor_at(r0), s.shape.integrated_vol())).collect();
    let gamma_int: Vec<_> = model.gamma().iter().map(|g| (g.factor_at(r0), g.shape.integrated_vol())).collect();
    let mut worst: f64 = 0.0;
    for (i, &xi) in nodes.iter().enumerate() {
        let mut pot = 0.0;
        for (c, big_s) in &sigma_int {
            let v = c * big_s.eval(xi);
            pot += 0.5 * v * v;
        }
        for ((c, big_g), comp) in gamma_int.iter().zip(model.drivers().components()) {
            pot += comp.cumulant(c * big_g.eval(xi))?;
        }
        worst = worst.max((lhs.values()[i] - pot).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::CurveGrid;
    use crate::levy::{DriverConfig, Jump};
    use crate::model::VolSpec;
    use crate::qexp::QuasiExp;

    fn table(compensated: bool) -> LevyComponentSpec {
        LevyComponentSpec::jump_table(
            vec![Jump { size: -0.5, intensity: 1.0 }, Jump { size: 1.0, intensity: 2.0 }],
            compensated,
        )
        .unwrap()
    }

    #[test]
    fn zero_vols_give_zero_drift() {
        let grid = CurveGrid::default_grid();
        let drivers = DriverConfig::new(1, vec![table(false)]).unwrap();
        let m = ModelSpec::new(
            grid.clone(),
            vec![VolSpec::fixed(QuasiExp::zero())],
            vec![VolSpec::fixed(QuasiExp::zero())],
            drivers,
            MprFamily::risk_neutral(),
        )
        .unwrap();
        let h = ForwardCurve::constant(grid, 0.03).unwrap();
        assert_eq!(alpha(&m, &h, 0.0).unwrap().max_abs(), 0.0);
        assert_eq!(drift_potential_check(&m, &h).unwrap(), 0.0);
    }

    #[test]
    fn constant_sigma_drift() {
        let grid = CurveGrid::default_grid();
        let drivers = DriverConfig::new(1, vec![]).unwrap();
        let m = ModelSpec::new(
            grid.clone(),
            vec![VolSpec::fixed(QuasiExp::constant(0.02))],
            vec![],
            drivers,
            MprFamily::risk_neutral(),
        )
        .unwrap();
        let a = alpha(&m, &ForwardCurve::zeros(grid), 0.0).unwrap();
        // node 40 is ξ = 2
        assert!((a.values()[40] - 0.0008).abs() < 1e-15);
    }

    #[test]
    fn vasicek_risk_neutral_closed_form() {
        let grid = CurveGrid::default_grid();
        let drivers = DriverConfig::new(1, vec![]).unwrap();
        let m = ModelSpec::new(
            grid.clone(),
            vec![VolSpec::fixed(QuasiExp::vasicek(0.02, 0.1).unwrap())],
            vec![],
            drivers,
            MprFamily::risk_neutral(),
        )
        .unwrap();
        let h = ForwardCurve::zeros(grid);
        let a = alpha_risk_neutral(&m, &h).unwrap();
        let e = (-0.1f64).exp();
        let want = 0.02 * 0.02 * e * (1.0 - e) / 0.1;
        assert!((a.values()[20] - want).abs() < 1e-9);
        assert!((want - 3.44427e-4).abs() < 1e-9);
        assert_eq!(a, alpha(&m, &h, m.mpr().y_star()).unwrap());
    }

    #[test]
    fn uncompensated_table_matches_cumulant_identity() {
        let grid = CurveGrid::default_grid();
        let comp = table(false);
        let drivers = DriverConfig::new(0, vec![comp.clone()]).unwrap();
        let g0 = 0.01;
        let m = ModelSpec::new(
            grid.clone(),
            vec![],
            vec![VolSpec::fixed(QuasiExp::constant(g0))],
            drivers,
            MprFamily::risk_neutral(),
        )
        .unwrap();
        let a = alpha(&m, &ForwardCurve::zeros(grid.clone()), 0.0).unwrap();
        for (i, &xi) in grid.nodes().iter().enumerate() {
            let want = -g0 * comp.cumulant_deriv(-g0 * xi, 1).unwrap();
            assert!((a.values()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn compensated_table_has_no_jump_drift_at_zero_gamma() {
        let comp = table(true);
        assert_eq!(jump_drift_integral(&comp, &MprFamily::risk_neutral(), 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn product_form_on_bilateral_gamma_is_unsupported() {
        use crate::mpr::{ThetaKind, Vartheta, XiMap};
        let bg = LevyComponentSpec::bilateral_gamma(1.0, 5.0, 1.0, 5.0, true).unwrap();
        let drivers = DriverConfig::new(0, vec![bg.clone()]).unwrap();
        let mpr = MprFamily::new(
            ThetaKind::Zero,
            PsiKind::ProductForm(Vartheta::Linear(0.5), XiMap::Tanh),
            0.0,
            vec![0.0, 1.0],
            &drivers,
        )
        .unwrap();
        assert!(jump_drift_integral(&bg, &mpr, 0.0, -0.1).is_ok());
        assert!(matches!(jump_drift_integral(&bg, &mpr, 1.0, -0.1), Err(Error::Unsupported(_))));
    }
}

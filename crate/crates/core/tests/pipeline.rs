use hjmm::config::{parse_override, Scenario};
use hjmm::drift::{alpha, alpha_risk_neutral, drift_potential_check};
use hjmm::realization::{
    build_subspace_v, check_invariance, default_v_samples, finite_dim_realization, parametrize_foliation, Verdict,
};
use hjmm::sim::{bond_price, simulate, SimConfig};
use hjmm::Error;

const VASICEK: &str = "
[wiener]
count = 1
sigma.1 = vasicek:0.02,0.1
[jumps]
count = 0
[mc]
paths = 200
seed = 5
[time]
t_max = 0.5
dt = 0.01
";

const BESSEL: &str = "
[grid]
xi_max = 3
n_points = 61
[wiener]
count = 1
sigma.1 = vasicek:0.02,0.1
[jumps]
count = 1
comp.1 = table:{-0.5:1,0.5:0.5,1:0.5}
gamma.1 = constant:0.01
[mpr]
theta = bessel
psi = const_y
[state]
kind = bessel
y0 = 0.25
[mc]
paths = 64
seed = 11
[report]
maturities = 1,2
[time]
t_max = 0.5
dt = 0.005
";

#[test]
fn risk_neutral_drift_matches_the_potential() {
    let sc = Scenario::load(VASICEK, &[]).unwrap();
    assert!(drift_potential_check(&sc.model, &sc.h0).unwrap() < 1e-6);
    let a = alpha(&sc.model, &sc.h0, 0.0).unwrap();
    let b = alpha_risk_neutral(&sc.model, &sc.h0).unwrap();
    assert_eq!(a.values(), b.values());
    // HJM drift of a deterministic Wiener model: σ(ξ) ∫₀^ξ σ
    let s = |x: f64| 0.02 * (-0.1 * x).exp();
    let big = |x: f64| 0.2 * (1.0 - (-0.1 * x).exp());
    for (x, v) in sc.h0.grid().nodes().iter().zip(a.values()) {
        assert!((v - s(*x) * big(*x)).abs() < 1e-12);
    }
}

#[test]
fn same_seed_same_paths() {
    let sc = Scenario::load(BESSEL, &[]).unwrap();
    let a = simulate(&sc.model, &sc.h0, &sc.sim).unwrap();
    let b = simulate(&sc.model, &sc.h0, &sc.sim).unwrap();
    assert_eq!(a, b);
    let c = simulate(&sc.model, &sc.h0, &SimConfig { seed: 12, ..sc.sim.clone() }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn z_and_gop_stay_positive() {
    let sc = Scenario::load(BESSEL, &[]).unwrap();
    for p in simulate(&sc.model, &sc.h0, &sc.sim).unwrap() {
        assert!(p.z.iter().all(|&z| z > 0.0 && z.is_finite()));
        assert!(p.gop.iter().all(|&s| s > 0.0));
        assert!(p.y.iter().all(|&y| y > 0.0));
        assert_eq!(p.z[0], 1.0);
    }
}

#[test]
fn initial_bond_prices_come_from_the_curve() {
    let sc = Scenario::load(BESSEL, &[]).unwrap();
    let p = &simulate(&sc.model, &sc.h0, &sc.sim).unwrap()[0];
    for (i, &t) in sc.sim.maturities.iter().enumerate() {
        assert!((p.bonds[i][0] - bond_price(&sc.h0, t).unwrap()).abs() < 1e-15);
    }
    assert!(matches!(bond_price(&sc.h0, 5.0), Err(Error::MaturityOutOfRange { .. })));
}

#[test]
fn deterministic_volatility_is_certified_and_realised() {
    let sc = Scenario::load(BESSEL, &[]).unwrap();
    let v = build_subspace_v(&sc.model).unwrap();
    let f = parametrize_foliation(&sc.model, v, &sc.h0, 0.5, 0.01).unwrap();
    let vs = default_v_samples(&f.subspace, 3, 0.01, 1).unwrap();
    let rep = check_invariance(&sc.model, &f, &[0.0, 0.25, 0.5], &vs).unwrap();
    assert_eq!(rep.verdict, Verdict::Certified);
    let fm = finite_dim_realization(&sc.model, &f, &rep).unwrap();
    assert_eq!(fm.d_matrix.nrows(), f.subspace.dim());
    assert!(f.index_of(0.123).is_err());
}

#[test]
fn state_dependent_jump_volatility_is_refuted() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/state_gamma.cfg");
    let sc = Scenario::load(&std::fs::read_to_string(path).unwrap(), &[]).unwrap();
    let v = hjmm::realization::build_subspace_v_frozen(&sc.model, &sc.h0).unwrap();
    let f = parametrize_foliation(&sc.model, v, &sc.h0, 0.5, 0.01).unwrap();
    let vs = default_v_samples(&f.subspace, 3, 0.05, 1).unwrap();
    let rep = check_invariance(&sc.model, &f, &[0.0, 0.5], &vs).unwrap();
    assert_eq!(rep.verdict, Verdict::Refuted);
    assert!(finite_dim_realization(&sc.model, &f, &rep).is_err());
}

#[test]
fn bad_configs_point_at_the_line() {
    let err = Scenario::load("[grid]\nxi_max = 3\nbogus = 1\n", &[]).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
    let err = Scenario::load("[wiener]\ncount = 1\nsigma.1 = wobbly:1\n", &[]).unwrap_err();
    assert!(err.to_string().contains("wobbly"), "{err}");
    assert!(Scenario::load("[time]\nt_max = 1\ndt = 0.3\n", &[]).is_err());
    assert!(Scenario::load("[report]\nmaturities = 100\n", &[]).is_err());
}

#[test]
fn overrides_change_the_hash() {
    let a = Scenario::load(VASICEK, &[]).unwrap();
    let b = Scenario::load(VASICEK, &[parse_override("mc.seed=6").unwrap()]).unwrap();
    let c = Scenario::load(&format!("# comment\n{VASICEK}"), &[]).unwrap();
    assert_ne!(a.config_hash, b.config_hash);
    assert_eq!(a.config_hash, c.config_hash);
}

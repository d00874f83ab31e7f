use hjmm::config::Scenario;
use hjmm::curve::ForwardCurve;
use hjmm::model::ModelSpec;
use hjmm::mpr::{bessel_identity, StateKind, StateProcessSpec, ThetaKind};
use hjmm::oracles::{
    exponential_family_agreement, laplace, laplace_battery, laplace_uniqueness_harness, select_eval_points,
    vandermonde_certificate, DiscreteMeasure, SelectionVerdict, UniquenessVerdict, VandermondeForm, INDEPENDENCE_TOL,
    SOLVE_RESIDUAL_TOL, TRANSFORM_TOL,
};
use hjmm::realization::{
    build_subspace_v, build_subspace_v_frozen, check_invariance, compare_factor_model, default_v_samples,
    finite_dim_realization, parametrize_foliation, Verdict, CERTIFY_TOL, REFUTE_TOL,
};
use hjmm::sim::{martingale_statistic, simulate, Quantity, SimConfig};
use hjmm::span_rank::{
    cumulant_span_rank, interior_z_grid, numerical_rank, rank_u_gamma, rank_u_psi, sample_u_psi_gamma, RankReport,
    DEFAULT_RANK_TOL,
};
use hjmm::{Error, Result};

use crate::report::{num, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Invariance,
    Rank,
    Bessel,
    Martingale,
    Oracles,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Invariance => "invariance",
            Command::Rank => "rank",
            Command::Bessel => "bessel",
            Command::Martingale => "martingale",
            Command::Oracles => "oracles",
        }
    }
}

/// Reports to write plus the process exit code.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub reports: Vec<(String, Report)>,
    pub summary: Vec<String>,
}

impl Outcome {
    fn ok(reports: Vec<(String, Report)>, summary: Vec<String>) -> Self {
        Self { exit_code: 0, reports, summary }
    }
}

pub fn run(cmd: Command, sc: &Scenario) -> Result<Outcome> {
    match cmd {
        Command::Simulate => run_simulate(sc),
        Command::Invariance => run_invariance(sc),
        Command::Rank => run_rank(sc),
        Command::Bessel => run_bessel(sc),
        Command::Martingale => run_martingale(sc),
        Command::Oracles => run_oracles(sc),
    }
}

fn base(cmd: Command, sc: &Scenario) -> Report {
    Report::new(cmd.name(), &sc.config_hash, sc.sim.seed)
}

fn run_simulate(sc: &Scenario) -> Result<Outcome> {
    let paths = simulate(&sc.model, &sc.h0, &sc.sim)?;
    let mats = &sc.sim.maturities;
    let mut header: Vec<String> = ["time", "path_id", "R", "B", "GOP", "Z"].iter().map(|s| s.to_string()).collect();
    header.extend(mats.iter().map(|t| format!("P({t})")));
    header.extend(mats.iter().map(|t| format!("benchmarked({t})")));
    let floor_hits: usize = paths.iter().map(|p| p.floor_hits).sum();
    let mut rep = base(Command::Simulate, sc)
        .meta("paths", sc.sim.n_paths)
        .meta("dt", num(sc.sim.dt))
        .meta("t_max", num(sc.sim.t_max))
        .meta("state_floor_hits", floor_hits)
        .header(header);
    for p in &paths {
        for (j, &t) in p.times.iter().enumerate() {
            let mut row =
                vec![num(t), p.path_id.to_string(), num(p.short_rate[j]), num(p.bank[j]), num(p.gop[j]), num(p.z[j])];
            row.extend(p.bonds.iter().map(|b| num(b[j])));
            row.extend(p.benchmarked.iter().map(|b| num(b[j])));
            rep.row(row);
        }
    }
    let summary = vec![format!("simulated {} paths, {} rows", paths.len(), rep.n_rows())];
    Ok(Outcome::ok(vec![("simulate.csv".into(), rep)], summary))
}

fn state_dependent(model: &ModelSpec) -> bool {
    model.sigma().iter().chain(model.gamma()).any(|v| v.is_state_dependent())
}

fn run_invariance(sc: &Scenario) -> Result<Outcome> {
    let model = &sc.model;
    let frozen = state_dependent(model);
    let sub = if frozen { build_subspace_v_frozen(model, &sc.h0)? } else { build_subspace_v(model)? };
    let fol = parametrize_foliation(model, sub, &sc.h0, sc.sim.t_max, sc.sim.dt)?;
    let v = default_v_samples(&fol.subspace, sc.invariance.v_samples, sc.invariance.v_scale, sc.sim.seed)?;
    let rep = check_invariance(model, &fol, &sc.invariance.t_samples, &v)?;

    let d = model.drivers().wiener();
    let n = model.drivers().n_jump();
    let mut header: Vec<String> = ["t", "y_index", "y", "residual_drift"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=d).map(|k| format!("residual_vol_{k}")));
    header.extend((1..=n).map(|k| format!("residual_jump_{k}")));
    let mut out = base(Command::Invariance, sc)
        .tolerance("certify", CERTIFY_TOL)
        .tolerance("refute", REFUTE_TOL)
        .meta("dim_v", rep.dim)
        .meta("subspace", if frozen { "frozen at initial curve" } else { "exact" })
        .meta("v_samples", v.len())
        .header(header);
    let ys = model.mpr().y_samples();
    for r in &rep.rows {
        let mut row = vec![num(r.t), r.y_index.to_string(), num(ys[r.y_index]), num(r.drift)];
        row.extend(r.vol.iter().map(|v| num(*v)));
        row.extend(r.jump.iter().map(|v| num(*v)));
        out.row(row);
    }
    out.trailer(
        "verdict",
        format!(
            "{} (max residual {}, certify_tol {}, refute_tol {})",
            rep.verdict.as_str(),
            num(rep.max_residual()),
            num(CERTIFY_TOL),
            num(REFUTE_TOL)
        ),
    );
    let mut summary =
        vec![format!("dim V = {}, max residual {:e}: {}", rep.dim, rep.max_residual(), rep.verdict.as_str())];
    let mut reports = vec![("residuals.csv".to_string(), out)];

    if rep.verdict == Verdict::Certified && sc.invariance.compare_paths > 0 {
        let mut cmp = base(Command::Invariance, sc).meta("norm", "relative H on [0, xi_max - t_max]").header([
            "dt",
            "path",
            "relative_error",
        ]);
        let mut worst = Vec::new();
        for dt in [sc.sim.dt, 0.5 * sc.sim.dt] {
            let f = parametrize_foliation(model, fol.subspace.clone(), &sc.h0, sc.sim.t_max, dt)?;
            let r = check_invariance(model, &f, &sc.invariance.t_samples, &v)?;
            let fm = finite_dim_realization(model, &f, &r)?;
            let c = compare_factor_model(model, &f, &fm, &sc.sim.state, sc.invariance.compare_paths, sc.sim.seed)?;
            for (p, e) in c.errors.iter().enumerate() {
                cmp.row([num(dt), p.to_string(), num(*e)]);
            }
            summary.push(format!("factor model at dt {dt:e}: worst {:e}, mean {:e}", c.worst, c.mean));
            worst.push(c.worst);
        }
        cmp.trailer("halving_ratio", num(worst[0] / worst[1]));
        reports.push(("factor.csv".into(), cmp));
    }
    let exit_code = if rep.verdict == Verdict::Refuted { 2 } else { 0 };
    Ok(Outcome { exit_code, reports, summary })
}

fn rank_row(rep: &mut Report, span: &str, samples: usize, r: &RankReport) {
    let sv: Vec<String> = r.singular_values.iter().map(|v| num(*v)).collect();
    rep.row([span.to_string(), samples.to_string(), num(r.tol), r.rank.to_string(), sv.join(";")]);
}

fn unsupported_row(rep: &mut Report, span: &str, e: &Error) {
    rep.row([
        span.to_string(),
        "0".into(),
        num(DEFAULT_RANK_TOL),
        "unsupported".into(),
        e.to_string().replace(',', ";"),
    ]);
}

fn run_rank(sc: &Scenario) -> Result<Outcome> {
    let model = &sc.model;
    let p = &sc.rank;
    let scenario_id = &sc.config_hash[..12];
    let mut rep = base(Command::Rank, sc).tolerance("rank", DEFAULT_RANK_TOL).meta("scenario", scenario_id).header([
        "span",
        "samples",
        "tol",
        "rank",
        "singular_values",
    ]);
    let multiples: Vec<ForwardCurve> = (1..=p.h_multiples).map(|j| sc.h0.scaled(j as f64)).collect();
    let ys = model.mpr().y_samples().to_vec();
    let y_star = model.mpr().y_star();
    let mut summary = Vec::new();

    for k in 0..model.drivers().n_jump() {
        let comp = &model.drivers().components()[k];
        let tag = k + 1;
        match rank_u_psi(model, k, &ys, DEFAULT_RANK_TOL) {
            Ok((_, r)) => rank_row(&mut rep, &format!("U_psi_{tag}"), ys.len(), &r),
            Err(e @ Error::Unsupported(_)) => unsupported_row(&mut rep, &format!("U_psi_{tag}"), &e),
            Err(e) => return Err(e),
        }
        match rank_u_gamma(model, k, &multiples, DEFAULT_RANK_TOL) {
            Ok((_, r)) => rank_row(&mut rep, &format!("U_gamma_{tag}"), multiples.len(), &r),
            Err(e @ Error::Unsupported(_)) => unsupported_row(&mut rep, &format!("U_gamma_{tag}"), &e),
            Err(e) => return Err(e),
        }
        let z = interior_z_grid(comp, p.z_points, 10.0);
        let prof = cumulant_span_rank(comp, p.max_order, &z, DEFAULT_RANK_TOL)?;
        for (m, r) in prof.profile.iter().enumerate() {
            rep.row([
                format!("cumulant_{tag}_order_{}", m + 1),
                z.len().to_string(),
                num(prof.tol),
                r.to_string(),
                String::new(),
            ]);
        }
        summary.push(format!("component {tag}: cumulant rank profile {:?}", prof.profile));
    }

    if model.drivers().n_jump() > 0 {
        for n in 1..=p.h_multiples {
            let span = "U_psi_gamma_h";
            match sample_u_psi_gamma(model, &multiples[..n], &ys, DEFAULT_RANK_TOL) {
                Ok(set) => {
                    let r = numerical_rank(&set);
                    if n == p.h_multiples {
                        summary.push(format!("U_psi_gamma over {n} curve multiples: rank {}", r.rank));
                    }
                    rank_row(&mut rep, span, set.len(), &r);
                }
                Err(e @ Error::Unsupported(_)) => {
                    unsupported_row(&mut rep, span, &e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let nonstar: Vec<f64> = ys.iter().cloned().filter(|&y| y != y_star).collect();
        for n in 1..=p.y_counts.min(nonstar.len()) {
            let span = "U_psi_gamma_y";
            match sample_u_psi_gamma(model, std::slice::from_ref(&sc.h0), &nonstar[..n], DEFAULT_RANK_TOL) {
                Ok(set) => rank_row(&mut rep, span, set.len(), &numerical_rank(&set)),
                Err(e @ Error::Unsupported(_)) => {
                    unsupported_row(&mut rep, span, &e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Outcome::ok(vec![("rank.csv".into(), rep)], summary))
}

fn check_row(rep: &mut Report, check: &str, value: f64, threshold: &str, pass: Option<bool>) {
    let pass = match pass {
        Some(true) => "pass",
        Some(false) => "fail",
        None => "",
    };
    rep.row([check.to_string(), num(value), threshold.to_string(), pass.to_string()]);
}

fn run_bessel(sc: &Scenario) -> Result<Outcome> {
    let model = &sc.model;
    if model.mpr().theta_kind() != &ThetaKind::BesselSqrt {
        return Err(Error::ConfigKey {
            key: "mpr.theta".into(),
            msg: "the bessel command needs theta = bessel".into(),
        });
    }
    let state = if sc.sim.state.kind == StateKind::BesselInverse {
        sc.sim.state
    } else {
        StateProcessSpec::new(StateKind::BesselInverse, 0.25)?
    };
    let (t, dt, n, seed) = (sc.sim.t_max, sc.sim.dt, sc.sim.n_paths, sc.sim.seed);
    let fine = bessel_identity(model.mpr(), model.drivers(), &state, t, dt, n, seed)?;
    let finer = bessel_identity(model.mpr(), model.drivers(), &state, t, 0.25 * dt, n, seed)?;
    let mut sorted = fine.max_rel_error.clone();
    sorted.sort_by(f64::total_cmp);
    let p99 = sorted[(sorted.len() * 99 / 100).min(sorted.len() - 1)];
    let (mean_z, se_z) = fine.terminal_mean();
    let contraction = fine.worst() / finer.worst();
    let jumps = model.drivers().n_jump() > 0 && !model.mpr().is_zero();

    let mut rep = base(Command::Bessel, sc)
        .meta("y0", num(state.y0))
        .meta("dt", num(dt))
        .meta("paths", n)
        .meta("identity", if jumps { "y0 Z = Y E(-psi*(mu - nu))" } else { "y0 Z = Y" })
        .header(["check", "value", "threshold", "pass"]);
    check_row(&mut rep, "worst_pathwise_rel_error", fine.worst(), "<= 0.05", Some(fine.worst() <= 0.05));
    check_row(&mut rep, "mean_pathwise_rel_error", fine.mean_error(), "", None);
    check_row(&mut rep, "p99_pathwise_rel_error", p99, "", None);
    check_row(&mut rep, "worst_rel_error_dt_over_4", finer.worst(), "", None);
    check_row(&mut rep, "worst_error_contraction", contraction, ">= 1.3", Some(contraction >= 1.3));
    check_row(&mut rep, "mean_Z_terminal", mean_z, "", None);
    check_row(&mut rep, "se_Z_terminal", se_z, "", None);
    let strict = mean_z < 1.0 - 3.0 * se_z;
    check_row(&mut rep, "strict_supermartingale_z", (mean_z - 1.0) / se_z, "< -3", Some(strict));
    check_row(&mut rep, "state_floor_hits", fine.floor_hits as f64, "", None);
    let summary = vec![
        format!("pathwise identity: worst {:.4}, p99 {:.4}, contraction {:.2}", fine.worst(), p99, contraction),
        format!("E[Z_{t}] = {mean_z:.5} +- {se_z:.5}"),
    ];
    Ok(Outcome::ok(vec![("bessel.csv".into(), rep)], summary))
}

fn run_martingale(sc: &Scenario) -> Result<Outcome> {
    let model = &sc.model;
    let cfg = SimConfig { store_curves: false, ..sc.sim.clone() };
    let paths = simulate(model, &sc.h0, &cfg)?;
    let mut rep = base(Command::Martingale, sc).meta("paths", paths.len()).tolerance("z_score", 3.0).header([
        "quantity",
        "maturity",
        "t",
        "initial",
        "mean_change",
        "std_error",
        "z_score",
        "within_3se",
    ]);
    let mut summary = Vec::new();
    let mut worst: f64 = 0.0;
    for &t in &sc.times {
        let mut qs: Vec<(String, String, Quantity)> = Vec::new();
        for (i, &m) in cfg.maturities.iter().enumerate() {
            if m >= t {
                qs.push(("discounted".into(), num(m), Quantity::Discounted(i)));
                qs.push(("benchmarked".into(), num(m), Quantity::Benchmarked(i)));
            }
        }
        qs.push(("Z".into(), String::new(), Quantity::Z));
        qs.push(("benchmarked_bank".into(), String::new(), Quantity::BenchmarkedBank));
        for (name, mat, q) in qs {
            let s = martingale_statistic(&paths, q, t)?;
            worst = worst.max(s.z_score.abs());
            rep.row([
                name,
                mat,
                num(t),
                num(s.initial),
                num(s.mean),
                num(s.std_error),
                num(s.z_score),
                (s.z_score.abs() <= 3.0).to_string(),
            ]);
        }
    }
    summary.push(format!("{} paths, largest |z| = {worst:.2}", paths.len()));
    Ok(Outcome::ok(vec![("martingale.csv".into(), rep)], summary))
}

fn run_oracles(sc: &Scenario) -> Result<Outcome> {
    let mut rep = base(Command::Oracles, sc)
        .tolerance("independence", INDEPENDENCE_TOL)
        .tolerance("transform", TRANSFORM_TOL)
        .tolerance("solve_residual", SOLVE_RESIDUAL_TOL)
        .header(["check", "value", "threshold", "pass"]);
    let mut all = true;
    let mut check = |rep: &mut Report, name: &str, value: f64, threshold: &str, ok: bool| {
        all &= ok;
        check_row(rep, name, value, threshold, Some(ok));
    };

    let c = vandermonde_certificate(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0], VandermondeForm::Exponential)?;
    check(&mut rep, "vandermonde_3x3_relative_det", c.relative, "> 1e-10", c.independent);
    let c = vandermonde_certificate(&[0.1, 0.2, 0.3], &[1.0, 2.0, 1.0], VandermondeForm::Exponential)?;
    check(&mut rep, "vandermonde_repeated_multiplier_det", c.determinant, "== 0", c.determinant == 0.0);

    let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
    let poly: Vec<Box<dyn Fn(f64) -> f64>> = vec![Box::new(|_| 1.0), Box::new(|x| x), Box::new(|x| x * x)];
    let s = select_eval_points(&poly, &grid);
    check(&mut rep, "select_points_polynomials_det", s.determinant, "!= 0", s.verdict == SelectionVerdict::Selected);
    let dep: Vec<Box<dyn Fn(f64) -> f64>> = vec![Box::new(|x: f64| (-x).exp()), Box::new(|x: f64| 2.0 * (-x).exp())];
    let s = select_eval_points(&dep, &grid);
    check(&mut rep, "select_points_dependent_family", s.relative, "dependent", s.verdict != SelectionVerdict::Selected);

    let two = DiscreteMeasure::new(vec![(1.0, 2.0)])?;
    let l = laplace(&two, 0.5)?;
    check(&mut rep, "laplace_atom", l, "2 exp(-0.5)", (l - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    let mu = DiscreteMeasure::new(vec![(1.0, 1.0)])?;
    let nu = DiscreteMeasure::new(vec![(2.0, 1.0)])?;
    let lg: Vec<f64> = (0..4).map(|i| i as f64 * 0.5).collect();
    let r = laplace_uniqueness_harness(&mu, &nu, &lg)?;
    check(&mut rep, "harness_distinct_atoms", r.max_gap, "distinct", r.verdict == UniquenessVerdict::Distinct);
    let r = laplace_uniqueness_harness(&mu, &mu, &lg)?;
    check(&mut rep, "harness_equal_atoms", r.residual, "equal", r.verdict == UniquenessVerdict::Equal);

    let a = exponential_family_agreement(100, sc.sim.seed)?;
    check(&mut rep, "vandermonde_vs_rank_disagreements", a.disagreements as f64, "== 0", a.disagreements == 0);
    let b = laplace_battery(100, sc.sim.seed)?;
    check(&mut rep, "laplace_distinct_separated", b.separated as f64, "== 100", b.separated == b.pairs);
    check(&mut rep, "laplace_false_separations", b.false_separations as f64, "== 0", b.false_separations == 0);
    check(&mut rep, "laplace_solve_residual", b.worst_residual, "<= 1e-8", b.worst_residual <= SOLVE_RESIDUAL_TOL);

    let summary = vec![format!("oracle self-tests: {}", if all { "all pass" } else { "FAILURES" })];
    Ok(Outcome { exit_code: if all { 0 } else { 1 }, reports: vec![("oracles.csv".into(), rep)], summary })
}

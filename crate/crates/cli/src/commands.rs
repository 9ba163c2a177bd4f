//! The four subcommands. Each writes plain CSV/text files into the output
//! directory; nothing time- or thread-dependent goes into them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fraclap::assembly::{CoefficientField, NonlocalAssembly, ProblemParams};
use fraclap::dn::{self, ObservationSet};
use fraclap::forward::{ExteriorDatum, ForwardOperator, Solution};
use fraclap::inverse::{self, CellLayout, InverseModel, MeasurementSet, RecoveryResult};
use fraclap::io::{fmt_num, CsvTable};
use fraclap::kernel::{frac_constant, getoor_oracle, getoor_profile, verify_symbol_with_constant, FracExponent};
use fraclap::mesh::FeFunction;
use fraclap::regional::{assemble_regional_form, runge_approximate, runge_two_sets, RungeReport, Subdomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{LambdaRule, RecoverMode, Rhs, RunConfig, RungeDemo, SourceKind, Start};
use crate::CliError;

pub fn assembly(cfg: &RunConfig) -> Result<NonlocalAssembly, CliError> {
    let params = ProblemParams::new(cfg.problem.t, cfg.problem.s, cfg.geometry()?, cfg.geometry.h)?;
    let asm = NonlocalAssembly::new(params)?;
    for w in &asm.warnings {
        log::warn!("{w}");
    }
    Ok(asm)
}

/// Configured exterior sources; the vanishing source needs the truth operator.
pub fn sources(cfg: &RunConfig, op: &ForwardOperator<'_>) -> Result<Vec<ExteriorDatum>, CliError> {
    let [w0, w1] = cfg.sources.window;
    Ok(match cfg.sources.kind {
        SourceKind::None => vec![],
        SourceKind::Bumps => inverse::source_family(op.asm, w0, w1, cfg.sources.count)?,
        SourceKind::Vanishing => {
            let [lo, hi] = cfg.sources.vanishing_cell;
            vec![inverse::vanishing_source(op, (w0, w1), lo, hi, "f00")?]
        }
    })
}

fn write(out: &Path, name: &str, body: &str) -> Result<(), CliError> {
    fs::write(out.join(name), body)?;
    Ok(())
}

fn write_csv(out: &Path, name: &str, t: &CsvTable) -> Result<(), CliError> {
    t.write(&out.join(name))?;
    Ok(())
}

pub fn cmd_forward(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let asm = assembly(cfg)?;
    let mesh = &asm.mesh;
    let (b, q) = cfg.truth()?;
    let op = ForwardOperator::new(&asm, &b, &q)?;
    let mut srcs = sources(cfg, &op)?;
    if srcs.is_empty() {
        srcs.push(ExteriorDatum::zero(mesh));
    }
    let rhs = match cfg.forward.rhs {
        Rhs::None => None,
        Rhs::Getoor => {
            let k = getoor_oracle(asm.params.t);
            Some(FeFunction::on_domain(mesh, |_| k))
        }
    };
    let sols: Vec<Solution> = srcs.iter().map(|f| op.solve(f, rhs.as_ref())).collect::<Result<_, _>>()?;

    let mut header = vec!["x".to_string()];
    header.extend(srcs.iter().map(|f| format!("u_{}", f.id)));
    if cfg.forward.rhs == Rhs::Getoor {
        header.push("getoor".into());
    }
    let mut table = CsvTable::new(&header);
    for (i, &x) in mesh.nodes.iter().enumerate() {
        let mut row = vec![x];
        row.extend(sols.iter().map(|s| s.u.dof[i]));
        if cfg.forward.rhs == Rhs::Getoor {
            row.push(getoor_profile(asm.params.t, x));
        }
        table.push_nums(&row);
    }
    write_csv(out, "solution.csv", &table)?;

    if !cfg.observations.points.is_empty() {
        let obs = cfg.observations(mesh)?;
        let mut dnt = CsvTable::new(&["x", "source", "neumann", "dn_map"]);
        for (f, s) in srcs.iter().zip(&sols) {
            let n = dn::nonlocal_normal_derivative(&asm, s, &f.id, &obs)?;
            let l = dn::dn_operator(&asm, s, &f.id, &obs);
            for k in 0..obs.len() {
                dnt.push(vec![fmt_num(obs.points[k]), f.id.clone(), fmt_num(n.values[k]), fmt_num(l.values[k])]);
            }
        }
        write_csv(out, "dn.csv", &dnt)?;
    }

    let sp = &op.spectrum;
    let mut log = String::new();
    let _ = writeln!(log, "smallest_singular_value,{}", fmt_num(sp.smallest_singular_value));
    let _ = writeln!(log, "largest_singular_value,{}", fmt_num(sp.largest_singular_value));
    let _ = writeln!(log, "guard_passed,{}", sp.passed);
    for (f, s) in srcs.iter().zip(&sols) {
        let _ = writeln!(log, "residual_{},{}", f.id, fmt_num(s.residual));
    }
    for w in &asm.warnings {
        let _ = writeln!(log, "warning,{w}");
    }
    write(out, "forward.log", &log)
}

/// Synthetic data, model and start vector for a recovery run.
pub struct RecoverySetup<'a> {
    pub data: MeasurementSet,
    pub model: InverseModel<'a>,
    pub truth: (CoefficientField, CoefficientField),
    pub start: Vec<f64>,
    pub lambda: f64,
}

pub fn recovery_setup<'a>(cfg: &RunConfig, asm: &'a NonlocalAssembly) -> Result<RecoverySetup<'a>, CliError> {
    let (b, q) = cfg.truth()?;
    let obs: ObservationSet = cfg.observations(&asm.mesh)?;
    let op = ForwardOperator::new(asm, &b, &q)?;
    let srcs = sources(cfg, &op)?;
    if srcs.is_empty() {
        return Err(CliError::Config("recover: at least one exterior source is needed".into()));
    }
    let mut data = MeasurementSet::synthesize(asm, &obs, srcs, &b, &q)?;
    if cfg.recover.noise > 0.0 {
        data = data.with_relative_noise(cfg.recover.noise, cfg.seed);
    }
    let layout = CellLayout {
        b_edges: cfg.recover.b_cells.clone(),
        q_edges: cfg.recover.q_cells.clone(),
    };
    let start = match cfg.recover.start {
        Start::Zero => vec![0.0; layout.len()],
        Start::Truth => layout.theta(&b, &q),
    };
    let model = InverseModel::new(asm, layout, &obs, &data.sources)?;
    let lambda = match cfg.recover.lambda_rule {
        LambdaRule::Fixed => cfg.recover.lambda,
        LambdaRule::DataScale => inverse::default_lambda(&data),
    };
    Ok(RecoverySetup {
        data,
        model,
        truth: (b, q),
        start,
        lambda,
    })
}

pub fn run_recovery(cfg: &RunConfig, setup: &RecoverySetup<'_>) -> Result<RecoveryResult, CliError> {
    let (b, q) = &setup.truth;
    let r = match cfg.recover.mode {
        RecoverMode::All => inverse::gauss_newton(&setup.model, &setup.data, &setup.start, setup.lambda, cfg.recover.max_iter)?,
        RecoverMode::Single => inverse::recover_single_measurement(
            &setup.model,
            &setup.data,
            &setup.start,
            setup.lambda,
            cfg.recover.max_iter,
            Some((b, q)),
        )?,
    };
    Ok(r)
}

pub fn cmd_recover(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let asm = assembly(cfg)?;
    let setup = recovery_setup(cfg, &asm)?;
    let res = run_recovery(cfg, &setup)?;
    let (b, q) = &setup.truth;
    write_csv(out, "recovery.csv", &res.to_csv(Some((b, q))))?;
    write(out, "recovery_log.csv", &res.run_log())?;
    write_csv(out, "measurements.csv", &setup.data.to_csv())?;

    let mut summary = String::new();
    let _ = writeln!(summary, "lambda,{}", fmt_num(res.lambda_tik));
    let _ = writeln!(summary, "iterations,{}", res.iterations);
    let _ = writeln!(summary, "final_misfit,{}", fmt_num(res.final_misfit()));
    let _ = writeln!(summary, "b_relative_error,{}", fmt_num(inverse::coefficient_relative_error(&res.b_hat, b)));
    let _ = writeln!(summary, "q_relative_error,{}", fmt_num(inverse::coefficient_relative_error(&res.q_hat, q)));
    if let Some(ir) = res.identity_residual {
        let sol = setup.model.solutions(&setup.model.layout.theta(b, q))?.remove(0);
        let scale = inverse::identity_scale(&asm, &sol, b, q);
        let _ = writeln!(summary, "identity_residual,{}", fmt_num(ir));
        let _ = writeln!(summary, "identity_scale,{}", fmt_num(scale));
    }
    if let Some(d) = &res.diagnosis {
        let _ = writeln!(summary, "zero_sets_cover_domain,{}", d.covers_domain);
        let mut zt = CsvTable::new(&["x", "u_zero", "halfop_zero"]);
        for (k, &x) in asm.quad.nodes.iter().enumerate() {
            zt.push(vec![fmt_num(x), (d.u_zero[k] as u8).to_string(), (d.halfop_zero[k] as u8).to_string()]);
        }
        write_csv(out, "zero_sets.csv", &zt)?;
    }
    write(out, "recovery_summary.csv", &summary)
}

pub fn runge_report(cfg: &RunConfig, asm: &NonlocalAssembly, demo: RungeDemo) -> Result<RungeReport, CliError> {
    let mesh = &asm.mesh;
    let rg = &cfg.runge;
    let hull = |s: &Subdomain| (s.intervals[0].0, s.intervals[s.intervals.len() - 1].1);
    let [w0, w1] = cfg.sources.window;
    let (b, q) = cfg.truth()?;
    let interior = cfg.subdomain(mesh, &rg.interior, "interior")?;
    let on_interior = |x: f64| rg.target.eval(x, hull(&interior));
    Ok(match demo {
        RungeDemo::Regional | RungeDemo::TwoSet => {
            let ra = assemble_regional_form(mesh, FracExponent::new(rg.exponent)?)?;
            if demo == RungeDemo::Regional {
                runge_approximate(&ra, &interior, &on_interior, &rg.sizes)?
            } else {
                let o1 = cfg.subdomain(mesh, &rg.first, "first")?;
                let o2 = cfg.subdomain(mesh, &rg.second, "second")?;
                let on_first = |x: f64| rg.target.eval(x, hull(&o1));
                runge_two_sets(&ra, &o1, &o2, &on_first, &rg.sizes)?
            }
        }
        RungeDemo::Halfop => inverse::runge_sq_demo(asm, &b, &q, &interior, (w0, w1), &on_interior, &rg.sizes)?,
        RungeDemo::Solution => {
            let dom = (cfg.geometry.omega_lo, cfg.geometry.omega_hi);
            inverse::runge_solution_demo(asm, &b, &q, (w0, w1), &|x| rg.target.eval(x, dom), &rg.sizes)?
        }
    })
}

pub fn demo_name(d: RungeDemo) -> &'static str {
    match d {
        RungeDemo::Regional => "regional",
        RungeDemo::TwoSet => "two_set",
        RungeDemo::Halfop => "halfop",
        RungeDemo::Solution => "solution",
    }
}

pub fn cmd_runge(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let asm = assembly(cfg)?;
    for &d in &cfg.runge.demos {
        let rep = runge_report(cfg, &asm, d)?;
        write_csv(out, &format!("runge_{}.csv", demo_name(d)), &rep.to_csv())?;
    }
    Ok(())
}

/// One line of the verification report.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

pub fn verification_checks(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let v = &cfg.verify;
    let mut checks = Vec::new();
    for &a in &v.exponents {
        let e = FracExponent::new(a)?;
        let c = frac_constant(e).value * v.corrupt_constant;
        let rep = verify_symbol_with_constant(e, c, v.symbol_tol)?;
        checks.push(Check {
            name: format!("symbol_a{a}"),
            value: rep.max_rel_discrepancy,
            tolerance: v.symbol_tol,
        });
    }

    let asm = assembly(cfg)?;
    let mesh = &asm.mesh;
    let z = CoefficientField::zero();
    let op0 = ForwardOperator::new(&asm, &z, &z)?;
    let k = getoor_oracle(asm.params.t);
    let f = FeFunction::on_domain(mesh, |_| k);
    let u = op0.solve(&ExteriorDatum::zero(mesh), Some(&f))?.u;
    let exact = mesh.interpolate(|x| getoor_profile(asm.params.t, x));
    let mut diff = u.clone();
    diff.dof -= &exact.dof;
    checks.push(Check {
        name: "getoor_l2_relative".into(),
        value: diff.l2_norm(mesh) / exact.l2_norm(mesh),
        tolerance: v.getoor_tol,
    });

    // exterior relation and coefficient independence of the gap
    let obs = cfg.observations(mesh)?;
    let (b, q) = cfg.truth()?;
    let op1 = ForwardOperator::new(&asm, &b, &q)?;
    let bumps = inverse::source_family(&asm, cfg.sources.window[0], cfg.sources.window[1], 8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst_ln = 0.0f64;
    let mut worst_gap = 0.0f64;
    for k in 0..v.random_sources {
        let parts: Vec<(&ExteriorDatum, f64)> = bumps.iter().map(|f| (f, rng.random_range(-1.0..1.0))).collect();
        let f = ExteriorDatum::combination(format!("r{k}"), &parts)?;
        let mut gaps = Vec::new();
        for op in [&op0, &op1] {
            let s = op.solve(&f, None)?;
            let rep = dn::verify_ln_relation(&asm, &f, &s, &obs)?;
            worst_ln = worst_ln.max(rep.max_abs_discrepancy);
            gaps.push(rep.gap);
        }
        for (g0, g1) in gaps[0].iter().zip(&gaps[1]) {
            worst_gap = worst_gap.max((g0 - g1).abs());
        }
    }
    checks.push(Check {
        name: "dn_relation_max_abs".into(),
        value: worst_ln,
        tolerance: v.ln_tol,
    });
    checks.push(Check {
        name: "gap_coefficient_independence".into(),
        value: worst_gap,
        tolerance: v.gap_tol,
    });

    // invariance of one datum under a q-bump where u_f vanishes
    let h = mesh.h;
    let lo = mesh.nodes[mesh.nearest_node(0.5 * (cfg.geometry.omega_lo + cfg.geometry.omega_hi) + 0.375)];
    let fz = inverse::vanishing_source(&op1, (cfg.sources.window[0], cfg.sources.window[1]), lo, lo + h, "f0")?;
    let bump = CoefficientField::new(vec![lo, lo + h], vec![3.0])?;
    let q2 = add_fields(&q, &bump);
    let op2 = ForwardOperator::new(&asm, &b, &q2)?;
    let d1 = dn::nonlocal_normal_derivative(&asm, &op1.solve(&fz, None)?, "f0", &obs)?;
    let d2 = dn::nonlocal_normal_derivative(&asm, &op2.solve(&fz, None)?, "f0", &obs)?;
    checks.push(Check {
        name: "single_datum_invariance".into(),
        value: d1.weighted_distance(&d2) / d1.weighted_norm(),
        tolerance: v.invariance_tol,
    });
    let sol = op1.solve(&fz, None)?;
    let n = mesh.n_interior();
    let tests: Vec<_> = (0..n)
        .map(|i| {
            let mut e = nalgebra::DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    checks.push(Check {
        name: "identity_residual_on_zero_set".into(),
        value: inverse::identity_residual(&asm, &sol, &z, &bump, &tests),
        tolerance: v.invariance_tol,
    });
    Ok(checks)
}

/// Pointwise sum of two piecewise-constant fields.
pub fn add_fields(a: &CoefficientField, b: &CoefficientField) -> CoefficientField {
    let mut edges: Vec<f64> = a.edges.iter().chain(&b.edges).copied().collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let values = edges
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            a.eval(m) + b.eval(m)
        })
        .collect();
    CoefficientField { edges, values }
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let checks = verification_checks(cfg)?;
    let mut t = CsvTable::new(&["check", "value", "tolerance", "pass"]);
    for c in &checks {
        t.push(vec![c.name.clone(), fmt_num(c.value), fmt_num(c.tolerance), c.passed().to_string()]);
    }
    write_csv(out, "verify.csv", &t)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(format!("failed checks: {}", failed.join(", "))))
    }
}

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use dtphs_core::collocation::{catalogue, quadratic_invariant_residual, CollocationScheme};
use dtphs_core::dirac::{
    assemble_blocks, kernel_check, kernel_matrix, power_residual, power_scale, DiracCondition, DiscreteBond,
};
use dtphs_core::energy::{dissipation_decomposition, stagewise_dissipation, OrderFit};
use dtphs_core::experiment::{fit_slopes, ConvergencePoint, Experiment, DEFAULT_H_LIST};
use dtphs_core::integrator::{simulate as run_steps, step_count, PortLaw, Trajectory};
use dtphs_core::models::{FeedbackConfig, FeedbackMode};

use crate::args::{resolve_run, scheme, solver_config, Preset, RunArgs, RunConfig, TableauArgs, DAMPED_GAIN};
use crate::format::{csv_writer, indexed, num};
use crate::{CliError, UsageError};

/// Relative power-balance tolerance of `check`.
pub const POWER_TOL: f64 = 1e-12;
/// Skew-symmetry tolerance of `check`, relative to `max |E|`.
pub const SKEW_TOL: f64 = 1e-12;

pub fn tableau(args: &TableauArgs) -> Result<(), CliError> {
    let sch = scheme(args.scheme.kind(), args.stages)?;
    let s = sch.stages();
    let mut w = csv_writer(args.out.as_deref())?;
    w.write_record(["field", "i", "j", "value"])?;
    w.write_record(["scheme", "", "", sch.kind().name()])?;
    w.write_record(["stages", "", "", &s.to_string()])?;
    w.write_record(["order", "", "", &sch.order().to_string()])?;
    for (i, c) in sch.nodes().iter().enumerate() {
        w.write_record(["c", &(i + 1).to_string(), "", &num(*c)])?;
    }
    for (j, b) in sch.b().iter().enumerate() {
        w.write_record(["b", &(j + 1).to_string(), "", &num(*b)])?;
    }
    let mut matrices = vec![("A", sch.a())];
    if let Some(a_hat) = sch.a_hat() {
        matrices.push(("Ahat", a_hat));
    }
    matrices.push(("M", sch.mass().matrix()));
    for (name, mat) in matrices {
        for i in 0..s {
            for j in 0..s {
                w.write_record([name, &(i + 1).to_string(), &(j + 1).to_string(), &num(mat.row(i)[j])])?;
            }
        }
    }
    w.write_record(["c1", "", "", if sch.satisfies_c1() { "true" } else { "false" }])?;
    w.write_record(["quadratic_invariant_residual", "", "", &num(quadratic_invariant_residual(sch.tableau()))])?;
    w.flush()?;
    Ok(())
}

fn run(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let law_run = |law: PortLaw<'_>| {
        run_steps(cfg.model.as_ref(), &cfg.scheme, &cfg.x0, law, cfg.h, cfg.t_end, &cfg.solver, true)
    };
    let traj = match cfg.feedback {
        None => law_run(PortLaw::Open(cfg.input.as_ref()))?,
        Some((r, mode)) => law_run(PortLaw::Feedback(FeedbackConfig::new(r, mode, cfg.input.as_ref())?))?,
    };
    Ok(traj)
}

/// Continuous-time port input at a grid point.
fn port_input(cfg: &RunConfig, t: f64, y: &[f64]) -> Vec<f64> {
    let v = cfg.input.eval(t);
    match cfg.feedback {
        None => v,
        Some((r, _)) => v.iter().zip(y).map(|(v, y)| v - r * y).collect(),
    }
}

pub fn simulate(args: &RunArgs) -> Result<(), CliError> {
    if args.h_list.is_some() {
        return Err(UsageError("--h-list applies to `converge` only".into()).into());
    }
    let cfg = resolve_run(args)?;
    let traj = run(&cfg)?;

    match &args.out {
        None => write_traj(&cfg, &traj, None)?,
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_traj(&cfg, &traj, Some(&dir.join("traj.csv")))?;
            write_energy(&cfg, &traj, &dir.join("energy.csv"))?;
            if args.retain_stages {
                write_stages(&cfg, &traj, &dir.join("stages.csv"))?;
            }
        }
    }
    if args.retain_stages && args.out.is_none() {
        eprintln!("dtphs: --retain-stages needs --out, stage data not written");
    }

    let dh_tilde: f64 = traj.energy.iter().map(|e| e.dh_tilde).sum();
    let dh_bar: f64 = traj.energy.iter().map(|e| e.dh_bar).sum();
    eprintln!(
        "{} {} steps={} dH_tilde_tot={} dH_bar_tot={}",
        traj.model,
        traj.scheme,
        traj.steps(),
        num(dh_tilde),
        num(dh_bar)
    );
    Ok(())
}

fn write_traj(cfg: &RunConfig, traj: &Trajectory, path: Option<&Path>) -> Result<(), CliError> {
    let (n, m) = (cfg.model.state_dim(), cfg.model.port_dim());
    let mut w = csv_writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|c| format!("x{c}")));
    header.extend(indexed("u", m));
    header.extend(indexed("y", m));
    header.push("H".into());
    w.write_record(&header)?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let y = cfg.model.output(x);
        let u = port_input(cfg, *t, &y);
        let mut row = vec![num(*t)];
        row.extend(x.iter().map(|v| num(*v)));
        row.extend(u.iter().map(|v| num(*v)));
        row.extend(y.iter().map(|v| num(*v)));
        row.push(num(cfg.model.hamiltonian(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_energy(cfg: &RunConfig, traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    let stages = traj.stages.as_ref().expect("simulate retains stages");
    let mut w = csv_writer(Some(path))?;
    let mut header = vec!["k", "t_k", "dH_tilde", "dH_bar", "supplied", "dH_exact"];
    match cfg.feedback {
        Some((_, FeedbackMode::Portlevel)) => header.extend(["dissipated", "external"]),
        Some((_, FeedbackMode::Stagewise)) => header.push("dissipated_stagewise"),
        None => {}
    }
    w.write_record(&header)?;
    for (k, (e, sol)) in traj.energy.iter().zip(stages).enumerate() {
        let (t0, t1) = (traj.times[k], traj.times[k + 1]);
        let exact = match &cfg.exact {
            Some(x) => num(x.increment(t0, t1)?),
            None => String::new(),
        };
        let mut row = vec![(k + 1).to_string(), num(t0), num(e.dh_tilde), num(e.dh_bar), num(e.supplied), exact];
        if let Some((r, mode)) = cfg.feedback {
            let blocks = assemble_blocks(cfg.model.as_ref(), &sol.stage_x, &cfg.scheme)?;
            match mode {
                FeedbackMode::Portlevel => {
                    let (d, x) = dissipation_decomposition(sol, &blocks, mode, r)?;
                    row.extend([num(d), num(x)]);
                }
                FeedbackMode::Stagewise => row.push(num(stagewise_dissipation(sol, &blocks, r)?)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_stages(cfg: &RunConfig, traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    let stages = traj.stages.as_ref().expect("simulate retains stages");
    let (n, m) = (cfg.model.state_dim(), cfg.model.port_dim());
    let mut w = csv_writer(Some(path))?;
    let mut header = vec!["k".to_string(), "i".into(), "t".into()];
    for p in ["x", "f", "e"] {
        header.extend((1..=n).map(|c| format!("{p}{c}")));
    }
    header.extend((1..=m).map(|c| format!("u{c}")));
    w.write_record(&header)?;
    for (k, sol) in stages.iter().enumerate() {
        for (i, c) in cfg.scheme.nodes().iter().enumerate() {
            let mut row = vec![(k + 1).to_string(), (i + 1).to_string(), num(traj.times[k] + c * cfg.h)];
            row.extend(sol.stage_x[i].iter().map(|v| num(*v)));
            row.extend(sol.flow(i).iter().map(|v| num(*v)));
            row.extend(sol.effort(i).iter().map(|v| num(*v)));
            row.extend(sol.u[i * m..(i + 1) * m].iter().map(|v| num(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn converge_experiment(args: &RunArgs) -> Result<Experiment, UsageError> {
    for (given, flag) in [
        (args.h.is_some(), "--h"),
        (args.t_end.is_some(), "--t-end"),
        (args.x0.is_some(), "--x0"),
        (args.input.is_some(), "--input"),
        (args.retain_stages, "--retain-stages"),
    ] {
        if given {
            return Err(UsageError(format!("{flag} is fixed by the experiment in `converge`")));
        }
    }
    if let Some(m) = &args.model {
        if m != "oscillator" && m != "partitioned-oscillator" {
            return Err(UsageError(format!("`converge` runs the oscillator experiments, not `{m}`")));
        }
    }
    let damped = args.preset == Some(Preset::Damped) || args.r.is_some();
    if !damped {
        return Ok(Experiment::LosslessForced);
    }
    let gain = args.r.unwrap_or(DAMPED_GAIN);
    if !(0.0..2.0).contains(&gain) || gain == 0.0 {
        return Err(UsageError(format!("damped experiment needs 0 < r < 2, got {gain}")));
    }
    Ok(Experiment::Damped { gain, mode: args.feedback_mode.into() })
}

fn converge_schemes(args: &RunArgs) -> Result<Vec<CollocationScheme>, UsageError> {
    let kind = args.scheme.map(|s| s.kind());
    let chosen: Vec<_> = match (kind, args.stages) {
        (Some(k), Some(s)) => vec![(k, s)],
        (k, s) => catalogue()
            .into_iter()
            .filter(|(ck, cs)| k.is_none_or(|k| k == *ck) && s.is_none_or(|s| s == *cs))
            .collect(),
    };
    if chosen.is_empty() {
        return Err(UsageError("no scheme in the catalogue matches --scheme/--stages".into()));
    }
    chosen.into_iter().map(|(k, s)| scheme(k, s)).collect()
}

fn slope_cell(fit: &dtphs_core::Result<OrderFit>) -> String {
    fit.as_ref().map(|f| num(f.slope)).unwrap_or_default()
}

pub fn converge(args: &RunArgs) -> Result<(), CliError> {
    let experiment = converge_experiment(args)?;
    let schemes = converge_schemes(args)?;
    let solver = solver_config(args)?;
    let h_list = args.h_list.clone().unwrap_or_else(|| DEFAULT_H_LIST.to_vec());
    if h_list.is_empty() {
        return Err(UsageError("--h-list is empty".into()).into());
    }
    for h in &h_list {
        step_count(*h, experiment.t_end()).map_err(|e| UsageError(e.to_string()))?;
    }

    let jobs: Vec<(usize, f64)> =
        (0..schemes.len()).flat_map(|i| h_list.iter().map(move |h| (i, *h))).collect();
    let results: Vec<Result<ConvergencePoint, CliError>> = jobs
        .par_iter()
        .map(|(i, h)| {
            experiment.convergence_point(&schemes[*i], *h, &solver).map_err(|e| {
                eprintln!("dtphs: {} h={h}", schemes[*i].label());
                CliError::from(e)
            })
        })
        .collect();
    let points = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut w = csv_writer(args.out.as_deref())?;
    w.write_record([
        "scheme", "s", "h", "N", "dH_tot_ref", "dH_tilde_tot", "dH_bar_tot", "eps_tilde", "eps_bar",
    ])?;
    for (sch, rows) in schemes.iter().zip(points.chunks(h_list.len())) {
        let name = sch.kind().name();
        let s = sch.stages().to_string();
        for p in rows {
            w.write_record([
                name,
                &s,
                &num(p.h),
                &p.steps.to_string(),
                &num(p.dh_ref),
                &num(p.dh_tilde_tot),
                &num(p.dh_bar_tot),
                &num(p.eps_tilde),
                &num(p.eps_bar),
            ])?;
        }
        let fit = fit_slopes(rows);
        w.write_record([name, &s, "slope", "", "", "", "", &slope_cell(&fit.eps_tilde), &slope_cell(&fit.eps_bar)])?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregate of the per-step Dirac structure checks.
#[derive(Debug, Default)]
struct CheckSummary {
    max_power_residual: f64,
    max_relative_power_residual: f64,
    max_skew_defect: f64,
    rank_ok: bool,
}

pub fn check(args: &RunArgs) -> Result<(), CliError> {
    if args.h_list.is_some() {
        return Err(UsageError("--h-list applies to `converge` only".into()).into());
    }
    let cfg = resolve_run(args)?;
    let traj = run(&cfg)?;
    let condition = DiracCondition::classify(&cfg.scheme, cfg.model.as_ref());

    let mut sum = CheckSummary { rank_ok: true, ..Default::default() };
    for sol in traj.stages.as_ref().expect("simulate retains stages") {
        let blocks = assemble_blocks(cfg.model.as_ref(), &sol.stage_x, &cfg.scheme)?;
        let bond = DiscreteBond::from_solution(&blocks, sol)?;
        let res = power_residual(&blocks, &bond, cfg.h)?.abs();
        sum.max_power_residual = sum.max_power_residual.max(res);
        sum.max_relative_power_residual = sum.max_relative_power_residual.max(res / power_scale(&bond, cfg.h));
        let scale = kernel_matrix(&blocks)?.max_abs().max(1.0);
        let kc = kernel_check(&blocks)?;
        sum.max_skew_defect = sum.max_skew_defect.max(kc.skew_defect / scale);
        sum.rank_ok &= kc.rank_ok;
    }
    let pass = sum.max_relative_power_residual <= POWER_TOL && sum.max_skew_defect <= SKEW_TOL && sum.rank_ok;

    let mut w = csv_writer(args.out.as_deref())?;
    w.write_record(["quantity", "value"])?;
    w.write_record(["model", cfg.model.name()])?;
    w.write_record(["scheme", &cfg.scheme.label()])?;
    w.write_record(["steps", &traj.steps().to_string()])?;
    w.write_record(["condition", condition.label()])?;
    w.write_record(["max_power_residual", &num(sum.max_power_residual)])?;
    w.write_record(["max_relative_power_residual", &num(sum.max_relative_power_residual)])?;
    w.write_record(["max_skew_defect", &num(sum.max_skew_defect)])?;
    w.write_record(["rank_ok", if sum.rank_ok { "true" } else { "false" }])?;
    w.write_record(["status", if pass { "PASS" } else { "FAIL" }])?;
    w.flush()?;
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed)
    }
}

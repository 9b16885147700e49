use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use pnp_steric::algebra::{big_g_with_slope, solve_uv, DEFAULT_TOL};
use pnp_steric::elliptic::{
    discontinuous_family, solve_stationary_with, split_pattern, Field, Grid1D, Selection,
    SolverOptions,
};
use pnp_steric::evolution::{entropy, run_observed, EvolutionState};
use pnp_steric::output::{csv_table, KeyValueReport};
use pnp_steric::params::{poincare_constant, validate};
use pnp_steric::trichotomy::{branch_sweep_including, classify, BranchSet, Regime};
use pnp_steric::Branch;

use crate::config::RunConfig;
use crate::{CliError, Mode};

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn dispatch(mode: Mode, cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    cfg.params.check_signs()?;
    let prefix = cfg.text_or("prefix", mode.name());
    match mode {
        Mode::SolveAlgebraic => solve_algebraic(cfg, dir, &prefix),
        Mode::Classify => classify_mode(cfg, dir, &prefix),
        Mode::Branches => branches(cfg, dir, &prefix),
        Mode::Stationary => stationary(cfg, dir, &prefix),
        Mode::Evolve => evolve(cfg, dir, &prefix),
    }
}

fn hypothesis_lines(cfg: &RunConfig, report: &mut KeyValueReport) -> Result<(), CliError> {
    let length = cfg.number_or("domain_length", 1.0)?;
    let cp = match cfg.number_or("poincare_constant", f64::NAN)? {
        c if c.is_nan() => poincare_constant(length)?,
        c => c,
    };
    let h = validate(&cfg.params, cp)?;
    report
        .text("h1_holds", h.h1_holds.to_string())
        .text("h2_holds", h.h2_holds.to_string())
        .text("script_h1_holds", h.script_h1_holds.to_string())
        .text("script_h2_holds", h.script_h2_holds.to_string())
        .number("poincare_constant", h.poincare_constant);
    Ok(())
}

fn solve_algebraic(cfg: &RunConfig, dir: &Path, prefix: &str) -> Result<(), CliError> {
    let p = cfg.params;
    let lo = cfg.number_or("phi_min", -2.0)?;
    let hi = cfg.number_or("phi_max", 2.0)?;
    let n = cfg.count_or("phi_samples", 81)?;
    if n < 2 || !(lo < hi) {
        return Err(CliError::Config(
            "need phi_min < phi_max and phi_samples >= 2".into(),
        ));
    }
    let phis: Vec<f64> = (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        })
        .collect();
    let mut rows: Vec<[f64; 4]> = Vec::with_capacity(n);
    if p.is_unique_branch() {
        for &phi in &phis {
            let pt = solve_uv(phi, &p, DEFAULT_TOL)?;
            rows.push([phi, pt.u, pt.v, p.gamma1 * pt.u + p.gamma2 * pt.v]);
        }
    } else {
        let set = BranchSet::new(&p)?;
        for &phi in &phis {
            for pt in set.all_points(phi)? {
                rows.push([phi, pt.u, pt.v, p.gamma1 * pt.u + p.gamma2 * pt.v]);
            }
        }
    }
    write(
        dir,
        &format!("{prefix}_algebraic.csv"),
        &csv_table("phi,u,v,G", rows.iter().map(|r| r.as_slice())),
    )
}

fn classify_mode(cfg: &RunConfig, dir: &Path, prefix: &str) -> Result<(), CliError> {
    let p = cfg.params;
    let mut report = if p.is_unique_branch() {
        let mut r = KeyValueReport::new();
        r.text("regime", "Unique");
        let (_, dg) = big_g_with_slope(0.0, &p)?;
        r.number("g_prime_at_zero", dg);
        r
    } else {
        let tol = cfg.number_or("sigma_tolerance", p.sigma_tolerance())?;
        classify(&p, tol)?.to_report()
    };
    hypothesis_lines(cfg, &mut report)?;
    write(dir, &format!("{prefix}_report.txt"), &report.render())
}

fn branches(cfg: &RunConfig, dir: &Path, prefix: &str) -> Result<(), CliError> {
    let p = cfg.params;
    let lo = cfg.number_or("u_min", 1e-3)?;
    let hi = cfg.number_or("u_max", 1e2)?;
    let n = cfg.count_or("u_samples", 10_000)?;
    let folds = if p.is_unique_branch() {
        Vec::new()
    } else {
        match BranchSet::new(&p)?.report().fold_u {
            Some((a, b)) => vec![a, b],
            None => Vec::new(),
        }
    };
    let curve = branch_sweep_including(&p, lo, hi, n, &folds)?;
    write(dir, &format!("{prefix}_branches.csv"), &curve.to_csv())
}

fn parse_branch(name: &str) -> Result<Branch, CliError> {
    match name {
        "lower" => Ok(Branch::Lower),
        "middle" => Ok(Branch::Middle),
        "upper" => Ok(Branch::Upper),
        "unique" => Ok(Branch::Unique),
        other => Err(CliError::Config(format!("unknown branch `{other}`"))),
    }
}

fn stationary(cfg: &RunConfig, dir: &Path, prefix: &str) -> Result<(), CliError> {
    let p = cfg.params;
    let x0 = cfg.number_or("x0", 0.0)?;
    let grid = Grid1D::new(
        cfg.count("grid_points")?,
        x0,
        x0 + cfg.number("domain_length")?,
    )?;
    let selection = cfg.text_or("selection", "unique");
    let triple_mid = if p.is_unique_branch() {
        None
    } else {
        let rep = BranchSet::new(&p)?.report().clone();
        match rep.regime {
            Regime::Triple => rep.fold_phi.map(|(a, b)| 0.5 * (a + b)),
            _ => None,
        }
    };
    let init = Field::constant(&grid, cfg.number_or("init_phi", triple_mid.unwrap_or(0.0))?);
    let opts = SolverOptions {
        tol: cfg.number_or("tolerance", 1e-10)?,
        max_newton: cfg.count_or("max_newton", 200)?,
        table_spacing: cfg.number_or("table_spacing", 1e-2)?,
        ..SolverOptions::default()
    };
    if selection == "family" {
        let n = grid.n;
        let patterns = vec![
            vec![Branch::Lower; n],
            vec![Branch::Middle; n],
            vec![Branch::Upper; n],
            split_pattern(n, Branch::Lower, Branch::Upper),
            split_pattern(n, Branch::Upper, Branch::Lower),
        ];
        let fam = discontinuous_family(&p, &grid, &patterns)?;
        for (k, sol) in &fam.solutions {
            write(dir, &format!("{prefix}_pattern{k}.csv"), &sol.to_csv())?;
        }
        return write(
            dir,
            &format!("{prefix}_report.txt"),
            &fam.to_report().render(),
        );
    }
    let sel = match selection.split_once('-') {
        Some((a, b)) => {
            Selection::NodeMap(split_pattern(grid.n, parse_branch(a)?, parse_branch(b)?))
        }
        None => match parse_branch(&selection)? {
            Branch::Lower => Selection::Lower,
            Branch::Middle => Selection::Middle,
            Branch::Upper => Selection::Upper,
            Branch::Unique => Selection::Unique,
        },
    };
    let sol = solve_stationary_with(&p, &grid, &init, &sel, None, &opts)?;
    let mut report = sol.to_report();
    report.text(
        "verified",
        match sol.verify(&p, opts.tol) {
            Ok(()) => "true".to_string(),
            Err(why) => format!("false ({why})"),
        },
    );
    write(dir, &format!("{prefix}_solution.csv"), &sol.to_csv())?;
    write(dir, &format!("{prefix}_report.txt"), &report.render())
}

fn evolve(cfg: &RunConfig, dir: &Path, prefix: &str) -> Result<(), CliError> {
    let p = cfg.params;
    let length = cfg.number("domain_length")?;
    let grid = Grid1D::new(cfg.count("grid_points")?, 0.0, length)?;
    let dt = cfg.number("dt")?;
    let t_end = cfg.number("t_end")?;
    let eps = cfg.number_or("perturbation", 0.1)?;
    let w1 = cfg.number_or("mean_u", 1.0)?;
    let w2 = -p.gamma1 * w1 / p.gamma2;
    let shape = |x: f64| 1.0 + eps * (PI * x / length).cos();
    let u0 = Field::from_fn(&grid, |x| w1 * shape(x));
    let v0 = Field::from_fn(&grid, |x| w2 * shape(x));
    let sample_every = cfg.count_or("sample_every", 100)?;
    let snapshot_every = cfg.count_or("snapshot_every", 0)?;
    let mut snapshots = Vec::new();
    let mut seen = 0usize;
    let trace = run_observed(&p, &grid, &u0, &v0, dt, t_end, sample_every.max(1), |s| {
        if snapshot_every > 0 && seen % snapshot_every == 0 {
            snapshots.push(s.to_csv());
        }
        seen += 1;
    })?;
    let h0 = entropy(&EvolutionState::new(grid, u0, v0, &p)?)?;
    let mut report = KeyValueReport::new();
    hypothesis_lines(cfg, &mut report)?;
    report
        .number("script_h3_value", h0)
        .text("samples", trace.times.len().to_string())
        .number("max_increment", trace.max_increment())
        .number("mass_drift", trace.mass_drift)
        .number("final_l1_u", *trace.l1_u.last().unwrap_or(&f64::NAN))
        .number("final_l1_v", *trace.l1_v.last().unwrap_or(&f64::NAN));
    if let (Some(rate), Some(res)) = (trace.fitted_rate, trace.fit_residual) {
        report
            .number("fitted_rate", rate)
            .number("fit_residual", res);
    }
    for (k, snap) in snapshots.iter().enumerate() {
        write(dir, &format!("{prefix}_snapshot{k:04}.csv"), snap)?;
    }
    write(dir, &format!("{prefix}_trace.csv"), &trace.to_csv())?;
    write(dir, &format!("{prefix}_report.txt"), &report.render())
}

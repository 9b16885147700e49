//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;

use pnp_steric::algebra::{big_g, duv_dphi, residual, solve_uv};
use pnp_steric::elliptic::{
    discontinuous_family, solve_stationary, solve_stationary_with, split_pattern,
    verify_equivalence, Field, Grid1D, Selection, SolverOptions, StationarySolution,
};
use pnp_steric::evolution::{run, EvolutionState};
use pnp_steric::params::{poincare_constant, validate};
use pnp_steric::trichotomy::{
    branch_sweep_including, classify, cubic_coeffs, cubic_roots, shengjin, sigma, u_star, Regime,
};
use pnp_steric::{Branch, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn symmetric() -> ModelParams {
    ModelParams {
        d1: 1.0,
        d2: 1.0,
        theta1: 1.0,
        theta2: -1.0,
        g11: 2.0,
        g12: 1.0,
        g21: 1.0,
        g22: 2.0,
        gamma1: 1.0,
        gamma2: -1.0,
        c1: 1.0,
        c2: 1.0,
    }
}

fn worked(c1: f64, c2: f64) -> ModelParams {
    ModelParams {
        g11: 1.0,
        g12: 2.0,
        g21: 2.0,
        g22: 1.0,
        c1,
        c2,
        ..symmetric()
    }
}

fn random_h1(rng: &mut ChaCha8Rng) -> ModelParams {
    let g11 = rng.gen_range(0.3..3.0);
    let g22 = rng.gen_range(0.3..3.0);
    let g12 = rng.gen_range(0.1..3.0);
    let g21 = g11 * g22 / g12 * rng.gen_range(0.05..1.0);
    ModelParams {
        d1: rng.gen_range(0.2..3.0),
        d2: rng.gen_range(0.2..3.0),
        theta1: rng.gen_range(0.2..2.0),
        theta2: -rng.gen_range(0.2..2.0),
        g11,
        g12,
        g21,
        g22,
        gamma1: rng.gen_range(0.2..2.0),
        gamma2: -rng.gen_range(0.2..2.0),
        c1: rng.gen_range(-3.0..3.0),
        c2: rng.gen_range(-3.0..3.0),
    }
}

fn phi_samples() -> Vec<f64> {
    (0..21).map(|k| -10.0 + k as f64).collect()
}

fn algebraic_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for draw in 0..200 {
        let p = random_h1(&mut rng);
        let mut prev: Option<(f64, f64)> = None;
        for phi in phi_samples() {
            let pt =
                solve_uv(phi, &p, 1e-12).map_err(|e| format!("draw {draw}, phi {phi}: {e}"))?;
            let (r1, r2) = residual(pt.u, pt.v, phi, &p).map_err(|e| e.to_string())?;
            worst = worst.max(r1.abs()).max(r2.abs());
            if let Some((u, v)) = prev {
                check(
                    pt.u < u && pt.v > v,
                    format!("draw {draw}: monotonicity fails at phi {phi}"),
                )?;
            }
            prev = Some((pt.u, pt.v));
        }
    }
    check(worst <= 1e-12, format!("residual {worst:.2e}"))?;
    Ok(format!("max residual {worst:.2e} over 200 x 21 solves"))
}

fn derivative_formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let step = 1e-6;
    let mut worst = 0.0f64;
    let mut k_est = f64::INFINITY;
    for draw in 0..200 {
        let p = random_h1(&mut rng);
        for phi in phi_samples() {
            let solve = |x: f64| solve_uv(x, &p, 1e-14).or_else(|_| solve_uv(x, &p, 1e-12));
            let pt = solve(phi).map_err(|e| e.to_string())?;
            let (du, dv) = duv_dphi(&pt, &p).map_err(|e| e.to_string())?;
            let (plus, minus) = (solve(phi + step).unwrap(), solve(phi - step).unwrap());
            let fd_u = (plus.u - minus.u) / (2.0 * step);
            let fd_v = (plus.v - minus.v) / (2.0 * step);
            worst = worst.max((fd_u - du).abs()).max((fd_v - dv).abs());
            let slope = p.gamma1 * du + p.gamma2 * dv;
            check(
                slope < 0.0,
                format!("draw {draw}: G' = {slope} at phi {phi}"),
            )?;
            k_est = k_est.min(-slope);
        }
    }
    check(worst <= 1e-5, format!("derivative mismatch {worst:.2e}"))?;
    check(k_est > 0.0, "k_est not positive")?;
    Ok(format!("max |fd - exact| {worst:.2e}, k_est {k_est:.3e}"))
}

fn trichotomy_exactness() -> Outcome {
    let p = worked(4.0, 4.0);
    let k = cubic_coeffs(&p).map_err(|e| e.to_string())?;
    check(
        (k.k3, k.k2, k.k1, k.k0) == (9.0, 3.0, -13.0, 1.0),
        format!("coefficients {k:?}"),
    )?;
    let data = shengjin(&k).map_err(|e| e.to_string())?;
    check(
        data.delta_dis == -216000.0,
        format!("discriminant {}", data.delta_dis),
    )?;
    let roots = cubic_roots(&data).map_err(|e| e.to_string())?;
    for (r, e) in roots.iter().zip([1.0, 0.078689, -1.412022]) {
        check((r - e).abs() <= 1e-6, format!("root {r} vs {e}"))?;
    }
    check((u_star(&p).unwrap() - 1.0 / 3.0).abs() < 1e-15, "u*")?;
    for (c1, c2) in [(4.0, 4.0), (1.0, 2.0), (5.5, 0.5), (-1.0, 3.0)] {
        let s = sigma(roots[0], &worked(c1, c2)).unwrap();
        check(
            (s - (c1 + c2 - 6.0)).abs() <= 1e-9,
            format!("sigma(u1) {s} at c = ({c1}, {c2})"),
        )?;
    }
    let regime = |c1: f64, c2: f64| {
        let q = worked(c1, c2);
        classify(&q, q.sigma_tolerance()).map(|r| r.regime)
    };
    let flips = [
        (regime(3.0, 3.0), Regime::Inflection),
        (regime(2.5, 3.5), Regime::Inflection),
        (regime(3.0, 3.0 + 1e-6), Regime::Triple),
        (regime(3.0, 3.0 - 1e-6), Regime::UniqueMonotone),
        (regime(4.0, 4.0), Regime::Triple),
        (regime(2.0, 2.0), Regime::UniqueMonotone),
    ];
    for (i, (got, want)) in flips.iter().enumerate() {
        check(
            got.as_ref() == Ok(want),
            format!("case {i}: {got:?} vs {want:?}"),
        )?;
    }
    Ok("coefficients, discriminant, roots, u*, sigma(u1) and regime flips".into())
}

fn branch_slicing() -> Outcome {
    let p = worked(4.0, 4.0);
    let rep = classify(&p, p.sigma_tolerance()).map_err(|e| e.to_string())?;
    let (ua, ub) = rep.fold_u.ok_or("no folds")?;
    let (lo, hi) = rep.fold_phi.ok_or("no fold potentials")?;
    let curve =
        branch_sweep_including(&p, 1e-8, 1e2, 10_000, &[ua, ub]).map_err(|e| e.to_string())?;
    let tol = 1e-10;
    let cases = [
        (0.5 * (lo + hi), 3),
        (lo + 0.1 * (hi - lo), 3),
        (hi - 0.1 * (hi - lo), 3),
        (hi + 0.05, 1),
        (lo - 0.05, 1),
        (hi + 3.0, 1),
        (lo - 3.0, 1),
        (lo, 2),
        (hi, 2),
    ];
    for (phi, want) in cases {
        let got = curve.slice_count(phi, tol);
        check(
            got == want,
            format!("slice {phi}: {got} crossings, expected {want}"),
        )?;
    }
    Ok(format!(
        "3/1/2 crossings on {} samples, phi in ({lo:.6}, {hi:.6})",
        curve.len()
    ))
}

fn manufactured(n: usize) -> Result<(f64, StationarySolution), String> {
    let p = symmetric();
    let grid = Grid1D::new(n, 0.0, 1.0).map_err(|e| e.to_string())?;
    let exact = Field::from_fn(&grid, |x| (PI * x).cos());
    let source: Vec<f64> = exact
        .values
        .iter()
        .map(|&e| PI * PI * e - big_g(e, &p).unwrap())
        .collect();
    let sol = solve_stationary_with(
        &p,
        &grid,
        &Field::constant(&grid, 0.0),
        &Selection::Unique,
        Some(&source),
        &SolverOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let err = sol
        .phi
        .values
        .iter()
        .zip(&exact.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((err, sol))
}

fn stationary_solver() -> Outcome {
    let mut errors = Vec::new();
    for n in [65, 129, 257] {
        errors.push(manufactured(n)?.0);
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    for o in &orders {
        check((o - 2.0).abs() <= 0.2, format!("order {o:.3}"))?;
    }
    let p = symmetric();
    let grid = Grid1D::new(101, 0.0, 1.0).unwrap();
    let sol = solve_stationary(&p, &grid, &Field::constant(&grid, 0.3), &Selection::Unique)
        .map_err(|e| e.to_string())?;
    let amp = sol.phi.max_abs();
    check(amp <= 1e-9, format!("constant solution |phi| = {amp:.2e}"))?;
    Ok(format!(
        "orders {:.3}, {:.3}; constant solution |phi| {amp:.1e}",
        orders[0], orders[1]
    ))
}

fn equivalence() -> Outcome {
    let p = symmetric();
    let tol = 1e-8 * (1.0 + p.c1.abs() + p.c2.abs());
    let mut solutions = Vec::new();
    for n in [65, 129, 257] {
        solutions.push((p, manufactured(n)?.1));
    }
    let grid = Grid1D::new(51, -1.0, 1.0).unwrap();
    for init in [
        Field::constant(&grid, 5.0),
        Field::from_fn(&grid, |x| x - 3.0),
    ] {
        let sol =
            solve_stationary(&p, &grid, &init, &Selection::Unique).map_err(|e| e.to_string())?;
        solutions.push((p, sol));
    }
    let q = worked(4.0, 4.0);
    let wgrid = Grid1D::new(41, 0.0, 0.4).unwrap();
    let pattern = Selection::NodeMap(split_pattern(wgrid.n, Branch::Lower, Branch::Upper));
    let sol = solve_stationary(&q, &wgrid, &Field::constant(&wgrid, 0.0), &pattern)
        .map_err(|e| e.to_string())?;
    solutions.push((q, sol));
    let mut worst = 0.0f64;
    for (params, sol) in &solutions {
        let (s1, s2) = verify_equivalence(sol, params).map_err(|e| e.to_string())?;
        let tol = 1e-8 * (1.0 + params.c1.abs() + params.c2.abs());
        check(s1 <= tol && s2 <= tol, format!("spans {s1:.2e}, {s2:.2e}"))?;
        worst = worst.max(s1).max(s2);
    }
    let mut corrupted = solutions[0].1.clone();
    let mid = corrupted.u.len() / 2;
    corrupted.u.values[mid] *= 1.01;
    let (s1, _) = verify_equivalence(&corrupted, &p).map_err(|e| e.to_string())?;
    check(s1 > tol, format!("corruption undetected (span {s1:.2e})"))?;
    Ok(format!(
        "{} solutions, max span {worst:.2e}; corrupted span {s1:.2e}",
        solutions.len()
    ))
}

fn discontinuous_multiplicity() -> Outcome {
    let p = worked(4.0, 4.0);
    let grid = Grid1D::new(81, 0.0, 0.4).unwrap();
    let n = grid.n;
    let patterns = vec![
        vec![Branch::Lower; n],
        vec![Branch::Upper; n],
        split_pattern(n, Branch::Lower, Branch::Upper),
        split_pattern(n, Branch::Upper, Branch::Lower),
        vec![Branch::Middle; n],
    ];
    let fam = discontinuous_family(&p, &grid, &patterns).map_err(|e| e.to_string())?;
    for (k, sol) in &fam.solutions {
        sol.verify(&p, 1e-10)
            .map_err(|why| format!("pattern {k}: {why}"))?;
    }
    check(
        fam.distinct >= 3,
        format!("only {} distinct solutions", fam.distinct),
    )?;
    let switched = fam
        .solutions
        .iter()
        .filter(|(_, s)| s.interfaces() > 0)
        .count();
    Ok(format!(
        "{} distinct verified solutions ({switched} with a branch switch), {} patterns without a solution",
        fam.distinct,
        fam.failures.len()
    ))
}

fn entropy_decay() -> Outcome {
    let p = symmetric();
    let grid = Grid1D::new(201, 0.0, 1.0).unwrap();
    let hyp = validate(&p, poincare_constant(grid.length()).unwrap()).map_err(|e| e.to_string())?;
    check(
        hyp.script_h1_holds && hyp.script_h2_holds,
        "decay conditions fail",
    )?;
    let u0 = Field::from_fn(&grid, |x| 1.0 + 0.1 * (PI * x).cos());
    let v0 = u0.clone();
    let h0 = pnp_steric::evolution::entropy(
        &EvolutionState::new(grid, u0.clone(), v0.clone(), &p).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    check(
        hyp.with_initial_entropy(h0).script_h3_holds(),
        "initial entropy not in (0, inf)",
    )?;
    let trace = run(&p, &grid, &u0, &v0, 2e-6, 0.35, 500).map_err(|e| e.to_string())?;
    let inc = trace.max_increment();
    check(inc <= 1e-12, format!("entropy increment {inc:.2e}"))?;
    let rate = trace.fitted_rate.ok_or("no fitted rate")?;
    let resid = trace.fit_residual.unwrap();
    check(
        rate < 0.0 && resid <= 0.02,
        format!("fit slope {rate}, residual {resid}"),
    )?;
    let (l1u, l1v) = (*trace.l1_u.last().unwrap(), *trace.l1_v.last().unwrap());
    check(
        l1u <= 1e-6 && l1v <= 1e-6,
        format!("final L1 {l1u:.2e}, {l1v:.2e}"),
    )?;
    check(
        trace.mass_drift <= 1e-12,
        format!("mass drift {:.2e}", trace.mass_drift),
    )?;
    Ok(format!(
        "log H slope {rate:.3}, fit residual {:.2}%, final L1 {l1u:.1e}, mass drift {:.1e}",
        100.0 * resid,
        trace.mass_drift
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("algebraic solver soundness", algebraic_soundness),
        ("derivative formulas", derivative_formulas),
        ("trichotomy exactness", trichotomy_exactness),
        ("branch slicing", branch_slicing),
        ("stationary solver", stationary_solver),
        ("equivalence test", equivalence),
        ("discontinuous multiplicity", discontinuous_multiplicity),
        ("entropy decay", entropy_decay),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

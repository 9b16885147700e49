//! The reduced Neumann problem `-phi'' = G(phi)` and recovery of `(u, v)`.
//!
//! Nodes carry the unknowns; the Laplacian uses mirror ghost nodes, which is
//! the same as a finite-volume balance on half cells at the two ends. With
//! trapezoid weights `w` and stiffness matrix `K` the discrete energy
//!
//! ```text
//! E(phi) = 1/2 phi^T K phi + sum_i w_i (rho(phi_i) - s_i phi_i)
//! ```
//!
//! has gradient `W r` with the pointwise residual
//! `r = -Lap_h phi - G(phi) - s`, so minimizers are exactly the discrete
//! solutions. When the charge density has a single branch the energy is
//! strictly convex and drives a damped Newton iteration. Branch maps are
//! solved the same way but with the residual norm as merit function, since
//! a middle branch makes the energy lose convexity.

use crate::algebra::build_rho;
use crate::algebra::{duv_dphi, solve_uv, AlgebraicPoint, Branch, NonlinearityTable, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::output::{csv_table, KeyValueReport};
use crate::params::ModelParams;
use crate::trichotomy::{BranchSet, Regime};

/// Uniform node grid on `[x0, x1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub n: usize,
    pub h: f64,
    pub x0: f64,
    pub x1: f64,
}

impl Grid1D {
    pub fn new(n: usize, x0: f64, x1: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 3 nodes, got {n}"
            )));
        }
        if !(x1 > x0) || !x0.is_finite() || !x1.is_finite() {
            return Err(Error::NonpositiveLength(x1 - x0));
        }
        Ok(Self {
            n,
            h: (x1 - x0) / (n - 1) as f64,
            x0,
            x1,
        })
    }

    pub fn length(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.x1
        } else {
            self.x0 + self.h * i as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weights: `h` inside, `h/2` at the two ends.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.h; self.n];
        w[0] = 0.5 * self.h;
        w[self.n - 1] = 0.5 * self.h;
        w
    }

    /// `sum w_i f_i`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let inner: f64 = f[1..self.n - 1].iter().sum();
        self.h * (inner + 0.5 * (f[0] + f[self.n - 1]))
    }

    /// Discrete Neumann Laplacian with mirror ghost nodes.
    pub fn laplacian(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.n;
        let h2 = self.h * self.h;
        let mut out = vec![0.0; n];
        out[0] = 2.0 * (phi[1] - phi[0]) / h2;
        out[n - 1] = 2.0 * (phi[n - 2] - phi[n - 1]) / h2;
        for i in 1..n - 1 {
            out[i] = (phi[i - 1] - 2.0 * phi[i] + phi[i + 1]) / h2;
        }
        out
    }
}

/// Nodal values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(grid: &Grid1D, c: f64) -> Self {
        Self {
            values: vec![c; grid.n],
        }
    }

    pub fn from_fn(grid: &Grid1D, f: impl FnMut(f64) -> f64) -> Self {
        Self {
            values: grid.nodes().into_iter().map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check(&self, grid: &Grid1D, what: &str) -> Result<()> {
        if self.values.len() != grid.n {
            return Err(Error::InvalidArgument(format!(
                "{what} has {} values for a grid of {} nodes",
                self.values.len(),
                grid.n
            )));
        }
        Ok(())
    }
}

/// Branch rule for recovering `(u, v)` from `phi`.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Unique,
    Lower,
    Middle,
    Upper,
    NodeMap(Vec<Branch>),
}

impl Selection {
    fn tags(&self, n: usize) -> Result<Vec<Branch>> {
        Ok(match self {
            Selection::Unique => vec![Branch::Unique; n],
            Selection::Lower => vec![Branch::Lower; n],
            Selection::Middle => vec![Branch::Middle; n],
            Selection::Upper => vec![Branch::Upper; n],
            Selection::NodeMap(tags) => {
                if tags.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "branch map has {} tags for {n} nodes",
                        tags.len()
                    )));
                }
                tags.clone()
            }
        })
    }
}

/// Iteration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Max-norm bound on the pointwise residual.
    pub tol: f64,
    pub max_newton: usize,
    pub gradient_steps: usize,
    /// Spacing of the tabulated potential `rho`.
    pub table_spacing: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_newton: 200,
            gradient_steps: 500,
            table_spacing: 1e-2,
        }
    }
}

/// A converged stationary state with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub grid: Grid1D,
    pub phi: Field,
    pub u: Field,
    pub v: Field,
    pub energy: f64,
    pub residual_pde: f64,
    pub f1_span: f64,
    pub f2_span: f64,
    pub branch_map: Vec<Branch>,
    pub iterations: usize,
    /// Energy after each accepted iterate (single-branch solves only).
    pub energy_history: Vec<f64>,
    /// Smallest `LDL^T` pivot of the energy Hessian at the solution.
    pub min_pivot: Option<f64>,
    /// Outward fluxes `phi'` reconstructed at the two boundary faces.
    pub boundary_flux: (f64, f64),
    /// Largest mismatch of the face flux reconstructed from the two cells
    /// adjacent to a branch switch.
    pub flux_jump: f64,
    /// `|sum w_i (G_i + s_i)|`, the discrete divergence-theorem defect.
    pub compatibility: f64,
}

impl StationarySolution {
    /// Number of faces where the branch tag changes.
    pub fn interfaces(&self) -> usize {
        self.branch_map.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Checks residual, boundary fluxes, flux continuity, compatibility and
    /// the equivalence spans. Returns the first failing check.
    pub fn verify(&self, params: &ModelParams, tol: f64) -> std::result::Result<(), String> {
        let span_tol = 1e-8 * (1.0 + params.c1.abs() + params.c2.abs());
        let flux_tol = tol * self.grid.h.max(1.0);
        if !(self.residual_pde <= tol) {
            return Err(format!(
                "residual {:.3e} above {tol:.1e}",
                self.residual_pde
            ));
        }
        if !(self.boundary_flux.0.abs() <= flux_tol && self.boundary_flux.1.abs() <= flux_tol) {
            return Err(format!("boundary flux {:?} not zero", self.boundary_flux));
        }
        if !(self.flux_jump <= flux_tol) {
            return Err(format!(
                "flux jump {:.3e} across a branch switch",
                self.flux_jump
            ));
        }
        if !(self.compatibility <= 1e-8) {
            return Err(format!("compatibility defect {:.3e}", self.compatibility));
        }
        if !(self.f1_span <= span_tol && self.f2_span <= span_tol) {
            return Err(format!(
                "chemical potential spans {:.3e}, {:.3e}",
                self.f1_span, self.f2_span
            ));
        }
        Ok(())
    }

    /// CSV export with header `x,phi,u,v,branch` (branch as integer code).
    pub fn to_csv(&self) -> String {
        let rows: Vec<[f64; 5]> = (0..self.grid.n)
            .map(|i| {
                [
                    self.grid.x(i),
                    self.phi.values[i],
                    self.u.values[i],
                    self.v.values[i],
                    self.branch_map[i].code(),
                ]
            })
            .collect();
        csv_table("x,phi,u,v,branch", rows.iter().map(|r| r.as_slice()))
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.text("nodes", self.grid.n.to_string())
            .text("iterations", self.iterations.to_string())
            .text("interfaces", self.interfaces().to_string())
            .number("energy", self.energy)
            .number("residual_pde", self.residual_pde)
            .number("f1_span", self.f1_span)
            .number("f2_span", self.f2_span)
            .number("flux_left", self.boundary_flux.0)
            .number("flux_right", self.boundary_flux.1)
            .number("flux_jump", self.flux_jump)
            .number("compatibility", self.compatibility);
        if let Some(p) = self.min_pivot {
            r.number("min_pivot", p);
        }
        r
    }
}

/// Pointwise charge density on the selected branches.
enum Charge {
    Unique(ModelParams),
    Branched { set: BranchSet, tags: Vec<Branch> },
}

impl Charge {
    fn new(params: &ModelParams, selection: &Selection, n: usize) -> Result<Self> {
        params.check_signs()?;
        let tags = selection.tags(n)?;
        if params.is_unique_branch() {
            if tags.iter().any(|&b| b != Branch::Unique) {
                return Err(Error::WrongRegime(
                    "branch selection needs g11 g22 < g12 g21 in the triple regime",
                ));
            }
            return Ok(Charge::Unique(*params));
        }
        let set = BranchSet::new(params)?;
        if set.report().regime != Regime::Triple && tags.iter().any(|&b| b != Branch::Unique) {
            return Err(Error::WrongRegime(
                "branch selection needs the triple regime",
            ));
        }
        Ok(Charge::Branched { set, tags })
    }

    fn convex(&self) -> bool {
        matches!(self, Charge::Unique(_))
    }

    fn params(&self) -> &ModelParams {
        match self {
            Charge::Unique(p) => p,
            Charge::Branched { set, .. } => set.params(),
        }
    }

    fn tag(&self, i: usize) -> Branch {
        match self {
            Charge::Unique(_) => Branch::Unique,
            Charge::Branched { tags, .. } => tags[i],
        }
    }

    /// `(point, G, G')` at node `i`.
    fn eval(&self, i: usize, phi: f64) -> Result<(AlgebraicPoint, f64, f64)> {
        match self {
            Charge::Unique(p) => {
                let pt = solve_uv(phi, p, DEFAULT_TOL)?;
                let (du, dv) = duv_dphi(&pt, p)?;
                Ok((
                    pt,
                    p.gamma1 * pt.u + p.gamma2 * pt.v,
                    p.gamma1 * du + p.gamma2 * dv,
                ))
            }
            Charge::Branched { set, tags } => set.charge(phi, tags[i]).map_err(|e| match e {
                Error::BranchUnavailable { phi, branch, .. } => Error::BranchUnavailable {
                    node: i,
                    phi,
                    branch,
                },
                other => other,
            }),
        }
    }

    fn eval_all(&self, phi: &[f64]) -> Result<Vec<(AlgebraicPoint, f64, f64)>> {
        phi.iter()
            .enumerate()
            .map(|(i, &x)| self.eval(i, x))
            .collect()
    }
}

/// Solves the symmetric tridiagonal system by `LDL^T` and returns the
/// solution and the pivots.
fn ldl_solve(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n];
    let mut y = vec![0.0; n];
    d[0] = diag[0];
    y[0] = rhs[0];
    for i in 1..n {
        if d[i - 1] == 0.0 || !d[i - 1].is_finite() {
            return None;
        }
        l[i] = off[i - 1] / d[i - 1];
        d[i] = diag[i] - l[i] * off[i - 1];
        y[i] = rhs[i] - l[i] * y[i - 1];
    }
    if d[n - 1] == 0.0 || !d[n - 1].is_finite() {
        return None;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = y[n - 1] / d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = y[i] / d[i] - l[i + 1] * x[i + 1];
    }
    x.iter().all(|v| v.is_finite()).then_some((x, d))
}

/// Energy Hessian `K + W diag(-G')`: diagonal and off-diagonal.
fn hessian(grid: &Grid1D, w: &[f64], dg: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n;
    let inv_h = 1.0 / grid.h;
    let mut diag: Vec<f64> = (0..n).map(|i| 2.0 * inv_h - w[i] * dg[i]).collect();
    diag[0] = inv_h - w[0] * dg[0];
    diag[n - 1] = inv_h - w[n - 1] * dg[n - 1];
    (diag, vec![-inv_h; n - 1])
}

fn max_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn weighted_norm(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
}

/// Trapezoidal discrete energy `1/2 |grad_h phi|^2 + rho(phi)`.
pub fn discrete_energy(phi: &Field, grid: &Grid1D, rho: &mut NonlinearityTable) -> Result<f64> {
    phi.check(grid, "phi")?;
    let (lo, hi) = phi
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    rho.extend_to(lo, hi)?;
    let mut pot = Vec::with_capacity(grid.n);
    for &x in &phi.values {
        pot.push(rho.rho_at(x)?);
    }
    Ok(gradient_energy(&phi.values, grid) + grid.integrate(&pot))
}

fn gradient_energy(phi: &[f64], grid: &Grid1D) -> f64 {
    0.5 * phi
        .windows(2)
        .map(|p| (p[1] - p[0]) * (p[1] - p[0]))
        .sum::<f64>()
        / grid.h
}

/// Energy with a source term, for the merit function of convex solves.
fn energy_with_source(
    phi: &[f64],
    grid: &Grid1D,
    w: &[f64],
    rho: &mut NonlinearityTable,
    source: &[f64],
) -> Result<f64> {
    let mut e = gradient_energy(phi, grid);
    for i in 0..grid.n {
        e += w[i] * (rho.rho_at(phi[i])? - source[i] * phi[i]);
    }
    Ok(e)
}

/// Solves the stationary problem with default options and no source.
pub fn solve_stationary(
    params: &ModelParams,
    grid: &Grid1D,
    init: &Field,
    selection: &Selection,
) -> Result<StationarySolution> {
    solve_stationary_with(
        params,
        grid,
        init,
        selection,
        None,
        &SolverOptions::default(),
    )
}

/// Solves `-Lap_h phi = G(phi) + s` with Neumann conditions.
pub fn solve_stationary_with(
    params: &ModelParams,
    grid: &Grid1D,
    init: &Field,
    selection: &Selection,
    source: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<StationarySolution> {
    init.check(grid, "initial potential")?;
    let n = grid.n;
    let zeros = vec![0.0; n];
    let source = match source {
        Some(s) if s.len() != n => {
            return Err(Error::InvalidArgument(
                "source length differs from the grid".into(),
            ))
        }
        Some(s) => s,
        None => &zeros,
    };
    let charge = Charge::new(params, selection, n)?;
    let w = grid.weights();
    let mut table = if charge.convex() {
        let (lo, hi) = init
            .values
            .iter()
            .fold((0.0f64, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        let pad = 0.5;
        let cells = (((hi - lo) + 2.0 * pad) / opts.table_spacing)
            .ceil()
            .max(2.0) as usize;
        Some(build_rho(
            params,
            lo - pad,
            lo - pad + cells as f64 * opts.table_spacing,
            cells + 1,
        )?)
    } else {
        None
    };

    let residual_of = |phi: &[f64], evals: &[(AlgebraicPoint, f64, f64)]| -> Vec<f64> {
        let lap = grid.laplacian(phi);
        (0..n).map(|i| -lap[i] - evals[i].1 - source[i]).collect()
    };

    let mut phi = init.values.clone();
    let mut evals = charge.eval_all(&phi)?;
    let mut r = residual_of(&phi, &evals);
    let mut energy = match table.as_mut() {
        Some(t) => energy_with_source(&phi, grid, &w, t, source)?,
        None => f64::NAN,
    };
    let mut history = Vec::new();
    if table.is_some() {
        history.push(energy);
    }
    let mut iterations = 0;
    let mut fallbacks = 0;
    while max_norm(&r) > opts.tol {
        if iterations >= opts.max_newton {
            return Err(Error::NonConvergence {
                iterations,
                residual: max_norm(&r),
            });
        }
        iterations += 1;
        let dg: Vec<f64> = evals.iter().map(|e| e.2).collect();
        let (diag, off) = hessian(grid, &w, &dg);
        let rhs: Vec<f64> = (0..n).map(|i| -w[i] * r[i]).collect();
        let step = if dg.iter().all(|d| d.is_finite()) {
            ldl_solve(&diag, &off, &rhs)
                .filter(|(_, piv)| !charge.convex() || piv.iter().all(|&p| p > 0.0))
                .map(|(x, _)| x)
        } else {
            None
        };
        let accepted = match step {
            Some(dir) => line_search(
                &charge,
                grid,
                &w,
                source,
                &phi,
                &dir,
                &r,
                energy,
                table.as_mut(),
            )?,
            None => None,
        };
        match accepted {
            Some((next, next_evals, next_r, next_e)) => {
                phi = next;
                evals = next_evals;
                r = next_r;
                energy = next_e;
            }
            None => {
                fallbacks += 1;
                if fallbacks > 3 {
                    return Err(Error::NonConvergence {
                        iterations,
                        residual: max_norm(&r),
                    });
                }
                let (next, next_evals, next_r) = gradient_descent(
                    &charge,
                    grid,
                    &w,
                    source,
                    phi.clone(),
                    evals,
                    r.clone(),
                    opts.gradient_steps,
                )?;
                phi = next;
                evals = next_evals;
                r = next_r;
                if let Some(t) = table.as_mut() {
                    energy = energy_with_source(&phi, grid, &w, t, source)?;
                }
            }
        }
        if table.is_some() {
            history.push(energy);
        }
    }

    let p = charge.params();
    let g: Vec<f64> = evals.iter().map(|e| e.1).collect();
    let dg: Vec<f64> = evals.iter().map(|e| e.2).collect();
    let (diag, off) = hessian(grid, &w, &dg);
    let min_pivot = if dg.iter().all(|d| d.is_finite()) {
        ldl_solve(&diag, &off, &vec![0.0; n])
            .map(|(_, piv)| piv.into_iter().fold(f64::INFINITY, f64::min))
    } else {
        None
    };
    let branch_map: Vec<Branch> = (0..n)
        .map(|i| match charge.tag(i) {
            Branch::Unique => evals[i].0.branch,
            b => b,
        })
        .collect();
    let energy = match (&charge, table.as_mut()) {
        (_, Some(t)) => energy_with_source(&phi, grid, &w, t, source)?,
        (Charge::Branched { set, tags }, None) => {
            branched_energy(set, tags, &phi, grid, &w, source)?
        }
        _ => f64::NAN,
    };
    let flux = |i: usize| (phi[i + 1] - phi[i]) / grid.h;
    let boundary_flux = (
        flux(0) + w[0] * (g[0] + source[0]),
        -(flux(n - 2) - w[n - 1] * (g[n - 1] + source[n - 1])),
    );
    let mut flux_jump = 0.0f64;
    for i in 1..n - 2 {
        if branch_map[i] != branch_map[i + 1] {
            let from_left = flux(i - 1) - w[i] * (g[i] + source[i]);
            let from_right = flux(i + 1) + w[i + 1] * (g[i + 1] + source[i + 1]);
            flux_jump = flux_jump.max((from_left - from_right).abs());
        }
    }
    let gs: Vec<f64> = (0..n).map(|i| g[i] + source[i]).collect();
    let compatibility = grid.integrate(&gs).abs();
    let mut sol = StationarySolution {
        grid: *grid,
        phi: Field::new(phi),
        u: Field::new(evals.iter().map(|e| e.0.u).collect()),
        v: Field::new(evals.iter().map(|e| e.0.v).collect()),
        energy,
        residual_pde: max_norm(&r),
        f1_span: 0.0,
        f2_span: 0.0,
        branch_map,
        iterations,
        energy_history: history,
        min_pivot,
        boundary_flux,
        flux_jump,
        compatibility,
    };
    let (s1, s2) = verify_equivalence(&sol, p)?;
    sol.f1_span = s1;
    sol.f2_span = s2;
    Ok(sol)
}

type Iterate = (Vec<f64>, Vec<(AlgebraicPoint, f64, f64)>, Vec<f64>, f64);

/// Backtracking along a Newton direction. Convex solves use the Armijo
/// condition on the energy, branch maps the weighted residual norm.
#[allow(clippy::too_many_arguments)]
fn line_search(
    charge: &Charge,
    grid: &Grid1D,
    w: &[f64],
    source: &[f64],
    phi: &[f64],
    dir: &[f64],
    r: &[f64],
    energy: f64,
    mut table: Option<&mut NonlinearityTable>,
) -> Result<Option<Iterate>> {
    let n = grid.n;
    let slope: f64 = (0..n).map(|i| w[i] * r[i] * dir[i]).sum();
    let r_norm = weighted_norm(w, r);
    let mut alpha = 1.0;
    for _ in 0..50 {
        let trial: Vec<f64> = (0..n).map(|i| phi[i] + alpha * dir[i]).collect();
        let evals = match charge.eval_all(&trial) {
            Ok(e) => e,
            Err(Error::BranchUnavailable { .. } | Error::SingularDenominator { .. }) => {
                alpha *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        let lap = grid.laplacian(&trial);
        let tr: Vec<f64> = (0..n).map(|i| -lap[i] - evals[i].1 - source[i]).collect();
        let ok = match table.as_deref_mut() {
            Some(t) => {
                let e = energy_with_source(&trial, grid, w, t, source)?;
                if e <= energy + 1e-4 * alpha * slope + 1e-12 * (1.0 + energy.abs()) {
                    return Ok(Some((trial, evals, tr, e)));
                }
                false
            }
            None => weighted_norm(w, &tr) <= (1.0 - 1e-4 * alpha) * r_norm,
        };
        if ok {
            return Ok(Some((trial, evals, tr, f64::NAN)));
        }
        alpha *= 0.5;
        if alpha < 1e-12 {
            break;
        }
    }
    Ok(None)
}

/// Preconditioned steepest descent `phi -= r / lambda` with `lambda`
/// bounding the spectrum of `W^-1` times the Hessian.
#[allow(clippy::too_many_arguments)]
fn gradient_descent(
    charge: &Charge,
    grid: &Grid1D,
    w: &[f64],
    source: &[f64],
    mut phi: Vec<f64>,
    mut evals: Vec<(AlgebraicPoint, f64, f64)>,
    mut r: Vec<f64>,
    steps: usize,
) -> Result<(Vec<f64>, Vec<(AlgebraicPoint, f64, f64)>, Vec<f64>)> {
    let n = grid.n;
    for _ in 0..steps {
        let curv = evals
            .iter()
            .map(|e| e.2.abs())
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max);
        let mut lambda = 4.0 / (grid.h * grid.h) + curv;
        let r_norm = weighted_norm(w, &r);
        let mut moved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = (0..n).map(|i| phi[i] - r[i] / lambda).collect();
            if let Ok(te) = charge.eval_all(&trial) {
                let lap = grid.laplacian(&trial);
                let tr: Vec<f64> = (0..n).map(|i| -lap[i] - te[i].1 - source[i]).collect();
                if weighted_norm(w, &tr) < r_norm {
                    phi = trial;
                    evals = te;
                    r = tr;
                    moved = true;
                    break;
                }
            }
            lambda *= 2.0;
        }
        if !moved {
            break;
        }
    }
    Ok((phi, evals, r))
}

/// Energy of a branch map, integrating `rho' = -G` along each node's branch
/// from a reference potential where all branches are defined.
fn branched_energy(
    set: &BranchSet,
    tags: &[Branch],
    phi: &[f64],
    grid: &Grid1D,
    w: &[f64],
    source: &[f64],
) -> Result<f64> {
    let reference = match set.report().fold_phi {
        Some((lo, hi)) => 0.5 * (lo + hi),
        None => 0.0,
    };
    let mut e = gradient_energy(phi, grid);
    for i in 0..grid.n {
        let g = |x: f64| Ok(set.charge(x, tags[i])?.1);
        let integral = crate::algebra::simpson(g, reference, phi[i], 16)?;
        e += w[i] * (-integral - source[i] * phi[i]);
    }
    Ok(e)
}

/// Spans `max - min` of the two chemical potentials across nodes.
pub fn verify_equivalence(sol: &StationarySolution, params: &ModelParams) -> Result<(f64, f64)> {
    let p = params;
    let (mut lo1, mut hi1, mut lo2, mut hi2) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for i in 0..sol.phi.len() {
        let (u, v, phi) = (sol.u.values[i], sol.v.values[i], sol.phi.values[i]);
        if !(u > 0.0 && v > 0.0) {
            return Err(Error::NonpositiveDensity { u, v });
        }
        let f1 = p.d1 * u.ln() + p.theta1 * phi + p.g11 * u + p.g12 * v;
        let f2 = p.d2 * v.ln() + p.theta2 * phi + p.g21 * u + p.g22 * v;
        lo1 = lo1.min(f1);
        hi1 = hi1.max(f1);
        lo2 = lo2.min(f2);
        hi2 = hi2.max(f2);
    }
    Ok((hi1 - lo1, hi2 - lo2))
}

/// Outcome of solving a family of branch patterns.
#[derive(Debug, Clone)]
pub struct FamilyReport {
    /// Verified solutions, each tagged with the index of its pattern.
    pub solutions: Vec<(usize, StationarySolution)>,
    /// Patterns that failed, with the reason.
    pub failures: Vec<(usize, String)>,
    /// Number of solutions pairwise farther apart than `1e-6` in `L2` of `u`.
    pub distinct: usize,
}

impl FamilyReport {
    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.text(
            "patterns",
            (self.solutions.len() + self.failures.len()).to_string(),
        )
        .text("verified", self.solutions.len().to_string())
        .text("distinct", self.distinct.to_string());
        for (k, reason) in &self.failures {
            r.text(&format!("pattern{k}_failure"), reason.clone());
        }
        r
    }
}

/// `L2` distance between two nodal fields.
pub fn l2_distance(grid: &Grid1D, a: &Field, b: &Field) -> f64 {
    let sq: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    grid.integrate(&sq).sqrt()
}

/// Solves one branch map per pattern and keeps the verified solutions.
///
/// Outside the triple regime the patterns are ignored and every attempt
/// uses the single branch.
pub fn discontinuous_family(
    params: &ModelParams,
    grid: &Grid1D,
    patterns: &[Vec<Branch>],
) -> Result<FamilyReport> {
    params.check_signs()?;
    let (triple, start) = if params.is_unique_branch() {
        (false, 0.0)
    } else {
        let rep = BranchSet::new(params)?.report().clone();
        match rep.fold_phi {
            Some((lo, hi)) => (true, 0.5 * (lo + hi)),
            None => (false, rep.phi_check.unwrap_or(0.0)),
        }
    };
    let opts = SolverOptions::default();
    let mut solutions: Vec<(usize, StationarySolution)> = Vec::new();
    let mut failures = Vec::new();
    for (k, pattern) in patterns.iter().enumerate() {
        let selection = if triple {
            Selection::NodeMap(pattern.clone())
        } else {
            Selection::Unique
        };
        let init = Field::constant(grid, start);
        match solve_stationary_with(params, grid, &init, &selection, None, &opts) {
            Ok(sol) => match sol.verify(params, opts.tol) {
                Ok(()) => solutions.push((k, sol)),
                Err(why) => failures.push((k, why)),
            },
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    let mut reps: Vec<&Field> = Vec::new();
    for (_, s) in &solutions {
        if reps.iter().all(|r| l2_distance(grid, r, &s.u) > 1e-6) {
            reps.push(&s.u);
        }
    }
    let distinct = reps.len();
    Ok(FamilyReport {
        solutions,
        failures,
        distinct,
    })
}

/// Branch map switching from `left` to `right` at the middle of the grid.
pub fn split_pattern(n: usize, left: Branch, right: Branch) -> Vec<Branch> {
    (0..n)
        .map(|i| if 2 * i < n { left } else { right })
        .collect()
}

/// Tensor-product node grid on a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub x: Grid1D,
    pub y: Grid1D,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        Ok(Self {
            x: Grid1D::new(nx, x.0, x.1)?,
            y: Grid1D::new(ny, y.0, y.1)?,
        })
    }

    pub fn len(&self) -> usize {
        self.x.n * self.y.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Five-point Neumann Laplacian on row-major nodal values.
    pub fn laplacian(&self, phi: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.x.n, self.y.n);
        let mut out = vec![0.0; nx * ny];
        let mut row = vec![0.0; nx];
        let mut col = vec![0.0; ny];
        for j in 0..ny {
            row.copy_from_slice(&phi[j * nx..(j + 1) * nx]);
            for (i, v) in self.x.laplacian(&row).into_iter().enumerate() {
                out[j * nx + i] += v;
            }
        }
        for i in 0..nx {
            for j in 0..ny {
                col[j] = phi[j * nx + i];
            }
            for (j, v) in self.y.laplacian(&col).into_iter().enumerate() {
                out[j * nx + i] += v;
            }
        }
        out
    }

    fn weights(&self) -> Vec<f64> {
        let (wx, wy) = (self.x.weights(), self.y.weights());
        let mut w = Vec::with_capacity(self.len());
        for b in &wy {
            for a in &wx {
                w.push(a * b);
            }
        }
        w
    }
}

/// Result of a rectangle solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Stationary2D {
    pub phi: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub residual_pde: f64,
    pub iterations: usize,
}

/// Newton iteration on the rectangle for the single-branch case, with the
/// symmetric linear systems solved by conjugate gradients.
pub fn solve_stationary_2d(
    params: &ModelParams,
    grid: &Grid2D,
    init: &[f64],
    tol: f64,
) -> Result<Stationary2D> {
    params.check_signs()?;
    if !params.is_unique_branch() {
        return Err(Error::WrongRegime(
            "rectangle solves support the single-branch case only",
        ));
    }
    let n = grid.len();
    if init.len() != n {
        return Err(Error::InvalidArgument(
            "initial potential has the wrong size".into(),
        ));
    }
    let w = grid.weights();
    let eval = |phi: &[f64]| -> Result<(Vec<AlgebraicPoint>, Vec<f64>, Vec<f64>)> {
        let mut pts = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        let mut dg = Vec::with_capacity(n);
        for &x in phi {
            let pt = solve_uv(x, params, DEFAULT_TOL)?;
            let (du, dv) = duv_dphi(&pt, params)?;
            g.push(params.gamma1 * pt.u + params.gamma2 * pt.v);
            dg.push(params.gamma1 * du + params.gamma2 * dv);
            pts.push(pt);
        }
        Ok((pts, g, dg))
    };
    let resid = |phi: &[f64], g: &[f64]| -> Vec<f64> {
        let lap = grid.laplacian(phi);
        (0..n).map(|i| -lap[i] - g[i]).collect()
    };
    let mut phi = init.to_vec();
    let (mut pts, g0, mut dg) = eval(&phi)?;
    let mut r = resid(&phi, &g0);
    let mut iterations = 0;
    while max_norm(&r) > tol {
        if iterations >= 100 {
            return Err(Error::NonConvergence {
                iterations,
                residual: max_norm(&r),
            });
        }
        iterations += 1;
        // symmetric form: W(-Lap_h) + W diag(-G')
        let apply = |x: &[f64]| -> Vec<f64> {
            let lap = grid.laplacian(x);
            (0..n).map(|i| w[i] * (-lap[i] - dg[i] * x[i])).collect()
        };
        let rhs: Vec<f64> = (0..n).map(|i| -w[i] * r[i]).collect();
        let dir = conjugate_gradient(apply, &rhs, 1e-14, 10 * n)?;
        let r_norm = weighted_norm(&w, &r);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| phi[i] + alpha * dir[i]).collect();
            let (tp, tg, tdg) = eval(&trial)?;
            let tr = resid(&trial, &tg);
            if weighted_norm(&w, &tr) <= (1.0 - 1e-4 * alpha) * r_norm || alpha < 1e-10 {
                phi = trial;
                pts = tp;
                dg = tdg;
                r = tr;
                break;
            }
            alpha *= 0.5;
        }
    }
    Ok(Stationary2D {
        u: pts.iter().map(|p| p.u).collect(),
        v: pts.iter().map(|p| p.v).collect(),
        phi,
        residual_pde: max_norm(&r),
        iterations,
    })
}

fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = rtol * rtol * rr.max(f64::MIN_POSITIVE);
    for _ in 0..max_iter {
        if rr <= stop {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: rr.sqrt(),
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let next = dot(&r, &r);
        for i in 0..n {
            p[i] = r[i] + next / rr * p[i];
        }
        rr = next;
    }
    Ok(x)
}

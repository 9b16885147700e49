//! Time integration of the full drift-diffusion system in one dimension.
//!
//! The densities are advanced by explicit Euler on a conservative
//! finite-volume form: node `i` owns the dual cell of measure `w_i` and
//! exchanges face fluxes with its neighbours, so total masses change only by
//! rounding. After every update the potential is recomputed from the linear
//! Neumann Poisson problem in the zero-mean gauge.

use crate::elliptic::{Field, Grid1D};
use crate::error::{Error, Result};
use crate::output::csv_table;
use crate::params::ModelParams;

/// Safety factor of the explicit time-step bound `dt <= 0.4 h^2 / D_max`.
pub const STABILITY_FACTOR: f64 = 0.4;

/// Negative values above this are rounding and get clipped.
const CLIP_FLOOR: f64 = -1e-14;

/// One instant of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub phi: Field,
    pub grid: Grid1D,
    /// Means `(w1, w2)` of the initial densities.
    pub means: (f64, f64),
}

impl EvolutionState {
    /// Builds the initial state and its potential.
    pub fn new(grid: Grid1D, u: Field, v: Field, params: &ModelParams) -> Result<Self> {
        for (f, name) in [(&u, "u"), (&v, "v")] {
            if f.len() != grid.n {
                return Err(Error::InvalidArgument(format!(
                    "{name} does not match the grid"
                )));
            }
            if let Some((node, &value)) = f.values.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
                return Err(Error::NegativityBreach { node, value });
            }
        }
        let (mu, mv) = (grid.integrate(&u.values), grid.integrate(&v.values));
        if !(mu > 0.0 && mv > 0.0) {
            return Err(Error::ZeroMass);
        }
        let phi = poisson_step(&u, &v, &grid, params)?;
        let len = grid.length();
        Ok(Self {
            t: 0.0,
            u,
            v,
            phi,
            grid,
            means: (mu / len, mv / len),
        })
    }

    pub fn masses(&self) -> (f64, f64) {
        (
            self.grid.integrate(&self.u.values),
            self.grid.integrate(&self.v.values),
        )
    }

    /// `L1` distances of `u`, `v` to their means.
    pub fn l1_distances(&self) -> (f64, f64) {
        let dist = |f: &Field, m: f64| {
            let d: Vec<f64> = f.values.iter().map(|x| (x - m).abs()).collect();
            self.grid.integrate(&d)
        };
        (dist(&self.u, self.means.0), dist(&self.v, self.means.1))
    }

    /// Snapshot CSV with header `x,u,v,phi`.
    pub fn to_csv(&self) -> String {
        let rows: Vec<[f64; 4]> = (0..self.grid.n)
            .map(|i| {
                [
                    self.grid.x(i),
                    self.u.values[i],
                    self.v.values[i],
                    self.phi.values[i],
                ]
            })
            .collect();
        csv_table("x,u,v,phi", rows.iter().map(|r| r.as_slice()))
    }
}

/// Solves `-phi'' = gamma1 u + gamma2 v` with Neumann conditions and
/// `int phi = 0`.
pub fn poisson_step(u: &Field, v: &Field, grid: &Grid1D, params: &ModelParams) -> Result<Field> {
    let n = grid.n;
    if u.len() != n || v.len() != n {
        return Err(Error::InvalidArgument(
            "densities do not match the grid".into(),
        ));
    }
    let p = params;
    let mut f: Vec<f64> = (0..n)
        .map(|i| p.gamma1 * u.values[i] + p.gamma2 * v.values[i])
        .collect();
    let net = grid.integrate(&f);
    let scale =
        p.gamma1.abs() * grid.integrate(&u.values) + p.gamma2.abs() * grid.integrate(&v.values);
    if !(net.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::CompatibilityViolation { net, scale });
    }
    let shift = net / grid.length();
    for x in &mut f {
        *x -= shift;
    }
    // K phi = W f with phi_0 = 0: tridiagonal in the remaining unknowns
    let w = grid.weights();
    let inv_h = 1.0 / grid.h;
    let m = n - 1;
    let mut diag = vec![2.0 * inv_h; m];
    diag[m - 1] = inv_h;
    let mut rhs: Vec<f64> = (1..n).map(|i| w[i] * f[i]).collect();
    let off = -inv_h;
    for k in 1..m {
        let l = off / diag[k - 1];
        diag[k] -= l * off;
        rhs[k] -= l * rhs[k - 1];
    }
    let mut x = vec![0.0; m];
    x[m - 1] = rhs[m - 1] / diag[m - 1];
    for k in (0..m - 1).rev() {
        x[k] = (rhs[k] - off * x[k + 1]) / diag[k];
    }
    let mut phi = Vec::with_capacity(n);
    phi.push(0.0);
    phi.extend(x);
    let mean = grid.integrate(&phi) / grid.length();
    for x in &mut phi {
        *x -= mean;
    }
    Ok(Field::new(phi))
}

/// Largest admissible explicit step for the current densities.
pub fn stability_bound(state: &EvolutionState, params: &ModelParams) -> f64 {
    let p = params;
    let mut d_max = 0.0f64;
    for i in 0..state.grid.n {
        let (u, v) = (state.u.values[i], state.v.values[i]);
        d_max = d_max
            .max(p.d1 + p.g11 * u + p.g12 * v)
            .max(p.d2 + p.g21 * u + p.g22 * v);
    }
    STABILITY_FACTOR * state.grid.h * state.grid.h / d_max
}

/// One explicit Euler step of the conservative scheme followed by a
/// Poisson solve.
pub fn flux_step(state: &EvolutionState, dt: f64, params: &ModelParams) -> Result<EvolutionState> {
    let bound = stability_bound(state, params);
    if !(dt > 0.0 && dt <= bound) {
        return Err(Error::StabilityViolation { dt, bound });
    }
    let grid = &state.grid;
    let n = grid.n;
    let p = params;
    let (u, v, phi) = (&state.u.values, &state.v.values, &state.phi.values);
    let inv_h = 1.0 / grid.h;
    let mut ju = vec![0.0; n + 1];
    let mut jv = vec![0.0; n + 1];
    for i in 0..n - 1 {
        let du = (u[i + 1] - u[i]) * inv_h;
        let dv = (v[i + 1] - v[i]) * inv_h;
        let dphi = (phi[i + 1] - phi[i]) * inv_h;
        let ub = 0.5 * (u[i] + u[i + 1]);
        let vb = 0.5 * (v[i] + v[i + 1]);
        ju[i + 1] = p.d1 * du + p.theta1 * ub * dphi + p.g11 * ub * du + p.g12 * ub * dv;
        jv[i + 1] = p.d2 * dv + p.theta2 * vb * dphi + p.g21 * vb * du + p.g22 * vb * dv;
    }
    let w = grid.weights();
    let mut nu = Vec::with_capacity(n);
    let mut nv = Vec::with_capacity(n);
    for i in 0..n {
        nu.push(u[i] + dt / w[i] * (ju[i + 1] - ju[i]));
        nv.push(v[i] + dt / w[i] * (jv[i + 1] - jv[i]));
    }
    clip(&mut nu, grid)?;
    clip(&mut nv, grid)?;
    let (u, v) = (Field::new(nu), Field::new(nv));
    let phi = poisson_step(&u, &v, grid, params)?;
    Ok(EvolutionState {
        t: state.t + dt,
        u,
        v,
        phi,
        grid: *grid,
        means: state.means,
    })
}

/// Clips rounding-level negatives and rescales to restore the mass.
fn clip(values: &mut [f64], grid: &Grid1D) -> Result<()> {
    let mut touched = false;
    let before = grid.integrate(values);
    for (node, x) in values.iter_mut().enumerate() {
        if *x < 0.0 || x.is_nan() {
            if !(*x >= CLIP_FLOOR) {
                return Err(Error::NegativityBreach { node, value: *x });
            }
            *x = 0.0;
            touched = true;
        }
    }
    if touched {
        let after = grid.integrate(values);
        for x in values.iter_mut() {
            *x *= before / after;
        }
    }
    Ok(())
}

/// `sum w_i [s_i log(s_i/m) - s_i + m]` with `0 log 0 = 0`.
///
/// Written as `m ((1+r) log(1+r) - r)` with `r = s/m - 1`, which is exact for
/// every `s >= 0` and keeps full relative accuracy near equilibrium.
pub fn relative_entropy(values: &[f64], weights: &[f64], mean: f64) -> Result<f64> {
    if !(mean > 0.0) {
        return Err(Error::ZeroMass);
    }
    let mut total = 0.0;
    for (&s, &w) in values.iter().zip(weights) {
        let r = s / mean - 1.0;
        let term = if r.abs() < 1e-2 {
            r * r * (0.5 - r * (1.0 / 6.0 - r * (1.0 / 12.0 - r * (1.0 / 20.0 - r / 30.0))))
        } else if s == 0.0 {
            1.0
        } else {
            (1.0 + r) * r.ln_1p() - r
        };
        total += w * mean * term;
    }
    Ok(total)
}

/// Relative entropy of both species with respect to their means.
pub fn entropy(state: &EvolutionState) -> Result<f64> {
    let w = state.grid.weights();
    let (mu, mv) = state.masses();
    if !(mu > 0.0 && mv > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(relative_entropy(&state.u.values, &w, state.means.0)?
        + relative_entropy(&state.v.values, &w, state.means.1)?)
}

/// Tests `H_u >= c_k (int |u - w1|)^2` and its `v` analogue.
pub fn ckp_check(state: &EvolutionState, c_k: f64) -> bool {
    let w = state.grid.weights();
    let (l1u, l1v) = state.l1_distances();
    let hu = relative_entropy(&state.u.values, &w, state.means.0);
    let hv = relative_entropy(&state.v.values, &w, state.means.1);
    match (hu, hv) {
        (Ok(hu), Ok(hv)) => {
            // absorbs rounding when both sides vanish
            let slack = 1e-15 * (1.0 + hu.max(hv));
            hu + slack >= c_k * l1u * l1u && hv + slack >= c_k * l1v * l1v
        }
        _ => false,
    }
}

/// Sampled entropy history of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTrace {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub l1_u: Vec<f64>,
    pub l1_v: Vec<f64>,
    /// Least-squares slope of `log H` over the second half of the samples;
    /// `None` when `H` vanishes there.
    pub fitted_rate: Option<f64>,
    /// Largest fit residual relative to the fitted range of `log H`.
    pub fit_residual: Option<f64>,
    /// Largest relative mass drift over every step.
    pub mass_drift: f64,
}

impl EntropyTrace {
    /// Largest increment `H[k+1] - H[k]`.
    pub fn max_increment(&self) -> f64 {
        self.h
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV export with header `t,H,l1_u,l1_v`.
    pub fn to_csv(&self) -> String {
        let rows: Vec<[f64; 4]> = (0..self.times.len())
            .map(|i| [self.times[i], self.h[i], self.l1_u[i], self.l1_v[i]])
            .collect();
        csv_table("t,H,l1_u,l1_v", rows.iter().map(|r| r.as_slice()))
    }
}

/// Least-squares line through `(t, log H)` on the second half of the
/// samples: slope and the largest residual relative to the fitted range.
fn fit_log_decay(times: &[f64], h: &[f64]) -> Option<(f64, f64)> {
    let start = times.len() / 2;
    let (t, y): (Vec<f64>, Vec<f64>) = times[start..]
        .iter()
        .zip(&h[start..])
        .map(|(&t, &h)| (t, h.ln()))
        .unzip();
    if t.len() < 2 || y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let m = t.len() as f64;
    let (tm, ym) = (t.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let stt: f64 = t.iter().map(|x| (x - tm) * (x - tm)).sum();
    let sty: f64 = t.iter().zip(&y).map(|(x, v)| (x - tm) * (v - ym)).sum();
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let worst = t
        .iter()
        .zip(&y)
        .map(|(x, v)| (v - ym - slope * (x - tm)).abs())
        .fold(0.0, f64::max);
    let range = (slope * (t[t.len() - 1] - t[0])).abs();
    Some((
        slope,
        if range > 0.0 {
            worst / range
        } else {
            f64::INFINITY
        },
    ))
}

/// Integrates to `t_end`, sampling every `sample_every` steps and at the end.
pub fn run(
    params: &ModelParams,
    grid: &Grid1D,
    u0: &Field,
    v0: &Field,
    dt: f64,
    t_end: f64,
    sample_every: usize,
) -> Result<EntropyTrace> {
    run_observed(params, grid, u0, v0, dt, t_end, sample_every, |_| {})
}

/// Like [`run`], handing every sampled state to `observe`.
#[allow(clippy::too_many_arguments)]
pub fn run_observed(
    params: &ModelParams,
    grid: &Grid1D,
    u0: &Field,
    v0: &Field,
    dt: f64,
    t_end: f64,
    sample_every: usize,
    mut observe: impl FnMut(&EvolutionState),
) -> Result<EntropyTrace> {
    params.check_signs()?;
    if !(dt > 0.0 && t_end > 0.0) || sample_every == 0 {
        return Err(Error::InvalidArgument(
            "run needs dt > 0, t_end > 0 and sample_every >= 1".into(),
        ));
    }
    let mut state = EvolutionState::new(*grid, u0.clone(), v0.clone(), params)?;
    let h0 = entropy(&state)?;
    if !h0.is_finite() {
        return Err(Error::InvalidArgument(
            "initial entropy is not finite".into(),
        ));
    }
    let (mu0, mv0) = state.masses();
    let mut trace = EntropyTrace {
        times: Vec::new(),
        h: Vec::new(),
        l1_u: Vec::new(),
        l1_v: Vec::new(),
        fitted_rate: None,
        fit_residual: None,
        mass_drift: 0.0,
    };
    let mut record = |s: &EvolutionState, trace: &mut EntropyTrace| -> Result<()> {
        let (a, b) = s.l1_distances();
        trace.times.push(s.t);
        trace.h.push(entropy(s)?);
        trace.l1_u.push(a);
        trace.l1_v.push(b);
        observe(s);
        Ok(())
    };
    record(&state, &mut trace)?;
    let steps = (t_end / dt).ceil() as usize;
    for k in 1..=steps {
        let step = if k == steps { t_end - state.t } else { dt };
        if step <= 0.0 {
            break;
        }
        state = flux_step(&state, step, params)?;
        let (mu, mv) = state.masses();
        trace.mass_drift = trace
            .mass_drift
            .max(((mu - mu0) / mu0).abs())
            .max(((mv - mv0) / mv0).abs());
        if k % sample_every == 0 || k == steps {
            record(&state, &mut trace)?;
        }
    }
    if let Some((slope, resid)) = fit_log_decay(&trace.times, &trace.h) {
        trace.fitted_rate = Some(slope);
        trace.fit_residual = Some(resid);
    }
    Ok(trace)
}

//! Pointwise algebraic system relating the densities to the potential.
//!
//! Stationary solutions carry constant chemical potentials
//!
//! ```text
//! d1 log u + theta1 phi + g11 u + g12 v = c1
//! d2 log v + theta2 phi + g21 u + g22 v = c2
//! ```
//!
//! When `g11 g22 >= g12 g21` these determine `(u, v)` uniquely for every
//! `phi`. The resulting charge density `G(phi) = gamma1 u + gamma2 v` is
//! strictly decreasing, which makes the reduced Poisson problem the
//! Euler-Lagrange equation of a convex energy with potential `rho`,
//! `rho' = -G`.

use crate::error::{Error, Result};
use crate::interp::{hermite, locate, monotone_slopes};
use crate::output::csv_table;
use crate::params::ModelParams;
use crate::roots::{expand_bracket, newton_bisect};

/// Default absolute residual tolerance of the algebraic solves.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Largest admissible `|log u|`, `|log v|`.
pub(crate) const LOG_LIMIT: f64 = 700.0;

/// Which solution branch a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Smallest `u` of a triple.
    Lower,
    Middle,
    /// Largest `u` of a triple.
    Upper,
    /// The only solution at this potential.
    Unique,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Lower => "Lower",
            Branch::Middle => "Middle",
            Branch::Upper => "Upper",
            Branch::Unique => "Unique",
        }
    }

    /// Integer code used in CSV exports.
    pub fn code(self) -> f64 {
        match self {
            Branch::Lower => 0.0,
            Branch::Middle => 1.0,
            Branch::Upper => 2.0,
            Branch::Unique => 3.0,
        }
    }
}

/// A solution `(u, v, phi)` of the algebraic system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraicPoint {
    pub u: f64,
    pub v: f64,
    pub phi: f64,
    pub branch: Branch,
}

/// Residuals of the two algebraic equations.
pub fn residual(u: f64, v: f64, phi: f64, params: &ModelParams) -> Result<(f64, f64)> {
    if !(u > 0.0 && v > 0.0) {
        return Err(Error::NonpositiveDensity { u, v });
    }
    let p = params;
    let r1 = p.d1 * u.ln() + p.theta1 * phi + p.g11 * u + p.g12 * v - p.c1;
    let r2 = p.d2 * v.ln() + p.theta2 * phi + p.g21 * u + p.g22 * v - p.c2;
    Ok((r1, r2))
}

/// Chemical potentials `F1`, `F2` at a point.
pub fn chemical_potentials(u: f64, v: f64, phi: f64, params: &ModelParams) -> Result<(f64, f64)> {
    let (r1, r2) = residual(u, v, phi, params)?;
    Ok((r1 + params.c1, r2 + params.c2))
}

/// Solves `d1 s + g11 e^s = a` for `s = log u`.
fn solve_log_u(a: f64, params: &ModelParams, ftol: f64) -> Result<f64> {
    let (d1, g11) = (params.d1, params.g11);
    if !a.is_finite() {
        return Err(Error::BracketFailure { what: "u" });
    }
    if a / d1 < -2.0 * LOG_LIMIT {
        // e^s underflows; the linear term alone balances
        return Ok(a / d1);
    }
    // f(a/d1) > 0 up to rounding, and f(log(a/g11)) > 0 once a > g11
    let linear = a / d1 + 1e-12 * (1.0 + a.abs()) / d1;
    let hi = if a > 2.0 * g11 {
        linear.min((a / g11).ln())
    } else {
        linear
    };
    let lo = ((a - g11 * hi.exp()) / d1 - 1.0).min(hi - 1.0);
    let f = |s: f64| d1 * s + g11 * s.exp() - a;
    newton_bisect(
        |s| {
            let e = g11 * s.exp();
            Ok((d1 * s + e - a, d1 + e))
        },
        lo,
        hi,
        f(lo),
        f(hi),
        ftol,
        1e-16,
    )
}

/// Solves the algebraic system at a given potential.
///
/// For fixed `v` the first equation is strictly increasing in `u`; the
/// second equation composed with that decreasing map `u(v)` is strictly
/// increasing in `v` under the unique-branch hypothesis. Both scalar solves
/// run on logarithmic variables with a bracketed Newton iteration.
pub fn solve_uv(phi: f64, params: &ModelParams, tol: f64) -> Result<AlgebraicPoint> {
    params.check_signs()?;
    if !params.is_unique_branch() {
        return Err(Error::HypothesisViolation(
            "solve_uv requires g11 g22 >= g12 g21; use the branch sweep instead",
        ));
    }
    if !(tol > 0.0) || !phi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "solve_uv needs finite phi and tol > 0 (phi = {phi}, tol = {tol})"
        )));
    }
    let p = *params;
    let inner_tol = 0.01 * tol;
    let u_of_t = |t: f64| -> Result<f64> {
        let a = p.c1 - p.theta1 * phi - p.g12 * t.exp();
        Ok(solve_log_u(a, &p, inner_tol)?.exp())
    };
    let outer = |t: f64| -> Result<(f64, f64)> {
        let v = t.exp();
        let u = u_of_t(t)?;
        let h = p.d2 * t + p.theta2 * phi + p.g21 * u + p.g22 * v - p.c2;
        let du_dv = -p.g12 / (p.d1 / u + p.g11);
        Ok((h, p.d2 + v * (p.g22 + p.g21 * du_dv)))
    };
    let (lo, hi, f_lo, f_hi) =
        expand_bracket(|t| Ok(outer(t)?.0), -1.0, 1.0, -LOG_LIMIT, LOG_LIMIT, "v")?;
    let t = newton_bisect(outer, lo, hi, f_lo, f_hi, 0.5 * tol, 1e-16)?;
    let v = t.exp();
    let u = u_of_t(t)?;
    let (r1, r2) = residual(u, v, phi, params)?;
    let r = r1.abs().max(r2.abs());
    if r > tol {
        return Err(Error::NonConvergence {
            iterations: 0,
            residual: r,
        });
    }
    Ok(AlgebraicPoint {
        u,
        v,
        phi,
        branch: Branch::Unique,
    })
}

/// Closed-form derivatives `(du/dphi, dv/dphi)` along the solution family.
pub fn duv_dphi(point: &AlgebraicPoint, params: &ModelParams) -> Result<(f64, f64)> {
    let (u, v) = (point.u, point.v);
    if !(u > 0.0 && v > 0.0) {
        return Err(Error::NonpositiveDensity { u, v });
    }
    let p = params;
    let a = p.d1 / u + p.g11;
    let b = p.d2 / v + p.g22;
    let den = p.g12 * p.g21 - a * b;
    if den == 0.0 || !den.is_finite() || den.abs() <= 1e-14 * (p.g12 * p.g21).max(a * b) {
        return Err(Error::SingularDenominator { u, v });
    }
    let du = -(p.g12 * p.theta2 - p.theta1 * b) / den;
    let dv = -(p.g21 * p.theta1 - p.theta2 * a) / den;
    Ok((du, dv))
}

/// The denominator `g12 g21 - (d1/u + g11)(d2/v + g22)` shared by the
/// derivative formulas; it vanishes exactly at fold points.
pub fn fold_denominator(u: f64, v: f64, params: &ModelParams) -> f64 {
    let p = params;
    p.g12 * p.g21 - (p.d1 / u + p.g11) * (p.d2 / v + p.g22)
}

/// `du/dv` and `d2u/dv2` along the solution family, obtained by
/// differentiating the equation with the potential eliminated.
pub fn u_of_v_derivatives(point: &AlgebraicPoint, params: &ModelParams) -> Result<(f64, f64)> {
    let (u, v) = (point.u, point.v);
    if !(u > 0.0 && v > 0.0) {
        return Err(Error::NonpositiveDensity { u, v });
    }
    let p = params;
    let e = p.d1 * p.theta2 + p.g11 * p.theta2 * u - p.g21 * p.theta1 * u;
    let du = u * (p.d2 * p.theta1 + p.g22 * p.theta1 * v - p.g12 * p.theta2 * v) / (v * e);
    let d2u = (p.d1 * p.theta2 * v * v * du * du - p.d2 * p.theta1 * u * u) / (v * v * u * e);
    Ok((du, d2u))
}

/// Charge density `G(phi) = gamma1 u(phi) + gamma2 v(phi)`.
pub fn big_g(phi: f64, params: &ModelParams) -> Result<f64> {
    let pt = solve_uv(phi, params, DEFAULT_TOL)?;
    Ok(params.gamma1 * pt.u + params.gamma2 * pt.v)
}

/// `G` and `G'` at a potential.
pub fn big_g_with_slope(phi: f64, params: &ModelParams) -> Result<(f64, f64)> {
    let pt = solve_uv(phi, params, DEFAULT_TOL)?;
    let (du, dv) = duv_dphi(&pt, params)?;
    Ok((
        params.gamma1 * pt.u + params.gamma2 * pt.v,
        params.gamma1 * du + params.gamma2 * dv,
    ))
}

/// Empirical constant `k` with `G'(phi) <= -k` over uniformly spaced samples
/// of `[phi_lo, phi_hi]`.
pub fn g_prime_bound(
    params: &ModelParams,
    phi_lo: f64,
    phi_hi: f64,
    samples: usize,
) -> Result<f64> {
    if !(phi_lo < phi_hi) || samples < 2 {
        return Err(Error::InvalidArgument(
            "g_prime_bound needs phi_lo < phi_hi and at least two samples".into(),
        ));
    }
    let step = (phi_hi - phi_lo) / (samples - 1) as f64;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..samples {
        let (_, dg) = big_g_with_slope(phi_lo + step * i as f64, params)?;
        worst = worst.max(dg);
    }
    Ok(-worst)
}

/// Empirical lower bound on `max(u, v)` over uniformly spaced potentials.
pub fn nonvanishing_floor(
    params: &ModelParams,
    phi_lo: f64,
    phi_hi: f64,
    samples: usize,
) -> Result<f64> {
    if !(phi_lo < phi_hi) || samples < 2 {
        return Err(Error::InvalidArgument(
            "nonvanishing_floor needs phi_lo < phi_hi and at least two samples".into(),
        ));
    }
    let step = (phi_hi - phi_lo) / (samples - 1) as f64;
    let mut delta = f64::INFINITY;
    for i in 0..samples {
        let pt = solve_uv(phi_lo + step * i as f64, params, DEFAULT_TOL)?;
        delta = delta.min(pt.u.max(pt.v));
    }
    Ok(delta)
}

/// Composite Simpson rule of `f` on `[a, b]` with `panels` panels.
pub(crate) fn simpson<F>(mut f: F, a: f64, b: f64, panels: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    let mut left = f(a)?;
    for k in 0..panels {
        let x0 = a + h * k as f64;
        let mid = f(x0 + 0.5 * h)?;
        let right = f(x0 + h)?;
        sum += h / 6.0 * (left + 4.0 * mid + right);
        left = right;
    }
    Ok(sum)
}

/// Hard bound on the potentials a table may be extended to.
const TABLE_PHI_LIMIT: f64 = 1.0e3;
const TABLE_MAX_NODES: usize = 400_000;

/// Tabulated `G` and its potential `rho` (`rho' = -G`, `rho(0) = 0`).
///
/// `G` is interpolated with monotone cubic Hermite segments, `rho` with
/// Hermite segments using the exact slopes `-G`. The table grows on demand
/// with its original spacing.
#[derive(Debug, Clone)]
pub struct NonlinearityTable {
    params: ModelParams,
    spacing: f64,
    pub phi_samples: Vec<f64>,
    pub g_values: Vec<f64>,
    pub rho_values: Vec<f64>,
    g_slopes: Vec<f64>,
}

impl NonlinearityTable {
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn range(&self) -> (f64, f64) {
        (self.phi_samples[0], *self.phi_samples.last().unwrap())
    }

    /// Ensures the table covers `[lo, hi]`.
    pub fn extend_to(&mut self, lo: f64, hi: f64) -> Result<()> {
        for x in [lo, hi] {
            if !x.is_finite() || x.abs() > TABLE_PHI_LIMIT {
                return Err(Error::RangeExceeded(x));
            }
        }
        let (cur_lo, cur_hi) = self.range();
        let h = self.spacing;
        let extra = |gap: f64| (gap / h).ceil().max(0.0) as usize;
        let (n_lo, n_hi) = (extra(cur_lo - lo), extra(hi - cur_hi));
        if n_lo == 0 && n_hi == 0 {
            return Ok(());
        }
        if self.phi_samples.len() + n_lo + n_hi > TABLE_MAX_NODES {
            return Err(Error::RangeExceeded(if n_lo > 0 { lo } else { hi }));
        }
        let p = self.params;
        let neg_g = |x: f64| Ok(-big_g(x, &p)?);
        let mut right = (Vec::new(), Vec::new(), Vec::new());
        let (mut x, mut rho) = (cur_hi, *self.rho_values.last().unwrap());
        for _ in 0..n_hi {
            rho += simpson(neg_g, x, x + h, 1)?;
            x += h;
            right.0.push(x);
            right.1.push(big_g(x, &p)?);
            right.2.push(rho);
        }
        let mut left = (Vec::new(), Vec::new(), Vec::new());
        let (mut x, mut rho) = (cur_lo, self.rho_values[0]);
        for _ in 0..n_lo {
            rho -= simpson(neg_g, x - h, x, 1)?;
            x -= h;
            left.0.push(x);
            left.1.push(big_g(x, &p)?);
            left.2.push(rho);
        }
        let join = |mut l: Vec<f64>, mid: &[f64], r: Vec<f64>| {
            l.reverse();
            l.extend_from_slice(mid);
            l.extend(r);
            l
        };
        self.phi_samples = join(left.0, &self.phi_samples, right.0);
        self.g_values = join(left.1, &self.g_values, right.1);
        self.rho_values = join(left.2, &self.rho_values, right.2);
        self.g_slopes = monotone_slopes(&self.phi_samples, &self.g_values);
        Ok(())
    }

    /// Interpolated `G(phi)`; extends the table when needed.
    pub fn g_at(&mut self, phi: f64) -> Result<f64> {
        self.extend_to(phi, phi)?;
        let xs = &self.phi_samples;
        let k = locate(xs, phi);
        Ok(hermite(
            xs[k],
            xs[k + 1],
            self.g_values[k],
            self.g_values[k + 1],
            self.g_slopes[k],
            self.g_slopes[k + 1],
            phi,
        ))
    }

    /// Interpolated `rho(phi)`; extends the table when needed.
    pub fn rho_at(&mut self, phi: f64) -> Result<f64> {
        self.extend_to(phi, phi)?;
        let xs = &self.phi_samples;
        let k = locate(xs, phi);
        Ok(hermite(
            xs[k],
            xs[k + 1],
            self.rho_values[k],
            self.rho_values[k + 1],
            -self.g_values[k],
            -self.g_values[k + 1],
            phi,
        ))
    }

    /// Smallest tabulated `K >= 0` beyond which `|rho(phi)| >= phi^2 / 2`
    /// holds on the whole table, together with `max |G|` on `|phi| < K`.
    /// `None` when the growth bound fails at the table edge, in which case
    /// the table range is inconclusive.
    pub fn growth_check(&self) -> Option<(f64, f64)> {
        let holds = |i: usize| {
            let x = self.phi_samples[i];
            self.rho_values[i].abs() >= 0.5 * x * x
        };
        let n = self.phi_samples.len();
        if !holds(0) || !holds(n - 1) {
            return None;
        }
        let mut k = 0.0f64;
        for i in 0..n {
            if !holds(i) {
                k = k.max(self.phi_samples[i].abs());
            }
        }
        let k = k + self.spacing;
        let lip = self
            .phi_samples
            .iter()
            .zip(&self.g_values)
            .filter(|(x, _)| x.abs() < k)
            .map(|(_, g)| g.abs())
            .fold(0.0, f64::max);
        Some((k, lip))
    }

    /// CSV export with header `phi,G,rho`.
    pub fn to_csv(&self) -> String {
        let rows: Vec<[f64; 3]> = (0..self.phi_samples.len())
            .map(|i| [self.phi_samples[i], self.g_values[i], self.rho_values[i]])
            .collect();
        csv_table("phi,G,rho", rows.iter().map(|r| r.as_slice()))
    }
}

/// Tabulates `G` on `n` uniform samples of `[phi_lo, phi_hi]` and integrates
/// `rho = -int_0^phi G` with Simpson's rule on every sample interval.
pub fn build_rho(
    params: &ModelParams,
    phi_lo: f64,
    phi_hi: f64,
    n: usize,
) -> Result<NonlinearityTable> {
    if n < 2 || !(phi_lo < phi_hi) {
        return Err(Error::InvalidArgument(
            "build_rho needs n >= 2 and phi_lo < phi_hi".into(),
        ));
    }
    let h = (phi_hi - phi_lo) / (n - 1) as f64;
    let phi_samples: Vec<f64> = (0..n).map(|i| phi_lo + h * i as f64).collect();
    let g_values = phi_samples
        .iter()
        .map(|&x| big_g(x, params))
        .collect::<Result<Vec<_>>>()?;
    let p = *params;
    let neg_g = |x: f64| Ok(-big_g(x, &p)?);
    let mut rho_values = Vec::with_capacity(n);
    rho_values.push(0.0);
    for w in phi_samples.windows(2) {
        let prev = *rho_values.last().unwrap();
        rho_values.push(prev + simpson(neg_g, w[0], w[1], 1)?);
    }
    // shift so that rho(0) = 0
    let rho_zero = if phi_lo <= 0.0 && 0.0 <= phi_hi {
        let k = locate(&phi_samples, 0.0);
        if phi_samples[k] == 0.0 {
            rho_values[k]
        } else {
            rho_values[k] + simpson(neg_g, phi_samples[k], 0.0, 1)?
        }
    } else {
        let panels = ((phi_lo.abs().min(phi_hi.abs())) / h).ceil().max(1.0) as usize;
        if phi_lo > 0.0 {
            simpson(neg_g, 0.0, phi_lo, panels).map(|r| -r)?
        } else {
            rho_values[n - 1] + simpson(neg_g, phi_hi, 0.0, panels)?
        }
    };
    for r in &mut rho_values {
        *r -= rho_zero;
    }
    let g_slopes = monotone_slopes(&phi_samples, &g_values);
    Ok(NonlinearityTable {
        params: *params,
        spacing: h,
        phi_samples,
        g_values,
        rho_values,
        g_slopes,
    })
}
